"""Content-addressed payload store, in memory or on disk under ``objects/<2 hex>/<hex>``."""

import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .core import ContentId
from .exceptions import ContentNotFound, IntegrityFailure, PayloadTooLarge

logger = logging.getLogger(__name__)

MAX_PAYLOAD_BYTES = 64 * 1024 * 1024


class MediaKind(str, Enum):
    IMAGE = 'image'
    VIDEO = 'video'
    OTHER = 'other'


@dataclass(frozen=True)
class StoredObject:
    cid: ContentId
    payload: bytes
    media_kind: MediaKind = MediaKind.OTHER


class ContentStore:
    def __init__(self, root=None, max_payload_bytes=MAX_PAYLOAD_BYTES):
        self.root = Path(root) if root is not None else None
        self.max_payload_bytes = max_payload_bytes
        self._memory = {}
        self._kinds = {}
        self._lock = threading.Lock()

    @classmethod
    def in_memory(cls, **kwargs):
        return cls(None, **kwargs)

    @property
    def on_disk(self):
        return self.root is not None

    def object_path(self, cid):
        text = cid.hex()
        return self.root / 'objects' / text[:2] / text

    def kind_path(self, cid):
        text = cid.hex()
        return self.root / 'kinds' / text[:2] / text

    def put(self, payload, media_kind=MediaKind.OTHER):
        payload = bytes(payload)
        if len(payload) > self.max_payload_bytes:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {self.max_payload_bytes}")
        cid = ContentId.of(payload)
        media_kind = MediaKind(media_kind)
        if not self.on_disk:
            with self._lock:
                self._kinds.setdefault(cid, media_kind)
                if self._memory.get(cid) != payload:
                    self._memory[cid] = payload
            return cid

        path = self.object_path(cid)
        if not self._intact(path, cid):
            write_atomically(path, payload)
            logger.debug("stored %s bytes as %s", len(payload), cid.hex())
        # The first kind recorded for a cid wins.
        kind_path = self.kind_path(cid)
        if not kind_path.exists():
            write_atomically(kind_path, media_kind.value.encode())
        return cid

    def _intact(self, path, cid):
        try:
            stored = path.read_bytes()
        except FileNotFoundError:
            return False
        if ContentId.of(stored) == cid:
            return True
        logger.warning("object %s is corrupt on disk, rewriting it", cid.hex())
        return False

    def media_kind(self, cid):
        if not self.on_disk:
            return self._kinds.get(cid, MediaKind.OTHER)
        try:
            return MediaKind(self.kind_path(cid).read_text())
        except (FileNotFoundError, ValueError):
            return MediaKind.OTHER

    def get(self, cid):
        if self.on_disk:
            try:
                payload = self.object_path(cid).read_bytes()
            except FileNotFoundError:
                raise ContentNotFound(f"no object {cid.hex()}") from None
        else:
            try:
                payload = self._memory[cid]
            except KeyError:
                raise ContentNotFound(f"no object {cid.hex()}") from None
        if ContentId.of(payload) != cid:
            raise IntegrityFailure(f"stored bytes of {cid.hex()} hash to {ContentId.of(payload).hex()}")
        return payload

    def get_object(self, cid):
        return StoredObject(cid, self.get(cid), self.media_kind(cid))

    def __contains__(self, cid):
        if self.on_disk:
            return self.object_path(cid).exists()
        return cid in self._memory

    def __len__(self):
        if self.on_disk:
            objects = self.root / 'objects'
            return sum(1 for path in objects.glob('*/*') if path.is_file()) if objects.exists() else 0
        return len(self._memory)


def write_atomically(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path.parent, delete=False) as handle:
        handle.write(data)
        temporary = handle.name
    # Concurrent writers of the same cid write identical bytes.
    os.replace(temporary, path)
