"""
Append-only ledger simulator.

Blocks carry new entries, the ids they retire and the index roots anchored after
applying them. ``block_digest = digest(0x04, prev_digest || contents)`` where the
contents are the canonical encoding of
``[height, timestamp, entries, retired, [bhash_root, trie_root]]``.

The binary block log is a sequence of u32 length-prefixed canonical block
records; loading it replays every block and rejects any digest that does not
chain.
"""

import json
import logging
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .bhash import BHashTree
from .content_store import write_atomically
from .core import ZERO_DIGEST, DataEntry, Digest, DomainTag, canonical_decode, canonical_encode, digest
from .exceptions import ChainBroken, EntryNotFound, MalformedProof, NonDenseEntryIds, UnknownHeight
from .gas import GasMeter
from .trie import VerifiableTrie, address_trie_key, timestamp_trie_key

logger = logging.getLogger(__name__)

_LENGTH = struct.Struct('>I')


@dataclass(frozen=True)
class Block:
    height: int
    prev_digest: Digest
    timestamp: int
    entries: tuple
    retired: tuple
    anchored_roots: tuple
    block_digest: Digest

    @staticmethod
    def compute_digest(height, prev_digest, timestamp, entries, retired, anchored_roots):
        contents = canonical_encode([height, timestamp, list(entries), list(retired), list(anchored_roots)])
        return digest(DomainTag.ROOT_ANCHOR, canonical_encode(prev_digest) + contents)

    @classmethod
    def seal(cls, height, prev_digest, timestamp, entries, retired, anchored_roots):
        entries, retired, anchored_roots = tuple(entries), tuple(retired), tuple(anchored_roots)
        block_digest = cls.compute_digest(height, prev_digest, timestamp, entries, retired, anchored_roots)
        return cls(height, prev_digest, timestamp, entries, retired, anchored_roots, block_digest)

    def recomputed_digest(self):
        return self.compute_digest(
            self.height, self.prev_digest, self.timestamp, self.entries, self.retired, self.anchored_roots,
        )

    def to_bytes(self):
        return canonical_encode([
            self.height, self.prev_digest, self.timestamp, list(self.entries),
            list(self.retired), list(self.anchored_roots), self.block_digest,
        ])

    @classmethod
    def from_bytes(cls, data):
        item = canonical_decode(data)
        if not (isinstance(item, list) and len(item) == 7):
            raise MalformedProof("block record must have seven fields")
        height, prev_digest, timestamp, entries, retired, roots, block_digest = item
        if not (isinstance(prev_digest, Digest) and isinstance(block_digest, Digest)):
            raise MalformedProof("block digests are missing")
        if not (isinstance(entries, list) and all(isinstance(e, DataEntry) for e in entries)):
            raise MalformedProof("block entries are malformed")
        if not (isinstance(roots, list) and len(roots) == 2 and all(isinstance(r, Digest) for r in roots)):
            raise MalformedProof("anchored roots are malformed")
        return cls(height, prev_digest, timestamp, tuple(entries), tuple(retired), tuple(roots), block_digest)

    def as_dict(self):
        return {
            'height': self.height,
            'prev_digest': self.prev_digest.hex(),
            'timestamp': self.timestamp,
            'entries': [entry.as_dict() for entry in self.entries],
            'retired': list(self.retired),
            'bhash_root': self.anchored_roots[0].hex(),
            'trie_root': self.anchored_roots[1].hex(),
            'block_digest': self.block_digest.hex(),
        }


class Ledger:
    def __init__(self, meter=None):
        self.meter = meter or GasMeter()
        self.blocks = []
        self._entries = []
        self._retired = set()
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def height(self):
        """Height of the latest block, or -1 before genesis."""
        return len(self.blocks) - 1

    @property
    def next_entry_id(self):
        return len(self._entries)

    def append_block(self, entries, roots, retired=()):
        entries = list(entries)
        retired = list(retired)
        with self._lock:
            first = len(self._entries)
            for offset, entry in enumerate(entries):
                if entry.entry_id != first + offset:
                    raise NonDenseEntryIds(f"expected entry_id {first + offset}, got {entry.entry_id}")
            for entry_id in retired:
                if not 0 <= entry_id < first:
                    raise EntryNotFound(entry_id)

            previous = self.blocks[-1] if self.blocks else None
            if entries:
                timestamp = max(entry.timestamp for entry in entries)
            else:
                timestamp = previous.timestamp if previous else 0
            block = Block.seal(
                len(self.blocks),
                previous.block_digest if previous else ZERO_DIGEST,
                timestamp,
                entries,
                retired,
                roots,
            )
            self.meter.record_write(1 + len(entries) + len(retired))
            self.meter.record_compute()
            self.blocks.append(block)
            self._entries.extend(entries)
            self._retired.update(retired)
        logger.debug("appended block %s with %s entries, %s retired", block.height, len(entries), len(retired))
        return block

    def block(self, height):
        if not 0 <= height < len(self.blocks):
            raise UnknownHeight(height)
        return self.blocks[height]

    def latest(self):
        return self.block(self.height)

    def trusted_root(self, height):
        return self.block(height).anchored_roots

    def entry(self, entry_id):
        if not 0 <= entry_id < len(self._entries):
            raise EntryNotFound(entry_id)
        self.meter.record_read()
        return self._entries[entry_id]

    def entries(self):
        return list(self._entries)

    def is_retired(self, entry_id):
        return entry_id in self._retired

    def retired(self):
        return frozenset(self._retired)

    def verify_chain(self):
        previous = ZERO_DIGEST
        for height, block in enumerate(self.blocks):
            if block.height != height:
                raise ChainBroken(height, f"block records height {block.height}")
            if block.prev_digest != previous:
                raise ChainBroken(height, "prev_digest does not match the preceding block")
            if block.recomputed_digest() != block.block_digest:
                raise ChainBroken(height, "block contents do not match block_digest")
            previous = block.block_digest
        return True

    def save(self, path):
        """Write the block log to a sibling temp file, then swap it into place."""
        records = bytearray()
        for block in self.blocks:
            record = block.to_bytes()
            records += _LENGTH.pack(len(record))
            records += record
        write_atomically(Path(path), bytes(records))

    @classmethod
    def load(cls, path, meter=None):
        ledger = cls(meter=meter)
        for recorded in _read_block_log(Path(path)):
            height = len(ledger.blocks)
            if recorded.height != height:
                raise ChainBroken(height, f"log records height {recorded.height}")
            block = ledger.append_block(recorded.entries, recorded.anchored_roots, recorded.retired)
            if block.block_digest != recorded.block_digest or block.prev_digest != recorded.prev_digest:
                raise ChainBroken(height, "replayed digest differs from the logged digest")
        return ledger

    def export_jsonl(self, stream):
        for block in self.blocks:
            stream.write(json.dumps(block.as_dict()) + '\n')


def _read_block_log(path):
    data = path.read_bytes()
    position = 0
    while position < len(data):
        height_hint = f"record at byte {position}"
        if position + _LENGTH.size > len(data):
            raise ChainBroken(-1, f"truncated length prefix ({height_hint})")
        (length,) = _LENGTH.unpack_from(data, position)
        position += _LENGTH.size
        if position + length > len(data):
            raise ChainBroken(-1, f"truncated block record ({height_hint})")
        try:
            yield Block.from_bytes(data[position:position + length])
        except MalformedProof as exc:
            raise ChainBroken(-1, f"undecodable block record ({height_hint}): {exc}") from exc
        position += length


def index_entry(bhash, trie, entry):
    """Insert one entry into both indexes: by timestamp, by timestamp string and by every address."""
    bhash.insert(entry.entry_id, entry.timestamp)
    index_by_prefix(trie, entry)


def index_by_prefix(trie, entry):
    trie.insert(timestamp_trie_key(entry.timestamp), entry.entry_id)
    for address in entry.addresses:
        trie.insert(address_trie_key(address), entry.entry_id)


def replay_indexes(ledger, height=None, threshold_t=10, branching=16, convert=True):
    """Rebuild both indexes from blocks 0..height and return ``(bhash, trie)``."""
    height = ledger.height if height is None else height
    if height >= 0:
        ledger.block(height)
    bhash = BHashTree(threshold_t=threshold_t, branching=branching, convert=convert)
    trie = VerifiableTrie()
    for block in ledger.blocks[:height + 1]:
        for entry in block.entries:
            index_entry(bhash, trie, entry)
    return bhash, trie
