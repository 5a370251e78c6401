"""
Shared domain types, the canonical byte encoding and the digest primitive.

Canonical layout (integers are big-endian, one type tag byte per item):

    0x00                              none (an absent optional value)
    0x01 u64                          TimeKey
    0x02 32 bytes                     Digest
    0x03 32 bytes                     ContentId
    0x04 entry body                   DataEntry
    0x05 u32 count, items             list (tuples encode as lists)
    0x06 u64                          unsigned integer
    0x07 u32 length, bytes            byte string
    0x08 u8 (0 or 1)                  boolean
    0x09 u32 length, utf-8            text

A DataEntry body is the entry_id as u64, the amount as a u32 length followed by
its minimal big-endian magnitude, a u32 address count followed by 20 raw bytes
per address, the timestamp as u64, then the image and video cids, each encoded
as a none or ContentId item.

Verification objects are built from these items, so this layout is also their
wire format.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import IntEnum

from .exceptions import InvalidEntry, MalformedProof

DIGEST_SIZE = 32
MAX_KEY = 2**64 - 1
MAX_TIMESTAMP = 2**63 - 1
ADDRESS_RE = re.compile(r'^0x[0-9a-f]{40}$')
TIMESTAMP_STRING_FORMAT = '%Y-%m-%d-%H:%M:%S'

# Last second of year 9999; datetime cannot render anything later.
_LAST_RENDERABLE_SECOND = 253402300799
_MAX_NESTING = 256

_U32 = struct.Struct('>I')
_U64 = struct.Struct('>Q')


class DomainTag(IntEnum):
    LEAF_ENTRY = 0x00
    INTERNAL_NODE = 0x01
    HASH_BUCKET = 0x02
    TRIE_NODE = 0x03
    ROOT_ANCHOR = 0x04


class TypeTag(IntEnum):
    NONE = 0x00
    TIME_KEY = 0x01
    DIGEST = 0x02
    CONTENT_ID = 0x03
    DATA_ENTRY = 0x04
    LIST = 0x05
    UINT = 0x06
    BYTES = 0x07
    BOOL = 0x08
    TEXT = 0x09


class TimeKey(int):
    """Unsigned 64-bit index key; ``TimeKey(t)`` is the key of timestamp ``t``."""

    __slots__ = ()

    def __new__(cls, value):
        key = int.__new__(cls, value)
        if not 0 <= key <= MAX_KEY:
            raise InvalidEntry(f"time key {int(value)} does not fit in 64 bits")
        return key

    def to_bytes8(self):
        return _U64.pack(self)

    def __repr__(self):
        return f"TimeKey({int(self)})"


class _Hash32(bytes):
    __slots__ = ()

    def __new__(cls, value):
        obj = bytes.__new__(cls, value)
        if len(obj) != DIGEST_SIZE:
            raise ValueError(f"{cls.__name__} must be exactly {DIGEST_SIZE} bytes, got {len(obj)}")
        return obj

    @classmethod
    def fromhex(cls, text):
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise InvalidEntry(f"invalid {cls.__name__} hex {text!r}: {exc}") from exc

    def __repr__(self):
        return f"{type(self).__name__}({self.hex()})"


class Digest(_Hash32):
    __slots__ = ()


class ContentId(_Hash32):
    """Raw SHA-256 of a payload; content addressing carries no domain tag."""

    __slots__ = ()

    @classmethod
    def of(cls, payload):
        return cls(hashlib.sha256(payload).digest())


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


@dataclass(frozen=True)
class DataEntry:
    entry_id: int
    amount: int
    addresses: tuple
    timestamp: int
    image_cid: ContentId | None = None
    video_cid: ContentId | None = None

    def __post_init__(self):
        if not isinstance(self.addresses, tuple):
            object.__setattr__(self, 'addresses', tuple(self.addresses))
        _require_uint(self.entry_id, 'entry_id', MAX_KEY)
        _require_uint(self.amount, 'amount')
        _require_uint(self.timestamp, 'timestamp', MAX_TIMESTAMP)
        if not self.addresses:
            raise InvalidEntry("an entry needs at least one address")
        for address in self.addresses:
            if not isinstance(address, str) or not ADDRESS_RE.match(address):
                raise InvalidEntry(f"address {address!r} is not 0x followed by 40 lowercase hex characters")
        for name in ('image_cid', 'video_cid'):
            cid = getattr(self, name)
            if cid is not None and not isinstance(cid, ContentId):
                raise InvalidEntry(f"{name} must be a ContentId or None")

    @property
    def time_key(self):
        return time_key(self.timestamp)

    def cids(self):
        return [cid for cid in (self.image_cid, self.video_cid) if cid is not None]

    def as_dict(self):
        return {
            'entry_id': self.entry_id,
            'amount': self.amount,
            'addresses': list(self.addresses),
            'timestamp': self.timestamp,
            'imagecid': self.image_cid.hex() if self.image_cid else None,
            'videocid': self.video_cid.hex() if self.video_cid else None,
        }


@dataclass(frozen=True, order=True)
class Epoch:
    value: int = 0

    def next(self):
        return Epoch(self.value + 1)


def _require_uint(value, name, limit=None):
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise InvalidEntry(f"{name} must be a non-negative integer, got {value!r}")
    if limit is not None and value > limit:
        raise InvalidEntry(f"{name} {value} exceeds {limit}")


def time_key(timestamp):
    """The key function applied to timestamps: identity onto 64 bits."""
    _require_uint(timestamp, 'timestamp', MAX_TIMESTAMP)
    return TimeKey(timestamp)


def timestamp_string(timestamp):
    """Trie key form of a timestamp, e.g. ``2023-01-15-08:30:00`` (UTC)."""
    if timestamp > _LAST_RENDERABLE_SECOND:
        return str(timestamp)
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime(TIMESTAMP_STRING_FORMAT)


def digest(domain_tag, payload):
    tag = DomainTag(domain_tag)
    return Digest(hashlib.sha256(bytes((tag,)) + bytes(payload)).digest())


def canonical_encode(item):
    parts = []
    _encode_into(item, parts, 0)
    return b''.join(parts)


def _encode_into(item, out, depth):
    if depth > _MAX_NESTING:
        raise ValueError("value nests too deeply to encode")
    if item is None:
        out.append(b'\x00')
    elif isinstance(item, bool):
        out.append(bytes((TypeTag.BOOL, int(item))))
    elif isinstance(item, TimeKey):
        out.append(b'\x01' + _U64.pack(item))
    elif isinstance(item, Digest):
        out.append(b'\x02' + item)
    elif isinstance(item, ContentId):
        out.append(b'\x03' + item)
    elif isinstance(item, DataEntry):
        out.append(b'\x04')
        _encode_entry_body(item, out)
    elif isinstance(item, int):
        if not 0 <= item <= MAX_KEY:
            raise ValueError(f"integer {item} is outside the unsigned 64-bit range")
        out.append(b'\x06' + _U64.pack(item))
    elif isinstance(item, (bytes, bytearray, memoryview)):
        raw = bytes(item)
        out.append(b'\x07' + _U32.pack(len(raw)) + raw)
    elif isinstance(item, str):
        raw = item.encode('utf-8')
        out.append(b'\x09' + _U32.pack(len(raw)) + raw)
    elif isinstance(item, (list, tuple)):
        out.append(b'\x05' + _U32.pack(len(item)))
        for element in item:
            _encode_into(element, out, depth + 1)
    else:
        raise TypeError(f"cannot canonically encode {type(item).__name__}")


def _encode_entry_body(entry, out):
    magnitude = entry.amount.to_bytes((entry.amount.bit_length() + 7) // 8, 'big')
    out.append(_U64.pack(entry.entry_id))
    out.append(_U32.pack(len(magnitude)) + magnitude)
    out.append(_U32.pack(len(entry.addresses)))
    out.extend(bytes.fromhex(address[2:]) for address in entry.addresses)
    out.append(_U64.pack(entry.timestamp))
    for cid in (entry.image_cid, entry.video_cid):
        out.append(b'\x00' if cid is None else b'\x03' + cid)


class CanonicalReader:
    """Strict decoder for the canonical layout; anything off-layout is MalformedProof."""

    def __init__(self, data):
        self._data = bytes(data)
        self._pos = 0

    @property
    def at_end(self):
        return self._pos == len(self._data)

    def _take(self, size):
        end = self._pos + size
        if end > len(self._data):
            raise MalformedProof("truncated canonical encoding")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def _u32(self):
        return _U32.unpack(self._take(4))[0]

    def _u64(self):
        return _U64.unpack(self._take(8))[0]

    def read_item(self, depth=0):
        if depth > _MAX_NESTING:
            raise MalformedProof("canonical encoding nests too deeply")
        tag = self._take(1)[0]
        if tag == TypeTag.NONE:
            return None
        if tag == TypeTag.TIME_KEY:
            return TimeKey(self._u64())
        if tag == TypeTag.DIGEST:
            return Digest(self._take(DIGEST_SIZE))
        if tag == TypeTag.CONTENT_ID:
            return ContentId(self._take(DIGEST_SIZE))
        if tag == TypeTag.DATA_ENTRY:
            return self._read_entry_body()
        if tag == TypeTag.LIST:
            count = self._u32()
            if count > len(self._data) - self._pos:
                raise MalformedProof("list count exceeds remaining bytes")
            return [self.read_item(depth + 1) for _ in range(count)]
        if tag == TypeTag.UINT:
            return self._u64()
        if tag == TypeTag.BYTES:
            return self._take(self._u32())
        if tag == TypeTag.BOOL:
            flag = self._take(1)[0]
            if flag > 1:
                raise MalformedProof("boolean byte must be 0 or 1")
            return bool(flag)
        if tag == TypeTag.TEXT:
            try:
                return self._take(self._u32()).decode('utf-8')
            except UnicodeDecodeError as exc:
                raise MalformedProof("text item is not valid utf-8") from exc
        raise MalformedProof(f"unknown type tag 0x{tag:02x}")

    def _read_entry_body(self):
        entry_id = self._u64()
        magnitude = self._take(self._u32())
        if magnitude[:1] == b'\x00':
            raise MalformedProof("amount has a leading zero byte")
        count = self._u32()
        if count * 20 > len(self._data) - self._pos:
            raise MalformedProof("address count exceeds remaining bytes")
        addresses = tuple('0x' + self._take(20).hex() for _ in range(count))
        timestamp = self._u64()
        cids = []
        for _ in range(2):
            tag = self._take(1)[0]
            if tag == TypeTag.NONE:
                cids.append(None)
            elif tag == TypeTag.CONTENT_ID:
                cids.append(ContentId(self._take(DIGEST_SIZE)))
            else:
                raise MalformedProof(f"unexpected tag 0x{tag:02x} in a cid slot")
        try:
            return DataEntry(
                entry_id=entry_id,
                amount=int.from_bytes(magnitude, 'big'),
                addresses=addresses,
                timestamp=timestamp,
                image_cid=cids[0],
                video_cid=cids[1],
            )
        except InvalidEntry as exc:
            raise MalformedProof(f"encoded entry is invalid: {exc}") from exc


def canonical_decode(data):
    reader = CanonicalReader(data)
    item = reader.read_item()
    if not reader.at_end:
        raise MalformedProof("trailing bytes after canonical item")
    return item
