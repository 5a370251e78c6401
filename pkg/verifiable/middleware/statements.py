"""Parsed query forms, one frozen dataclass per supported primitive."""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum

from ..core import canonical_encode
from ..trie import ADDRESS_NAMESPACE, TIMESTAMP_NAMESPACE

ENTRY_COLUMNS = ('amount', 'addresses', 'timestamp', 'imagecid', 'videocid', 'image', 'video')
REQUIRED_INSERT_COLUMNS = ('amount', 'addresses', 'timestamp')


class FuzzyField(str, Enum):
    TIMESTAMP_STRING = 'timestamp_string'
    ADDRESS = 'address'


@dataclass(frozen=True)
class Insert:
    amount: int
    addresses: tuple
    timestamp: int
    image_cid: object = None
    video_cid: object = None
    image: bytes | None = None
    video: bytes | None = None


@dataclass(frozen=True)
class Delete:
    entry_id: int


@dataclass(frozen=True)
class Update:
    entry_id: int
    # (column, value) pairs sorted by column
    changes: tuple = ()

    def changed(self):
        return dict(self.changes)


@dataclass(frozen=True)
class SelectSimple:
    entry_id: int | None = None
    timestamp: int | None = None


@dataclass(frozen=True)
class SelectTimeRange:
    start_time: int
    end_time: int


@dataclass(frozen=True)
class SelectFuzzy:
    field: FuzzyField
    prefix: str

    @property
    def trie_prefix(self):
        if self.field == FuzzyField.TIMESTAMP_STRING:
            return TIMESTAMP_NAMESPACE + self.prefix
        # '' and '0' cover every address; anything else starts with 0x.
        return ADDRESS_NAMESPACE + (self.prefix[2:] if self.prefix.startswith('0x') else '')


SELECTS = (SelectSimple, SelectTimeRange, SelectFuzzy)
MUTATIONS = (Insert, Update, Delete)


def is_select(statement):
    return isinstance(statement, SELECTS)


def encode_ast(statement):
    values = [getattr(statement, f.name) for f in fields(statement)]
    return canonical_encode([type(statement).__name__, values])
