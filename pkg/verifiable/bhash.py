"""
BHashTree: a verifiable B+Tree over time keys that converts into hash nodes.

Before conversion the tree is an ordinary B+Tree (branching factor 16 by
default) whose leaves hold ``(key, entry_id)`` pairs. Once the tree holds
``threshold_t`` entries, the next insert first converts every leaf into a hash
node: entries move into per-key buckets, each bucket keeps the digest its key
group already had, and the leaf keeps a fingerprint of its former entry ids.
The internal structure is frozen from then on, so an insert touches one bucket,
one hash node and its fixed set of ancestors.

Digests:

    key group / bucket   digest(0x02, key || sorted entry ids)
    fingerprint          digest(0x02, sorted entry ids)
    leaf                 digest(0x00, [(key, group digest), ...])
    internal             digest(0x01, [(child range, child digest), ...] || own range)
    hash node            digest(0x01, fingerprint || bucket count || bucket tree root)

Routing ranges of the children of an internal node tile the node's range, and
the root covers the whole 64-bit key space.

A hash node commits its buckets through a compact sparse Merkle tree over the
64 key bits. An empty subtree is 32 zero bytes, a subtree holding exactly one
key is that key's leaf digest(0x02, key || bucket digest), and any other
subtree is digest(0x02, left || right). Only subtrees with two or more keys are
stored; the tree is derived state and its hashing is metered as compute.

Range proofs are canonical: a subtree disjoint from the queried range must be
pruned to its digest, a key inside it must be revealed with its entry ids, and
an empty subtree must use the empty marker. A hash node is proved either as a
path through its bucket tree or as a flat listing of all its buckets, whichever
encodes smaller (ties go to the tree form). The committed bucket count lets the
verifier size both forms from either one, so it rejects the larger form too,
and one (tree, range) pair has exactly one accepted proof.

The flat listing encodes each bucket more tightly than a B+Tree leaf encodes a
key group, so a freshly converted leaf never proves larger than the same leaf
unconverted, apart from the fingerprint and count it adds; with seven or more
distinct keys it always proves smaller.

With a branching factor at or above the threshold the tree never splits before
conversion, which gives the single-root-leaf behaviour.
"""

from __future__ import annotations

import bisect
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from itertools import groupby
from operator import itemgetter

from .core import (
    DIGEST_SIZE,
    MAX_KEY,
    ZERO_DIGEST,
    Digest,
    DomainTag,
    TimeKey,
    canonical_decode,
    canonical_encode,
    digest,
    time_key,
)
from .exceptions import DuplicateEntry, MalformedProof
from .gas import GasMeter

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_T = 10
DEFAULT_BRANCHING = 16
KEY_BITS = 64

_U32 = struct.Struct('>I')
_U64 = struct.Struct('>Q')

# Flat listing sizes: opcode, key and digest; opcode, key and id count.
_HIDDEN_BUCKET_SIZE = 1 + 8 + DIGEST_SIZE
_BUCKET_HEADER_SIZE = 1 + 8 + 4


class IndexMode(str, Enum):
    PRE = 'pre-conversion'
    POST = 'post-conversion'


@dataclass(frozen=True)
class KeyRange:
    lo: TimeKey
    hi: TimeKey

    def intersects(self, lo, hi):
        return self.lo <= hi and lo <= self.hi

    def as_item(self):
        return [self.lo, self.hi]


FULL_RANGE = KeyRange(TimeKey(0), TimeKey(MAX_KEY))


def bucket_digest(key, entry_ids):
    return digest(DomainTag.HASH_BUCKET, canonical_encode(key) + canonical_encode(list(entry_ids)))


def fingerprint_digest(entry_ids):
    return digest(DomainTag.HASH_BUCKET, canonical_encode(sorted(entry_ids)))


def leaf_digest(groups):
    return digest(DomainTag.LEAF_ENTRY, canonical_encode([[key, group] for key, group in groups]))


def internal_digest(children, key_range):
    payload = canonical_encode([[child_range.as_item(), child] for child_range, child in children])
    return digest(DomainTag.INTERNAL_NODE, payload + canonical_encode(key_range.as_item()))


def hash_node_digest(fingerprint, bucket_count, bucket_root):
    payload = canonical_encode(fingerprint) + canonical_encode(bucket_count) + canonical_encode(bucket_root)
    return digest(DomainTag.INTERNAL_NODE, payload)


def bucket_leaf_digest(key, bucket):
    return digest(DomainTag.HASH_BUCKET, canonical_encode(key) + canonical_encode(bucket))


def bucket_branch_digest(left, right):
    return digest(DomainTag.HASH_BUCKET, canonical_encode(left) + canonical_encode(right))


def _bucket_span(depth, prefix):
    shift = KEY_BITS - depth
    return prefix << shift, ((prefix + 1) << shift) - 1


def _clamp_range(start_time, end_time):
    low = max(int(start_time), 0)
    high = min(int(end_time), MAX_KEY)
    if low > high:
        return None
    return TimeKey(low), TimeKey(high)


def build_bucket_tree(keys, leaves):
    """Stored nodes of the bucket tree over sorted ``keys``: (depth, prefix) -> digest, two or more keys only."""
    tree = {}
    for depth in range(KEY_BITS - 1, -1, -1):
        shift = KEY_BITS - depth
        for prefix, group in groupby(keys, key=lambda k: k >> shift):
            if len(list(group)) >= 2:
                left = _subtree_value(keys, leaves, tree, depth + 1, prefix << 1)[0]
                right = _subtree_value(keys, leaves, tree, depth + 1, (prefix << 1) | 1)[0]
                tree[(depth, prefix)] = bucket_branch_digest(left, right)
    return tree


def _subtree_value(keys, leaves, tree, depth, prefix):
    """(digest, key count, the single key or None) of one bucket subtree."""
    lo, hi = _bucket_span(depth, prefix)
    first = bisect.bisect_left(keys, lo)
    count = bisect.bisect_right(keys, hi) - first
    if count == 0:
        return ZERO_DIGEST, 0, None
    if count == 1:
        key = keys[first]
        return leaves[key], 1, key
    return tree[(depth, prefix)], count, None


def _prove_bucket_tree(subtree, hidden_digest, reveal, start_key, end_key, depth=0, prefix=0):
    """Tree-form bucket proof; ``subtree`` answers (depth, prefix) like ``_subtree_value``."""
    value, count, single = subtree(depth, prefix)
    if count == 0:
        return EMPTY_BUCKETS
    lo, hi = _bucket_span(depth, prefix)
    if hi < start_key or lo > end_key:
        return PrunedProof(value)
    if count == 1:
        if not start_key <= single <= end_key:
            return HiddenBucket(single, hidden_digest(single))
        return BucketProof(single, reveal(single))
    return BucketBranch(
        _prove_bucket_tree(subtree, hidden_digest, reveal, start_key, end_key, depth + 1, prefix << 1),
        _prove_bucket_tree(subtree, hidden_digest, reveal, start_key, end_key, depth + 1, (prefix << 1) | 1),
    )


def _flat_stream_size(bucket_count, revealed):
    """Encoded size of a flat listing of ``bucket_count`` buckets, ``revealed`` being the shown id tuples."""
    size = 1 + _HIDDEN_BUCKET_SIZE * (bucket_count - len(revealed))
    return size + sum(_BUCKET_HEADER_SIZE + 8 * len(ids) for ids in revealed)


@dataclass
class BHashNode:
    node_id: int
    is_leaf: bool
    key_range: KeyRange
    # Leaf: keys aligned with entry_ids. Internal: separator keys, one per child after the first.
    keys: list = field(default_factory=list)
    entry_ids: list = field(default_factory=list)
    children: list = field(default_factory=list)
    group_digests: dict = field(default_factory=dict)
    is_hash_node: bool = False
    hash_buckets: dict = field(default_factory=dict)
    bucket_digests: dict = field(default_factory=dict)
    bucket_keys: list = field(default_factory=list)
    bucket_leaves: dict = field(default_factory=dict, repr=False)
    bucket_tree: dict = field(default_factory=dict, repr=False)
    fingerprint: Digest | None = None
    node_digest: Digest = ZERO_DIGEST

    def bucket_subtree(self, depth, prefix):
        return _subtree_value(self.bucket_keys, self.bucket_leaves, self.bucket_tree, depth, prefix)

    @property
    def bucket_root(self):
        return self.bucket_subtree(0, 0)[0]

    def group_ids(self, key):
        lo = bisect.bisect_left(self.keys, key)
        hi = bisect.bisect_right(self.keys, key)
        return self.entry_ids[lo:hi]


# Proof nodes. A bucket tree is proved with PrunedProof, BucketEmpty,
# BucketBranch, BucketProof and HiddenBucket, or listed whole in FlatBuckets;
# the B+Tree part with the others.

@dataclass(frozen=True)
class PrunedProof:
    digest: Digest


@dataclass(frozen=True)
class InternalProof:
    children: tuple


@dataclass(frozen=True)
class KeyGroup:
    key: TimeKey
    entry_ids: tuple | None = None
    digest: Digest | None = None

    @property
    def revealed(self):
        return self.entry_ids is not None


@dataclass(frozen=True)
class LeafProof:
    groups: tuple


@dataclass(frozen=True)
class HashNodeProof:
    fingerprint: Digest
    bucket_count: int
    buckets: object


@dataclass(frozen=True)
class FlatBuckets:
    buckets: tuple


@dataclass(frozen=True)
class BucketEmpty:
    pass


@dataclass(frozen=True)
class BucketBranch:
    left: object
    right: object


@dataclass(frozen=True)
class BucketProof:
    key: TimeKey
    entry_ids: tuple


@dataclass(frozen=True)
class HiddenBucket:
    key: TimeKey
    digest: Digest


EMPTY_BUCKETS = BucketEmpty()

_KIND_INTERNAL, _KIND_PRUNED, _KIND_LEAF, _KIND_HASH_NODE = range(4)
_OP_EMPTY, _OP_BRANCH, _OP_PRUNED, _OP_BUCKET, _OP_HIDDEN, _OP_FLAT = range(6)


@dataclass(frozen=True)
class RangeVO:
    """Verification object of a time-range query.

    ``start_key``/``end_key`` are the clamped query bounds and are both None,
    along with ``body``, for the vacuous proof of an inverted range.
    """

    claimed_root: Digest
    start_key: TimeKey | None = None
    end_key: TimeKey | None = None
    body: object = None

    @property
    def mode(self):
        return IndexMode.POST if _contains_hash_node(self.body) else IndexMode.PRE

    @property
    def in_range_entries(self):
        if self.body is None:
            return []
        found = []
        _recompute(self.body, FULL_RANGE, self.start_key, self.end_key, found)
        return found

    @property
    def frontier_digests(self):
        frontier = []
        if self.body is not None:
            _collect_frontier(self.body, FULL_RANGE, frontier)
        return frontier

    @property
    def boundary_keys(self):
        """Nearest out-of-range keys the proof reveals on each side, or None."""
        left = right = None
        for key in _hidden_keys(self.body):
            if key < self.start_key and (left is None or key > left):
                left = key
            if key > self.end_key and (right is None or key < right):
                right = key
        return left, right

    def to_bytes(self):
        body = None if self.body is None else _proof_to_item(self.body)
        return canonical_encode([self.claimed_root, self.start_key, self.end_key, body])

    @property
    def byte_size(self):
        return len(self.to_bytes())

    @classmethod
    def from_bytes(cls, data):
        item = canonical_decode(data)
        _expect(isinstance(item, list) and len(item) == 4, "range proof must have four fields")
        root, start_key, end_key, body = item
        _expect(isinstance(root, Digest), "claimed root must be a digest")
        if start_key is None and end_key is None:
            _expect(body is None, "a vacuous proof carries no body")
            return cls(root)
        _expect(isinstance(start_key, TimeKey) and isinstance(end_key, TimeKey), "bounds must be time keys")
        _expect(body is not None, "a non-vacuous proof needs a body")
        return cls(root, start_key, end_key, _proof_from_item(body))


class BHashTree:
    def __init__(self, threshold_t=DEFAULT_THRESHOLD_T, branching=DEFAULT_BRANCHING, convert=True, meter=None):
        if threshold_t < 1:
            raise ValueError("threshold_t must be positive")
        if branching < 3:
            raise ValueError("branching must be at least 3")
        self.threshold_t = threshold_t
        self.branching = branching
        self.convert = convert
        self.meter = meter or GasMeter()
        self.nodes = {}
        self.entry_count = 0
        self.converted = False
        self._next_node_id = 0
        self._indexed = set()
        root = self._allocate(is_leaf=True, key_range=FULL_RANGE)
        self._rehash(root)
        self._store(root)
        self.root_id = root.node_id

    @property
    def node_count(self):
        return len(self.nodes)

    def root_digest(self):
        return self.nodes[self.root_id].node_digest

    def __contains__(self, entry_id):
        return entry_id in self._indexed

    def insert(self, entry_id, timestamp):
        if entry_id in self._indexed:
            raise DuplicateEntry(entry_id)
        key = time_key(timestamp)
        if self.convert and not self.converted and self.entry_count >= self.threshold_t:
            self._convert()
        path = self._descend(key)
        leaf = self.nodes[path[-1]]
        if leaf.is_hash_node:
            self._insert_into_bucket(leaf, key, entry_id)
            self._store(leaf)
            self._refresh(path[:-1])
        else:
            self._insert_into_leaf(path, key, entry_id)
        self._indexed.add(entry_id)
        self.entry_count += 1
        return True

    def range_query(self, start_time, end_time):
        claimed = self.root_digest()
        bounds = _clamp_range(start_time, end_time)
        if bounds is None:
            return [], RangeVO(claimed)
        found = []
        body = self._prove(self.root_id, bounds[0], bounds[1], found)
        return [entry_id for _, entry_id in found], RangeVO(claimed, bounds[0], bounds[1], body)

    def recompute_root_digest(self):
        """Rebuild every digest from node contents alone, without touching stored digests."""
        return self._recompute_node(self.root_id)

    # storage access, metered

    def _allocate(self, is_leaf, key_range):
        node = BHashNode(node_id=self._next_node_id, is_leaf=is_leaf, key_range=key_range)
        self._next_node_id += 1
        return node

    def _load(self, node_id):
        self.meter.record_read()
        return self.nodes[node_id]

    def _store(self, node):
        self.meter.record_write()
        self.nodes[node.node_id] = node

    def _hash(self, fn, *args):
        self.meter.record_compute()
        return fn(*args)

    # insertion

    def _descend(self, key):
        path = [self.root_id]
        node = self._load(self.root_id)
        while not node.is_leaf:
            child_id = node.children[bisect.bisect_right(node.keys, key)]
            path.append(child_id)
            node = self._load(child_id)
        return path

    def _insert_into_leaf(self, path, key, entry_id):
        leaf = self.nodes[path[-1]]
        position = bisect.bisect_right(list(zip(leaf.keys, leaf.entry_ids)), (key, entry_id))
        leaf.keys.insert(position, key)
        leaf.entry_ids.insert(position, entry_id)
        leaf.group_digests[key] = self._hash(bucket_digest, key, leaf.group_ids(key))

        carry = None
        for depth in range(len(path) - 1, -1, -1):
            node = self.nodes[path[depth]]
            if carry is not None:
                left_id, right = carry
                slot = node.children.index(left_id) + 1
                node.children.insert(slot, right.node_id)
                node.keys.insert(slot - 1, right.key_range.lo)
            carry = None
            if self._overfull(node):
                carry = (node.node_id, self._split(node))
            self._rehash(node)
            self._store(node)
            if carry is not None:
                self._rehash(carry[1])
                self._store(carry[1])

        if carry is not None:
            left_id, right = carry
            root = self._allocate(is_leaf=False, key_range=FULL_RANGE)
            root.children = [left_id, right.node_id]
            root.keys = [right.key_range.lo]
            self._rehash(root)
            self._store(root)
            self.root_id = root.node_id

    def _overfull(self, node):
        if node.is_leaf:
            return len(node.group_digests) > self.branching
        return len(node.children) > self.branching

    def _split(self, node):
        """Move the upper half of ``node`` into a new right sibling and return it."""
        if node.is_leaf:
            distinct = sorted(node.group_digests)
            separator = distinct[len(distinct) // 2]
            cut = bisect.bisect_left(node.keys, separator)
            right = self._allocate(is_leaf=True, key_range=KeyRange(separator, node.key_range.hi))
            right.keys, node.keys = node.keys[cut:], node.keys[:cut]
            right.entry_ids, node.entry_ids = node.entry_ids[cut:], node.entry_ids[:cut]
            right.group_digests = {k: d for k, d in node.group_digests.items() if k >= separator}
            node.group_digests = {k: d for k, d in node.group_digests.items() if k < separator}
        else:
            middle = len(node.children) // 2
            separator = node.keys[middle - 1]
            right = self._allocate(is_leaf=False, key_range=KeyRange(separator, node.key_range.hi))
            right.children, node.children = node.children[middle:], node.children[:middle]
            right.keys, node.keys = node.keys[middle:], node.keys[:middle - 1]
        node.key_range = KeyRange(node.key_range.lo, TimeKey(separator - 1))
        return right

    def _insert_into_bucket(self, node, key, entry_id):
        self.meter.record_read()
        ids = node.hash_buckets.get(key)
        if ids is None:
            ids = node.hash_buckets[key] = []
            bisect.insort(node.bucket_keys, key)
        bisect.insort(ids, entry_id)
        self.meter.record_write()
        bucket = self._hash(bucket_digest, key, ids)
        node.bucket_digests[key] = bucket
        self._place_bucket(node, key, bucket)
        self._rehash(node)

    def _place_bucket(self, node, key, bucket):
        node.bucket_leaves[key] = self._hash(bucket_leaf_digest, key, bucket)
        prefix = int(key)
        for depth in range(KEY_BITS - 1, -1, -1):
            prefix >>= 1
            left, left_count, _ = node.bucket_subtree(depth + 1, prefix << 1)
            right, right_count, _ = node.bucket_subtree(depth + 1, (prefix << 1) | 1)
            if left_count + right_count >= 2:
                node.bucket_tree[(depth, prefix)] = self._hash(bucket_branch_digest, left, right)

    def _rehash(self, node):
        if node.is_hash_node:
            node.node_digest = self._hash(hash_node_digest, node.fingerprint, len(node.bucket_keys), node.bucket_root)
        elif node.is_leaf:
            node.node_digest = self._hash(leaf_digest, sorted(node.group_digests.items()))
        else:
            children = []
            for child_id in node.children:
                child = self._load(child_id)
                children.append((child.key_range, child.node_digest))
            node.node_digest = self._hash(internal_digest, children, node.key_range)

    def _refresh(self, ancestor_ids):
        for node_id in reversed(ancestor_ids):
            node = self.nodes[node_id]
            self._rehash(node)
            self._store(node)

    # conversion

    def _convert(self):
        leaves = [node for node in self.nodes.values() if node.is_leaf]
        for leaf in leaves:
            self._convert_leaf(leaf)
        internal = []
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            if not node.is_leaf:
                internal.append(node)
                stack.extend(node.children)
        for node in reversed(internal):
            self._rehash(node)
            self._store(node)
        self.converted = True
        logger.info(
            "BHashTree converted %s leaves holding %s entries into hash nodes (%s nodes total)",
            len(leaves), self.entry_count, self.node_count,
        )

    def _convert_leaf(self, leaf):
        leaf.fingerprint = self._hash(fingerprint_digest, leaf.entry_ids)
        for key, group in groupby(zip(leaf.keys, leaf.entry_ids), key=itemgetter(0)):
            leaf.hash_buckets[key] = [entry_id for _, entry_id in group]
            self.meter.record_write()
        # Group digests become bucket digests as they are.
        leaf.bucket_digests, leaf.group_digests = leaf.group_digests, {}
        leaf.bucket_keys = sorted(leaf.hash_buckets)
        leaf.bucket_leaves = {
            key: self._hash(bucket_leaf_digest, key, leaf.bucket_digests[key]) for key in leaf.bucket_keys
        }
        leaf.bucket_tree = build_bucket_tree(leaf.bucket_keys, leaf.bucket_leaves)
        self.meter.record_compute(len(leaf.bucket_tree))
        leaf.keys = []
        leaf.entry_ids = []
        leaf.is_hash_node = True
        self._rehash(leaf)
        self._store(leaf)

    # range proofs

    def _prove(self, node_id, start_key, end_key, found):
        node = self._load(node_id)
        if node.is_hash_node:
            buckets = self._prove_buckets(node, start_key, end_key, found)
            return HashNodeProof(node.fingerprint, len(node.bucket_keys), buckets)
        if node.is_leaf:
            groups = []
            for key in sorted(node.group_digests):
                if start_key <= key <= end_key:
                    ids = tuple(node.group_ids(key))
                    groups.append(KeyGroup(key, entry_ids=ids))
                    found.extend((key, entry_id) for entry_id in ids)
                else:
                    groups.append(KeyGroup(key, digest=node.group_digests[key]))
            return LeafProof(tuple(groups))
        children = []
        for child_id in node.children:
            child = self.nodes[child_id]
            if child.key_range.intersects(start_key, end_key):
                children.append((child.key_range, self._prove(child_id, start_key, end_key, found)))
            else:
                children.append((child.key_range, PrunedProof(child.node_digest)))
        return InternalProof(tuple(children))

    def _prove_buckets(self, node, start_key, end_key, found):
        revealed = {}

        def reveal(key):
            self.meter.record_read()
            ids = revealed[key] = tuple(node.hash_buckets[key])
            found.extend((key, entry_id) for entry_id in ids)
            return ids

        tree_form = _prove_bucket_tree(node.bucket_subtree, node.bucket_digests.__getitem__, reveal, start_key, end_key)
        if _flat_stream_size(len(node.bucket_keys), list(revealed.values())) >= _bucket_stream_size(tree_form):
            return tree_form
        return FlatBuckets(tuple(
            BucketProof(key, revealed[key]) if key in revealed else HiddenBucket(key, node.bucket_digests[key])
            for key in node.bucket_keys
        ))

    def _recompute_node(self, node_id):
        node = self.nodes[node_id]
        if node.is_hash_node:
            keys = sorted(node.hash_buckets)
            leaves = {key: bucket_leaf_digest(key, bucket_digest(key, node.hash_buckets[key])) for key in keys}
            tree = build_bucket_tree(keys, leaves)
            return hash_node_digest(node.fingerprint, len(keys), _subtree_value(keys, leaves, tree, 0, 0)[0])
        if node.is_leaf:
            keys = sorted(set(node.keys))
            return leaf_digest((key, bucket_digest(key, node.group_ids(key))) for key in keys)
        children = [(self.nodes[c].key_range, self._recompute_node(c)) for c in node.children]
        return internal_digest(children, node.key_range)


def verify_range(vo, trusted_root, start_time, end_time, results):
    """True iff ``vo`` proves that ``results`` is exactly the range answer under ``trusted_root``."""
    try:
        if isinstance(vo, (bytes, bytearray, memoryview)):
            vo = RangeVO.from_bytes(vo)
        return _verify(vo, trusted_root, start_time, end_time, list(results))
    except MalformedProof as exc:
        logger.debug("range proof rejected: %s", exc)
        return False


def _verify(vo, trusted_root, start_time, end_time, results):
    if vo.claimed_root != trusted_root:
        return False
    bounds = _clamp_range(start_time, end_time)
    if bounds is None:
        return vo.body is None and vo.start_key is None and not results
    if vo.body is None or (vo.start_key, vo.end_key) != bounds:
        return False
    found = []
    root = _recompute(vo.body, FULL_RANGE, bounds[0], bounds[1], found)
    return root == trusted_root and [entry_id for _, entry_id in found] == results


def _expect(condition, message):
    if not condition:
        raise MalformedProof(message)


def _checked_ids(entry_ids):
    _expect(len(entry_ids) > 0, "a revealed key needs entry ids")
    _expect(all(a < b for a, b in zip(entry_ids, entry_ids[1:])), "entry ids must ascend strictly")
    return list(entry_ids)


def _recompute(proof, key_range, start_key, end_key, found):
    if isinstance(proof, InternalProof):
        _expect(len(proof.children) > 0, "internal node without children")
        expected_lo = key_range.lo
        children = []
        for child_range, child in proof.children:
            _expect(child_range.lo == expected_lo and child_range.lo <= child_range.hi,
                    "child ranges must tile the parent range")
            if child_range.intersects(start_key, end_key):
                _expect(not isinstance(child, PrunedProof), "an overlapping child was pruned")
                child_digest = _recompute(child, child_range, start_key, end_key, found)
            else:
                _expect(isinstance(child, PrunedProof), "a disjoint child was expanded")
                child_digest = child.digest
            children.append((child_range, child_digest))
            expected_lo = child_range.hi + 1
        _expect(expected_lo == key_range.hi + 1, "child ranges must tile the parent range")
        return internal_digest(children, key_range)

    if isinstance(proof, LeafProof):
        previous = None
        groups = []
        for group in proof.groups:
            _expect(previous is None or group.key > previous, "leaf keys must ascend strictly")
            _expect(key_range.lo <= group.key <= key_range.hi, "leaf key outside its range")
            previous = group.key
            if start_key <= group.key <= end_key:
                _expect(group.revealed, "an in-range key was withheld")
                ids = _checked_ids(group.entry_ids)
                groups.append((group.key, bucket_digest(group.key, ids)))
                found.extend((group.key, entry_id) for entry_id in ids)
            else:
                _expect(not group.revealed, "an out-of-range key was revealed")
                groups.append((group.key, group.digest))
        return leaf_digest(groups)

    if isinstance(proof, HashNodeProof):
        count = proof.bucket_count
        _expect(isinstance(count, int) and count >= 0, "bucket count must be a non-negative integer")
        if isinstance(proof.buckets, FlatBuckets):
            root, tree_size = _recompute_flat(proof.buckets, count, start_key, end_key, key_range, found)
            _expect(_bucket_stream_size(proof.buckets) < tree_size, "a flat listing the tree form beats")
        else:
            root = _recompute_buckets(proof.buckets, 0, 0, start_key, end_key, key_range, found)
            revealed, listed, pruned = _bucket_census(proof.buckets)
            _expect(count >= listed + pruned, "bucket count below the buckets proved")
            _expect(_bucket_stream_size(proof.buckets) <= _flat_stream_size(count, revealed),
                    "a tree form the flat listing beats")
        return hash_node_digest(proof.fingerprint, count, root)

    raise MalformedProof(f"unexpected proof node {type(proof).__name__}")


def _recompute_buckets(proof, depth, prefix, start_key, end_key, key_range, found):
    if isinstance(proof, BucketEmpty):
        return ZERO_DIGEST
    lo, hi = _bucket_span(depth, prefix)
    disjoint = hi < start_key or lo > end_key
    if isinstance(proof, PrunedProof):
        _expect(disjoint, "an overlapping bucket subtree was pruned")
        _expect(proof.digest != ZERO_DIGEST, "an empty bucket subtree must use the empty marker")
        return proof.digest
    _expect(not disjoint, "a disjoint bucket subtree was expanded")
    if isinstance(proof, (BucketProof, HiddenBucket)):
        _expect(lo <= proof.key <= hi, "bucket key outside its subtree")
        _expect(key_range.lo <= proof.key <= key_range.hi, "bucket key outside its node range")
        in_range = start_key <= proof.key <= end_key
        if isinstance(proof, HiddenBucket):
            _expect(not in_range, "an in-range bucket was withheld")
            return bucket_leaf_digest(proof.key, proof.digest)
        _expect(in_range, "an out-of-range bucket was revealed")
        ids = _checked_ids(proof.entry_ids)
        found.extend((proof.key, entry_id) for entry_id in ids)
        return bucket_leaf_digest(proof.key, bucket_digest(proof.key, ids))
    if isinstance(proof, BucketBranch):
        _expect(depth < KEY_BITS, "branch below the key depth")
        left = _recompute_buckets(proof.left, depth + 1, prefix << 1, start_key, end_key, key_range, found)
        right = _recompute_buckets(proof.right, depth + 1, (prefix << 1) | 1, start_key, end_key, key_range, found)
        _expect(left != ZERO_DIGEST or right != ZERO_DIGEST, "branch over two empty subtrees")
        return bucket_branch_digest(left, right)
    raise MalformedProof(f"unexpected bucket proof node {type(proof).__name__}")


def _recompute_flat(flat, count, start_key, end_key, key_range, found):
    """Bucket root of a flat listing and the encoded size of the tree form it stands in for."""
    _expect(len(flat.buckets) == count, "a flat listing must hold every bucket")
    keys, leaves, digests, shown = [], {}, {}, {}
    for bucket in flat.buckets:
        _expect(isinstance(bucket, (BucketProof, HiddenBucket)), "a flat listing holds buckets only")
        _expect(not keys or bucket.key > keys[-1], "flat bucket keys must ascend strictly")
        _expect(key_range.lo <= bucket.key <= key_range.hi, "bucket key outside its node range")
        in_range = start_key <= bucket.key <= end_key
        if isinstance(bucket, HiddenBucket):
            _expect(not in_range, "an in-range bucket was withheld")
            digests[bucket.key] = bucket.digest
        else:
            _expect(in_range, "an out-of-range bucket was revealed")
            ids = shown[bucket.key] = tuple(_checked_ids(bucket.entry_ids))
            digests[bucket.key] = bucket_digest(bucket.key, ids)
            found.extend((bucket.key, entry_id) for entry_id in ids)
        keys.append(bucket.key)
        leaves[bucket.key] = bucket_leaf_digest(bucket.key, digests[bucket.key])
    tree = build_bucket_tree(keys, leaves)

    def subtree(depth, prefix):
        return _subtree_value(keys, leaves, tree, depth, prefix)

    tree_form = _prove_bucket_tree(subtree, digests.__getitem__, shown.__getitem__, start_key, end_key)
    return subtree(0, 0)[0], _bucket_stream_size(tree_form)


def _bucket_census(proof):
    """(revealed id tuples, listed bucket count, pruned subtree count) of a tree-form bucket proof."""
    revealed, listed, pruned = [], 0, 0
    stack = [proof]
    while stack:
        node = stack.pop()
        if isinstance(node, BucketBranch):
            stack.extend((node.left, node.right))
        elif isinstance(node, BucketProof):
            revealed.append(node.entry_ids)
            listed += 1
        elif isinstance(node, HiddenBucket):
            listed += 1
        elif isinstance(node, PrunedProof):
            pruned += 1
    return revealed, listed, pruned


def _bucket_stream_size(proof):
    stream = bytearray()
    _write_buckets(proof, stream)
    return len(stream)


def _contains_hash_node(proof):
    if isinstance(proof, HashNodeProof):
        return True
    if isinstance(proof, InternalProof):
        return any(_contains_hash_node(child) for _, child in proof.children)
    return False


def _hidden_keys(proof):
    if isinstance(proof, LeafProof):
        return [group.key for group in proof.groups if not group.revealed]
    if isinstance(proof, InternalProof):
        return [key for _, child in proof.children for key in _hidden_keys(child)]
    if isinstance(proof, HashNodeProof):
        return _hidden_keys(proof.buckets)
    if isinstance(proof, BucketBranch):
        return _hidden_keys(proof.left) + _hidden_keys(proof.right)
    if isinstance(proof, FlatBuckets):
        return [bucket.key for bucket in proof.buckets if isinstance(bucket, HiddenBucket)]
    if isinstance(proof, HiddenBucket):
        return [proof.key]
    return []


def _collect_frontier(proof, key_range, frontier, depth=None, prefix=0):
    if depth is not None:
        if isinstance(proof, PrunedProof):
            lo, hi = _bucket_span(depth, prefix)
            frontier.append((KeyRange(TimeKey(lo), TimeKey(hi)), proof.digest))
        elif isinstance(proof, HiddenBucket):
            frontier.append((KeyRange(proof.key, proof.key), proof.digest))
        elif isinstance(proof, BucketBranch):
            _collect_frontier(proof.left, key_range, frontier, depth + 1, prefix << 1)
            _collect_frontier(proof.right, key_range, frontier, depth + 1, (prefix << 1) | 1)
        elif isinstance(proof, FlatBuckets):
            frontier.extend(
                (KeyRange(bucket.key, bucket.key), bucket.digest)
                for bucket in proof.buckets if isinstance(bucket, HiddenBucket)
            )
        return
    if isinstance(proof, InternalProof):
        for child_range, child in proof.children:
            if isinstance(child, PrunedProof):
                frontier.append((child_range, child.digest))
            else:
                _collect_frontier(child, child_range, frontier)
    elif isinstance(proof, LeafProof):
        frontier.extend((KeyRange(g.key, g.key), g.digest) for g in proof.groups if not g.revealed)
    elif isinstance(proof, HashNodeProof):
        _collect_frontier(proof.buckets, key_range, frontier, 0, 0)


# wire form

def _proof_to_item(proof):
    if isinstance(proof, InternalProof):
        return [_KIND_INTERNAL, [[r.as_item(), _proof_to_item(child)] for r, child in proof.children]]
    if isinstance(proof, PrunedProof):
        return [_KIND_PRUNED, proof.digest]
    if isinstance(proof, LeafProof):
        groups = [
            [g.key, list(g.entry_ids)] if g.revealed else [g.key, g.digest]
            for g in proof.groups
        ]
        return [_KIND_LEAF, groups]
    if isinstance(proof, HashNodeProof):
        stream = bytearray(_U32.pack(proof.bucket_count))
        _write_buckets(proof.buckets, stream)
        return [_KIND_HASH_NODE, proof.fingerprint, bytes(stream)]
    raise TypeError(f"cannot encode proof node {type(proof).__name__}")


def _proof_from_item(item, depth=0):
    _expect(isinstance(item, list) and item and isinstance(item[0], int) and not isinstance(item[0], bool),
            "proof node must be a kind-tagged list")
    _expect(depth <= KEY_BITS, "proof nests too deeply")
    kind = item[0]
    if kind == _KIND_INTERNAL:
        _expect(len(item) == 2 and isinstance(item[1], list), "malformed internal proof")
        children = []
        for entry in item[1]:
            _expect(isinstance(entry, list) and len(entry) == 2, "malformed child proof")
            children.append((_range_from_item(entry[0]), _proof_from_item(entry[1], depth + 1)))
        return InternalProof(tuple(children))
    if kind == _KIND_PRUNED:
        _expect(len(item) == 2 and isinstance(item[1], Digest), "malformed pruned proof")
        return PrunedProof(item[1])
    if kind == _KIND_LEAF:
        _expect(len(item) == 2 and isinstance(item[1], list), "malformed leaf proof")
        groups = []
        for entry in item[1]:
            _expect(isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], TimeKey),
                    "malformed key group")
            if isinstance(entry[1], Digest):
                groups.append(KeyGroup(entry[0], digest=entry[1]))
            else:
                groups.append(KeyGroup(entry[0], entry_ids=_ids_from_item(entry[1])))
        return LeafProof(tuple(groups))
    if kind == _KIND_HASH_NODE:
        _expect(len(item) == 3 and isinstance(item[1], Digest) and isinstance(item[2], bytes),
                "malformed hash node proof")
        return HashNodeProof(item[1], *_BucketStreamReader(item[2]).read_all())
    raise MalformedProof(f"unknown proof kind {kind}")


def _range_from_item(item):
    _expect(isinstance(item, list) and len(item) == 2 and all(isinstance(k, TimeKey) for k in item),
            "malformed key range")
    return KeyRange(item[0], item[1])


def _ids_from_item(item):
    _expect(isinstance(item, list) and all(isinstance(i, int) and not isinstance(i, bool) for i in item),
            "entry ids must be a list of integers")
    return tuple(item)


def _write_buckets(proof, stream):
    """Pre-order opcode stream: empty, branch, pruned digest, revealed bucket, hidden bucket, flat listing."""
    stack = [proof]
    while stack:
        node = stack.pop()
        if isinstance(node, BucketEmpty):
            stream.append(_OP_EMPTY)
        elif isinstance(node, BucketBranch):
            stream.append(_OP_BRANCH)
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, PrunedProof):
            stream.append(_OP_PRUNED)
            stream += node.digest
        elif isinstance(node, BucketProof):
            stream.append(_OP_BUCKET)
            stream += _U64.pack(node.key)
            stream += _U32.pack(len(node.entry_ids))
            for entry_id in node.entry_ids:
                stream += _U64.pack(entry_id)
        elif isinstance(node, HiddenBucket):
            stream.append(_OP_HIDDEN)
            stream += _U64.pack(node.key)
            stream += node.digest
        elif isinstance(node, FlatBuckets):
            stream.append(_OP_FLAT)
            stack.extend(reversed(node.buckets))
        else:
            raise TypeError(f"cannot encode bucket proof node {type(node).__name__}")


class _BucketStreamReader:
    def __init__(self, data):
        self._data = data
        self._pos = 0

    def _take(self, size):
        end = self._pos + size
        _expect(end <= len(self._data), "truncated bucket proof")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def _key(self):
        return TimeKey(_U64.unpack(self._take(8))[0])

    def read_all(self):
        """(bucket count, bucket proof) of the whole stream."""
        bucket_count = _U32.unpack(self._take(4))[0]
        if self._data[self._pos:self._pos + 1] == bytes((_OP_FLAT,)):
            self._pos += 1
            proof = FlatBuckets(tuple(self._read_flat_bucket() for _ in range(bucket_count)))
        else:
            proof = self._read(0)
        _expect(self._pos == len(self._data), "trailing bytes in bucket proof")
        return bucket_count, proof

    def _read_flat_bucket(self):
        _expect(self._data[self._pos:self._pos + 1] in (bytes((_OP_BUCKET,)), bytes((_OP_HIDDEN,))),
                "a flat listing holds buckets only")
        return self._read(KEY_BITS)

    def _read(self, depth):
        _expect(depth <= KEY_BITS, "bucket proof deeper than the key width")
        op = self._take(1)[0]
        if op == _OP_EMPTY:
            return EMPTY_BUCKETS
        if op == _OP_BRANCH:
            left = self._read(depth + 1)
            return BucketBranch(left, self._read(depth + 1))
        if op == _OP_PRUNED:
            return PrunedProof(Digest(self._take(DIGEST_SIZE)))
        if op == _OP_BUCKET:
            key = self._key()
            count = _U32.unpack(self._take(4))[0]
            _expect(count * 8 <= len(self._data) - self._pos, "bucket id count exceeds remaining bytes")
            return BucketProof(key, tuple(_U64.unpack(self._take(8))[0] for _ in range(count)))
        if op == _OP_HIDDEN:
            key = self._key()
            return HiddenBucket(key, Digest(self._take(DIGEST_SIZE)))
        raise MalformedProof(f"unknown bucket proof opcode {op}")
