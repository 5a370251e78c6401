"""
Verifiable prefix trie over an 18-character alphabet.

Every node's digest composes its own character, its terminal entry ids and its
children's digests, so the root digest commits to every stored (key, entry_id)
pair. Insertion and proof verification are iterative: neither depends on the
interpreter's recursion limit, whatever the key length.

A prefix proof walks from the root to the node reached by the prefix. Each step
carries that path node's own entry ids and the digests of every child except the
one the prefix continues into. The matched subtree is shipped whole, flattened in
pre-order. An unmatched prefix is proved by the path up to the divergence point:
the last step lists all children of that node and none carries the next
character.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field

from .core import ZERO_DIGEST, Digest, DomainTag, canonical_decode, canonical_encode, digest, timestamp_string
from .exceptions import InvalidCharacter, InvalidEntry, KeyTooLong, MalformedProof
from .gas import GasMeter

logger = logging.getLogger(__name__)

ALPHABET = '0123456789abcdef-:'
ALPHABET_INDEX = {char: index for index, char in enumerate(ALPHABET)}
ROOT_CHAR = 0xFF
MAX_KEY_LENGTH = 64

TIMESTAMP_NAMESPACE = '-'
ADDRESS_NAMESPACE = ':'


def timestamp_trie_key(timestamp):
    return TIMESTAMP_NAMESPACE + timestamp_string(timestamp)


def address_trie_key(address):
    return ADDRESS_NAMESPACE + address[2:]


def char_indices(text):
    try:
        return [ALPHABET_INDEX[char] for char in text]
    except KeyError as exc:
        raise InvalidCharacter(text, exc.args[0]) from None


def trie_node_digest(char, entry_ids, children):
    """``children`` is a list of (alphabet index, child digest) in index order."""
    item = [char, bool(entry_ids), list(entry_ids), [[index, child] for index, child in children]]
    return digest(DomainTag.TRIE_NODE, canonical_encode(item))


@dataclass
class TrieNode:
    node_id: int
    char: int
    children: dict = field(default_factory=dict)
    entry_ids: list = field(default_factory=list)
    node_digest: Digest = ZERO_DIGEST

    @property
    def is_terminal(self):
        return bool(self.entry_ids)


@dataclass
class DescentStats:
    visits: int = 0


@dataclass(frozen=True)
class PrefixVO:
    """Path steps are ``(entry_ids, siblings)``; the subtree is pre-order ``(char, entry_ids, child_count)``."""

    claimed_root: Digest
    steps: tuple = ()
    subtree: tuple | None = None

    @property
    def matched(self):
        return self.subtree is not None

    def to_bytes(self):
        steps = [[list(ids), [[index, sibling] for index, sibling in siblings]] for ids, siblings in self.steps]
        subtree = None
        if self.subtree is not None:
            subtree = [[char, list(ids), count] for char, ids, count in self.subtree]
        return canonical_encode([self.claimed_root, steps, subtree])

    @property
    def byte_size(self):
        return len(self.to_bytes())

    @classmethod
    def from_bytes(cls, data):
        item = canonical_decode(data)
        _expect(isinstance(item, list) and len(item) == 3, "prefix proof must have three fields")
        root, raw_steps, raw_subtree = item
        _expect(isinstance(root, Digest), "claimed root must be a digest")
        _expect(isinstance(raw_steps, list), "path steps must be a list")
        steps = []
        for step in raw_steps:
            _expect(isinstance(step, list) and len(step) == 2 and isinstance(step[1], list), "malformed path step")
            siblings = []
            for pair in step[1]:
                _expect(isinstance(pair, list) and len(pair) == 2 and _is_uint(pair[0]) and isinstance(pair[1], Digest),
                        "malformed sibling")
                siblings.append((pair[0], pair[1]))
            steps.append((_ids(step[0]), tuple(siblings)))
        subtree = None
        if raw_subtree is not None:
            _expect(isinstance(raw_subtree, list), "subtree must be a list")
            subtree = []
            for node in raw_subtree:
                _expect(isinstance(node, list) and len(node) == 3 and _is_uint(node[0]) and _is_uint(node[2]),
                        "malformed subtree node")
                subtree.append((node[0], _ids(node[1]), node[2]))
            subtree = tuple(subtree)
        return cls(root, tuple(steps), subtree)


class VerifiableTrie:
    def __init__(self, meter=None):
        self.meter = meter or GasMeter()
        self.nodes = {}
        self._next_node_id = 0
        self.key_count = 0
        root = self._allocate(ROOT_CHAR)
        root.node_digest = trie_node_digest(ROOT_CHAR, [], [])
        self._store(root)
        self.root_id = root.node_id

    def root_digest(self):
        return self.nodes[self.root_id].node_digest

    def _allocate(self, char):
        node = TrieNode(node_id=self._next_node_id, char=char)
        self._next_node_id += 1
        return node

    def _load(self, node_id):
        self.meter.record_read()
        return self.nodes[node_id]

    def _store(self, node):
        self.meter.record_write()
        self.nodes[node.node_id] = node

    def _rehash(self, node):
        self.meter.record_compute()
        children = [(index, self.nodes[child].node_digest) for index, child in sorted(node.children.items())]
        node.node_digest = trie_node_digest(node.char, node.entry_ids, children)

    def insert(self, key, entry_id):
        if not key:
            raise InvalidEntry("trie keys must be non-empty")
        if len(key) > MAX_KEY_LENGTH:
            raise KeyTooLong(f"trie key of {len(key)} characters exceeds {MAX_KEY_LENGTH}")
        indices = char_indices(key)

        path = [self._load(self.root_id)]
        for index in indices:
            node = path[-1]
            child_id = node.children.get(index)
            if child_id is None:
                child = self._allocate(index)
                node.children[index] = child.node_id
                self.nodes[child.node_id] = child
            else:
                child = self._load(child_id)
            path.append(child)

        terminal = path[-1]
        position = bisect.bisect_left(terminal.entry_ids, entry_id)
        if position < len(terminal.entry_ids) and terminal.entry_ids[position] == entry_id:
            return False
        if not terminal.entry_ids:
            self.key_count += 1
        terminal.entry_ids.insert(position, entry_id)

        for node in reversed(path):
            self._rehash(node)
            self._store(node)
        return True

    def prefix_query(self, prefix, stats=None):
        indices = char_indices(prefix)
        stats = stats if stats is not None else DescentStats()
        claimed = self.root_digest()

        node = self._load(self.root_id)
        steps = []
        for index in indices:
            siblings = tuple(
                (other, self.nodes[child].node_digest)
                for other, child in sorted(node.children.items())
                if other != index
            )
            steps.append((tuple(node.entry_ids), siblings))
            child_id = node.children.get(index)
            if child_id is None:
                return [], PrefixVO(claimed, tuple(steps), None)
            node = self._load(child_id)
            stats.visits += 1

        subtree = []
        found = set()
        stack = [node]
        while stack:
            current = stack.pop()
            subtree.append((current.char, tuple(current.entry_ids), len(current.children)))
            found.update(current.entry_ids)
            stack.extend(self.nodes[child] for _, child in sorted(current.children.items(), reverse=True))
        return sorted(found), PrefixVO(claimed, tuple(steps), tuple(subtree))

    def recompute_root_digest(self):
        """Rebuild every digest bottom-up from node contents and return the root's."""
        computed = {}
        stack = [(self.root_id, False)]
        while stack:
            node_id, expanded = stack.pop()
            node = self.nodes[node_id]
            if expanded:
                children = [(index, computed[child]) for index, child in sorted(node.children.items())]
                computed[node_id] = trie_node_digest(node.char, node.entry_ids, children)
            else:
                stack.append((node_id, True))
                stack.extend((child, False) for child in node.children.values())
        return computed[self.root_id]


def verify_prefix(vo, trusted_root, prefix, results):
    try:
        if isinstance(vo, (bytes, bytearray, memoryview)):
            vo = PrefixVO.from_bytes(vo)
        return _verify(vo, trusted_root, prefix, list(results))
    except (MalformedProof, InvalidCharacter) as exc:
        logger.debug("prefix proof rejected: %s", exc)
        return False


def _verify(vo, trusted_root, prefix, results):
    if vo.claimed_root != trusted_root:
        return False
    indices = char_indices(prefix)

    if vo.subtree is not None:
        if len(vo.steps) != len(indices):
            return False
        expected_char = indices[-1] if indices else ROOT_CHAR
        current, found = _subtree_digest(vo.subtree, expected_char)
        if results != found:
            return False
        levels = len(indices)
    else:
        if results or not vo.steps or len(vo.steps) > len(indices):
            return False
        levels = len(vo.steps) - 1
        ids, siblings = vo.steps[levels]
        _check_siblings(siblings, indices[levels])
        current = trie_node_digest(_path_char(indices, levels), _checked_ids(ids), list(siblings))

    for level in range(levels - 1, -1, -1):
        ids, siblings = vo.steps[level]
        _check_siblings(siblings, indices[level])
        children = sorted(list(siblings) + [(indices[level], current)])
        current = trie_node_digest(_path_char(indices, level), _checked_ids(ids), children)
    return current == trusted_root


def _path_char(indices, level):
    return ROOT_CHAR if level == 0 else indices[level - 1]


def _subtree_digest(subtree, expected_char):
    """Recompute the digest of a pre-order flattened subtree without recursion."""
    found = set()
    completed = []
    for char, ids, child_count in reversed(subtree):
        _expect(child_count <= len(completed), "subtree child count exceeds available nodes")
        children = [completed.pop() for _ in range(child_count)]
        indices = [index for index, _ in children]
        _expect(all(index < len(ALPHABET) for index in indices), "child character outside the alphabet")
        _expect(all(a < b for a, b in zip(indices, indices[1:])), "children must ascend by character")
        found.update(_checked_ids(ids))
        completed.append((char, trie_node_digest(char, ids, children)))
    _expect(len(completed) == 1, "subtree must have exactly one root")
    char, root = completed[0]
    _expect(char == expected_char, "subtree root does not match the prefix")
    return root, sorted(found)


def _check_siblings(siblings, continued):
    indices = [index for index, _ in siblings]
    _expect(all(index < len(ALPHABET) for index in indices), "sibling character outside the alphabet")
    _expect(all(a < b for a, b in zip(indices, indices[1:])), "siblings must ascend by character")
    _expect(continued not in indices, "siblings include the continued child")


def _checked_ids(ids):
    _expect(all(a < b for a, b in zip(ids, ids[1:])), "entry ids must ascend strictly")
    return list(ids)


def _expect(condition, message):
    if not condition:
        raise MalformedProof(message)


def _is_uint(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _ids(item):
    _expect(isinstance(item, list) and all(_is_uint(i) for i in item), "entry ids must be a list of integers")
    return tuple(item)
