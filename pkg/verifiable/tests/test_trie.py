import random

from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from verifiable.exceptions import InvalidCharacter, InvalidEntry, KeyTooLong
from verifiable.trie import (
    MAX_KEY_LENGTH,
    DescentStats,
    PrefixVO,
    VerifiableTrie,
    address_trie_key,
    timestamp_trie_key,
    verify_prefix,
)

HEX = '0123456789abcdef'


keys_strategy = st.lists(st.text(alphabet=HEX, min_size=1, max_size=8), min_size=1, max_size=40)


def random_key(rng, low=4, high=12):
    return ''.join(rng.choice(HEX) for _ in range(rng.randint(low, high)))


def build(keys):
    trie = VerifiableTrie()
    for entry_id, key in enumerate(keys):
        trie.insert(key, entry_id)
    return trie


class InsertTests(SimpleTestCase):
    def test_rejects_bad_keys(self):
        trie = VerifiableTrie()
        with self.assertRaises(InvalidEntry):
            trie.insert('', 1)
        with self.assertRaises(KeyTooLong):
            trie.insert('a' * (MAX_KEY_LENGTH + 1), 1)
        with self.assertRaises(InvalidCharacter):
            trie.insert('abz', 1)

    def test_duplicate_pair_is_a_no_op(self):
        trie = VerifiableTrie()
        self.assertTrue(trie.insert('abc', 1))
        root = trie.root_digest()
        self.assertFalse(trie.insert('abc', 1))
        self.assertEqual(trie.root_digest(), root)
        self.assertTrue(trie.insert('abc', 2))
        self.assertEqual(trie.key_count, 1)

    def test_root_commits_to_every_pair(self):
        first = build(['abc', 'abd'])
        second = build(['abc', 'abe'])
        self.assertNotEqual(first.root_digest(), second.root_digest())

    def test_recomputed_root_matches(self):
        rng = random.Random(3)
        trie = build([random_key(rng) for _ in range(500)])
        self.assertEqual(trie.recompute_root_digest(), trie.root_digest())

    def test_namespaced_keys(self):
        self.assertEqual(timestamp_trie_key(1672531200), '-2023-01-01-00:00:00')
        self.assertEqual(address_trie_key('0x' + 'ab' * 20), ':' + 'ab' * 20)


class PrefixQueryTests(SimpleTestCase):
    def test_oracle_equivalence(self):
        rng = random.Random(5)
        keys = [random_key(rng) for _ in range(5000)]
        trie = build(keys)
        root = trie.root_digest()
        for _ in range(500):
            prefix = rng.choice(keys)[:rng.randint(0, 6)] if rng.random() < 0.8 else random_key(rng, 1, 6)
            results, vo = trie.prefix_query(prefix)
            expected = sorted(entry_id for entry_id, key in enumerate(keys) if key.startswith(prefix))
            self.assertEqual(results, expected, prefix)
            self.assertTrue(verify_prefix(vo, root, prefix, results))
            self.assertEqual(vo.matched, bool(expected))

    def test_key_that_is_a_prefix_of_another(self):
        trie = build(['ab', 'abc', 'abcd'])
        results, vo = trie.prefix_query('abc')
        self.assertEqual(results, [1, 2])
        self.assertTrue(verify_prefix(vo, trie.root_digest(), 'abc', results))
        self.assertFalse(verify_prefix(vo, trie.root_digest(), 'abc', [2]))

    def test_missing_prefix_proves_absence(self):
        trie = build(['abc', 'abd'])
        results, vo = trie.prefix_query('abf')
        self.assertEqual(results, [])
        self.assertFalse(vo.matched)
        self.assertTrue(verify_prefix(vo, trie.root_digest(), 'abf', []))
        self.assertFalse(verify_prefix(vo, trie.root_digest(), 'abc', []))

    def test_invalid_prefix_does_not_verify(self):
        trie = build(['abc'])
        _, vo = trie.prefix_query('a')
        self.assertFalse(verify_prefix(vo, trie.root_digest(), 'A', [0]))

    def test_descent_visits_equal_prefix_length(self):
        rng = random.Random(6)
        keys = [random_key(rng, 40, 40) for _ in range(200)]
        trie = build(keys)
        for length in range(1, 33):
            stats = DescentStats()
            trie.prefix_query(rng.choice(keys)[:length], stats)
            self.assertEqual(stats.visits, length)

    def test_vo_bytes_decode_to_the_same_proof(self):
        trie = build(['abc', 'abd', 'b'])
        _, vo = trie.prefix_query('ab')
        self.assertEqual(PrefixVO.from_bytes(vo.to_bytes()), vo)


class TamperTests(SimpleTestCase):
    def test_single_byte_and_result_mutations(self):
        rng = random.Random(13)
        keys = [random_key(rng, 3, 6) for _ in range(60)]
        trie = build(keys)
        root = trie.root_digest()
        for _ in range(100):
            prefix = rng.choice(keys)[:rng.randint(1, 3)] if rng.random() < 0.8 else random_key(rng, 2, 3)
            results, vo = trie.prefix_query(prefix)
            data = vo.to_bytes()
            self.assertTrue(verify_prefix(data, root, prefix, results))
            for position in range(len(data)):
                tampered = bytearray(data)
                tampered[position] ^= 0x01
                self.assertFalse(verify_prefix(bytes(tampered), root, prefix, results), (prefix, position))
            for position in range(len(results)):
                dropped = results[:position] + results[position + 1:]
                self.assertFalse(verify_prefix(data, root, prefix, dropped), (prefix, position))
            self.assertFalse(verify_prefix(data, root, prefix, results + [10**6]))


class PrefixPropertyTests(SimpleTestCase):
    @given(keys=keys_strategy, data=st.data())
    @settings(max_examples=200, deadline=None)
    def test_results_match_a_scan(self, keys, data):
        trie = build(keys)
        prefix = data.draw(st.sampled_from(keys).flatmap(
            lambda key: st.integers(0, len(key)).map(lambda cut: key[:cut])
        ) | st.text(alphabet=HEX, max_size=4))
        results, vo = trie.prefix_query(prefix)
        expected = sorted(entry_id for entry_id, key in enumerate(keys) if key.startswith(prefix))
        self.assertEqual(results, expected)
        self.assertTrue(verify_prefix(vo.to_bytes(), trie.root_digest(), prefix, results))
        self.assertEqual(vo.matched, bool(expected))

    @given(keys=keys_strategy)
    @settings(max_examples=100, deadline=None)
    def test_recomputed_root_matches(self, keys):
        trie = build(keys)
        self.assertEqual(trie.recompute_root_digest(), trie.root_digest())

    @given(keys=keys_strategy, data=st.data())
    @settings(max_examples=100, deadline=None)
    def test_flipped_bytes_are_rejected(self, keys, data):
        trie = build(keys)
        key = data.draw(st.sampled_from(keys))
        prefix = key[:data.draw(st.integers(1, len(key)))]
        results, vo = trie.prefix_query(prefix)
        encoded = vo.to_bytes()
        tampered = bytearray(encoded)
        tampered[data.draw(st.integers(0, len(encoded) - 1))] ^= 0x01
        self.assertFalse(verify_prefix(bytes(tampered), trie.root_digest(), prefix, results))
        dropped = data.draw(st.integers(0, len(results) - 1))
        self.assertFalse(verify_prefix(encoded, trie.root_digest(), prefix, results[:dropped] + results[dropped + 1:]))
