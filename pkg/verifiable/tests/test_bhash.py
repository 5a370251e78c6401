import random
from dataclasses import replace

from django.test import SimpleTestCase
from hypothesis import example, given, settings
from hypothesis import strategies as st

from verifiable.bhash import (
    EMPTY_BUCKETS,
    BHashTree,
    BucketBranch,
    FlatBuckets,
    HashNodeProof,
    HiddenBucket,
    IndexMode,
    PrunedProof,
    RangeVO,
    _prove_bucket_tree,
    verify_range,
)
from verifiable.core import MAX_KEY, ZERO_DIGEST
from verifiable.exceptions import DuplicateEntry


def build(timestamps, **options):
    tree = BHashTree(**options)
    for entry_id, timestamp in enumerate(timestamps):
        tree.insert(entry_id, timestamp)
    return tree


def ordered(timestamps):
    return sorted((timestamp, entry_id) for entry_id, timestamp in enumerate(timestamps))


def oracle(pairs, start, end):
    return [entry_id for timestamp, entry_id in pairs if start <= timestamp <= end]


class ConversionTests(SimpleTestCase):
    def test_eleventh_insert_converts_the_tree(self):
        tree = BHashTree(threshold_t=10)
        for entry_id in range(10):
            tree.insert(entry_id, 100 + entry_id)
            self.assertFalse(tree.converted)
            self.assertFalse(any(node.is_hash_node for node in tree.nodes.values()))
        tree.insert(10, 110)
        self.assertTrue(tree.converted)
        leaves = [node for node in tree.nodes.values() if node.is_leaf]
        self.assertTrue(all(node.is_hash_node for node in leaves))

    def test_single_root_leaf_before_conversion(self):
        tree = build(range(10), threshold_t=10, branching=16)
        self.assertEqual(tree.node_count, 1)
        self.assertTrue(tree.nodes[tree.root_id].is_leaf)

    def test_bucket_digests_carry_over_from_key_groups(self):
        tree = build([5, 5, 7, 9, 9, 9, 11, 13, 15, 17], threshold_t=10)
        groups = dict(tree.nodes[tree.root_id].group_digests)
        tree.insert(10, 19)
        node = tree.nodes[tree.root_id]
        for key, group_digest in groups.items():
            self.assertEqual(node.bucket_digests[key], group_digest)
        self.assertEqual(node.hash_buckets[9], [3, 4, 5])

    def test_fingerprint_is_kept_on_conversion(self):
        tree = build(range(11), threshold_t=10)
        self.assertIsNotNone(tree.nodes[tree.root_id].fingerprint)

    def test_bplus_only_variant_never_converts(self):
        tree = build(range(200), threshold_t=10, branching=4, convert=False)
        self.assertFalse(tree.converted)
        self.assertGreater(tree.node_count, 1)

    def test_recomputed_root_matches_incremental_root(self):
        rng = random.Random(1)
        timestamps = [rng.randrange(0, 500) for _ in range(300)]
        for options in ({'threshold_t': 10}, {'threshold_t': 120, 'branching': 4}, {'convert': False, 'branching': 4}):
            tree = build(timestamps, **options)
            self.assertEqual(tree.recompute_root_digest(), tree.root_digest(), options)

    def test_duplicate_entry_id_is_rejected(self):
        tree = build([1, 2, 3])
        with self.assertRaises(DuplicateEntry):
            tree.insert(1, 9)
        self.assertIn(2, tree)
        self.assertEqual(tree.entry_count, 3)

    def test_first_insert_lands_in_the_root_leaf(self):
        tree = build([1000])
        root = tree.nodes[tree.root_id]
        self.assertEqual((root.keys, root.entry_ids), ([1000], [0]))

    def test_every_insert_changes_the_root(self):
        rng = random.Random(2)
        tree = BHashTree(branching=4)
        digests = {tree.root_digest()}
        for entry_id in range(1000):
            tree.insert(entry_id, rng.randrange(0, 300))
            digests.add(tree.root_digest())
        self.assertEqual(len(digests), 1001)


class RangeQueryTests(SimpleTestCase):
    def test_empty_tree(self):
        tree = BHashTree()
        results, vo = tree.range_query(0, MAX_KEY)
        self.assertEqual(results, [])
        self.assertTrue(verify_range(vo, tree.root_digest(), 0, MAX_KEY, results))

    def test_inverted_range_gets_vacuous_proof(self):
        tree = build(range(20))
        results, vo = tree.range_query(10, 5)
        self.assertEqual(results, [])
        self.assertIsNone(vo.body)
        self.assertTrue(verify_range(vo, tree.root_digest(), 10, 5, []))
        self.assertFalse(verify_range(vo, tree.root_digest(), 10, 5, [3]))

    def test_oracle_equivalence_after_conversion(self):
        rng = random.Random(7)
        timestamps = [rng.randrange(0, 40000) for _ in range(10000)]
        tree = build(timestamps, threshold_t=10)
        pairs = ordered(timestamps)
        root = tree.root_digest()
        for _ in range(500):
            start = rng.randrange(0, 40000)
            end = start + rng.randrange(0, 200)
            results, vo = tree.range_query(start, end)
            self.assertEqual(results, oracle(pairs, start, end))
            self.assertTrue(verify_range(vo, root, start, end, results))
            self.assertEqual(vo.mode, IndexMode.POST)

    def test_oracle_equivalence_before_conversion(self):
        rng = random.Random(8)
        timestamps = [rng.randrange(0, 5000) for _ in range(2000)]
        tree = build(timestamps, branching=4, convert=False)
        pairs = ordered(timestamps)
        root = tree.root_digest()
        for _ in range(200):
            start, end = sorted(rng.randrange(-10, 5010) for _ in range(2))
            results, vo = tree.range_query(start, end)
            self.assertEqual(results, oracle(pairs, start, end))
            self.assertTrue(verify_range(vo, root, start, end, results))
            self.assertEqual(vo.mode, IndexMode.PRE)

    def test_oracle_equivalence_with_several_hash_nodes(self):
        rng = random.Random(9)
        timestamps = [rng.randrange(0, 3000) for _ in range(600)]
        tree = build(timestamps, threshold_t=100, branching=4)
        pairs = ordered(timestamps)
        self.assertGreater(sum(node.is_hash_node for node in tree.nodes.values()), 1)
        root = tree.root_digest()
        for _ in range(200):
            start, end = sorted(rng.randrange(0, 3000) for _ in range(2))
            results, vo = tree.range_query(start, end)
            self.assertEqual(results, oracle(pairs, start, end))
            self.assertTrue(verify_range(vo, root, start, end, results))

    def test_vo_against_stale_root_fails(self):
        tree = build(range(30))
        stale = tree.root_digest()
        tree.insert(30, 15)
        results, vo = tree.range_query(10, 20)
        self.assertFalse(verify_range(vo, stale, 10, 20, results))

    def test_boundary_keys_and_frontier(self):
        tree = build([10, 20, 30, 40, 50], threshold_t=10)
        results, vo = tree.range_query(25, 35)
        self.assertEqual(results, [2])
        self.assertEqual(vo.boundary_keys, (20, 40))
        self.assertEqual(vo.in_range_entries, [(30, 2)])
        self.assertEqual(len(vo.frontier_digests), 4)

    def test_vo_bytes_decode_to_the_same_proof(self):
        tree = build(range(0, 400, 3), threshold_t=10)
        _, vo = tree.range_query(100, 200)
        self.assertEqual(RangeVO.from_bytes(vo.to_bytes()), vo)
        self.assertEqual(vo.byte_size, len(vo.to_bytes()))


class CanonicalProofTests(SimpleTestCase):
    def setUp(self):
        self.tree = build(range(0, 100, 2), threshold_t=10)
        self.root = self.tree.root_digest()

    def test_pruning_an_overlapping_subtree_is_rejected(self):
        results, vo = self.tree.range_query(20, 40)
        node = self.tree.nodes[self.tree.root_id]
        body = HashNodeProof(vo.body.fingerprint, vo.body.bucket_count, PrunedProof(node.bucket_root))
        forged = replace(vo, body=body)
        self.assertFalse(verify_range(forged, self.root, 20, 40, []))
        self.assertTrue(verify_range(vo, self.root, 20, 40, results))

    def test_empty_marker_is_required_for_empty_subtrees(self):
        tree = build(range(11))
        results, vo = tree.range_query(1000, 2000)
        buckets = vo.body.buckets
        self.assertIsInstance(buckets, BucketBranch)
        self.assertEqual(buckets.right, EMPTY_BUCKETS)
        forged_buckets = BucketBranch(buckets.left, PrunedProof(ZERO_DIGEST))
        forged = replace(vo, body=HashNodeProof(vo.body.fingerprint, vo.body.bucket_count, forged_buckets))
        self.assertFalse(verify_range(forged, tree.root_digest(), 1000, 2000, results))
        self.assertTrue(verify_range(vo, tree.root_digest(), 1000, 2000, results))

    def test_zero_digest_cannot_stand_in_for_a_pruned_subtree(self):
        _, vo = self.tree.range_query(1000, 2000)
        forged = replace(vo, body=HashNodeProof(vo.body.fingerprint, vo.body.bucket_count, PrunedProof(ZERO_DIGEST)))
        self.assertFalse(verify_range(forged, self.root, 1000, 2000, []))


class TamperTests(SimpleTestCase):
    def check_pairs(self, tree, rng, span):
        root = tree.root_digest()
        for _ in range(100):
            start = rng.randrange(0, span)
            end = start + rng.randrange(0, span // 4)
            results, vo = tree.range_query(start, end)
            data = vo.to_bytes()
            self.assertTrue(verify_range(data, root, start, end, results))
            for position in range(len(data)):
                tampered = bytearray(data)
                tampered[position] ^= 0x01
                self.assertFalse(verify_range(bytes(tampered), root, start, end, results), position)
            for position in range(len(results)):
                dropped = results[:position] + results[position + 1:]
                self.assertFalse(verify_range(data, root, start, end, dropped), position)
            if results:
                self.assertFalse(verify_range(data, root, start, end, results[:-1] + [results[-1] + 1000]))
            self.assertFalse(verify_range(data, root, start, end, results + [10**6]))

    def test_single_byte_mutations_after_conversion(self):
        rng = random.Random(11)
        tree = build([rng.randrange(0, 400) for _ in range(40)], threshold_t=10)
        self.check_pairs(tree, rng, 400)

    def test_single_byte_mutations_before_conversion(self):
        rng = random.Random(12)
        tree = build([rng.randrange(0, 400) for _ in range(40)], branching=4, convert=False)
        self.check_pairs(tree, rng, 400)


class CostTrendTests(SimpleTestCase):
    def insert_writes(self, tree, timestamps, first_id):
        writes = []
        for offset, timestamp in enumerate(timestamps):
            before = tree.meter.storage_writes
            tree.insert(first_id + offset, timestamp)
            writes.append(tree.meter.storage_writes - before)
        return sum(writes) / len(writes)

    def test_post_conversion_insert_writes_are_constant(self):
        rng = random.Random(21)
        tree = BHashTree(threshold_t=10)
        measured = []
        size = 0
        for target in (100, 1000, 10000):
            while size < target:
                tree.insert(size, rng.randrange(0, 10**7))
                size += 1
            before = tree.meter.storage_writes
            tree.insert(size, rng.randrange(0, 10**7))
            measured.append(tree.meter.storage_writes - before)
            size += 1
        self.assertLessEqual(max(measured) - min(measured), 1)

    def test_pre_conversion_insert_writes_grow_with_depth(self):
        rng = random.Random(22)
        tree = BHashTree(branching=16, convert=False)
        measured = []
        size = 0
        for target in (100, 1000, 10000):
            while size < target:
                tree.insert(size, rng.randrange(0, 10**9))
                size += 1
            batch = [rng.randrange(0, 10**9) for _ in range(50)]
            measured.append(self.insert_writes(tree, batch, size))
            size += len(batch)
        self.assertEqual(measured, sorted(measured))
        self.assertLess(measured[0], measured[-1])


class VOTrendTests(SimpleTestCase):
    def vo_bytes(self, tree, ranges):
        return [tree.range_query(start, end)[1].byte_size for start, end in ranges]

    def test_identical_vo_below_threshold(self):
        timestamps = [5, 9, 9, 14, 30, 31, 40]
        ranges = [(0, 10), (9, 9), (15, 35), (41, 50)]
        converting = build(timestamps, threshold_t=10)
        plain = build(timestamps, threshold_t=10, convert=False)
        for start, end in ranges:
            self.assertEqual(converting.range_query(start, end)[1].to_bytes(), plain.range_query(start, end)[1].to_bytes())

    def test_converted_vo_is_no_larger_than_bplus_vo(self):
        rng = random.Random(31)
        timestamps = sorted(1672531200 + rng.randrange(0, 120000) for _ in range(2000))
        ranges = []
        for _ in range(50):
            start = rng.randrange(1672531200, 1672531200 + 120000)
            ranges.append((start, start + rng.randrange(0, 5000)))
        converted = self.vo_bytes(build(timestamps, threshold_t=10), ranges)
        bplus = self.vo_bytes(build(timestamps, threshold_t=10, convert=False), ranges)
        self.assertLessEqual(sum(converted), sum(bplus))
        narrow = [(start, start + 60) for start, _ in ranges]
        self.assertLessEqual(
            sum(self.vo_bytes(build(timestamps, threshold_t=10), narrow)),
            sum(self.vo_bytes(build(timestamps, threshold_t=10, convert=False), narrow)),
        )

    @given(
        timestamps=st.lists(st.sampled_from(range(0, 160, 10)), min_size=11, max_size=40),
        bounds=st.tuples(st.integers(0, 170), st.integers(0, 170)).map(sorted),
    )
    @example(timestamps=[12, 52, 42, 12, 39, 8, 37, 91, 43, 52, 52], bounds=[39, 47])
    @settings(max_examples=300, deadline=None)
    def test_each_converted_vo_is_bounded_by_the_bplus_vo(self, timestamps, bounds):
        # Up to branching distinct keys keep both trees a single node.
        start, end = bounds
        results, converted = build(timestamps, threshold_t=10).range_query(start, end)
        bplus = build(timestamps, threshold_t=10, convert=False).range_query(start, end)[1].byte_size
        distinct = len(set(timestamps))
        self.assertLessEqual(converted.byte_size, bplus + 38 - 6 * distinct - len(results))
        if distinct >= 7:
            self.assertLessEqual(converted.byte_size, bplus)


class ProofFormTests(SimpleTestCase):
    def test_small_freshly_converted_node_uses_the_flat_listing(self):
        timestamps = [12, 52, 42, 12, 39, 8, 37, 91, 43, 52, 52]
        tree = build(timestamps, threshold_t=10)
        results, vo = tree.range_query(39, 47)
        self.assertEqual(sorted(results), [2, 4, 8])
        self.assertIsInstance(vo.body.buckets, FlatBuckets)
        self.assertEqual(vo.body.bucket_count, 8)
        self.assertEqual(RangeVO.from_bytes(vo.to_bytes()), vo)
        self.assertTrue(verify_range(vo.to_bytes(), tree.root_digest(), 39, 47, results))

        node = tree.nodes[tree.root_id]
        tree_form = _prove_bucket_tree(
            node.bucket_subtree,
            node.bucket_digests.__getitem__,
            lambda key: tuple(node.hash_buckets[key]),
            vo.start_key,
            vo.end_key,
        )
        forged = replace(vo, body=replace(vo.body, buckets=tree_form))
        self.assertFalse(verify_range(forged, tree.root_digest(), 39, 47, results))

    def test_larger_flat_listing_is_rejected(self):
        tree = build(range(11))
        _, vo = tree.range_query(1000, 2000)
        node = tree.nodes[tree.root_id]
        flat = FlatBuckets(tuple(HiddenBucket(key, node.bucket_digests[key]) for key in node.bucket_keys))
        forged = replace(vo, body=replace(vo.body, buckets=flat))
        self.assertFalse(verify_range(forged, tree.root_digest(), 1000, 2000, []))
        self.assertTrue(verify_range(vo, tree.root_digest(), 1000, 2000, []))

    def test_bucket_count_is_committed(self):
        tree = build([12, 52, 42, 12, 39, 8, 37, 91, 43, 52, 52], threshold_t=10)
        results, vo = tree.range_query(39, 47)
        for count in (7, 9):
            forged = replace(vo, body=replace(vo.body, bucket_count=count))
            self.assertFalse(verify_range(forged, tree.root_digest(), 39, 47, results))

    def test_flat_listing_must_show_every_in_range_bucket(self):
        tree = build([12, 52, 42, 12, 39, 8, 37, 91, 43, 52, 52], threshold_t=10)
        results, vo = tree.range_query(39, 47)
        node = tree.nodes[tree.root_id]
        hidden = tuple(
            HiddenBucket(bucket.key, node.bucket_digests[bucket.key]) if bucket.key == 42 else bucket
            for bucket in vo.body.buckets.buckets
        )
        forged = replace(vo, body=replace(vo.body, buckets=FlatBuckets(hidden)))
        self.assertFalse(verify_range(forged, tree.root_digest(), 39, 47, [4, 8]))


class RangePropertyTests(SimpleTestCase):
    trees = st.fixed_dictionaries({
        'timestamps': st.lists(st.integers(0, 400), max_size=60),
        'threshold_t': st.sampled_from([4, 10, 30]),
        'branching': st.sampled_from([4, 16]),
        'convert': st.booleans(),
    })

    @given(tree=trees, start=st.integers(-5, 405), width=st.integers(0, 150))
    @settings(max_examples=200, deadline=None)
    def test_results_match_a_sorted_scan(self, tree, start, width):
        options = dict(tree)
        timestamps = options.pop('timestamps')
        built = build(timestamps, **options)
        end = start + width
        results, vo = built.range_query(start, end)
        self.assertEqual(results, oracle(ordered(timestamps), start, end))
        self.assertTrue(verify_range(vo.to_bytes(), built.root_digest(), start, end, results))

    @given(tree=trees)
    @settings(max_examples=100, deadline=None)
    def test_recomputed_root_matches_incremental_root(self, tree):
        options = dict(tree)
        built = build(options.pop('timestamps'), **options)
        self.assertEqual(built.recompute_root_digest(), built.root_digest())

    @given(
        timestamps=st.lists(st.integers(0, 200), min_size=1, max_size=30),
        convert=st.booleans(),
        start=st.integers(0, 200),
        width=st.integers(0, 60),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_flipped_bytes_are_rejected(self, timestamps, convert, start, width, data):
        tree = build(timestamps, threshold_t=10, branching=4, convert=convert)
        end = start + width
        results, vo = tree.range_query(start, end)
        encoded = vo.to_bytes()
        position = data.draw(st.integers(0, len(encoded) - 1))
        tampered = bytearray(encoded)
        tampered[position] ^= data.draw(st.sampled_from([0x01, 0x80]))
        self.assertFalse(verify_range(bytes(tampered), tree.root_digest(), start, end, results))

    @given(
        timestamps=st.lists(st.integers(0, 200), min_size=1, max_size=30),
        convert=st.booleans(),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_altered_results_are_rejected(self, timestamps, convert, data):
        tree = build(timestamps, threshold_t=10, branching=4, convert=convert)
        start = data.draw(st.sampled_from(timestamps))
        end = start + data.draw(st.integers(0, 60))
        results, vo = tree.range_query(start, end)
        root = tree.root_digest()
        dropped = data.draw(st.integers(0, len(results) - 1))
        self.assertFalse(verify_range(vo, root, start, end, results[:dropped] + results[dropped + 1:]))
        self.assertFalse(verify_range(vo, root, start, end, results + [len(timestamps)]))


class ReadTrendTests(SimpleTestCase):
    def test_post_conversion_reads_grow_linearly_with_results(self):
        tree = build(range(5000), threshold_t=10)
        for revealed in (10, 100, 1000):
            before = tree.meter.storage_reads
            results, _ = tree.range_query(2000, 2000 + revealed - 1)
            reads = tree.meter.storage_reads - before
            self.assertEqual(len(results), revealed)
            # One read per revealed bucket plus the node path.
            self.assertGreaterEqual(reads, revealed)
            self.assertLessEqual(reads, revealed + 2)
