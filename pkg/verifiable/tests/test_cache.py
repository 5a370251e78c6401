import hashlib

from django.test import SimpleTestCase

from verifiable.core import Epoch
from verifiable.middleware import Engine, PlanStep, parse, plan
from verifiable.middleware.cache import BloomFilter, QueryCache, fingerprint
from verifiable.middleware.planner import DEFAULT_STEP_COSTS, SELECT_STEPS, step_costs
from verifiable.middleware.statements import Delete, Insert, SelectSimple, SelectTimeRange

ADDRESS = '0x' + 'cd' * 20


class BloomFilterTests(SimpleTestCase):
    def test_no_false_negatives(self):
        bloom = BloomFilter(size_bits=2**16, hash_count=5)
        keys = [hashlib.sha256(str(i).encode()).digest() for i in range(10000)]
        for key in keys:
            bloom.add(key)
        self.assertTrue(all(key in bloom for key in keys))

    def test_rejects_empty_filter(self):
        with self.assertRaises(ValueError):
            BloomFilter(size_bits=0)


class QueryCacheTests(SimpleTestCase):
    def setUp(self):
        self.cache = QueryCache(bloom_bits=2**12, bloom_hashes=3)
        self.statement = SelectTimeRange(0, 100)

    def test_admitted_result_hits(self):
        key = self.cache.fingerprint(self.statement)
        self.assertIsNone(self.cache.lookup(key))
        self.cache.admit(key, 'rows')
        self.assertEqual(self.cache.lookup(key), 'rows')
        self.assertEqual((self.cache.hits, self.cache.misses), (1, 1))

    def test_epoch_advance_invalidates(self):
        key = self.cache.fingerprint(self.statement)
        self.cache.admit(key, 'rows')
        self.cache.advance_epoch()
        self.assertIsNone(self.cache.lookup(key))
        self.assertNotEqual(self.cache.fingerprint(self.statement), key)

    def test_stale_admission_is_not_stored(self):
        old = self.cache.current_epoch
        self.cache.advance_epoch()
        key = fingerprint(self.statement, old)
        self.cache.admit(key, 'rows', old)
        self.assertIsNone(self.cache.lookup(key))

    def test_fingerprint_depends_on_statement_and_epoch(self):
        self.assertEqual(fingerprint(self.statement, Epoch(2)), fingerprint(SelectTimeRange(0, 100), Epoch(2)))
        self.assertNotEqual(fingerprint(self.statement, Epoch(2)), fingerprint(self.statement, Epoch(3)))
        self.assertNotEqual(fingerprint(self.statement, Epoch(2)), fingerprint(SelectTimeRange(0, 101), Epoch(2)))


class EngineCacheTests(SimpleTestCase):
    def setUp(self):
        self.engine = Engine(threshold_t=4, branching=4)
        self.addCleanup(self.engine.close)
        for offset in range(12):
            self.engine.execute_sql(
                f"INSERT INTO entries (amount, addresses, timestamp) VALUES ({offset}, '{ADDRESS}', {1000 + offset})"
            )

    def test_cache_hit_matches_the_index_path(self):
        statement = parse('SELECT * FROM entries WHERE timestamp BETWEEN 1002 AND 1008')
        first = self.engine.execute(statement)
        second = self.engine.execute(statement)
        self.assertIs(second, first)
        self.assertEqual(self.engine.cache.hits, 1)

        self.engine.use_cache = False
        uncached = self.engine.execute(statement)
        self.assertEqual(uncached.entry_ids, first.entry_ids)
        self.assertEqual(uncached.vo_bytes, first.vo_bytes)

    def test_mutation_invalidates_cached_results(self):
        statement = parse('SELECT * FROM entries WHERE timestamp BETWEEN 1000 AND 2000')
        before = self.engine.execute(statement)
        self.engine.execute_sql(f"INSERT INTO entries (amount, addresses, timestamp) VALUES (1, '{ADDRESS}', 1500)")
        after = self.engine.execute(statement)
        self.assertEqual(len(after.rows), len(before.rows) + 1)
        self.assertEqual(self.engine.cache.hits, 0)


class PlannerTests(SimpleTestCase):
    def test_select_plan(self):
        execution = plan(SelectSimple(entry_id=1))
        self.assertEqual(execution.steps, SELECT_STEPS)
        self.assertEqual(execution.steps[0], PlanStep.CACHE_PROBE)
        self.assertEqual(execution.steps[-1], PlanStep.VO_ATTACH)
        self.assertEqual(execution.est_cost, sum(DEFAULT_STEP_COSTS[step] for step in SELECT_STEPS))

    def test_insert_plan_prices_payload_puts(self):
        bare = plan(Insert(amount=1, addresses=(ADDRESS,), timestamp=1))
        with_image = plan(Insert(amount=1, addresses=(ADDRESS,), timestamp=1, image=b'x'))
        self.assertEqual(
            [step.value for step in bare.steps],
            ['index-insert', 'index-insert', 'anchor', 'ledger-append'],
        )
        self.assertEqual(with_image.steps[0], PlanStep.OFF_CHAIN_PUT)
        self.assertEqual(with_image.est_cost - bare.est_cost, DEFAULT_STEP_COSTS[PlanStep.OFF_CHAIN_PUT])

    def test_plans_are_deterministic(self):
        statement = parse("UPDATE entries SET video = 'ff' WHERE entry_id = 2")
        self.assertEqual(plan(statement), plan(statement))
        self.assertEqual(plan(Delete(3)).as_dict(), {'steps': ['anchor', 'ledger-append'], 'est_cost': 200})

    def test_cost_overrides(self):
        costs = step_costs({'merge': 20, PlanStep.VO_ATTACH: 0})
        self.assertEqual(plan(SelectTimeRange(0, 1), costs).est_cost, 1 + 50 + 500 + 20)
