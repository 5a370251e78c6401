"""
Query engine: runs parsed statements against the ledger, both indexes and the
content store.

Every statement runs as the steps of its plan, in plan order. A select
looks up the cache, then runs the index query under the engine lock and checks
its proof against the roots anchored at the height it read, after releasing the
lock. Payloads are fetched concurrently and rows come back in entry_id order.
Every mutation validates its entries before storing any payload, then appends
one block anchoring the new index roots and advances the epoch.

Indexes are append-only. Delete retires an entry_id in a new block; Update
appends the changed entry under a new entry_id and retires the old one in the
same block. Selects filter retired ids.
"""

import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from ..bhash import BHashTree, verify_range
from ..conf import INDEX_VARIANTS, get_setting
from ..content_store import MAX_PAYLOAD_BYTES, ContentStore, MediaKind, write_atomically
from ..core import ContentId, DataEntry, Epoch
from ..exceptions import (
    ChainBroken,
    ContentNotFound,
    EntryNotFound,
    IntegrityFailure,
    InvalidEntry,
    PayloadIntegrityFailure,
    PayloadTooLarge,
    VerificationFailed,
)
from ..gas import CostTable, GasMeter
from ..ledger import Ledger, index_by_prefix, index_entry
from ..trie import VerifiableTrie, verify_prefix
from .cache import DEFAULT_BLOOM_BITS, DEFAULT_BLOOM_HASHES, QueryCache
from .parser import parse
from .planner import PlanStep, plan, plan_batch, step_costs
from .results import MutationReceipt, ResultRow, ResultSet
from .statements import Delete, Insert, SelectFuzzy, SelectSimple, SelectTimeRange, Update, is_select

logger = logging.getLogger(__name__)

BLOCK_LOG = 'blocks.bin'
BLOCK_EXPORT = 'blocks.jsonl'
ENGINE_CONFIG = 'engine.json'
COMPONENTS = ('bhash', 'trie', 'ledger')
INDEX_PARAMETERS = ('threshold_t', 'branching', 'index_variant')

# Update columns onto Insert fields.
_COLUMN_FIELDS = {
    'amount': 'amount',
    'addresses': 'addresses',
    'timestamp': 'timestamp',
    'imagecid': 'image_cid',
    'videocid': 'video_cid',
    'image': 'image',
    'video': 'video',
}


class Engine:
    def __init__(
        self,
        threshold_t=10,
        branching=16,
        index_variant='bhash',
        store=None,
        ledger=None,
        cost_table=None,
        plan_costs=None,
        use_cache=True,
        bloom_bits=DEFAULT_BLOOM_BITS,
        bloom_hashes=DEFAULT_BLOOM_HASHES,
        fetch_workers=8,
    ):
        if index_variant not in INDEX_VARIANTS:
            raise ValueError(f"index_variant must be one of {', '.join(INDEX_VARIANTS)}")
        self.threshold_t = threshold_t
        self.branching = branching
        self.index_variant = index_variant
        self.cost_table = cost_table or CostTable()
        self.meters = {name: GasMeter(self.cost_table) for name in COMPONENTS}
        self.store = store if store is not None else ContentStore.in_memory()
        self.cache = QueryCache(bloom_bits, bloom_hashes)
        self.use_cache = use_cache
        self.plan_costs = step_costs(plan_costs)
        self.state_dir = None
        self.epoch = Epoch()
        self._lock = threading.RLock()
        self._executor = ThreadPoolExecutor(max_workers=fetch_workers, thread_name_prefix='payload-fetch')

        self.bhash = BHashTree(
            threshold_t=threshold_t,
            branching=branching,
            convert=index_variant == 'bhash',
            meter=self.meters['bhash'],
        )
        self.trie = VerifiableTrie(meter=self.meters['trie'])
        if ledger is None or len(ledger) == 0:
            self.ledger = ledger if ledger is not None else Ledger()
            self.ledger.meter = self.meters['ledger']
            self.ledger.append_block([], self.index_roots())
        else:
            self.ledger = ledger
            self.ledger.meter = self.meters['ledger']
            self._replay()

    @classmethod
    def from_settings(cls, **overrides):
        options = {
            'threshold_t': get_setting('THRESHOLD_T'),
            'branching': get_setting('BRANCHING'),
            'index_variant': get_setting('INDEX_VARIANT'),
            'cost_table': CostTable.from_dict(get_setting('GAS_COST_TABLE')),
            'plan_costs': get_setting('PLAN_COST_TABLE'),
            'use_cache': get_setting('USE_CACHE'),
            'bloom_bits': get_setting('BLOOM_BITS'),
            'bloom_hashes': get_setting('BLOOM_HASHES'),
            'fetch_workers': get_setting('FETCH_WORKERS'),
            'max_payload_bytes': get_setting('MAX_PAYLOAD_BYTES'),
        }
        options.update(overrides)
        state_dir = options.pop('state_dir', get_setting('STATE_DIR'))
        if state_dir:
            return cls.open(state_dir, **options)
        store = ContentStore.in_memory(max_payload_bytes=options.pop('max_payload_bytes'))
        return cls(store=store, **options)

    @classmethod
    def open(cls, state_dir, **options):
        """Load the engine persisted in ``state_dir``, replaying its block log; start fresh if there is none."""
        state_dir = Path(state_dir)
        config_path = state_dir / ENGINE_CONFIG
        if config_path.exists():
            stored = json.loads(config_path.read_text())
            for name in INDEX_PARAMETERS:
                if name in options and options[name] != stored[name]:
                    logger.warning("ignoring %s=%s; %s was built with %s", name, options[name], state_dir, stored[name])
                options[name] = stored[name]
        store = ContentStore(state_dir, max_payload_bytes=options.pop('max_payload_bytes', MAX_PAYLOAD_BYTES))
        log_path = state_dir / BLOCK_LOG
        ledger = Ledger.load(log_path) if log_path.exists() else None
        engine = cls(store=store, ledger=ledger, **options)
        engine.state_dir = state_dir
        return engine

    def save(self, state_dir=None):
        state_dir = Path(state_dir or self.state_dir)
        state_dir.mkdir(parents=True, exist_ok=True)
        with self._lock:
            self.ledger.save(state_dir / BLOCK_LOG)
            export = io.StringIO()
            self.ledger.export_jsonl(export)
            write_atomically(state_dir / BLOCK_EXPORT, export.getvalue().encode())
            config = {name: getattr(self, name) for name in INDEX_PARAMETERS}
            write_atomically(state_dir / ENGINE_CONFIG, json.dumps(config, indent=2).encode())
        self.state_dir = state_dir

    def close(self):
        self._executor.shutdown(wait=True)

    def index_roots(self):
        return self.bhash.root_digest(), self.trie.root_digest()

    def _replay(self):
        for block in self.ledger:
            for entry in block.entries:
                index_entry(self.bhash, self.trie, entry)
            if self.index_roots() != tuple(block.anchored_roots):
                raise ChainBroken(block.height, "anchored roots differ from the replayed indexes")
        self.epoch = Epoch(self.ledger.height)
        self.cache.advance_epoch(self.epoch)
        logger.info("replayed %s blocks holding %s entries", len(self.ledger), self.ledger.next_entry_id)

    def stats(self):
        with self._lock:
            return {
                'height': self.ledger.height,
                'entries': self.ledger.next_entry_id,
                'retired': len(self.ledger.retired()),
                'epoch': self.epoch.value,
                'index_variant': self.index_variant,
                'converted': self.bhash.converted,
                'bhash_nodes': self.bhash.node_count,
                'trie_keys': self.trie.key_count,
                'cache_hits': self.cache.hits,
                'cache_misses': self.cache.misses,
            }

    # statements

    def explain(self, statement):
        return plan(statement, self.plan_costs)

    def execute_sql(self, sql):
        return self.execute(parse(sql))

    def execute(self, statement, trace=None):
        """Run ``statement`` by dispatching the steps of its plan; executed steps are appended to ``trace``."""
        if not isinstance(statement, (Insert, Update, Delete)) and not is_select(statement):
            raise TypeError(f"cannot execute {type(statement).__name__}")
        if isinstance(statement, Insert):
            return self.insert_many([statement], trace)
        run = _Run(statement, self.explain(statement), trace)
        if is_select(statement):
            return self._run_select(run)
        return self._run_mutation(run)

    def select(self, statement, trace=None):
        return self.execute(statement, trace)

    def insert_many(self, statements, trace=None):
        """Append all ``statements`` as one block; returns a single receipt."""
        statements = list(statements)
        return self._run_mutation(_Run(statements, plan_batch(statements, self.plan_costs), trace))

    def ingest(self, statements, entries_per_block):
        receipts = []
        batch = []
        for statement in statements:
            batch.append(statement)
            if len(batch) == entries_per_block:
                receipts.append(self.insert_many(batch))
                batch = []
        if batch:
            receipts.append(self.insert_many(batch))
        logger.info("ingested %s blocks, ledger height %s", len(receipts), self.ledger.height)
        return receipts

    def _dispatch(self, run, handlers):
        for step in run.plan.steps:
            done = handlers[step](run)
            if run.trace is not None:
                run.trace.append(step)
            if done:
                return

    # selects

    def _run_select(self, run):
        self._dispatch(run, {
            PlanStep.CACHE_PROBE: self._probe_cache,
            PlanStep.INDEX_LOOKUP: self._lookup,
            PlanStep.OFF_CHAIN_FETCH: self._fetch_payloads,
            PlanStep.MERGE: self._merge,
            PlanStep.VO_ATTACH: self._attach_vo,
        })
        return run.result

    def _probe_cache(self, run):
        run.epoch = self.epoch
        run.cache_key = self.cache.fingerprint(run.statement, run.epoch)
        if self.use_cache:
            run.result = self.cache.lookup(run.cache_key)
        return run.result is not None

    def _lookup(self, run):
        # The indexes are single-writer; only the query itself holds the lock.
        with self._lock:
            if run.epoch != self.epoch:
                run.epoch = self.epoch
                run.cache_key = self.cache.fingerprint(run.statement, run.epoch)
            run.height = self.ledger.height
            bhash_root, trie_root = self.ledger.trusted_root(run.height)
            statement = run.statement
            if isinstance(statement, SelectFuzzy):
                entry_ids, run.vo = self.trie.prefix_query(statement.trie_prefix)
            else:
                if isinstance(statement, SelectTimeRange):
                    start, end = statement.start_time, statement.end_time
                elif statement.timestamp is not None:
                    start = end = statement.timestamp
                else:
                    start = end = self.ledger.entry(statement.entry_id).timestamp
                entry_ids, run.vo = self.bhash.range_query(start, end)
            run.entries = [
                self.ledger.entry(entry_id)
                for entry_id in sorted(set(entry_ids))
                if not self.ledger.is_retired(entry_id)
            ]

        if isinstance(statement, SelectFuzzy):
            if not verify_prefix(run.vo, trie_root, statement.trie_prefix, entry_ids):
                self._reject(
                    f"prefix proof for {statement.trie_prefix!r} does not match the root anchored at height {run.height}"
                )
            return False
        if not verify_range(run.vo, bhash_root, start, end, entry_ids):
            self._reject(f"range proof for [{start}, {end}] does not match the root anchored at height {run.height}")
        if isinstance(statement, SelectSimple) and statement.entry_id is not None:
            if statement.entry_id not in entry_ids:
                self._reject(f"entry {statement.entry_id} is missing from the proof of its own timestamp")
            run.entries = [entry for entry in run.entries if entry.entry_id == statement.entry_id]
        return False

    def _reject(self, message):
        logger.warning("verification failed: %s", message)
        raise VerificationFailed(message)

    def _fetch_payloads(self, run):
        run.fetches = [
            (entry, self._executor.submit(self._fetch, entry.image_cid), self._executor.submit(self._fetch, entry.video_cid))
            for entry in run.entries
        ]
        return False

    def _fetch(self, cid):
        if cid is None:
            return None
        try:
            return self.store.get(cid)
        except ContentNotFound:
            logger.warning("payload %s is missing from the content store", cid.hex())
            return None
        except IntegrityFailure as exc:
            raise PayloadIntegrityFailure(str(exc)) from exc

    def _merge(self, run):
        run.rows = tuple(ResultRow(entry, image.result(), video.result()) for entry, image, video in run.fetches)
        return False

    def _attach_vo(self, run):
        run.result = ResultSet(run.rows, run.vo, run.height)
        if self.use_cache:
            self.cache.admit(run.cache_key, run.result, run.epoch)
        return True

    # mutations

    @contextmanager
    def _metered(self, op):
        with ExitStack() as stack:
            yield {name: stack.enter_context(meter.scope(op)) for name, meter in self.meters.items()}

    def _advance_epoch(self):
        self.epoch = self.epoch.next()
        self.cache.advance_epoch(self.epoch)
        return self.epoch

    def _run_mutation(self, run):
        op = 'delete' if isinstance(run.statement, Delete) else 'update' if isinstance(run.statement, Update) else 'insert'
        with self._lock:
            with self._metered(op) as gas:
                self._prepare(run)
                self._dispatch(run, {
                    PlanStep.OFF_CHAIN_PUT: self._put_payload,
                    PlanStep.INDEX_INSERT: self._insert_into_index,
                    PlanStep.ANCHOR: self._anchor,
                    PlanStep.LEDGER_APPEND: self._append_block,
                })
            epoch = self._advance_epoch()
        return MutationReceipt(
            op,
            tuple(entry.entry_id for entry in run.new_entries),
            tuple(run.retired),
            run.block.height,
            epoch.value,
            gas,
        )

    def _prepare(self, run):
        """Validate the statement and build its entries; nothing is stored yet."""
        statement = run.statement
        if isinstance(statement, Delete):
            self._live_entry(statement.entry_id)
            run.retired = [statement.entry_id]
        elif isinstance(statement, Update):
            old = self._live_entry(statement.entry_id)
            changes = statement.changed()
            values = {
                'amount': old.amount,
                'addresses': old.addresses,
                'timestamp': old.timestamp,
                'image_cid': old.image_cid,
                'video_cid': old.video_cid,
            }
            # A replaced payload takes its cid from the new bytes unless one is given.
            if 'image' in changes:
                values['image_cid'] = None
            if 'video' in changes:
                values['video_cid'] = None
            for column, value in changes.items():
                values[_COLUMN_FIELDS[column]] = value
            run.new_entries = [self._build_entry(self.ledger.next_entry_id, Insert(**values), run.puts)]
            run.retired = [old.entry_id]
        else:
            first = self.ledger.next_entry_id
            run.new_entries = [
                self._build_entry(first + offset, statement, run.puts)
                for offset, statement in enumerate(run.statement)
            ]

    def _payload_cid(self, payload, cid, media_kind, puts):
        if payload is None:
            return cid
        if len(payload) > self.store.max_payload_bytes:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {self.store.max_payload_bytes}")
        computed = ContentId.of(payload)
        if cid is not None and cid != computed:
            raise InvalidEntry(f"{media_kind.value} payload hashes to {computed.hex()}, not {cid.hex()}")
        puts.append((payload, media_kind))
        return computed

    def _build_entry(self, entry_id, statement, puts):
        return DataEntry(
            entry_id=entry_id,
            amount=statement.amount,
            addresses=tuple(statement.addresses),
            timestamp=statement.timestamp,
            image_cid=self._payload_cid(statement.image, statement.image_cid, MediaKind.IMAGE, puts),
            video_cid=self._payload_cid(statement.video, statement.video_cid, MediaKind.VIDEO, puts),
        )

    def _live_entry(self, entry_id):
        entry = self.ledger.entry(entry_id)
        if self.ledger.is_retired(entry_id):
            raise EntryNotFound(entry_id)
        return entry

    def _put_payload(self, run):
        payload, media_kind = run.puts[run.stored]
        self.store.put(payload, media_kind)
        run.stored += 1

    def _insert_into_index(self, run):
        if run.indexed == 0:
            for entry in run.new_entries:
                self.bhash.insert(entry.entry_id, entry.timestamp)
        else:
            for entry in run.new_entries:
                index_by_prefix(self.trie, entry)
        run.indexed += 1

    def _anchor(self, run):
        run.roots = self.index_roots()

    def _append_block(self, run):
        run.block = self.ledger.append_block(run.new_entries, run.roots, retired=run.retired)


@dataclass
class _Run:
    """One statement's state as the engine dispatches its plan steps."""

    statement: object
    plan: object
    trace: list = None
    result: object = None
    epoch: Epoch = None
    cache_key: bytes = None
    height: int = 0
    vo: object = None
    entries: list = field(default_factory=list)
    fetches: list = field(default_factory=list)
    rows: tuple = ()
    puts: list = field(default_factory=list)
    stored: int = 0
    indexed: int = 0
    new_entries: list = field(default_factory=list)
    retired: list = field(default_factory=list)
    roots: tuple = ()
    block: object = None


_default_engine = None
_default_lock = threading.Lock()


def default_engine():
    """Process-wide engine built from settings on first use."""
    global _default_engine
    with _default_lock:
        if _default_engine is None:
            _default_engine = Engine.from_settings()
        return _default_engine


def reset_engine(engine=None):
    global _default_engine
    with _default_lock:
        previous, _default_engine = _default_engine, engine
    if previous is not None and previous is not engine:
        previous.close()
