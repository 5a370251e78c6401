"""
Synthetic datasets and query workloads.

A dataset directory holds ``dataset.jsonl`` (one entry per line: amount,
addresses, timestamp, imagecid, videocid), ``workload.json`` (the spec that
produced it) and ``objects/`` (the payloads, laid out by ContentStore). Every
byte is derived from the spec's seed.
"""

import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .content_store import ContentStore, MediaKind
from .core import MAX_KEY, ContentId, timestamp_string
from .exceptions import InvalidWorkload
from .middleware.statements import Insert

logger = logging.getLogger(__name__)

DATASET_FILE = 'dataset.jsonl'
WORKLOAD_FILE = 'workload.json'
RECORD_FIELDS = ('amount', 'addresses', 'timestamp', 'imagecid', 'videocid')

MAX_BLOCKS = 16384
IMAGE_BYTES = 2 * 1024
VIDEO_BYTES = 64 * 1024
ADDRESS_POOL = 64
MAX_ADDRESSES = 3
MAX_AMOUNT = 10**6

SELECT_PRIMITIVES = ('select_simple', 'select_range', 'select_fuzzy')
MUTATION_PRIMITIVES = ('insert', 'update', 'delete')
PRIMITIVES = SELECT_PRIMITIVES + MUTATION_PRIMITIVES


def default_query_mix():
    return {'select_simple': 10, 'select_range': 10, 'select_fuzzy': 10, 'insert': 4, 'update': 4, 'delete': 4}


@dataclass(frozen=True)
class WorkloadSpec:
    n_blocks: int = 16
    entries_per_block: int = 4
    # Arrival rate in entries per second; the mean gap between timestamps is 1 / density.
    timestamp_density: float = 1 / 60
    image_fraction: float = 0.25
    video_fraction: float = 0.05
    query_mix: dict = field(default_factory=default_query_mix)
    seed: int = 0
    start_time: int = 1672531200

    def __post_init__(self):
        if not isinstance(self.n_blocks, int) or not 1 <= self.n_blocks <= MAX_BLOCKS \
                or self.n_blocks & (self.n_blocks - 1):
            raise InvalidWorkload(f"n_blocks must be a power of two up to {MAX_BLOCKS}, got {self.n_blocks}")
        if not isinstance(self.entries_per_block, int) or self.entries_per_block < 1:
            raise InvalidWorkload("entries_per_block must be a positive integer")
        if not self.timestamp_density > 0:
            raise InvalidWorkload("timestamp_density must be positive")
        if self.image_fraction < 0 or self.video_fraction < 0 or self.image_fraction + self.video_fraction > 1:
            raise InvalidWorkload("payload fractions must be non-negative and sum to at most 1")
        unknown = set(self.query_mix) - set(PRIMITIVES)
        if unknown:
            raise InvalidWorkload(f"unknown query primitives: {', '.join(sorted(unknown))}")
        if any(not isinstance(count, int) or count < 0 for count in self.query_mix.values()):
            raise InvalidWorkload("query counts must be non-negative integers")
        if not 0 <= self.seed <= MAX_KEY:
            raise InvalidWorkload("seed must be an unsigned 64-bit integer")

    @property
    def n_entries(self):
        return self.n_blocks * self.entries_per_block

    def scaled(self, n_blocks):
        return WorkloadSpec(**{**asdict(self), 'n_blocks': n_blocks})

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Workload:
    spec: WorkloadSpec
    records: list
    payloads: dict

    def insert_statements(self):
        return insert_statements(self.records, self.payloads)


def generate_workload(spec):
    rng = random.Random(spec.seed)
    pool = ['0x' + rng.randbytes(20).hex() for _ in range(ADDRESS_POOL)]
    records = []
    payloads = {}
    timestamp = spec.start_time
    for index in range(spec.n_entries):
        if index:
            timestamp += round(rng.expovariate(spec.timestamp_density))
        record = {
            'amount': rng.randrange(1, MAX_AMOUNT),
            'addresses': rng.sample(pool, rng.randint(1, MAX_ADDRESSES)),
            'timestamp': timestamp,
            'imagecid': None,
            'videocid': None,
        }
        draw = rng.random()
        if draw < spec.image_fraction:
            payload = rng.randbytes(IMAGE_BYTES)
            record['imagecid'] = _remember(payloads, payload)
        elif draw < spec.image_fraction + spec.video_fraction:
            payload = rng.randbytes(VIDEO_BYTES)
            record['videocid'] = _remember(payloads, payload)
        records.append(record)
    return Workload(spec, records, payloads)


def _remember(payloads, payload):
    cid = ContentId.of(payload).hex()
    payloads[cid] = payload
    return cid


def write_dataset(workload, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / DATASET_FILE, 'w') as stream:
        for record in workload.records:
            stream.write(json.dumps({name: record[name] for name in RECORD_FIELDS}) + '\n')
    (path / WORKLOAD_FILE).write_text(json.dumps(workload.spec.as_dict(), indent=2, sort_keys=True) + '\n')
    store = ContentStore(path)
    media = {}
    for record in workload.records:
        media[record['imagecid']] = MediaKind.IMAGE
        media[record['videocid']] = MediaKind.VIDEO
    for cid in sorted(workload.payloads):
        store.put(workload.payloads[cid], media.get(cid, MediaKind.OTHER))
    logger.info("wrote %s entries and %s payloads to %s", len(workload.records), len(workload.payloads), path)
    return path


def generate(spec, path):
    """Generate the dataset described by ``spec`` into ``path``."""
    return write_dataset(generate_workload(spec), path)


def read_dataset(path):
    path = Path(path)
    spec = WorkloadSpec.from_dict(json.loads((path / WORKLOAD_FILE).read_text()))
    with open(path / DATASET_FILE) as stream:
        records = [json.loads(line) for line in stream if line.strip()]
    store = ContentStore(path)
    payloads = {}
    for record in records:
        for name in ('imagecid', 'videocid'):
            if record[name] is not None:
                payloads[record[name]] = store.get(ContentId.fromhex(record[name]))
    return Workload(spec, records, payloads)


def insert_statements(records, payloads):
    statements = []
    for record in records:
        image_cid = ContentId.fromhex(record['imagecid']) if record['imagecid'] else None
        video_cid = ContentId.fromhex(record['videocid']) if record['videocid'] else None
        statements.append(Insert(
            amount=record['amount'],
            addresses=tuple(record['addresses']),
            timestamp=record['timestamp'],
            image_cid=image_cid,
            video_cid=video_cid,
            image=payloads.get(record['imagecid']) if image_cid else None,
            video=payloads.get(record['videocid']) if video_cid else None,
        ))
    return statements


def generate_queries(spec, records):
    """SQL text per primitive, drawn from fixed templates against ``records``.

    Entry ids are the record positions. Update and delete targets are distinct,
    so every mutation in the mix hits a live entry.
    """
    rng = random.Random(spec.seed ^ 0x5EED)
    first = records[0]['timestamp']
    last = records[-1]['timestamp']
    mutated = rng.sample(range(len(records)), min(len(records), spec.query_mix.get('update', 0) + spec.query_mix.get('delete', 0)))
    queries = {}
    for primitive in PRIMITIVES:
        count = spec.query_mix.get(primitive, 0)
        if primitive == 'update':
            targets, mutated = mutated[:count], mutated[count:]
            queries[primitive] = [
                f"UPDATE entries SET amount = {rng.randrange(1, MAX_AMOUNT)} WHERE entry_id = {entry_id}"
                for entry_id in targets
            ]
        elif primitive == 'delete':
            targets, mutated = mutated[:count], mutated[count:]
            queries[primitive] = [f"DELETE FROM entries WHERE entry_id = {entry_id}" for entry_id in targets]
        else:
            queries[primitive] = [_select_or_insert(primitive, rng, records, first, last) for _ in range(count)]
    return queries


def _select_or_insert(primitive, rng, records, first, last):
    if primitive == 'select_simple':
        if rng.random() < 0.5:
            return f"SELECT * FROM entries WHERE entry_id = {rng.randrange(len(records))}"
        return f"SELECT * FROM entries WHERE timestamp = {rng.choice(records)['timestamp']}"
    if primitive == 'select_range':
        lo, hi = sorted(rng.randint(first, last) for _ in range(2))
        return f"SELECT * FROM entries WHERE timestamp BETWEEN {lo} AND {hi}"
    if primitive == 'select_fuzzy':
        record = rng.choice(records)
        if rng.random() < 0.5:
            text = timestamp_string(record['timestamp'])
            return f"SELECT * FROM entries WHERE ts_str LIKE '{text[:rng.randint(1, len(text))]}%'"
        address = rng.choice(record['addresses'])
        return f"SELECT * FROM entries WHERE address LIKE '{address[:rng.randint(3, len(address))]}%'"
    address = rng.choice(rng.choice(records)['addresses'])
    return (
        "INSERT INTO entries (amount, addresses, timestamp) "
        f"VALUES ({rng.randrange(1, MAX_AMOUNT)}, '{address}', {last + rng.randint(1, 600)})"
    )
