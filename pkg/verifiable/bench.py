"""Benchmark harness: ingest a workload at several scales and measure the query mix."""

import csv
import io
import json
import logging
import statistics
import time
from dataclasses import dataclass, field, replace

from .exceptions import InvalidWorkload, VerificationFailed
from .middleware.engine import Engine
from .middleware.parser import parse
from .middleware.statements import Delete, Insert, Update
from .workload import MUTATION_PRIMITIVES, SELECT_PRIMITIVES, generate_queries, generate_workload, insert_statements

logger = logging.getLogger(__name__)

MIN_REPETITIONS = 5

BENCH_COLUMNS = (
    ['n_blocks', 'entries', 'converted', 'insert_cpu_ms']
    + [f'latency_ms_{primitive}' for primitive in SELECT_PRIMITIVES + MUTATION_PRIMITIVES]
    + [f'vo_bytes_{primitive}' for primitive in SELECT_PRIMITIVES]
    + [f'gas_{primitive}' for primitive in MUTATION_PRIMITIVES]
    + ['bhash_writes_insert']
)
TIMING_COLUMNS = tuple(name for name in BENCH_COLUMNS if name == 'insert_cpu_ms' or name.startswith('latency_ms_'))


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def to_csv(self):
        stream = io.StringIO()
        writer = csv.DictWriter(stream, fieldnames=BENCH_COLUMNS, lineterminator='\n')
        writer.writeheader()
        writer.writerows(self.rows)
        return stream.getvalue()

    def to_jsonl(self):
        return ''.join(json.dumps(row) + '\n' for row in self.rows)

    def to_table(self):
        """One line per column so wide reports stay readable; one value column per scale."""
        width = max(len(name) for name in BENCH_COLUMNS)
        lines = []
        for name in BENCH_COLUMNS:
            values = ('' if row[name] is None else str(row[name]) for row in self.rows)
            lines.append('  '.join([name.ljust(width), *(value.rjust(12) for value in values)]).rstrip())
        return '\n'.join(lines) + '\n'

    def render(self, fmt='csv'):
        return REPORT_FORMATS[fmt](self)

    def non_timing(self):
        return [{k: v for k, v in row.items() if k not in TIMING_COLUMNS} for row in self.rows]


REPORT_FORMATS = {'table': BenchReport.to_table, 'jsonl': BenchReport.to_jsonl, 'csv': BenchReport.to_csv}


def run_bench(spec, scales, index_variant='bhash', threshold_t=10, repetitions=MIN_REPETITIONS,
              branching=16, workload=None):
    """One report row per scale, built from the first ``scale`` blocks of the workload.

    The engine runs without its cache so select latencies measure the index
    path. Latencies are medians over the queries in the mix of per-query
    medians across ``repetitions`` runs. Gas is the median over the mix of
    each mutation's first run.
    """
    if repetitions < MIN_REPETITIONS:
        raise InvalidWorkload(f"repetitions must be at least {MIN_REPETITIONS}")
    if not scales:
        raise InvalidWorkload("at least one scale is required")
    if workload is None:
        workload = generate_workload(spec.scaled(max(scales)))
    elif max(scales) > workload.spec.n_blocks:
        raise InvalidWorkload(f"the dataset holds {workload.spec.n_blocks} blocks, fewer than {max(scales)}")

    report = BenchReport()
    for n_blocks in sorted(set(scales)):
        records = workload.records[:n_blocks * spec.entries_per_block]
        logger.info("bench scale %s: %s entries, variant %s", n_blocks, len(records), index_variant)
        engine = Engine(threshold_t=threshold_t, branching=branching, index_variant=index_variant, use_cache=False)
        try:
            report.rows.append(_measure(engine, spec, n_blocks, records, workload.payloads, repetitions))
        finally:
            engine.close()
    return report


def _measure(engine, spec, n_blocks, records, payloads, repetitions):
    statements = insert_statements(records, payloads)
    started = time.process_time()
    engine.ingest(statements, spec.entries_per_block)
    row = {
        'n_blocks': n_blocks,
        'entries': len(records),
        'converted': engine.bhash.converted,
        'insert_cpu_ms': round((time.process_time() - started) * 1000, 3),
    }
    queries = generate_queries(spec, records)

    for primitive in SELECT_PRIMITIVES:
        latencies = []
        vo_sizes = []
        for sql in queries[primitive]:
            statement = parse(sql)
            samples = []
            try:
                for _ in range(repetitions):
                    started = time.perf_counter()
                    result = engine.select(statement)
                    samples.append((time.perf_counter() - started) * 1000)
            except VerificationFailed:
                logger.warning("dropping %r from the report: its proof did not verify", sql)
                continue
            latencies.append(statistics.median(samples))
            vo_sizes.append(len(result.vo_bytes))
        row[f'latency_ms_{primitive}'] = _median(latencies)
        row[f'vo_bytes_{primitive}'] = round(statistics.mean(vo_sizes)) if vo_sizes else None

    writes = []
    for primitive in MUTATION_PRIMITIVES:
        latencies = []
        gas = []
        for sql in queries[primitive]:
            samples, receipt = _time_mutation(engine, parse(sql), repetitions)
            latencies.append(statistics.median(samples))
            gas.append(receipt.total_gas)
            if primitive == 'insert':
                writes.append(receipt.gas['bhash'].storage_writes)
        row[f'latency_ms_{primitive}'] = _median(latencies)
        row[f'gas_{primitive}'] = round(statistics.median(gas)) if gas else None
    row['bhash_writes_insert'] = round(statistics.median(writes)) if writes else None
    return {name: row[name] for name in BENCH_COLUMNS}


def _time_mutation(engine, statement, repetitions):
    """Run ``statement`` ``repetitions`` times; returns the timings and the first run's receipt.

    An update is repeated against the version the previous run appended. A
    delete is repeated against a fresh copy of the entry, inserted untimed.
    """
    samples = []
    first = None
    for _ in range(repetitions):
        started = time.perf_counter()
        receipt = engine.execute(statement)
        samples.append((time.perf_counter() - started) * 1000)
        if first is None:
            first = receipt
        if isinstance(statement, Update):
            statement = replace(statement, entry_id=receipt.entry_ids[0])
        elif isinstance(statement, Delete):
            entry = engine.ledger.entry(statement.entry_id)
            copy = engine.execute(Insert(
                amount=entry.amount,
                addresses=entry.addresses,
                timestamp=entry.timestamp,
                image_cid=entry.image_cid,
                video_cid=entry.video_cid,
            ))
            statement = Delete(copy.entry_ids[0])
    return samples, first


def _median(values):
    return round(statistics.median(values), 3) if values else None
