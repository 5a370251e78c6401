"""
Synthetic gas accounting.

Index and ledger structures record one storage write per node or bucket record
they persist, one storage read per record they load, and one compute unit per
digest they evaluate. A ``GasMeter`` prices those counters with a cost table
whose defaults follow the relative magnitudes of EVM storage pricing.
"""

import csv
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

GAS_REPORT_COLUMNS = ['op', 'writes', 'reads', 'compute', 'total_gas']


@dataclass(frozen=True)
class CostTable:
    write_cost: int = 20000
    read_cost: int = 800
    compute_cost: int = 1

    def __post_init__(self):
        for name in ('write_cost', 'read_cost', 'compute_cost'):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer")

    @classmethod
    def from_dict(cls, values):
        return cls(
            write_cost=int(values.get('write', cls.write_cost)),
            read_cost=int(values.get('read', cls.read_cost)),
            compute_cost=int(values.get('compute', cls.compute_cost)),
        )


@dataclass
class GasReport:
    op: str
    storage_writes: int = 0
    storage_reads: int = 0
    compute_units: int = 0
    cost_table: CostTable = field(default_factory=CostTable)

    @property
    def total_gas(self):
        return (
            self.storage_writes * self.cost_table.write_cost
            + self.storage_reads * self.cost_table.read_cost
            + self.compute_units * self.cost_table.compute_cost
        )

    def as_row(self):
        return {
            'op': self.op,
            'writes': self.storage_writes,
            'reads': self.storage_reads,
            'compute': self.compute_units,
            'total_gas': self.total_gas,
        }

    def __add__(self, other):
        return GasReport(
            op=self.op,
            storage_writes=self.storage_writes + other.storage_writes,
            storage_reads=self.storage_reads + other.storage_reads,
            compute_units=self.compute_units + other.compute_units,
            cost_table=self.cost_table,
        )


class GasMeter:
    def __init__(self, cost_table=None):
        self.cost_table = cost_table or CostTable()
        self._lock = threading.Lock()
        self.storage_writes = 0
        self.storage_reads = 0
        self.compute_units = 0

    def record_write(self, count=1):
        with self._lock:
            self.storage_writes += count

    def record_read(self, count=1):
        with self._lock:
            self.storage_reads += count

    def record_compute(self, count=1):
        with self._lock:
            self.compute_units += count

    def totals(self, op='total'):
        with self._lock:
            return GasReport(op, self.storage_writes, self.storage_reads, self.compute_units, self.cost_table)

    @contextmanager
    def scope(self, op):
        """Yield a report that holds the counter deltas of the block once it exits.

        Concurrent work on the same meter is attributed to whichever scopes are
        open at the time.
        """
        before = self.totals(op)
        report = GasReport(op, cost_table=self.cost_table)
        try:
            yield report
        finally:
            after = self.totals(op)
            report.storage_writes = after.storage_writes - before.storage_writes
            report.storage_reads = after.storage_reads - before.storage_reads
            report.compute_units = after.compute_units - before.compute_units


def write_gas_csv(reports, stream):
    writer = csv.DictWriter(stream, fieldnames=GAS_REPORT_COLUMNS)
    writer.writeheader()
    for report in reports:
        writer.writerow(report.as_row())
