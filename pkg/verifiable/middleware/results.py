"""Result records returned by the engine and their export formats."""

import csv
import io
import json
from dataclasses import dataclass, field

from ..core import canonical_encode

ROW_COLUMNS = ['entry_id', 'amount', 'addresses', 'timestamp', 'imagecid', 'videocid', 'image_bytes', 'video_bytes']


@dataclass(frozen=True)
class ResultRow:
    entry: object
    image: bytes | None = None
    video: bytes | None = None

    def as_dict(self):
        data = self.entry.as_dict()
        data['image_bytes'] = len(self.image) if self.image is not None else None
        data['video_bytes'] = len(self.video) if self.video is not None else None
        return data


@dataclass(frozen=True)
class ResultSet:
    rows: tuple = ()
    vo: object = None
    anchor_height: int = 0

    @property
    def entry_ids(self):
        return [row.entry.entry_id for row in self.rows]

    @property
    def vo_bytes(self):
        return self.vo.to_bytes() if self.vo is not None else b''

    def to_bytes(self):
        rows = [[row.entry, row.image, row.video] for row in self.rows]
        return canonical_encode([rows, self.vo_bytes, self.anchor_height])


@dataclass(frozen=True)
class MutationReceipt:
    op: str
    entry_ids: tuple = ()
    retired: tuple = ()
    block_height: int = 0
    epoch: int = 0
    gas: dict = field(default_factory=dict)

    @property
    def total_gas(self):
        return sum(report.total_gas for report in self.gas.values())

    def as_dict(self):
        return {
            'op': self.op,
            'entry_ids': list(self.entry_ids),
            'retired': list(self.retired),
            'block_height': self.block_height,
            'epoch': self.epoch,
            'gas': {component: report.as_row() for component, report in self.gas.items()},
            'total_gas': self.total_gas,
        }


def _flat(row):
    data = row.as_dict()
    data['addresses'] = ','.join(data['addresses'])
    return data


def to_jsonl(result, emit_vo=False):
    lines = [json.dumps(row.as_dict()) for row in result.rows]
    if emit_vo:
        lines.append(json.dumps({'anchor_height': result.anchor_height, 'vo': result.vo_bytes.hex()}))
    return ''.join(line + '\n' for line in lines)


def to_csv(result, emit_vo=False):
    stream = io.StringIO()
    writer = csv.DictWriter(stream, fieldnames=ROW_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for row in result.rows:
        writer.writerow(_flat(row))
    if emit_vo:
        stream.write(f"# anchor_height={result.anchor_height} vo={result.vo_bytes.hex()}\n")
    return stream.getvalue()


def to_table(result, emit_vo=False):
    cells = [[str(value) if value is not None else '' for value in _flat(row).values()] for row in result.rows]
    widths = [max([len(name)] + [len(line[i]) for line in cells]) for i, name in enumerate(ROW_COLUMNS)]
    lines = [
        '  '.join(name.ljust(width) for name, width in zip(ROW_COLUMNS, widths)).rstrip(),
        '  '.join('-' * width for width in widths),
    ]
    lines.extend('  '.join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in cells)
    lines.append(f"({len(result.rows)} rows, anchored at height {result.anchor_height})")
    if emit_vo:
        lines.append(f"vo: {result.vo_bytes.hex()}")
    return '\n'.join(lines) + '\n'


EXPORTERS = {'table': to_table, 'jsonl': to_jsonl, 'csv': to_csv}


def export(result, fmt='table', emit_vo=False):
    return EXPORTERS[fmt](result, emit_vo=emit_vo)
