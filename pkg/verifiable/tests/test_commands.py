import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from verifiable.middleware import Engine

ADDRESS = '0x' + '5a' * 20
RANGE_SQL = 'SELECT * FROM entries WHERE timestamp BETWEEN 0 AND 9999999999'


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.root = Path(directory.name)
        self.dataset = self.root / 'dataset'
        self.state_dir = self.root / 'state'

    def run_command(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def assertFailsWith(self, returncode, *args, **options):
        with self.assertRaises(CommandError) as caught:
            self.run_command(*args, **options)
        self.assertEqual(caught.exception.returncode, returncode)
        return caught.exception

    def ingest(self, **options):
        self.run_command('generate', dataset=str(self.dataset), n_blocks=4, entries_per_block=4, seed=3,
                         image_fraction=0.5, video_fraction=0.1)
        return self.run_command('ingest', dataset=str(self.dataset), state_dir=str(self.state_dir), **options)


class GenerateAndIngestTests(CommandTestCase):
    def test_ingest_builds_the_persisted_state(self):
        output = self.ingest()
        self.assertIn('Ingested 16 entries in 4 blocks', output)
        self.assertTrue((self.state_dir / 'blocks.bin').exists())
        engine = Engine.open(self.state_dir)
        self.addCleanup(engine.close)
        self.assertEqual(engine.ledger.height, 4)
        self.assertTrue(engine.bhash.converted)

    def test_bplus_variant_never_converts(self):
        output = self.ingest(index_variant='bplus-only')
        self.assertIn('converted=False', output)

    def test_invalid_generate_arguments(self):
        self.assertFailsWith(2, 'generate', dataset=str(self.dataset), n_blocks=3)

    def test_missing_dataset(self):
        self.assertFailsWith(2, 'ingest', dataset=str(self.root / 'nowhere'), state_dir=str(self.state_dir))

    @override_settings(HYBRIDQUERY={'STATE_DIR': None})
    def test_state_dir_is_required(self):
        self.assertFailsWith(2, 'query', RANGE_SQL)


class QueryCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.ingest()

    def test_select_prints_rows_and_vo(self):
        output = self.run_command('query', RANGE_SQL, state_dir=str(self.state_dir), format='jsonl', emit_vo=True)
        lines = [json.loads(line) for line in output.splitlines()]
        self.assertEqual([row['entry_id'] for row in lines[:-1]], list(range(16)))
        self.assertEqual(lines[-1]['anchor_height'], 4)
        self.assertTrue(lines[-1]['vo'])

    def test_table_output(self):
        output = self.run_command('query', 'SELECT * FROM entries WHERE entry_id = 2', state_dir=str(self.state_dir))
        self.assertIn('(1 rows, anchored at height 4)', output)

    def test_insert_is_persisted(self):
        output = self.run_command(
            'query',
            f"INSERT INTO entries (amount, addresses, timestamp) VALUES (5, '{ADDRESS}', 9999999990)",
            state_dir=str(self.state_dir),
        )
        receipt = json.loads(output)
        self.assertEqual((receipt['op'], receipt['entry_ids'], receipt['block_height']), ('insert', [16], 5))
        output = self.run_command('query', 'SELECT * FROM entries WHERE timestamp = 9999999990',
                                  state_dir=str(self.state_dir), format='csv')
        self.assertIn(ADDRESS, output)

    def test_explain(self):
        output = self.run_command('query', 'DELETE FROM entries WHERE entry_id = 1', state_dir=str(self.state_dir),
                                  explain=True)
        self.assertEqual(json.loads(output)['steps'], ['anchor', 'ledger-append'])
        output = self.run_command('query', 'SELECT * FROM entries WHERE entry_id = 1', state_dir=str(self.state_dir),
                                  format='jsonl')
        self.assertEqual(json.loads(output)['entry_id'], 1)

    def test_usage_errors(self):
        self.assertFailsWith(2, 'query', 'SELEC * FROM entries', state_dir=str(self.state_dir))
        self.assertFailsWith(2, 'query', 'SELECT COUNT(*) FROM entries', state_dir=str(self.state_dir))
        self.assertFailsWith(2, 'query', 'DELETE FROM entries WHERE entry_id = 99', state_dir=str(self.state_dir))


class VerifyCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.ingest()

    def emitted_vo(self, sql):
        output = self.run_command('query', sql, state_dir=str(self.state_dir), format='jsonl', emit_vo=True)
        lines = [json.loads(line) for line in output.splitlines()]
        return [row['entry_id'] for row in lines[:-1]], lines[-1]['vo']

    def test_state_verifies(self):
        output = self.run_command('verify', state_dir=str(self.state_dir))
        self.assertIn('Chain of 5 blocks verified', output)
        self.assertIn('0 missing', output)

    def test_corrupted_payload(self):
        obj = next(path for path in (self.state_dir / 'objects').rglob('*') if path.is_file())
        obj.write_bytes(b'not the original payload')
        self.assertFailsWith(1, 'verify', state_dir=str(self.state_dir))
        self.run_command('verify', state_dir=str(self.state_dir), skip_payloads=True)

    def test_broken_block_log(self):
        log = self.state_dir / 'blocks.bin'
        data = bytearray(log.read_bytes())
        data[-1] ^= 0x01
        log.write_bytes(bytes(data))
        self.assertFailsWith(1, 'verify', state_dir=str(self.state_dir))

    def test_range_vo(self):
        entry_ids, vo = self.emitted_vo(RANGE_SQL)
        output = self.run_command('verify', state_dir=str(self.state_dir), sql=RANGE_SQL, vo=vo,
                                  entry_ids=','.join(map(str, entry_ids)))
        self.assertIn('Verified 16 entries against height 4', output)

        tampered = vo[:-1] + ('0' if vo[-1] != '0' else '1')
        self.assertFailsWith(1, 'verify', state_dir=str(self.state_dir), sql=RANGE_SQL, vo=tampered)
        self.assertFailsWith(1, 'verify', state_dir=str(self.state_dir), sql=RANGE_SQL, vo=vo, entry_ids='99')

    def test_prefix_and_point_vo(self):
        sql = "SELECT * FROM entries WHERE ts_str LIKE '2023%'"
        entry_ids, vo = self.emitted_vo(sql)
        self.assertEqual(len(entry_ids), 16)
        self.run_command('verify', state_dir=str(self.state_dir), sql=sql, vo=vo)

        point = 'SELECT * FROM entries WHERE entry_id = 3'
        _, vo = self.emitted_vo(point)
        self.run_command('verify', state_dir=str(self.state_dir), sql=point, vo=vo, entry_ids='3')

    def test_vo_usage_errors(self):
        self.assertFailsWith(2, 'verify', state_dir=str(self.state_dir), sql=RANGE_SQL)
        self.assertFailsWith(2, 'verify', state_dir=str(self.state_dir), sql=RANGE_SQL, vo='zz')
        self.assertFailsWith(2, 'verify', state_dir=str(self.state_dir), sql=RANGE_SQL, vo='00', height=99)


class BenchCommandTests(CommandTestCase):
    def test_csv_report(self):
        output = self.run_command('bench', scales='4,8', seed=2)
        lines = output.splitlines()
        self.assertTrue(lines[0].startswith('n_blocks,entries,converted'))
        self.assertEqual([line.split(',')[0] for line in lines[1:]], ['4', '8'])

    def test_jsonl_report_to_file(self):
        target = self.root / 'report.jsonl'
        self.run_command('bench', scales='4', format='jsonl', output=str(target))
        self.assertEqual(json.loads(target.read_text().splitlines()[0])['n_blocks'], 4)

    def test_table_report(self):
        output = self.run_command('bench', scales='4,8', format='table')
        self.assertEqual(output.splitlines()[0].split(), ['n_blocks', '4', '8'])

    def test_bad_scales(self):
        self.assertFailsWith(2, 'bench', scales='4,x')
        self.assertFailsWith(2, 'bench', scales='6')
        self.assertFailsWith(2, 'bench', scales='4', repetitions=2)
