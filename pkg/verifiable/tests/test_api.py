from django.test import SimpleTestCase
from django.urls import reverse
from rest_framework.test import APIClient

from verifiable.core import ContentId
from verifiable.middleware import Engine, default_engine, reset_engine

ADDRESS = '0x' + '9f' * 20


class APITestCase(SimpleTestCase):
    def setUp(self):
        self.client = APIClient()
        reset_engine(Engine(threshold_t=4, branching=4))
        self.addCleanup(reset_engine)

    def query(self, sql, **extra):
        return self.client.post(reverse('api_query'), {'sql': sql, **extra}, format='json')

    def insert(self, amount, timestamp, image=None):
        columns, values = 'amount, addresses, timestamp', f"{amount}, '{ADDRESS}', {timestamp}"
        if image is not None:
            columns, values = columns + ', image', values + f", '{image.hex()}'"
        return self.query(f"INSERT INTO entries ({columns}) VALUES ({values})")


class QueryViewTests(APITestCase):
    def test_insert_returns_a_receipt(self):
        response = self.insert(10, 1672531200)
        self.assertEqual(response.status_code, 201)
        self.assertEqual(response.data['kind'], 'receipt')
        self.assertEqual(response.data['entry_ids'], [0])
        self.assertEqual(set(response.data['gas']), {'bhash', 'trie', 'ledger'})

    def test_select_returns_rows_and_vo(self):
        for offset in range(6):
            self.insert(offset, 1672531200 + offset, image=b'frame %d' % offset)
        response = self.query('SELECT * FROM entries WHERE timestamp BETWEEN 1672531201 AND 1672531203', emit_vo=True)
        self.assertEqual(response.status_code, 200)
        self.assertEqual([row['entry_id'] for row in response.data['rows']], [1, 2, 3])
        self.assertEqual(response.data['rows'][0]['image_bytes'], len(b'frame 1'))
        self.assertEqual(response.data['anchor_height'], 6)
        self.assertTrue(response.data['vo'])

        response = self.query('SELECT * FROM entries WHERE entry_id = 1')
        self.assertIsNone(response.data['vo'])

    def test_explain(self):
        response = self.query('SELECT * FROM entries', explain=True)
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['kind'], 'plan')
        self.assertEqual(response.data['steps'][0], 'cache-probe')
        self.assertEqual(default_engine().ledger.height, 0)

    def test_error_statuses(self):
        self.assertEqual(self.query('SELEC *').status_code, 400)
        self.assertEqual(self.query('SELECT COUNT(*) FROM entries').status_code, 400)
        self.assertEqual(self.query('SELECT * FROM entries WHERE entry_id = 5').status_code, 404)
        self.assertEqual(self.client.post(reverse('api_query'), {}, format='json').status_code, 400)

        response = self.query('DELETE FROM entries WHERE entry_id = 0')
        self.assertEqual(response.status_code, 404)
        self.assertIn('error', response.data)

    def test_payload_limit(self):
        default_engine().store.max_payload_bytes = 4
        self.assertEqual(self.insert(1, 1672531200, image=b'too large').status_code, 413)


class AnchorViewTests(APITestCase):
    def test_latest_anchor_and_stats(self):
        self.insert(1, 1672531200)
        response = self.client.get(reverse('api_anchors'))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['height'], 1)
        self.assertEqual(response.data['bhash_root'], default_engine().index_roots()[0].hex())
        self.assertEqual(response.data['stats']['entries'], 1)

    def test_anchor_by_height(self):
        response = self.client.get(reverse('api_anchor_detail', args=[0]))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['height'], 0)
        self.assertEqual(self.client.get(reverse('api_anchor_detail', args=[3])).status_code, 404)

    def test_block_list(self):
        self.insert(1, 1672531200)
        response = self.client.get(reverse('api_blocks'))
        self.assertEqual([block['height'] for block in response.data], [0, 1])
        self.assertEqual(response.data[1]['entries'][0]['addresses'], [ADDRESS])


class StoredObjectViewTests(APITestCase):
    def test_object_lookup(self):
        self.insert(1, 1672531200, image=b'\x00\x01')
        cid = ContentId.of(b'\x00\x01').hex()
        response = self.client.get(reverse('api_object_detail', args=[cid]))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['payload'], '0001')
        self.assertEqual(response.data['media_kind'], 'image')

    def test_unknown_and_malformed_ids(self):
        unknown = ContentId.of(b'missing').hex()
        self.assertEqual(self.client.get(reverse('api_object_detail', args=[unknown])).status_code, 404)
        self.assertEqual(self.client.get(reverse('api_object_detail', args=['abc'])).status_code, 400)

    def test_corrupted_object(self):
        self.insert(1, 1672531200, image=b'bytes')
        cid = ContentId.of(b'bytes')
        default_engine().store._memory[cid] = b'other'
        self.assertEqual(self.client.get(reverse('api_object_detail', args=[cid.hex()])).status_code, 409)
