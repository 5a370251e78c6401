import random
import tempfile
from concurrent.futures import ThreadPoolExecutor

from django.test import SimpleTestCase

from verifiable.content_store import ContentStore, MediaKind
from verifiable.core import ContentId
from verifiable.exceptions import ContentNotFound, IntegrityFailure, PayloadTooLarge


class InMemoryStoreTests(SimpleTestCase):
    def setUp(self):
        self.store = ContentStore.in_memory(max_payload_bytes=16)

    def test_put_returns_the_content_id(self):
        cid = self.store.put(b'abc', MediaKind.IMAGE)
        self.assertEqual(cid, ContentId.of(b'abc'))
        self.assertEqual(self.store.get(cid), b'abc')
        self.assertEqual(self.store.get_object(cid).media_kind, MediaKind.IMAGE)
        self.assertIn(cid, self.store)

    def test_put_is_idempotent(self):
        self.assertEqual(self.store.put(b'abc'), self.store.put(b'abc'))
        self.assertEqual(len(self.store), 1)

    def test_oversized_payload(self):
        with self.assertRaises(PayloadTooLarge):
            self.store.put(b'x' * 17)
        self.assertEqual(len(self.store), 0)

    def test_put_replaces_tampered_bytes(self):
        cid = self.store.put(b'abc')
        self.store._memory[cid] = b'abd'
        self.store.put(b'abc')
        self.assertEqual(self.store.get(cid), b'abc')

    def test_missing_object(self):
        with self.assertRaises(ContentNotFound):
            self.store.get(ContentId.of(b'never stored'))


class OnDiskStoreTests(SimpleTestCase):
    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.store = ContentStore(directory.name)

    def test_objects_are_sharded_by_prefix(self):
        cid = self.store.put(b'payload')
        path = self.store.object_path(cid)
        self.assertEqual(path.parent.name, cid.hex()[:2])
        self.assertEqual(path.read_bytes(), b'payload')
        self.assertEqual(self.store.get(cid), b'payload')

    def test_corrupted_file_fails_integrity(self):
        cid = self.store.put(b'payload')
        self.store.object_path(cid).write_bytes(b'pay1oad')
        with self.assertRaises(IntegrityFailure):
            self.store.get(cid)

    def test_missing_file(self):
        cid = self.store.put(b'payload')
        self.store.object_path(cid).unlink()
        with self.assertRaises(ContentNotFound):
            self.store.get(cid)
        self.assertNotIn(cid, self.store)

    def test_concurrent_puts_of_one_payload(self):
        with ThreadPoolExecutor(max_workers=8) as pool:
            cids = set(pool.map(lambda _: self.store.put(b'same bytes'), range(32)))
        self.assertEqual(len(cids), 1)
        self.assertEqual(len(self.store), 1)
        self.assertEqual(self.store.get(cids.pop()), b'same bytes')

    def test_put_rewrites_a_corrupted_object(self):
        cid = self.store.put(b'payload')
        self.store.object_path(cid).write_bytes(b'pay1oad')
        self.assertEqual(self.store.put(b'payload'), cid)
        self.assertEqual(self.store.get(cid), b'payload')

    def test_media_kind_survives_a_reopen(self):
        image = self.store.put(b'image bytes', MediaKind.IMAGE)
        video = self.store.put(b'video bytes', MediaKind.VIDEO)
        reopened = ContentStore(self.store.root)
        self.assertEqual(reopened.get_object(image).media_kind, MediaKind.IMAGE)
        self.assertEqual(reopened.get_object(video).media_kind, MediaKind.VIDEO)
        self.assertEqual(len(reopened), 2)

    def test_first_media_kind_wins(self):
        cid = self.store.put(b'shared', MediaKind.IMAGE)
        self.store.put(b'shared', MediaKind.VIDEO)
        self.assertEqual(ContentStore(self.store.root).media_kind(cid), MediaKind.IMAGE)


class RoundTripTests(SimpleTestCase):
    def test_thousand_random_payloads(self):
        rng = random.Random(11)
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        for store in (ContentStore.in_memory(), ContentStore(directory.name)):
            payloads = {rng.randbytes(rng.randrange(1, 256)) for _ in range(1000)}
            cids = {store.put(payload): payload for payload in payloads}
            self.assertEqual(len(store), len(payloads))
            for cid, payload in cids.items():
                self.assertEqual(store.get(cid), payload)
