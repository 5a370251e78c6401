"""Bloom-filter fronted result cache keyed by statement fingerprints."""

import hashlib
import logging
import struct
import threading

import mmh3
from bitarray import bitarray

from ..core import Epoch
from .statements import encode_ast

logger = logging.getLogger(__name__)

DEFAULT_BLOOM_BITS = 2**20
DEFAULT_BLOOM_HASHES = 7

_EPOCH = struct.Struct('>Q')


class BloomFilter:
    def __init__(self, size_bits=DEFAULT_BLOOM_BITS, hash_count=DEFAULT_BLOOM_HASHES):
        if size_bits <= 0 or hash_count <= 0:
            raise ValueError("bloom filter needs a positive size and hash count")
        self.size_bits = size_bits
        self.hash_count = hash_count
        self.bits = bitarray(size_bits)
        self.bits.setall(False)

    def _positions(self, key):
        return [mmh3.hash(key, seed, signed=False) % self.size_bits for seed in range(self.hash_count)]

    def add(self, key):
        for position in self._positions(key):
            self.bits[position] = True

    def __contains__(self, key):
        return all(self.bits[position] for position in self._positions(key))


def fingerprint(statement, epoch):
    return hashlib.sha256(encode_ast(statement) + _EPOCH.pack(epoch.value)).digest()


class QueryCache:
    """
    Results cached per (statement, epoch) fingerprint.

    The Bloom filter only ever gains bits, so an admitted fingerprint always
    tests present. A hit must also carry the current epoch; advancing the epoch
    drops every stored result.
    """

    def __init__(self, bloom_bits=DEFAULT_BLOOM_BITS, bloom_hashes=DEFAULT_BLOOM_HASHES):
        self.bloom = BloomFilter(bloom_bits, bloom_hashes)
        self.results = {}
        self.current_epoch = Epoch()
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def fingerprint(self, statement, epoch=None):
        return fingerprint(statement, epoch or self.current_epoch)

    def lookup(self, key):
        with self._lock:
            cached = self.results.get(key) if key in self.bloom else None
            if cached is None or cached[1] != self.current_epoch:
                self.misses += 1
                return None
            self.hits += 1
            return cached[0]

    def admit(self, key, result, epoch=None):
        with self._lock:
            epoch = epoch or self.current_epoch
            self.bloom.add(key)
            if epoch == self.current_epoch:
                self.results[key] = (result, epoch)
        logger.debug("cache admitted %s at epoch %s", key.hex()[:16], epoch.value)

    def advance_epoch(self, epoch=None):
        with self._lock:
            self.current_epoch = epoch or self.current_epoch.next()
            self.results.clear()
        logger.debug("cache epoch advanced to %s", self.current_epoch.value)
        return self.current_epoch
