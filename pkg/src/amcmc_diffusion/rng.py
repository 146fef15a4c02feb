"""Reproducible per-replica random streams.

Splitting rule: replica ``r`` of stream ``s`` under seed ``seed`` draws from a
Philox4x64 counter-based generator with key ``(seed, (s << 32) | r)``.  Keys
are disjoint for distinct ``(seed, s, r)``, so adding replicas never reshuffles
the streams of existing ones.

Normal deviates come from :meth:`numpy.random.Generator.standard_normal`
(ziggurat) and uniforms from :meth:`numpy.random.Generator.random`.  Draws are
buffered in blocks of :data:`BLOCK`; normals and uniforms have separate
buffers, each refilled from the same generator when it runs dry.  A consumer
that takes one normal then one uniform per step therefore sees exactly the
same numbers as a vectorised driver that takes ``BLOCK`` normals then ``BLOCK``
uniforms per block.
"""
import numpy as np

BLOCK = 1024
_MAX_SEED = 2**64
_MAX_REPLICA = 2**32


def philox(seed, replica=0, stream=0):
    """Return the numpy Generator for ``(seed, stream, replica)``."""
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if not 0 <= replica < _MAX_REPLICA or not 0 <= stream < _MAX_REPLICA:
        raise ValueError("replica and stream must fit in 32 bits")
    key = np.array([seed, (stream << 32) | replica], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class RandomSource:
    """Buffered normal/uniform stream for one replica."""

    def __init__(self, seed, replica=0, stream=0):
        self.seed = int(seed)
        self.replica = replica
        self.stream = stream
        self._gen = philox(seed, replica, stream)
        self._normals = np.empty(0)
        self._uniforms = np.empty(0)
        self._ni = 0
        self._ui = 0

    def normals(self, n):
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._ni == len(self._normals):
                self._normals = self._gen.standard_normal(BLOCK)
                self._ni = 0
            take = min(n - filled, BLOCK - self._ni)
            out[filled:filled + take] = self._normals[self._ni:self._ni + take]
            self._ni += take
            filled += take
        return out

    def uniforms(self, n):
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._ui == len(self._uniforms):
                self._uniforms = self._gen.random(BLOCK)
                self._ui = 0
            take = min(n - filled, BLOCK - self._ui)
            out[filled:filled + take] = self._uniforms[self._ui:self._ui + take]
            self._ui += take
            filled += take
        return out

    def normal(self):
        if self._ni == len(self._normals):
            self._normals = self._gen.standard_normal(BLOCK)
            self._ni = 0
        v = self._normals[self._ni]
        self._ni += 1
        return float(v)

    def uniform(self):
        if self._ui == len(self._uniforms):
            self._uniforms = self._gen.random(BLOCK)
            self._ui = 0
        v = self._uniforms[self._ui]
        self._ui += 1
        return float(v)


def replica_sources(seed, replicas, stream=0):
    return [RandomSource(seed, r, stream) for r in range(replicas)]
