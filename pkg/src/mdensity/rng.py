"""Counter-based random streams.

Every chain (or sample index) ``c`` under a master seed ``s`` owns the Philox
stream keyed by ``mix64(s, c)``, so a chain's draws never depend on how many
other chains run beside it.
"""

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64(seed: int, counter: int) -> int:
    """Mix a master seed and a stream counter into a 64-bit key."""
    return _splitmix64(_splitmix64(int(seed) & _MASK) ^ (int(counter) & _MASK))


def stream(seed: int, counter: int = 0) -> np.random.Generator:
    """Independent generator for stream ``counter`` under ``seed``."""
    return np.random.Generator(np.random.Philox(key=mix64(seed, counter)))


class ChainNoise:
    """Per-chain noise streams behind a batched ``Generator``-like facade.

    ``standard_normal((n_chains, ...))`` returns one independent draw per
    chain, each taken from that chain's own stream. Draws are buffered in
    blocks so the per-step cost does not scale with a Python loop over
    chains.
    """

    def __init__(self, seed: int, chain_ids, block: int = 256):
        self.seed = int(seed)
        self.chain_ids = np.asarray(chain_ids, dtype=np.int64)
        self.block = int(block)
        self._gens = [stream(seed, int(c)) for c in self.chain_ids]
        self._normal = {}
        self._uniform = None
        self.n_uniform_calls = 0

    @property
    def n_chains(self) -> int:
        return len(self._gens)

    def _check(self, shape):
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(n) for n in shape)
        if not shape or shape[0] != self.n_chains:
            raise ValueError(f"leading dimension must be n_chains={self.n_chains}, got {shape}")
        return shape

    def standard_normal(self, shape):
        shape = self._check(shape)
        tail = shape[1:]
        size = int(np.prod(tail, dtype=np.int64))
        buf = self._normal.get(size)
        if buf is None or buf[1] >= self.block:
            data = np.stack([g.standard_normal((self.block, size)) for g in self._gens])
            buf = [data, 0]
            self._normal[size] = buf
        out = buf[0][:, buf[1]].reshape(shape)
        buf[1] += 1
        return out

    def random(self, shape=None):
        """Uniform draws on [0, 1), one per chain."""
        shape = self._check(shape if shape is not None else (self.n_chains,))
        if len(shape) != 1:
            raise ValueError("uniform draws are one scalar per chain")
        self.n_uniform_calls += 1
        if self._uniform is None or self._uniform[1] >= self.block:
            data = np.stack([g.random(self.block) for g in self._gens])
            self._uniform = [data, 0]
        out = self._uniform[0][:, self._uniform[1]].copy()
        self._uniform[1] += 1
        return out

    def subset(self, keep):
        """Drop chains (e.g. after divergence) keeping the survivors' streams intact."""
        keep = np.asarray(keep)
        new = object.__new__(ChainNoise)
        new.seed = self.seed
        new.chain_ids = self.chain_ids[keep]
        new.block = self.block
        idx = np.flatnonzero(keep) if keep.dtype == bool else keep
        new._gens = [self._gens[i] for i in idx]
        new._normal = {k: [v[0][idx], v[1]] for k, v in self._normal.items()}
        new._uniform = None if self._uniform is None else [self._uniform[0][idx], self._uniform[1]]
        new.n_uniform_calls = self.n_uniform_calls
        return new
