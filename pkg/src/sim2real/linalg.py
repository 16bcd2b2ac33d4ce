"""Dense float64 matrix helpers and a counter-based seeded generator.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here add the shape checks and explicit row broadcasting the rest
of the package relies on; nothing broadcasts implicitly.

``Rng`` is a SplitMix64 counter generator: output ``k`` of a stream is the
SplitMix64 finalizer applied to ``seed + k * 0x9E3779B97F4A7C15`` (mod 2**64).
Every draw is pure unsigned 64-bit integer arithmetic, so the uniform stream
is identical on every platform. Normals use Box-Muller over that stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

from sim2real.errors import ShapeError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Return ``data`` as a C-contiguous float64 2-D array."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add_row(a: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Add the vector ``row`` to every row of ``a``."""
    if a.ndim != 2 or row.ndim != 1 or row.shape[0] != a.shape[1]:
        raise ShapeError(f"cannot add row of shape {row.shape} to {a.shape}")
    return a + row[np.newaxis, :]


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Seeded, single-owner random stream.

    State is ``(seed, counter)``; every draw advances the counter by the
    number of 64-bit words consumed, so a stream is fixed by the seed and
    the sequence of calls made on it.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def spawn(self, label: str) -> "Rng":
        """Independent sub-stream keyed by ``(seed, label)``; does not advance self."""
        digest = hashlib.blake2b(f"{self.seed}:{label}".encode(), digest_size=8).digest()
        return Rng(int.from_bytes(digest, "little"))

    def uint64(self, n: int) -> np.ndarray:
        if n < 0:
            raise ShapeError(f"cannot draw {n} values")
        k = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(self.counter)
        self.counter += n
        with np.errstate(over="ignore"):
            return _finalize(np.uint64(self.seed) + k * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) with 53 random bits each."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def gamma(self, shape: int, scale: float, n: int) -> np.ndarray:
        """Gamma draws for integer ``shape`` as a sum of exponentials."""
        if shape < 1:
            raise ValueError("integer gamma shape must be >= 1")
        u = self.uniform(n * shape).reshape(n, shape)
        return -scale * np.log1p(-u).sum(axis=1)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.uniform(n)
        return np.argsort(keys, kind="stable")


def rand_normal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError(f"rand_normal needs positive dimensions, got {rows}x{cols}")
    return rng.normal(rows * cols).reshape(rows, cols)


def rand_uniform(rng: Rng, rows: int, cols: int, low: float, high: float) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ShapeError(f"rand_uniform needs positive dimensions, got {rows}x{cols}")
    return low + (high - low) * rng.uniform(rows * cols).reshape(rows, cols)
