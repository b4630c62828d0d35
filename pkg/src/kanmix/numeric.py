"""Dense float64 arithmetic helpers and seeded random number generation.

Everything in this package runs on contiguous row-major float64 ndarrays.
The helpers here add the shape/finiteness checking that the rest of the
code relies on, plus a reproducible random source.

Randomness: ``SeededRng`` wraps the Philox 4x64 counter-based bit
generator (portable: a fixed ``(seed, stream)`` key yields the same
uniform stream on every platform).  Normal deviates are produced by
Box-Muller from consecutive uniform pairs, so a draw of n normals always
consumes exactly ``2 * ceil(n / 2)`` uniforms -- the stream position is a
pure function of the request sizes.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError, NumericalError

Array = np.ndarray


def as_tensor(data, shape=None) -> Array:
    """Coerce to a C-contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def ensure_finite(arr: Array, what: str = "tensor") -> Array:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} contains NaN or Inf")
    return arr


def matmul(a: Array, b: Array) -> Array:
    """Dense matrix product with explicit shape validation."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def reduce_moments(x: Array, axis: int) -> tuple[Array, Array]:
    """Mean and population variance along ``axis`` (reduced axis dropped)."""
    x = np.asarray(x, dtype=np.float64)
    if not -x.ndim <= axis < x.ndim:
        raise DomainError(f"axis {axis} out of range for shape {x.shape}")
    if x.shape[axis] == 0:
        raise DomainError("cannot reduce over an empty axis")
    mean = x.mean(axis=axis)
    var = x.var(axis=axis)  # ddof=0: population variance
    return mean, var


def softmax_rows(x: Array) -> Array:
    """Row-wise softmax with max-subtraction for stability."""
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D array, got shape {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class SeededRng:
    """Philox-backed random source with Box-Muller normals.

    ``stream`` derives independent substreams from one experiment seed
    (model init, batch shuffling, dropout masks and gate noise each get
    their own stream so consumption in one never shifts another).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed & 0xFFFFFFFFFFFFFFFF, self.stream])
        )

    def spawn(self, stream: int) -> "SeededRng":
        return SeededRng(self.seed, stream)

    def uniform(self, shape=(), lo: float = 0.0, hi: float = 1.0) -> Array:
        return lo + (hi - lo) * self._gen.random(shape)

    def normal(self, shape=(), mu: float = 0.0, sigma: float = 1.0) -> Array:
        """I.i.d. N(mu, sigma^2) draws via Box-Muller (pairwise consumption)."""
        if sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {sigma}")
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u = self._gen.random(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1]: keeps log() finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        out = mu + sigma * z[:n]
        return out.reshape(shape) if shape else float(out[0])

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, shape=()) -> Array:
        return self._gen.integers(lo, hi, size=shape)


def sample_normal(rng: SeededRng, shape, mu: float, sigma: float) -> Array:
    """Module-level alias for :meth:`SeededRng.normal`."""
    return np.atleast_1d(np.asarray(rng.normal(shape, mu, sigma)))
