"""Fractional Gaussian noise and fractional Brownian motion generators.

Two exact samplers share one target law:

* circulant embedding — batch generation of increment vectors,
  O(n log n) via FFT, horizon fixed in advance;
* :class:`CholeskyStream` — node values grown one at a time by updating
  a Cholesky factor, so a path can be extended until a stopping rule
  fires without re-simulating.

Both are driven by the counter-based streams in :mod:`ffou.seeding`, so
identical (grid, hurst, seed) always reproduces identical bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalError
from .seeding import STREAM_NOISE, substream

__all__ = [
    "TimeGrid",
    "FgnSample",
    "CholeskyStream",
    "fgn_autocov",
    "fgn_covariance_matrix",
    "fbm_covariance_matrix",
    "simulate_fgn_circulant",
    "fgn_batch",
    "fbm_from_increments",
]

# relative floor below which negative circulant eigenvalues abort instead of clip
_EIG_TOL = 1e-9
# relative floor for pivots of the growing Cholesky factor
_PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``n`` steps of width ``dt``; node k is t_k = k*dt.

    A grid carries n+1 nodes including t_0 = 0; increment arrays have
    length n and node-value arrays length n+1.
    """

    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n < 1:
            raise ValueError(f"need at least one step, got n={self.n}")

    @classmethod
    def from_horizon(cls, dt: float, horizon: float) -> "TimeGrid":
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return cls(dt=dt, n=max(1, int(round(horizon / dt))))

    @property
    def horizon(self) -> float:
        return self.n * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt


def _check_hurst(hurst: float) -> None:
    if not 0.0 < hurst < 1.0:
        raise ValueError(
            f"hurst must lie strictly inside (0, 1), got {hurst}; "
            "the endpoint laws are covered by the analytic limit kernels"
        )


def fgn_autocov(k, hurst: float, dt: float = 1.0):
    """Autocovariance gamma(k) of fractional Gaussian noise at step dt.

    gamma(k) = dt^(2H)/2 * (|k+1|^(2H) - 2|k|^(2H) + |k-1|^(2H)),
    the stationary increment covariance of fractional Brownian motion.
    Accepts scalar or array lags; symmetric in k, gamma(0) = dt^(2H).
    """
    _check_hurst(hurst)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * hurst
    out = 0.5 * dt**two_h * ((k + 1.0) ** two_h - 2.0 * k**two_h + np.abs(k - 1.0) ** two_h)
    return out if out.ndim else float(out)


def fgn_covariance_matrix(n: int, hurst: float, dt: float = 1.0) -> np.ndarray:
    """Toeplitz covariance of the first n fGn increments."""
    gam = fgn_autocov(np.arange(n), hurst, dt)
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return gam[idx]


def fbm_covariance_matrix(n: int, hurst: float, dt: float = 1.0) -> np.ndarray:
    """Covariance of the fBm node values at t = dt, 2*dt, ..., n*dt."""
    _check_hurst(hurst)
    t = dt * np.arange(1, n + 1, dtype=float)
    two_h = 2.0 * hurst
    return 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h - np.abs(t[:, None] - t[None, :]) ** two_h)


def _next_pow2(m: int) -> int:
    p = 1
    while p < m:
        p *= 2
    return p


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(n: int, hurst: float, dt: float):
    """sqrt of the eigenvalues of the minimal power-of-two circulant embedding.

    The first row embeds gamma(0..m/2) with mirrored tail, m = 2^ceil(lg 2(n-1)),
    so the top-left n-by-n block of the circulant is the fGn Toeplitz matrix.
    fGn embeddings are nonnegative definite; eigenvalues below -1e-9 * max
    abort, values in [-1e-9 * max, 0) only absorb rounding and are clipped.
    """
    m = _next_pow2(2 * (n - 1))
    row = np.concatenate(
        [
            fgn_autocov(np.arange(m // 2 + 1), hurst, dt),
            fgn_autocov(np.arange(m // 2 - 1, 0, -1), hurst, dt),
        ]
    )
    eig = np.fft.fft(row).real
    top = eig.max()
    if eig.min() < -_EIG_TOL * top:
        raise NumericalError(
            f"circulant embedding failed: eigenvalue {eig.min():.3e} below "
            f"-{_EIG_TOL:g} * max ({top:.3e}) for n={n}, hurst={hurst}"
        )
    sq = np.sqrt(np.clip(eig, 0.0, None))
    sq.setflags(write=False)
    return sq, m


@dataclass(frozen=True)
class FgnSample:
    """One fGn increment vector together with its provenance."""

    grid: TimeGrid
    hurst: float
    seed: int
    increments: np.ndarray

    def __post_init__(self):
        if len(self.increments) != self.grid.n:
            raise ValueError("increment length does not match the grid")


def _fgn_rows(n: int, hurst: float, dt: float, xi: np.ndarray) -> np.ndarray:
    """Map complex standard-normal rows (shape (k, m)) to fGn rows (k, n)."""
    sq, m = _circulant_sqrt_eigs(n, hurst, dt)
    assert xi.shape[1] == m
    return (np.sqrt(m) * np.fft.ifft(sq * xi, axis=1)).real[:, :n]


def simulate_fgn_circulant(grid: TimeGrid, hurst: float, seed: int, path_index: int = 0) -> FgnSample:
    """Exact fGn sample on ``grid`` via circulant embedding.

    The joint law of the increments is exactly the Toeplitz gamma
    covariance. ``path_index`` selects the same substream that
    :func:`fgn_batch` uses, so single paths of an ensemble are
    reproducible in isolation.
    """
    _check_hurst(hurst)
    rng = substream(seed, path_index, STREAM_NOISE)
    if grid.n == 1:
        inc = rng.standard_normal(1) * grid.dt**hurst
        return FgnSample(grid=grid, hurst=hurst, seed=seed, increments=inc)
    _, m = _circulant_sqrt_eigs(grid.n, hurst, grid.dt)
    xi = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    inc = _fgn_rows(grid.n, hurst, grid.dt, xi[None, :])[0]
    return FgnSample(grid=grid, hurst=hurst, seed=seed, increments=inc)


def fgn_batch(grid: TimeGrid, hurst: float, master_seed: int, path_indices) -> np.ndarray:
    """fGn increments for many paths, one row per entry of ``path_indices``.

    Row i is bit-identical to
    ``simulate_fgn_circulant(grid, hurst, master_seed, path_indices[i])``.
    """
    _check_hurst(hurst)
    idx = np.asarray(path_indices, dtype=int)
    if grid.n == 1:
        out = np.empty((len(idx), 1))
        for row, p in enumerate(idx):
            out[row, 0] = substream(master_seed, int(p), STREAM_NOISE).standard_normal(1)[0]
        return out * grid.dt**hurst
    _, m = _circulant_sqrt_eigs(grid.n, hurst, grid.dt)
    xi = np.empty((len(idx), m), dtype=complex)
    for row, p in enumerate(idx):
        rng = substream(master_seed, int(p), STREAM_NOISE)
        xi[row] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return _fgn_rows(grid.n, hurst, grid.dt, xi)


def fbm_from_increments(sample) -> np.ndarray:
    """Cumulative fBm node values (length n+1, starting at 0).

    Accepts an :class:`FgnSample` or a plain increment array (1-D, or 2-D
    with one path per row).
    """
    inc = np.asarray(sample.increments if isinstance(sample, FgnSample) else sample, dtype=float)
    if inc.ndim == 1:
        return np.concatenate([[0.0], np.cumsum(inc)])
    zero = np.zeros((inc.shape[0], 1))
    return np.concatenate([zero, np.cumsum(inc, axis=1)], axis=1)


class CholeskyStream:
    """Streaming fBm sampler over nodes dt, 2*dt, 3*dt, ...

    Maintains the lower-triangular factor of the node covariance and
    draws one standard normal per node, so ``extend(64); extend(64)``
    emits exactly the same values as ``extend(128)``. Already-emitted
    values never change. Cost is O(k^2) per node; ``max_nodes`` guards
    the quadratic memory of the factor.

    Single-owner object: do not share mutably across workers.
    """

    def __init__(self, hurst: float, dt: float, seed: int | None = None,
                 rng: np.random.Generator | None = None, max_nodes: int = 2**14):
        _check_hurst(hurst)
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if (seed is None) == (rng is None):
            raise ValueError("provide exactly one of seed or rng")
        self.hurst = hurst
        self.dt = dt
        self.max_nodes = int(max_nodes)
        self._rng = rng if rng is not None else substream(seed, 0, STREAM_NOISE)
        cap = 128
        self._factor = np.zeros((cap, cap))
        self._z = np.zeros(cap)
        self._values = np.zeros(cap)
        self._n = 0

    def __len__(self) -> int:
        return self._n

    @property
    def values(self) -> np.ndarray:
        """fBm values at nodes dt..n*dt emitted so far (copy)."""
        return self._values[: self._n].copy()

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular factor L with L @ L.T the node covariance (copy)."""
        return self._factor[: self._n, : self._n].copy()

    def _grow(self, need: int) -> None:
        cap = self._factor.shape[0]
        if need <= cap:
            return
        new = cap
        while new < need:
            new *= 2
        new = min(new, self.max_nodes)
        f = np.zeros((new, new))
        f[:cap, :cap] = self._factor
        self._factor = f
        for name in ("_z", "_values"):
            arr = np.zeros(new)
            arr[:cap] = getattr(self, name)
            setattr(self, name, arr)

    def _cov_row(self, j: int, upto: int) -> np.ndarray:
        """Cov(B_{j*dt}, B_{i*dt}) for i = 1..upto (1-based node indices)."""
        two_h = 2.0 * self.hurst
        i = np.arange(1, upto + 1, dtype=float)
        return 0.5 * self.dt**two_h * (float(j) ** two_h + i**two_h - np.abs(j - i) ** two_h)

    def extend(self, m: int) -> np.ndarray:
        """Append m nodes and return their fBm values."""
        if m < 1:
            raise ValueError("extension size must be >= 1")
        if self._n + m > self.max_nodes:
            raise NumericalError(
                f"stream capped at {self.max_nodes} nodes (factor memory is "
                f"quadratic); requested {self._n + m}. Use a coarser dt."
            )
        self._grow(self._n + m)
        out = np.empty(m)
        for i in range(m):
            k = self._n  # 0-based row, node index k+1
            row = self._cov_row(k + 1, k + 1)
            if k == 0:
                w = np.empty(0)
                piv_sq = row[-1]
            else:
                w = solve_triangular(
                    self._factor[:k, :k], row[:-1], lower=True, check_finite=False
                )
                piv_sq = row[-1] - w @ w
            if piv_sq < -_PIVOT_TOL * row[-1]:
                raise NumericalError(
                    f"Cholesky update failed at node {k + 1}: pivot^2 = {piv_sq:.3e}"
                )
            piv = np.sqrt(max(piv_sq, 0.0))
            z_new = self._rng.standard_normal()
            self._factor[k, :k] = w
            self._factor[k, k] = piv
            self._z[k] = z_new
            val = (w @ self._z[:k] if k else 0.0) + piv * z_new
            self._values[k] = val
            out[i] = val
            self._n += 1
        return out
