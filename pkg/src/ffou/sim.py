"""Path simulation of the forced process and its analytic moments.

Two discretizations of dV = [-(V - v_rest)/theta + I_t] dt + sigma dB^H:

* Euler — consumes fBm increments, first order in dt;
* trapezoid — exact integrating-factor kernel exp(-dt/theta) with the
  remaining integrals closed by one trapezoid step; consumes fBm node
  values and is second order in dt for smooth drives.

Both accept the same noise arrays so cross-scheme comparisons share
noise exactly. Ensembles are generated path-by-path from counter-based
substreams and are therefore order-independent and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forcing as fr
from . import kernels as kr
from .fgn import TimeGrid, fbm_from_increments, fgn_batch
from .kernels import DEFAULT_QUAD, ModelParams, QuadratureConfig
from .errors import QuadratureError
from .seeding import STREAM_FORCING, STREAM_FROZEN, substream

__all__ = [
    "PathEnsemble",
    "MomentReport",
    "TrapezoidCoeffs",
    "trapezoid_coefficients",
    "simulate_euler",
    "simulate_trapezoid",
    "mean_v",
    "cov_v",
    "var_v",
    "simulate_ensemble",
    "ensemble_stats",
]


def _conform(values, grid: TimeGrid, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != grid.n + 1:
        raise ValueError(
            f"{name} must carry n+1 = {grid.n + 1} node values, got shape {arr.shape}"
        )
    return arr


def simulate_euler(p: ModelParams, forcing_path, fbm_path, grid: TimeGrid) -> np.ndarray:
    """Euler recursion V_k+1 = V_k + (-(V_k - v_rest)/theta + I_k) dt + sigma dB_k.

    ``forcing_path`` and ``fbm_path`` hold node values (length n+1; 2-D
    input runs one path per row). Starts at p.v0.
    """
    I = _conform(forcing_path, grid, "forcing path")
    B = _conform(fbm_path, grid, "fBm path")
    dt, theta = grid.dt, p.theta
    V = np.empty(np.broadcast_shapes(I.shape, B.shape))
    V[..., 0] = p.v0
    for k in range(grid.n):
        drift = (-(V[..., k] - p.v_rest) / theta + I[..., k]) * dt
        V[..., k + 1] = V[..., k] + drift + p.sigma * (B[..., k + 1] - B[..., k])
    return V


@dataclass(frozen=True)
class TrapezoidCoeffs:
    """Per-step coefficients of the trapezoid recursion.

    V_k+1 = base + decay*V_k + b_new*B_k+1 + b_old*B_k + i_new*I_k+1 + i_old*I_k
    """

    base: float
    decay: float
    b_new: float
    b_old: float
    i_new: float
    i_old: float


def trapezoid_coefficients(p: ModelParams, dt: float) -> TrapezoidCoeffs:
    a = np.exp(-dt / p.theta)
    half = dt / (2.0 * p.theta)
    return TrapezoidCoeffs(
        base=p.v_rest * (1.0 - a),
        decay=a,
        b_new=p.sigma * (1.0 - half),
        b_old=-p.sigma * a * (1.0 + half),
        i_new=dt / 2.0,
        i_old=dt / 2.0 * a,
    )


def simulate_trapezoid(p: ModelParams, forcing_path, fbm_path, grid: TimeGrid,
                       coeffs: TrapezoidCoeffs | None = None) -> np.ndarray:
    """Integrating-factor recursion with trapezoid-closed integrals.

    Consumes fBm node values (not increments). With sigma = 0 and zero
    forcing the rest level is an exact fixed point.
    """
    I = _conform(forcing_path, grid, "forcing path")
    B = _conform(fbm_path, grid, "fBm path")
    c = coeffs or trapezoid_coefficients(p, grid.dt)
    V = np.empty(np.broadcast_shapes(I.shape, B.shape))
    V[..., 0] = p.v0
    for k in range(grid.n):
        V[..., k + 1] = (
            c.base + c.decay * V[..., k]
            + c.b_new * B[..., k + 1] + c.b_old * B[..., k]
            + c.i_new * I[..., k + 1] + c.i_old * I[..., k]
        )
    return V


# --------------------------------------------------------------------------
# analytic moments


def _mean_forcing_integral(forcing, t: float, theta: float, q: QuadratureConfig) -> float:
    """int_0^t exp((s-t)/theta) E[I_s] ds, closed forms where available."""
    if t == 0.0:
        return 0.0
    if isinstance(forcing, fr.Zero):
        return 0.0
    if isinstance(forcing, fr.Constant):
        return forcing.level * theta * -np.expm1(-t / theta)
    if isinstance(forcing, fr.ExpDecay):
        tau = forcing.tau
        if tau == theta:
            return forcing.level * t * np.exp(-t / theta)
        return forcing.level * theta * tau / (tau - theta) * (np.exp(-t / tau) - np.exp(-t / theta))
    if isinstance(forcing, fr.HeavisideSum):
        marginals = _heaviside_marginals(forcing)
        return sum(a * _exp_weighted_cdf_integral(F_closed, t, theta, q)
                   for a, F_closed in marginals)
    # generic numeric fallback (Periodic and anything else with a pointwise mean)
    val, _ = kr._quad(lambda s: np.exp((s - t) / theta) * fr.forcing_mean(forcing, s),
                      0.0, t, q, epsabs=q.abs_tol, epsrel=q.rel_tol)
    return val


def _heaviside_marginals(forcing: fr.HeavisideSum):
    """(amplitude, marginal-CDF descriptor) pairs for each stimulus."""
    if forcing.dependence == "shared":
        total = sum(forcing.amplitudes)
        return [(total, forcing.laws[0])]
    if forcing.dependence == "independent":
        return list(zip(forcing.amplitudes, forcing.laws))
    grid = fr._ordered_activation(forcing.laws)
    return [(a, (grid, i)) for i, a in enumerate(forcing.amplitudes)]


def _exp_weighted_cdf_integral(law_or_grid, t: float, theta: float, q: QuadratureConfig) -> float:
    """int_0^t exp((s-t)/theta) F(s) ds for an activation marginal."""
    if isinstance(law_or_grid, fr.Degenerate):
        t0 = law_or_grid.t0
        if t <= t0:
            return 0.0
        return theta * -np.expm1((t0 - t) / theta)
    if isinstance(law_or_grid, fr.Exponential):
        lam = law_or_grid.rate
        base = theta * -np.expm1(-t / theta)
        if lam == 1.0 / theta:
            return base - t * np.exp(-t / theta)
        return base - (np.exp(-lam * t) - np.exp(-t / theta)) / (1.0 / theta - lam)
    if isinstance(law_or_grid, tuple):  # ordered marginal: (OrderedActivation, index)
        grid, idx = law_or_grid
        F = lambda s: grid.t_cdf(idx, s)
    else:
        F = lambda s: fr.activation_cdf(law_or_grid, s)
    val, _ = kr._quad(lambda s: np.exp((s - t) / theta) * F(s), 0.0, t, q,
                      epsabs=q.abs_tol, epsrel=q.rel_tol)
    return val


def mean_v(p: ModelParams, forcing, t: float, q: QuadratureConfig | None = None) -> float:
    """E[V_t] = (1 - e^(-t/theta)) v_rest + e^(-t/theta) v0 + forcing response."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    q = q or DEFAULT_QUAD
    decay = np.exp(-t / p.theta)
    return (1.0 - decay) * p.v_rest + decay * p.v0 + _mean_forcing_integral(forcing, t, p.theta, q)


def _forcing_cov_double_integral(forcing, t: float, s: float, theta: float,
                                 q: QuadratureConfig) -> float:
    return _forcing_cov_double_integral_with(fr.forcing_cov, forcing, t, s, theta, q)


def _forcing_cov_double_integral_with(cov_fn, forcing, t: float, s: float,
                                      theta: float, q: QuadratureConfig) -> float:
    """iint over [0,t]x[0,s] of e^((u-t)/theta) e^((v-s)/theta) c(u,v) du dv.

    The rectangle is split along the diagonal because c has a min/max kink
    there; the weight is kept inside the integrand so nothing overflows.
    Outer ranges wider than 45*theta are split where the weight dies.
    """
    from scipy.integrate import dblquad

    t1, t2 = max(t, s), min(t, s)
    if t2 == 0.0:
        return 0.0
    eps = dict(epsabs=q.abs_tol * 0.1, epsrel=q.rel_tol)

    def below(v, u):  # v <= min(u, t2)
        return np.exp((u - t1) / theta + (v - t2) / theta) * cov_fn(forcing, u, v)

    def above(u, v):  # u < v <= t2
        return np.exp((u - t1) / theta + (v - t2) / theta) * cov_fn(forcing, u, v)

    total, esum = 0.0, 0.0
    cut = max(0.0, t1 - 45.0 * theta)
    for a, b in ([(0.0, cut), (cut, t1)] if cut > 0 else [(0.0, t1)]):
        val, err = dblquad(below, a, b, 0.0, lambda u: min(u, t2), **eps)
        total += val
        esum += err
    val, err = dblquad(above, 0.0, t2, 0.0, lambda v: v, **eps)
    total += val
    esum += err
    if esum > 100.0 * max(q.abs_tol, q.rel_tol * abs(total)):
        raise QuadratureError(
            f"forcing covariance double integral at (t={t:g}, s={s:g}) did not "
            f"converge: error estimate {esum:.3e}"
        )
    return total


def cov_v(p: ModelParams, forcing, t: float, s: float,
          q: QuadratureConfig | None = None) -> float:
    """Cov(V_t, V_s) with forcing independent of the noise.

    Deterministic forcing contributes nothing, so the value reduces to the
    unforced kernel exactly.
    """
    q = q or DEFAULT_QUAD
    base = kr.cov_fou(t, s, p, q)
    if fr.is_deterministic(forcing):
        return base
    return base + _forcing_cov_double_integral(forcing, t, s, p.theta, q)


def var_v(p: ModelParams, forcing, t: float, q: QuadratureConfig | None = None) -> float:
    """Var[V_t] = cov_v(t, t) by construction."""
    return cov_v(p, forcing, t, t, q)


# --------------------------------------------------------------------------
# ensembles


@dataclass
class PathEnsemble:
    """Simulated paths, one per row; column k is node t_k = k*dt."""

    grid: TimeGrid
    params: ModelParams
    scheme: str
    master_seed: int
    values: np.ndarray
    frozen_activations: bool = False

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def simulate_ensemble(p: ModelParams, forcing, grid: TimeGrid, n_paths: int,
                      master_seed: int, scheme: str = "trapezoid",
                      frozen_activations: bool = False,
                      chunk_size: int = 1024) -> PathEnsemble:
    """Generate an ensemble of paths with per-path counter-based substreams.

    Noise for path i comes from stream (seed, i, noise); activation times
    from (seed, i, forcing), or from the single stream (seed, 0, frozen)
    when ``frozen_activations`` holds one realization fixed across paths.
    """
    if scheme not in ("euler", "trapezoid"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if n_paths < 1:
        raise ValueError("need at least one path")
    frozen_path = None
    if frozen_activations:
        times = fr.sample_activation_times(forcing, substream(master_seed, 0, STREAM_FROZEN))
        frozen_path = fr.forcing_path_from_times(forcing, grid, times)
    deterministic = fr.is_deterministic(forcing)
    det_path = fr.sample_forcing_path(forcing, grid, substream(master_seed, 0, STREAM_FROZEN)) \
        if deterministic else None

    values = np.empty((n_paths, grid.n + 1))
    for start in range(0, n_paths, chunk_size):
        idx = np.arange(start, min(start + chunk_size, n_paths))
        inc = fgn_batch(grid, p.hurst, master_seed, idx)
        B = fbm_from_increments(inc)
        if deterministic:
            I = np.broadcast_to(det_path, (len(idx), grid.n + 1))
        elif frozen_activations:
            I = np.broadcast_to(frozen_path, (len(idx), grid.n + 1))
        else:
            I = np.empty((len(idx), grid.n + 1))
            for row, pi in enumerate(idx):
                times = fr.sample_activation_times(forcing, substream(master_seed, int(pi), STREAM_FORCING))
                I[row] = fr.forcing_path_from_times(forcing, grid, times)
        sim = simulate_trapezoid if scheme == "trapezoid" else simulate_euler
        values[idx] = sim(p, I, B, grid)
    return PathEnsemble(grid=grid, params=p, scheme=scheme, master_seed=master_seed,
                        values=values, frozen_activations=frozen_activations)


@dataclass
class MomentReport:
    """Per-node empirical moments with standard errors and analytic pairs.

    Analytic variance/covariance entries are NaN at nodes where they were
    not evaluated (they need one quadrature each; see ``analytic_stride``).
    ``degenerate`` flags single-path ensembles whose spread estimates are
    meaningless.
    """

    times: np.ndarray
    emp_mean: np.ndarray
    emp_var: np.ndarray
    emp_cov_anchor: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    analytic_mean: np.ndarray
    analytic_var: np.ndarray
    analytic_cov: np.ndarray
    anchor_time: float
    n_paths: int
    degenerate: bool

    COLUMNS = ("time", "emp_mean", "emp_var", "emp_cov_anchor", "se_mean",
               "se_var", "analytic_mean", "analytic_var", "analytic_cov")

    def rows(self):
        """Row tuples in CSV column order."""
        return zip(self.times, self.emp_mean, self.emp_var, self.emp_cov_anchor,
                   self.se_mean, self.se_var, self.analytic_mean,
                   self.analytic_var, self.analytic_cov)


def ensemble_stats(ensemble: PathEnsemble, anchor_time: float, forcing=None,
                   q: QuadratureConfig | None = None,
                   analytic_stride: int | None = None) -> MomentReport:
    """Empirical mean/variance/anchored covariance with moment-based SEs.

    Passing the forcing term fills the analytic columns: the mean at every
    node, variance and anchored covariance every ``analytic_stride`` nodes
    (default about 32 evaluations). Frozen-activation ensembles pair with
    the realized-path analytics only for the mean, so analytic variance is
    left out there.
    """
    q = q or DEFAULT_QUAD
    vals = ensemble.values
    n_paths, n_nodes = vals.shape
    times = ensemble.grid.times()
    k_anchor = int(np.argmin(np.abs(times - anchor_time)))
    degenerate = n_paths < 2

    mean = vals.mean(axis=0)
    centered = vals - mean
    if degenerate:
        var = np.zeros(n_nodes)
        cov = np.zeros(n_nodes)
        se_mean = np.full(n_nodes, np.nan)
        se_var = np.full(n_nodes, np.nan)
    else:
        var = (centered**2).sum(axis=0) / (n_paths - 1)
        cov = (centered * centered[:, [k_anchor]]).sum(axis=0) / (n_paths - 1)
        m4 = (centered**4).mean(axis=0)
        se_mean = np.sqrt(var / n_paths)
        # distribution-free SE of the sample variance via the fourth moment
        se_var = np.sqrt(np.maximum(m4 - var**2 * (n_paths - 3) / (n_paths - 1), 0.0) / n_paths)

    ana_mean = np.full(n_nodes, np.nan)
    ana_var = np.full(n_nodes, np.nan)
    ana_cov = np.full(n_nodes, np.nan)
    if forcing is not None and not ensemble.frozen_activations:
        p = ensemble.params
        for k in range(n_nodes):
            ana_mean[k] = mean_v(p, forcing, times[k], q)
        stride = analytic_stride or max(1, n_nodes // 32)
        marks = sorted(set(range(0, n_nodes, stride)) | {n_nodes - 1, k_anchor})
        for k in marks:
            ana_var[k] = var_v(p, forcing, times[k], q)
            ana_cov[k] = cov_v(p, forcing, times[k], times[k_anchor], q)
    return MomentReport(
        times=times, emp_mean=mean, emp_var=var, emp_cov_anchor=cov,
        se_mean=se_mean, se_var=se_var, analytic_mean=ana_mean,
        analytic_var=ana_var, analytic_cov=ana_cov,
        anchor_time=float(times[k_anchor]), n_paths=n_paths, degenerate=degenerate,
    )
