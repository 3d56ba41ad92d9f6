"""Closed-form and quadrature-backed moment kernels of the unforced process.

The stationary covariance ``rho`` and the finite-start covariance are
evaluated in two independent representations:

* a spectral (cosine-transform) form with kernel x^(1-2H)/(1+theta^2 x^2),
* a direct form built from five one-dimensional integrals of
  exp(+/- z/theta) * z^(2H-1).

Every quantity the simulator produces can be cross-checked against one
of these, against the H -> 0/1 limit kernels, or against the large-time
variance level sigma^2 * theta^(2H) * H * Gamma(2H).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gamma as gamma_fn

from .errors import QuadratureError, TailFitError

__all__ = [
    "ModelParams",
    "QuadratureConfig",
    "TailFit",
    "c_h_constant",
    "rho_stationary",
    "cov_fou",
    "cov_fou_quadrature",
    "cov_fou_harmonizable",
    "cov_limit_h1",
    "cov_limit_h0",
    "var_asymptote",
    "cov_expansion",
    "tail_fit",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameter bundle: hurst H, time constant theta, noise intensity sigma,
    rest level v_rest and degenerate initial value v_init (None = v_rest).

    H = 0 and H = 1 are accepted only so the limit kernels can be
    addressed; generators and quadrature kernels require H in (0, 1).
    """

    hurst: float
    theta: float
    sigma: float = 1.0
    v_rest: float = 0.0
    v_init: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.hurst <= 1.0:
            raise ValueError(f"hurst must lie in [0, 1], got {self.hurst}")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def v0(self) -> float:
        return self.v_rest if self.v_init is None else self.v_init


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for the adaptive quadratures.

    ``osc_tail_tol`` caps the error estimate accepted from the
    oscillatory tail integrator before non-convergence is reported.
    Acceptance tolerances elsewhere are set at least 10x above these.
    """

    abs_tol: float = 1e-9
    rel_tol: float = 1e-8
    max_subdivisions: int = 200
    osc_tail_tol: float = 1e-9

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.osc_tail_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 10:
            raise ValueError("max_subdivisions must be at least 10")


DEFAULT_QUAD = QuadratureConfig()


@dataclass(frozen=True)
class TailFit:
    """Power-law fit of |C(t, t+s)| ~ amplitude * s^exponent."""

    exponent: float
    amplitude: float
    s_min: float
    s_max: float
    residual: float


def _require_interior_hurst(hurst: float) -> None:
    if not 0.0 < hurst < 1.0:
        raise ValueError(
            f"hurst must lie strictly inside (0, 1), got {hurst}; "
            "use cov_limit_h0/cov_limit_h1 at the endpoints"
        )


def c_h_constant(hurst: float) -> float:
    """Spectral normalization Gamma(2H+1) * sin(pi H) / (2 pi)."""
    _require_interior_hurst(hurst)
    return gamma_fn(2.0 * hurst + 1.0) * np.sin(np.pi * hurst) / (2.0 * np.pi)


def _quad(f, a, b, q: QuadratureConfig, **kw):
    """scipy quad with non-convergence turned into QuadratureError."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        out = quad(f, a, b, full_output=1, limit=q.max_subdivisions, **kw)
    val, err = out[0], out[1]
    if len(out) > 3 and err > 10.0 * max(q.abs_tol, q.rel_tol * abs(val)):
        raise QuadratureError(
            f"quadrature on [{a:g}, {b:g}] did not converge: achieved error "
            f"estimate {err:.3e} ({out[3].splitlines()[0]})"
        )
    return val, err


def _cos_kernel_integral(omega: float, hurst: float, theta: float, q: QuadratureConfig):
    """(value, error) of int_0^inf cos(omega x) x^(1-2H) / (1 + theta^2 x^2) dx.

    omega = 0 has the exact value pi * theta^(2H-2) / (2 sin(pi H)); for
    omega > 0 the head [0, x0] goes to plain adaptive quadrature (which
    absorbs the x^(1-2H) endpoint singularity) and the oscillatory tail
    to the cosine-weighted semi-infinite integrator, whose cycle sums are
    extrapolated with a certified error estimate.
    """
    if omega == 0.0:
        return np.pi * theta ** (2.0 * hurst - 2.0) / (2.0 * np.sin(np.pi * hurst)), 0.0

    def g(x):
        return x ** (1.0 - 2.0 * hurst) / (1.0 + (theta * x) ** 2)

    x0 = min(1.0 / theta, np.pi / (2.0 * omega))
    head, e1 = _quad(lambda x: np.cos(omega * x) * g(x), 0.0, x0, q,
                     epsabs=q.abs_tol * 1e-2, epsrel=q.rel_tol * 1e-2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        out = quad(g, x0, np.inf, weight="cos", wvar=omega, full_output=1,
                   epsabs=q.osc_tail_tol, limlst=100, limit=q.max_subdivisions)
    tail, e2 = out[0], out[1]
    if e2 > 10.0 * max(q.osc_tail_tol, q.rel_tol * abs(head + tail)):
        raise QuadratureError(
            f"oscillatory tail at omega={omega:g}, hurst={hurst:g} did not "
            f"converge: achieved error estimate {e2:.3e}"
        )
    return head + tail, e1 + e2


def rho_stationary(lag: float, p: ModelParams, q: QuadratureConfig | None = None) -> float:
    """Stationary covariance rho(s) of the unforced process at lag s.

    rho(s) = sigma^2 theta^2 C_H * 2 int_0^inf cos(s x) x^(1-2H)/(1+theta^2 x^2) dx;
    rho(0) = sigma^2 H Gamma(2H) theta^(2H) exactly, and H = 1/2 routes to
    the Markov closed form sigma^2 (theta/2) exp(-|s|/theta).
    """
    q = q or DEFAULT_QUAD
    _require_interior_hurst(p.hurst)
    lag = abs(lag)
    if p.hurst == 0.5:
        return p.sigma**2 * p.theta / 2.0 * np.exp(-lag / p.theta)
    if lag == 0.0:
        return p.sigma**2 * p.hurst * gamma_fn(2.0 * p.hurst) * p.theta ** (2.0 * p.hurst)
    val, _ = _cos_kernel_integral(lag, p.hurst, p.theta, q)
    return p.sigma**2 * p.theta**2 * c_h_constant(p.hurst) * 2.0 * val


def _exp_power_integral(lo: float, hi: float, shift: float, sign: float,
                        hurst: float, theta: float, q: QuadratureConfig):
    """(value, error) of int_lo^hi exp((sign*z + shift)/theta) z^(2H-1) dz.

    Callers arrange sign*z + shift <= 0 on [lo, hi] so the integrand never
    overflows. For H < 1/2 the z^(2H-1) endpoint singularity at lo = 0 is
    removed exactly by the substitution u = z^(2H) on [0, min(hi, theta)].
    Ranges whose exponential spans more than e^-45 are split at that point
    so the adaptive rule concentrates on the live boundary layer.
    """
    if hi <= lo:
        return 0.0, 0.0
    epsabs, epsrel = min(q.abs_tol * 1e-4, 1e-13), min(q.rel_tol * 1e-4, 1e-12)
    total, esum = 0.0, 0.0
    a = lo
    if lo == 0.0 and hurst < 0.5:
        z_edge = min(hi, theta)
        inv = 1.0 / (2.0 * hurst)

        def sub(u):
            return np.exp((sign * u**inv + shift) / theta) / (2.0 * hurst)

        v, e = _quad(sub, 0.0, z_edge ** (2.0 * hurst), q, epsabs=epsabs, epsrel=epsrel)
        total += v
        esum += e
        a = z_edge
        if a >= hi:
            return total, esum

    def f(z):
        return np.exp((sign * z + shift) / theta) * z ** (2.0 * hurst - 1.0)

    pts = [a, hi]
    ea, eb = (sign * a + shift) / theta, (sign * hi + shift) / theta
    if min(ea, eb) < -45.0 < max(ea, eb):
        zcut = (-45.0 * theta - shift) / sign
        if a < zcut < hi:
            pts = [a, zcut, hi]
    for x0, x1 in zip(pts[:-1], pts[1:]):
        v, e = _quad(f, x0, x1, q, epsabs=epsabs, epsrel=epsrel)
        total += v
        esum += e
    return total, esum


def _markov_cov(t: float, s: float, p: ModelParams) -> float:
    return p.sigma**2 * p.theta / 2.0 * (
        np.exp(-abs(t - s) / p.theta) - np.exp(-(t + s) / p.theta)
    )


def cov_fou_quadrature(t: float, s: float, p: ModelParams,
                       q: QuadratureConfig | None = None) -> float:
    """Finite-start covariance via the five exp-power integrals.

    Valid for any H in (0, 1) including 1/2; :func:`cov_fou` dispatches
    here except for the H = 1/2 closed-form shortcut. Each term keeps the
    outer exponential inside the integral so nothing overflows even for
    very large time separations.
    """
    q = q or DEFAULT_QUAD
    _require_interior_hurst(p.hurst)
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    t, s = (t, s) if t >= s else (s, t)
    if s == 0.0:
        return 0.0
    h, theta = p.hurst, p.theta
    lag = t - s
    terms = (
        (-1.0, (0.0, lag, -lag, +1.0)),
        (+1.0, (lag, t, lag, -1.0)),
        (-1.0, (s, t, -(t + s), +1.0)),
        (+1.0, (0.0, s, -lag, -1.0)),
        (+2.0, (0.0, t, -(t + s), +1.0)),
    )
    total, esum = 0.0, 0.0
    for coef, (lo, hi, shift, sign) in terms:
        v, e = _exp_power_integral(lo, hi, shift, sign, h, theta, q)
        total += coef * v
        esum += abs(coef) * e
    pref = h * p.sigma**2 / 2.0
    val = pref * total
    if pref * esum > 10.0 * max(q.abs_tol, q.rel_tol * abs(val)):
        raise QuadratureError(
            f"covariance quadrature at (t={t:g}, s={s:g}, H={h:g}) did not "
            f"converge: accumulated error estimate {pref * esum:.3e}"
        )
    return val


def cov_fou(t: float, s: float, p: ModelParams, q: QuadratureConfig | None = None) -> float:
    """Covariance Cov(V_t, V_s) of the unforced process started at a point.

    Symmetric in (t, s) and zero whenever min(t, s) = 0. H = 1/2 uses the
    exact Markov kernel sigma^2 (theta/2)(e^(-|t-s|/theta) - e^(-(t+s)/theta)).
    """
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    _require_interior_hurst(p.hurst)
    if p.hurst == 0.5:
        return _markov_cov(t, s, p)
    return cov_fou_quadrature(t, s, p, q)


def cov_fou_harmonizable(t: float, s: float, p: ModelParams,
                         q: QuadratureConfig | None = None) -> float:
    """Same covariance through the spectral representation.

    Evaluates sigma^2 theta^2 C_H * 2 * [I(|s-t|) - e^(-t/theta) I(s)
    - e^(-s/theta) I(t) + e^(-(t+s)/theta) I(0)] with I the cosine-kernel
    integral; the I(0) term has an exact value. Kept quadrature-based for
    every H so it stays an independent cross-check of :func:`cov_fou`.
    """
    q = q or DEFAULT_QUAD
    _require_interior_hurst(p.hurst)
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    if min(t, s) == 0.0:
        return 0.0
    theta = p.theta
    cache: dict[float, float] = {}

    def integral(omega: float) -> float:
        omega = abs(omega)
        if omega not in cache:
            cache[omega] = _cos_kernel_integral(omega, p.hurst, theta, q)[0]
        return cache[omega]

    bracket = (
        integral(s - t)
        - np.exp(-t / theta) * integral(s)
        - np.exp(-s / theta) * integral(t)
        + np.exp(-(t + s) / theta) * integral(0.0)
    )
    return p.sigma**2 * theta**2 * c_h_constant(p.hurst) * 2.0 * bracket


def cov_limit_h1(t: float, s: float, p: ModelParams) -> float:
    """H -> 1 limit kernel sigma^2 theta^2 (1 - e^(-s/theta))(1 - e^(-t/theta))."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    return p.sigma**2 * p.theta**2 * (1.0 - np.exp(-s / p.theta)) * (1.0 - np.exp(-t / p.theta))


def cov_limit_h0(t: float, s: float, p: ModelParams) -> float:
    """H -> 0 limit kernel: 0 on the axes, sigma^2/2 e^(-(t+s)/theta) off the
    diagonal, sigma^2/2 (1 + e^(-2t/theta)) on the diagonal."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    if min(t, s) == 0.0:
        return 0.0
    if t != s:
        return p.sigma**2 / 2.0 * np.exp(-(t + s) / p.theta)
    return p.sigma**2 / 2.0 * (1.0 + np.exp(-2.0 * t / p.theta))


def var_asymptote(p: ModelParams) -> float:
    """Large-time variance level sigma^2 theta^(2H) H Gamma(2H).

    Written as sigma^2 theta^(2H) Gamma(2H+1)/2, which extends
    continuously to H = 0 (sigma^2/2) and H = 1 (sigma^2 theta^2).
    """
    return p.sigma**2 * p.theta ** (2.0 * p.hurst) * gamma_fn(2.0 * p.hurst + 1.0) / 2.0


def cov_expansion(t: float, lag: float, order: int, p: ModelParams) -> float:
    """Large-lag expansion of Cov(V_t, V_(t+lag)) to the given order.

    (sigma^2/2) sum_{n=1..N} theta^(2n) prod_{k=0..2n-1}(2H - k)
    * [lag^(2H-2n) - e^(-t/theta) (t+lag)^(2H-2n)].
    Requires H != 1/2 (every coefficient vanishes there) and lag > t >= 0.
    """
    _require_interior_hurst(p.hurst)
    if p.hurst == 0.5:
        raise ValueError("the expansion excludes hurst = 1/2")
    if order < 1:
        raise ValueError("order must be >= 1")
    if not lag > t >= 0:
        raise ValueError("need lag > t >= 0")
    two_h, theta = 2.0 * p.hurst, p.theta
    total = 0.0
    for n in range(1, order + 1):
        coef = theta ** (2 * n)
        for k in range(2 * n):
            coef *= two_h - k
        total += coef * (lag ** (two_h - 2 * n) - np.exp(-t / theta) * (t + lag) ** (two_h - 2 * n))
    return p.sigma**2 / 2.0 * total


def tail_fit(kernel, t: float, s_range: tuple[float, float], n_points: int = 12) -> TailFit:
    """Least-squares fit of log|kernel(t, t+s)| against log s.

    ``kernel`` is any callable (t1, t2) -> covariance. Raises
    :class:`TailFitError` when the sampled values vanish, change sign, or
    fail to decay by at least a factor of two across the range (no
    power-law tail to fit, e.g. a kernel tending to a constant).
    """
    s_min, s_max = s_range
    if not 0 < s_min < s_max:
        raise ValueError("need 0 < s_min < s_max")
    if n_points < 3:
        raise ValueError("need at least 3 fit points")
    s = np.geomspace(s_min, s_max, n_points)
    vals = np.array([kernel(t, t + si) for si in s], dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals == 0.0):
        raise TailFitError("kernel values vanish or are not finite on the fit range")
    if len(set(np.sign(vals))) > 1:
        raise TailFitError("kernel values change sign on the fit range")
    mags = np.abs(vals)
    if mags[-1] >= 0.5 * mags[0]:
        raise TailFitError(
            f"no power-law decay on [{s_min:g}, {s_max:g}]: |C| only falls from "
            f"{mags[0]:.3e} to {mags[-1]:.3e}"
        )
    slope, intercept = np.polyfit(np.log(s), np.log(mags), 1)
    resid = np.log(mags) - (slope * np.log(s) + intercept)
    return TailFit(
        exponent=float(slope),
        amplitude=float(np.exp(intercept)),
        s_min=float(s_min),
        s_max=float(s_max),
        residual=float(np.sqrt(np.mean(resid**2))),
    )
