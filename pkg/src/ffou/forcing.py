"""Stimulus processes: deterministic drives and Heaviside sums with random
activation times, together with their exact mean and covariance kernels.

Activation laws: Degenerate (fixed time), Exponential, and one-sided
PositiveStable. The stable law is sampled by the Kanter transform and its
distribution function evaluated from the matching integral representation;
alpha = 1/2 reduces to the Levy closed form erfc(sqrt(c/(2t))), which
anchors both. The scale convention makes T = 2*c*S for a standard one-sided
stable S (Laplace exponent (2*c*lambda)^alpha), exactly so that the
alpha = 1/2 case is Levy with scale c.

Heaviside activation is right-continuous: h(0) = 1, so a stimulus is "on"
at its own activation instant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.optimize import brentq
from scipy.signal import fftconvolve
from scipy.special import erf, erfc, erfcinv

from .errors import GridResolutionError
from .fgn import TimeGrid

__all__ = [
    "Degenerate",
    "Exponential",
    "PositiveStable",
    "Zero",
    "Constant",
    "ExpDecay",
    "Periodic",
    "HeavisideSum",
    "activation_cdf",
    "activation_sf",
    "activation_pdf",
    "activation_sample",
    "activation_quantile",
    "forcing_mean",
    "forcing_cov",
    "forcing_value",
    "is_deterministic",
    "sample_activation_times",
    "forcing_path_from_times",
    "sample_forcing_path",
]


# --------------------------------------------------------------------------
# activation laws


@dataclass(frozen=True)
class Degenerate:
    """Activation at the fixed time t0."""

    t0: float

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError("activation time must be nonnegative")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class PositiveStable:
    """One-sided stable activation time, index alpha in (0, 1), scale c > 0."""

    alpha: float
    scale: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("stable index must lie in (0, 1)")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


ActivationLaw = Degenerate | Exponential | PositiveStable


def _kanter_a(u, alpha: float):
    """Auxiliary a(u) on (0, pi) for the one-sided stable transform."""
    with np.errstate(over="ignore", divide="ignore"):
        la = (
            alpha / (1.0 - alpha) * np.log(np.sin(alpha * u))
            + np.log(np.sin((1.0 - alpha) * u))
            - 1.0 / (1.0 - alpha) * np.log(np.sin(u))
        )
        return np.exp(la)


def _stable_cdf_std(x: float, alpha: float) -> float:
    """CDF at x of the standard one-sided stable S, E exp(-l S) = exp(-l^alpha)."""
    if x <= 0.0:
        return 0.0
    r = alpha / (1.0 - alpha)
    xr = x**-r

    def f(u):
        with np.errstate(over="ignore"):
            return np.exp(-_kanter_a(u, alpha) * xr)

    val, _ = quad(f, 0.0, np.pi, epsabs=1e-12, epsrel=1e-11, limit=300)
    return val / np.pi


def _stable_sf_std(x: float, alpha: float) -> float:
    """Survival 1 - CDF, computed directly to keep far-tail accuracy."""
    if x <= 0.0:
        return 1.0
    r = alpha / (1.0 - alpha)
    xr = x**-r

    def f(u):
        with np.errstate(over="ignore"):
            return -np.expm1(-_kanter_a(u, alpha) * xr)

    val, _ = quad(f, 0.0, np.pi, epsabs=1e-13, epsrel=1e-11, limit=300)
    return val / np.pi


def _stable_pdf_std(x: float, alpha: float) -> float:
    if x <= 0.0:
        return 0.0
    r = alpha / (1.0 - alpha)
    xr = x**-r

    def f(u):
        a = _kanter_a(u, alpha)
        with np.errstate(over="ignore", invalid="ignore"):
            out = a * np.exp(-a * xr)
        return np.where(np.isfinite(out), out, 0.0)

    val, _ = quad(f, 0.0, np.pi, epsabs=1e-13, epsrel=1e-10, limit=300)
    return r * x ** (-r - 1.0) * val / np.pi


def _scalar_map(fn, t):
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return float(fn(float(t)))
    return np.array([fn(float(x)) for x in t.ravel()]).reshape(t.shape)


def activation_cdf(law: ActivationLaw, t):
    """P(T <= t); exact for Degenerate, Exponential and alpha = 1/2,
    integral-representation quadrature otherwise. Scalar or array t."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    if isinstance(law, Degenerate):
        out = (t >= law.t0).astype(float)
    elif isinstance(law, Exponential):
        out = np.where(t > 0, -np.expm1(-law.rate * np.maximum(t, 0.0)), 0.0)
    elif isinstance(law, PositiveStable):
        if law.alpha == 0.5:
            with np.errstate(divide="ignore"):
                out = np.where(t > 0, erfc(np.sqrt(law.scale / (2.0 * np.maximum(t, 1e-300)))), 0.0)
        else:
            out = _scalar_map(lambda x: _stable_cdf_std(x / (2.0 * law.scale), law.alpha), t)
    else:
        raise TypeError(f"unknown activation law {law!r}")
    return float(out) if scalar else out


def activation_sf(law: ActivationLaw, t):
    """P(T > t), evaluated without 1 - cdf cancellation in the tails."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    if isinstance(law, Degenerate):
        out = (t < law.t0).astype(float)
    elif isinstance(law, Exponential):
        out = np.where(t > 0, np.exp(-law.rate * np.maximum(t, 0.0)), 1.0)
    elif isinstance(law, PositiveStable):
        if law.alpha == 0.5:
            out = np.where(t > 0, erf(np.sqrt(law.scale / (2.0 * np.maximum(t, 1e-300)))), 1.0)
        else:
            out = _scalar_map(lambda x: _stable_sf_std(x / (2.0 * law.scale), law.alpha), t)
    else:
        raise TypeError(f"unknown activation law {law!r}")
    return float(out) if scalar else out


def activation_pdf(law: ActivationLaw, t):
    """Density of T. Degenerate laws have none and raise ValueError."""
    if isinstance(law, Degenerate):
        raise ValueError("a degenerate activation time has no density")
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    if isinstance(law, Exponential):
        out = np.where(t >= 0, law.rate * np.exp(-law.rate * np.maximum(t, 0.0)), 0.0)
    elif isinstance(law, PositiveStable):
        c2 = 2.0 * law.scale
        out = _scalar_map(lambda x: _stable_pdf_std(x / c2, law.alpha) / c2, t)
    else:
        raise TypeError(f"unknown activation law {law!r}")
    return float(out) if scalar else out


def activation_sample(law: ActivationLaw, rng: np.random.Generator, size=None):
    """Draw activation times; the stable branch uses the Kanter transform."""
    if isinstance(law, Degenerate):
        return law.t0 if size is None else np.full(size, law.t0)
    if isinstance(law, Exponential):
        return rng.standard_exponential(size) / law.rate
    if isinstance(law, PositiveStable):
        u = rng.uniform(0.0, np.pi, size)
        w = rng.standard_exponential(size)
        s = (_kanter_a(u, law.alpha) / w) ** ((1.0 - law.alpha) / law.alpha)
        return 2.0 * law.scale * s
    raise TypeError(f"unknown activation law {law!r}")


def activation_quantile(law: ActivationLaw, prob: float) -> float:
    """Inverse CDF; bisection for stable indices without a closed form."""
    if not 0.0 < prob < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    if isinstance(law, Degenerate):
        return law.t0
    if isinstance(law, Exponential):
        return -np.log1p(-prob) / law.rate
    if isinstance(law, PositiveStable):
        if law.alpha == 0.5:
            return law.scale / (2.0 * erfcinv(prob) ** 2)
        lo, hi = 1e-12, 1.0
        while activation_cdf(law, hi) < prob:
            hi *= 4.0
            if hi > 1e30:
                raise GridResolutionError("stable quantile search overflowed")
        return brentq(lambda x: activation_cdf(law, x) - prob, lo, hi, xtol=1e-10, rtol=1e-10)
    raise TypeError(f"unknown activation law {law!r}")


# --------------------------------------------------------------------------
# forcing terms


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Constant:
    level: float


@dataclass(frozen=True)
class ExpDecay:
    level: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("decay constant must be positive")


@dataclass(frozen=True)
class Periodic:
    """amplitude * sin(2 pi t / period + phase)."""

    amplitude: float
    period: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")


@dataclass(frozen=True)
class HeavisideSum:
    """Sum of step stimuli a_i * h(t - T_i) with random activation times.

    dependence:
      * "independent" — laws[i] is the marginal law of T_i, all independent;
      * "ordered"     — laws[i] is the law of the gap J_i, T_i = J_1+...+J_i
                        (gaps independent, each must admit a density);
      * "shared"      — one law, a single T shared by every amplitude.
    """

    amplitudes: tuple[float, ...]
    laws: tuple[ActivationLaw, ...]
    dependence: str = "independent"

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "laws", tuple(self.laws))
        if not self.amplitudes:
            raise ValueError("need at least one stimulus")
        if self.dependence not in ("independent", "ordered", "shared"):
            raise ValueError(f"unknown dependence {self.dependence!r}")
        if self.dependence == "shared":
            if len(self.laws) != 1:
                raise ValueError("shared activation takes exactly one law")
        elif len(self.laws) != len(self.amplitudes):
            raise ValueError("need one law per amplitude")
        if self.dependence == "ordered" and any(isinstance(l, Degenerate) for l in self.laws):
            raise ValueError("ordered gaps must admit densities; Degenerate does not")


ForcingTerm = Zero | Constant | ExpDecay | Periodic | HeavisideSum


def is_deterministic(forcing: ForcingTerm) -> bool:
    """True when the forcing path carries no randomness (covariance is 0).

    A Heaviside sum with only degenerate activation times counts as
    deterministic."""
    if isinstance(forcing, HeavisideSum):
        return all(isinstance(l, Degenerate) for l in forcing.laws)
    return True


def forcing_value(forcing: ForcingTerm, t):
    """Deterministic path value; HeavisideSum requires degenerate laws."""
    t = np.asarray(t, dtype=float)
    if isinstance(forcing, Zero):
        out = np.zeros_like(t)
    elif isinstance(forcing, Constant):
        out = np.full_like(t, forcing.level)
    elif isinstance(forcing, ExpDecay):
        out = forcing.level * np.exp(-t / forcing.tau)
    elif isinstance(forcing, Periodic):
        out = forcing.amplitude * np.sin(2.0 * np.pi * t / forcing.period + forcing.phase)
    elif isinstance(forcing, HeavisideSum):
        if not is_deterministic(forcing):
            raise ValueError("stochastic forcing has no deterministic value; sample a path")
        times = _degenerate_times(forcing)
        out = _step_sum(forcing.amplitudes, times, t)
    else:
        raise TypeError(f"unknown forcing {forcing!r}")
    return float(out) if out.ndim == 0 else out


def _degenerate_times(forcing: HeavisideSum) -> np.ndarray:
    t0 = np.array([l.t0 for l in forcing.laws])
    if forcing.dependence == "ordered":
        t0 = np.cumsum(t0)
    elif forcing.dependence == "shared":
        t0 = np.full(len(forcing.amplitudes), t0[0])
    return t0


def _step_sum(amplitudes, times, t):
    t = np.asarray(t, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    times = np.asarray(times, dtype=float)
    return np.tensordot((t[..., None] >= times), amps, axes=([-1], [0]))


# --------------------------------------------------------------------------
# ordered activation machinery: shared convolution grid

_ORDERED_POINTS = 2**14
_ORDERED_TAIL_MASS = 1e-6
_ORDERED_MIN_CELLS = 8


class OrderedActivation:
    """Grid cache for T_i = J_1 + ... + J_i with independent gap laws.

    Gap densities are sampled on one uniform grid spanning the
    (1 - 1e-6)-quantile of the full gap sum, convolved by FFT, and
    integrated with the trapezoid rule. Construction fails loudly when a
    gap density cannot be resolved on that grid.
    """

    def __init__(self, laws, n_points: int = _ORDERED_POINTS,
                 tail_mass: float = _ORDERED_TAIL_MASS):
        self.laws = tuple(laws)
        n = len(self.laws)
        p_each = 1.0 - tail_mass / n
        span = sum(activation_quantile(law, p_each) for law in self.laws)
        self.x = np.linspace(0.0, span, n_points)
        self.h = self.x[1] - self.x[0]
        for law in self.laws:
            width = activation_quantile(law, 0.75) - activation_quantile(law, 0.25)
            if width < _ORDERED_MIN_CELLS * self.h:
                raise GridResolutionError(
                    f"gap law {law!r} spans {width:.3g} but the convolution grid "
                    f"cell is {self.h:.3g}; its density is not representable "
                    f"(needs >= {_ORDERED_MIN_CELLS} cells)"
                )
        self._gap_pdf = [np.asarray(activation_pdf(law, self.x)) for law in self.laws]
        self._sum_pdf_cache: dict[tuple[int, int], np.ndarray] = {}
        self._cdf_cache: dict[tuple[int, int], np.ndarray] = {}

    def _pdf_of_sum(self, j: int, i: int) -> np.ndarray:
        """Density on the grid of the sum of gaps j..i-1 (0-based slice [j, i))."""
        key = (j, i)
        if key not in self._sum_pdf_cache:
            dens = self._gap_pdf[j]
            for k in range(j + 1, i):
                dens = fftconvolve(dens, self._gap_pdf[k])[: len(self.x)] * self.h
            self._sum_pdf_cache[key] = dens
        return self._sum_pdf_cache[key]

    def _cdf_of_sum(self, j: int, i: int) -> np.ndarray:
        key = (j, i)
        if key not in self._cdf_cache:
            pdf = self._pdf_of_sum(j, i)
            cdf = np.concatenate([[0.0], cumulative_trapezoid(pdf, dx=self.h)])
            self._cdf_cache[key] = np.minimum(cdf, 1.0)
        return self._cdf_cache[key]

    def t_pdf(self, i: int, t) -> np.ndarray:
        """Density of the i-th activation time (0-based), the sum of gaps 0..i."""
        return np.interp(t, self.x, self._pdf_of_sum(0, i + 1), left=0.0, right=0.0)

    def t_cdf(self, i: int, t):
        return np.interp(t, self.x, self._cdf_of_sum(0, i + 1), left=0.0, right=1.0)

    def gap_sum_cdf(self, j: int, i: int, t):
        """CDF at t of the sum of gaps j..i-1 (0-based slice [j, i))."""
        return np.interp(t, self.x, self._cdf_of_sum(j, i), left=0.0, right=1.0)


@lru_cache(maxsize=8)
def _ordered_activation(laws: tuple) -> OrderedActivation:
    return OrderedActivation(laws)


# --------------------------------------------------------------------------
# moments


def forcing_mean(forcing: ForcingTerm, t):
    """E[I_t]; for Heaviside sums this is sum_i a_i * F_{T_i}(t)."""
    if not isinstance(forcing, HeavisideSum):
        return forcing_value(forcing, t)
    t_arr = np.asarray(t, dtype=float)
    amps = np.asarray(forcing.amplitudes)
    if forcing.dependence == "shared":
        out = amps.sum() * np.asarray(activation_cdf(forcing.laws[0], t_arr))
    elif forcing.dependence == "independent":
        out = sum(a * np.asarray(activation_cdf(law, t_arr))
                  for a, law in zip(amps, forcing.laws))
    else:
        grid = _ordered_activation(forcing.laws)
        out = sum(a * np.asarray(grid.t_cdf(i, t_arr)) for i, a in enumerate(amps))
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def _ordered_cov(forcing: HeavisideSum, t: float, s: float) -> float:
    """Covariance kernel for ordered activations, t >= s.

    Diagonal terms use F_{T_j}(s)(1 - F_{T_j}(t)). For a pair with the
    earlier-activating component at the later time the joint event reduces
    to {T_later <= s}. The remaining pairs integrate the earlier activation
    density over [0, s] against the gap-sum CDF at (t - u), minus the
    product of the marginals.
    """
    grid = _ordered_activation(forcing.laws)
    amps = forcing.amplitudes
    n = len(amps)
    f_t = [float(grid.t_cdf(i, t)) for i in range(n)]
    f_s = [float(grid.t_cdf(i, s)) for i in range(n)]
    total = 0.0
    for j in range(n):
        total += amps[j] ** 2 * f_s[j] * (1.0 - f_t[j])
    for early in range(n):
        for late in range(early + 1, n):
            # earlier component at time t, later at time s
            total += amps[early] * amps[late] * f_s[late] * (1.0 - f_t[early])
            # later component at time t, earlier at time s
            u = grid.x[grid.x < s]
            if len(u) == 0 or u[-1] < s:
                u = np.append(u, s)  # close the partial end cell exactly
            integrand = grid.t_pdf(early, u) * grid.gap_sum_cdf(early + 1, late + 1, t - u)
            joint = np.trapezoid(integrand, u)
            total += amps[early] * amps[late] * (joint - f_t[late] * f_s[early])
    return total


def forcing_cov(forcing: ForcingTerm, t: float, s: float) -> float:
    """Covariance kernel c(t, s) = Cov(I_t, I_s); zero for deterministic drives."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    if is_deterministic(forcing):
        return 0.0
    t, s = (t, s) if t >= s else (s, t)
    amps = np.asarray(forcing.amplitudes)
    if forcing.dependence == "shared":
        law = forcing.laws[0]
        return float(amps.sum() ** 2 * activation_cdf(law, s) * activation_sf(law, t))
    if forcing.dependence == "independent":
        return float(sum(
            a**2 * activation_cdf(law, s) * activation_sf(law, t)
            for a, law in zip(amps, forcing.laws)
        ))
    return _ordered_cov(forcing, t, s)


# --------------------------------------------------------------------------
# path sampling


def sample_activation_times(forcing: ForcingTerm, rng: np.random.Generator):
    """Draw the activation-time vector; None for deterministic forcings."""
    if not isinstance(forcing, HeavisideSum):
        return None
    if forcing.dependence == "shared":
        t = activation_sample(forcing.laws[0], rng)
        return np.full(len(forcing.amplitudes), t)
    draws = np.array([activation_sample(law, rng) for law in forcing.laws])
    if forcing.dependence == "ordered":
        return np.cumsum(draws)
    return draws


def forcing_path_from_times(forcing: ForcingTerm, grid: TimeGrid, times) -> np.ndarray:
    """Path values at the grid nodes given realized activation times."""
    t = grid.times()
    if not isinstance(forcing, HeavisideSum):
        return np.asarray(forcing_value(forcing, t), dtype=float)
    if times is None:
        raise ValueError("a Heaviside sum needs realized activation times")
    return _step_sum(forcing.amplitudes, times, t)


def sample_forcing_path(forcing: ForcingTerm, grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    """One realized path of I at the grid nodes (length n+1).

    Activation times are drawn once per call; the step convention is
    right-continuous so the jump is included at its own node.
    """
    if isinstance(forcing, HeavisideSum) and is_deterministic(forcing):
        return _step_sum(forcing.amplitudes, _degenerate_times(forcing), grid.times())
    return forcing_path_from_times(forcing, grid, sample_activation_times(forcing, rng))
