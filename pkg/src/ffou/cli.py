"""Configuration-driven command line front end.

Subcommands: simulate, kernels, fpt, validate. Configuration is a flat
key = value text file with dotted section keys (model.theta, forcing.kind,
grid.dt, ...); every key has a default, so a missing --config runs the
stock neuronal setup. All outputs are CSV with a provenance comment line
(seed and config hash), and identical config + seed reproduces identical
bytes.

Exit codes: 0 success, 1 validation failure, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import forcing as fr
from . import kernels as kr
from . import sim
from .errors import ConfigError, NumericalError
from .fgn import TimeGrid
from .fpt import FptConfig, estimate_fpt, fpt_histogram
from .kernels import ModelParams
from .validation import FAULTS, LEVELS, run_validation

__all__ = ["ExperimentConfig", "parse_config", "main"]


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_opt_float(s: str):
    return None if s.lower() == "auto" else float(s)


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (config key, attribute, parser, default)
_FIELDS = (
    ("seed", "seed", int, 1234),
    ("model.hurst", "hurst", float, 0.75),
    ("model.theta", "theta", float, 30.0),
    ("model.sigma", "sigma", float, 1.0),
    ("model.v_rest", "v_rest", float, -70.0),
    ("model.v_init", "v_init", _parse_opt_float, None),
    ("grid.dt", "dt", float, 0.1),
    ("grid.horizon", "horizon", float, 300.0),
    ("forcing.kind", "forcing_kind", str, "constant"),
    ("forcing.level", "forcing_level", float, 6.0),
    ("forcing.tau", "forcing_tau", float, 20.0),
    ("forcing.amplitude", "forcing_amplitude", float, 1.0),
    ("forcing.period", "forcing_period", float, 50.0),
    ("forcing.phase", "forcing_phase", float, 0.0),
    ("forcing.amplitudes", "forcing_amplitudes", str, "6"),
    ("forcing.laws", "forcing_laws", str, "exp:0.05"),
    ("forcing.dependence", "forcing_dependence", str, "independent"),
    ("forcing.frozen_activations", "frozen_activations", _parse_bool, False),
    ("ensemble.n_paths", "n_paths", int, 1000),
    ("ensemble.scheme", "scheme", str, "trapezoid"),
    ("ensemble.anchor", "anchor", _parse_opt_float, None),
    ("ensemble.max_csv_paths", "max_csv_paths", int, 100),
    ("fpt.threshold", "fpt_threshold", float, -50.0),
    ("fpt.t_max", "fpt_t_max", float, 300.0),
    ("fpt.n_paths", "fpt_n_paths", int, 1000),
    ("fpt.block_size", "fpt_block_size", int, 64),
    ("fpt.bins", "fpt_bins", int, 40),
    ("kernels.h_values", "kernels_h_values", str, "0.25,0.5,0.75,1.0"),
    ("kernels.t", "kernels_t", float, 10.0),
    ("kernels.s_max", "kernels_s_max", float, 300.0),
    ("kernels.s_steps", "kernels_s_steps", int, 61),
    ("kernels.lags", "kernels_lags", str, "10,30,100"),
    ("kernels.h_steps", "kernels_h_steps", int, 21),
)

_KEY_TO_FIELD = {key: (attr, parser) for key, attr, parser, _ in _FIELDS}


@dataclass
class ExperimentConfig:
    seed: int = 1234
    hurst: float = 0.75
    theta: float = 30.0
    sigma: float = 1.0
    v_rest: float = -70.0
    v_init: float | None = None
    dt: float = 0.1
    horizon: float = 300.0
    forcing_kind: str = "constant"
    forcing_level: float = 6.0
    forcing_tau: float = 20.0
    forcing_amplitude: float = 1.0
    forcing_period: float = 50.0
    forcing_phase: float = 0.0
    forcing_amplitudes: str = "6"
    forcing_laws: str = "exp:0.05"
    forcing_dependence: str = "independent"
    frozen_activations: bool = False
    n_paths: int = 1000
    scheme: str = "trapezoid"
    anchor: float | None = None
    max_csv_paths: int = 100
    fpt_threshold: float = -50.0
    fpt_t_max: float = 300.0
    fpt_n_paths: int = 1000
    fpt_block_size: int = 64
    fpt_bins: int = 40
    kernels_h_values: str = "0.25,0.5,0.75,1.0"
    kernels_t: float = 10.0
    kernels_s_max: float = 300.0
    kernels_s_steps: int = 61
    kernels_lags: str = "10,30,100"
    kernels_h_steps: int = 21

    def to_text(self) -> str:
        by_attr = {f.name: getattr(self, f.name) for f in fields(self)}
        lines = [f"{key} = {_fmt(by_attr[attr])}" for key, attr, _, _ in _FIELDS]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    # -- derived objects ---------------------------------------------------

    def model_params(self) -> ModelParams:
        return ModelParams(hurst=self.hurst, theta=self.theta, sigma=self.sigma,
                           v_rest=self.v_rest, v_init=self.v_init)

    def time_grid(self) -> TimeGrid:
        return TimeGrid.from_horizon(self.dt, self.horizon)

    def forcing(self):
        kind = self.forcing_kind
        try:
            if kind == "zero":
                return fr.Zero()
            if kind == "constant":
                return fr.Constant(level=self.forcing_level)
            if kind == "exp_decay":
                return fr.ExpDecay(level=self.forcing_level, tau=self.forcing_tau)
            if kind == "periodic":
                return fr.Periodic(amplitude=self.forcing_amplitude,
                                   period=self.forcing_period, phase=self.forcing_phase)
            if kind == "heaviside":
                amps = tuple(float(a) for a in self.forcing_amplitudes.split(","))
                laws = tuple(_parse_law(tok) for tok in self.forcing_laws.split(";"))
                return fr.HeavisideSum(amplitudes=amps, laws=laws,
                                       dependence=self.forcing_dependence)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad forcing configuration: {exc}") from exc
        raise ConfigError(f"unknown forcing.kind {kind!r}")

    def fpt_config(self) -> FptConfig:
        return FptConfig(threshold=self.fpt_threshold, dt=self.dt, t_max=self.fpt_t_max,
                         n_paths=self.fpt_n_paths, master_seed=self.seed,
                         scheme=self.scheme, block_size=self.fpt_block_size)


def _parse_law(token: str):
    parts = token.strip().split(":")
    kind = parts[0]
    try:
        if kind == "deg":
            return fr.Degenerate(t0=float(parts[1]))
        if kind == "exp":
            return fr.Exponential(rate=float(parts[1]))
        if kind == "stable":
            return fr.PositiveStable(alpha=float(parts[1]), scale=float(parts[2]))
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad activation law {token!r}: {exc}") from exc
    raise ConfigError(f"unknown activation law kind {kind!r} in {token!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat key = value text; '#' starts a comment, unknown keys fail."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    cfg = ExperimentConfig()
    for key, value in values.items():
        attr, parser = _KEY_TO_FIELD[key]
        try:
            setattr(cfg, attr, parser(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"key {key}: cannot parse {value!r}: {exc}") from exc
    return cfg


def load_config(path: str | None, seed_override: int | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            cfg = parse_config(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


# --------------------------------------------------------------------------
# CSV output


def _fmt_cell(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def write_csv(path: Path, header, rows, cfg: ExperimentConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"# seed={cfg.seed} config_sha256={cfg.config_hash()}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt_cell(x) for x in row) + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg.model_params()
    grid = cfg.time_grid()
    forcing = cfg.forcing()
    ens = sim.simulate_ensemble(p, forcing, grid, cfg.n_paths, cfg.seed,
                                scheme=cfg.scheme,
                                frozen_activations=cfg.frozen_activations)
    anchor = cfg.anchor if cfg.anchor is not None else grid.horizon / 2.0
    report = sim.ensemble_stats(ens, anchor, forcing=forcing)

    k = min(cfg.max_csv_paths, cfg.n_paths)
    header = ["time"] + [f"path_{i:04d}" for i in range(k)]
    rows = ([t, *vals] for t, vals in zip(grid.times(), ens.values[:k].T))
    write_csv(out / "paths.csv", header, rows, cfg)
    write_csv(out / "moments.csv", list(sim.MomentReport.COLUMNS), report.rows(), cfg)

    term_mean = report.emp_mean[-1]
    term_se = report.se_mean[-1]
    term_ana = report.analytic_mean[-1]
    print(f"simulate: {cfg.n_paths} {cfg.scheme} paths, horizon {grid.horizon:g}, "
          f"H={p.hurst:g}, seed {cfg.seed}")
    print(f"terminal mean {term_mean:.4f} (analytic {term_ana:.4f}, "
          f"se {term_se:.4f}); wrote {out / 'paths.csv'} and {out / 'moments.csv'}")
    return 0


def _kernel_h_columns(cfg: ExperimentConfig):
    try:
        hs = [float(h) for h in cfg.kernels_h_values.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad kernels.h_values: {exc}") from exc
    for h in hs:
        if not 0.0 <= h <= 1.0:
            raise ConfigError(f"kernels.h_values entries must lie in [0, 1], got {h}")
    return hs


def _cov_any_h(t: float, s: float, h: float, cfg: ExperimentConfig) -> float:
    """Finite-start covariance, endpoints routed to the limit kernels."""
    p = ModelParams(hurst=h, theta=cfg.theta, sigma=cfg.sigma)
    if h == 0.0:
        return kr.cov_limit_h0(t, s, p)
    if h == 1.0:
        return kr.cov_limit_h1(t, s, p)
    return kr.cov_fou(t, s, p)


def cmd_kernels(cfg: ExperimentConfig, out: Path) -> int:
    hs = _kernel_h_columns(cfg)
    t0 = cfg.kernels_t
    s_grid = np.linspace(0.0, cfg.kernels_s_max, cfg.kernels_s_steps)

    header = ["s"] + [f"H={_fmt(h)}" for h in hs]
    rows = [[s, *(_cov_any_h(t0, t0 + s, h, cfg) for h in hs)] for s in s_grid]
    write_csv(out / "cov_vs_lag.csv", header, rows, cfg)

    lags = [float(x) for x in cfg.kernels_lags.split(",")]
    h_grid = np.linspace(0.0, 1.0, cfg.kernels_h_steps)
    header = ["H"] + [f"s={_fmt(s)}" for s in lags]
    rows = [[h, *(_cov_any_h(t0, t0 + s, h, cfg) for s in lags)] for h in h_grid]
    write_csv(out / "cov_vs_h.csv", header, rows, cfg)

    header = ["t"]
    for h in hs:
        header += [f"var_H={_fmt(h)}", f"asym_H={_fmt(h)}"]
    rows = []
    for t in s_grid:
        row = [t]
        for h in hs:
            p = ModelParams(hurst=h, theta=cfg.theta, sigma=cfg.sigma)
            row += [_cov_any_h(t, t, h, cfg), kr.var_asymptote(p)]
        rows.append(row)
    write_csv(out / "var.csv", header, rows, cfg)

    print(f"kernels: t={t0:g}, theta={cfg.theta:g}, H columns {hs}; wrote "
          f"cov_vs_lag.csv, cov_vs_h.csv, var.csv under {out}")
    return 0


def cmd_fpt(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg.model_params()
    forcing = cfg.forcing()
    fpt_cfg = cfg.fpt_config()
    result = estimate_fpt(p, forcing, fpt_cfg)

    rows = []
    for i, (t, c) in enumerate(zip(result.times, result.censored)):
        rows.append([i, "censored" if c else t])
    write_csv(out / "fpt.csv", ["path_id", "crossing_time_or_censored"], rows, cfg)

    edges, density = fpt_histogram(result, cfg.fpt_bins)
    rows = [[a, b, d] for a, b, d in zip(edges[:-1], edges[1:], density)]
    write_csv(out / "fpt_hist.csv", ["bin_left", "bin_right", "density"], rows, cfg)

    n_cross = len(result.crossing_times)
    mean_t = float(result.crossing_times.mean()) if n_cross else float("nan")
    print(f"fpt: {fpt_cfg.n_paths} paths, threshold {fpt_cfg.threshold:g}, "
          f"censored fraction {result.censored_fraction:.4f}, "
          f"mean crossing time {mean_t:.4f}")
    if result.all_censored:
        print("warning: every path was censored at t_max")
    print(f"wrote {out / 'fpt.csv'} and {out / 'fpt_hist.csv'}")
    return 0


def cmd_validate(level: str, fault: str | None, out: Path | None,
                 cfg: ExperimentConfig) -> int:
    results = run_validation(level, fault=fault)
    for r in results:
        print(r.line())
    n_fail = sum(not r.passed for r in results)
    if out is not None:
        rows = [[r.check_id, r.name, "pass" if r.passed else "fail",
                 f"{r.seconds:.2f}", r.detail] for r in results]
        write_csv(out / "validate_report.csv",
                  ["check_id", "name", "status", "seconds", "detail"], rows, cfg)
        print(f"wrote {out / 'validate_report.csv'}")
    print(f"validate ({level}): {len(results) - n_fail}/{len(results)} checks passed")
    return 1 if n_fail else 0


# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffou",
        description="Simulate the forced fractional mean-reverting process, "
                    "evaluate its analytic moments, and estimate first passage times.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "simulate an ensemble and write path/moment CSVs"),
        ("kernels", "tabulate covariance/variance kernels as CSV"),
        ("fpt", "Monte Carlo first-passage-time estimation"),
        ("validate", "run the self-validation suite"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="path to a key = value config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        if name == "validate":
            sp.add_argument("--level", choices=LEVELS, default="quick")
            sp.add_argument("--inject-fault", choices=FAULTS, default=None,
                            help="deliberately corrupt one computation to prove "
                                 "the checks fail (self-test of the suite)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "kernels":
            return cmd_kernels(cfg, out)
        if args.command == "fpt":
            return cmd_fpt(cfg, out)
        return cmd_validate(args.level, args.inject_fault, out, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
