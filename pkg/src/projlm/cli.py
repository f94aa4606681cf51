"""Command-line front end.

Run configurations live in JSON files; five subcommands orchestrate the
library: ``check`` (existence verdict), ``simulate`` (path files plus a
manifest), ``diagnose`` (memory diagnostics over a finished run),
``oracle-compare`` (engine vs nested-sum reference), ``larch``
(volatility-form report and optional paired return/volatility paths).

Exit codes, relied on by scripted pipelines:

    0  success; for check: a solution exists; for oracle-compare:
       the maximum relative deviation is below tolerance
    1  operational error: malformed config, I/O failure, missing or
       stale data, unsupported family, refusal without --force
    2  negative verdict: check found exists=no, or oracle-compare saw
       a deviation at or above tolerance
    3  existence undetermined within the truncation policy

All tabular output is CSV with a header row; reports are JSON on
stdout. Errors carry the offending field or file in the message.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from .diagnostics import acf_decay_fit, histogram, partial_sum_scaling, sample_acf
from .engine import InnovationStream, simulate
from .engine.io import (
    file_digest,
    read_binary,
    read_csv,
    read_manifest,
    write_binary,
    write_csv,
    write_manifest,
)
from .engine.stream import DISTRIBUTIONS
from .model import EquationSpec, TruncationPolicy
from .oracle import build_gfamily, nested_eval
from .solvability import MomentParams, compute_kq, compute_tilde_kq, larch_check

__all__ = [
    "ConfigError",
    "DiagnosticsSelection",
    "RunConfig",
    "cmd_check",
    "cmd_diagnose",
    "cmd_larch",
    "cmd_oracle_compare",
    "cmd_simulate",
    "load_config",
    "main",
]

ORACLE_WINDOW_CAP = 8
ORACLE_TOLERANCE = 1e-10
MANIFEST_NAME = "manifest.json"

_EXIT_BY_VERDICT = {"yes": 0, "no": 2, "undetermined": 3}


class ConfigError(ValueError):
    """Malformed run configuration; the message names the field at fault."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}" if path else msg)


def _get_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    return value


def _get_num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, "expected a number")
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return float(value)


def _reject_unknown(d: dict, path: str) -> None:
    if d:
        keys = ", ".join(f"{path}.{k}" if path else str(k) for k in sorted(d))
        _fail("", f"unknown field(s): {keys}")


@dataclass(frozen=True)
class DiagnosticsSelection:
    """Which diagnostics to run and at what resolution. ``None`` means
    the library default (lag/block grids derived from n)."""

    acf_max_lag: int | None = None
    block_sizes: tuple[int, ...] | None = None
    bins: int = 30

    def __post_init__(self) -> None:
        if self.acf_max_lag is not None and self.acf_max_lag < 0:
            raise ConfigError("diagnostics.acf_max_lag: must be >= 0")
        if self.bins < 2:
            raise ConfigError("diagnostics.bins: must be >= 2")

    def to_dict(self) -> dict:
        return {
            "acf_max_lag": self.acf_max_lag,
            "block_sizes": None if self.block_sizes is None else list(self.block_sizes),
            "bins": self.bins,
        }

    @staticmethod
    def from_dict(d: dict) -> "DiagnosticsSelection":
        d = dict(d)
        lag = d.pop("acf_max_lag", None)
        if lag is not None:
            lag = _get_int(lag, "diagnostics.acf_max_lag", 0)
        sizes = d.pop("block_sizes", None)
        if sizes is not None:
            if not isinstance(sizes, list) or not sizes:
                _fail("diagnostics.block_sizes", "expected a nonempty list")
            sizes = tuple(_get_int(s, "diagnostics.block_sizes", 2) for s in sizes)
        bins = _get_int(d.pop("bins", 30), "diagnostics.bins", 2)
        _reject_unknown(d, "diagnostics")
        return DiagnosticsSelection(acf_max_lag=lag, block_sizes=sizes, bins=bins)


@dataclass(frozen=True)
class RunConfig:
    """One simulation run: model, sizes, seeding, policies, output home.

    Round-trips through JSON losslessly; loading rejects unknown fields
    with their full path so typos never silently change a run.
    """

    spec: EquationSpec
    n: int
    m: int | None = None
    seed: int = 0
    replicates: int = 1
    distribution: str = "standard-normal"
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    diagnostics: DiagnosticsSelection = field(default_factory=DiagnosticsSelection)
    out_dir: str = "run-output"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("n: must be >= 1")
        if self.m is not None and self.m < 0:
            raise ConfigError("m: must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must fit in 64 bits")
        if self.replicates < 1:
            raise ConfigError("replicates: must be >= 1")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution: unknown {self.distribution!r}; "
                              f"choose one of {sorted(DISTRIBUTIONS)}")

    @property
    def horizon(self) -> int:
        return self.n if self.m is None else self.m

    def stream(self) -> InnovationStream:
        return InnovationStream(self.distribution, self.seed)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "replicates": self.replicates,
            "distribution": self.distribution,
            "truncation": {
                "max_terms": self.truncation.max_terms,
                "abs_tail_tol": self.truncation.abs_tail_tol,
            },
            "diagnostics": self.diagnostics.to_dict(),
            "out_dir": self.out_dir,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("top level must be a JSON object")
        d = dict(d)
        if "spec" not in d:
            _fail("spec", "required field is missing")
        spec_doc = d.pop("spec")
        if not isinstance(spec_doc, dict):
            _fail("spec", "expected an object")
        try:
            spec = EquationSpec.from_dict(spec_doc)
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"spec: {e}") from e
        if "n" not in d:
            _fail("n", "required field is missing")
        n = _get_int(d.pop("n"), "n", 1)
        m = d.pop("m", None)
        if m is not None:
            m = _get_int(m, "m", 0)
        seed = _get_int(d.pop("seed", 0), "seed", 0)
        replicates = _get_int(d.pop("replicates", 1), "replicates", 1)
        distribution = d.pop("distribution", "standard-normal")
        if not isinstance(distribution, str):
            _fail("distribution", "expected a string")
        trunc_doc = d.pop("truncation", None)
        if trunc_doc is None:
            trunc = TruncationPolicy()
        else:
            trunc_doc = dict(trunc_doc)
            trunc = TruncationPolicy(
                max_terms=_get_int(trunc_doc.pop("max_terms",
                                                 TruncationPolicy().max_terms),
                                   "truncation.max_terms", 1),
                abs_tail_tol=_get_num(trunc_doc.pop("abs_tail_tol",
                                                    TruncationPolicy().abs_tail_tol),
                                      "truncation.abs_tail_tol"),
            )
            _reject_unknown(trunc_doc, "truncation")
        diag_doc = d.pop("diagnostics", None)
        diag = (DiagnosticsSelection() if diag_doc is None
                else DiagnosticsSelection.from_dict(dict(diag_doc)))
        out_dir = d.pop("out_dir", "run-output")
        if not isinstance(out_dir, str) or not out_dir:
            _fail("out_dir", "expected a nonempty string")
        _reject_unknown(d, "")
        return RunConfig(spec=spec, n=n, m=m, seed=seed, replicates=replicates,
                         distribution=distribution, truncation=trunc,
                         diagnostics=diag, out_dir=out_dir)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return RunConfig.from_dict(doc)


def _worker_cap() -> int | None:
    raw = os.environ.get("PROJLM_THREADS")
    if raw is None:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PROJLM_THREADS: not an integer: {raw!r}") from None


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else repr(float(v))
                        for v in row])


# ------------------------------------------------------------- commands


def cmd_check(config: RunConfig) -> tuple[int, dict]:
    """Existence verdict for the configured family; exit 0/2/3."""
    spec = config.spec
    if spec.family == "tv_arfima":
        # construction already enforces sup|d| < 1/2, which is the whole
        # existence condition for this family
        return 0, {"family": spec.family, "exists": "yes",
                   "method": "construction", "d_sup": spec.dfun.d_bar}
    if spec.family == "family2":
        res = compute_tilde_kq(spec, config.truncation)
        exists = "yes" if (res.series.converged or res.envelope.converged) \
            else "undetermined"
        enc = lambda sv: sv.value if sv.converged else "non-convergent"
        return _EXIT_BY_VERDICT[exists], {
            "family": spec.family, "exists": exists,
            "tilde_kq": enc(res.series), "envelope": enc(res.envelope),
            "method": "truncated-series"}
    report = compute_kq(spec, config.truncation)
    return _EXIT_BY_VERDICT[report.exists], {"family": spec.family,
                                             **report.to_dict()}


def cmd_simulate(config: RunConfig, *, force: bool = False,
                 fmt: str = "csv") -> tuple[int, dict]:
    """Simulate all replicates and write path files plus a manifest."""
    out = FsPath(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        paths = simulate(config.spec, config.n, config.m, config.stream(),
                         config.replicates, workers=_worker_cap(), force=force)
    except ValueError as e:
        if "exists=no" in str(e):
            return 1, {"error": "existence check failed (exists=no); "
                                "rerun with --force to simulate anyway"}
        raise
    except FloatingPointError as e:
        return 1, {"error": f"simulation overflowed: {e}"}
    files: dict[str, str] = {}
    if fmt == "binary":
        target = out / "paths.bin"
        write_binary(target, [(p.replicate, p.values) for p in paths],
                     config.horizon, config.seed)
        files[target.name] = file_digest(target)
    else:
        for p in paths:
            target = out / f"path_{p.replicate:04d}.csv"
            write_csv(target, p.values, p.replicate)
            files[target.name] = file_digest(target)
    write_manifest(out / MANIFEST_NAME, config.to_dict(), files)
    return 0, {"out_dir": str(out), "files": sorted(files),
               "manifest_digest": file_digest(out / MANIFEST_NAME)}


def _load_run(out: FsPath) -> list[np.ndarray]:
    manifest_path = out / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing manifest {manifest_path}")
    manifest = read_manifest(manifest_path)
    values: list[np.ndarray] = []
    for name, digest in manifest["files"].items():
        target = out / name
        if not target.exists():
            raise FileNotFoundError(f"missing path file {target}")
        if file_digest(target) != digest:
            raise ValueError(f"digest mismatch for {name}; the data does not "
                             "match the manifest, re-run simulate")
        if name.endswith(".bin"):
            values.extend(v for _, v in read_binary(target)["runs"])
        else:
            values.append(read_csv(target)[1])
    if not values:
        raise ValueError("manifest lists no path files")
    return values


def cmd_diagnose(config: RunConfig) -> tuple[int, dict]:
    """Memory diagnostics over the files simulate wrote; refuses stale data."""
    out = FsPath(config.out_dir)
    try:
        paths = _load_run(out)
    except (FileNotFoundError, ValueError) as e:
        return 1, {"error": str(e)}
    n = len(paths[0])
    sel = config.diagnostics
    if sel.acf_max_lag is not None:
        max_lag = sel.acf_max_lag
        if max_lag * 4 >= n:
            return 1, {"error": f"diagnostics.acf_max_lag {max_lag} too "
                                f"large for n={n}"}
    else:
        max_lag = min(max(n // 4 - 1, 0), max(50, round(n ** 0.7)))
    doc: dict = {"n": n, "replicates": len(paths), "acf_max_lag": max_lag}

    acf = sample_acf(paths, max_lag)
    try:
        # early lags: the zone where a truncated simulation still tracks
        # the stationary autocovariance, before truncation and centering
        # bias bend the log-log decay
        fit = acf_decay_fit(acf, range(1, min(20, max_lag) + 1))
        doc["d_hat"] = _finite_or_none(fit.d_hat)
        doc["d_ci"] = [_finite_or_none(fit.ci[0]), _finite_or_none(fit.ci[1])]
        doc["acf_slope"] = _finite_or_none(fit.slope)
        doc["acf_fit_curved"] = bool(fit.curved)
    except ValueError as e:
        doc["d_hat"] = None
        doc["d_hat_note"] = str(e)

    try:
        scaling = partial_sum_scaling(paths, sel.block_sizes)
        doc["h_hat"] = _finite_or_none(scaling.h_hat)
        doc["h_ci"] = [_finite_or_none(scaling.ci[0]),
                       _finite_or_none(scaling.ci[1])]
    except ValueError as e:
        scaling = None
        doc["h_hat"] = None
        doc["h_hat_note"] = str(e)

    hist = histogram(paths, sel.bins)

    _write_table(out / "acf.csv", ["lag", "value", "std_error"],
                 zip(acf.lags.tolist(), acf.values, acf.std_errors))
    if scaling is not None:
        _write_table(out / "scaling.csv", ["block_size", "variance"],
                     zip(scaling.block_sizes, scaling.variances))
    _write_table(out / "histogram.csv",
                 ["left", "right", "density", "normal_overlay"],
                 zip(hist.edges[:-1], hist.edges[1:], hist.density,
                     hist.overlay))
    doc["tables"] = sorted(p.name for p in out.glob("*.csv")
                           if p.name in ("acf.csv", "scaling.csv",
                                         "histogram.csv"))
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return 0, doc


def cmd_oracle_compare(config: RunConfig, *, trials: int = 20,
                       window: int = 8) -> tuple[int, dict]:
    """Engine vs nested-sum reference on the configured spec."""
    spec = config.spec
    if spec.family != "family1":
        return 1, {"error": "oracle comparison needs a family1 spec, "
                            f"got {spec.family!r}"}
    if trials < 1:
        return 1, {"error": "trials must be >= 1"}
    if not 1 <= window <= ORACLE_WINDOW_CAP:
        return 1, {"error": f"window {window} refused; the nested-sum "
                            f"reference is capped at {ORACLE_WINDOW_CAP}"}
    # finite-window algebraic identity, so the existence gate is moot here
    paths = simulate(spec, window, window - 1, config.stream(), trials,
                     workers=_worker_cap(), retain_slices=True, force=True)
    built = [build_gfamily(spec, t, window) for t in range(1, window + 1)]
    worst = 0.0
    for p in paths:
        for t, (fam, g) in zip(range(1, window + 1), built):
            zeta = {u: p.innovation_at(u) for u in fam.points}
            engine_value = p.values[t - 1] - spec.mu
            dev = abs(nested_eval(fam, g, zeta) - engine_value)
            worst = max(worst, dev / max(abs(engine_value), 1e-12))
    worst = float(worst)
    ok = worst < ORACLE_TOLERANCE
    return (0 if ok else 2), {
        "trials": trials, "window": window,
        "evaluations": trials * window, "max_rel_dev": worst,
        "tolerance": ORACLE_TOLERANCE, "pass": ok}


def cmd_larch(config: RunConfig, *, p: float | None = None,
              mu_p: float | None = None, c_p: float | None = None,
              simulate_paths: bool = False, force: bool = False,
              fmt: str = "csv") -> tuple[int, dict]:
    """Volatility-form existence/variance report, optional paired paths."""
    spec = config.spec
    if spec.family != "larch":
        return 1, {"error": f"larch command needs a larch spec, "
                            f"got {spec.family!r}"}
    moments = None
    if p is not None:
        if mu_p is None:
            return 1, {"error": "p-moment check needs --mu-p "
                                "(and optionally --c-p)"}
        try:
            moments = MomentParams(p=p, mu_p=mu_p,
                                   c_p=MomentParams.default_cp(p)
                                   if c_p is None else c_p)
        except ValueError as e:
            return 1, {"error": str(e)}
    report = larch_check(spec.larch_alpha, spec.larch_beta, moments,
                         config.truncation)
    doc = {"family": "larch",
           "b": math.sqrt(spec.larch_beta.energy_from(1)),
           **report.to_dict()}
    if moments is not None:
        doc["p"] = moments.p
        # two sufficient conditions for a finite p-th moment: the full
        # chain series, and the cruder single-constant comparison
        doc["moment_condition_series"] = (
            report.p_moment_bound is not None
            and math.isfinite(report.p_moment_bound))
        doc["moment_condition_classical"] = report.old_condition_holds
    if not simulate_paths:
        return 0, doc

    if not report.exists and not force:
        return 1, {"error": "no stationary solution (B >= 1); rerun with "
                            "--force to simulate anyway", "report": doc}
    out = FsPath(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream = config.stream()
    sigma_paths = simulate(spec.as_family1(), config.n, config.m, stream,
                           config.replicates, workers=_worker_cap(),
                           force=True)
    files: dict[str, str] = {}
    if fmt == "binary":
        sig_f, ret_f = out / "sigma.bin", out / "returns.bin"
        runs = [(sp.replicate, sp.values) for sp in sigma_paths]
        write_binary(sig_f, runs, config.horizon, config.seed)
        returns = [(sp.replicate,
                    sp.values * stream.values(sp.replicate, 1, config.n + 1))
                   for sp in sigma_paths]
        write_binary(ret_f, returns, config.horizon, config.seed)
        files[sig_f.name] = file_digest(sig_f)
        files[ret_f.name] = file_digest(ret_f)
    else:
        for sp in sigma_paths:
            zeta = stream.values(sp.replicate, 1, config.n + 1)
            target = out / f"larch_{sp.replicate:04d}.csv"
            _write_table(target, ["replicate", "t", "r", "sigma"],
                         ((sp.replicate, t, r, s) for t, (r, s) in
                          enumerate(zip(sp.values * zeta, sp.values), start=1)))
            files[target.name] = file_digest(target)
    write_manifest(out / MANIFEST_NAME, config.to_dict(), files)
    doc["out_dir"] = str(out)
    doc["files"] = sorted(files)
    return 0, doc


# ------------------------------------------------------------ dispatch


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="JSON run configuration")
    common.add_argument("--out", metavar="DIR",
                        help="override the config's output directory")
    common.add_argument("--seed", type=int,
                        help="override the config's master seed")
    common.add_argument("--replicates", type=int,
                        help="override the config's replicate count")
    common.add_argument("--force", action="store_true",
                        help="simulate even when existence fails")
    common.add_argument("--format", choices=("csv", "binary"), default="csv",
                        dest="fmt", help="path file format (default csv)")

    parser = argparse.ArgumentParser(
        prog="projlm",
        description="Simulation and verification toolkit for nonlinear "
                    "long-memory moving averages with innovation-driven "
                    "coefficients.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("check", parents=[common],
                        help="existence verdict for the configured model")
    sp.set_defaults(run=lambda cfg, a: cmd_check(cfg))

    sp = sub.add_parser("simulate", parents=[common],
                        help="simulate replicates and write path files")
    sp.set_defaults(run=lambda cfg, a: cmd_simulate(cfg, force=a.force,
                                                    fmt=a.fmt))

    sp = sub.add_parser("diagnose", parents=[common],
                        help="memory diagnostics over a finished run")
    sp.set_defaults(run=lambda cfg, a: cmd_diagnose(cfg))

    sp = sub.add_parser("oracle-compare", parents=[common],
                        help="engine vs nested-sum reference comparison")
    sp.add_argument("--trials", type=int, default=20,
                    help="independent innovation draws (default 20)")
    sp.add_argument("--window", type=int, default=8,
                    help=f"truncation window, at most {ORACLE_WINDOW_CAP}")
    sp.set_defaults(run=lambda cfg, a: cmd_oracle_compare(
        cfg, trials=a.trials, window=a.window))

    sp = sub.add_parser("larch", parents=[common],
                        help="volatility-form report and optional paths")
    sp.add_argument("--simulate", action="store_true", dest="simulate_paths",
                    help="also write paired return/volatility paths")
    sp.add_argument("--p", type=float, help="moment order for the p-th "
                    "moment conditions (needs --mu-p)")
    sp.add_argument("--mu-p", type=float, dest="mu_p",
                    help="p-th absolute moment of the innovations")
    sp.add_argument("--c-p", type=float, dest="c_p",
                    help="martingale constant; a growth-rate heuristic "
                         "is used when omitted")
    sp.set_defaults(run=lambda cfg, a: cmd_larch(
        cfg, p=a.p, mu_p=a.mu_p, c_p=a.c_p,
        simulate_paths=a.simulate_paths, force=a.force, fmt=a.fmt))
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    return replace(config, **updates) if updates else config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        code, doc = args.run(config, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(doc, indent=2, sort_keys=True, default=_json_default))
    return code


if __name__ == "__main__":
    sys.exit(main())
