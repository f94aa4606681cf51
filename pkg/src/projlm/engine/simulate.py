"""Trajectory simulation by the truncated backward innovation expansion.

X_t = mu + sum_{k=0..M} g_{t-k,t} zeta_{t-k}, with the coefficient slices
produced by the family recursion. Replicates are independent units of
work on counter-based substreams, so results never depend on worker
count or scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from projlm.engine import kernels as K
from projlm.engine.stream import InnovationStream
from projlm.model import BetaScheme, EquationSpec, Kernel, TruncationPolicy
from projlm.solvability import compute_kq

__all__ = ["Path", "CoefficientSlice", "FilteredSlices", "simulate",
           "project", "linear_filter", "coefficient_slice"]

# existence gate budget: enough for a verdict, cheap enough to run every call
_GATE_POLICY = TruncationPolicy(max_terms=100_000, abs_tail_tol=1e-12)


@dataclass
class Path:
    """One simulated trajectory plus the config that produced it."""

    values: np.ndarray
    n: int
    m: int
    seed: int
    replicate: int
    mu: float
    spec: EquationSpec
    slices: np.ndarray | None = None      # (n, M+1): slices[t-1, k] = g_{t-k,t}
    innovations: np.ndarray | None = None  # aligned window when slices retained
    innovations_t0: int = 0                # time index of innovations[0]

    def innovation_at(self, t: int) -> float:
        if self.innovations is None:
            raise ValueError("innovations were not retained for this path")
        idx = t - self.innovations_t0
        if not 0 <= idx < len(self.innovations):
            raise ValueError(f"time {t} outside the retained window")
        return float(self.innovations[idx])


@dataclass
class FilteredSlices:
    """Coefficient family of the filtered process u_t = sum_j a_j X_{t-j}."""

    slices: np.ndarray
    mu: float
    weights: tuple[float, ...]


@dataclass
class CoefficientSlice:
    """One slice (g_{t-k,t})_{k=0..m}; indexable by lag."""

    values: np.ndarray
    m: int
    t: int | None = None

    def __getitem__(self, k):
        return self.values[k]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def _qargs(kernel: Kernel):
    qcode = K.QCODE[kernel.variant]
    if kernel.variant == "linear":
        qp = np.array(kernel.params)
    elif kernel.variant == "affine":
        qp = np.array(kernel.params)
    elif kernel.variant == "indicator":
        qp = np.array(kernel.params)
    else:
        qp = np.zeros(1)
    bp = np.array(kernel.breakpoints) if kernel.variant == "step" else np.zeros(1)
    vals = np.array(kernel.values) if kernel.variant == "step" else np.zeros(1)
    return qcode, qp, bp, vals


def _beta_csr(beta: BetaScheme, M: int, diag_shift: int):
    """Entries grouped by diagonal k = i + j + diag_shift, k <= M."""
    if beta.variant in ("finite_lag", "general"):
        if beta.rule is not None:
            ext = beta.rule_extent
            raw = [(i, j, beta.at(i, j)) for i in range(min(ext, M) + 1)
                   for j in range(1, ext - i + 1)]
        else:
            raw = list(beta.table)
    else:
        # structured scheme without its own kernel: materialize the table
        tab = beta.materialize(M)
        ii, jj = np.nonzero(tab)
        raw = [(int(i), int(j), float(tab[i, j])) for i, j in zip(ii, jj)]
    ents = sorted((i + j + diag_shift, i, v) for i, j, v in raw
                  if v != 0.0 and i + j + diag_shift <= M)
    off = np.zeros(M + 2, dtype=np.int64)
    ei = np.array([i for _, i, _ in ents], dtype=np.int64)
    ev = np.array([v for _, _, v in ents], dtype=np.float64)
    for k, _, _ in ents:
        off[k + 1] += 1
    np.cumsum(off, out=off)
    return off, ei, ev


class _Pinned:
    """Routes repeat calls of a compiled kernel to its entry point.

    Kernels specialized on literal arguments pay a full typing pass on
    every dispatcher call, so after the first call the overload whose
    literal values match this plan is invoked directly.
    """

    __slots__ = ("disp", "entry")

    def __init__(self, disp):
        self.disp = disp
        self.entry = None

    def __call__(self, *args):
        if self.entry is None:
            out = self.disp(*args)
            self.entry = self._resolve(args)
            return out
        return self.entry(*args)

    def _resolve(self, args):
        for sig, cres in self.disp.overloads.items():
            if len(sig) == len(args) and all(
                    getattr(s, "literal_value", None) in (None, a)
                    for s, a in zip(sig, args)):
                return cres.entry_point
        return self.disp


def _plan(spec: EquationSpec, M: int):
    """Choose a kernel and freeze its static arguments."""
    if spec.family == "larch":
        spec = spec.as_family1()
    fam = spec.family

    if fam == "tv_arfima":
        if spec.dfun.variant == "constant":
            dcode, dp = 0, np.array([spec.dfun.params[0], 0.0, 1.0])
        else:
            dcode, dp = 1, np.array(spec.dfun.params)

        pin = _Pinned(K.sim_tv_arfima)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, dcode, dp, len(out_x), M,
                                   retain, out_x, out_g)

        return run, 2 * M

    alpha = spec.alpha.materialize(M)
    qcode, qp, bp, vals = _qargs(spec.kernel)
    famflag = 1 if fam == "family2" else 0
    beta = spec.beta

    if fam == "lagged":
        off, ei, ev = _beta_csr(beta, M, diag_shift=1)

        pin = _Pinned(K.sim_lagged_csr)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, alpha, off, ei, ev,
                                    qcode, qp, bp, vals, len(out_x), M,
                                    retain, out_x, out_g)

        return run, 2 * M

    if beta.variant == "zero":
        b = np.asarray(spec.kernel.eval(alpha), dtype=np.float64) if famflag == 0 \
            else alpha * spec.kernel.eval(0.0)

        pin = _Pinned(K.sim_ma)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, b, len(out_x), M, retain, out_x, out_g)

        return run, M

    if beta.variant in ("sum_form", "constant_one"):
        if beta.variant == "constant_one":
            wseq = np.ones(M + 1)
        else:
            wseq = np.array([beta.seq.at(k) for k in range(M + 1)])

        pin = _Pinned(K.sim_sumform)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, alpha, wseq, famflag,
                                 qcode, qp, bp, vals, len(out_x), M,
                                 retain, out_x, out_g)

        return run, M

    if beta.variant == "column_form" and beta.seq.kind == "geometric":
        scale, ratio = beta.seq.scale, beta.seq.ratio

        pin = _Pinned(K.sim_colgeo)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, alpha, scale, ratio, famflag,
                                qcode, qp, bp, vals, len(out_x), M,
                                retain, out_x, out_g)

        return run, M

    if beta.variant == "column_form":
        supp = [(j, v) for j, v in enumerate(beta.seq.values) if j >= 1 and v != 0.0]
        if len(supp) == 1 and supp[0][0] == 1:
            v1 = supp[0][1]

            pin = _Pinned(K.sim_col1)


            def run(zeta, retain, out_x, out_g):
                return pin(zeta, spec.mu, alpha, v1, famflag,
                                  qcode, qp, bp, vals, len(out_x), M,
                                  retain, out_x, out_g)

            return run, M
        js = np.array([j for j, _ in supp], dtype=np.int64)
        vs = np.array([v for _, v in supp], dtype=np.float64)

        pin = _Pinned(K.sim_colsparse)


        def run(zeta, retain, out_x, out_g):
            return pin(zeta, spec.mu, alpha, js, vs, famflag,
                                   qcode, qp, bp, vals, len(out_x), M,
                                   retain, out_x, out_g)

        return run, M

    off, ei, ev = _beta_csr(beta, M, diag_shift=0)

    pin = _Pinned(K.sim_csr)


    def run(zeta, retain, out_x, out_g):
        return pin(zeta, spec.mu, alpha, off, ei, ev, famflag,
                         qcode, qp, bp, vals, len(out_x), M, retain,
                         out_x, out_g)

    return run, M


def _existence_gate(spec: EquationSpec) -> None:
    if spec.family in ("family1", "lagged", "larch"):
        report = compute_kq(spec, _GATE_POLICY)
        if report.exists == "no":
            raise ValueError(
                "existence check failed (exists=no); pass force=True to simulate anyway")
    # family2 and tv_arfima admit no cheap provable "no"; construction-time
    # validation (declared constants, d_bar < 1/2) is the gate there


def simulate(spec: EquationSpec, n: int, M: int | None = None,
             stream: InnovationStream | None = None, replicates: int = 1, *,
             workers: int | None = None, retain_slices: bool = False,
             force: bool = False) -> list[Path]:
    """Simulate ``replicates`` independent paths of length n.

    M defaults to n. Replicate r always uses substream r of ``stream``;
    the worker pool size changes wall time only, never values.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    M = n if M is None else M
    if M < 0:
        raise ValueError("M must be >= 0")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    stream = stream or InnovationStream()
    if not force:
        _existence_gate(spec)
    run, presample = _plan(spec, M)
    mu = spec.mu

    def one(rep: int) -> Path:
        zeta = stream.values(rep, 1 - presample, n + 1)
        out_x = np.empty(n)
        out_g = np.empty((n, M + 1)) if retain_slices else np.empty((1, 1))
        bad_t = run(zeta, retain_slices, out_x, out_g)
        if bad_t:
            raise FloatingPointError(
                f"non-finite path value at t={bad_t} (replicate {rep}); "
                "the recursion overflowed")
        return Path(values=out_x, n=n, m=M, seed=stream.master_seed,
                    replicate=rep, mu=mu, spec=spec,
                    slices=out_g if retain_slices else None,
                    innovations=zeta if retain_slices else None,
                    innovations_t0=1 - presample)

    if workers is None:
        env = os.environ.get("PROJLM_THREADS")
        workers = max(1, int(env)) if env else 1
    if workers == 1 or replicates == 1:
        return [one(r) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(replicates)))


def project(path: Path, s: int, t: int) -> float:
    """Conditional expectation of X_t given innovations on [s, t]:
    mu + sum_{u=s..t} zeta_u g_{u,t}. s = t + 1 returns mu."""
    if path.slices is None:
        raise ValueError("project requires a path simulated with retain_slices=True")
    if not 1 <= t <= path.n:
        raise ValueError(f"t must be in 1..{path.n}")
    if s > t + 1:
        raise ValueError("need s <= t + 1")
    if t - s > path.m:
        raise ValueError(f"window t - s = {t - s} exceeds truncation M = {path.m}")
    acc = 0.0
    for k in range(t - s + 1):
        acc += path.slices[t - 1, k] * path.innovation_at(t - k)
    return path.mu + acc


def linear_filter(path: Path, weights) -> FilteredSlices:
    """Coefficient family of u_t = sum_j a_j X_{t-j} on the path's window:
    G_{s,t} = sum_{j=0..t-s} a_j g_{s,t-j}, truncated to retained slices."""
    if path.slices is None:
        raise ValueError("linear_filter requires retained slices")
    a = np.asarray(list(weights), dtype=np.float64)
    if a.ndim != 1 or len(a) == 0:
        raise ValueError("weights must be a nonempty sequence")
    if not np.all(np.isfinite(a)):
        raise ValueError("weights must be finite")
    n, width = path.slices.shape
    out = np.zeros_like(path.slices)
    for j in range(len(a)):
        if a[j] == 0.0:
            continue
        # g_{s, t-j} lives at row (t-j)-1, lag k-j
        rows = np.arange(j + 1, n + 1)  # t with t-j >= 1
        out[rows - 1, j:] += a[j] * path.slices[rows - 1 - j, : width - j]
    return FilteredSlices(slices=out, mu=path.mu * float(a.sum()),
                          weights=tuple(float(w) for w in a))


def coefficient_slice(spec: EquationSpec, window: np.ndarray,
                      prev: np.ndarray | None = None,
                      prev_projections: np.ndarray | None = None) -> np.ndarray:
    """Reference evaluation of one slice (g_{t-k,t})_{k=0..M} from the
    innovation window (zeta_{t-M}, ..., zeta_t).

    For the lagged family ``prev`` is the previous slice (g_{t-1-i,t-1})_i
    and ``window`` must extend one step back: (zeta_{t-1-M}, ..., zeta_t),
    length M + 2. For tv_arfima ``prev_projections`` must hold rows
    P_{t-m}, m = 1..M, each row the partial projections of slice t-m over
    s = t-m-M-1..t-m (see the compiled kernel for the convention).
    Plain python, kept deliberately independent of the compiled kernels.
    """
    if spec.family == "larch":
        spec = spec.as_family1()
    window = np.asarray(window, dtype=np.float64)

    if spec.family == "tv_arfima":
        M = len(window) - 1
        g = np.empty(M + 1)
        g[0] = 1.0
        d = spec.dfun
        for k in range(1, M + 1):
            val = 1.0
            for m in range(1, k + 1):
                if m == k:
                    x = 0.0
                else:
                    if prev_projections is None:
                        raise ValueError("tv_arfima slice needs prev_projections")
                    x = prev_projections[m - 1, m + M + 1 - k]
                val = val * (d.eval(x) + m - 1.0) / m
            g[k] = val
        return CoefficientSlice(g, M)

    if spec.family == "lagged":
        M = len(window) - 2
        if M < 0:
            raise ValueError("lagged slice needs window length M + 2")
        if prev is None:
            raise ValueError("lagged slice needs the previous slice "
                             "(cold start is the simulator's job)")
        q = spec.kernel
        alpha = spec.alpha
        beta = spec.beta
        g = np.empty(M + 1)
        for k in range(M + 1):
            inner = 0.0
            for i in range(k - 1):
                # zeta_{t-1-i} = window[M - i]
                inner += beta.at(i, k - 1 - i) * (window[M - i] * prev[i])
            g[k] = q.eval(alpha.at(k) + inner) if k >= 2 else q.eval(alpha.at(k))
        return CoefficientSlice(g, M)

    M = len(window) - 1
    q = spec.kernel
    alpha = spec.alpha
    beta = spec.beta
    fam2 = spec.family == "family2"
    g = np.empty(M + 1)
    for k in range(M + 1):
        inner = 0.0
        for i in range(k):
            # zeta_{t-i} = window[M - i]
            inner += beta.at(i, k - i) * (window[M - i] * g[i])
        if fam2:
            g[k] = alpha.at(k) * q.eval(inner)
        else:
            g[k] = q.eval(alpha.at(k) + inner)
        if not math.isfinite(g[k]):
            raise FloatingPointError(f"non-finite coefficient at lag k={k}")
    return CoefficientSlice(g, M)
