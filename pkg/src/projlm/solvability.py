"""Solvability series and moment bounds for equation specs.

Unrolling a coefficient recursion produces weighted sums over jump
chains: increasing row sequences r_0 < r_1 < ... with an alpha weight at
the root and a beta weight on every edge. All series here are evaluated
by a dynamic program layered by chain depth, exact up to the reported
truncation remainder; closed forms are used where the scheme admits one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from projlm.model import (
    AlphaScheme,
    BetaScheme,
    EquationSpec,
    Sequence,
    SeriesValue,
    TruncationPolicy,
)

__all__ = [
    "MomentParams",
    "SolvabilityReport",
    "TildeResult",
    "LarchReport",
    "LimsupReport",
    "compute_kq",
    "compute_kq_p",
    "compute_tilde_kq",
    "compute_omega2_bound",
    "larch_check",
    "limsup_row_check",
]

_DEPTH_CAP = 64        # chain-depth cap for the layered DP
_LAG_CAP = 100_000     # row-index cap; alpha tail beyond it folds into the remainder
_RATIO_CUTOFF = 0.999  # depth terms must contract at least this fast to extrapolate


@dataclass(frozen=True)
class MomentParams:
    """Moment order p, innovation moment mu_p = E|z|^p, and the p-norm
    martingale constant c_p (user-supplied; the sharp value is unknown)."""

    p: float
    mu_p: float
    c_p: float

    def __post_init__(self) -> None:
        if self.p < 2:
            raise ValueError("moment order p must be >= 2")
        if self.mu_p < 1:
            raise ValueError("mu_p must be >= 1 for standardized innovations")
        if self.c_p <= 0:
            raise ValueError("c_p must be positive")
        if self.p == 2 and (self.c_p, self.mu_p) != (1.0, 1.0):
            raise ValueError("at p = 2 the pair (c_p, mu_p) must be (1, 1)")

    @staticmethod
    def default_cp(p: float) -> float:
        # heuristic from the growth rate c_p^{1/p} = O(p / log p); not sharp
        return 1.0 if p == 2 else (p / math.log(p)) ** p

    @classmethod
    def for_gaussian(cls, p: float, c_p: float | None = None) -> "MomentParams":
        if p == 2:
            return cls(2.0, 1.0, 1.0)
        mu_p = math.exp(0.5 * p * math.log(2.0) + gammaln((p + 1.0) / 2.0)
                        - 0.5 * math.log(math.pi))
        return cls(float(p), mu_p, cls.default_cp(p) if c_p is None else float(c_p))


@dataclass(frozen=True)
class SolvabilityReport:
    """Existence verdict plus the second-moment series and its inputs.

    ``kq`` is None when the series is non-convergent (diverges or fails
    the truncation policy); ``exists`` separates a proven "no" from an
    "undetermined" heuristic failure.
    """

    kq: float | None
    a2: float
    exists: str                      # yes | no | undetermined
    method: str                      # closed-form | truncated-series
    truncation_remainder: float
    b2: float | None = None
    kq_p: float | None = None
    tilde_kq: float | None = None
    omega2_bound: float | None = None

    def to_dict(self) -> dict:
        enc = lambda v: "non-convergent" if v is None or not math.isfinite(v) else v
        return {
            "kq": enc(self.kq),
            "a2": self.a2,
            "b2": self.b2,
            "kq_p": None if self.kq_p is None else enc(self.kq_p),
            "tilde_kq": None if self.tilde_kq is None else enc(self.tilde_kq),
            "omega2_bound": None if self.omega2_bound is None else enc(self.omega2_bound),
            "exists": self.exists,
            "method": self.method,
            "truncation_remainder": self.truncation_remainder,
        }


@dataclass(frozen=True)
class TildeResult:
    """Second-moment series for the multiplicative family, plus the
    coarse product-of-tails envelope (an upper bound when both converge)."""

    series: SeriesValue
    envelope: SeriesValue


@dataclass(frozen=True)
class LarchReport:
    exists: bool
    variance: float
    p_moment_bound: float | None = None
    old_condition_holds: bool | None = None

    def to_dict(self) -> dict:
        enc = lambda v: v if v is None or math.isfinite(v) else "infinite"
        return {"exists": self.exists, "variance": enc(self.variance),
                "p_moment_bound": enc(self.p_moment_bound),
                "old_condition_holds": self.old_condition_holds}


@dataclass(frozen=True)
class LimsupReport:
    verdict: bool
    sup_value: float
    burn_in: int
    horizon: int


# ---------------------------------------------------------------------------
# depth-layered chain DP


def _advance_factory(beta: BetaScheme, power: int, shift: int, L: int,
                     alpha_sq: np.ndarray | None):
    """Returns F -> F' where F'(r) = sum_j w(beta_{r,j}) * F(r + j + shift),
    with w(v) = |v|^power, optionally scaling F by alpha^2 first (the
    multiplicative-family series puts an alpha weight on every node)."""

    v = beta.variant

    def wrap(adv):
        if alpha_sq is None:
            return adv
        return lambda F: adv(alpha_sq * F)

    if v == "zero":
        return wrap(lambda F: np.zeros_like(F))

    if v in ("sum_form", "constant_one"):
        if v == "constant_one":
            wseq = np.ones(L + 1)
            wseq[0] = 0.0
        else:
            wseq = np.array([abs(beta.seq.at(m)) ** power for m in range(L + 1)])

        def adv(F):
            src = F if shift == 0 else np.append(F[1:], 0.0)
            t = wseq * src
            csum = np.cumsum(t[::-1])[::-1]
            return np.append(csum[1:], 0.0)

        return wrap(adv)

    if v == "column_form" and beta.seq.kind == "geometric":
        q = abs(beta.seq.ratio) ** power
        c0 = abs(beta.seq.scale) ** power

        def adv(F):
            g = np.zeros(L + 1)
            g[: L - shift] = F[1 + shift:]
            return lfilter([q * c0], [1.0, -q], g[::-1])[::-1]

        return wrap(adv)

    if v == "column_form":
        cols = [(j, abs(val) ** power) for j, val in enumerate(beta.seq.values)
                if j >= 1 and val != 0.0]

        def adv(F):
            out = np.zeros_like(F)
            for j, w in cols:
                jj = j + shift
                if jj <= L:
                    out[: L + 1 - jj] += w * F[jj:]
            return out

        return wrap(adv)

    # finite table or generator rule
    if beta.rule is not None:
        ext = beta.rule_extent
        table = [(i, j, beta.at(i, j)) for i in range(min(ext, L) + 1)
                 for j in range(1, ext - i + 1)]
    else:
        table = list(beta.table)
    ents = [(i, i + j + shift, abs(val) ** power)
            for i, j, val in table
            if val != 0.0 and i <= L and i + j + shift <= L]

    def adv(F):
        out = np.zeros_like(F)
        for i, tgt, w in ents:
            out[i] += w * F[tgt]
        return out

    return wrap(adv)


def _chain_series(root: np.ndarray, root_total: float, root_tail: float,
                  advance, pref: float, base: float,
                  trunc: TruncationPolicy) -> SeriesValue:
    """pref * sum_k base^k S_k with S_0 = root_total (exact) and S_k from
    the layered DP; depth tail extrapolated geometrically."""
    L = len(root) - 1
    term0 = pref * root_total
    total = term0
    if base == 0.0 or not np.any(root):
        return SeriesValue(total, 0.0, True)
    F = np.ones(L + 1)
    prev = term0
    term = 0.0
    ratio = math.inf
    converged = False
    rem_depth = 0.0
    for k in range(1, _DEPTH_CAP + 1):
        F = advance(F)
        s_k = float(root @ F)
        term = pref * base**k * s_k
        if not math.isfinite(term) or total > 1e300:
            return SeriesValue(total, math.inf, False)
        total += term
        if s_k == 0.0:
            converged = True
            break
        ratio = term / prev if prev > 0 else 0.0
        if term <= trunc.abs_tail_tol:
            # geometric extrapolation, inflated to stay an upper estimate
            rem_depth = 1.01 * term * ratio / (1.0 - ratio) if ratio < 1.0 else term
            converged = True
            break
        prev = term
    else:
        if ratio < _RATIO_CUTOFF:
            rem_depth = 1.01 * term * ratio / (1.0 - ratio)
            converged = True
    if not converged:
        return SeriesValue(total, math.inf, False)
    # chains rooted beyond the lag horizon, estimated by their weight share
    rem_lag = 0.0
    if root_tail > 0.0:
        head = root_total - root_tail
        if head > 0.0:
            rem_lag = max(total - term0, 0.0) * root_tail / head
        else:
            rem_lag = math.inf
    return SeriesValue(total, rem_depth + rem_lag, True)


def _horizon(trunc: TruncationPolicy) -> int:
    return int(min(trunc.max_terms, _LAG_CAP))


def _kq_series(spec: EquationSpec, trunc: TruncationPolicy,
               c_scale: float = 1.0, prefactor: float = 1.0) -> SeriesValue:
    """Truncated-series evaluation of the quadratic chain sum, any beta."""
    L = _horizon(trunc)
    shift = 1 if spec.family == "lagged" else 0
    alpha_sq = spec.alpha.materialize(L) ** 2
    a_total = spec.alpha.energy_from(0, trunc).value
    a_tail = max(a_total - float(alpha_sq.sum()), 0.0)
    c_eff = spec.kernel.c_q * c_scale
    advance = _advance_factory(spec.beta, 2, shift, L, None)
    return _chain_series(alpha_sq, a_total, a_tail, advance,
                         prefactor * c_eff**2, c_eff**2, trunc)


def _normalize(spec: EquationSpec, op: str) -> EquationSpec:
    if spec.family == "larch":
        spec = spec.as_family1()
    if spec.family == "family2":
        raise ValueError(f"{op} does not apply to family2 specs; "
                         "use compute_tilde_kq")
    if spec.family not in ("family1", "lagged"):
        raise ValueError(f"{op} applies to family1/lagged specs, "
                         f"got {spec.family!r}")
    if spec.kernel.c_q is None:
        raise ValueError(f"{op} needs a declared dominating constant c_q")
    return spec


# ---------------------------------------------------------------------------
# public operations


def compute_kq(spec: EquationSpec,
               trunc: TruncationPolicy = TruncationPolicy()) -> SolvabilityReport:
    """Second-moment series K and the existence verdict it certifies."""
    spec = _normalize(spec, "compute_kq")
    cq = spec.kernel.c_q
    a2 = spec.alpha.energy_from(0, trunc).value
    beta = spec.beta
    b2 = beta.b2(trunc).value if beta.variant == "column_form" else None

    if a2 == 0.0 or cq == 0.0:
        # trivial solution: all coefficients vanish
        return SolvabilityReport(kq=0.0, a2=a2, b2=b2, exists="yes",
                                 method="closed-form", truncation_remainder=0.0)

    if beta.variant == "zero":
        return SolvabilityReport(kq=cq**2 * a2, a2=a2, b2=b2, exists="yes",
                                 method="closed-form", truncation_remainder=0.0)

    if beta.variant == "column_form":
        x = cq**2 * b2
        if x < 1.0:
            return SolvabilityReport(kq=cq**2 * a2 / (1.0 - x), a2=a2, b2=b2,
                                     exists="yes", method="closed-form",
                                     truncation_remainder=0.0)
        return SolvabilityReport(kq=None, a2=a2, b2=b2, exists="no",
                                 method="closed-form", truncation_remainder=math.inf)

    if beta.variant == "constant_one":
        # every row sum diverges, so the depth-1 term is already infinite
        return SolvabilityReport(kq=None, a2=a2, b2=None, exists="no",
                                 method="closed-form", truncation_remainder=math.inf)

    series = _kq_series(spec, trunc)
    if series.converged:
        return SolvabilityReport(kq=series.value, a2=a2, b2=b2, exists="yes",
                                 method="truncated-series",
                                 truncation_remainder=series.remainder)
    return SolvabilityReport(kq=None, a2=a2, b2=b2, exists="undetermined",
                             method="truncated-series",
                             truncation_remainder=math.inf)


def compute_kq_p(spec: EquationSpec, m: MomentParams,
                 trunc: TruncationPolicy = TruncationPolicy()) -> SeriesValue:
    """p-th moment series: the quadratic series with the kernel constant
    inflated to c_q * c_p^{1/p} mu_p^{1/p}, scaled by c_p^{2/p} overall.
    At p = 2 this is bit-identical to compute_kq."""
    spec = _normalize(spec, "compute_kq_p")
    scale = m.c_p ** (1.0 / m.p) * m.mu_p ** (1.0 / m.p)
    pref = m.c_p ** (2.0 / m.p)
    cq = spec.kernel.c_q
    a2 = spec.alpha.energy_from(0, trunc).value
    if a2 == 0.0 or cq == 0.0:
        return SeriesValue(0.0, 0.0, True)
    c_eff = cq * scale
    if spec.beta.variant == "zero":
        return SeriesValue(pref * c_eff**2 * a2, 0.0, True)
    if spec.beta.variant == "column_form":
        x = c_eff**2 * spec.beta.b2(trunc).value
        if x >= 1.0:
            return SeriesValue(math.inf, math.inf, False)
        return SeriesValue(pref * c_eff**2 * a2 / (1.0 - x), 0.0, True)
    if spec.beta.variant == "constant_one":
        return SeriesValue(math.inf, math.inf, False)
    return _kq_series(spec, trunc, c_scale=scale, prefactor=pref)


def compute_tilde_kq(spec: EquationSpec,
                     trunc: TruncationPolicy = TruncationPolicy()) -> TildeResult:
    """Second-moment series for the multiplicative family, where every
    chain node carries an alpha weight and edges carry c1^2 beta^2."""
    if spec.family != "family2":
        raise ValueError("compute_tilde_kq applies to family2 specs")
    if spec.kernel.c0 is None or spec.kernel.c1 is None:
        raise ValueError("compute_tilde_kq needs declared (c0, c1) bound constants")
    c0, c1 = spec.kernel.c0, spec.kernel.c1
    trunc_ = trunc
    a2 = spec.alpha.energy_from(0, trunc_).value

    if a2 == 0.0:
        return TildeResult(SeriesValue(0.0, 0.0, True), SeriesValue(0.0, 0.0, True))

    L = _horizon(trunc_)
    alpha_sq = spec.alpha.materialize(L) ** 2
    a_tail = max(a2 - float(alpha_sq.sum()), 0.0)
    advance = _advance_factory(spec.beta, 2, 0, L, alpha_sq)
    series = _chain_series(alpha_sq, a2, a_tail, advance, c0**2, c1**2, trunc_)

    # coarse envelope: (c1 bar_beta)^{2k} times the product of alpha tail
    # energies, each chain node forced one row deeper than the last
    bar = spec.beta.bar_sup()
    env_total = 0.0
    env_term = c0**2 * a2
    env_conv = False
    env_rem = 0.0
    for k in range(_DEPTH_CAP + 1):
        env_total += env_term
        tail_next = spec.alpha.energy_from(k + 1, trunc_).value
        ratio = (c1 * bar) ** 2 * tail_next
        if env_term * max(ratio, 0.0) <= trunc_.abs_tail_tol or ratio == 0.0:
            env_conv = True
            env_rem = env_term * ratio / (1.0 - ratio) if ratio < 1.0 else env_term
            break
        env_term *= ratio
        if not math.isfinite(env_term):
            break
    else:
        if ratio < 1.0:
            env_conv = True
            env_rem = env_term * ratio / (1.0 - ratio)
    envelope = SeriesValue(env_total, env_rem, env_conv) if env_conv \
        else SeriesValue(env_total, math.inf, False)
    return TildeResult(series, envelope)


def compute_omega2_bound(spec: EquationSpec,
                         trunc: TruncationPolicy = TruncationPolicy()) -> SeriesValue:
    """Absolute-value chain series with single (not squared) kernel-constant
    weights; a finite value certifies summable coefficient norms."""
    spec = _normalize(spec, "compute_omega2_bound")
    cq = spec.kernel.c_q
    abs_sum = spec.alpha.abs_sum(trunc)
    if abs_sum.value == 0.0 or cq == 0.0:
        return SeriesValue(0.0, 0.0, True)
    if not abs_sum.converged:
        return SeriesValue(cq * abs_sum.value, math.inf, False)
    L = _horizon(trunc)
    alpha_abs = np.abs(spec.alpha.materialize(L))
    a_tail = max(abs_sum.value - float(alpha_abs.sum()), 0.0)
    shift = 1 if spec.family == "lagged" else 0
    advance = _advance_factory(spec.beta, 1, shift, L, None)
    out = _chain_series(alpha_abs, abs_sum.value, a_tail, advance, cq, cq, trunc)
    return SeriesValue(out.value, out.remainder + cq * abs_sum.remainder,
                       out.converged)


def larch_check(alpha: float, beta_seq: Sequence,
                m: MomentParams | None = None,
                trunc: TruncationPolicy = TruncationPolicy()) -> LarchReport:
    """Existence and moments for the volatility form: exists iff B < 1,
    stationary variance of the volatility alpha^2 B^2 / (1 - B^2)."""
    b2 = beta_seq.energy_from(1)
    b = math.sqrt(b2)
    exists = b < 1.0
    variance = alpha**2 * b2 / (1.0 - b2) if exists else math.inf
    if m is None:
        return LarchReport(exists=exists, variance=variance)
    old = (2.0**m.p - m.p - 1.0) ** 0.5 * m.mu_p ** (1.0 / m.p) * b < 1.0
    mapped = EquationSpec.larch(alpha, beta_seq).as_family1()
    bound = compute_kq_p(mapped, m, trunc)
    p_bound = bound.value if bound.converged else math.inf
    return LarchReport(exists=exists, variance=variance,
                       p_moment_bound=p_bound, old_condition_holds=old)


def limsup_row_check(beta: BetaScheme, c_q: float, horizon: int,
                     trunc: TruncationPolicy = TruncationPolicy()) -> LimsupReport:
    """Running sup of c_q^2 * row energies beyond a burn-in; verdict yes
    when it stays strictly below 1."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    burn_in = horizon // 2
    sup = 0.0
    for i in range(burn_in, horizon + 1):
        row = beta.row_energy(i, trunc)
        val = c_q**2 * row.value
        if not row.converged or not math.isfinite(val):
            return LimsupReport(False, math.inf, burn_in, horizon)
        sup = max(sup, val)
    return LimsupReport(sup < 1.0, sup, burn_in, horizon)
