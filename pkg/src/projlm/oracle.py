"""Brute-force nested-series evaluation on small windows.

An independent correctness oracle for the engine: the recursive
expansion over index-set chains is evaluated directly, with none of the
engine's slice recursions or compiled code. Everything here is
deliberately slow and window-capped; the point is a second opinion, not
throughput. Also houses the classical multilinear (Volterra) expansion
available when the kernel is linear.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from projlm.engine.stream import InnovationStream
from projlm.model import EquationSpec

__all__ = [
    "IndexFamily",
    "GFamily",
    "VolterraTerm",
    "OrthoStat",
    "nested_eval",
    "build_gfamily",
    "convergence_bound",
    "linear_volterra_terms",
    "mc_orthogonality_check",
]

# DFS over chains visits every admissible subset of T once; 2^24 is the
# most a desk check should ever pay for
_MAX_WINDOW = 24

Subset = tuple[int, ...]


@dataclass(frozen=True)
class IndexFamily:
    """A finite index set T with a class of subsets ordered by the
    append-one-larger-point successor relation.

    Two class shapes cover everything used here: ``all`` (every nonempty
    subset; terminal sets are those containing max T) and ``graded``
    (subsets of at most ``order`` points; terminal sets have exactly
    ``order`` points). A set with no successor that is not terminal is a
    dead end: its inner sum is empty.
    """

    points: Subset
    mode: str = "all"
    order: int = 0

    def __post_init__(self):
        pts = tuple(sorted(set(int(p) for p in self.points)))
        if not pts:
            raise ValueError("index family needs at least one point")
        object.__setattr__(self, "points", pts)
        if self.mode not in ("all", "graded"):
            raise ValueError(f"unknown family mode {self.mode!r}")
        if self.mode == "graded" and not 1 <= self.order <= len(pts):
            raise ValueError("graded family needs 1 <= order <= |T|")

    @staticmethod
    def all_subsets(points) -> "IndexFamily":
        return IndexFamily(tuple(points), "all")

    @staticmethod
    def fixed_order(points, order: int) -> "IndexFamily":
        return IndexFamily(tuple(points), "graded", int(order))

    @property
    def top(self) -> int:
        return self.points[-1]

    def is_terminal(self, s: Subset) -> bool:
        if self.mode == "all":
            return s[-1] == self.top
        return len(s) == self.order

    def successors(self, s: Subset) -> list[Subset]:
        if self.is_terminal(s):
            return []
        return [s + (p,) for p in self.points if p > s[-1]]


@dataclass(frozen=True)
class GFamily:
    """Scalar functions indexed by subsets: ``const`` on terminal sets,
    ``fn`` elsewhere, with optional square-envelope constants
    (alpha_env, beta_env) satisfying G_S(x)^2 <= alpha^2 + beta^2 x^2."""

    fn: Callable[[Subset], Callable[[float], float]]
    const: Callable[[Subset], float]
    alpha_env: Callable[[Subset], float] | None = None
    beta_env: Callable[[Subset], float] | None = None

    def envelope_holds(self, family: IndexFamily, s: Subset,
                       grid: np.ndarray) -> bool:
        a = self.alpha_env(s)
        b = self.beta_env(s)
        if family.is_terminal(s):
            return self.const(s) ** 2 <= a * a + 1e-12
        f = self.fn(s)
        return all(f(x) ** 2 <= a * a + b * b * x * x + 1e-9 * (1 + x * x)
                   for x in grid)


def _zeta_map(family: IndexFamily, innovations) -> dict[int, float]:
    if isinstance(innovations, Mapping):
        z = {int(k): float(v) for k, v in innovations.items()}
    else:
        vals = list(innovations)
        if len(vals) != len(family.points):
            raise ValueError("innovation sequence length must match |T|")
        z = {p: float(v) for p, v in zip(family.points, vals)}
    missing = [p for p in family.points if p not in z]
    if missing:
        raise ValueError(f"innovations missing for points {missing}")
    return z


def nested_eval(family: IndexFamily, g: GFamily, innovations) -> float:
    """Depth-first evaluation of the nested expansion over chains
    S_1 < S_2 < ... (each step appends one strictly larger point)."""
    if len(family.points) > _MAX_WINDOW:
        raise ValueError(
            f"window {len(family.points)} exceeds the oracle cap "
            f"{_MAX_WINDOW}; chain enumeration would blow up")
    zeta = _zeta_map(family, innovations)

    def val(s: Subset) -> float:
        if family.is_terminal(s):
            return g.const(s)
        inner = 0.0
        for s2 in family.successors(s):
            inner += zeta[s2[-1]] * val(s2)
        return g.fn(s)(inner)

    total = 0.0
    # newest point first, matching the engine's lag-ascending accumulation
    # so a plain linear spec agrees bit for bit, not merely to rounding
    for p in reversed(family.points):
        total += zeta[p] * val((p,))
    return total


def build_gfamily(spec: EquationSpec, t: int,
                  window: int) -> tuple[IndexFamily, GFamily]:
    """Generate the function table induced by a FamilyI spec on the
    window {t-window+1, ..., t}, all-subsets class.

    The four cases (singleton or not, crossed with whether the set
    reaches t) are produced from the spec's own kernel and coefficient
    accessors rather than transcribed formulas.
    """
    if spec.family != "family1":
        raise ValueError("the nested-expansion table is generated for "
                         "family1 specs only")
    if not 1 <= window <= _MAX_WINDOW:
        raise ValueError(f"window must be in 1..{_MAX_WINDOW}")
    fam = IndexFamily.all_subsets(range(t - window + 1, t + 1))
    q = spec.kernel
    alpha = spec.alpha
    beta = spec.beta

    def fn(s: Subset) -> Callable[[float], float]:
        k = t - s[-1]  # s[-1] < t here, so k >= 1
        a_k = alpha.at(k)
        if len(s) == 1:
            return lambda x: q.eval(a_k + x)
        w = beta.at(k, s[-1] - s[-2])
        return lambda x: w * q.eval(a_k + x)

    def const(s: Subset) -> float:
        q0 = q.eval(alpha.at(0))
        if len(s) == 1:
            return q0
        return beta.at(0, s[-1] - s[-2]) * q0

    # pointwise square envelopes from the declared kernel constants:
    # Q(a + x)^2 <= c0^2 + c1^2 (a + x)^2 <= (c0^2 + 2 c1^2 a^2) + 2 c1^2 x^2
    if q.c0 is not None and q.c1 is not None:
        e0, e1 = q.c0, q.c1
    else:
        e0, e1 = 0.0, q.c_q

    def alpha_env(s: Subset) -> float:
        k = t - s[-1]
        if k == 0:
            base = abs(q.eval(alpha.at(0)))
        else:
            base = math.sqrt(e0 * e0 + 2.0 * e1 * e1 * alpha.at(k) ** 2)
        if len(s) == 1:
            return base
        return abs(beta.at(k, s[-1] - s[-2])) * base

    def beta_env(s: Subset) -> float:
        if s[-1] == t:
            return 0.0
        b = math.sqrt(2.0) * e1
        if len(s) == 1:
            return b
        return abs(beta.at(t - s[-1], s[-1] - s[-2])) * b

    return fam, GFamily(fn=fn, const=const, alpha_env=alpha_env,
                        beta_env=beta_env)


def convergence_bound(family: IndexFamily, g: GFamily) -> float:
    """Exact chain sum sum_p sum_{S_1<...<S_p} beta_{S_1}^2 ...
    beta_{S_p-1}^2 alpha_{S_p}^2 over the finite family; the second
    moment of the nested expansion never exceeds it.

    Every set contributes its alpha^2 weighted by the beta^2 product of
    its prefix path (the square bound is unrolled at each chain level,
    so chains of every length appear, not just the maximal-ended ones).
    The classical instantiation keeps only the terminal contributions
    because its interior alpha envelopes are zero.
    """
    if len(family.points) > _MAX_WINDOW:
        raise ValueError(
            f"window {len(family.points)} exceeds the oracle cap "
            f"{_MAX_WINDOW}")
    if g.alpha_env is None or g.beta_env is None:
        raise ValueError("convergence_bound needs declared envelopes")

    def walk(s: Subset, prod: float) -> float:
        a = g.alpha_env(s)
        total = prod * a * a
        succ = family.successors(s)
        if succ:
            b = g.beta_env(s)
            bb = prod * b * b
            for s2 in succ:
                total += walk(s2, bb)
        return total

    return sum(walk((p,), 1.0) for p in family.points)


class VolterraTerm(NamedTuple):
    value: float
    in_range: bool  # False when the requested order cannot fit the window


class OrthoStat(NamedTuple):
    estimate: float
    std_error: float
    replicates: int


def linear_volterra_terms(spec: EquationSpec, t: int, k: int,
                          innovations, window: int) -> VolterraTerm:
    """Order-(k+1) multilinear term of the expansion available for a
    linear kernel: slope^(k+1) times the sum over i >= 0 and jumps
    j_1..j_k >= 1 with i + j_1 + ... + j_k <= window of
    alpha_i * prod(beta at each jump) * zeta_{t-i} * ... (one innovation
    per visited lag). k = 0 is the linear term."""
    if spec.family != "family1" or spec.kernel.variant != "linear":
        raise ValueError("multilinear terms require a linear-kernel "
                         "family1 spec")
    if k < 0:
        raise ValueError("order must be >= 0")
    if k > window:
        return VolterraTerm(0.0, False)
    slope = spec.kernel.params[0]
    alpha = spec.alpha
    beta = spec.beta
    zeta = innovations if isinstance(innovations, Mapping) else dict(innovations)

    def z(u: int) -> float:
        return float(zeta[u])

    c = slope ** (k + 1)

    def jumps(lag: int, left: int, prod: float) -> float:
        # prod already carries alpha_i, the betas so far, and the zetas
        if left == 0:
            return prod
        total = 0.0
        for j in range(1, window - lag + 1):
            nxt = lag + j
            total += jumps(nxt, left - 1,
                           prod * beta.at(lag, j) * z(t - nxt))
        return total

    total = 0.0
    for i in range(window - k + 1):
        a_i = alpha.at(i)
        if a_i == 0.0:
            continue
        total += jumps(i, k, a_i * z(t - i))
    return VolterraTerm(c * total, True)


def mc_orthogonality_check(spec: EquationSpec, orders: tuple[int, int],
                           replicates: int, window: int, *,
                           times: tuple[int, int] | None = None,
                           stream: InnovationStream | None = None) -> OrthoStat:
    """Monte Carlo estimate of the cross moment of two multilinear terms
    of the given orders (1 = linear), with its standard error."""
    ka, kb = orders
    if ka < 1 or kb < 1:
        raise ValueError("orders count innovation factors, so >= 1")
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    stream = stream or InnovationStream()
    t_a, t_b = times if times is not None else (0, 0)
    lo = min(t_a, t_b) - window
    hi = max(t_a, t_b)
    prods = np.empty(replicates)
    for r in range(replicates):
        vals = stream.values(r, lo, hi + 1)
        zeta = {u: vals[u - lo] for u in range(lo, hi + 1)}
        va = linear_volterra_terms(spec, t_a, ka - 1, zeta, window).value
        vb = linear_volterra_terms(spec, t_b, kb - 1, zeta, window).value
        prods[r] = va * vb
    est = float(prods.mean())
    se = float(prods.std(ddof=1) / math.sqrt(replicates))
    return OrthoStat(est, se, replicates)
