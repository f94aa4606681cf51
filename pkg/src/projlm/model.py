"""Kernels, coefficient schemes and equation specifications.

Pure data plus deterministic evaluation. No randomness lives here; the
engine consumes these objects read-only, so everything is immutable and
hashable (tuples instead of arrays in fields).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gamma as _gamma

__all__ = [
    "Kernel",
    "Sequence",
    "AlphaScheme",
    "BetaScheme",
    "DFun",
    "EquationSpec",
    "TruncationPolicy",
    "SeriesValue",
    "eval_kernel",
    "alpha_at",
    "beta_at",
    "tail_energy",
]

_FAMILIES = ("family1", "family2", "lagged", "tv_arfima", "larch")


@dataclass(frozen=True)
class TruncationPolicy:
    """Stopping rule for infinite series: stop at the first of the two caps."""

    max_terms: int = 10**6
    abs_tail_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not (self.abs_tail_tol >= 0.0):
            raise ValueError("abs_tail_tol must be >= 0")


class SeriesValue(NamedTuple):
    """Truncated series evaluation: partial sum, remainder estimate, verdict.

    ``converged`` False means the partial-sum increments failed to drop
    below the tolerance within the term budget; the value is then the
    partial sum, reported rather than raised.
    """

    value: float
    remainder: float
    converged: bool


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class Kernel:
    """Scalar map Q with optional declared constants and shape flags.

    Declared constants are trusted inputs checked only by sampling:
    ``c_q`` is the dominating constant (|Q(x)| <= c_q|x|), ``c_l`` the
    Lipschitz constant, and ``(c0, c1)`` bound Q(x)^2 <= c0^2 + c1^2 x^2.
    """

    variant: str
    params: tuple[float, ...] = ()
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    c_q: float | None = None
    c_l: float | None = None
    c0: float | None = None
    c1: float | None = None
    antisymmetric: bool = False
    monotone_nonneg: bool = False
    bounded: bool = False

    # -- constructors ------------------------------------------------------

    @staticmethod
    def linear(slope: float = 1.0) -> "Kernel":
        a = abs(slope)
        return Kernel("linear", (float(slope),), c_q=a, c_l=a, c0=0.0, c1=a,
                      antisymmetric=True, monotone_nonneg=slope >= 0)

    @staticmethod
    def relu() -> "Kernel":
        return Kernel("relu", (), c_q=1.0, c_l=1.0, c0=0.0, c1=1.0,
                      monotone_nonneg=True)

    @staticmethod
    def triangle() -> "Kernel":
        # x on [0,1], 2-x on [1,2], 0 elsewhere
        return Kernel("triangle", (), c_q=1.0, c_l=1.0, c0=1.0, c1=0.0,
                      bounded=True)

    @staticmethod
    def affine_linear(c0: float, c1: float) -> "Kernel":
        # Q(x) = c0 + c1 x; (a+b)^2 <= 2a^2 + 2b^2 gives the declared bound
        s = math.sqrt(2.0)
        return Kernel("affine", (float(c0), float(c1)), c_l=abs(c1),
                      c0=s * abs(c0), c1=s * abs(c1),
                      c_q=abs(c1) if c0 == 0.0 else None)

    @staticmethod
    def step(breakpoints: tuple[float, ...], values: tuple[float, ...]) -> "Kernel":
        bp = tuple(float(b) for b in breakpoints)
        vals = tuple(float(v) for v in values)
        if len(bp) < 2 or len(vals) != len(bp) - 1:
            raise ValueError("step kernel needs len(values) == len(breakpoints) - 1")
        if any(bp[i] >= bp[i + 1] for i in range(len(bp) - 1)):
            raise ValueError("breakpoints must be strictly increasing")
        vmax = max(abs(v) for v in vals) if vals else 0.0
        return Kernel("step", (), breakpoints=bp, values=vals,
                      c0=vmax, c1=0.0, bounded=True)

    @staticmethod
    def indicator(a: float, b: float) -> "Kernel":
        if not a < b:
            raise ValueError("indicator interval must have a < b")
        cq = 1.0 / a if a > 0 else None
        return Kernel("indicator", (float(a), float(b)), c_q=cq,
                      c0=1.0, c1=0.0, bounded=True)

    # -- evaluation --------------------------------------------------------

    def eval(self, x):
        """Q(x) for a finite scalar or array; rejects non-finite input."""
        arr = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernel input must be finite")
        v = self.variant
        if v == "linear":
            out = self.params[0] * arr
        elif v == "relu":
            out = np.maximum(0.0, arr)
        elif v == "triangle":
            out = np.where((arr >= 0.0) & (arr <= 1.0), arr,
                           np.where((arr > 1.0) & (arr <= 2.0), 2.0 - arr, 0.0))
        elif v == "affine":
            out = self.params[0] + self.params[1] * arr
        elif v == "step":
            # cells [b_i, b_{i+1}) half-open, last cell closed, 0 outside
            bp = np.asarray(self.breakpoints)
            vals = np.asarray(self.values)
            idx = np.searchsorted(bp, arr, side="right") - 1
            inside = (arr >= bp[0]) & (arr <= bp[-1])
            idx = np.clip(idx, 0, len(vals) - 1)
            out = np.where(inside, vals[idx], 0.0)
        elif v == "indicator":
            a, b = self.params
            out = np.where((arr >= a) & (arr < b), 1.0, 0.0)
        else:
            raise ValueError(f"unknown kernel variant {v!r}")
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    __call__ = eval

    def to_dict(self) -> dict:
        d: dict = {"variant": self.variant}
        if self.variant == "linear":
            d["slope"] = self.params[0]
        elif self.variant == "affine":
            d["c0"], d["c1"] = self.params
        elif self.variant == "step":
            d["breakpoints"] = list(self.breakpoints)
            d["values"] = list(self.values)
        elif self.variant == "indicator":
            d["a"], d["b"] = self.params
        return d

    @staticmethod
    def from_dict(d: dict) -> "Kernel":
        d = dict(d)
        v = d.pop("variant", None)
        if v == "linear":
            k = Kernel.linear(_num(d.pop("slope", 1.0), "kernel.slope"))
        elif v == "relu":
            k = Kernel.relu()
        elif v == "triangle":
            k = Kernel.triangle()
        elif v == "affine":
            k = Kernel.affine_linear(_num(d.pop("c0"), "kernel.c0"),
                                     _num(d.pop("c1"), "kernel.c1"))
        elif v == "step":
            k = Kernel.step(tuple(d.pop("breakpoints")), tuple(d.pop("values")))
        elif v == "indicator":
            k = Kernel.indicator(_num(d.pop("a"), "kernel.a"),
                                 _num(d.pop("b"), "kernel.b"))
        else:
            raise ValueError(f"unknown kernel variant {v!r}")
        if d:
            raise ValueError(f"unknown kernel fields: {sorted(d)}")
        return k


def eval_kernel(kernel: Kernel, x):
    """Q(x); total on finite reals, rejects non-finite input."""
    return kernel.eval(x)


# ---------------------------------------------------------------------------
# one-index sequences (building block for alpha/beta schemes)


@dataclass(frozen=True)
class Sequence:
    """One-index real sequence: geometric scale*ratio^j or an explicit list."""

    kind: str  # "geometric" | "values"
    scale: float = 1.0
    ratio: float = 0.0
    values: tuple[float, ...] = ()

    @staticmethod
    def geometric(scale: float, ratio: float) -> "Sequence":
        if not abs(ratio) < 1:
            raise ValueError("geometric sequence needs |ratio| < 1")
        return Sequence("geometric", float(scale), float(ratio))

    @staticmethod
    def of(values) -> "Sequence":
        return Sequence("values", values=tuple(float(v) for v in values))

    def at(self, j: int) -> float:
        if j < 0:
            raise ValueError("sequence index must be >= 0")
        if self.kind == "geometric":
            return self.scale * self.ratio**j
        return self.values[j] if j < len(self.values) else 0.0

    def abs_max(self) -> float:
        if self.kind == "geometric":
            return abs(self.scale * self.ratio)  # max over j >= 1
        return max((abs(v) for v in self.values[1:]), default=0.0)

    def energy_from(self, k: int) -> float:
        """sum_{j >= max(k,1)} seq(j)^2, exact."""
        k = max(k, 1)
        if self.kind == "geometric":
            r2 = self.ratio**2
            return self.scale**2 * r2**k / (1.0 - r2)
        return float(sum(v * v for v in self.values[k:]))

    def abs_sum_from(self, k: int) -> float:
        k = max(k, 1)
        if self.kind == "geometric":
            r = abs(self.ratio)
            return abs(self.scale) * r**k / (1.0 - r)
        return float(sum(abs(v) for v in self.values[k:]))

    def to_dict(self) -> dict:
        if self.kind == "geometric":
            return {"kind": "geometric", "scale": self.scale, "ratio": self.ratio}
        return {"kind": "values", "values": list(self.values)}

    @staticmethod
    def from_dict(d: dict) -> "Sequence":
        d = dict(d)
        k = d.pop("kind", None)
        if k == "geometric":
            s = Sequence.geometric(_num(d.pop("scale"), "seq.scale"),
                                   _num(d.pop("ratio"), "seq.ratio"))
        elif k == "values":
            s = Sequence.of(d.pop("values"))
        else:
            raise ValueError(f"unknown sequence kind {k!r}")
        if d:
            raise ValueError(f"unknown sequence fields: {sorted(d)}")
        return s


# ---------------------------------------------------------------------------
# alpha schemes


@dataclass(frozen=True)
class AlphaScheme:
    """The coefficients alpha_i.

    Variants: zero, finite vector, geometric, fractional-difference
    recursion (``arfima``), and the intercept-times-sequence product that
    the volatility mapping produces (``larch_product``).
    """

    variant: str
    d: float = 0.0
    scale: float = 1.0
    values: tuple[float, ...] = ()
    intercept: float = 0.0
    seq: Sequence | None = None

    @staticmethod
    def zero() -> "AlphaScheme":
        return AlphaScheme("zero")

    @staticmethod
    def finite(values) -> "AlphaScheme":
        return AlphaScheme("finite", values=tuple(float(v) for v in values))

    @staticmethod
    def geometric(scale: float, ratio: float) -> "AlphaScheme":
        if not abs(ratio) < 1:
            raise ValueError("geometric alpha needs |ratio| < 1")
        return AlphaScheme("geometric", scale=float(scale), d=float(ratio))

    @staticmethod
    def arfima(d: float, scale: float = 1.0) -> "AlphaScheme":
        if not -0.5 < d < 0.5:
            raise ValueError("arfima parameter d must lie in (-1/2, 1/2)")
        return AlphaScheme("arfima", d=float(d), scale=float(scale))

    @staticmethod
    def larch_product(intercept: float, seq: Sequence) -> "AlphaScheme":
        return AlphaScheme("larch_product", intercept=float(intercept), seq=seq)

    def at(self, i: int) -> float:
        if i < 0:
            raise ValueError("alpha index must be >= 0")
        v = self.variant
        if v == "zero":
            return 0.0
        if v == "finite":
            return self.values[i] if i < len(self.values) else 0.0
        if v == "geometric":
            # iterated product, bit-identical to materialize()
            val = self.scale
            for _ in range(i):
                val = val * self.d
            return val
        if v == "arfima":
            val = self.scale
            for j in range(1, i + 1):
                val = val * (self.d + j - 1.0) / j
            return val
        if v == "larch_product":
            return 0.0 if i == 0 else self.intercept * self.seq.at(i)
        raise ValueError(f"unknown alpha variant {v!r}")

    def materialize(self, m: int) -> np.ndarray:
        """alpha_0..alpha_m as an array, via the stable recursions."""
        out = np.zeros(m + 1)
        v = self.variant
        if v == "zero":
            return out
        if v == "finite":
            k = min(m + 1, len(self.values))
            out[:k] = self.values[:k]
            return out
        if v == "geometric":
            out[0] = self.scale
            for j in range(1, m + 1):
                out[j] = out[j - 1] * self.d
            return out
        if v == "arfima":
            # alpha_j = alpha_{j-1} (d + j - 1)/j, never gamma ratios
            out[0] = self.scale
            val = self.scale
            d = self.d
            for j in range(1, m + 1):
                val = val * (d + j - 1.0) / j
                out[j] = val
            return out
        if v == "larch_product":
            for j in range(1, m + 1):
                out[j] = self.intercept * self.seq.at(j)
            return out
        raise ValueError(f"unknown alpha variant {v!r}")

    def energy_from(self, k: int, trunc: TruncationPolicy) -> SeriesValue:
        """A^2_k = sum_{i >= k} alpha_i^2 with remainder estimate."""
        v = self.variant
        if v == "zero":
            return SeriesValue(0.0, 0.0, True)
        if v == "finite":
            return SeriesValue(float(sum(x * x for x in self.values[k:])), 0.0, True)
        if v == "geometric":
            r2 = self.d**2
            return SeriesValue(self.scale**2 * r2**k / (1.0 - r2), 0.0, True)
        if v == "arfima":
            # closed form at k=0: scale^2 Gamma(1-2d)/Gamma(1-d)^2; subtract
            # the exact partial sum for k > 0
            total = self.scale**2 * _gamma(1.0 - 2.0 * self.d) / _gamma(1.0 - self.d) ** 2
            if k == 0:
                return SeriesValue(float(total), 0.0, True)
            head = float(np.sum(self.materialize(k - 1) ** 2))
            return SeriesValue(float(total - head), 0.0, True)
        if v == "larch_product":
            if k == 0:
                k = 1
            return SeriesValue(self.intercept**2 * self.seq.energy_from(k), 0.0, True)
        raise ValueError(f"unknown alpha variant {v!r}")

    def abs_sum(self, trunc: TruncationPolicy) -> SeriesValue:
        """sum_i |alpha_i| under the truncation policy."""
        v = self.variant
        if v == "zero":
            return SeriesValue(0.0, 0.0, True)
        if v == "finite":
            return SeriesValue(float(sum(abs(x) for x in self.values)), 0.0, True)
        if v == "geometric":
            r = abs(self.d)
            return SeriesValue(abs(self.scale) / (1.0 - r), 0.0, True)
        if v == "larch_product":
            return SeriesValue(abs(self.intercept) * self.seq.abs_sum_from(1), 0.0, True)
        # arfima: sum by the policy, flag non-convergence
        tot = 0.0
        val = abs(self.scale)
        d = self.d
        for j in range(trunc.max_terms):
            inc = abs(val)
            tot += inc
            if inc < trunc.abs_tail_tol:
                return SeriesValue(tot, inc * (j + 1), True)
            val = val * (d + j) / (j + 1.0)
        return SeriesValue(tot, math.inf, False)

    def to_dict(self) -> dict:
        v = self.variant
        if v == "zero":
            return {"variant": "zero"}
        if v == "finite":
            return {"variant": "finite", "values": list(self.values)}
        if v == "geometric":
            return {"variant": "geometric", "scale": self.scale, "ratio": self.d}
        if v == "arfima":
            return {"variant": "arfima", "d": self.d, "scale": self.scale}
        return {"variant": "larch_product", "intercept": self.intercept,
                "seq": self.seq.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "AlphaScheme":
        d = dict(d)
        v = d.pop("variant", None)
        if v == "zero":
            s = AlphaScheme.zero()
        elif v == "finite":
            s = AlphaScheme.finite(d.pop("values"))
        elif v == "geometric":
            s = AlphaScheme.geometric(_num(d.pop("scale"), "alpha.scale"),
                                      _num(d.pop("ratio"), "alpha.ratio"))
        elif v == "arfima":
            s = AlphaScheme.arfima(_num(d.pop("d"), "alpha.d"),
                                   _num(d.pop("scale", 1.0), "alpha.scale"))
        elif v == "larch_product":
            s = AlphaScheme.larch_product(_num(d.pop("intercept"), "alpha.intercept"),
                                          Sequence.from_dict(d.pop("seq")))
        else:
            raise ValueError(f"unknown alpha variant {v!r}")
        if d:
            raise ValueError(f"unknown alpha fields: {sorted(d)}")
        return s


def alpha_at(scheme: AlphaScheme, i: int) -> float:
    """alpha_i."""
    return scheme.at(i)


# ---------------------------------------------------------------------------
# beta schemes


@dataclass(frozen=True)
class BetaScheme:
    """The two-index coefficients beta_{i,j}, i >= 0, j >= 1.

    Variants: zero; constant-one; sum_form beta_{i,j} = seq(i+j);
    column_form beta_{i,j} = seq(j); finite_lag with support i + j <= max_lag;
    general with an explicit finite table (or an in-process generator rule).
    """

    variant: str
    seq: Sequence | None = None
    max_lag: int = 0
    table: tuple[tuple[int, int, float], ...] = ()
    rule: Callable[[int, int], float] | None = field(default=None, compare=False)
    rule_extent: int = 0

    @staticmethod
    def zero() -> "BetaScheme":
        return BetaScheme("zero")

    @staticmethod
    def constant_one() -> "BetaScheme":
        return BetaScheme("constant_one")

    @staticmethod
    def sum_form(seq: Sequence) -> "BetaScheme":
        return BetaScheme("sum_form", seq=seq)

    @staticmethod
    def column_form(seq: Sequence) -> "BetaScheme":
        return BetaScheme("column_form", seq=seq)

    @staticmethod
    def finite_lag(max_lag: int, entries: dict) -> "BetaScheme":
        tab = []
        for (i, j), v in sorted(entries.items()):
            if i < 0 or j < 1:
                raise ValueError("finite_lag entries need i >= 0, j >= 1")
            if i + j > max_lag:
                raise ValueError(f"entry ({i},{j}) outside support i+j <= {max_lag}")
            tab.append((int(i), int(j), float(v)))
        return BetaScheme("finite_lag", max_lag=int(max_lag), table=tuple(tab))

    @staticmethod
    def general(entries: dict | None = None, *, rule=None, rule_extent: int = 0) -> "BetaScheme":
        if (entries is None) == (rule is None):
            raise ValueError("general beta takes exactly one of entries or rule")
        if rule is not None:
            if rule_extent < 1:
                raise ValueError("a general rule needs a positive rule_extent")
            return BetaScheme("general", rule=rule, rule_extent=int(rule_extent))
        tab = tuple((int(i), int(j), float(v)) for (i, j), v in sorted(entries.items()))
        if any(i < 0 or j < 1 for i, j, _ in tab):
            raise ValueError("general entries need i >= 0, j >= 1")
        return BetaScheme("general", table=tab)

    def at(self, i: int, j: int) -> float:
        if i < 0:
            raise ValueError("beta row index must be >= 0")
        if j < 1:
            raise ValueError("beta lag index must be >= 1")
        v = self.variant
        if v == "zero":
            return 0.0
        if v == "constant_one":
            return 1.0
        if v == "sum_form":
            return self.seq.at(i + j)
        if v == "column_form":
            return self.seq.at(j)
        if v == "finite_lag":
            for ti, tj, tv in self.table:
                if ti == i and tj == j:
                    return tv
            return 0.0
        if v == "general":
            if self.rule is not None:
                return float(self.rule(i, j)) if i + j <= self.rule_extent else 0.0
            for ti, tj, tv in self.table:
                if ti == i and tj == j:
                    return tv
            return 0.0
        raise ValueError(f"unknown beta variant {v!r}")

    def beta_bar(self, j: int) -> float:
        """max_{0 <= i < j} |beta_{i, j-i}|."""
        if j < 1:
            raise ValueError("beta_bar needs j >= 1")
        return max(abs(self.at(i, j - i)) for i in range(j))

    def bar_sup(self) -> float:
        """An upper bound for sup_{i,j} |beta_{i,j}| when one is available."""
        v = self.variant
        if v == "zero":
            return 0.0
        if v == "constant_one":
            return 1.0
        if v in ("sum_form", "column_form"):
            return self.seq.abs_max()
        entries = self.table
        return max((abs(t[2]) for t in entries), default=0.0) if self.rule is None \
            else max(abs(self.at(i, j)) for i in range(self.rule_extent)
                     for j in range(1, self.rule_extent - i + 1))

    def b2(self, trunc: TruncationPolicy) -> SeriesValue:
        """B^2 = sum_{j>=1} seq(j)^2 for column_form (exact)."""
        if self.variant != "column_form":
            raise ValueError("B^2 is defined for column_form beta")
        return SeriesValue(self.seq.energy_from(1), 0.0, True)

    def sum_energy(self, trunc: TruncationPolicy) -> SeriesValue:
        """sum_{m>=1} seq(m)^2 for sum_form (exact)."""
        if self.variant != "sum_form":
            raise ValueError("sum energy is defined for sum_form beta")
        return SeriesValue(self.seq.energy_from(1), 0.0, True)

    def row_energy(self, i: int, trunc: TruncationPolicy) -> SeriesValue:
        """sum_{j>=1} beta_{i,j}^2 for row i."""
        v = self.variant
        if v == "zero":
            return SeriesValue(0.0, 0.0, True)
        if v == "constant_one":
            return SeriesValue(math.inf, math.inf, False)
        if v == "column_form":
            return SeriesValue(self.seq.energy_from(1), 0.0, True)
        if v == "sum_form":
            return SeriesValue(self.seq.energy_from(i + 1), 0.0, True)
        ext = self.max_extent()
        tot = sum(self.at(i, j) ** 2 for j in range(1, max(ext - i, 0) + 1))
        return SeriesValue(float(tot), 0.0, True)

    def max_extent(self) -> int:
        """Largest i+j with a (potentially) nonzero entry, for finite variants."""
        v = self.variant
        if v == "finite_lag":
            return self.max_lag
        if v == "general":
            if self.rule is not None:
                return self.rule_extent
            return max((i + j for i, j, _ in self.table), default=0)
        raise ValueError("max_extent applies to finite-support variants")

    def materialize(self, m: int) -> np.ndarray:
        """Dense table B[i, j] = beta_{i,j} for 0 <= i <= m, 0 <= j <= m (col 0 unused)."""
        out = np.zeros((m + 1, m + 1))
        v = self.variant
        if v == "zero":
            return out
        if v == "constant_one":
            out[:, 1:] = 1.0
            return out
        if v == "sum_form":
            s = np.array([self.seq.at(t) for t in range(2 * m + 1)])
            for i in range(m + 1):
                out[i, 1:] = s[i + 1:i + m + 1]
            return out
        if v == "column_form":
            col = np.array([self.seq.at(j) for j in range(m + 1)])
            out[:, 1:] = col[1:]
            return out
        # finite table / rule
        if self.rule is not None:
            for i in range(min(m, self.rule_extent) + 1):
                for j in range(1, min(m, self.rule_extent - i) + 1):
                    out[i, j] = self.rule(i, j)
            return out
        for i, j, val in self.table:
            if i <= m and j <= m:
                out[i, j] = val
        return out

    def to_dict(self) -> dict:
        v = self.variant
        if v in ("zero", "constant_one"):
            return {"variant": v}
        if v in ("sum_form", "column_form"):
            return {"variant": v, "seq": self.seq.to_dict()}
        if v == "finite_lag":
            return {"variant": v, "max_lag": self.max_lag,
                    "table": [[i, j, val] for i, j, val in self.table]}
        if self.rule is not None:
            raise ValueError("general beta with a generator rule is not serializable")
        return {"variant": "general", "table": [[i, j, val] for i, j, val in self.table]}

    @staticmethod
    def from_dict(d: dict) -> "BetaScheme":
        d = dict(d)
        v = d.pop("variant", None)
        if v == "zero":
            s = BetaScheme.zero()
        elif v == "constant_one":
            s = BetaScheme.constant_one()
        elif v == "sum_form":
            s = BetaScheme.sum_form(Sequence.from_dict(d.pop("seq")))
        elif v == "column_form":
            s = BetaScheme.column_form(Sequence.from_dict(d.pop("seq")))
        elif v == "finite_lag":
            tab = {(int(i), int(j)): float(val) for i, j, val in d.pop("table")}
            s = BetaScheme.finite_lag(int(d.pop("max_lag")), tab)
        elif v == "general":
            tab = {(int(i), int(j)): float(val) for i, j, val in d.pop("table")}
            s = BetaScheme.general(tab)
        else:
            raise ValueError(f"unknown beta variant {v!r}")
        if d:
            raise ValueError(f"unknown beta fields: {sorted(d)}")
        return s


def beta_at(scheme: BetaScheme, i: int, j: int) -> float:
    """beta_{i,j}; the inner sums only use lags j >= 1."""
    return scheme.at(i, j)


# ---------------------------------------------------------------------------
# memory-intensity map for the time-varying fractional family


@dataclass(frozen=True)
class DFun:
    """Scalar map x -> d(x) with a declared range bound d_bar < 1/2."""

    variant: str  # "constant" | "logistic"
    params: tuple[float, ...]

    @staticmethod
    def constant(value: float) -> "DFun":
        return DFun("constant", (float(value),))

    @staticmethod
    def logistic(lo: float, hi: float, scale: float = 1.0) -> "DFun":
        """d(x) = lo + (hi - lo)/(1 + exp(-x/scale)): smooth, range (lo, hi)."""
        if scale <= 0:
            raise ValueError("logistic scale must be positive")
        return DFun("logistic", (float(lo), float(hi), float(scale)))

    @property
    def d_bar(self) -> float:
        if self.variant == "constant":
            return abs(self.params[0])
        return max(abs(self.params[0]), abs(self.params[1]))

    def eval(self, x: float) -> float:
        if self.variant == "constant":
            return self.params[0]
        lo, hi, sc = self.params
        return lo + (hi - lo) / (1.0 + math.exp(-x / sc))

    def to_dict(self) -> dict:
        if self.variant == "constant":
            return {"variant": "constant", "value": self.params[0]}
        lo, hi, sc = self.params
        return {"variant": "logistic", "lo": lo, "hi": hi, "scale": sc}

    @staticmethod
    def from_dict(d: dict) -> "DFun":
        d = dict(d)
        v = d.pop("variant", None)
        if v == "constant":
            s = DFun.constant(_num(d.pop("value"), "dfun.value"))
        elif v == "logistic":
            s = DFun.logistic(_num(d.pop("lo"), "dfun.lo"),
                              _num(d.pop("hi"), "dfun.hi"),
                              _num(d.pop("scale", 1.0), "dfun.scale"))
        else:
            raise ValueError(f"unknown dfun variant {v!r}")
        if d:
            raise ValueError(f"unknown dfun fields: {sorted(d)}")
        return s


# ---------------------------------------------------------------------------
# equation specifications


@dataclass(frozen=True)
class EquationSpec:
    """Family tag + mean + kernel + coefficient schemes; fixes the recursion.

    Families:
      family1   g_{t-k,t} = Q(alpha_k + sum_{i<k} beta_{i,k-i} zeta_{t-i} g_{t-i,t})
      family2   g_{t-k,t} = alpha_k * Q(sum_{i<k} beta_{i,k-i} zeta_{t-i} g_{t-i,t})
      lagged    same inner sum but taken from the previous time's coefficients
      tv_arfima product-form coefficients with state-dependent memory d(x)
      larch     volatility form; normalizes to a family1 spec with identity kernel
    """

    family: str
    mu: float = 0.0
    kernel: Kernel | None = None
    alpha: AlphaScheme | None = None
    beta: BetaScheme | None = None
    dfun: DFun | None = None
    larch_alpha: float = 0.0
    larch_beta: Sequence | None = None

    def __post_init__(self) -> None:
        f = self.family
        if f not in _FAMILIES:
            raise ValueError(f"unknown family {f!r}")
        if f in ("family1", "lagged"):
            _require(self.kernel is not None and self.alpha is not None
                     and self.beta is not None, f"{f} needs kernel, alpha and beta")
            _require(self.kernel.c_q is not None,
                     f"{f} needs a kernel with a declared dominating constant c_q")
        elif f == "family2":
            _require(self.kernel is not None and self.alpha is not None
                     and self.beta is not None, "family2 needs kernel, alpha and beta")
            _require(self.kernel.c0 is not None and self.kernel.c1 is not None,
                     "family2 needs a kernel with declared (c0, c1) bound constants")
        elif f == "tv_arfima":
            _require(self.dfun is not None, "tv_arfima needs a dfun")
            _require(self.dfun.d_bar < 0.5,
                     "tv_arfima needs sup |d(x)| bounded below 1/2")
        elif f == "larch":
            _require(self.larch_beta is not None, "larch needs a beta sequence")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def family1(kernel: Kernel, alpha: AlphaScheme, beta: BetaScheme,
                mu: float = 0.0) -> "EquationSpec":
        return EquationSpec("family1", float(mu), kernel, alpha, beta)

    @staticmethod
    def family2(kernel: Kernel, alpha: AlphaScheme, beta: BetaScheme,
                mu: float = 0.0) -> "EquationSpec":
        return EquationSpec("family2", float(mu), kernel, alpha, beta)

    @staticmethod
    def lagged(kernel: Kernel, alpha: AlphaScheme, beta: BetaScheme,
               mu: float = 0.0) -> "EquationSpec":
        return EquationSpec("lagged", float(mu), kernel, alpha, beta)

    @staticmethod
    def tv_arfima(dfun: DFun, mu: float = 0.0) -> "EquationSpec":
        return EquationSpec("tv_arfima", float(mu), dfun=dfun)

    @staticmethod
    def larch(alpha: float, beta: Sequence) -> "EquationSpec":
        return EquationSpec("larch", mu=float(alpha), larch_alpha=float(alpha),
                            larch_beta=beta)

    def as_family1(self) -> "EquationSpec":
        """The family1 normalization of a larch spec: alpha_j = alpha*beta_j, Q = id."""
        if self.family != "larch":
            raise ValueError("as_family1 applies to larch specs")
        return EquationSpec.family1(
            Kernel.linear(1.0),
            AlphaScheme.larch_product(self.larch_alpha, self.larch_beta),
            BetaScheme.column_form(self.larch_beta),
            mu=self.larch_alpha,
        )

    def to_dict(self) -> dict:
        d: dict = {"family": self.family, "mu": self.mu}
        if self.family == "larch":
            d["larch"] = {"alpha": self.larch_alpha, "beta": self.larch_beta.to_dict()}
            return d
        if self.family == "tv_arfima":
            d["dfun"] = self.dfun.to_dict()
            return d
        d["kernel"] = self.kernel.to_dict()
        d["alpha"] = self.alpha.to_dict()
        d["beta"] = self.beta.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "EquationSpec":
        d = dict(d)
        fam = d.pop("family", None)
        if fam not in _FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
        mu = _num(d.pop("mu", 0.0), "spec.mu")
        if fam == "larch":
            sub = dict(d.pop("larch"))
            spec = EquationSpec.larch(_num(sub.pop("alpha"), "larch.alpha"),
                                      Sequence.from_dict(sub.pop("beta")))
            if sub:
                raise ValueError(f"unknown larch fields: {sorted(sub)}")
            if mu != spec.mu:
                spec = replace(spec, mu=mu)
        elif fam == "tv_arfima":
            spec = EquationSpec("tv_arfima", mu, dfun=DFun.from_dict(d.pop("dfun")))
        else:
            spec = EquationSpec(fam, mu,
                                Kernel.from_dict(d.pop("kernel")),
                                AlphaScheme.from_dict(d.pop("alpha")),
                                BetaScheme.from_dict(d.pop("beta")))
        if d:
            raise ValueError(f"unknown spec fields: {sorted(d)}")
        return spec


# ---------------------------------------------------------------------------
# tail energies


def tail_energy(scheme: AlphaScheme | BetaScheme, k: int,
                trunc: TruncationPolicy = TruncationPolicy()) -> SeriesValue:
    """A^2_k for an alpha scheme, B^2_k for a column_form beta.

    Exact closed forms where the structure allows (geometric, arfima at
    k=0); divergence is reported via ``converged=False``, never raised.
    """
    if k < 0:
        raise ValueError("tail index must be >= 0")
    if isinstance(scheme, AlphaScheme):
        return scheme.energy_from(k, trunc)
    v = scheme.variant
    if v == "zero":
        return SeriesValue(0.0, 0.0, True)
    if v == "constant_one":
        return SeriesValue(math.inf, math.inf, False)
    if v == "column_form":
        return SeriesValue(scheme.seq.energy_from(k), 0.0, True)
    if v == "sum_form":
        return SeriesValue(scheme.seq.energy_from(k), 0.0, True)
    # finite support: sum all entries with j >= k
    tot = sum(val * val for i, j, val in scheme.table if j >= max(k, 1))
    if scheme.rule is not None:
        tot = sum(scheme.at(i, j) ** 2
                  for i in range(scheme.rule_extent)
                  for j in range(max(k, 1), scheme.rule_extent - i + 1))
    return SeriesValue(float(tot), 0.0, True)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"{where} must be a number")
    return float(x)
