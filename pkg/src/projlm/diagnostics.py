"""Long-memory and distributional diagnostics for simulated paths.

Estimators here are deliberately plain: biased (divide-by-n) sample
autocovariances, log-log least squares for decay exponents, and the
aggregated-variance method for the partial-sum scaling exponent. The
biased ACF normalization is what guarantees the lag-0 domination
invariant on every single path, and aggregated variance mirrors the
partial-sum normalization the scaling exponent is defined by.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .model import AlphaScheme, EquationSpec, Sequence, TruncationPolicy

__all__ = [
    "AcfEstimate",
    "CovStat",
    "DecayFit",
    "HistogramTable",
    "LinearAcf",
    "LongMemoryParams",
    "ScalingFit",
    "acf_decay_fit",
    "acf_power_asymptote",
    "block_sums",
    "histogram",
    "partial_sum_scaling",
    "sample_acf",
    "squared_lag_cov",
    "theoretical_linear_acf",
]

_DEFAULT_POLICY = TruncationPolicy(max_terms=200_000, abs_tail_tol=1e-12)


def _as_matrix(paths) -> np.ndarray:
    """Stack one path or a sequence of equal-length paths into (R, n)."""
    if hasattr(paths, "values") or isinstance(paths, np.ndarray):
        paths = [paths]
    rows = []
    for p in paths:
        v = np.asarray(getattr(p, "values", p), dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("each path must be a nonempty 1-D array")
        rows.append(v)
    if len({r.size for r in rows}) != 1:
        raise ValueError("paths must share a common length")
    return np.vstack(rows)


# ------------------------------------------------------------------ ACF


@dataclass(frozen=True)
class AcfEstimate:
    """Mean-centered biased autocovariances, averaged across replicates.

    ``per_replicate`` keeps the (R, max_lag+1) matrix so downstream fits
    can bootstrap over replicates. With a single replicate the standard
    errors are NaN: there is no across-replicate scatter to report.
    """

    lags: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    n: int
    replicates: int
    per_replicate: np.ndarray = field(repr=False)


def sample_acf(paths, max_lag: int) -> AcfEstimate:
    x = _as_matrix(paths)
    r, n = x.shape
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if max_lag >= n / 4:
        raise ValueError(f"max_lag {max_lag} too large for n={n}; "
                         "need max_lag < n/4")
    xc = x - x.mean(axis=1, keepdims=True)
    per = np.empty((r, max_lag + 1))
    for k in range(max_lag + 1):
        # divide by n (not n-k): gamma_hat(0) then dominates every lag
        per[:, k] = np.einsum("ij,ij->i", xc[:, k:], xc[:, : n - k]) / n
    se = (per.std(axis=0, ddof=1) / math.sqrt(r) if r > 1
          else np.full(max_lag + 1, np.nan))
    return AcfEstimate(lags=np.arange(max_lag + 1), values=per.mean(axis=0),
                       std_errors=se, n=n, replicates=r, per_replicate=per)


# ------------------------------------------------- linear-theory values


@dataclass(frozen=True)
class LinearAcf:
    """Truncated coefficient autocovariance plus an estimated tail.

    ``value`` is the partial sum, ``remainder`` the estimated rest (an
    exact tail for geometric sequences, an integral estimate for the
    fractional-integration family, zero for finite sequences), and
    ``estimate`` their total. ``converged`` is False when the sequence
    is not square-summable, in which case the remainder is infinite.
    """

    value: float
    remainder: float
    converged: bool

    @property
    def estimate(self) -> float:
        return self.value + self.remainder


def _arfima_weights(d: float, count: int) -> np.ndarray:
    j = np.arange(count, dtype=float)
    f = (j + d - 1.0) / np.maximum(j, 1.0)
    f[0] = 1.0
    return np.cumprod(f)


def theoretical_linear_acf(b, k: int,
                           policy: TruncationPolicy | None = None) -> LinearAcf:
    """Lag-k autocovariance sum(b_j * b_{j+k}) of the linear process with
    unit innovations and one-sided coefficients b."""
    k = int(k)
    if k < 0:
        raise ValueError("lag must be >= 0")
    policy = policy or _DEFAULT_POLICY

    if isinstance(b, AlphaScheme):
        if b.variant == "zero":
            return LinearAcf(0.0, 0.0, True)
        if b.variant == "finite":
            b = np.asarray(b.values, dtype=float)
        elif b.variant == "geometric":
            b = Sequence.geometric(b.scale, b.d)
        elif b.variant == "arfima":
            return _arfima_acf(b.scale, b.d, k, policy)
        else:
            raise ValueError(f"unsupported coefficient scheme {b.variant!r}")

    if isinstance(b, Sequence):
        if b.kind == "values":
            b = np.asarray(b.values, dtype=float)
        elif b.kind == "geometric":
            s, rho = b.scale, b.ratio
            if abs(rho) >= 1.0:
                return LinearAcf(math.nan, math.inf, False)
            terms = min(policy.max_terms,
                        _geometric_terms(s, rho, k, policy.abs_tail_tol))
            j = np.arange(terms, dtype=float)
            partial = float(s * s * rho**k * np.sum(rho ** (2.0 * j)))
            tail = s * s * rho ** (2.0 * terms + k) / (1.0 - rho * rho)
            return LinearAcf(partial, float(tail), True)
        else:
            raise ValueError(f"unsupported sequence kind {b.kind!r}")

    arr = np.asarray(b, dtype=float)
    if arr.ndim != 1:
        raise ValueError("coefficients must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    if k >= arr.size:
        return LinearAcf(0.0, 0.0, True)
    return LinearAcf(float(arr[k:] @ arr[: arr.size - k]), 0.0, True)


def _geometric_terms(s: float, rho: float, k: int, tol: float) -> int:
    # smallest J with |tail| = s^2 |rho|^(2J+k) / (1 - rho^2) <= tol
    if s == 0.0 or rho == 0.0:
        return 1
    lead = s * s * abs(rho) ** k / (1.0 - rho * rho)
    if lead <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / lead) / (2.0 * math.log(abs(rho)))))


def _arfima_acf(scale: float, d: float, k: int,
                policy: TruncationPolicy) -> LinearAcf:
    if d >= 0.5:
        return LinearAcf(math.nan, math.inf, False)
    terms = int(policy.max_terms)
    w = _arfima_weights(d, terms + k)
    partial = float(w[k:] @ w[: terms]) * scale * scale
    if d <= 0.0:
        return LinearAcf(partial, 0.0, True)
    # the weights settle on kappa * j^(d-1) with O(1/j) relative error, so
    # the truncated tail is estimated by the midpoint-rule integral
    # int_J^inf x^(d-1) (x+k)^(d-1) dx, which the substitution
    # t = x/(x+k) turns into an upper incomplete beta integral
    kappa = scale / math.gamma(d)
    j0 = terms - 0.5
    if k == 0:
        tail = j0 ** (2.0 * d - 1.0) / (1.0 - 2.0 * d)
    else:
        upper = special.beta(d, 1.0 - 2.0 * d) * (
            1.0 - special.betainc(d, 1.0 - 2.0 * d, j0 / (j0 + k)))
        tail = k ** (2.0 * d - 1.0) * upper
    return LinearAcf(partial, kappa * kappa * float(tail), True)


def acf_power_asymptote(kappa: float, d: float, k) -> float | np.ndarray:
    """Large-lag form kappa^2 B(d, 1-2d) k^(2d-1) of the coefficient
    autocovariance when b_j settles on kappa j^(d-1), for d in (0, 1/2)."""
    if not 0.0 < d < 0.5:
        raise ValueError("need 0 < d < 1/2")
    const = (kappa * kappa * math.gamma(d) * math.gamma(1.0 - 2.0 * d)
             / math.gamma(1.0 - d))
    return const * np.asarray(k, dtype=float) ** (2.0 * d - 1.0)


# ----------------------------------------------------- decay-slope fit


@dataclass(frozen=True)
class DecayFit:
    slope: float
    d_hat: float
    ci: tuple[float, float]
    curvature: float
    curved: bool
    lags: np.ndarray
    shrunk: bool


def _default_fit_lags(n: int, max_lag: int) -> np.ndarray:
    lo, hi = n ** 0.3, n ** 0.7
    grid = np.unique(np.round(np.geomspace(lo, hi, 12)).astype(int))
    grid = grid[(grid >= 1) & (grid <= max_lag)]
    return grid


def acf_decay_fit(acf: AcfEstimate, lag_range=None, *,
                  bootstrap: int = 200, seed: int = 0) -> DecayFit:
    """Least-squares log-log fit of the autocovariance decay; for a decay
    k^(2d-1) the memory parameter is recovered as d_hat = (slope+1)/2."""
    if lag_range is None:
        lags = _default_fit_lags(acf.n, int(acf.lags[-1]))
    else:
        lags = np.unique(np.asarray(list(lag_range), dtype=int))
        if lags.size and (lags[0] < 1 or lags[-1] > acf.lags[-1]):
            raise ValueError("lag_range must lie within 1..max_lag")
    gam = acf.values[lags] if lags.size else np.empty(0)
    keep = gam > 0.0
    shrunk = bool(lags.size and not keep.all())
    lags, gam = lags[keep], gam[keep]
    if lags.size < 3:
        raise ValueError("need at least 3 lags with positive "
                         "autocovariance to fit a decay exponent")

    ll, lg = np.log(lags.astype(float)), np.log(gam)
    slope, _ = np.polyfit(ll, lg, 1)
    curvature, curved = _curvature(ll, lg)

    ds = []
    if acf.replicates > 1 and bootstrap > 0:
        rng = np.random.default_rng(seed)
        for _ in range(bootstrap):
            pick = rng.integers(0, acf.replicates, acf.replicates)
            g = acf.per_replicate[pick][:, lags].mean(axis=0)
            ok = g > 0.0
            if ok.sum() < 3:
                continue
            s, _ = np.polyfit(ll[ok], np.log(g[ok]), 1)
            ds.append((s + 1.0) / 2.0)
    ci = (float(np.percentile(ds, 2.5)), float(np.percentile(ds, 97.5))) \
        if len(ds) >= 20 else (math.nan, math.nan)
    return DecayFit(slope=float(slope), d_hat=float((slope + 1.0) / 2.0),
                    ci=ci, curvature=curvature, curved=curved,
                    lags=lags, shrunk=shrunk)


def _curvature(ll: np.ndarray, lg: np.ndarray) -> tuple[float, bool]:
    # a power law is a straight line in log-log coordinates; a quadratic
    # term more than 3 standard errors from zero flags the fit unreliable
    m = ll.size
    if m < 4:
        return 0.0, False
    x = np.column_stack([np.ones(m), ll, ll * ll])
    coef, res, *_ = np.linalg.lstsq(x, lg, rcond=None)
    c2 = float(coef[2])
    rss = float(res[0]) if res.size else float(np.sum((lg - x @ coef) ** 2))
    var = rss / (m - 3) * np.linalg.inv(x.T @ x)[2, 2]
    se = math.sqrt(max(var, 0.0))
    curved = abs(c2) > 1e-8 and (se == 0.0 or abs(c2) > 3.0 * se)
    return c2, curved


# ------------------------------------------------- partial-sum scaling


@dataclass(frozen=True)
class ScalingFit:
    h_hat: float
    ci: tuple[float, float]
    block_sizes: np.ndarray
    variances: np.ndarray
    degenerate: bool


def block_sums(values, size: int) -> np.ndarray:
    """Sums of consecutive non-overlapping blocks; the tail short of a
    full block is dropped."""
    v = np.asarray(values, dtype=float)
    size = int(size)
    if size < 1 or v.size < size:
        raise ValueError("block size must be in 1..n")
    m = v.size // size
    return v[: m * size].reshape(m, size).sum(axis=1)


def partial_sum_scaling(paths, block_sizes=None) -> ScalingFit:
    """Aggregated-variance estimator: the variance of mean-centered block
    sums grows like size^(2H), so half the log-log slope estimates H."""
    x = _as_matrix(paths)
    r, n = x.shape
    if block_sizes is None:
        sizes = np.unique(np.round(
            np.geomspace(8, max(9, n // 8), 8)).astype(int))
    else:
        sizes = np.unique(np.asarray(list(block_sizes), dtype=int))
    if sizes.size < 2:
        raise ValueError("need at least 2 block sizes")
    if sizes[0] < 2:
        raise ValueError("block sizes must be >= 2")
    if sizes[-1] > n // 8:
        raise ValueError(f"largest block {sizes[-1]} exceeds n/8 = {n // 8}")

    xc = x - x.mean(axis=1, keepdims=True)
    per = np.empty((r, sizes.size))
    for j, m in enumerate(sizes):
        for i in range(r):
            per[i, j] = block_sums(xc[i], m).var(ddof=1)
    pooled = per.mean(axis=0)
    if np.any(pooled <= 0.0):
        return ScalingFit(math.nan, (math.nan, math.nan), sizes, pooled, True)

    lm = np.log(sizes.astype(float))
    h_hat = float(np.polyfit(lm, np.log(pooled), 1)[0] / 2.0)
    if r > 1 and np.all(per > 0.0):
        hs = np.array([np.polyfit(lm, np.log(per[i]), 1)[0] / 2.0
                       for i in range(r)])
        half = 1.96 * hs.std(ddof=1) / math.sqrt(r)
        ci = (h_hat - half, h_hat + half)
    else:
        ci = (math.nan, math.nan)
    return ScalingFit(h_hat, ci, sizes, pooled, False)


# ----------------------------------------------------- squared-lag cov


@dataclass(frozen=True)
class CovStat:
    estimate: float
    std_error: float
    lag: int
    replicates: int


def squared_lag_cov(paths, lag: int) -> CovStat:
    """Monte Carlo estimate of cov(X_t^2, X_{t-lag}^2) across replicates."""
    x = _as_matrix(paths)
    r, n = x.shape
    lag = int(lag)
    if lag < 1 or lag >= n:
        raise ValueError("lag must be in 1..n-1")
    y = x * x
    a, b = y[:, lag:], y[:, : n - lag]
    per = (a * b).mean(axis=1) - a.mean(axis=1) * b.mean(axis=1)
    se = per.std(ddof=1) / math.sqrt(r) if r > 1 else math.nan
    return CovStat(float(per.mean()), float(se), lag, r)


# ------------------------------------------------------------ histogram


@dataclass(frozen=True)
class HistogramTable:
    """Normalized histogram with a moment-matched normal overlay.

    ``overlay`` holds the matched normal's bin-averaged density (CDF
    difference over width), which is the quantity a histogram bar
    estimates; it degenerates to zeros when the sample variance is zero.
    """

    edges: np.ndarray
    density: np.ndarray
    overlay: np.ndarray
    n: int
    mean: float
    std: float


def histogram(paths, bins: int = 30) -> HistogramTable:
    x = _as_matrix(paths).ravel()
    bins = int(bins)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    density, edges = np.histogram(x, bins=bins, range=(lo, hi), density=True)
    mean, std = float(x.mean()), float(x.std())
    if std > 0.0:
        z = (edges - mean) / std
        overlay = np.diff(special.ndtr(z)) / np.diff(edges)
    else:
        overlay = np.zeros(bins)
    return HistogramTable(edges=edges, density=density, overlay=overlay,
                          n=x.size, mean=mean, std=std)


# ------------------------------------------------- long-memory constants


@dataclass(frozen=True)
class LongMemoryParams:
    """Constants attached to coefficient decay b_j ~ kappa j^(d-1):
    the scaling exponent is hurst = d + 1/2, the autocovariance decays
    like acf_decay_constant_sq * k^(2d-1), and normalized partial sums
    scale with partial_sum_constant_sq."""

    d: float
    kappa: float
    spec: EquationSpec | None = None

    def __post_init__(self):
        if not 0.0 < self.d < 0.5:
            raise ValueError("need 0 < d < 1/2")
        if not self.kappa > 0.0:
            raise ValueError("kappa must be positive")

    @property
    def hurst(self) -> float:
        return self.d + 0.5

    @property
    def acf_decay_constant_sq(self) -> float:
        # B(d, 1-d) = gamma(d) gamma(1-d)
        return self.kappa ** 2 * math.gamma(self.d) * math.gamma(1.0 - self.d)

    @property
    def partial_sum_constant_sq(self) -> float:
        return self.acf_decay_constant_sq / (self.d * (1.0 + 2.0 * self.d))

    @property
    def linear_tail_constant_sq(self) -> float:
        """Exact large-lag constant of sum(b_j b_{j+k}), for reference."""
        return (self.kappa ** 2 * math.gamma(self.d)
                * math.gamma(1.0 - 2.0 * self.d) / math.gamma(1.0 - self.d))

    def coefficient(self, j: int) -> float:
        if self.spec is None:
            raise ValueError("no spec attached")
        return float(self.spec.kernel.eval(self.spec.alpha.at(int(j))))

    @staticmethod
    def from_spec(spec: EquationSpec, kappa: float | None = None
                  ) -> "LongMemoryParams":
        if spec.alpha is None or spec.alpha.variant != "arfima":
            raise ValueError("memory constants need fractional-integration "
                             "coefficients")
        d, scale = spec.alpha.d, spec.alpha.scale
        if kappa is None:
            k = spec.kernel
            if k.variant == "linear":
                kappa = abs(k.params[0]) * scale / math.gamma(d)
            elif k.variant == "relu" and scale > 0:
                # coefficients are positive, so the ramp passes them through
                kappa = scale / math.gamma(d)
            else:
                raise ValueError("cannot infer kappa for this kernel; "
                                 "pass it explicitly")
        return LongMemoryParams(d=d, kappa=kappa, spec=spec)
