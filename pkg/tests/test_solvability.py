import math

import numpy as np
import pytest

from projlm.model import (
    AlphaScheme,
    BetaScheme,
    EquationSpec,
    Kernel,
    Sequence,
    TruncationPolicy,
)
from projlm.solvability import (
    MomentParams,
    compute_kq,
    compute_kq_p,
    compute_omega2_bound,
    compute_tilde_kq,
    larch_check,
    limsup_row_check,
    _kq_series,
)


def _col_spec(b1=math.sqrt(0.9), cq=1.0, alpha=None):
    return EquationSpec.family1(
        Kernel.linear(cq),
        alpha or AlphaScheme.geometric(1.0, 0.5),
        BetaScheme.column_form(Sequence.of([0.0, b1])),
    )


# ---------------------------------------------------------------------------
# compute_kq


def test_kq_closed_form_pinned_example():
    # A^2 = 4/3, c^2 B^2 = 0.9 -> K = (4/3)/0.1 = 40/3
    r = compute_kq(_col_spec())
    assert r.exists == "yes"
    assert r.method == "closed-form"
    assert r.kq == pytest.approx(40.0 / 3.0, rel=1e-12)
    assert r.a2 == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert r.b2 == pytest.approx(0.9, rel=1e-14)


def test_kq_zero_alpha_trivial():
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.zero(),
                                BetaScheme.column_form(Sequence.of([0.0, 1.5])))
    r = compute_kq(spec)
    assert r.kq == 0.0 and r.exists == "yes"


def test_kq_supercritical_column_is_no():
    r = compute_kq(_col_spec(b1=math.sqrt(1.01)))
    assert r.exists == "no"
    assert r.kq is None


def test_kq_critical_boundary_is_strict():
    assert compute_kq(_col_spec(b1=1.0)).exists == "no"
    assert compute_kq(_col_spec(b1=math.sqrt(1.0 - 1e-9))).exists == "yes"


def test_kq_zero_beta():
    spec = EquationSpec.family1(Kernel.linear(2.0), AlphaScheme.geometric(1.0, 0.5),
                                BetaScheme.zero())
    r = compute_kq(spec)
    assert r.kq == pytest.approx(4.0 * 4.0 / 3.0, rel=1e-14)


def test_kq_constant_one_diverges():
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.geometric(1.0, 0.5),
                                BetaScheme.constant_one())
    r = compute_kq(spec)
    assert r.exists == "no" and r.kq is None


def test_kq_rejects_family2():
    spec = EquationSpec.family2(Kernel.affine_linear(1.0, 0.5),
                                AlphaScheme.geometric(1.0, 0.5), BetaScheme.zero())
    with pytest.raises(ValueError, match="tilde"):
        compute_kq(spec)


def test_kq_closed_form_matches_series_within_remainder():
    spec = EquationSpec.family1(
        Kernel.linear(1.0), AlphaScheme.geometric(1.0, 0.5),
        BetaScheme.column_form(Sequence.geometric(math.sqrt(2.7), 0.5)))
    closed = compute_kq(spec)
    series = _kq_series(spec, TruncationPolicy(max_terms=4000))
    assert series.converged
    assert abs(series.value - closed.kq) <= series.remainder


def test_kq_sum_form_matches_lag_recursion_oracle():
    # independent oracle: h_k = c^2 (alpha_k^2 + sum_{i<k} beta_{i,k-i}^2 h_i)
    seq = Sequence.geometric(0.3, 0.7)
    spec = EquationSpec.family1(Kernel.linear(0.9), AlphaScheme.geometric(1.0, 0.6),
                                BetaScheme.sum_form(seq))
    r = compute_kq(spec)
    assert r.method == "truncated-series" and r.exists == "yes"
    n = 400
    al = spec.alpha.materialize(n)
    h = np.zeros(n + 1)
    for k in range(n + 1):
        s = al[k] ** 2 + seq.at(k) ** 2 * h[:k].sum()
        h[k] = 0.81 * s
    assert r.kq == pytest.approx(float(h.sum()), rel=1e-10)


def test_kq_sparse_table_matches_lag_recursion_oracle():
    entries = {(0, 1): 0.7, (0, 2): 0.3, (1, 1): -0.5, (2, 3): 0.4}
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.finite([1.0, 0.5, 0.25]),
                                BetaScheme.general(entries))
    r = compute_kq(spec)
    n = 80
    al = spec.alpha.materialize(n)
    h = np.zeros(n + 1)
    for k in range(n + 1):
        s = al[k] ** 2
        for i in range(k):
            s += spec.beta.at(i, k - i) ** 2 * h[i]
        h[k] = s
    assert r.kq == pytest.approx(float(h.sum()), rel=1e-12)


def test_kq_lagged_family_matches_lag_recursion_oracle():
    # lagged recursion: h_k = c^2 alpha_k^2 for k < 2,
    # h_k = c^2 (alpha_k^2 + sum_{i<=k-2} beta_{i,k-1-i}^2 h_i) for k >= 2
    entries = {(0, 1): 0.6, (1, 2): 0.5, (0, 3): -0.2}
    spec = EquationSpec.lagged(Kernel.linear(0.8), AlphaScheme.geometric(1.0, 0.5),
                               BetaScheme.general(entries))
    r = compute_kq(spec)
    n = 120
    al = spec.alpha.materialize(n)
    c2 = 0.64
    h = np.zeros(n + 1)
    for k in range(n + 1):
        s = al[k] ** 2
        for i in range(max(k - 1, 0)):
            s += spec.beta.at(i, k - 1 - i) ** 2 * h[i]
        h[k] = c2 * s
    assert r.kq == pytest.approx(float(h.sum()), rel=1e-12)


def test_kq_monotone_in_cq():
    base = compute_kq(_col_spec(b1=0.5, cq=1.0)).kq
    bigger = compute_kq(_col_spec(b1=0.5, cq=1.2)).kq
    assert bigger > base


def test_kq_dominates_k0_term():
    for spec in [_col_spec(), _col_spec(b1=0.3, cq=1.4)]:
        r = compute_kq(spec)
        assert r.kq >= spec.kernel.c_q ** 2 * r.a2 - 1e-12


# ---------------------------------------------------------------------------
# compute_kq_p


def test_kq_p_equals_kq_at_p2_exactly():
    m = MomentParams(2.0, 1.0, 1.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        alpha = AlphaScheme.geometric(rng.uniform(0.2, 2.0), rng.uniform(-0.8, 0.8))
        pick = rng.integers(0, 3)
        if pick == 0:
            beta = BetaScheme.column_form(Sequence.of([0.0, rng.uniform(0.1, 0.8)]))
        elif pick == 1:
            beta = BetaScheme.sum_form(Sequence.geometric(rng.uniform(0.05, 0.3),
                                                          rng.uniform(0.2, 0.8)))
        else:
            beta = BetaScheme.general({(0, 1): rng.uniform(-0.8, 0.8),
                                       (1, 2): rng.uniform(-0.5, 0.5)})
        spec = EquationSpec.family1(Kernel.linear(rng.uniform(0.5, 1.1)), alpha, beta)
        kq = compute_kq(spec).kq
        kp = compute_kq_p(spec, m)
        assert kp.converged and kq is not None
        assert kp.value == kq  # same code path, full precision


def test_kq_p_divergence_from_inflated_constant():
    # c_q B < 1 but c_q c_p^{1/p} mu_p^{1/p} B >= 1
    spec = _col_spec(b1=0.9)
    assert compute_kq(spec).exists == "yes"
    m = MomentParams.for_gaussian(4.0)
    out = compute_kq_p(spec, m)
    assert not out.converged


def test_kq_p_zero_alpha():
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.zero(),
                                BetaScheme.constant_one())
    assert compute_kq_p(spec, MomentParams.for_gaussian(4.0)).value == 0.0


def test_moment_params_validation():
    with pytest.raises(ValueError):
        MomentParams(1.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        MomentParams(2.0, 1.0, 2.0)  # p=2 forces (1,1)
    with pytest.raises(ValueError):
        MomentParams(4.0, 0.5, 1.0)
    g = MomentParams.for_gaussian(2)
    assert (g.c_p, g.mu_p) == (1.0, 1.0)
    g4 = MomentParams.for_gaussian(4.0)
    assert g4.mu_p == pytest.approx(3.0, rel=1e-12)  # E z^4 for standard normal


# ---------------------------------------------------------------------------
# compute_tilde_kq


def _family2(c0, c1, alpha, beta):
    scale = math.sqrt(2.0)
    k = Kernel.affine_linear(c0 / scale, c1 / scale)  # declared (c0, c1) as given
    return EquationSpec.family2(k, alpha, beta)


def test_tilde_collapses_when_c1_zero():
    spec = EquationSpec.family2(Kernel.step((0.0, 1.0), (1.0,)),  # c0=1, c1=0
                                AlphaScheme.geometric(1.0, 0.5),
                                BetaScheme.constant_one())
    t = compute_tilde_kq(spec)
    assert t.series.value == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert t.series.converged


def test_tilde_zero_alpha():
    spec = _family2(1.0, 1.0, AlphaScheme.zero(), BetaScheme.constant_one())
    t = compute_tilde_kq(spec)
    assert t.series.value == 0.0


def test_tilde_constant_one_bounded_by_envelope():
    spec = _family2(1.0, 1.0, AlphaScheme.geometric(1.0, 0.5),
                    BetaScheme.constant_one())
    t = compute_tilde_kq(spec)
    assert t.series.converged and t.envelope.converged
    assert t.series.value <= t.envelope.value + 1e-12


def test_tilde_matches_lag_recursion_oracle():
    # independent oracle: h_k = alpha_k^2 (c0^2 + c1^2 sum_{i<k} beta_{i,k-i}^2 h_i)
    spec = _family2(1.0, 1.0, AlphaScheme.geometric(1.0, 0.5),
                    BetaScheme.constant_one())
    t = compute_tilde_kq(spec)
    n = 200
    al = spec.alpha.materialize(n)
    h = np.zeros(n + 1)
    for k in range(n + 1):
        h[k] = al[k] ** 2 * (1.0 + h[:k].sum())
    assert t.series.value == pytest.approx(float(h.sum()), rel=1e-12)


def test_tilde_rejects_wrong_family():
    with pytest.raises(ValueError):
        compute_tilde_kq(_col_spec())


# ---------------------------------------------------------------------------
# compute_omega2_bound


def test_omega2_zero_beta_geometric():
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.geometric(1.0, 0.5),
                                BetaScheme.zero())
    out = compute_omega2_bound(spec)
    assert out.value == pytest.approx(2.0, rel=1e-14)
    assert out.converged


def test_omega2_zero_alpha():
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.zero(),
                                BetaScheme.zero())
    assert compute_omega2_bound(spec).value == 0.0


def test_omega2_arfima_non_convergent():
    # absolute coefficient sums diverge for positive memory
    spec = EquationSpec.family1(Kernel.linear(1.0), AlphaScheme.arfima(0.4),
                                BetaScheme.zero())
    out = compute_omega2_bound(spec, TruncationPolicy(max_terms=200_000))
    assert not out.converged


def test_omega2_with_beta_matches_hand_expansion():
    # single edge (0,1): chains are alpha_0 -> alpha_1 only
    # series = c(|a0| + |a1|) + c^2 |b| |a0| ... wait: chains root at the leaf
    # depth0: c(|a0|+|a1|); depth1: c^2 |a0| |beta_{0,1}| (root a0, edge to row 1)
    spec = EquationSpec.family1(Kernel.linear(0.5), AlphaScheme.finite([1.0, 2.0]),
                                BetaScheme.general({(0, 1): 0.25}))
    out = compute_omega2_bound(spec)
    expected = 0.5 * 3.0 + 0.25 * (1.0 * 0.25)
    assert out.value == pytest.approx(expected, rel=1e-14)


# ---------------------------------------------------------------------------
# larch_check


def test_larch_pinned_example():
    r = larch_check(1.0, Sequence.of([0.0, 0.6]))
    assert r.exists is True
    assert r.variance == pytest.approx(0.5625, rel=1e-14)


def test_larch_boundary_and_zero():
    assert larch_check(1.0, Sequence.of([0.0, 1.0])).exists is False
    r0 = larch_check(2.0, Sequence.of([0.0, 0.0]))
    assert r0.exists is True and r0.variance == 0.0


def test_larch_p2_bound_equals_variance():
    r = larch_check(1.0, Sequence.of([0.0, 0.6]), MomentParams(2.0, 1.0, 1.0))
    assert r.p_moment_bound == pytest.approx(r.variance, rel=1e-14)


def test_larch_p4_near_critical_reports_both_verdicts():
    r = larch_check(1.0, Sequence.of([0.0, 0.99]), MomentParams.for_gaussian(4.0))
    # both moment conditions fail at B = 0.99 with Gaussian mu_4 = 3
    assert r.p_moment_bound == math.inf
    assert r.old_condition_holds is False
    # old condition: (2^4 - 4 - 1)^{1/2} mu^{1/4} B = sqrt(11) 3^{1/4} 0.99 > 1
    assert math.sqrt(11) * 3 ** 0.25 * 0.99 > 1


def test_larch_old_condition_small_b():
    m = MomentParams.for_gaussian(4.0)
    r = larch_check(1.0, Sequence.of([0.0, 0.1]), m)
    # sqrt(11) * 3^{1/4} * 0.1 = 0.4365... < 1
    assert r.old_condition_holds is True


# ---------------------------------------------------------------------------
# limsup_row_check


def test_limsup_constant_one_is_no():
    assert limsup_row_check(BetaScheme.constant_one(), 1.0, 40).verdict is False


def test_limsup_zero_is_yes():
    r = limsup_row_check(BetaScheme.zero(), 1.0, 40)
    assert r.verdict is True and r.sup_value == 0.0


def test_limsup_column_form_09():
    r = limsup_row_check(BetaScheme.column_form(Sequence.of([0.0, math.sqrt(0.9)])),
                         1.0, 60)
    assert r.verdict is True
    assert r.sup_value == pytest.approx(0.9, rel=1e-12)


def test_limsup_scales_with_cq():
    b = BetaScheme.column_form(Sequence.of([0.0, math.sqrt(0.9)]))
    assert limsup_row_check(b, 1.1, 60).verdict is False


def test_report_serialization():
    r = compute_kq(_col_spec())
    d = r.to_dict()
    assert d["exists"] == "yes" and isinstance(d["kq"], float)
    d2 = compute_kq(_col_spec(b1=1.2)).to_dict()
    assert d2["kq"] == "non-convergent"
