import math

import numpy as np
import pytest

import stabcp
from stabcp import (
    GeneratorSpec,
    InvalidInputError,
    LadRidgeModel,
    PretrainedLinearModel,
    RidgeModel,
    ScoreFunction,
    StabilityBounds,
    TabularDataset,
    anchor_bounds,
    anchored_upper_interval,
    batch_pi_bounds,
    build_interpolated_model,
    conformal_set_grid,
    conformity_scores,
    default_anchor,
    gap_profile,
    gen_linear_gaussian,
    grid_cp,
    interpolated_cp,
    oracle_cp,
    pi_bounds,
    pi_exact,
    pi_from_scores,
    root_cp,
    split_cp,
    split_pi,
    stab_cp_bisection,
    stab_cp_interval,
    tau_interpolated,
    tau_linear_exact,
    tau_user_supplied,
)

ABS = ScoreFunction.absolute_residual()


def make_dataset(n=50, p=5, seed=0, noise=1.0):
    return gen_linear_gaussian(GeneratorSpec("linear-gaussian", n, p, noise, seed))


def zero_model_dataset(targets, test_value=0.3):
    targets = np.asarray(targets, dtype=float)
    n = targets.size
    return TabularDataset(np.ones((n, 1)), targets, np.ones(1), test_target=test_value)


# ------------------------------------------------------------- pi_bounds

def test_pi_bounds_matches_hand_evaluation():
    # n=2, tau=(0.1, 0.1, 0.1), anchor scores (1.0, 2.0), query score 1.5:
    # envelopes L=(0.9, 1.9), U=(1.1, 2.1), L_3=1.4, U_3=1.6.
    # lower sum: 1{0.9<=1.6} + 1{1.9<=1.6} + self = 2 -> lo = 1/3
    # upper sum: 1{1.1<=1.4} + 1{2.1<=1.4} + 0   = 1 -> up = 2/3
    ds = zero_model_dataset([1.0, -2.0])
    fitted = PretrainedLinearModel(np.zeros(1)).fit(ds, 0.0)
    tau = tau_user_supplied([0.1, 0.1, 0.1])
    pb = pi_bounds(1.5, fitted, np.array([1.0, 2.0]), tau, ABS)
    assert pb.lo == pytest.approx(1 / 3)
    assert pb.up == pytest.approx(2 / 3)
    assert pb.gap == pytest.approx(1 / 3)
    assert (pb.n_lo, pb.n_up) == (2, 1)


def test_pi_bounds_zero_tau_collapses_to_anchor_conformity():
    ds = zero_model_dataset([1.0, -2.0, 0.7, 2.4])
    fitted = PretrainedLinearModel(np.zeros(1)).fit(ds, 0.0)
    scores = conformity_scores(ds, 0.0, fitted, ABS)[:-1]
    tau = tau_user_supplied(np.zeros(ds.n + 1))
    for z in (-1.3, 0.2, 3.0):
        pb = pi_bounds(z, fitted, scores, tau, ABS)
        exact = pi_exact(ds, z, PretrainedLinearModel(np.zeros(1)), ABS)
        assert pb.lo == pytest.approx(exact)
        assert pb.up == pytest.approx(exact)


def test_pi_bounds_saturate_with_huge_tau():
    ds = zero_model_dataset([1.0, -2.0, 0.7])
    fitted = PretrainedLinearModel(np.zeros(1)).fit(ds, 0.0)
    scores = conformity_scores(ds, 0.0, fitted, ABS)[:-1]
    tau = tau_user_supplied(np.full(ds.n + 1, 1e12))
    pb = pi_bounds(0.5, fitted, scores, tau, ABS)
    assert pb.lo == 0.0
    assert pb.up == 1.0


def test_pi_bounds_selection_matches_observed_row_sum():
    # The full-sample indicator selection and the observed-rows-only form
    # agree whenever the query-point bound is positive.
    ds = make_dataset(30, 4, seed=5)
    spec = RidgeModel(0.5)
    fitted = spec.fit(ds, 0.0)
    tau = tau_linear_exact(fitted, ds)
    assert tau.tau_test > 0
    scores = conformity_scores(ds, 0.0, fitted, ABS)[:-1]
    upper = np.sort(scores + tau.tau[:-1])
    v = (1 - 0.1) * (ds.n + 1)
    for z in np.linspace(*ds.target_range(), 40):
        pb = pi_bounds(z, fitted, scores, tau, ABS)
        test_low = ABS.evaluate(z, fitted.mu_test) - tau.tau_test
        observed_sum = int(np.count_nonzero(upper <= test_low))
        assert pb.n_up == observed_sum  # query-row indicator contributes 0
        assert (pb.up >= 0.1 - 1e-12) == (observed_sum <= v + 1e-9)


# ---------------------------------------------------------- closed form

def test_stab_interval_formula_substitution():
    # Prediction 0, 9 observed scores with 9th order statistic 1.0,
    # tau zero on observed rows and 0.5 on the query point, alpha = 0.1:
    # half-width = 1.0 + 0.5.
    targets = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0]
    ds = zero_model_dataset(targets)
    spec = PretrainedLinearModel(np.zeros(1))
    tau = tau_user_supplied([0.0] * 9 + [0.5])
    report = stab_cp_interval(ds, 0.0, spec, ABS, tau, alpha=0.1)
    assert report.set.intervals == [(-1.5, 1.5)]
    assert report.fit_count == 1


def test_stab_interval_quantile_overflow_whole_range():
    ds = zero_model_dataset([1.0, -1.0])
    spec = PretrainedLinearModel(np.zeros(1))
    tau = tau_user_supplied([0.0, 0.0, 0.5])
    report = stab_cp_interval(ds, 0.0, spec, ABS, tau, alpha=0.05)
    assert report.set.shape == "whole-range"
    assert report.set.candidate_range == ds.target_range()


def test_stab_interval_rejects_zero_query_bound(small_dataset):
    tau = tau_user_supplied(np.zeros(small_dataset.n + 1))
    with pytest.raises(InvalidInputError):
        stab_cp_interval(small_dataset, 0.0, RidgeModel(0.5), ABS, tau, 0.1)


def test_stab_interval_contains_grid_oracle_at_scale():
    ds = make_dataset(n=300, p=5, seed=13)
    spec = RidgeModel(0.5)
    anchor = default_anchor(ds, spec)
    tau = tau_linear_exact(spec.fit(ds, anchor), ds)
    report = stab_cp_interval(ds, anchor, spec, ABS, tau, 0.1)
    grid = stabcp.default_candidate_grid(ds, 200)
    oracle = conformal_set_grid(ds, spec, ABS, 0.1, grid)
    (glo, ghi), = oracle.intervals
    (slo, shi), = report.set.intervals
    assert slo <= glo and ghi <= shi
    assert report.set.length() <= 1.15 * oracle.length()


# ------------------------------------------------------------- bisection

def test_bisection_agrees_with_closed_form():
    ds = make_dataset(n=50, p=5, seed=21)
    spec = RidgeModel(0.5)
    anchor = default_anchor(ds, spec)
    tau = tau_linear_exact(spec.fit(ds, anchor), ds)
    interval = stab_cp_interval(ds, anchor, spec, ABS, tau, 0.1)
    (ilo, ihi), = interval.set.intervals
    width = ihi - ilo
    report = stab_cp_bisection(ds, anchor, spec, ABS, tau, 0.1,
                               z_min=ilo - width, z_max=ihi + width, eps_r=1e-4)
    (blo, bhi), = report.set.intervals
    assert abs(blo - ilo) <= 1e-4
    assert abs(bhi - ihi) <= 1e-4
    assert report.fit_count == 1


def test_bisection_constant_above_alpha_whole_range(small_dataset):
    tau = tau_user_supplied(np.full(small_dataset.n + 1, 1e9))
    report = stab_cp_bisection(small_dataset, 0.0, RidgeModel(0.5), ABS, tau, 0.1)
    assert report.set.shape == "whole-range"
    assert report.set.truncated


def test_bisection_empty_when_nothing_selected():
    # all tau zero, alpha so high nothing can reach it
    ds = zero_model_dataset([1.0, -1.0, 0.5])
    spec = PretrainedLinearModel(np.zeros(1))
    tau = tau_user_supplied(np.zeros(4))
    report = stab_cp_bisection(ds, 0.0, spec, ABS, tau, alpha=0.9,
                               z_min=0.9, z_max=1.0)
    assert report.set.shape == "empty"


def test_bisection_general_score_matches_dense_scan():
    # Asymmetric convex score with interval level sets.
    def linex(q, m):
        d = np.asarray(q, dtype=float) - np.asarray(m, dtype=float)
        return np.exp(np.clip(d, None, 50.0)) - d - 1.0

    score = ScoreFunction.custom(linex, gamma=5.0)
    ds = make_dataset(n=25, p=3, seed=4)
    spec = RidgeModel(0.8)
    anchor = 0.0
    tau = tau_user_supplied(np.full(ds.n + 1, 0.05))
    alpha = 0.1
    lo, hi = ds.target_range()
    span = hi - lo
    z_min, z_max = lo - span, hi + span
    report = stab_cp_bisection(ds, anchor, spec, score, tau, alpha,
                               z_min=z_min, z_max=z_max, eps_r=1e-4)
    bounds, _ = anchor_bounds(ds, anchor, spec, score, tau)
    threshold = math.floor((1 - alpha) * (ds.n + 1) + 1e-9)
    zs = np.linspace(z_min, z_max, 100_000)
    _, n_up = bounds.counts_at(zs)
    selected = n_up <= threshold
    assert selected.any()
    scan_lo = zs[np.argmax(selected)]
    scan_hi = zs[len(zs) - 1 - np.argmax(selected[::-1])]
    (blo, bhi), = report.set.intervals
    spacing = zs[1] - zs[0]
    assert abs(blo - scan_lo) <= 1e-4 + spacing
    assert abs(bhi - scan_hi) <= 1e-4 + spacing


# ----------------------------------------------------------------- batch

def test_batch_single_anchor_is_plain_bounds(small_dataset):
    spec = RidgeModel(0.5)
    fitted = spec.fit(small_dataset, 0.0)
    scores = conformity_scores(small_dataset, 0.0, fitted, ABS)[:-1]
    tau = tau_linear_exact(fitted, small_dataset)
    for z in (-1.0, 0.5, 2.0):
        single = pi_bounds(z, fitted, scores, tau, ABS)
        batched = batch_pi_bounds(z, [(fitted, scores)], tau, ABS)
        assert (batched.lo, batched.up) == (single.lo, single.up)


def test_batch_duplicate_anchor_idempotent(small_dataset):
    spec = RidgeModel(0.5)
    fitted = spec.fit(small_dataset, 0.0)
    scores = conformity_scores(small_dataset, 0.0, fitted, ABS)[:-1]
    tau = tau_linear_exact(fitted, small_dataset)
    one = batch_pi_bounds(0.4, [(fitted, scores)], tau, ABS)
    two = batch_pi_bounds(0.4, [(fitted, scores)] * 2, tau, ABS)
    assert (one.lo, one.up) == (two.lo, two.up)


def test_batch_never_widens_the_gap():
    ds = make_dataset(n=40, p=8, seed=9)
    spec = RidgeModel(0.5)
    lo, hi = ds.target_range()
    tau = tau_linear_exact(spec.fit(ds, 0.0), ds)
    anchors = []
    for z_hat in (lo + 0.25 * (hi - lo), 0.0, lo + 0.75 * (hi - lo)):
        fitted = spec.fit(ds, z_hat)
        anchors.append((fitted, conformity_scores(ds, z_hat, fitted, ABS)[:-1]))
    mid = anchors[1]
    for z in np.linspace(lo, hi, 50):
        single = pi_bounds(z, mid[0], mid[1], tau, ABS)
        batched = batch_pi_bounds(z, anchors, tau, ABS)
        assert batched.gap <= single.gap + 1e-12
        assert batched.lo >= single.lo - 1e-12
        assert batched.up <= single.up + 1e-12


def test_batch_rejects_empty_anchor_list():
    with pytest.raises(InvalidInputError):
        batch_pi_bounds(0.0, [], tau_user_supplied([0.1, 0.1]), ABS)


# ---------------------------------------------------------- interpolated

def test_interpolated_zero_tau_recovers_exact_set():
    ds = make_dataset(n=30, p=4, seed=2)
    spec = RidgeModel(0.5)
    lo, hi = ds.target_range()
    interp = build_interpolated_model(ds, np.linspace(lo, hi, 5)[1:-1], lo, hi, spec)
    zero = tau_interpolated(tau_user_supplied(np.zeros(ds.n + 1)), ABS.gamma)
    grid = stabcp.default_candidate_grid(ds, 150)
    report = interpolated_cp(ds, interp, zero, ABS, 0.1, grid)
    oracle = conformal_set_grid(ds, spec, ABS, 0.1, grid)
    assert report.set.intervals == oracle.intervals
    assert report.fit_count == interp.fit_count == 5


def test_interpolated_set_contains_grid_oracle():
    ds = make_dataset(n=40, p=5, seed=3)
    spec = RidgeModel(0.5)
    lo, hi = ds.target_range()
    base = tau_linear_exact(spec.fit(ds, 0.0), ds)
    interp = build_interpolated_model(ds, np.linspace(lo, hi, 6)[1:-1], lo, hi, spec,
                                      base_tau=base)
    tilde = tau_interpolated(base, ABS.gamma)
    grid = stabcp.default_candidate_grid(ds, 150)
    report = interpolated_cp(ds, interp, tilde, ABS, 0.1, grid)
    oracle = conformal_set_grid(ds, spec, ABS, 0.1, grid)
    for glo, ghi in oracle.intervals:
        assert report.set.contains(glo) and report.set.contains(ghi)


def test_interpolated_single_anchor_at_anchor_matches_inflated_bounds():
    ds = make_dataset(n=20, p=3, seed=6)
    spec = RidgeModel(0.5)
    lo, hi = ds.target_range()
    anchor = 0.5 * (lo + hi)
    interp = build_interpolated_model(ds, [anchor], lo, hi, spec)
    base = tau_linear_exact(spec.fit(ds, anchor), ds)
    tilde = tau_interpolated(base, ABS.gamma)
    fitted = spec.fit(ds, anchor)
    scores = conformity_scores(ds, anchor, fitted, ABS)
    # at the anchor the interpolated predictions equal the anchor fit
    preds = interp.row_predictions_at(anchor)
    assert np.allclose(preds, fitted.row_predictions, atol=1e-12)
    # so the interpolated upper count equals the plain count under 3*gamma*tau
    pb = pi_bounds(anchor, fitted, scores[:-1], tilde, ABS)
    upper = scores + tilde.tau
    n_up = int(np.count_nonzero(upper <= scores[-1] - tilde.tau[-1]))
    assert pb.n_up == n_up


# ----------------------------------------------------------------- split

def test_split_matches_direct_indicator_evaluation():
    # trained prediction 0, calibration scores 1..9, alpha=0.1:
    # ceil(0.9 * 10) = 9 -> half-width 9.
    m = 5
    train_targets = np.zeros(m)
    cal_targets = np.arange(1.0, 10.0)
    targets = np.concatenate([train_targets, cal_targets])
    n = targets.size
    ds = TabularDataset(np.ones((n, 1)), targets, np.ones(1), test_target=0.0)
    spec = PretrainedLinearModel(np.zeros(1))
    report = split_cp(ds, m, spec, ABS, alpha=0.1)
    assert report.set.intervals == [(-9.0, 9.0)]
    assert report.fit_count == 1
    # direct indicator oracle: closure of {z: pi_split(z) >= alpha}
    pi = split_pi(ds, m, spec, ABS)
    zs = np.linspace(-12, 12, 4801)
    kept = np.array([pi(z) >= 0.1 - 1e-12 for z in zs])
    assert zs[kept].min() == pytest.approx(-9.0, abs=zs[1] - zs[0])
    assert zs[kept].max() == pytest.approx(9.0, abs=zs[1] - zs[0])


def test_split_all_ties_give_constant_halfwidth():
    m = 4
    targets = np.concatenate([np.zeros(m), np.full(6, 2.0)])
    ds = TabularDataset(np.ones((targets.size, 1)), targets, np.ones(1))
    spec = PretrainedLinearModel(np.zeros(1))
    for alpha in (0.2, 0.35, 0.5):
        report = split_cp(ds, m, spec, ABS, alpha=alpha)
        if report.set.shape == "interval":
            assert report.set.intervals == [(-2.0, 2.0)]


def test_split_coverage_monte_carlo():
    rng = np.random.default_rng(77)
    reps, n, p, alpha = 100, 60, 3, 0.1
    hits = 0
    for rep in range(reps):
        seed = int(rng.integers(2**31))
        ds = make_dataset(n=n, p=p, seed=seed)
        report = split_cp(ds, n // 2, RidgeModel(0.5), ABS, alpha)
        hits += report.covered
    assert hits / reps >= (1 - alpha) - 3 * math.sqrt(alpha * (1 - alpha) / reps)


def test_split_general_score_matches_dense_scan():
    # split set for a non-absolute score with interval level sets, against a
    # brute-force scan of the split conformity function
    def linex(q, m):
        d = np.asarray(q, dtype=float) - np.asarray(m, dtype=float)
        return np.exp(np.clip(d, None, 50.0)) - d - 1.0

    score = ScoreFunction.custom(linex, gamma=5.0)
    ds = make_dataset(n=40, p=3, seed=19)
    spec = RidgeModel(0.5)
    m = 20
    alpha = 0.2
    report = split_cp(ds, m, spec, score, alpha)
    assert report.set.shape in ("interval", "whole-range")
    pi = split_pi(ds, m, spec, score)
    lo, hi = ds.target_range()
    zs = np.linspace(lo, hi, 50_000)
    kept = pi(zs) >= alpha - 1e-12
    assert kept.any()
    spacing = zs[1] - zs[0]
    (blo, bhi), = report.set.intervals
    assert abs(blo - zs[np.argmax(kept)]) <= 1e-6 + spacing
    assert abs(bhi - zs[len(zs) - 1 - np.argmax(kept[::-1])]) <= 1e-6 + spacing


def test_split_rejects_bad_index(small_dataset):
    with pytest.raises(InvalidInputError):
        split_cp(small_dataset, 0, RidgeModel(0.5), ABS, 0.1)
    with pytest.raises(InvalidInputError):
        split_cp(small_dataset, small_dataset.n, RidgeModel(0.5), ABS, 0.1)


# ---------------------------------------------------------------- oracle

def test_oracle_equals_zero_tau_limit_form(small_dataset):
    spec = RidgeModel(0.5)
    report = oracle_cp(small_dataset, small_dataset.test_target, spec, ABS, 0.1)
    fitted = spec.fit(small_dataset, small_dataset.test_target)
    scores = conformity_scores(small_dataset, small_dataset.test_target, fitted, ABS)
    expected = anchored_upper_interval(fitted.mu_test, scores[:-1], 0.0, 0.1,
                                       small_dataset.target_range(), "oraclecp")
    assert report.set.intervals == expected.intervals
    assert report.fit_count == 1


def test_oracle_constant_model_centered_at_constant():
    ds = zero_model_dataset([1.0, -1.0, 0.5, 2.0, -0.7, 0.2, 1.4, -1.9, 0.9])
    spec = PretrainedLinearModel(np.zeros(1))
    report = oracle_cp(ds, 0.3, spec, ABS, alpha=0.2)
    (lo, hi), = report.set.intervals
    assert lo == pytest.approx(-hi)


def test_oracle_contained_in_stab_interval_with_any_tau(small_dataset):
    spec = RidgeModel(0.5)
    y_true = small_dataset.test_target
    oracle = oracle_cp(small_dataset, y_true, spec, ABS, 0.1)
    for scale in (0.1, 1.0, 3.0):
        tau_vec = np.full(small_dataset.n + 1, 0.2 * scale)
        report = stab_cp_interval(small_dataset, y_true, spec, ABS,
                                  tau_user_supplied(tau_vec), 0.1)
        (olo, ohi), = oracle.set.intervals
        assert report.set.contains(olo) and report.set.contains(ohi)


# ------------------------------------------------------------------ root

def test_root_matches_grid_oracle(small_dataset):
    spec = RidgeModel(0.5)
    grid = stabcp.default_candidate_grid(small_dataset, 250)
    oracle = conformal_set_grid(small_dataset, spec, ABS, 0.1, grid)
    report = root_cp(small_dataset, spec, ABS, 0.1, eps_r=1e-4)
    (glo, ghi), = oracle.intervals
    (rlo, rhi), = report.set.intervals
    tol = max(1e-4, float(grid[1] - grid[0])) + 1e-9
    assert abs(rlo - glo) <= tol and abs(rhi - ghi) <= tol


def test_root_empty_for_unreachable_alpha(small_dataset):
    n = small_dataset.n
    report = root_cp(small_dataset, RidgeModel(0.5), ABS, alpha=(n + 0.5) / (n + 1))
    assert report.set.shape == "empty"


def test_root_counts_every_refit(small_dataset):
    report = root_cp(small_dataset, RidgeModel(0.5), ABS, 0.1, eps_r=1e-4)
    lo, hi = small_dataset.target_range()
    assert report.fit_count >= 2 * math.log2((hi - lo) / 1e-4)
    # every conformity probe is one refit: probes plus both bisections
    assert report.fit_count > 20


# ----------------------------------------------------------- gap profile

def test_gap_profile_sandwich_everywhere(small_dataset):
    spec = RidgeModel(0.5)
    anchor = default_anchor(small_dataset, spec)
    tau = tau_linear_exact(spec.fit(small_dataset, anchor), small_dataset)
    grid = stabcp.default_candidate_grid(small_dataset, 60)
    rows = gap_profile(small_dataset, anchor, spec, ABS, tau, grid)
    assert len(rows) == 60
    for z, lo, up, exact in rows:
        assert lo - 1e-12 <= exact <= up + 1e-12


def test_gap_profile_zero_tau_zero_gap():
    ds = zero_model_dataset([1.0, -2.0, 0.7, 1.9])
    spec = PretrainedLinearModel(np.zeros(1))
    tau = tau_user_supplied(np.zeros(ds.n + 1))
    rows = gap_profile(ds, 0.0, spec, ABS, tau, np.linspace(-3, 3, 41))
    for z, lo, up, exact in rows:
        assert up - lo == pytest.approx(0.0, abs=1e-12)
        assert lo == pytest.approx(exact)


def test_gap_shrinks_with_sample_size():
    gaps = {}
    for n in (30, 300):
        ds = gen_linear_gaussian(GeneratorSpec("linear-gaussian", n, 100, 1.0, 5))
        spec = LadRidgeModel(0.5)
        tau = stabcp.tau_auto(spec, ds, ABS)
        bounds, _ = anchor_bounds(ds, 0.0, spec, ABS, tau)
        zs = np.linspace(*ds.target_range(), 100)
        values = [bounds.pi_bounds_at(z) for z in zs]
        gaps[n] = float(np.mean([pb.gap for pb in values]))
    assert gaps[300] < gaps[30]


def test_stab_interval_equivariant_under_target_scaling():
    # everything in the pipeline is linear in the responses, so scaling the
    # targets by any factor scales the interval exactly; this also guards the
    # count-based boundary tolerances, which must stay scale-free
    base = make_dataset(n=60, p=4, seed=23)
    spec = RidgeModel(0.5)
    anchor = default_anchor(base, spec)
    tau = tau_linear_exact(spec.fit(base, anchor), base)
    (lo0, hi0), = stab_cp_interval(base, anchor, spec, ABS, tau, 0.1).set.intervals
    for scale in (1e-6, 1e6):
        ds = TabularDataset(base.features, scale * base.targets, base.test_point,
                            scale * base.test_target)
        anchor_s = default_anchor(ds, spec)
        tau_s = tau_linear_exact(spec.fit(ds, anchor_s), ds)
        (lo, hi), = stab_cp_interval(ds, anchor_s, spec, ABS, tau_s, 0.1).set.intervals
        assert lo == pytest.approx(scale * lo0, rel=1e-9)
        assert hi == pytest.approx(scale * hi0, rel=1e-9)


def test_containment_chain_on_shared_grid():
    # lower-envelope set inside the exact grid set inside the single-fit set
    ds = make_dataset(n=60, p=5, seed=17)
    spec = RidgeModel(0.5)
    alpha = 0.1
    anchor = default_anchor(ds, spec)
    tau = tau_linear_exact(spec.fit(ds, anchor), ds)
    bounds, _ = anchor_bounds(ds, anchor, spec, ABS, tau)
    grid = stabcp.default_candidate_grid(ds, 120)
    threshold = math.floor((1 - alpha) * (ds.n + 1) + 1e-9)
    oracle = conformal_set_grid(ds, spec, ABS, alpha, grid)
    stab = stab_cp_interval(ds, anchor, spec, ABS, tau, alpha)
    for z in grid:
        pb = bounds.pi_bounds_at(z)
        in_lower = pb.n_lo <= threshold
        in_exact = oracle.contains(z)
        if in_lower:
            assert in_exact
        if in_exact:
            assert stab.set.contains(z)


# ------------------------------------------------------------ monotonicity

def test_upper_set_monotone_in_alpha(small_dataset):
    spec = RidgeModel(0.5)
    anchor = default_anchor(small_dataset, spec)
    tau = tau_linear_exact(spec.fit(small_dataset, anchor), small_dataset)
    previous = None
    for alpha in (0.05, 0.1, 0.2, 0.4):
        current = stab_cp_interval(small_dataset, anchor, spec, ABS, tau, alpha)
        if previous is not None:
            # shrinking alpha can only grow the set (whole-range swallows all)
            for lo, hi in current.set.intervals:
                assert previous.set.contains(lo) and previous.set.contains(hi)
        previous = current


def test_upper_set_monotone_in_tau(small_dataset):
    spec = RidgeModel(0.5)
    anchor = default_anchor(small_dataset, spec)
    base = tau_linear_exact(spec.fit(small_dataset, anchor), small_dataset)
    bigger = tau_user_supplied(base.tau + 0.3)
    r1 = stab_cp_interval(small_dataset, anchor, spec, ABS, base, 0.1)
    r2 = stab_cp_interval(small_dataset, anchor, spec, ABS, bigger, 0.1)
    (lo1, hi1), = r1.set.intervals
    (lo2, hi2), = r2.set.intervals
    assert lo2 <= lo1 and hi1 <= hi2


# ------------------------------------------------------------ bookkeeping

def test_fit_count_invariants(small_dataset):
    spec = RidgeModel(0.5)
    anchor = default_anchor(small_dataset, spec)
    tau = tau_linear_exact(spec.fit(small_dataset, anchor), small_dataset)
    assert stab_cp_interval(small_dataset, anchor, spec, ABS, tau, 0.1).fit_count == 1
    assert split_cp(small_dataset, 5, spec, ABS, 0.1).fit_count == 1
    assert oracle_cp(small_dataset, small_dataset.test_target, spec, ABS, 0.1).fit_count == 1
    grid = stabcp.default_candidate_grid(small_dataset, 37)
    assert grid_cp(small_dataset, spec, ABS, 0.1, grid).fit_count == 37
    lo, hi = small_dataset.target_range()
    interp = build_interpolated_model(small_dataset, np.linspace(lo, hi, 5)[1:-1],
                                      lo, hi, spec)
    tilde = tau_interpolated(tau, ABS.gamma)
    assert interpolated_cp(small_dataset, interp, tilde, ABS, 0.1,
                           grid).fit_count == 5


def test_reports_track_coverage_and_length(small_dataset):
    spec = RidgeModel(0.5)
    report = oracle_cp(small_dataset, small_dataset.test_target, spec, ABS, 0.1)
    assert report.covered is True  # the oracle set contains its own anchor
    assert report.length == pytest.approx(report.set.length())
    assert report.wall_time >= 0.0
