import dataclasses

import numpy as np
import pytest

import gapsgd as G
from gapsgd.duality import ActiveSet, _dual_value, column_bounds
from gapsgd.problem import blockwise_dual_norms

from conftest import hand_lasso, make_instance, tuned_eta


def sample_grad(spec, x):
    return spec.loss.deriv(spec.dataset.A @ x, spec.dataset.y)


def feasibility_excess(spec, dp, active):
    corr = spec.dataset.A.T @ dp.theta
    if dp.kappa is not None:
        corr = corr + dp.kappa
    per = blockwise_dual_norms(corr, spec.partition, spec.reg) / spec.dataset.n
    return float(per[active.blocks].max() / spec.lam - 1.0)


# ----------------------------------------------------------------- dual point

def test_dual_point_lower_branch_keeps_gradient():
    spec = make_instance(seed=1, n=40, d=30)
    big = dataclasses.replace(spec, lam=G.lambda_max(spec) * 3)
    act = ActiveSet.full(big)
    g = sample_grad(big, np.zeros(30))
    dp = G.dual_point(big, g, act, x=np.zeros(30))
    assert dp.scale_used == 1.0
    np.testing.assert_array_equal(dp.theta, -g)


def test_dual_point_scale_monotone_in_lambda():
    spec = make_instance(seed=2, n=50, d=40, ratio=0.3)
    act = ActiveSet.full(spec)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=40)
        g = sample_grad(spec, x)
        s1 = G.dual_point(spec, g, act, x=x).scale_used
        doubled = dataclasses.replace(spec, lam=2 * spec.lam)
        s2 = G.dual_point(doubled, g, ActiveSet.full(doubled), x=x).scale_used
        assert s2 <= s1 + 1e-15


def test_dual_point_feasible_on_active_set():
    for seed in range(6):
        spec = make_instance(seed=seed, n=60, d=80, ratio=0.4,
                             model="logistic" if seed % 2 else "lasso")
        act = ActiveSet.full(spec)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            x = rng.normal(size=80)
            dp = G.dual_point(spec, sample_grad(spec, x), act, x=x)
            assert feasibility_excess(spec, dp, act) <= 1e-12


def test_dual_point_empty_active_set():
    spec = hand_lasso()
    act = ActiveSet.full(spec).keep([])
    g = sample_grad(spec, np.zeros(2))
    dp = G.dual_point(spec, g, act)
    assert dp.scale_used == 1.0
    np.testing.assert_array_equal(dp.theta, -g)


def test_dual_point_shape_check():
    spec = hand_lasso()
    with pytest.raises(ValueError):
        G.dual_point(spec, np.zeros(5), ActiveSet.full(spec))


# ------------------------------------------------------------------ gap

def test_gap_zero_at_zero_iterate_above_lambda_max():
    spec = hand_lasso()  # lam = 1 = lambda_max
    act = ActiveSet.full(spec)
    x = np.zeros(2)
    dp = G.dual_point(spec, sample_grad(spec, x), act, x=x)
    gap = G.duality_gap(spec, x, dp, act)
    assert abs(gap) <= 1e-12


def test_gap_zero_at_optimum():
    spec = make_instance(seed=3, n=60, d=50)
    oracle = G.reference_solve(spec, tol=1e-12)
    act = ActiveSet.full(spec)
    gap = G.duality_gap(spec, oracle.x_final, oracle.dual, act)
    assert -1e-10 <= gap <= 1e-8


def test_gap_dominates_suboptimality():
    spec = make_instance(seed=4, n=60, d=50)
    oracle = G.reference_solve(spec, tol=1e-12)
    act = ActiveSet.full(spec)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.normal(scale=0.5, size=50)
        dp = G.dual_point(spec, sample_grad(spec, x), act, x=x)
        gap = G.duality_gap(spec, x, dp, act)
        assert gap + 1e-9 >= G.primal_objective(spec, x) - oracle.objective
        assert gap >= -1e-10


def test_gap_infinite_for_infeasible_logistic_dual():
    spec = make_instance(seed=5, n=30, d=20, model="logistic")
    act = ActiveSet.full(spec)
    bad = G.DualPoint(theta=np.full(30, 5.0), scale_used=1.0)
    assert G.duality_gap(spec, np.zeros(20), bad, act) == np.inf


# ------------------------------------------------------------- safe radius

def test_safe_radius_values():
    assert G.safe_radius(0.0, 10.0) == 0.0
    assert G.safe_radius(2.0, 1.0) == pytest.approx(2.0)
    assert G.safe_radius(0.5, 25.0) == pytest.approx(5.0)
    assert G.safe_radius(-1e-12, 10.0) == 0.0
    assert G.safe_radius(np.inf, 10.0) == np.inf


def test_safe_radius_rejects_bad_T():
    with pytest.raises(ValueError):
        G.safe_radius(1.0, 0.0)
    with pytest.raises(ValueError):
        G.safe_radius(1.0, -3.0)


# --------------------------------------------------------------- screening

def test_screen_huge_radius_removes_nothing():
    spec = make_instance(seed=6, n=40, d=30)
    act = ActiveSet.full(spec)
    x = np.zeros(30)
    dp = G.dual_point(spec, sample_grad(spec, x), act, x=x)
    for r in (1e12, np.inf):
        out = G.screen(spec, dp, r, act)
        assert out.n_blocks == act.n_blocks


def test_screen_negative_radius_rejected():
    spec = hand_lasso()
    act = ActiveSet.full(spec)
    dp = G.dual_point(spec, sample_grad(spec, np.zeros(2)), act)
    with pytest.raises(ValueError):
        G.screen(spec, dp, -1.0, act)


def test_screen_at_optimum_leaves_equicorrelation_set():
    spec = make_instance(seed=7, n=50, d=100, q=20, support=6)
    oracle = G.reference_solve(spec, tol=1e-12)
    act = ActiveSet.full(spec)
    r = G.safe_radius(max(oracle.gap, 0.0), G.lipschitz_constants(spec).T)
    kept = G.screen(spec, oracle.dual, r, act)
    eq = set(G.equicorrelation_set(spec, oracle.dual).tolist())
    assert set(kept.blocks.tolist()) == eq


def test_screen_result_is_subset_and_monotone_in_radius():
    spec = make_instance(seed=8, n=60, d=80)
    act = ActiveSet.full(spec)
    rng = np.random.default_rng(2)
    x = rng.normal(scale=0.3, size=80)
    dp = G.dual_point(spec, sample_grad(spec, x), act, x=x)
    small = G.screen(spec, dp, 0.01, act)
    large = G.screen(spec, dp, 0.5, act)
    assert set(small.blocks.tolist()) <= set(act.blocks.tolist())
    assert set(small.blocks.tolist()) <= set(large.blocks.tolist())


def test_screen_drops_orthogonal_low_norm_column_early():
    rng = np.random.default_rng(3)
    n, d = 60, 8
    a = rng.normal(size=(n, d))
    x_true = np.zeros(d)
    x_true[:2] = (2.0, -1.5)
    y = a @ x_true + 0.01 * rng.normal(size=n)
    # last column: orthogonal to y and small
    v = rng.normal(size=n)
    v -= (v @ y) / (y @ y) * y
    a[:, -1] = 0.05 * v / np.linalg.norm(v)
    ds = G.Dataset(a, y)
    spec = G.ProblemSpec(dataset=ds, partition=G.BlockPartition.singletons(d),
                         loss=G.LOSSES["squared"], reg=G.REGULARIZERS["l1"], lam=1.0)
    spec = dataclasses.replace(spec, lam=G.lambda_max(spec) / 2)
    rep = G.adsgd_solve(spec, G.SolverConfig(seed=0, max_outer=5, eta=tuned_eta(spec)))
    assert all(d - 1 not in h for h in rep.active_history[2:])


def test_screen_safety_against_oracle_small():
    for seed in (11, 12):
        spec = make_instance(seed=seed, n=80, d=120, ratio=0.4)
        oracle = G.reference_solve(spec, tol=1e-10)
        rep = G.adsgd_solve(spec, G.SolverConfig(seed=seed, gap_tol=1e-6,
                                                 max_outer=100, eta=tuned_eta(spec)))
        removed = set(range(spec.partition.q)) - set(rep.active_history[-1].tolist())
        for j in removed:
            coords = oracle.x_final[spec.partition.groups[j]]
            assert np.max(np.abs(coords), initial=0.0) <= 1e-9


# ------------------------------------------------------ equicorrelation set

def test_equicorrelation_empty_above_lambda_max():
    spec = make_instance(seed=13, n=40, d=30)
    above = dataclasses.replace(spec, lam=G.lambda_max(spec) * 1.5)
    oracle = G.reference_solve(above, tol=1e-10)
    assert G.equicorrelation_set(above, oracle.dual).size == 0


def test_equicorrelation_contains_duplicated_support_column():
    rng = np.random.default_rng(4)
    n = 40
    base = rng.normal(size=(n, 5))
    base[:, 1] = base[:, 0]  # duplicate an informative column
    y = 2.0 * base[:, 0] + 0.01 * rng.normal(size=n)
    ds = G.Dataset(base, y)
    spec = G.ProblemSpec(dataset=ds, partition=G.BlockPartition.singletons(5),
                         loss=G.LOSSES["squared"], reg=G.REGULARIZERS["l1"], lam=1.0)
    spec = dataclasses.replace(spec, lam=G.lambda_max(spec) / 2)
    oracle = G.reference_solve(spec, tol=1e-10)
    eq = set(G.equicorrelation_set(spec, oracle.dual).tolist())
    assert {0, 1} <= eq


def test_equicorrelation_superset_of_oracle_support():
    spec = make_instance(seed=14, n=70, d=90, ratio=0.4)
    oracle = G.reference_solve(spec, tol=1e-12)
    eq = set(G.equicorrelation_set(spec, oracle.dual).tolist())
    support_blocks = {int(spec.partition.block_of[i]) for i in oracle.support}
    assert support_blocks <= eq


# ----------------------------------------------------------- active set etc.

def test_active_set_keep_restricts_features():
    spec = make_instance(seed=15, n=30, d=24, q=6)
    act = ActiveSet.full(spec)
    sub = act.keep([1, 4])
    expected = np.sort(np.concatenate([spec.partition.groups[1],
                                       spec.partition.groups[4]]))
    np.testing.assert_array_equal(sub.features, expected)
    assert sub.column_bounds is act.column_bounds


def test_column_bounds_l1_are_column_norms():
    spec = make_instance(seed=16, n=30, d=24, q=24)
    np.testing.assert_allclose(column_bounds(spec), spec.dataset.column_norms(),
                               rtol=0, atol=1e-14)


def test_column_bounds_group_l2_matches_svd():
    spec = make_instance(seed=17, n=30, d=24, q=6, reg="group_l2")
    got = column_bounds(spec)
    a = np.asarray(spec.dataset.A.todense())
    want = [np.linalg.svd(a[:, g], compute_uv=False)[0]
            for g in spec.partition.groups]
    np.testing.assert_allclose(got, want, rtol=1e-5)


def test_active_history_is_monotone_under_screening():
    spec = make_instance(seed=18, n=60, d=80)
    rep = G.adsgd_solve(spec, G.SolverConfig(seed=1, gap_tol=1e-6, max_outer=80,
                                             eta=tuned_eta(spec)))
    sets = [set(h.tolist()) for h in rep.active_history]
    assert all(b <= a for a, b in zip(sets, sets[1:]))


def test_dual_value_matches_closed_form_squared():
    spec = hand_lasso()
    act = ActiveSet.full(spec)
    theta = np.array([0.3, -0.4])
    dp = G.DualPoint(theta=theta, scale_used=1.0)
    y = spec.dataset.y
    want = -float(np.sum(0.5 * theta ** 2 - y * theta)) / 2
    assert _dual_value(spec, dp, act) == pytest.approx(want, rel=1e-14)
