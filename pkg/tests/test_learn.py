import numpy as np
import pytest

from deepempc.dynamics import LtiSystem, Scenario, builtin_scenario
from deepempc.errors import (
    NonFiniteLoss,
    PreconditionViolated,
    ProjectionInfeasible,
    RankDeficient,
)
from deepempc.geometry import Polytope, symmetric_box
from deepempc.learn import (
    AdamState,
    MlpRegressor,
    PolynomialRegressor,
    TrainConfig,
    adam_update,
    fit_polynomial,
    fit_pwa_gains,
    memory_footprint_poly,
    mlp_loss_and_grads,
    monomial_design,
    poly_eval,
    project_feasible,
    train_mlp,
)
from deepempc.mpc import condense, generate_dataset, mpc_control
from deepempc.qp import QpProblem, solve_qp


def flat_config(**kw):
    base = dict(M=4, L=1, epochs=5, seed=0)
    base.update(kw)
    return TrainConfig(**base)


# -- adam ----------------------------------------------------------------------


def test_adam_zero_gradient_from_zero_state():
    cfg = flat_config()
    params = [np.array([1.0, -2.0])]
    state = AdamState.zeros_like(params)
    new_params, new_state = adam_update(params, [np.zeros(2)], state, cfg)
    assert np.array_equal(new_params[0], params[0])
    assert np.all(new_state.m[0] == 0.0) and np.all(new_state.v[0] == 0.0)
    assert new_state.t == 1


def test_adam_single_step_closed_form():
    cfg = flat_config(learning_rate=0.05)
    g = np.array([0.3, -4.0])
    params = [np.zeros(2)]
    new_params, _ = adam_update(params, [g], AdamState.zeros_like(params), cfg)
    expected = -cfg.learning_rate * g / (np.abs(g) + cfg.eps)
    assert np.allclose(new_params[0], expected, atol=1e-15)


def test_adam_constant_gradient_limit():
    cfg = flat_config(learning_rate=1e-3)
    g = np.array([0.7])
    params = [np.zeros(1)]
    state = AdamState.zeros_like(params)
    prev = params[0].copy()
    for _ in range(3000):
        params, state = adam_update(params, [g], state, cfg)
        step = params[0] - prev
        prev = params[0].copy()
    assert step[0] == pytest.approx(-cfg.learning_rate * np.sign(g[0]), rel=1e-6)


def test_adam_is_pure():
    cfg = flat_config()
    params = [np.ones(3)]
    grads = [np.ones(3)]
    state = AdamState.zeros_like(params)
    adam_update(params, grads, state, cfg)
    assert np.all(params[0] == 1.0)
    assert np.all(state.m[0] == 0.0)


# -- training --------------------------------------------------------------------


def test_train_constant_target():
    X = np.tile(np.array([[0.4, -0.2]]), (32, 1))
    U = np.tile(np.array([[0.7]]), (32, 1))
    res = train_mlp(X, U, flat_config(M=4, L=1, epochs=200, batch_size=1))
    assert res.final_mse <= 1e-6
    assert res.loss_history.shape == (200,)
    assert np.all(np.isfinite(res.loss_history))


def test_train_linear_target():
    rng = np.random.default_rng(61)
    X = rng.uniform(-1, 1, (2000, 2))
    U = X @ np.array([[0.7], [-1.2]])
    res = train_mlp(X, U, TrainConfig(M=2, L=1, epochs=400, seed=1, learning_rate=3e-3))
    assert res.final_mse <= 1e-4


def test_train_deterministic_bitwise():
    rng = np.random.default_rng(62)
    X = rng.uniform(-1, 1, (128, 2))
    U = rng.uniform(-1, 1, (128, 1))
    cfg = flat_config(M=5, L=2, epochs=10, seed=3)
    a = train_mlp(X, U, cfg)
    b = train_mlp(X, U, cfg)
    assert all(np.array_equal(w1, w2) for w1, w2 in zip(a.net.weights, b.net.weights))
    assert all(np.array_equal(b1, b2) for b1, b2 in zip(a.net.biases, b.net.biases))
    assert np.array_equal(a.loss_history, b.loss_history)
    assert a.final_mse == b.final_mse


def test_train_width_below_input_dim_rejected():
    X = np.zeros((4, 3))
    U = np.zeros((4, 1))
    with pytest.raises(PreconditionViolated):
        train_mlp(X, U, flat_config(M=2))


def test_train_divergence_detected():
    # squared errors overflow to inf on the first batch
    X = np.array([[1e200, 0.0]] * 8)
    U = np.zeros((8, 1))
    with pytest.raises(NonFiniteLoss):
        train_mlp(X, U, flat_config(M=4, L=2, epochs=5))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(64)
    X = rng.uniform(-1, 1, (16, 2))
    U = rng.uniform(-1, 1, (16, 1))
    cfg = flat_config(M=4, L=2)
    from deepempc.learn import _init_params

    weights, biases = _init_params(2, 1, cfg, rng)
    params = weights + biases
    n_w = len(weights)
    _, gw, gb = mlp_loss_and_grads(params[:n_w], params[n_w:], X, U)
    analytic = gw + gb
    h = 1e-5
    for arr_idx in range(len(params)):
        flat = params[arr_idx].ravel()
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _, _ = mlp_loss_and_grads(params[:n_w], params[n_w:], X, U)
            flat[i] = orig - h
            down, _, _ = mlp_loss_and_grads(params[:n_w], params[n_w:], X, U)
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        ga = analytic[arr_idx].ravel()
        denom = max(np.max(np.abs(ga)), np.max(np.abs(numeric)), 1e-8)
        assert np.max(np.abs(ga - numeric)) / denom <= 1e-4


def test_mlp_regressor_estimator_interface():
    rng = np.random.default_rng(65)
    X = rng.uniform(-1, 1, (256, 2))
    U = X @ np.array([[0.5], [0.5]])
    est = MlpRegressor(M=3, L=1, epochs=50, seed=0)
    assert est.get_params()["M"] == 3
    clone_params = est.get_params()
    est.fit(X, U)
    pred = est.predict(X[:5])
    assert pred.shape == (5, 1)
    refit = MlpRegressor(**clone_params).fit(X, U)
    assert np.array_equal(refit.predict(X[:5]), pred)


# -- polynomial baseline ----------------------------------------------------------


def test_polynomial_memory_reported_value():
    assert memory_footprint_poly(1, 8, n_x=4, degree=3) == 2048
    assert round(memory_footprint_poly(1, 8, n_x=4, degree=3) / 1024.0, 2) == 2.00


def test_polynomial_recovers_affine_data():
    rng = np.random.default_rng(66)
    X = rng.uniform(-1, 1, (50, 2))
    U = (3.0 * X[:, 0] + 1.0).reshape(-1, 1)
    poly = fit_polynomial(X, U, 1)
    coeffs = dict(zip([(0, 0), (0, 1), (1, 0), (1, 1)], poly.coefficients[0]))
    assert coeffs[(1, 0)] == pytest.approx(3.0, abs=1e-8)
    assert coeffs[(0, 0)] == pytest.approx(1.0, abs=1e-8)
    assert abs(coeffs[(0, 1)]) <= 1e-8 and abs(coeffs[(1, 1)]) <= 1e-8
    assert poly_eval(poly, np.array([0.2, -0.9]))[0] == pytest.approx(1.6, abs=1e-8)


def test_polynomial_constant_data():
    X = np.random.default_rng(67).uniform(-1, 1, (30, 2))
    U = np.full((30, 1), 2.5)
    poly = fit_polynomial(X, U, 1)
    assert poly.coefficients[0, 0] == pytest.approx(2.5, abs=1e-8)
    assert np.max(np.abs(poly.coefficients[0, 1:])) <= 1e-8


def test_polynomial_insufficient_data():
    with pytest.raises(RankDeficient):
        fit_polynomial(np.zeros((3, 2)), np.zeros((3, 1)), 1)


def test_polynomial_residual_orthogonality():
    rng = np.random.default_rng(68)
    X = rng.uniform(-1, 1, (100, 2))
    U = rng.uniform(-1, 1, (100, 1))
    poly = fit_polynomial(X, U, 2)
    design = monomial_design(X, 2)
    residual = design @ poly.coefficients[0] - U[:, 0]
    assert np.max(np.abs(design.T @ residual)) <= 1e-7


def test_polynomial_regressor_estimator():
    rng = np.random.default_rng(69)
    X = rng.uniform(-1, 1, (64, 2))
    U = (X[:, :1] ** 2) + 0.5
    est = PolynomialRegressor(degree=2).fit(X, U)
    assert np.max(np.abs(est.predict(X) - U)) <= 1e-8


# -- pwa gain refit ----------------------------------------------------------------


def test_refit_recovers_own_law(oscillator_law):
    rng = np.random.default_rng(70)
    xs, us = [], []
    for region in oscillator_law.regions:
        from deepempc.geometry import chebyshev_center

        center, radius = chebyshev_center(region.polytope)
        pts = center + rng.normal(size=(12, 2)) * 0.2 * radius
        pts = pts[np.asarray(region.contains(pts))]
        for x in pts:
            xs.append(x)
            us.append(oscillator_law(x))
    xs, us = np.array(xs), np.array(us)
    refit = fit_pwa_gains(oscillator_law, xs, us)
    for old, new in zip(oscillator_law.regions, refit.regions):
        assert np.max(np.abs(old.K - new.K)) <= 1e-7
        assert np.max(np.abs(old.g - new.g)) <= 1e-7


def test_refit_single_region_is_global_least_squares():
    from deepempc.pwa import PwaFunction, Region

    region = Region(Z=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                    z=np.ones(4) * 5, K=np.zeros((1, 2)), g=np.zeros(1))
    law = PwaFunction([region], 2, 1)
    rng = np.random.default_rng(71)
    X = rng.uniform(-1, 1, (40, 2))
    U = rng.uniform(-1, 1, (40, 1))
    refit = fit_pwa_gains(law, X, U)
    design = np.hstack([X, np.ones((40, 1))])
    coef = np.linalg.lstsq(design, U[:, 0], rcond=None)[0]
    assert np.allclose(refit.regions[0].K[0], coef[:2], atol=1e-9)
    assert refit.regions[0].g[0] == pytest.approx(coef[2], abs=1e-9)


def test_refit_against_longer_horizon_labels(oscillator, oscillator_law):
    longer = builtin_scenario("oscillator", N=3)
    condensed = condense(longer)
    ds = generate_dataset(condensed, 300, 12, oscillator.sample_box)
    refit = fit_pwa_gains(oscillator_law, ds.X, ds.U)

    def objective(law):
        total = 0.0
        for x, u in zip(ds.X, ds.U):
            values, located = law.eval_batch(x.reshape(1, -1))
            if located[0]:
                total += float(np.sum((values[0] - u) ** 2))
        return total

    assert objective(refit) <= objective(oscillator_law) + 1e-12


def test_refit_underpopulated_region_warns(oscillator_law):
    rng = np.random.default_rng(72)
    X = rng.uniform(-0.05, 0.05, (30, 2))  # all points near the origin region
    U = np.zeros((30, 1))
    with pytest.warns(RuntimeWarning):
        refit = fit_pwa_gains(oscillator_law, X, U)
    for old, new in zip(oscillator_law.regions[1:], refit.regions[1:]):
        assert np.array_equal(old.K, new.K)


# -- feasibility projection ---------------------------------------------------------


def test_projection_clamps_box():
    sys = LtiSystem(np.eye(1), np.eye(1))
    box = symmetric_box([0.5]).to_polytope()
    assert project_feasible([0.7], [0.0], sys, box)[0] == pytest.approx(0.5)
    assert project_feasible([-3.0], [0.0], sys, box)[0] == pytest.approx(-0.5)
    assert project_feasible([0.2], [0.0], sys, box)[0] == pytest.approx(0.2)


def test_projection_clamp_agrees_with_qp():
    rng = np.random.default_rng(73)
    sys = LtiSystem(np.eye(2), np.eye(2))
    box = symmetric_box([0.5, 1.5]).to_polytope()
    for _ in range(20):
        raw = rng.uniform(-3, 3, 2)
        clamp = project_feasible(raw, np.zeros(2), sys, box)
        sol = solve_qp(QpProblem(np.eye(2), -2.0 * raw, box.C, box.c))
        assert np.max(np.abs(clamp - sol.z)) <= 1e-8


def test_projection_simplex_matches_grid():
    sys = LtiSystem(np.eye(2), np.eye(2))
    simplex = Polytope(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
                       np.array([1.0, 0.0, 0.0]))
    raw = np.array([1.2, 0.9])
    projected = project_feasible(raw, np.zeros(2), sys, simplex)
    grid = np.stack(np.meshgrid(np.arange(0, 1.0005, 1e-3), np.arange(0, 1.0005, 1e-3)),
                    axis=-1).reshape(-1, 2)
    grid = grid[grid.sum(axis=1) <= 1.0 + 1e-12]
    best = grid[np.argmin(np.sum((grid - raw) ** 2, axis=1))]
    assert np.linalg.norm(projected - best) <= 2e-3
    assert np.sum((projected - raw) ** 2) <= np.sum((best - raw) ** 2) + 1e-6


def test_projection_with_invariant_set():
    sys = LtiSystem(np.array([[2.0]]), np.array([[1.0]]))
    u_box = symmetric_box([1.0]).to_polytope()
    cinv = Polytope(np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))
    u = project_feasible([0.9], [0.4], sys, u_box, cinv)
    # need 2*0.4 + u <= 0.5, i.e. u <= -0.3
    assert u[0] == pytest.approx(-0.3, abs=1e-8)
    with pytest.raises(ProjectionInfeasible):
        project_feasible([0.0], [0.5], sys, symmetric_box([0.1]).to_polytope(), cinv)
    with pytest.raises(ProjectionInfeasible):
        project_feasible([0.0], [5.0], sys, u_box, cinv)  # state outside the set
