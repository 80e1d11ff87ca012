import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepempc.dynamics import (
    LtiSystem,
    Scenario,
    Trajectory,
    average_settling_time,
    builtin_scenario,
    relative_ast,
    rollout,
    settling_time,
    step,
)
from deepempc.errors import (
    ControllerInfeasible,
    DimensionMismatch,
    EmptySet,
    UnknownScenario,
)


def make_traj(norm_sequence):
    states = np.array([[v, 0.0] for v in norm_sequence])
    inputs = np.zeros((len(norm_sequence) - 1, 1))
    return Trajectory(states, inputs)


def test_step_identity_system():
    sys = LtiSystem(np.eye(2), np.zeros((2, 1)))
    assert np.allclose(step(sys, [1.0, 2.0], [5.0]), [1.0, 2.0])


def test_step_oscillator_matches_reported_matrix(oscillator):
    # first column of the benchmark A matrix
    out = step(oscillator.system, [1.0, 0.0], [0.0])
    assert np.allclose(out, [0.5403, 0.8415])


def test_step_matches_elementwise_expansion():
    rng = np.random.default_rng(5)
    sys = LtiSystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    x, u = rng.normal(size=3), rng.normal(size=2)
    expected = np.array(
        [sum(sys.A[i, j] * x[j] for j in range(3)) + sum(sys.B[i, j] * u[j] for j in range(2))
         for i in range(3)]
    )
    assert np.allclose(step(sys, x, u), expected, atol=1e-12)


def test_step_dimension_mismatch():
    sys = LtiSystem(np.eye(2), np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        step(sys, [1.0, 2.0, 3.0], [0.0])


def test_rollout_zero_dynamics():
    sys = LtiSystem(np.zeros((2, 2)), np.zeros((2, 1)))
    traj = rollout(sys, lambda x: np.zeros(1), [1.0, -1.0], 4)
    assert np.allclose(traj.states[1:], 0.0)
    assert len(traj) == 4


def test_rollout_deadbeat():
    sys = LtiSystem(np.array([[1.0]]), np.array([[1.0]]))
    traj = rollout(sys, lambda x: -x, [3.0], 5)
    assert np.allclose(traj.states[1:], 0.0)


def test_rollout_controller_failure_carries_step():
    sys = LtiSystem(np.eye(1), np.eye(1))
    calls = {"n": 0}

    def controller(x):
        calls["n"] += 1
        if calls["n"] > 3:
            raise ValueError("no input available")
        return np.zeros(1)

    with pytest.raises(ControllerInfeasible) as err:
        rollout(sys, controller, [1.0], 10)
    assert err.value.step == 3


def test_builtin_scenarios_match_reported_matrices():
    osc = builtin_scenario("oscillator")
    assert abs(osc.system.A[0, 0] - 0.5403) < 1e-12
    assert osc.N == 1 and np.allclose(osc.Q, 2 * np.eye(2)) and np.allclose(osc.P, 0.0)
    om = builtin_scenario("oscillating_masses")
    assert np.allclose(om.system.B.ravel(), [0.014, 0.063, 0.221, 0.367])
    assert om.N == 7
    ip = builtin_scenario("inverted_pendulum")
    assert abs(ip.system.A[3, 2] - 3.1182) < 1e-12
    assert ip.N == 10
    bounds = ip.X.c[:4]
    assert np.allclose(bounds, [1.0, 1.5, 0.35, 1.0])
    with pytest.raises(UnknownScenario):
        builtin_scenario("pendulum_on_pendulum")


def test_builtin_weight_overrides():
    om = builtin_scenario("oscillating_masses", Q=2 * np.eye(4), R=np.array([[1.0]]))
    assert np.allclose(om.Q, 2 * np.eye(4))
    assert np.allclose(om.R, [[1.0]])


def test_settling_time_examples():
    assert settling_time(make_traj([0.0, 0.0, 0.0]), 1e-2) == 0
    assert settling_time(make_traj([1.0, 0.005, 0.003]), 1e-2) == 1
    assert settling_time(make_traj([1.0, 0.005, 0.02, 0.001]), 1e-2) == 3
    assert settling_time(make_traj([1.0, 0.5, 0.2]), 1e-2) is None


@settings(max_examples=50, deadline=None)
@given(
    norms=st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=2, max_size=12),
    tol_lo=st.floats(min_value=1e-3, max_value=1.0),
    tol_gap=st.floats(min_value=0.0, max_value=5.0),
)
def test_settling_monotone_in_tolerance(norms, tol_lo, tol_gap):
    traj = make_traj(norms)
    loose = settling_time(traj, tol_lo + tol_gap)
    tight = settling_time(traj, tol_lo)
    if tight is not None:
        assert loose is not None and loose <= tight


def test_rollout_stable_system_norm_bound():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(3, 3))
    a *= 0.8 / np.max(np.abs(np.linalg.eigvals(a)))
    sys = LtiSystem(a, np.zeros((3, 1)))
    x0 = rng.normal(size=3)
    traj = rollout(sys, lambda x: np.zeros(1), x0, 10)
    gain = np.max(np.abs(a).sum(axis=1))
    for k, state in enumerate(traj.states):
        assert np.max(np.abs(state)) <= gain**k * np.max(np.abs(x0)) + 1e-12


def test_average_settling_time_and_ratio():
    trajs = [make_traj([1.0, 0.001, 0.001]), make_traj([1.0, 1.0, 0.5, 0.001])]
    # settling times 1 and 3
    assert average_settling_time(trajs, 1e-2) == 2.0
    unsettled = make_traj([1.0, 1.0, 1.0])
    assert average_settling_time([unsettled], 1e-2) == 2.0  # counts full length
    assert relative_ast(3.0, 3.0) == 1.0
    with pytest.raises(EmptySet):
        average_settling_time([], 1e-2)


def test_scenario_json_roundtrip(tmp_path, oscillator):
    path = tmp_path / "scenario.json"
    oscillator.save(path)
    loaded = Scenario.load(path)
    assert np.array_equal(loaded.system.A, oscillator.system.A)
    assert np.array_equal(loaded.Q, oscillator.Q)
    assert loaded.k_end == oscillator.k_end
    # byte-identical re-serialization
    path2 = tmp_path / "scenario2.json"
    loaded.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_trajectory_length_invariant():
    with pytest.raises(DimensionMismatch):
        Trajectory(np.zeros((3, 2)), np.zeros((3, 1)))
