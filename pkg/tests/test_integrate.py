import math

import numpy as np
import pytest

from zkroa.errors import IntegrationBlowup
from zkroa.integrate import (
    clip_to_region,
    evaluate_T_delta,
    segment_exit_point,
    simulate_augmented,
    stopped_trajectory,
    terminal_states,
    write_trajectory_csv,
)
from zkroa.systems import SystemSpec, closed_form_u_1d


def linear_decay(region=((-2.0, 2.0),)):
    return SystemSpec(1, lambda x: -x, lambda x: np.abs(x[..., 0]), np.zeros(1),
                      np.array(region), "linear")


def cubic_exit_time(x0, x1):
    """Time for x' = -x + x^3 to go from x0 to x1 (both > 1)."""
    return 0.5 * math.log((1 - 1 / x1 ** 2) / (1 - 1 / x0 ** 2))


def assert_clipped_invariants(traj, sys):
    assert np.all(sys.contains(traj.states))
    assert np.all(np.diff(traj.integrals) >= 0)
    assert traj.integrals[0] == 0.0
    if traj.exited:
        np.testing.assert_array_equal(traj.states[traj.exit_index:],
                                      np.broadcast_to(traj.boundary_point, traj.states[traj.exit_index:].shape))


def test_linear_decay_matches_exponential():
    traj = simulate_augmented(linear_decay(), [1.0], 1.0, 1001)
    assert abs(traj.states[-1, 0] - math.exp(-1)) <= 1e-10
    # I' = |x| with x = e^-t gives I(1) = 1 - e^-1.
    assert abs(traj.integrals[-1] - (1 - math.exp(-1))) <= 1e-10
    np.testing.assert_allclose(traj.times, np.linspace(0, 1, 1001))


def test_rk4_fourth_order():
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        n = int(round(1 / h)) + 1
        errs.append(abs(simulate_augmented(linear_decay(), [1.0], 1.0, n).states[-1, 0] - math.exp(-1)))
    assert errs[0] / errs[1] >= 12
    assert errs[1] / errs[2] >= 12


def test_equilibrium_is_fixed(cubic, vdp):
    for sys in (cubic, vdp):
        traj = simulate_augmented(sys, sys.x_eq, 1.0, 101)
        assert np.all(traj.states == sys.x_eq)
        assert np.all(traj.integrals == 0)


def test_outward_repulsion_from_1_2(cubic):
    # The exact solution leaves [-1.5, 1.5] at t ~ 0.346 and blows up at t ~ 0.593,
    # so monotone growth is checked up to the first sample outside the region.
    traj = simulate_augmented(cubic, [1.2], 1.0, 1001)
    iota = int(np.flatnonzero(~cubic.contains(traj.states))[0])
    assert iota == math.ceil(cubic_exit_time(1.2, 1.5) / 1e-3)
    x = traj.states[: iota + 1, 0]
    assert np.all(np.diff(x) > 0)
    # Brute-force Euler at dt = 1e-5 to the same instants.
    y, t_ref = 1.2, np.arange(0, iota + 1) * 1e-3
    euler = [y]
    for _ in range(iota):
        for _ in range(100):
            y += 1e-5 * (-y + y ** 3)
        euler.append(y)
    np.testing.assert_allclose(x, euler, atol=1e-3)
    assert np.all(np.diff(euler) > 0)


def test_blowup_raises_with_index(cubic):
    with pytest.raises(IntegrationBlowup) as info:
        simulate_augmented(cubic, [1.2], 1.0, 1001, stop_outside=False)
    assert info.value.index is not None
    assert info.value.index * 1e-3 >= cubic_exit_time(1.2, 1e6)


def test_inside_trajectory_is_unchanged(cubic):
    raw = simulate_augmented(cubic, [0.5], 1.0, 1001)
    clipped = clip_to_region(raw, cubic)
    assert not clipped.exited and clipped.exit_index is None
    np.testing.assert_array_equal(clipped.states, raw.states)
    np.testing.assert_array_equal(clipped.integrals, raw.integrals)
    assert_clipped_invariants(clipped, cubic)


def test_exit_at_boundary_from_1_4(cubic):
    traj = stopped_trajectory(cubic, [1.4], 1.0, 1001)
    assert traj.exited
    assert traj.boundary_point[0] == 1.5
    t_exit = cubic_exit_time(1.4, 1.5)
    assert (traj.exit_index - 1) * 1e-3 < t_exit <= traj.exit_index * 1e-3
    assert np.all(traj.states[traj.exit_index:, 0] == 1.5)
    assert_clipped_invariants(traj, cubic)


def test_integral_update_after_exit(cubic):
    traj = stopped_trajectory(cubic, [1.4], 1.0, 1001)
    i = traj.exit_index
    j = np.arange(i, 1001)
    expected = traj.integrals[i - 1] + (j - i + 1) * 1.5 * 1e-3
    np.testing.assert_allclose(traj.integrals[i:], expected, rtol=1e-14)


def test_segment_intersection():
    r = segment_exit_point([2.9, 0.0], [3.2, 0.0], np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
    np.testing.assert_array_equal(r, [3.0, 0.0])
    # Corner region: the earlier face wins.
    r = segment_exit_point([2.9, 2.5], [3.1, 3.5], np.array([-3.0, -3.0]), np.array([3.0, 3.0]))
    np.testing.assert_allclose(r, [2.9 + 0.2 * 0.5, 3.0])


def test_clip_rejects_start_outside(cubic):
    raw = simulate_augmented(cubic, [1.6], 0.1, 11, stop_outside=False)
    with pytest.raises(ValueError):
        clip_to_region(raw, cubic)


def test_random_trajectories_keep_invariants(vdp):
    rng = np.random.default_rng(3)
    for x0 in rng.uniform(-3, 3, size=(20, 2)):
        assert_clipped_invariants(stopped_trajectory(vdp, x0, 1.5, 301), vdp)


def test_terminal_states_match_full_trajectories(vdp):
    rng = np.random.default_rng(4)
    x0 = rng.uniform(-3, 3, size=(25, 2))
    term = terminal_states(vdp, x0, 1.5, 301)
    for m, x in enumerate(x0):
        traj = stopped_trajectory(vdp, x, 1.5, 301)
        np.testing.assert_allclose(term.states[m], traj.states[-1], rtol=1e-14, atol=1e-14)
        assert term.integrals[m] == pytest.approx(traj.integrals[-1], rel=1e-13)
        assert term.exited[m] == traj.exited


def test_worker_count_does_not_change_results(vdp, monkeypatch):
    x0 = np.random.default_rng(5).uniform(-3, 3, size=(40, 2))
    monkeypatch.setenv("ZK_WORKERS", "1")
    a = terminal_states(vdp, x0, 1.0, 201)
    monkeypatch.setenv("ZK_WORKERS", "4")
    b = terminal_states(vdp, x0, 1.0, 201)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.integrals, b.integrals)


def test_T_delta_at_equilibrium(cubic):
    assert evaluate_T_delta(cubic, lambda z: np.ones(len(z)), cubic.x_eq, 1.0, 1001) == 1.0


def test_T_delta_fixed_point_example(cubic):
    val = evaluate_T_delta(cubic, lambda z: closed_form_u_1d(z[:, 0]), 0.5, 1.0, 1001)
    assert abs(val - math.sqrt(0.5 / 1.5)) <= 1e-4


def test_T_delta_on_boundary(cubic):
    z = lambda s: np.cos(s[:, 0])
    val = evaluate_T_delta(cubic, z, 1.5, 1.0, 1001)
    assert val == pytest.approx(math.exp(-1.5) * math.cos(1.5), rel=1e-12)


def test_fixed_point_on_grid(cubic):
    x = np.linspace(-1.5, 1.5, 200)[:, None]
    t = evaluate_T_delta(cubic, lambda z: closed_form_u_1d(z[:, 0]), x, 1.0, 1001)
    assert np.max(np.abs(t - closed_form_u_1d(x[:, 0]))) <= 5e-3


@pytest.mark.parametrize("name", ["cubic", "vdp"])
def test_semigroup(name, request):
    sys = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    x = rng.uniform(sys.lo, sys.hi, size=(120, sys.dim))
    dt, n = 1.0, 501
    z = lambda s: np.exp(-np.sum(s ** 2, axis=1) / 4) * np.cos(s[:, 0])
    twice = evaluate_T_delta(sys, z, x, 2 * dt, 2 * n - 1)
    inner = lambda y: evaluate_T_delta(sys, z, y, dt, n)
    nested = evaluate_T_delta(sys, inner, x, dt, n)
    assert np.max(np.abs(twice - nested)) <= 1e-3


def test_trajectory_csv(tmp_path, cubic):
    traj = stopped_trajectory(cubic, [1.4], 1.0, 11)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, traj)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x_1,I"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], traj.states[:, 0])
    np.testing.assert_array_equal(data[:, 2], traj.integrals)
