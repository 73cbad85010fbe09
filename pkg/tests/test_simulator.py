import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.special import lambertw

from delaysteer.errors import HorizonShort, IncompatibleGrid, NonSmoothHistory
from delaysteer.model import DelaySystem, M2State
from delaysteer.simulator import Grid, lag_matrices, null_state, simulate, verify_null
from delaysteer.spectral import Window, find_eigenvalues


def steps_oracle(history, a, units):
    """Exact solution of z' = a z(t-1) by the method of steps.

    Each piece is a polynomial in the local variable s in [0, 1]; the
    history is given the same way (s = theta + 1).
    """
    pieces = [history]
    for _ in range(units):
        integ = (a * pieces[-1]).integ()
        pieces.append(pieces[-1](1.0) + integ - integ(0.0))
    return pieces[1:]


def test_constant_solution():
    sys = DelaySystem(A1=[[1.0]], A0=[[-1.0]], b=[1.0])
    traj = simulate(sys, M2State.constant([2.0], [2.0], 65), dt=1 / 64, horizon=3.0)
    np.testing.assert_allclose(traj.z, 2.0, atol=1e-13)


def test_known_values(scalar, unit_state_1):
    traj = simulate(scalar, unit_state_1, dt=1 / 512, horizon=2.0)
    assert traj.at(1.0)[0] == pytest.approx(2.0, abs=1e-12)
    assert traj.at(2.0)[0] == pytest.approx(3.5, abs=1e-5)


def _errors(history_fn, history_poly, dts):
    sys = DelaySystem(A1=[[1.0]], b=[1.0])
    exact = steps_oracle(history_poly, 1.0, 3)
    errs = []
    for dt in dts:
        x0 = M2State.from_function([history_fn(0.0)], lambda t: history_fn(t), int(round(1 / dt)) + 1)
        traj = simulate(sys, x0, dt=dt, horizon=3.0)
        errs.append(abs(traj.at(3.0)[0] - exact[2](1.0)))
    return np.array(errs)


def test_oracle_polynomials():
    pieces = steps_oracle(Polynomial([1.0]), 1.0, 2)
    assert pieces[0](1.0) == pytest.approx(2.0)
    assert pieces[1](1.0) == pytest.approx(3.5)


def test_second_order_convergence():
    # history on [-1, 0] written in the local variable s = theta + 1
    hist = Polynomial([0.5, -1.0, 2.0, 1.0])
    errs = _errors(lambda th: hist(th + 1.0), hist, [1 / 16, 1 / 32, 1 / 64, 1 / 128])
    ratios = errs[:-1] / errs[1:]
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_linearity(diag12):
    a = M2State.from_function([1.0, 0.0], lambda t: np.stack([np.cos(3 * t), t], -1), 129)
    b = M2State.from_function([0.0, -2.0], lambda t: np.stack([t ** 2, np.ones_like(t)], -1), 129)
    both = M2State(a.y + 2 * b.y, a.z0 + 2 * b.z0)
    u = lambda t: np.sin(t)
    ta = simulate(diag12, a, u, dt=1 / 128, horizon=2.0)
    tb = simulate(diag12, b, dt=1 / 128, horizon=2.0)
    tab = simulate(diag12, both, u, dt=1 / 128, horizon=2.0)
    np.testing.assert_allclose(tab.z, ta.z + 2 * tb.z, atol=1e-12)


def test_eigen_solution_with_kernels(kernel_system):
    lam = [e for e in find_eigenvalues(kernel_system, Window(-3.1, 2.1, -9.3, 9.3)).values if e.imag > 0][0]
    x0 = M2State.from_function([1.0], lambda t: np.exp(lam * t).real, 1025)
    traj = simulate(kernel_system, x0, dt=1 / 1024, horizon=2.0)
    for t in (0.5, 1.0, 2.0):
        assert traj.at(t)[0] == pytest.approx(np.exp(lam * t).real, abs=5e-5)


def test_neutral_eigen_solution():
    sys = DelaySystem(A1=[[0.5]], A_minus1=[[0.3]], b=[1.0])
    lam = find_eigenvalues(sys, Window(-0.5, 2.0, -0.5, 0.5)).values[0]
    x0 = M2State.from_function([1.0], lambda t: np.exp(lam.real * t), 1025)
    with pytest.raises(NonSmoothHistory):
        simulate(sys, x0, dt=1 / 1024, horizon=2.0)
    traj = simulate(sys, x0, dt=1 / 1024, horizon=2.0, smooth_history=True)
    assert traj.at(2.0)[0] == pytest.approx(np.exp(2 * lam.real), rel=1e-5)


def test_feedback_gain_equivalence(diag12):
    class Ctrl:
        horizon = 2.0
        feedback_gain = np.array([0.3, -0.2])

        def __call__(self, t):
            return np.zeros_like(t)

    x0 = M2State.from_function([1.0, 0.5], lambda t: np.stack([np.cos(t), 1 + t], -1), 129)
    with_gain = simulate(diag12, x0, Ctrl(), dt=1 / 128, horizon=2.0)
    closed = simulate(diag12.with_feedback(Ctrl.feedback_gain), x0, dt=1 / 128, horizon=2.0)
    np.testing.assert_allclose(with_gain.z, closed.z, atol=1e-13)
    np.testing.assert_allclose(with_gain.u, with_gain.z[:257] @ Ctrl.feedback_gain, atol=1e-13)


def test_lag_matrices_integrate_kernel(kernel_system):
    C = lag_matrices(kernel_system, 1 / 256)
    # constant history: total weight equals Delta(0) + 0 * I
    ones_rate = C.sum(axis=0)[0, 0]
    k3 = Polynomial([0.3, -0.5, 0.2]).integ()
    expected = 0.8 - 0.4 + (k3(0) - k3(-0.75))
    assert ones_rate == pytest.approx(expected, abs=1e-13)


def test_grid_errors(scalar, unit_state_1):
    with pytest.raises(IncompatibleGrid):
        Grid(0.3, 3.0)
    with pytest.raises(IncompatibleGrid):
        Grid(1 / 4, 1.1)
    with pytest.raises(IncompatibleGrid):
        simulate(scalar, M2State.constant([1.0], [1.0], 101), dt=1 / 64, horizon=1.0)


def test_verify_null():
    traj = simulate(DelaySystem(A1=[[1.0]], b=[1.0]), null_state(1, 65), dt=1 / 64, horizon=3.0)
    assert verify_null(traj, 3.0) == (True, 0.0)
    with pytest.raises(HorizonShort):
        verify_null(traj, 3.5)


def test_csv_layout(scalar, unit_state_1):
    traj = simulate(scalar, M2State.constant([1.0], [1.0], 5), dt=1 / 4, horizon=1.0)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,z_1,u"
    assert len(lines) == 1 + 9


def test_zero_system_keeps_state():
    sys = DelaySystem(A1=[[0.0]], b=[1.0])
    traj = simulate(sys, M2State.constant([1.0], [0.0], 65), dt=1 / 64, horizon=2.0)
    np.testing.assert_array_equal(traj.z_forward, 1.0)
    assert verify_null(traj, 2.0) == (False, 1.0)


def test_zero_input_zero_state_stays_zero(kernel_system):
    traj = simulate(kernel_system, null_state(1, 257), dt=1 / 256, horizon=3.0)
    assert np.all(traj.z == 0)
