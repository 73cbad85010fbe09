"""Fixed-step trapezoidal integration of the delay system.

All delayed and distributed terms are reduced to a set of lag matrices C_j
acting on grid values, z'(t) ~ sum_j C_j z(t - j dt) + b u(t). The A2 term is
integrated by parts piece by piece, so no derivative of the path is needed,
and kernels are integrated exactly against the piecewise-linear interpolant
of z. Controls given as exponential pieces enter through exact cell
integrals.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonShort, IncompatibleGrid, InputError, NonSmoothHistory
from .model import M2State, _resample

DEFAULT_DT = 1 / 512


@dataclass(frozen=True)
class Grid:
    dt: float
    horizon: float

    def __post_init__(self):
        if not self.dt > 0:
            raise IncompatibleGrid("dt must be positive")
        per_unit = 1.0 / self.dt
        if abs(per_unit - round(per_unit)) > 1e-9 * per_unit:
            raise IncompatibleGrid(f"1/dt = {per_unit} is not an integer")
        if self.horizon < 0:
            raise InputError("horizon must be non-negative")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise IncompatibleGrid("horizon is not a multiple of dt")

    @property
    def per_unit(self):
        return int(round(1.0 / self.dt))

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def times(self):
        return np.arange(self.steps + 1) * (1.0 / self.per_unit)


@dataclass
class Trajectory:
    grid: Grid
    t: np.ndarray  # from -1 to horizon
    z: np.ndarray  # (len(t), n), history prepended
    u: np.ndarray  # control applied on [0, horizon]

    @property
    def t_forward(self):
        return self.t[self.grid.per_unit:]

    @property
    def z_forward(self):
        return self.z[self.grid.per_unit:]

    def at(self, time):
        idx = int(round((time + 1.0) / self.grid.dt))
        return self.z[idx]

    def to_csv(self):
        n = self.z.shape[1]
        header = "t," + ",".join(f"z_{i + 1}" for i in range(n)) + ",u"
        rows = [header]
        N = self.grid.per_unit
        for i, ti in enumerate(self.t):
            ui = self.u[i - N] if i >= N else 0.0
            rows.append(",".join(repr(float(v)) for v in (ti, *self.z[i], ui)))
        return "\n".join(rows) + "\n"


def _point_weights(theta, dt):
    """Lags and weights interpolating z(t + theta) linearly between grid points."""
    pos = -theta / dt
    j0 = int(math.floor(pos + 1e-9))
    frac = pos - j0
    if abs(frac) < 1e-9:
        return [(j0, 1.0)]
    return [(j0, 1.0 - frac), (j0 + 1, frac)]


def _kernel_weights(left, right, coeffs, dt, n_lags):
    """Exact integrals of a polynomial kernel against hat functions on the grid."""
    deg = coeffs.shape[0] - 1
    n = coeffs.shape[1]
    out = np.zeros((n_lags + 1, n, n))
    j_lo = max(int(math.floor(-right / dt)) - 1, 0)
    j_hi = min(int(math.ceil(-left / dt)) + 1, n_lags)
    for j in range(j_lo, j_hi):
        th_j, th_j1 = -j * dt, -(j + 1) * dt
        a, b = max(th_j1, left), min(th_j, right)
        if b <= a:
            continue
        mom = np.array([(b ** (q + 1) - a ** (q + 1)) / (q + 1) for q in range(deg + 2)])
        # int K * (theta - th_j1)/dt -> lag j ; int K * (th_j - theta)/dt -> lag j+1
        w_up = sum(coeffs[p] * (mom[p + 1] - th_j1 * mom[p]) for p in range(deg + 1)) / dt
        w_dn = sum(coeffs[p] * (th_j * mom[p] - mom[p + 1]) for p in range(deg + 1)) / dt
        out[j] += w_up
        out[j + 1] += w_dn
    return out


def lag_matrices(system, dt):
    """Dense array C[j] (j = 0..1/dt) with z'(t) ~ sum_j C[j] z(t - j dt)."""
    N = int(round(1.0 / dt))
    n = system.n
    C = np.zeros((N + 1, n, n))
    C[0] += system.A0
    C[N] += system.A1

    def add_point(theta, matrix):
        for j, w in _point_weights(theta, dt):
            C[min(j, N)] += w * matrix

    if system.A3 is not None:
        for left, right, coeffs in system.A3.pieces:
            C += _kernel_weights(left, right, coeffs, dt, N)
    if system.A2 is not None:
        for left, right, coeffs in system.A2.pieces:
            powers_r = right ** np.arange(coeffs.shape[0])
            powers_l = left ** np.arange(coeffs.shape[0])
            add_point(right, np.einsum("p,pij->ij", powers_r, coeffs))
            add_point(left, -np.einsum("p,pij->ij", powers_l, coeffs))
            if coeffs.shape[0] > 1:
                deriv = np.array([p * coeffs[p] for p in range(1, coeffs.shape[0])])
                C -= _kernel_weights(left, right, deriv, dt, N)
    return C


def _history(x0, N):
    cells = x0.cells
    if cells == N:
        return np.asarray(x0.z0, dtype=float)
    if cells % N == 0 or N % cells == 0:
        return _resample(np.asarray(x0.z0, dtype=float), N)
    raise IncompatibleGrid(f"history grid with {cells} cells does not match 1/dt = {N}")


def simulate(system, x0, control=None, grid=None, dt=DEFAULT_DT, horizon=None, smooth_history=False):
    """Trajectory of the system from x0 = (y, z0) under ``control``.

    ``control`` may be None (u = 0), a ControlSignal (exact cell integrals),
    a callable u(t) or an array of samples on the grid (trapezoidal rule).
    A feedback gain carried by the control adds p1 z(t-1) to u.
    """
    if grid is None:
        if horizon is None:
            horizon = getattr(control, "horizon", None)
            if horizon is None:
                raise InputError("horizon required")
            horizon = horizon + 1.0
        grid = Grid(dt, float(horizon))
    if x0.n != system.n:
        raise InputError("state dimension does not match the system")
    if system.is_neutral and not smooth_history:
        raise NonSmoothHistory("neutral systems need a differentiable history (pass smooth_history=True)")

    gain = getattr(control, "feedback_gain", None)
    work = system.with_feedback(gain) if gain is not None else system
    N, M, h = grid.per_unit, grid.steps, 1.0 / grid.per_unit
    n = system.n
    C = lag_matrices(work, h)
    lags = [j for j in range(N + 1) if np.any(C[j] != 0)]
    delayed = [j for j in lags if j > 0]
    Cd = C[delayed] if delayed else np.zeros((0, n, n))
    idx_d = np.array(delayed, dtype=int)

    z = np.zeros((N + M + 1, n))
    z[: N + 1] = _history(x0, N)
    z[N] = np.asarray(x0.y, dtype=float)

    t_fwd = np.arange(M + 1) * h
    edges = t_fwd
    if control is None:
        u = np.zeros(M + 1)
        U = np.zeros(M)
    elif hasattr(control, "cell_integrals"):
        u = control(t_fwd)
        U = control.cell_integrals(edges)
    elif callable(control):
        u = np.asarray(control(t_fwd), dtype=float)
        U = 0.5 * h * (u[:-1] + u[1:])
    else:
        u = np.asarray(control, dtype=float)
        if u.shape != (M + 1,):
            raise InputError("control samples must match the grid")
        U = 0.5 * h * (u[:-1] + u[1:])

    lhs = np.linalg.inv(np.eye(n) - 0.5 * h * C[0])
    Am1 = work.A_minus1
    neutral = work.is_neutral

    def delayed_sum(i):
        if not delayed:
            return np.zeros(n)
        return np.einsum("jab,jb->a", Cd, z[N + i - idx_d])

    g = C[0] @ z[N] + delayed_sum(0)
    for i in range(M):
        dnext = delayed_sum(i + 1)
        rhs = z[N + i] + 0.5 * h * (g + dnext) + work.b * U[i]
        if neutral:
            rhs = rhs + Am1 @ (z[i + 1] - z[i])
        z[N + i + 1] = lhs @ rhs
        g = C[0] @ z[N + i + 1] + dnext

    if gain is not None:
        u = u + z[: M + 1] @ gain
    t = np.arange(-N, M + 1) * h
    return Trajectory(grid, t, z, u)


def verify_null(traj, T, tol=1e-3):
    """(ok, residual) with residual = max ||z(t)||_inf over grid points in [T-1, T]."""
    if traj.t[-1] < T - 1e-12:
        raise HorizonShort(f"trajectory ends at {traj.t[-1]} < T = {T}")
    mask = (traj.t >= T - 1 - 1e-12) & (traj.t <= T + 1e-12)
    residual = float(np.abs(traj.z[mask]).max())
    return residual <= tol, residual


def null_state(n, grid_points=257):
    return M2State(np.zeros(n), np.zeros((grid_points, n)))
