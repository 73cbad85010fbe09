"""Steering controls from the moment problem.

For an initial state x0 and horizon T the control must satisfy, for every
eigenvalue lam with adjoint eigenvector psi_lam normalised by <b, y_lam> = 1,

    int_0^T exp(lam t) v(t) dt = s_lam = exp(lam T) <x0, psi_lam>,

and the steering control is u(t) = -v(T - t).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import pbh_pair_controllable, seed_from_env
from .biortho import project_family, quasipolynomial_family
from .errors import (
    BoundaryZero, HorizonTooShort, IllConditioned, InputError, MultipleEigenvalue,
    NeutralNotSupported, NonConvergence, NotControllablePair, PlacementIllConditioned,
    RealnessViolated, SimpleSpectrumViolated, TruncationDiverging,
)
from .model import m2_inner, psi_eigenvector
from .signals import ExpPieces
from .spectral import Window, count_zeros, find_eigenvalues

SVD_CUTOFF = 1e-12
REALNESS_TOL = 1e-9


@dataclass
class CanonicalForm:
    T: np.ndarray
    T_inv: np.ndarray
    p1: np.ndarray
    a_values: np.ndarray
    system: object


def canonicalize(system, a_values=None):
    """Feedback p1 and coordinates T with T^-1 (A1 + b p1) T = diag(a), T^-1 b = 1.

    The closed-loop spectrum is placed by Ackermann's formula; default a_i = i.
    """
    n = system.n
    a = np.arange(1.0, n + 1) if a_values is None else np.asarray(a_values, dtype=float)
    if a.size != n or np.unique(a).size != n:
        raise InputError("need n distinct real target values")
    ok, witness = pbh_pair_controllable(system.A1, system.b)
    if not ok:
        raise NotControllablePair(f"(A1, b) not controllable; Hautus test fails at {witness:.6g}")
    A1, b = system.A1, system.b
    C = np.column_stack([np.linalg.matrix_power(A1, k) @ b for k in range(n)])
    cond = np.linalg.cond(C)
    if cond > 1e12:
        raise PlacementIllConditioned(f"controllability matrix condition {cond:.2e}")
    phi = np.eye(n)
    for ai in a:
        phi = phi @ (A1 - ai * np.eye(n))
    k = np.linalg.solve(C.T, np.eye(n)[-1]) @ phi
    p1 = -k
    closed = A1 + np.outer(b, p1)
    vals, vecs = np.linalg.eig(closed)
    order = [int(np.argmin(np.abs(vals - ai))) for ai in a]
    V = np.real_if_close(vecs[:, order])
    w = np.linalg.solve(V, b)
    if np.any(np.abs(w) < 1e-12):
        raise PlacementIllConditioned("b has no component along some eigenvector")
    T = np.real(V * w[None, :])
    Ti = np.linalg.inv(T)
    return CanonicalForm(T, Ti, p1, a, system.with_feedback(p1).transformed(T))


@dataclass
class MomentProblem:
    eigenvalues: np.ndarray
    targets: np.ndarray
    horizon: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=complex)
        if lam.size > 1:
            d = np.abs(lam[:, None] - lam[None, :])
            np.fill_diagonal(d, np.inf)
            if d.min() < 1e-8:
                raise MultipleEigenvalue("eigenvalues closer than 1e-8")
        self.eigenvalues = lam
        self.targets = np.asarray(self.targets, dtype=complex)

    def gram(self):
        lam = self.eigenvalues
        c = lam[:, None] + np.conj(lam)[None, :]
        T = self.horizon
        small = np.abs(c * T) < 1e-8
        safe = np.where(small, 1.0, c)
        return np.where(small, T * (1 + c * T / 2), np.expm1(c * T) / safe)

    def residual(self, v):
        """max |moment - target| / (1 + max |target|) for a moment function v."""
        m = v.moments(self.eigenvalues)
        return float(np.abs(m - self.targets).max() / (1 + np.abs(self.targets).max()))


def moment_targets(system, x0, T, eigenvalues):
    """Targets s_lam = exp(lam T) <x0, psi_lam> with <b, y_lam> = 1."""
    lams = np.array([getattr(e, "value", e) for e in eigenvalues], dtype=complex)
    for e in eigenvalues:
        if getattr(e, "multiplicity", 1) > 1:
            raise MultipleEigenvalue(f"eigenvalue {e.value:.6g} has multiplicity {e.multiplicity}")
    points = x0.z0.shape[0]
    s = np.array([
        np.exp(lam * T) * m2_inner(x0, psi_eigenvector(system, lam, grid_points=points))
        for lam in lams
    ])
    # exact conjugate symmetry for real data
    if np.isrealobj(x0.y) and np.isrealobj(x0.z0):
        for i, lam in enumerate(lams):
            if lam.imag > 0:
                j = int(np.argmin(np.abs(lams - lam.conjugate())))
                if abs(lams[j] - lam.conjugate()) <= 1e-9 * (1 + abs(lam)):
                    avg = 0.5 * (s[i] + np.conj(s[j]))
                    s[i], s[j] = avg, np.conj(avg)
            elif lam.imag == 0:
                s[i] = s[i].real
    return MomentProblem(lams, s, float(T))


@dataclass
class ControlSignal:
    """Steering control u on [0, T] as exponential pieces, plus metadata."""

    horizon: float
    pieces: ExpPieces
    method: str
    eigenvalues: np.ndarray
    targets: np.ndarray
    coefficients: np.ndarray = None
    residual: float = None
    condition: float = None
    effective_rank: int = None
    feedback_gain: np.ndarray = None
    window: list = None
    truncation: int = None
    imag_defect: float = 0.0
    extra: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.pieces(t).real

    def samples(self, dt=1 / 512):
        steps = int(round(self.horizon / dt))
        t = np.linspace(0.0, steps * dt, steps + 1)
        return t, self(t)

    def cell_integrals(self, edges):
        return self.cell_integrals_complex(edges).real

    def cell_integrals_complex(self, edges):
        return self.pieces.cell_integrals(edges)

    def moment_function(self):
        """v(t) = -u(T - t)."""
        return self.pieces.reflected(self.horizon)

    def l2_distance(self, other):
        diff = (self.pieces + other.pieces.scaled(-1)).merged()
        return diff.l2_norm()

    def metadata(self):
        return {
            "version": __version__,
            "method": self.method,
            "horizon": self.horizon,
            "truncation": self.truncation,
            "window": self.window,
            "eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in self.eigenvalues],
            "targets": [{"re": float(z.real), "im": float(z.imag)} for z in self.targets],
            "coefficients": None if self.coefficients is None
            else [{"re": float(z.real), "im": float(z.imag)} for z in self.coefficients],
            "residual": self.residual,
            "condition": self.condition,
            "effective_rank": self.effective_rank,
            "feedback_gain": None if self.feedback_gain is None else [float(x) for x in self.feedback_gain],
            "imag_defect": self.imag_defect,
            "tolerances": {"svd_cutoff": SVD_CUTOFF, "realness": REALNESS_TOL},
            "extra": self.extra,
        }

    def to_dict(self):
        out = self.metadata()
        out["pieces"] = self.pieces.to_list()
        return out

    @classmethod
    def from_dict(cls, d):
        cplx = lambda items: None if items is None else np.array([complex(z["re"], z["im"]) for z in items])
        return cls(
            horizon=float(d["horizon"]),
            pieces=ExpPieces.from_list(d["pieces"]),
            method=d.get("method", "unknown"),
            eigenvalues=cplx(d.get("eigenvalues", [])),
            targets=cplx(d.get("targets", [])),
            coefficients=cplx(d.get("coefficients")),
            residual=d.get("residual"),
            condition=d.get("condition"),
            effective_rank=d.get("effective_rank"),
            feedback_gain=None if d.get("feedback_gain") is None else np.array(d["feedback_gain"], dtype=float),
            window=d.get("window"),
            truncation=d.get("truncation"),
            imag_defect=d.get("imag_defect", 0.0),
            extra=d.get("extra", {}),
        )


def _check_real(v, horizon):
    t = np.linspace(0.0, horizon, 2049)
    vals = v(t)
    defect = float(np.abs(vals.imag).max())
    if defect > REALNESS_TOL * (1 + np.abs(vals.real).max()):
        raise RealnessViolated(f"imaginary part {defect:.2e} in the synthesised control")
    return defect


def _solve_gram(mp):
    G = mp.gram()
    U, s, Vh = np.linalg.svd(G)
    keep = s > SVD_CUTOFF * s[0]
    rank = int(keep.sum())

    def solve(rhs):
        return Vh[keep].conj().T @ ((U[:, keep].conj().T @ rhs) / s[keep])

    return solve, float(s[0] / s[-1]) if s[-1] > 0 else math.inf, rank


def min_norm_control(mp):
    """Minimum-L2 solution of the truncated moment problem.

    The solution lies in span{exp(conj(lam) t)}; its coefficients solve the
    Gram system by a truncated SVD (cut at 1e-12 sigma_max).
    """
    n_eigs = mp.eigenvalues.size
    solve, cond, rank = _solve_gram(mp)
    coeffs = solve(mp.targets)
    v = ExpPieces(np.zeros(n_eigs), np.full(n_eigs, mp.horizon), coeffs, np.conj(mp.eigenvalues))
    residual = mp.residual(v)
    if rank < n_eigs and residual > 1e-6:
        raise IllConditioned(f"Gram matrix rank {rank} of {n_eigs}, residual {residual:.2e}", rank)
    defect = _check_real(v, mp.horizon)
    return ControlSignal(
        horizon=mp.horizon, pieces=v.reflected(mp.horizon), method="min_norm",
        eigenvalues=mp.eigenvalues, targets=mp.targets, coefficients=coeffs,
        residual=residual, condition=cond, effective_rank=rank, imag_defect=defect,
        truncation=n_eigs,
    )


def series_control(mp, family, tol=1e-8):
    """v = sum_k s_k m_k for a biorthogonal family of moment functions."""
    members = [family.member_for(lam) for lam in mp.eigenvalues]
    sub = type(family)(mp.eigenvalues, members, family.horizon)
    err = sub.biorthogonality_error(relative=True)
    if err > tol:
        raise InputError(f"family not biorthogonal to {tol:g} (defect {err:.2e})")
    order = np.argsort(np.abs(mp.eigenvalues.imag), kind="stable")
    t = np.linspace(0.0, mp.horizon, 1025)
    partial = np.zeros(t.size, dtype=complex)
    norms = []
    for k in order:
        partial = partial + mp.targets[k] * members[k](t)
        sq = np.abs(partial) ** 2
        norms.append(float(np.sqrt((t[1] - t[0]) * (sq.sum() - 0.5 * (sq[0] + sq[-1])))))
    tail = norms[-6:]
    if len(tail) == 6 and all(b > a for a, b in zip(tail, tail[1:])) and tail[-1] > 10 * tail[0]:
        raise TruncationDiverging("partial sums grow over the last terms")
    v = ExpPieces.concat([m.scaled(s) for m, s in zip(members, mp.targets)])
    defect = _check_real(v, mp.horizon)
    return ControlSignal(
        horizon=mp.horizon, pieces=v.reflected(mp.horizon), method="series",
        eigenvalues=mp.eigenvalues, targets=mp.targets, residual=mp.residual(v),
        imag_defect=defect, truncation=mp.eigenvalues.size,
    )


def projected_series_control(mp, family):
    """Series over the family projected onto the span of the truncated exponentials."""
    solve, cond, rank = _solve_gram(mp)
    members = [family.member_for(lam) for lam in mp.eigenvalues]
    sub = type(family)(mp.eigenvalues, members, family.horizon)
    ctrl = series_control(mp, project_family(sub, solve))
    ctrl.condition, ctrl.effective_rank = cond, rank
    return ctrl


def _real_part_bound(system):
    """Right edge beyond which det Delta has no zeros."""
    if system.has_kernels:
        k2 = system.A2.l1_norm() if system.A2 is not None else 0.0
        k3 = system.A3.l1_norm() if system.A3 is not None else 0.0
        if k2 >= 1:
            return 10.0
        return (np.linalg.norm(system.A0, 2) + np.linalg.norm(system.A1, 2) + k3) / (1 - k2) + 1.0
    return np.linalg.norm(system.A0, 2) + np.linalg.norm(system.A1, 2) + 1.0


def _left_edge(system, height):
    eig = np.abs(np.linalg.eigvals(system.A1))
    eig = eig[eig > 1e-12]
    amin = eig.min() if eig.size else 1.0
    left = -math.log(max(1.5 * height / amin, 1.0)) - 2.0
    if system.has_kernels:
        reach = max(abs(system.kernel_support_left), 0.05)
        left = min(left, -math.log(1 + height) / reach - 2.0)
    return left


def collect_eigenvalues(system, count, extra=0, max_rounds=12):
    """The ``count`` zeros of smallest |Im| (closed under conjugation), plus the
    full list of zeros found in the search window, and that window."""
    n = system.n
    height = 2 * math.pi * (count / (2 * n) + extra + 2) + 2.0
    right = _real_part_bound(system)
    for _ in range(max_rounds):
        left = _left_edge(system, height)
        try:
            for _ in range(20):
                strip = Window(left - 3.0, left, -height, height)
                if count_zeros(system, strip) == 0:
                    break
                left -= 3.0
            window = Window(left, right, -height, height)
            eigs = find_eigenvalues(system, window)
        except BoundaryZero:
            height *= 1.013
            continue
        vals = eigs.values
        order = np.lexsort((vals.real, np.abs(vals.imag)))
        if vals.size < count + 2 * (extra + 1):
            height *= 1.5
            continue
        chosen = list(order[:count])
        last = vals[chosen[-1]]
        if last.imag != 0:
            mate = int(np.argmin(np.abs(vals - last.conjugate())))
            if mate not in chosen:
                chosen.append(mate)
        top = np.abs(vals[chosen].imag).max()
        above = np.sum(vals.imag > top + 1e-9)
        if above < extra + 1:
            height *= 1.5
            continue
        picked = [eigs[i] for i in chosen]
        picked.sort(key=lambda p: (p.value.imag, p.value.real))
        return picked, eigs, window
    raise NonConvergence("could not enclose the requested eigenvalues")


def synthesize(system, x0, T, truncation=21, method="auto", feedback="none", seed=None):
    """Control on [0, T] steering x0 towards zero.

    ``truncation`` is the number of eigenvalues per branch (n * truncation in
    total). ``method`` is "auto", "series" (zero-spill biorthogonal series,
    point-delay systems only) or "min_norm". ``feedback`` may be "canonical"
    or "perturb" to pre-apply a gain p1 on z(t-1) (the control then includes
    u_fb = p1 z(t-1), carried in ``feedback_gain``).
    """
    n = system.n
    if system.is_neutral:
        raise NeutralNotSupported("synthesis covers retarded systems (A-1 = 0)")
    if T <= n:
        raise HorizonTooShort(f"horizon {T} must exceed n = {n}")
    if x0.n != n:
        raise InputError("state dimension does not match the system")
    ok, witness = pbh_pair_controllable(system.A1, system.b)
    if not ok:
        raise NotControllablePair(f"(A1, b) fails the Hautus test at {witness:.6g}")

    gain = None
    work = system
    if feedback == "canonical":
        gain = canonicalize(system).p1
    elif feedback == "perturb":
        rng = np.random.default_rng(seed_from_env() if seed is None else seed)
        g = rng.standard_normal(n)
        gain = 1e-3 * g / np.linalg.norm(g)
    elif feedback != "none":
        raise InputError(f"unknown feedback option {feedback!r}")
    if gain is not None:
        work = system.with_feedback(gain)

    if method == "auto":
        method = "min_norm" if work.has_kernels else "series"
    if method not in ("series", "min_norm"):
        raise InputError(f"unknown method {method!r}")

    picked, pool, window = collect_eigenvalues(work, n * truncation, extra=n if method == "series" else 0)
    clusters = [p.value for p in pool if p.multiplicity > 1]
    if clusters:
        raise SimpleSpectrumViolated(
            clusters,
            f"multiple eigenvalues {clusters[:4]}; rerun with feedback='perturb' or 'canonical'",
        )
    mp = moment_targets(work, x0, T, picked)
    if method == "series":
        family = quasipolynomial_family(work, T, mp.eigenvalues, pool.values)
        ctrl = series_control(mp, family)
    else:
        ctrl = min_norm_control(mp)
    ctrl.window = window.as_list()
    ctrl.truncation = truncation
    ctrl.feedback_gain = gain
    ctrl.extra = {"eigenvalue_count": int(mp.eigenvalues.size), "feedback": feedback}
    return ctrl
