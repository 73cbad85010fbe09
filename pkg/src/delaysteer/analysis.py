"""Rank tests and the controllability classification of a delay system."""

import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import eval_delta
from .spectral import Window, find_eigenvalues

RANK_TOL = 1e-10
YES, NO, UNDETERMINED = "yes", "no", "undetermined"
DEFAULT_WINDOW = Window(-3.0, 3.0, -3.0, 3.0)


def seed_from_env(default=0):
    value = os.environ.get("DELAYSTEER_SEED")
    return int(value) if value not in (None, "") else default


def _rank_deficient(matrix, tol=RANK_TOL):
    s = np.linalg.svd(matrix, compute_uv=False)
    return s[-1] <= tol * s[0] if s[0] > 0 else True


def pbh_pair_controllable(M, b, exclude_zero=False, tol=RANK_TOL):
    """Hautus test on the eigenvalues of M.

    Returns ``(True, None)`` or ``(False, mu)`` with a witness eigenvalue mu
    where rank[-mu I + M, b] < n. With ``exclude_zero`` the eigenvalue 0 is
    skipped.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1, 1)
    n = M.shape[0]
    scale = max(np.linalg.norm(M, 2), 1.0)
    for mu in np.linalg.eigvals(M):
        if exclude_zero and abs(mu) <= 1e-12 * scale:
            continue
        if _rank_deficient(np.hstack([-mu * np.eye(n) + M, b]), tol):
            return False, complex(mu)
    return True, None


def kalman_controllable(M, b, tol=1e-9):
    """Rank of the controllability matrix, used as an independent check."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = M.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(M @ cols[-1])
    C = np.column_stack(cols)
    s = np.linalg.svd(C, compute_uv=False)
    return bool(s[-1] > tol * s[0])


def pencil_nonsingular(A1, A_minus1, seed=None, tol=1e-10):
    """Whether det(A1 + lam A_minus1) is not identically zero.

    A polynomial of degree <= n vanishing at n + 1 distinct points is zero, so
    n + 1 random evaluations decide the question.
    """
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    Am1 = np.atleast_2d(np.asarray(A_minus1, dtype=float))
    n = A1.shape[0]
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    for lam in rng.uniform(-2.0, 2.0, n + 1):
        scale = max(np.linalg.norm(A1, 2) + abs(lam) * np.linalg.norm(Am1, 2), 1e-300) ** n
        if abs(np.linalg.det(A1 + lam * Am1)) > tol * scale:
            return True
    return False


@dataclass
class Completability:
    status: str
    p1: list = None
    p_minus1: list = None
    reason: str = ""


def completable(system, seed=None, draws=200):
    """Search for feedback rows p1, p-1 making (A1 + b p1, A-1 + b p-1) complete.

    Returns status "yes" with the gains, "no" when impossibility is proved
    (only for A-1 = 0, where rank[A1, b] < n rules it out) or "undetermined".
    """
    A1, Am1, b = system.A1, system.A_minus1, system.b
    n = system.n
    if not system.is_neutral:
        if np.linalg.matrix_rank(np.column_stack([A1, b]), tol=1e-10 * max(1, np.linalg.norm(A1))) < n:
            return Completability("no", reason="rank[A1, b] < n with A-1 = 0")
    candidates = [np.zeros(n)] + [np.eye(n)[i] for i in range(n)] + [-np.eye(n)[i] for i in range(n)]
    for p1 in candidates:
        for pm1 in candidates:
            if pencil_nonsingular(A1 + np.outer(b, p1), Am1 + np.outer(b, pm1), seed=seed):
                return Completability("yes", p1.tolist(), pm1.tolist())
    rng = np.random.default_rng(seed_from_env() if seed is None else seed)
    for _ in range(draws):
        p1 = rng.standard_normal(n)
        pm1 = rng.standard_normal(n)
        if pencil_nonsingular(A1 + np.outer(b, p1), Am1 + np.outer(b, pm1), seed=seed):
            return Completability("yes", p1.tolist(), pm1.tolist())
    return Completability(UNDETERMINED, reason=f"no gain among {draws} random draws")


def spectral_controllability(system, eigenvalues, tol=RANK_TOL):
    """rank[Delta(lam), b] = n at every listed eigenvalue.

    Returns ``(True, None)`` or ``(False, (lam, rank))`` for the first failure.
    """
    b = system.b.reshape(-1, 1)
    for e in eigenvalues:
        lam = getattr(e, "value", e)
        m = np.hstack([eval_delta(system, lam), b])
        s = np.linalg.svd(m, compute_uv=False)
        rank = int(np.sum(s > tol * s[0]))
        if rank < system.n:
            return False, (complex(lam), rank)
    return True, None


@dataclass
class ClassificationReport:
    complete: bool
    completable: str
    completing_gains: dict
    cond_A1_all_mu: bool
    cond_A1_nonzero_mu: bool
    pair_A1_b_controllable: bool
    spectrally_controllable_in_window: bool
    exactly_null_controllable: str
    completely_stabilizable: str
    window: list
    eigenvalues: list
    witnesses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def classify(system, window=None, seed=None):
    """Classify a system against the structural conditions.

    ``cond_A1_all_mu`` and ``cond_A1_nonzero_mu`` are the Hautus conditions
    on the neutral matrix A-1 (all eigenvalues / nonzero eigenvalues).
    """
    window = window or DEFAULT_WINDOW
    witnesses = {}
    notes = []
    complete = pencil_nonsingular(system.A1, system.A_minus1, seed=seed)
    comp = completable(system, seed=seed)
    cond3, w3 = pbh_pair_controllable(system.A_minus1, system.b)
    cond5, w5 = pbh_pair_controllable(system.A_minus1, system.b, exclude_zero=True)
    pair, wp = pbh_pair_controllable(system.A1, system.b)
    if w3 is not None:
        witnesses["cond_A1_all_mu"] = _cplx(w3)
    if w5 is not None:
        witnesses["cond_A1_nonzero_mu"] = _cplx(w5)
    if wp is not None:
        witnesses["pair_A1_b_controllable"] = _cplx(wp)

    eigs = find_eigenvalues(system, window)
    spectral, ws = spectral_controllability(system, eigs)
    if ws is not None:
        witnesses["spectrally_controllable_in_window"] = {"lambda": _cplx(ws[0]), "rank": ws[1]}
    notes.append("spectral controllability is verified only at eigenvalues inside the window")

    support_ok = system.kernel_support_left > -1.0
    if not spectral:
        enc = NO
    elif system.is_neutral and abs(np.linalg.det(system.A_minus1)) > 1e-12:
        enc = NO
        notes.append("det A-1 != 0: null-controllable states are confined to the generator domain")
    elif not system.is_neutral and support_ok and pair:
        enc = YES
    else:
        enc = UNDETERMINED
    stab = YES if (spectral and cond5) else NO

    return ClassificationReport(
        complete=complete,
        completable=comp.status,
        completing_gains={"p1": comp.p1, "p_minus1": comp.p_minus1} if comp.status == YES else {},
        cond_A1_all_mu=cond3,
        cond_A1_nonzero_mu=cond5,
        pair_A1_b_controllable=pair,
        spectrally_controllable_in_window=spectral,
        exactly_null_controllable=enc,
        completely_stabilizable=stab,
        window=window.as_list(),
        eigenvalues=[e.to_dict() for e in eigs],
        witnesses=witnesses,
        notes=notes,
    )


def _cplx(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}
