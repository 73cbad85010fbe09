"""Families of functions biorthogonal to exponentials exp(lam t) on [0, T].

A family is stored as moment functions m_k with
``int_0^T exp(lam_j t) m_k(t) dt = delta_jk``; the conjugates conj(m_k) are
biorthogonal to exp(lam_j t) in the L2 product.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SimpleSpectrumViolated, SingularPairSystem
from .signals import ExpPieces
from .spectral import lambert_branch


@dataclass
class BiorthogonalFamily:
    eigenvalues: np.ndarray
    members: list  # ExpPieces moment functions, aligned with eigenvalues
    horizon: float
    labels: list = None

    def moment_matrix(self, lams=None):
        """M[j, k] = int exp(lam_j t) m_k(t) dt."""
        lams = self.eigenvalues if lams is None else np.asarray(lams, dtype=complex)
        return np.column_stack([m.moments(lams) for m in self.members])

    def biorthogonality_error(self, lams=None, relative=False):
        """Largest deviation of the moment matrix from the identity pattern.

        With ``relative`` each column is divided by max(1, sum |coef|) of its
        member, which measures the defect against rounding in the member.
        """
        lams = self.eigenvalues if lams is None else np.asarray(lams, dtype=complex)
        M = self.moment_matrix(lams)
        target = np.zeros_like(M)
        for k, lam in enumerate(self.eigenvalues):
            hit = np.nonzero(np.abs(lams - lam) <= 1e-12 * (1 + abs(lam)))[0]
            target[hit, k] = 1.0
        err = np.abs(M - target)
        if relative:
            err = err / np.array([max(1.0, np.abs(m.coef).sum()) for m in self.members])[None, :]
        return float(err.max())

    def member_for(self, lam, tol=1e-9):
        k = int(np.argmin(np.abs(self.eigenvalues - lam)))
        if abs(self.eigenvalues[k] - lam) > tol * (1 + abs(lam)):
            raise KeyError(lam)
        return self.members[k]

    def function(self, k):
        """The k-th biorthogonal function conj(m_k)."""
        return self.members[k].conj()


def biortho_explicit(a, T, s_range):
    """Two-block family for z' = a z(t-1) + u on [0, T], T > 1.

    For each s the member combines g_s(t) = exp(-lam_s t) - exp(-lam_{s+1} t)
    on [0, 1] with a copy on [T-1, T]; the two weights make the moment 1 at
    lam_s and 0 at lam_{s+1}. All other moments vanish identically.
    """
    if T <= 1:
        raise InputError("horizon must exceed 1")
    s_lo, s_hi = int(s_range[0]), int(s_range[1])
    lams, members, labels = [], [], []
    for s in range(s_lo, s_hi + 1):
        ls, ln = lambert_branch(a, s), lambert_branch(a, s + 1)
        mu_s = 1 + 1 / ls
        E = np.array([[1, np.exp(ls * (T - 1))], [1, np.exp(ln * (T - 1))]])
        if abs(np.linalg.det(E)) <= 1e-14 * np.abs(E).max() ** 2:
            raise SingularPairSystem(f"pair system singular at s = {s}")
        c1, c2 = np.linalg.solve(E, [1 / mu_s, 0.0])
        block = ExpPieces([0, 0], [1, 1], [1, -1], [-ls, -ln])
        shifted = ExpPieces([T - 1, T - 1], [T, T], [1, -1], [-ls, -ln])
        members.append(block.scaled(c1) + shifted.scaled(c2))
        lams.append(ls)
        labels.append(s)
    return BiorthogonalFamily(np.array(lams), members, float(T), labels)


def exponential_polynomial(system):
    """Coefficients P[m, q] with det Delta(lam) = sum_m sum_q P[m, q] lam**q exp(-m lam).

    Valid for systems with point terms only (A0, A1; no kernels, A-1 = 0).
    Obtained by interpolating det(-lam I + A0 + x A1) on roots of unity.
    """
    n = system.n
    N = n + 1
    roots = np.exp(2j * np.pi * np.arange(N) / N)
    vals = np.array([[np.linalg.det(-lam * np.eye(n) + system.A0 + x * system.A1) for x in roots] for lam in roots])
    C = np.fft.fft2(vals) / (N * N)  # C[q, m]
    P = C.T.real.copy()
    P[np.abs(P) < 1e-13 * max(1.0, np.abs(P).max())] = 0.0
    return P


class QuasiPolynomialFamily:
    """Zero-spill moment functions for point-delay systems.

    With G(lam) = det Delta(lam) = sum_m p_m(lam) exp(-m lam), each member is
    a combination of n + 1 shifted copies of the inverse transform of
    G / prod(lam - pi_i) over the eigenvalue mu and n partner zeros. Its
    moments vanish at every zero of G other than mu, inside the truncation
    or not.
    """

    def __init__(self, system, T):
        if system.has_kernels or system.is_neutral:
            raise InputError("needs a retarded system with point delays only")
        self.system = system
        self.T = float(T)
        self.P = exponential_polynomial(system)
        nz = [m for m in range(self.P.shape[0]) if np.any(self.P[m] != 0)]
        self.n_eff = max(nz)
        if self.T <= self.n_eff:
            raise InputError("horizon must exceed the delay order of det Delta")
        n = system.n
        self.shifts = self.n_eff + np.arange(n + 1) * (self.T - self.n_eff) / n

    def _p(self, m, lam):
        return np.polyval(self.P[m][::-1], lam)

    def _dp(self, m, lam):
        coeffs = self.P[m][::-1]
        return np.polyval(np.polyder(coeffs), lam) if coeffs.size > 1 else 0.0

    def det_derivative(self, lam):
        return sum((self._dp(m, lam) - m * self._p(m, lam)) * np.exp(-m * lam) for m in range(self.P.shape[0]))

    def element(self, mu, partners):
        poles = np.array([mu] + list(partners), dtype=complex)
        npole = poles.size
        qp = np.array([np.prod(np.delete(poles[i] - poles, i)) for i in range(npole)])
        if np.any(np.abs(qp) < 1e-300):
            raise SimpleSpectrumViolated([mu], "coinciding partner zeros")
        gp = self.det_derivative(mu)
        if abs(gp) <= 1e-12:
            raise SimpleSpectrumViolated([mu])
        E = np.exp(np.outer(poles, self.shifts))
        rhs = np.zeros(npole, dtype=complex)
        rhs[0] = qp[0] / gp
        beta = np.linalg.solve(E, rhs)
        starts, ends, coefs, rates = [], [], [], []
        for bl, dl in zip(beta, self.shifts):
            for m in range(1, self.P.shape[0]):
                if not np.any(self.P[m] != 0):
                    continue
                for i, pi in enumerate(poles):
                    r = self._p(m, pi) / qp[i]
                    starts.append(dl - m)
                    ends.append(dl)
                    coefs.append(-bl * r)
                    rates.append(-pi)
        return ExpPieces(starts, ends, coefs, rates)


def partner_zeros(mu, pool, count):
    """The ``count`` zeros following mu away from the real axis.

    For Im mu > 0 these are the next zeros upward, for Im mu < 0 the mirror
    image of the choice for conj(mu). Real mu returns both choices.
    """
    pool = np.asarray(pool, dtype=complex)
    up = pool[pool.imag > abs(mu.imag) + 1e-12 * (1 + abs(mu))]
    up = up[np.lexsort((up.real, up.imag))][:count]
    if up.size < count:
        raise InputError(f"not enough zeros above {mu:.6g} to choose partners")
    if mu.imag > 0:
        return [up]
    if mu.imag < 0:
        return [np.conj(up)]
    return [up, np.conj(up)]


def quasipolynomial_family(system, T, eigenvalues, pool):
    """Members for ``eigenvalues`` with partners drawn from ``pool`` (all known zeros)."""
    fam = QuasiPolynomialFamily(system, T)
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    members = []
    for mu in eigenvalues:
        mu = complex(mu)
        if mu.imag < 0:
            upper = mu.conjugate()
            parts = partner_zeros(upper, pool, system.n)
            members.append(fam.element(upper, parts[0]).conj())
            continue
        choices = partner_zeros(mu, pool, system.n)
        elems = [fam.element(mu, p) for p in choices]
        if len(elems) == 2:
            members.append(elems[0].scaled(0.5) + elems[1].scaled(0.5))
        else:
            members.append(elems[0])
    return BiorthogonalFamily(eigenvalues, members, float(T))


def project_family(family, gram_solve):
    """Orthogonal projection of every member onto span{exp(conj(lam) t)}.

    ``gram_solve(rhs)`` must solve the Gram system of the exponentials. The
    projected member keeps the moments of the original one.
    """
    lams = family.eigenvalues
    T = family.horizon
    moments = family.moment_matrix(lams)  # column k: moments of member k
    members = []
    for k in range(len(lams)):
        coeffs = gram_solve(moments[:, k])
        members.append(ExpPieces(np.zeros(lams.size), np.full(lams.size, T), coeffs, np.conj(lams)))
    return BiorthogonalFamily(lams, members, T, family.labels)
