"""System description, characteristic matrix and the state space inner product.

The system is

    z'(t) - Am1 z'(t-1) = A1 z(t-1) + A0 z(t)
                          + int_{-1}^{0} [A2(s) z'(t+s) + A3(s) z(t+s)] ds + b u(t)

with piecewise polynomial kernels A2, A3 supported in [alpha, 0], alpha > -1.
States live in C^n x L2([-1, 0]; C^n) and are stored as a head vector plus
samples of the history on a uniform grid.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, KernelEmpty, NotSpectrallyControllableAt

DEFAULT_GRID_POINTS = 257  # 256 cells per unit delay


def polyexp_moments(left, right, c, pmax):
    """Return ``I_p = int_left^right s**p exp(c s) ds`` for p = 0..pmax.

    ``left``, ``right`` and ``c`` broadcast together; the result has the
    broadcast shape plus a trailing axis of length pmax + 1. A Taylor series
    is used when |c| * max(|left|, |right|) is small and the integration by
    parts recursion otherwise.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    c = np.asarray(c, dtype=complex)
    left, right, c = np.broadcast_arrays(left, right, c)
    shape = c.shape
    l, r, cc = left.ravel(), right.ravel(), c.ravel()
    out = np.zeros((cc.size, pmax + 1), dtype=complex)
    reach = np.maximum(np.abs(l), np.abs(r))
    small = np.abs(cc) * reach <= max(1.0, float(pmax))

    if small.any():
        ls, rs, cs = l[small], r[small], cc[small]
        nterms = 60
        term = np.ones_like(cs)
        acc = np.zeros((cs.size, pmax + 1), dtype=complex)
        for m in range(nterms):
            if m > 0:
                term = term * cs / m
            for p in range(pmax + 1):
                k = p + m + 1
                acc[:, p] += term * (rs ** k - ls ** k) / k
        out[small] = acc

    big = ~small
    if big.any():
        lb, rb, cb = l[big], r[big], cc[big]
        el = np.exp(cb * lb)
        er = np.exp(cb * rb)
        prev = el * np.expm1(cb * (rb - lb)) / cb
        out[big, 0] = prev
        for p in range(1, pmax + 1):
            prev = (rb ** p * er - lb ** p * el - p * prev) / cb
            out[big, p] = prev
    return out.reshape(shape + (pmax + 1,))


@dataclass
class MatrixKernel:
    """Piecewise polynomial n x n kernel on [support_left, 0].

    Each piece is ``(left, right, coeffs)`` with ``coeffs[p]`` the n x n
    coefficient of ``s**p`` (absolute variable s, not shifted).
    """

    support_left: float
    pieces: list

    def __post_init__(self):
        if not self.pieces:
            raise InputError("kernel needs at least one piece")
        alpha = float(self.support_left)
        if not -1.0 < alpha <= 0.0:
            raise InputError("kernel support must start in (-1, 0]")
        clean = []
        for left, right, coeffs in self.pieces:
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]:
                raise InputError("kernel coefficients must have shape (degree+1, n, n)")
            left, right = float(left), float(right)
            if not (alpha - 1e-12 <= left < right <= 1e-12):
                raise InputError(f"kernel piece [{left}, {right}] outside [{alpha}, 0]")
            clean.append((left, min(right, 0.0), coeffs))
        clean.sort(key=lambda pc: pc[0])
        for (_, r0, _), (l1, _, _) in zip(clean, clean[1:]):
            if l1 < r0 - 1e-12:
                raise InputError("kernel pieces overlap")
        self.support_left = alpha
        self.pieces = clean

    @property
    def n(self):
        return self.pieces[0][2].shape[1]

    @property
    def degree(self):
        return max(c.shape[0] for _, _, c in self.pieces) - 1

    @classmethod
    def constant(cls, matrix, left=-1.0 + 1e-9, right=0.0):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(left, [(left, right, m[None])])

    @classmethod
    def from_samples(cls, theta, values, support_left=None):
        """Piecewise-linear kernel through samples ``values[k]`` at ``theta[k]``."""
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if theta.ndim != 1 or theta.size < 2 or values.shape[0] != theta.size:
            raise InputError("sampled kernel needs matching theta and values (at least two samples)")
        if np.any(np.diff(theta) <= 0):
            raise InputError("kernel sample points must increase")
        pieces = []
        for k in range(theta.size - 1):
            l, r = theta[k], theta[k + 1]
            slope = (values[k + 1] - values[k]) / (r - l)
            pieces.append((l, r, np.stack([values[k] - slope * l, slope])))
        left = theta[0] if support_left is None else support_left
        return cls(left, pieces)

    def evaluate(self, theta):
        """Kernel values at ``theta``; pieces are closed on the left, 0 included."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape + (self.n, self.n))
        for left, right, coeffs in self.pieces:
            mask = (theta >= left) & ((theta < right) | ((right == 0.0) & (theta <= 0.0)))
            if not mask.any():
                continue
            t = theta[mask]
            powers = t[..., None] ** np.arange(coeffs.shape[0])
            out[mask] = np.einsum("kp,pij->kij", powers, coeffs)
        return out

    def transform(self, lam, shift=0):
        """``sum_p C_p int s**p exp(lam s) ds`` per piece, with p raised by ``shift``.

        ``shift=1`` gives the lambda-derivative of the plain transform.
        """
        lam = np.asarray(lam, dtype=complex)
        out = np.zeros(lam.shape + (self.n, self.n), dtype=complex)
        for left, right, coeffs in self.pieces:
            deg = coeffs.shape[0] - 1
            mom = polyexp_moments(left, right, lam, deg + shift)
            out += np.einsum("...p,pij->...ij", mom[..., shift:], coeffs)
        return out

    def l1_norm(self):
        total = 0.0
        for left, right, coeffs in self.pieces:
            reach = max(abs(left), abs(right), 1.0)
            total += (right - left) * sum(np.abs(c).max() * reach ** p for p, c in enumerate(coeffs))
        return total

    def breakpoints(self):
        pts = set()
        for left, right, _ in self.pieces:
            pts.update((left, right))
        return sorted(pts)

    def to_dict(self):
        return {
            "support_left": self.support_left,
            "pieces": [
                {"interval": [left, right], "coeffs": coeffs.tolist()}
                for left, right, coeffs in self.pieces
            ],
        }


def _as_matrix(value, n, name):
    if value is None:
        return np.zeros((n, n))
    m = np.asarray(value, dtype=float)
    if m.ndim == 0 and n == 1:
        m = m.reshape(1, 1)
    if m.shape != (n, n):
        raise InputError(f"{name} must be {n}x{n}, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


@dataclass
class DelaySystem:
    """Real coefficient data of a single-input delay system."""

    A1: np.ndarray
    b: np.ndarray
    A0: np.ndarray = None
    A_minus1: np.ndarray = None
    A2: MatrixKernel = None
    A3: MatrixKernel = None
    n: int = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size == 0:
            raise InputError("b must be non-empty")
        n = b.size
        self.n = n
        self.b = b
        self.A1 = _as_matrix(self.A1, n, "A1")
        self.A0 = _as_matrix(self.A0, n, "A0")
        self.A_minus1 = _as_matrix(self.A_minus1, n, "A_minus1")
        for name in ("A2", "A3"):
            kern = getattr(self, name)
            if kern is not None and kern.n != n:
                raise InputError(f"{name} kernel is {kern.n}x{kern.n}, expected {n}x{n}")

    @property
    def is_neutral(self):
        return bool(np.any(self.A_minus1 != 0))

    @property
    def has_kernels(self):
        return self.A2 is not None or self.A3 is not None

    @property
    def kernel_support_left(self):
        lefts = [k.support_left for k in (self.A2, self.A3) if k is not None]
        return min(lefts) if lefts else 0.0

    def with_feedback(self, p1):
        """System with ``A1`` replaced by ``A1 + b p1``."""
        return DelaySystem(
            A1=self.A1 + np.outer(self.b, p1), b=self.b, A0=self.A0,
            A_minus1=self.A_minus1, A2=self.A2, A3=self.A3,
        )

    def transformed(self, T):
        """System in coordinates z = T w (kernels are carried along)."""
        Ti = np.linalg.inv(T)

        def conj_kernel(kern):
            if kern is None:
                return None
            pieces = [(l, r, np.einsum("ij,pjk,kl->pil", Ti, c, T)) for l, r, c in kern.pieces]
            return MatrixKernel(kern.support_left, pieces)

        return DelaySystem(
            A1=Ti @ self.A1 @ T, b=Ti @ self.b, A0=Ti @ self.A0,
            A_minus1=Ti @ self.A_minus1 @ T, A2=conj_kernel(self.A2), A3=conj_kernel(self.A3),
        )

    def to_dict(self):
        out = {
            "n": self.n,
            "A_minus1": self.A_minus1.tolist(),
            "A1": self.A1.tolist(),
            "A0": self.A0.tolist(),
            "b": self.b.tolist(),
        }
        for name in ("A2", "A3"):
            kern = getattr(self, name)
            if kern is not None:
                out[name] = kern.to_dict()
        return out


def eval_delta(system, lam):
    """Characteristic matrix Delta(lam); vectorised over an array of lam."""
    lam = np.asarray(lam, dtype=complex)
    n = system.n
    e = np.exp(-lam)[..., None, None]
    lm = lam[..., None, None]
    out = -lm * np.eye(n) + system.A0 + e * system.A1 + lm * e * system.A_minus1
    if system.A2 is not None:
        out = out + lm * system.A2.transform(lam)
    if system.A3 is not None:
        out = out + system.A3.transform(lam)
    return out


def delta_derivative(system, lam):
    """d Delta / d lam, in closed form."""
    lam = np.asarray(lam, dtype=complex)
    n = system.n
    e = np.exp(-lam)[..., None, None]
    lm = lam[..., None, None]
    out = -np.eye(n) * np.ones_like(lm) - e * system.A1 + (1 - lm) * e * system.A_minus1
    if system.A2 is not None:
        out = out + system.A2.transform(lam) + lm * system.A2.transform(lam, shift=1)
    if system.A3 is not None:
        out = out + system.A3.transform(lam, shift=1)
    return out


def char_det(system, lam):
    """det Delta(lam)."""
    return np.linalg.det(eval_delta(system, lam))


def log_det_derivative(system, lam):
    """(det Delta)'/det Delta = trace(Delta^{-1} Delta')."""
    d = eval_delta(system, lam)
    dp = delta_derivative(system, lam)
    return np.trace(np.linalg.solve(d, dp), axis1=-2, axis2=-1)


def _scale_norms(system):
    key = (id(system.A0), id(system.A1), id(system.A_minus1), id(system.A2), id(system.A3))
    cached = system.__dict__.get("_norm_cache")
    if cached is None or cached[0] != key:
        knorm = sum(k.l1_norm() for k in (system.A2, system.A3) if k is not None)
        norms = tuple(float(np.linalg.norm(m, 2)) for m in (system.A0, system.A1, system.A_minus1)) + (knorm,)
        cached = (key, norms)
        system.__dict__["_norm_cache"] = cached
    return cached[1]


def det_scale(system, lam):
    """Typical size of det Delta(lam), used to make tolerances relative."""
    lam = np.asarray(lam, dtype=complex)
    a = np.abs(lam)
    e = np.exp(-lam.real)
    n0, n1, nm1, knorm = _scale_norms(system)
    s = a + n0 + e * n1 + a * e * nm1
    if system.has_kernels:
        s = s + knorm * (1 + a) * np.exp(abs(system.kernel_support_left) * np.maximum(0.0, -lam.real))
    return np.maximum(s, 1.0) ** system.n


@dataclass
class M2State:
    """Head vector ``y`` and history samples ``z0`` on a uniform grid of [-1, 0]."""

    y: np.ndarray
    z0: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y))
        z0 = np.asarray(self.z0)
        if z0.ndim == 1:
            z0 = z0[:, None] if y.size == 1 else z0[None, :]
        if z0.ndim != 2 or z0.shape[1] != y.size:
            raise InputError("history samples must have shape (points, n)")
        if z0.shape[0] < 2:
            raise InputError("history needs at least two samples")
        self.y = y
        self.z0 = z0

    @property
    def n(self):
        return self.y.size

    @property
    def cells(self):
        return self.z0.shape[0] - 1

    @property
    def theta(self):
        return np.linspace(-1.0, 0.0, self.cells + 1)

    @classmethod
    def from_function(cls, y, func, grid_points=DEFAULT_GRID_POINTS):
        theta = np.linspace(-1.0, 0.0, grid_points)
        vals = np.array([np.atleast_1d(func(t)) for t in theta])
        return cls(np.atleast_1d(np.asarray(y, dtype=float)), vals)

    @classmethod
    def constant(cls, y, value, grid_points=DEFAULT_GRID_POINTS):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.atleast_1d(np.asarray(y, dtype=float)), np.tile(value, (grid_points, 1)))

    def to_dict(self):
        return {"y": self.y.tolist(), "z0": self.z0.tolist()}


@dataclass
class AdjointEigenvector:
    """Eigenvector of the adjoint generator for eigenvalue conj(lam)."""

    lam: complex
    y_lambda: np.ndarray
    tail: np.ndarray

    @property
    def y(self):
        return self.y_lambda

    @property
    def z0(self):
        return self.tail


def _resample(samples, cells):
    old = np.linspace(-1.0, 0.0, samples.shape[0])
    new = np.linspace(-1.0, 0.0, cells + 1)
    out = np.empty((cells + 1, samples.shape[1]), dtype=samples.dtype)
    for j in range(samples.shape[1]):
        col = samples[:, j]
        if np.iscomplexobj(col):
            out[:, j] = np.interp(new, old, col.real) + 1j * np.interp(new, old, col.imag)
        else:
            out[:, j] = np.interp(new, old, col)
    return out


def m2_inner(x1, x2):
    """``<x1, x2> = y1 . conj(y2) + int_{-1}^0 z1 . conj(z2)``, trapezoidal rule.

    When the two grids differ the finer one is interpolated onto the coarser.
    """
    f1, f2 = np.asarray(x1.z0), np.asarray(x2.z0)
    if f1.shape[0] != f2.shape[0]:
        cells = min(f1.shape[0], f2.shape[0]) - 1
        f1, f2 = _resample(f1, cells), _resample(f2, cells)
    h = 1.0 / (f1.shape[0] - 1)
    prod = np.sum(f1 * np.conj(f2), axis=1)
    integral = h * (prod.sum() - 0.5 * (prod[0] + prod[-1]))
    return complex(np.dot(np.asarray(x1.y), np.conj(np.asarray(x2.y))) + integral)


def _null_vector(matrix, what):
    _, s, vh = np.linalg.svd(matrix)
    smax = s[0]
    if s[-1] > 1e-8 * smax and smax > 1e-12:
        raise KernelEmpty(f"{what}: smallest singular value {s[-1]:.3e} vs largest {smax:.3e}")
    return vh[-1].conj()


def _kernel_tail_integral(kernel, c, theta):
    """``int_{theta_j}^0 exp(c s) K(s)^T ds`` for every grid point theta_j."""
    n = kernel.n
    cells = theta.size - 1
    acc = np.zeros((cells, n, n), dtype=complex)
    lo, hi = theta[:-1], theta[1:]
    for left, right, coeffs in kernel.pieces:
        a = np.clip(lo, left, right)
        bnd = np.clip(hi, left, right)
        active = bnd > a
        if not active.any():
            continue
        mom = polyexp_moments(a[active], bnd[active], c, coeffs.shape[0] - 1)
        acc[active] += np.einsum("kp,pji->kij", mom, coeffs)
    out = np.zeros((theta.size, n, n), dtype=complex)
    out[:-1] = np.cumsum(acc[::-1], axis=0)[::-1]
    return out


def psi_eigenvector(system, lam, grid_points=DEFAULT_GRID_POINTS, normalize=True):
    """Adjoint eigenvector psi_lam for an eigenvalue ``lam``.

    The head is ``y`` in Ker Delta(lam)^*; the tail is

        exp(-c t) (c I - A0^T) y - A2(t)^T y - exp(-c t) int_t^0 exp(c s)(A3(s)^T + c A2(s)^T) ds y

    with c = conj(lam). With ``normalize`` the head is scaled so <b, y> = 1.
    """
    lam = complex(lam)
    delta = eval_delta(system, lam)
    y = _null_vector(delta.conj().T, f"Delta({lam:.6g})^*")
    if normalize:
        g = np.dot(system.b, np.conj(y))
        if abs(g) <= 1e-10 * np.linalg.norm(system.b):
            raise NotSpectrallyControllableAt(lam)
        y = y / np.conj(g)
    c = np.conj(lam)
    theta = np.linspace(-1.0, 0.0, grid_points)
    ect = np.exp(-c * theta)
    tail = ect[:, None] * ((c * np.eye(system.n) - system.A0.T) @ y)[None, :]
    if system.A2 is not None:
        tail -= system.A2.evaluate(theta).transpose(0, 2, 1) @ y
        tail -= c * ect[:, None] * (_kernel_tail_integral(system.A2, c, theta) @ y)
    if system.A3 is not None:
        tail -= ect[:, None] * (_kernel_tail_integral(system.A3, c, theta) @ y)
    return AdjointEigenvector(lam, y, tail)


def phi_eigenvector(system, lam, grid_points=DEFAULT_GRID_POINTS):
    """Generator eigenvector ``((I - e^{-lam} Am1) x, e^{lam t} x)`` with x in Ker Delta(lam)."""
    lam = complex(lam)
    x = _null_vector(eval_delta(system, lam), f"Delta({lam:.6g})")
    theta = np.linspace(-1.0, 0.0, grid_points)
    head = x - np.exp(-lam) * (system.A_minus1 @ x)
    return M2State(head, np.exp(lam * theta)[:, None] * x[None, :])
