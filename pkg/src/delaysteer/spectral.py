"""Location of the zeros of det Delta in a rectangle.

Zeros are counted with the argument principle (adaptive phase tracking on the
contour), isolated by recursive subdivision and polished with Newton steps on
the closed-form logarithmic derivative. Clusters that survive subdivision are
resolved from contour power sums.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryZero, CollidingSeeds, InputError, NonConvergence
from .model import char_det, det_scale, log_det_derivative

BOUNDARY_TOL = 1e-11
RESIDUAL_TOL = 1e-10
MAX_MULTIPLICITY = 3


def lambert_branch(a, k, tol=1e-15, maxiter=60):
    """Root of ``lam * exp(lam) = a`` on branch k (a > 0).

    Branch 0 is the real root; k > 0 has positive imaginary part and the
    branches are ordered by imaginary part.
    """
    a = float(a)
    if not a > 0:
        raise InputError("branch seeds need a > 0")
    k = int(k)
    if k == 0:
        w = complex(math.log1p(a))
    else:
        l1 = complex(math.log(a), 2 * math.pi * k)
        w = l1 - np.log(l1)
    for _ in range(maxiter):
        ew = np.exp(w)
        f = w * ew - a
        wp1 = w + 1
        step = f / (ew * wp1 - (w + 2) * f / (2 * wp1))
        w = w - step
        if abs(step) <= tol * (1 + abs(w)):
            return w if k else complex(w.real, 0.0)
    raise NonConvergence(f"Lambert iteration did not converge for a={a}, k={k}")


@dataclass
class SeedGrid:
    a_values: tuple
    k_range: tuple
    seeds: dict
    r0: float

    def nearest(self, lam):
        best, dist = None, math.inf
        for key, s in self.seeds.items():
            d = abs(lam - s)
            if d < dist:
                best, dist = key, d
        return best, dist


def build_seeds(a_list, k_range):
    """Lambert seeds for every (branch j, index k) and the separation radius r0."""
    a_list = tuple(float(a) for a in a_list)
    k_lo, k_hi = int(k_range[0]), int(k_range[1])
    seeds = {(j, k): lambert_branch(a, k) for j, a in enumerate(a_list) for k in range(k_lo, k_hi + 1)}
    if len(seeds) < 2:
        raise InputError("need at least two seeds")
    pts = np.array(list(seeds.values()))
    dist = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(dist, np.inf)
    dmin = dist.min()
    if dmin < 1e-10:
        raise CollidingSeeds(f"seeds closer than 1e-10 (min distance {dmin:.3e})")
    return SeedGrid(a_list, (k_lo, k_hi), seeds, dmin / 3.0)


@dataclass(frozen=True)
class Window:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise InputError("window must have re_min < re_max and im_min < im_max")

    @classmethod
    def parse(cls, text):
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise InputError(f"bad window {text!r}") from exc
        if len(vals) != 4:
            raise InputError("window needs re_min,re_max,im_min,im_max")
        return cls(*vals)

    @property
    def center(self):
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def width(self):
        return self.re_max - self.re_min

    @property
    def height(self):
        return self.im_max - self.im_min

    def contains(self, lam, pad=0.0):
        return (self.re_min - pad <= lam.real <= self.re_max + pad
                and self.im_min - pad <= lam.imag <= self.im_max + pad)

    def split(self, frac):
        if self.width >= self.height:
            x = self.re_min + frac * self.width
            return Window(self.re_min, x, self.im_min, self.im_max), Window(x, self.re_max, self.im_min, self.im_max)
        y = self.im_min + frac * self.height
        return Window(self.re_min, self.re_max, self.im_min, y), Window(self.re_min, self.re_max, y, self.im_max)

    def as_list(self):
        return [self.re_min, self.re_max, self.im_min, self.im_max]


@dataclass
class EigenPoint:
    value: complex
    multiplicity: int = 1
    branch: int = None
    index: int = None
    residual: float = 0.0

    def to_dict(self):
        return {
            "re": float(self.value.real),
            "im": float(self.value.imag),
            "multiplicity": int(self.multiplicity),
            "branch": self.branch,
            "index": self.index,
            "residual": float(self.residual),
        }


class EigenList(list):
    """List of EigenPoint with the cells whose refinement was abandoned."""

    def __init__(self, items=(), flagged_cells=()):
        super().__init__(items)
        self.flagged_cells = list(flagged_cells)

    @property
    def values(self):
        return np.array([e.value for e in self], dtype=complex)


def _rectangle_path(w):
    corners = np.array([
        complex(w.re_min, w.im_min), complex(w.re_max, w.im_min),
        complex(w.re_max, w.im_max), complex(w.re_min, w.im_max),
    ])
    lengths = np.array([w.width, w.height, w.width, w.height])
    cum = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()

    def path(t):
        t = np.asarray(t, dtype=float)
        edge = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, 3)
        local = (t - cum[edge]) / (cum[edge + 1] - cum[edge])
        start = corners[edge]
        end = corners[(edge + 1) % 4]
        return start + local * (end - start)

    return path, 2 * (w.width + w.height)


def _winding(system, path, length, initial=None):
    """Winding number of det Delta along a closed path and max |det| on it."""
    m = initial or int(max(64, 16 * length))
    t = np.linspace(0.0, 1.0, m + 1)
    z = path(t)
    f = char_det(system, z)
    tmin = 1e-13
    for _ in range(60):
        small = np.abs(f) < BOUNDARY_TOL * det_scale(system, z)
        if small.any():
            raise BoundaryZero(z[np.argmax(small)])
        d = np.angle(f[1:] / f[:-1])
        bad = np.abs(d) > math.pi / 2
        if not bad.any():
            _check_dips(system, path, t, np.abs(f) / det_scale(system, z))
            return int(round(d.sum() / (2 * math.pi))), float(np.abs(f).max())
        idx = np.nonzero(bad)[0]
        if np.min(t[idx + 1] - t[idx]) < tmin:
            raise BoundaryZero(z[idx[0]])
        tm = 0.5 * (t[idx] + t[idx + 1])
        zm = path(tm)
        fm = char_det(system, zm)
        t = np.insert(t, idx + 1, tm)
        z = np.insert(z, idx + 1, zm)
        f = np.insert(f, idx + 1, fm)
    raise NonConvergence("phase tracking did not settle on the contour")


def _check_dips(system, path, t, ratio):
    """Zeros of even multiplicity on the path leave the phase untouched, so
    every pronounced dip of |det| is minimised along the path as well."""
    inner = np.nonzero((ratio[1:-1] < ratio[:-2]) & (ratio[1:-1] <= ratio[2:]) & (ratio[1:-1] < 1e-2))[0] + 1
    if inner.size == 0:
        return
    a, b = t[inner - 1], t[inner + 1]
    u = np.linspace(0.0, 1.0, 33)
    rows = np.arange(inner.size)
    for _ in range(12):
        x = a[:, None] + (b - a)[:, None] * u[None, :]
        z = path(x.ravel())
        g = (np.abs(char_det(system, z)) / det_scale(system, z)).reshape(x.shape)
        k = np.argmin(g, axis=1)
        best = g[rows, k]
        if np.any(best < BOUNDARY_TOL) or np.all(b - a < 1e-15):
            break
        a, b = x[rows, np.maximum(k - 1, 0)], x[rows, np.minimum(k + 1, 32)]
    hit = np.nonzero(best < 1e-9)[0]
    if hit.size:
        i = hit[0]
        raise BoundaryZero(path(np.array([0.5 * (a[i] + b[i])]))[0])


def count_zeros(system, window):
    """Number of zeros of det Delta inside ``window`` (with multiplicity)."""
    path, length = _rectangle_path(window)
    return _winding(system, path, length)[0]


def _circle_winding(system, center, radius):
    def path(t):
        return center + radius * np.exp(2j * math.pi * np.asarray(t))

    return _winding(system, path, 2 * math.pi * radius, initial=64)[0]


def _cluster_roots(system, center, radius, count, npts=256):
    """Zeros inside a circle from power sums of the logarithmic derivative."""
    theta = 2 * math.pi * np.arange(npts) / npts
    w = radius * np.exp(1j * theta)
    g = log_det_derivative(system, center + w)
    sums = np.array([np.mean(w ** (p + 1) * g) for p in range(1, count + 1)])
    # Newton identities: monic polynomial with the given power sums
    coeffs = [1.0 + 0j]
    for k in range(1, count + 1):
        acc = sums[k - 1]
        for i in range(1, k):
            acc += coeffs[i] * sums[k - i - 1]
        coeffs.append(-acc / k)
    return center + np.roots(coeffs)


def _newton(system, lam, cell, maxiter=80):
    pad = 1e-9 * (1 + abs(lam))
    for _ in range(maxiter):
        try:
            g = log_det_derivative(system, lam)
        except np.linalg.LinAlgError:
            break  # landed exactly on the zero
        if not np.isfinite(g) or g == 0:
            return None
        step = 1.0 / g
        lam = lam - step
        if not cell.contains(lam, pad=0.25 * max(cell.width, cell.height)):
            return None
        if abs(step) <= 1e-14 * (1 + abs(lam)):
            break
    else:
        return None
    if not cell.contains(lam, pad=pad):
        return None
    return complex(lam)


def _safe_split(system, cell, count):
    for frac in (0.5, 0.47, 0.53, 0.41, 0.59, 0.35, 0.65):
        left, right = cell.split(frac)
        try:
            c1 = count_zeros(system, left)
            c2 = count_zeros(system, right)
        except BoundaryZero:
            continue
        if c1 + c2 == count:
            return (left, c1), (right, c2)
    raise NonConvergence(f"could not split cell {cell.as_list()} cleanly")


def _boundary_max(system, cell):
    path, length = _rectangle_path(cell)
    z = path(np.linspace(0, 1, 65))
    return float(np.abs(char_det(system, z)).max())


def find_eigenvalues(system, window, seeds=None, min_cell=1e-3):
    """All zeros of det Delta in ``window``, sorted by imaginary part.

    Returns an EigenList; every point satisfies
    |det Delta| <= 1e-10 * max(1, max |det Delta| on its cell boundary).
    """
    total = count_zeros(system, window)
    found = []
    flagged = []
    stack = [(window, total)]
    while stack:
        cell, c = stack.pop()
        if c == 0:
            continue
        size = max(cell.width, cell.height)
        if c == 1:
            lam = _newton(system, cell.center, cell)
            if lam is not None:
                found.append((lam, 1, cell))
                continue
        if size > min_cell * (1 + abs(cell.center)):
            stack.extend(_safe_split(system, cell, c))
            continue
        # small cell still holding a cluster
        center = cell.center
        radius = 0.5 * math.hypot(cell.width, cell.height) * 1.05
        inside = _circle_winding(system, center, radius)
        roots = _cluster_roots(system, center, radius, inside)
        groups = _group(roots, 1e-6 * (1 + abs(center)))
        for value, mult in groups:
            if not cell.contains(value, pad=1e-12):
                continue
            if mult > MAX_MULTIPLICITY:
                flagged.append({"cell": cell.as_list(), "multiplicity": mult})
                continue
            if mult == 1:
                polished = _newton(system, value, cell)
                value = polished if polished is not None else value
            found.append((complex(value), mult, cell))

    points = []
    for lam, mult, cell in found:
        res = abs(char_det(system, lam)) / max(1.0, _boundary_max(system, cell))
        if res > RESIDUAL_TOL:
            raise NonConvergence(f"residual {res:.2e} at {lam:.6g}")
        points.append(EigenPoint(lam, mult, residual=res))
    points = _conjugate_close(points, window)
    if seeds is not None:
        for p in points:
            key, dist = seeds.nearest(p.value)
            if key is not None and dist <= seeds.r0:
                p.branch, p.index = key
    points.sort(key=lambda p: (p.value.imag, p.value.real))
    return EigenList(points, flagged)


def _group(roots, tol):
    groups = []
    for r in roots:
        for g in groups:
            if abs(g[0] / g[1] - r) <= tol:
                g[0] += r
                g[1] += 1
                break
        else:
            groups.append([r, 1])
    return [(s / m, m) for s, m in groups]


def _conjugate_close(points, window):
    """Snap near-real zeros onto the axis and pair conjugates exactly."""
    out = []
    used = set()
    for i, p in enumerate(points):
        if i in used:
            continue
        lam = p.value
        if abs(lam.imag) <= 1e-12 * (1 + abs(lam)):
            p.value = complex(lam.real, 0.0)
            out.append(p)
            continue
        j = min(
            (j for j in range(len(points)) if j != i and j not in used),
            key=lambda j: abs(points[j].value - lam.conjugate()),
            default=None,
        )
        if j is not None and abs(points[j].value - lam.conjugate()) <= 1e-8 * (1 + abs(lam)):
            used.add(j)
            upper = lam if lam.imag > 0 else lam.conjugate()
            mate = points[j].value
            upper = 0.5 * (upper + (mate if mate.imag > 0 else mate.conjugate()))
            p.value = upper
            q = points[j]
            q.value = upper.conjugate()
            out.extend([p, q])
        else:
            out.append(p)
        used.add(i)
    return out


def system_seeds(system, window):
    """Lambert seeds for a system whose characteristic zeros follow the branches
    of the distinct positive eigenvalues of A1 (no other terms present)."""
    if system.has_kernels or system.is_neutral or np.any(system.A0 != 0):
        return None
    eig = np.linalg.eigvals(system.A1)
    if np.any(np.abs(eig.imag) > 1e-12) or np.any(eig.real <= 0):
        return None
    a_values = sorted(set(np.round(eig.real, 12)))
    kmax = int(math.ceil(max(abs(window.im_min), abs(window.im_max)) / (2 * math.pi))) + 1
    try:
        return build_seeds(a_values, (-kmax, kmax))
    except (InputError, CollidingSeeds):
        return None


def branch_thresholds(points, seeds, window):
    """Per branch, the smallest |k| from which every seed circle inside the
    window holds exactly one computed zero (None if membership never holds)."""
    vals = np.array([p.value for p in points])
    out = {}
    for j in range(len(seeds.a_values)):
        ks = sorted({k for (jj, k) in seeds.seeds if jj == j}, key=abs)
        ok = {}
        for k in ks:
            s = seeds.seeds[(j, k)]
            if not window.contains(s):
                continue
            hits = int(np.sum(np.abs(vals - s) <= seeds.r0)) if vals.size else 0
            ok.setdefault(abs(k), True)
            ok[abs(k)] = ok[abs(k)] and hits == 1
        threshold = None
        for kabs in sorted(ok, reverse=True):
            if ok[kabs]:
                threshold = kabs
            else:
                break
        out[j] = threshold
    return out
