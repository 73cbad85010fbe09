"""Signals built from exponential pieces.

A signal is ``f(t) = sum_j c_j exp(r_j (t - a_j))`` where piece j is active on
[a_j, b_j). Values, cell integrals, exponential moments and L2 products are
all available in closed form.
"""

import numpy as np


def _expint(c, length):
    """``int_0^length exp(c s) ds`` (vectorised, stable near c = 0)."""
    c = np.asarray(c, dtype=complex)
    length = np.asarray(length, dtype=float)
    cl = c * length
    small = np.abs(cl) < 1e-8
    safe_c = np.where(small, 1.0, c)
    big = np.expm1(cl) / safe_c
    series = length * (1 + cl / 2 + cl * cl / 6)
    return np.where(small, series, big)


class ExpPieces:
    def __init__(self, start=(), end=(), coef=(), rate=()):
        self.start = np.asarray(start, dtype=float).ravel()
        self.end = np.asarray(end, dtype=float).ravel()
        self.coef = np.asarray(coef, dtype=complex).ravel()
        self.rate = np.asarray(rate, dtype=complex).ravel()
        if not (self.start.size == self.end.size == self.coef.size == self.rate.size):
            raise ValueError("piece arrays must have equal length")
        if np.any(self.end < self.start):
            raise ValueError("piece end before start")

    def __len__(self):
        return self.start.size

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls()
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("start", "end", "coef", "rate")))

    def scaled(self, factor):
        return ExpPieces(self.start, self.end, self.coef * factor, self.rate)

    def conj(self):
        return ExpPieces(self.start, self.end, np.conj(self.coef), np.conj(self.rate))

    def __add__(self, other):
        return ExpPieces.concat([self, other])

    def merged(self):
        """Same signal with pieces of identical interval and rate combined."""
        if not len(self):
            return self
        keys = np.stack([self.start, self.end, self.rate.real, self.rate.imag], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        coef = np.zeros(uniq.shape[0], dtype=complex)
        np.add.at(coef, inv.ravel(), self.coef)
        return ExpPieces(uniq[:, 0], uniq[:, 1], coef, uniq[:, 2] + 1j * uniq[:, 3])

    def reflected(self, horizon):
        """Pieces of ``g(t) = -f(horizon - t)``."""
        length = self.end - self.start
        coef = -self.coef * np.exp(self.rate * length)
        return ExpPieces(horizon - self.end, horizon - self.start, coef, -self.rate)

    @property
    def support(self):
        if not len(self):
            return (0.0, 0.0)
        return (float(self.start.min()), float(self.end.max()))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.zeros(flat.size, dtype=complex)
        right_edge = self.support[1]
        for a, b, c, r in zip(self.start, self.end, self.coef, self.rate):
            mask = (flat >= a) & ((flat < b) | ((b == right_edge) & (flat <= b)))
            if mask.any():
                out[mask] += c * np.exp(r * (flat[mask] - a))
        return out.reshape(t.shape)

    def cell_integrals(self, edges):
        """``int_{edges[i]}^{edges[i+1]} f`` for every cell."""
        edges = np.asarray(edges, dtype=float)
        lo, hi = edges[:-1], edges[1:]
        out = np.zeros(lo.size, dtype=complex)
        for a, b, c, r in zip(self.start, self.end, self.coef, self.rate):
            i0 = max(np.searchsorted(hi, a, side="right"), 0)
            i1 = min(np.searchsorted(lo, b, side="left"), lo.size)
            if i1 <= i0:
                continue
            x0 = np.maximum(lo[i0:i1], a)
            x1 = np.minimum(hi[i0:i1], b)
            ok = x1 > x0
            vals = c * np.exp(r * (x0 - a)) * _expint(r, np.where(ok, x1 - x0, 0.0))
            out[i0:i1] += np.where(ok, vals, 0.0)
        return out

    def moments(self, lams):
        """``int exp(lam t) f(t) dt`` for every lam."""
        lams = np.asarray(lams, dtype=complex)
        flat = lams.ravel()
        if not len(self):
            return np.zeros(lams.shape, dtype=complex)
        terms = (self.coef[None, :] * np.exp(np.outer(flat, self.start))
                 * _expint(flat[:, None] + self.rate[None, :], (self.end - self.start)[None, :]))
        return terms.sum(axis=1).reshape(lams.shape)

    def inner(self, other):
        """L2 product ``int f conj(g)`` in closed form."""
        total = 0j
        for a, b, c, r in zip(self.start, self.end, self.coef, self.rate):
            lo = np.maximum(a, other.start)
            hi = np.minimum(b, other.end)
            ok = hi > lo
            if not ok.any():
                continue
            rate = r + np.conj(other.rate[ok])
            pref = c * np.conj(other.coef[ok]) * np.exp(r * (lo[ok] - a) + np.conj(other.rate[ok]) * (lo[ok] - other.start[ok]))
            total += np.sum(pref * _expint(rate, hi[ok] - lo[ok]))
        return complex(total)

    def l2_norm(self):
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def to_list(self):
        return [
            {"interval": [float(a), float(b)], "coef": [float(c.real), float(c.imag)],
             "rate": [float(r.real), float(r.imag)]}
            for a, b, c, r in zip(self.start, self.end, self.coef, self.rate)
        ]

    @classmethod
    def from_list(cls, items):
        if not items:
            return cls()
        start = [it["interval"][0] for it in items]
        end = [it["interval"][1] for it in items]
        coef = [complex(*it["coef"]) for it in items]
        rate = [complex(*it["rate"]) for it in items]
        return cls(start, end, coef, rate)
