import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import lambertw

from delaysteer.biortho import (
    QuasiPolynomialFamily, biortho_explicit, exponential_polynomial, quasipolynomial_family,
)
from delaysteer.errors import InputError
from delaysteer.model import DelaySystem, char_det
from delaysteer.spectral import Window, find_eigenvalues


def _moment_by_quadrature(member, lam, T):
    def part(t, re):
        v = np.exp(lam * t) * member(np.array([t]))[0]
        return v.real if re else v.imag
    pts = sorted(set(np.concatenate([member.start, member.end]).tolist()))
    return quad(part, 0, T, args=(True,), points=pts, limit=200)[0] + 1j * quad(part, 0, T, args=(False,), points=pts, limit=200)[0]


def test_explicit_family_against_quadrature():
    fam = biortho_explicit(1.0, 2.0, (-3, 3))
    lams = [complex(lambertw(1.0, k)) for k in range(-3, 4)]
    for s, member in zip(fam.labels, fam.members):
        for k, lam in zip(range(-3, 4), lams):
            expected = 1.0 if k == s else 0.0
            assert abs(_moment_by_quadrature(member, lam, 2.0) - expected) <= 1e-8


def test_explicit_family_kills_far_zeros():
    fam = biortho_explicit(1.0, 2.0, (-2, 2))
    far = [complex(lambertw(1.0, k)) for k in (-40, -9, 8, 55)]
    assert np.abs(fam.moment_matrix(far)).max() <= 1e-10


def test_explicit_family_needs_long_horizon():
    with pytest.raises(InputError):
        biortho_explicit(1.0, 1.0, (0, 2))


def test_exponential_polynomial_reconstructs_det(diag12):
    P = exponential_polynomial(diag12)
    for lam in (0.3 + 1j, -1.2 - 4j, 2.0):
        val = sum(np.polyval(P[m][::-1], lam) * np.exp(-m * lam) for m in range(P.shape[0]))
        assert val == pytest.approx(char_det(diag12, lam), rel=1e-13)
    np.testing.assert_allclose(P, [[0, 0, 1], [0, -3, 0], [2, 0, 0]], atol=1e-14)


def test_quasipolynomial_scalar_matches_explicit(scalar):
    pool = find_eigenvalues(scalar, Window(-5.0, 2.0, -50.0, 50.0)).values
    lams = np.array([complex(lambertw(1.0, k)) for k in range(1, 4)])
    qp = quasipolynomial_family(scalar, 2.0, lams, pool)
    ex = biortho_explicit(1.0, 2.0, (1, 3))
    for a, b in zip(qp.members, ex.members):
        t = np.linspace(0, 2, 41)
        np.testing.assert_allclose(a(t), b(t), atol=1e-10)


def test_zero_spill_on_two_branches(diag12):
    pool = find_eigenvalues(diag12, Window(-5.0, 1.5, -60.0, 60.0)).values
    chosen = pool[np.argsort(np.abs(pool.imag), kind="stable")[:10]]
    fam = quasipolynomial_family(diag12, 4.0, chosen, pool)
    assert fam.biorthogonality_error(pool, relative=True) <= 1e-12
    outside = np.array([z for z in pool if np.min(np.abs(chosen - z)) > 1e-9])
    assert outside.size > 0
    scale = max(np.abs(m.coef).sum() for m in fam.members)
    assert np.abs(fam.moment_matrix(outside)).max() <= 1e-12 * scale


def test_family_conjugate_symmetry(diag12):
    pool = find_eigenvalues(diag12, Window(-5.0, 1.5, -40.0, 40.0)).values
    upper = pool[pool.imag > 0][:3]
    fam = quasipolynomial_family(diag12, 4.0, np.concatenate([upper, upper.conj()]), pool)
    t = np.linspace(0, 4, 33)
    for k in range(3):
        np.testing.assert_allclose(fam.members[k + 3](t), np.conj(fam.members[k](t)), atol=1e-12)


def test_horizon_must_exceed_delay_order(diag12):
    with pytest.raises(InputError):
        QuasiPolynomialFamily(diag12, 2.0)


def test_kernel_system_rejected(kernel_system):
    with pytest.raises(InputError):
        QuasiPolynomialFamily(kernel_system, 3.0)


def test_norm_growth_rate():
    fam = biortho_explicit(1.0, 2.0, (10, 100))
    s = np.array(fam.labels, dtype=float)
    ratio = np.array([m.l2_norm() for m in fam.members]) / (s ** 3 / np.sqrt(np.log(s)))
    assert ratio.max() / ratio.min() <= 10
