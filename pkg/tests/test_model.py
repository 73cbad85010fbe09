import cmath

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import lambertw

from delaysteer.errors import InputError, KernelEmpty, NotSpectrallyControllableAt
from delaysteer.model import (
    DelaySystem, M2State, MatrixKernel, char_det, delta_derivative, eval_delta,
    m2_inner, phi_eigenvector, polyexp_moments, psi_eigenvector,
)
from delaysteer.spectral import Window, find_eigenvalues


def test_delta_of_zero_system():
    sys = DelaySystem(A1=[[0.0]], b=[1.0])
    assert eval_delta(sys, 2.0)[0, 0] == -2


def test_delta_at_zero_identity():
    sys = DelaySystem(A1=np.eye(2), b=[0.0, 1.0])
    np.testing.assert_array_equal(eval_delta(sys, 0.0), np.eye(2))


def test_delta_vanishes_at_real_branch(scalar):
    lam = complex(lambertw(1.0, 0))
    assert abs(eval_delta(scalar, lam)[0, 0]) <= 1e-6


def test_char_det_product_of_branches(diag12):
    assert char_det(diag12, 0.0) == pytest.approx(2.0, abs=1e-15)


def test_char_det_at_i(scalar):
    expected = -1j + cmath.exp(-1j)
    assert char_det(scalar, 1j) == pytest.approx(expected, abs=1e-15)
    assert char_det(scalar, 1j) == pytest.approx(0.5403023058681398 - 1.8414709848078965j, abs=1e-12)


def test_char_det_vectorised(diag12):
    lams = np.array([0.3 + 1j, -2 + 7j, 1.5])
    single = np.array([char_det(diag12, z) for z in lams])
    np.testing.assert_allclose(char_det(diag12, lams), single, rtol=1e-14)


def test_conjugate_symmetry(kernel_system):
    rng = np.random.default_rng(3)
    lams = rng.uniform(-6, 3, 100) + 1j * rng.uniform(-60, 60, 100)
    d = eval_delta(kernel_system, lams)
    dc = eval_delta(kernel_system, np.conj(lams))
    rel = np.abs(dc - np.conj(d)) / np.maximum(np.abs(d), 1.0)
    assert rel.max() <= 1e-12


def test_delta_at_zero_is_exact_sum(kernel_system):
    coeffs = kernel_system.A3.pieces[0][2][:, 0, 0]
    poly = np.polynomial.Polynomial(coeffs).integ()
    integral = poly(0.0) - poly(-0.75)
    expected = kernel_system.A1[0, 0] + kernel_system.A0[0, 0] + integral
    assert abs(eval_delta(kernel_system, 0.0)[0, 0] - expected) <= 1e-14


@pytest.mark.parametrize("lam", [0.4 + 0.3j, -3 + 25j, 2.0 - 9j, 1e-7j])
def test_kernel_transform_against_quadrature(kernel_system, lam):
    def integrand(s, part):
        val = lam * cmath.exp(lam * s) * kernel_system.A2.evaluate(s)[0, 0] + cmath.exp(lam * s) * kernel_system.A3.evaluate(s)[0, 0]
        return val.real if part == 0 else val.imag

    pts = [-0.75, -0.5, -0.25]
    integral = sum(quad(integrand, -1, 0, args=(p,), points=pts, limit=400)[0] * (1 if p == 0 else 1j) for p in (0, 1))
    expected = -lam + kernel_system.A0[0, 0] + cmath.exp(-lam) * kernel_system.A1[0, 0] + integral
    assert eval_delta(kernel_system, lam)[0, 0] == pytest.approx(expected, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("c", [0.0, 1e-9 + 2e-9j, 0.7 - 0.2j, -3 + 40j, 25.0, -30 - 2j])
def test_polyexp_moments_against_mpmath(c):
    left, right = -0.8, -0.1
    mom = polyexp_moments(left, right, c, 4)
    for p in range(5):
        exact = mpmath.quad(lambda s: s ** p * mpmath.exp(mpmath.mpc(c.real, c.imag) * s), [left, right])
        assert abs(mom[p] - complex(exact)) <= 1e-12 * max(1.0, abs(complex(exact)))


def test_derivative_matches_central_difference(kernel_system):
    for lam in (0.3 + 2j, -2 + 11j):
        h = 1e-6
        fd = (eval_delta(kernel_system, lam + h) - eval_delta(kernel_system, lam - h)) / (2 * h)
        np.testing.assert_allclose(delta_derivative(kernel_system, lam), fd, rtol=1e-7, atol=1e-8)


def test_m2_inner_trivial():
    head = M2State([1.0], np.zeros(65))
    hist = M2State([0.0], np.ones(65))
    assert m2_inner(head, head) == 1
    assert m2_inner(head, hist) == 0
    assert m2_inner(hist, hist) == pytest.approx(1.0, abs=1e-15)


def test_m2_inner_resamples_finer_grid():
    fine = M2State.from_function([0.0], lambda t: 1 + t, 1025)
    coarse = M2State.from_function([0.0], lambda t: 2.0, 65)
    assert m2_inner(fine, coarse) == pytest.approx(1.0, abs=1e-14)


def test_psi_scalar_tail(scalar):
    lam = complex(lambertw(1.0, 2))
    psi = psi_eigenvector(scalar, lam, grid_points=129)
    assert psi.y_lambda[0] == pytest.approx(1.0)
    theta = np.linspace(-1, 0, 129)
    c = np.conj(lam)
    np.testing.assert_allclose(psi.tail[:, 0], c * np.exp(-c * theta), rtol=1e-13)


def test_psi_adjoint_residual(kernel_system):
    eigs = find_eigenvalues(kernel_system, Window(-4.1, 2.1, -30.3, 30.3))
    assert len(eigs) > 5
    for e in eigs:
        psi = psi_eigenvector(kernel_system, e.value, normalize=False)
        d = eval_delta(kernel_system, e.value)
        assert np.linalg.norm(d.conj().T @ psi.y_lambda) <= 1e-9 * max(1.0, abs(e.value))


def test_cross_orthogonality_scalar(scalar):
    l0, l1 = complex(lambertw(1.0, 0)), complex(lambertw(1.0, 1))
    phi0 = phi_eigenvector(scalar, l0, 4097)
    psi1 = psi_eigenvector(scalar, l1, 4097)
    assert abs(m2_inner(phi0, psi1)) <= 1e-6
    assert abs(m2_inner(phi0, psi_eigenvector(scalar, l0, 4097))) > 0.1


def test_cross_orthogonality_with_kernels(kernel_system):
    eigs = find_eigenvalues(kernel_system, Window(-3.1, 2.1, -12.3, 12.3)).values
    phis = [phi_eigenvector(kernel_system, v, 8193) for v in eigs]
    psis = [psi_eigenvector(kernel_system, v, 8193) for v in eigs]
    gram = np.array([[m2_inner(p, q) for q in psis] for p in phis])
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() <= 1e-5
    assert np.abs(np.diag(gram)).min() > 0.1


def test_kernel_empty_away_from_spectrum(scalar):
    with pytest.raises(KernelEmpty):
        psi_eigenvector(scalar, 0.1 + 0.2j)


def test_not_spectrally_controllable_at():
    sys = DelaySystem(A1=np.diag([1.0, 2.0]), b=[1.0, 0.0])
    lam = complex(lambertw(2.0, 1))
    with pytest.raises(NotSpectrallyControllableAt):
        psi_eigenvector(sys, lam)
    assert psi_eigenvector(sys, lam, normalize=False).y_lambda is not None


def test_shape_validation():
    with pytest.raises(InputError):
        DelaySystem(A1=np.eye(3), b=[1.0, 0.0])
    with pytest.raises(InputError):
        MatrixKernel(-1.0, [(-1.0, 0.0, np.ones((1, 1, 1)))])
    with pytest.raises(InputError):
        MatrixKernel(-0.5, [(-0.6, 0.0, np.ones((1, 1, 1)))])
    with pytest.raises(InputError):
        M2State([1.0, 2.0], np.ones((5, 3)))


def test_sampled_kernel_is_piecewise_linear():
    theta = np.array([-0.5, -0.2, 0.0])
    vals = np.array([1.0, -1.0, 3.0])
    k = MatrixKernel.from_samples(theta, vals)
    np.testing.assert_allclose(k.evaluate(np.array([-0.5, -0.35, -0.2, -0.1, 0.0]))[:, 0, 0], [1, 0, -1, 1, 3], atol=1e-14)
