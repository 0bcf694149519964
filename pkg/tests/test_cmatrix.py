"""Complex container ops: scalar-loop oracles and algebraic invariants."""

import numpy as np
import pytest

from comprsma import autodiff as ad
from comprsma.autodiff import Node, ShapeError, backward
from comprsma.cmatrix import CMatrix, cmatmul, hconj_dot, hconj_vecmat, hermitian_quadratic


def test_identity_cases():
    h = CMatrix.from_complex([1.0, 0.0])
    p = CMatrix.from_complex([1.0, 0.0])
    assert float(hermitian_quadratic(h, p).value) == pytest.approx(1.0)

    hj = CMatrix.from_complex([1j, 0.0])
    pj = CMatrix.from_complex([1j, 0.0])
    assert float(hermitian_quadratic(hj, pj).value) == pytest.approx(1.0)


def test_matches_scalar_loop_oracle():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    p = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    # element-wise expansion, no vector ops
    acc = 0.0 + 0.0j
    for i in range(4):
        acc += np.conj(h[i]) * p[i]
    expected = (acc * np.conj(acc)).real
    got = float(hermitian_quadratic(CMatrix.from_complex(h), CMatrix.from_complex(p)).value)
    assert got == pytest.approx(expected, rel=1e-12)


def test_symmetry_and_phase_invariance():
    rng = np.random.default_rng(1)
    h = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    p = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    a = float(hermitian_quadratic(CMatrix.from_complex(h), CMatrix.from_complex(p)).value)
    b = float(hermitian_quadratic(CMatrix.from_complex(p), CMatrix.from_complex(h)).value)
    assert a == pytest.approx(b, rel=1e-12)
    for phase in (0.3, 1.7, -2.2):
        rot = np.exp(1j * phase) * p
        c = float(hermitian_quadratic(CMatrix.from_complex(h), CMatrix.from_complex(rot)).value)
        assert c == pytest.approx(a, rel=1e-12)


def test_nonnegative():
    rng = np.random.default_rng(2)
    for _ in range(20):
        h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        p = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert float(hermitian_quadratic(CMatrix.from_complex(h), CMatrix.from_complex(p)).value) >= 0.0


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        hermitian_quadratic(CMatrix.from_complex([1.0, 2.0]), CMatrix.from_complex([1.0, 2.0, 3.0]))
    with pytest.raises(ShapeError):
        CMatrix(np.ones(3), np.ones(4))


def test_hermitian_involution():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    cm = CMatrix.from_complex(a)
    back = cm.hermitian().hermitian().value()
    assert np.allclose(back, a, atol=1e-15)
    assert np.allclose(cm.hermitian().value(), a.conj().T, atol=1e-15)


def test_fro_norm_zero_iff_zero():
    z = CMatrix.from_complex(np.zeros((2, 2)))
    assert float(z.fro_norm_sq().value) == 0.0
    rng = np.random.default_rng(4)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    assert float(CMatrix.from_complex(a).fro_norm_sq().value) > 0.0


def test_cmatmul_matches_numpy():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    got = cmatmul(CMatrix.from_complex(a), CMatrix.from_complex(b)).value()
    assert np.allclose(got, a @ b, atol=1e-14)


def test_hconj_vecmat_matches_numpy():
    rng = np.random.default_rng(6)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    m = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    got = hconj_vecmat(CMatrix.from_complex(h), CMatrix.from_complex(m)).value()
    assert np.allclose(got, h.conj() @ m, atol=1e-14)


def test_hermitian_quadratic_differentiable():
    rng = np.random.default_rng(7)
    hv = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    pv = rng.standard_normal(3) + 1j * rng.standard_normal(3)

    def value(hr, hi, pr, pi):
        return float(
            hermitian_quadratic(CMatrix(hr, hi), CMatrix(pr, pi)).value
        )

    h_re, h_im = Node(hv.real.copy()), Node(hv.imag.copy())
    p_re, p_im = Node(pv.real.copy()), Node(pv.imag.copy())
    out = hermitian_quadratic(CMatrix(h_re, h_im), CMatrix(p_re, p_im))
    grads = backward(out, [h_re, h_im, p_re, p_im])

    step = 1e-6
    parts = [hv.real.copy(), hv.imag.copy(), pv.real.copy(), pv.imag.copy()]
    for which in range(4):
        for i in range(3):
            up = [p.copy() for p in parts]
            dn = [p.copy() for p in parts]
            up[which][i] += step
            dn[which][i] -= step
            fd = (value(*up) - value(*dn)) / (2 * step)
            assert grads[which][i] == pytest.approx(fd, rel=1e-5, abs=1e-9)
