"""Complex vectors/matrices as (re, im) pairs of tape nodes.

Keeping the real and imaginary parts as separate real nodes makes every
complex operation an ordinary real computation on the tape, so real-valued
objectives built from these containers differentiate exactly without any
complex-calculus machinery.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError


class CMatrix:
    """A complex array container over two equally-shaped real nodes."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = ad.as_node(re)
        self.im = ad.as_node(im)
        if self.re.shape != self.im.shape:
            raise ShapeError(
                f"re/im shapes differ: {self.re.shape} vs {self.im.shape}"
            )

    @classmethod
    def from_complex(cls, arr) -> "CMatrix":
        arr = np.asarray(arr, dtype=np.complex128)
        return cls(arr.real.copy(), arr.imag.copy())

    @property
    def shape(self):
        return self.re.shape

    @property
    def rows(self):
        return self.re.shape[0]

    @property
    def cols(self):
        s = self.re.shape
        return s[1] if len(s) > 1 else 1

    def value(self) -> np.ndarray:
        """Materialize as a plain complex ndarray."""
        return self.re.value + 1j * self.im.value

    def conj(self) -> "CMatrix":
        return CMatrix(self.re, ad.neg(self.im))

    def hermitian(self) -> "CMatrix":
        """Conjugate transpose (an involution for 2-D arrays)."""
        if self.re.value.ndim != 2:
            raise ShapeError("hermitian needs a 2-D matrix")
        return CMatrix(ad.transpose(self.re), ad.transpose(ad.neg(self.im)))

    def __add__(self, other: "CMatrix") -> "CMatrix":
        return CMatrix(ad.add(self.re, other.re), ad.add(self.im, other.im))

    def __sub__(self, other: "CMatrix") -> "CMatrix":
        return CMatrix(ad.sub(self.re, other.re), ad.sub(self.im, other.im))

    def scale(self, s) -> "CMatrix":
        """Multiply by a real scalar (number or scalar node)."""
        return CMatrix(ad.mul(self.re, s), ad.mul(self.im, s))

    def __getitem__(self, index) -> "CMatrix":
        return CMatrix(ad.getitem(self.re, index), ad.getitem(self.im, index))

    def abs2(self) -> Node:
        """Elementwise squared modulus |z|^2 = re^2 + im^2 (a real node)."""
        return ad.add(ad.square(self.re), ad.square(self.im))

    def fro_norm_sq(self) -> Node:
        """Squared Frobenius norm, sum of |z|^2 over all entries."""
        return ad.vsum(self.abs2())


def cmatmul(a: CMatrix, b: CMatrix) -> CMatrix:
    """Complex matrix product via four real products."""
    re = ad.sub(ad.matmul(a.re, b.re), ad.matmul(a.im, b.im))
    im = ad.add(ad.matmul(a.re, b.im), ad.matmul(a.im, b.re))
    return CMatrix(re, im)


def hconj_dot(h: CMatrix, p: CMatrix) -> CMatrix:
    """h^H p for column vectors, returned as a complex scalar."""
    if h.re.value.ndim != 1 or p.re.value.ndim != 1:
        raise ShapeError("hconj_dot expects 1-D vectors")
    if h.shape != p.shape:
        raise ShapeError(f"length mismatch: {h.shape} vs {p.shape}")
    re = ad.add(ad.matmul(h.re, p.re), ad.matmul(h.im, p.im))
    im = ad.sub(ad.matmul(h.re, p.im), ad.matmul(h.im, p.re))
    return CMatrix(re, im)


def hconj_vecmat(h: CMatrix, m: CMatrix) -> CMatrix:
    """h^H M for a length-n vector h and an (n, s) matrix M; returns (s,)."""
    if h.re.value.ndim != 1 or m.re.value.ndim != 2:
        raise ShapeError("hconj_vecmat expects a vector and a matrix")
    re = ad.add(ad.matmul(h.re, m.re), ad.matmul(h.im, m.im))
    im = ad.sub(ad.matmul(h.re, m.im), ad.matmul(h.im, m.re))
    return CMatrix(re, im)


def hermitian_quadratic(h: CMatrix, p: CMatrix) -> Node:
    """|h^H p|^2 as a nonnegative real scalar node.

    Symmetric in its arguments and invariant to unit-modulus scaling of
    either one; differentiable w.r.t. every underlying real component.
    """
    return hconj_dot(h, p).abs2()
