"""Algebra of traceless symmetric 3x3 matrices and the Landau-de Gennes bulk terms.

A Q-tensor is stored by its five independent entries ``(q11, q22, q12, q13, q23)``;
``q33 = -q11 - q22`` is implied.  Every pointwise function here works on
arrays whose leading axis has length 5, so the same code handles a single
tensor and a whole grid of them.  Passing a :class:`TracelessSym3` returns a
:class:`TracelessSym3`.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

COMPONENTS = ("q11", "q22", "q12", "q13", "q23")

_SQRT2 = math.sqrt(2.0)
_SQRT_3_2 = math.sqrt(1.5)


@dataclass(frozen=True)
class ModelParams:
    """Bulk coefficients ``(a, b, c)`` plus the weight exponent and smallness threshold.

    ``(a, b, c)`` must lie in the uniaxial-bistability region ``b**2 > 27*a*c``.
    """

    a: float
    b: float
    c: float
    delta: float = 2.0
    eta: float = 6.0

    def __post_init__(self):
        for name in ("a", "b", "c", "delta", "eta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
        if not self.b**2 > 27.0 * self.a * self.c:
            raise ValueError(
                f"(a, b, c) = ({self.a}, {self.b}, {self.c}) lies outside region D: "
                f"need b^2 > 27ac, got b^2 = {self.b**2:g} <= 27ac = {27 * self.a * self.c:g}"
            )

    @property
    def growth_constant(self) -> float:
        """Rate in the L2 energy estimate, ``b**2/(2c) - a``."""
        return self.b**2 / (2.0 * self.c) - self.a


@dataclass(frozen=True)
class TracelessSym3:
    """A single point of Sym0(3)."""

    q11: float = 0.0
    q22: float = 0.0
    q12: float = 0.0
    q13: float = 0.0
    q23: float = 0.0

    @property
    def q33(self) -> float:
        return -self.q11 - self.q22

    def __array__(self, dtype=None, copy=None):
        return np.array([self.q11, self.q22, self.q12, self.q13, self.q23], dtype=dtype or float)

    def as_array(self) -> np.ndarray:
        return np.asarray(self)

    def to_matrix(self) -> np.ndarray:
        return to_matrix(self.as_array())

    @classmethod
    def from_array(cls, q) -> "TracelessSym3":
        q = np.asarray(q, dtype=float)
        if q.shape != (5,):
            raise ValueError(f"expected 5 components, got shape {q.shape}")
        return cls(*(float(v) for v in q))

    @classmethod
    def from_matrix(cls, m) -> "TracelessSym3":
        return cls.from_array(from_matrix(m))

    def norm(self) -> float:
        return float(np.sqrt(frobenius_inner(self, self)))


def _as_components(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[:1] != (5,):
        raise ValueError(f"leading axis must hold the 5 components, got shape {q.shape}")
    return q


def _keeps_type(func):
    """Wrap array results back into TracelessSym3 when the first argument was one."""

    @functools.wraps(func)
    def wrapper(q, *args, **kwargs):
        out = func(_as_components(q), *args, **kwargs)
        if isinstance(q, TracelessSym3):
            return TracelessSym3.from_array(out)
        return out

    return wrapper


def to_matrix(q) -> np.ndarray:
    """Full symmetric matrices, shape ``(..., 3, 3)``."""
    q = _as_components(q)
    q11, q22, q12, q13, q23 = q
    q33 = -q11 - q22
    rows = [
        np.stack([q11, q12, q13], axis=-1),
        np.stack([q12, q22, q23], axis=-1),
        np.stack([q13, q23, q33], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def from_matrix(m) -> np.ndarray:
    """Project ``(..., 3, 3)`` matrices onto Sym0(3) and return the 5 components."""
    m = np.asarray(m, dtype=float)
    s = 0.5 * (m + np.swapaxes(m, -1, -2))
    tr = np.trace(s, axis1=-2, axis2=-1) / 3.0
    return np.stack([s[..., 0, 0] - tr, s[..., 1, 1] - tr, s[..., 0, 1], s[..., 0, 2], s[..., 1, 2]])


def make_uniaxial(lam):
    """``diag(lam, lam, -2 lam)``; a scalar gives a TracelessSym3, an array gives components."""
    if np.ndim(lam) == 0:
        lam = float(lam)
        return TracelessSym3(lam, lam, 0.0, 0.0, 0.0)
    lam = np.asarray(lam, dtype=float)
    zero = np.zeros_like(lam)
    return np.stack([lam, lam, zero, zero, zero])


def frobenius_inner(p, q):
    """``tr(PQ)`` evaluated on the 5-component encoding."""
    p = _as_components(p)
    q = _as_components(q)
    return (
        2.0 * (p[0] * q[0] + p[1] * q[1])
        + p[0] * q[1]
        + p[1] * q[0]
        + 2.0 * (p[2] * q[2] + p[3] * q[3] + p[4] * q[4])
    )


def trace_sq(q):
    return frobenius_inner(q, q)


def trace_cube(q):
    """``tr(Q^3) = 3 det Q`` for traceless Q."""
    q11, q22, q12, q13, q23 = _as_components(q)
    q33 = -q11 - q22
    det = (
        q11 * (q22 * q33 - q23 * q23)
        - q12 * (q12 * q33 - q23 * q13)
        + q13 * (q12 * q23 - q22 * q13)
    )
    return 3.0 * det


def to_orthonormal(q) -> np.ndarray:
    """Coordinates in a Frobenius-orthonormal basis of Sym0(3).

    ``tr(PQ)`` becomes the plain dot product of these coordinates.
    """
    q11, q22, q12, q13, q23 = _as_components(q)
    return np.stack(
        [(q11 - q22) / _SQRT2, _SQRT_3_2 * (q11 + q22), _SQRT2 * q12, _SQRT2 * q13, _SQRT2 * q23]
    )


def from_orthonormal(w) -> np.ndarray:
    w = _as_components(w)
    s = w[1] / _SQRT_3_2
    d = _SQRT2 * w[0]
    return np.stack([0.5 * (s + d), 0.5 * (s - d), w[2] / _SQRT2, w[3] / _SQRT2, w[4] / _SQRT2])


@_keeps_type
def square_traceless(q):
    """``Q^2 - tr(Q^2) I / 3``, written out entry by entry."""
    q11, q22, q12, q13, q23 = q
    q33 = -q11 - q22
    s11 = q11 * q11 + q12 * q12 + q13 * q13
    s22 = q12 * q12 + q22 * q22 + q23 * q23
    s33 = q13 * q13 + q23 * q23 + q33 * q33
    third = (s11 + s22 + s33) / 3.0
    s12 = q11 * q12 + q12 * q22 + q13 * q23
    s13 = q11 * q13 + q12 * q23 + q13 * q33
    s23 = q12 * q13 + q22 * q23 + q23 * q33
    return np.stack([s11 - third, s22 - third, s12, s13, s23])


def _nonlinear_parts(q):
    sq = square_traceless(q)
    return sq, trace_sq(q) * q


@_keeps_type
def bulk_nonlinearity(q, p: ModelParams):
    """The non-linear part of the bulk force, ``b(Q^2 - tr(Q^2)I/3) - c tr(Q^2) Q``."""
    sq, cub = _nonlinear_parts(q)
    return p.b * sq - p.c * cub


@_keeps_type
def reaction_rhs(q, p: ModelParams):
    """``-aQ + b(Q^2 - tr(Q^2)I/3) - c tr(Q^2) Q``."""
    sq, cub = _nonlinear_parts(q)
    return -p.a * q + p.b * sq - p.c * cub


@_keeps_type
def nonlinearity_h(r, t: float, p: ModelParams):
    """Nonlinearity of the equation for ``R = e^{at} Q``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    sq, cub = _nonlinear_parts(r)
    return p.b * math.exp(-p.a * t) * sq - p.c * math.exp(-2.0 * p.a * t) * cub


def bulk_energy_density(q, p: ModelParams):
    tr2 = trace_sq(q)
    return 0.5 * p.a * tr2 - p.b / 3.0 * trace_cube(q) + 0.25 * p.c * tr2 * tr2


def uniaxial_reaction(lam, p: ModelParams):
    """Right-hand side of the reduced scalar equation, ``-a l - b l^2 - 6c l^3``."""
    return -p.a * lam - p.b * lam**2 - 6.0 * p.c * lam**3


def reduced_potential(lam, p: ModelParams):
    """``V(l) = a l^2/2 + b l^3/3 + 3c l^4/2``; the uniaxial bulk energy is ``6 V``."""
    return 0.5 * p.a * lam**2 + p.b / 3.0 * lam**3 + 1.5 * p.c * lam**4


def lambda_star(p: ModelParams) -> float:
    """Global minimiser of the reduced potential.

    The nonzero critical points solve ``6c l^2 + b l + a = 0``; of the two real
    roots the one with lower potential is returned.  Raises if its potential is
    not negative, since then the isotropic state is the global minimum.
    """
    disc = p.b**2 - 24.0 * p.a * p.c
    if disc <= 0:
        raise ValueError("no nonzero critical points of the reduced potential")
    sq = math.sqrt(disc)
    roots = ((-p.b - sq) / (12.0 * p.c), (-p.b + sq) / (12.0 * p.c))
    best = min(roots, key=lambda r: reduced_potential(r, p))
    if not reduced_potential(best, p) < 0:
        raise ValueError(
            f"no negative-energy critical point: V({best:.6g}) = {reduced_potential(best, p):.3g} >= 0"
        )
    return best


def uniaxial_front_scales(p: ModelParams) -> tuple[float, float]:
    """Planar-front speed and tanh interface width of the reduced scalar equation.

    With ``u = -l`` the reaction is ``6c u (u - u1)(u2 - u)`` for the two roots
    ``0 < u1 < u2``; the travelling wave is ``u2 / (1 + exp(-x/w))`` with
    ``w = 1/(u2 sqrt(3c))`` and speed ``sqrt(3c)(u2 - 2 u1)``.
    """
    u2 = -lambda_star(p)
    sq = math.sqrt(p.b**2 - 24.0 * p.a * p.c)
    u1 = -(-p.b + sq) / (12.0 * p.c)
    k = math.sqrt(3.0 * p.c)
    return k * (u2 - 2.0 * u1), 1.0 / (u2 * k)
