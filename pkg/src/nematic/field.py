"""Periodic-grid fields on a cube centred at the origin, their norms and energy.

The cube ``[-L/2, L/2)^3`` with ``n`` points per axis stands in for R^3.  Axis
order of every value array is ``(x, y, z)``; tensor fields carry an extra
leading axis of length 5 (see :mod:`nematic.qtensor`).
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
import scipy.fft as sfft

from nematic import qtensor
from nematic.qtensor import ModelParams

SPATIAL_AXES = (-3, -2, -1)


@dataclass(frozen=True)
class GridSpec:
    n: int
    box_len: float

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.box_len > 0:
            raise ValueError(f"box_len must be positive, got {self.box_len}")

    @property
    def spacing(self) -> float:
        return self.box_len / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def center_index(self) -> int:
        return self.n // 2

    def coords(self) -> np.ndarray:
        """1-D node coordinates; index ``n//2`` sits at the origin."""
        return (np.arange(self.n) - self.n // 2) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable ``x, y, z`` coordinate arrays."""
        c = self.coords()
        return c[:, None, None], c[None, :, None], c[None, None, :]

    def radius(self) -> np.ndarray:
        return _radius(self.n, self.box_len)

    def k_squared(self) -> np.ndarray:
        """``|k|^2`` on the ``rfftn`` half-spectrum layout."""
        return _k_squared(self.n, self.box_len)

    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum mode in a Parseval sum."""
        return _rfft_weights(self.n)


@functools.lru_cache(maxsize=8)
def _radius(n: int, box_len: float) -> np.ndarray:
    c = (np.arange(n) - n // 2) * (box_len / n)
    r = np.sqrt(c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2)
    r.flags.writeable = False
    return r


@functools.lru_cache(maxsize=8)
def _k_squared(n: int, box_len: float) -> np.ndarray:
    k = 2.0 * np.pi * sfft.fftfreq(n, d=box_len / n)
    kr = 2.0 * np.pi * sfft.rfftfreq(n, d=box_len / n)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kr[None, None, :] ** 2
    k2.flags.writeable = False
    return k2


@functools.lru_cache(maxsize=8)
def _rfft_weights(n: int) -> np.ndarray:
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


@dataclass(frozen=True)
class TensorField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    time_tag: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (5,) + self.grid.shape:
            raise ValueError(f"tensor values must have shape {(5,) + self.grid.shape}, got {values.shape}")
        object.__setattr__(self, "values", values)
        if self.time_tag < 0:
            raise ValueError("time_tag must be nonnegative")

    def with_values(self, values, time_tag: float | None = None) -> "TensorField":
        return TensorField(self.grid, values, self.time_tag if time_tag is None else time_tag)

    def integral(self) -> np.ndarray:
        """Componentwise integral, a 5-vector."""
        return self.values.sum(axis=SPATIAL_AXES) * self.grid.cell_volume

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(np.maximum(qtensor.trace_sq(self.values), 0.0))


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    time_tag: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"scalar values must have shape {self.grid.shape}, got {values.shape}")
        object.__setattr__(self, "values", values)
        if self.time_tag < 0:
            raise ValueError("time_tag must be nonnegative")

    def with_values(self, values, time_tag: float | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.time_tag if time_tag is None else time_tag)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def pointwise_norm(self) -> np.ndarray:
        return np.abs(self.values)

    def to_tensor(self) -> TensorField:
        return TensorField(self.grid, qtensor.make_uniaxial(self.values), self.time_tag)


AnyField = Union[TensorField, ScalarField]


def lp_norm(f: AnyField, p: float = 2.0) -> float:
    """``(int |Q|^p dx)^(1/p)`` with the Frobenius pointwise norm; ``p=inf`` gives the max."""
    if not (p >= 1):
        raise ValueError(f"p must be >= 1, got {p}")
    mag = f.pointwise_norm()
    if math.isinf(p):
        return float(mag.max())
    if p == 2:
        return float(math.sqrt(np.sum(mag * mag) * f.grid.cell_volume))
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


def a_norm(f: AnyField, delta: float) -> float:
    """Weighted sup ``max (1+|x|)^(8+delta) |Q(x)|``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    weight = (1.0 + f.grid.radius()) ** (8.0 + delta)
    return float(np.max(weight * f.pointwise_norm()))


def x0_weight(x, t, delta: float):
    """Space-time weight ``(1 + |x|/sqrt(t+1))^(4+delta/2) (t+1)^2``; ``x`` has a last axis of 3."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    r = np.linalg.norm(x, axis=-1)
    return _x0_weight_radius(r, t, delta)


def _x0_weight_radius(r, t, delta):
    return (1.0 + r / np.sqrt(t + 1.0)) ** (4.0 + 0.5 * delta) * (t + 1.0) ** 2


def x0_weight_grid(grid: GridSpec, t: float, delta: float) -> np.ndarray:
    return _x0_weight_radius(grid.radius(), t, delta)


def spectral(values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, axes=SPATIAL_AXES)


def physical(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.irfftn(coeffs, s=grid.shape, axes=SPATIAL_AXES)


def _dirichlet_from_spectrum(coeffs: np.ndarray, grid: GridSpec) -> float:
    # Parseval on the half spectrum: sum_x |grad u|^2 = (1/N) sum_k |k|^2 |u_k|^2
    power = (coeffs.real**2 + coeffs.imag**2) * grid.k_squared() * grid.rfft_weights()
    return 0.5 * float(power.sum()) * grid.cell_volume / grid.n**3


def dirichlet_energy(f: AnyField, coeffs: np.ndarray | None = None) -> float:
    """``(1/2) int |grad Q|^2`` with spectral derivatives (``tr`` contraction for tensors)."""
    if coeffs is None:
        vals = qtensor.to_orthonormal(f.values) if isinstance(f, TensorField) else f.values
        coeffs = spectral(vals)
    return _dirichlet_from_spectrum(coeffs, f.grid)


def total_energy(f: AnyField, p: ModelParams) -> float:
    """Landau-de Gennes energy; for a scalar field, the energy of the reduced equation.

    The reduced energy is ``int |grad l|^2/2 + V(l)``, i.e. 1/6 of the energy
    of the uniaxial tensor ``diag(l, l, -2l)``.
    """
    if isinstance(f, TensorField):
        bulk = qtensor.bulk_energy_density(f.values, p)
    else:
        bulk = qtensor.reduced_potential(f.values, p)
    return dirichlet_energy(f) + float(bulk.sum()) * f.grid.cell_volume


def shift_sample(f: AnyField, r) -> AnyField:
    """Periodic translation: the result at ``x`` equals ``f`` at ``x - r*h``."""
    r = tuple(int(v) for v in r)
    if len(r) != 3:
        raise ValueError("lattice offset must have 3 integer components")
    return f.with_values(np.roll(f.values, r, axis=SPATIAL_AXES))


def truncation_rule(box_len: float, support_radius: float, t_final: float) -> dict:
    """Box-size rule keeping periodic images below quadrature noise up to ``t_final``."""
    required = 2.0 * support_radius + 6.0 * math.sqrt(4.0 * t_final)
    return {"box_len": box_len, "required": required, "satisfied": bool(box_len >= required)}


# ---------------------------------------------------------------- snapshot I/O

_HEADER = struct.Struct("<4sIdd")
TENSOR_MAGIC = b"QTF1"
SCALAR_MAGIC = b"QSF1"


def write_snapshot(path, f: AnyField) -> Path:
    path = Path(path)
    magic = TENSOR_MAGIC if isinstance(f, TensorField) else SCALAR_MAGIC
    planes = f.values if isinstance(f, TensorField) else f.values[None]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, f.grid.n, float(f.grid.box_len), float(f.time_tag)))
        for plane in planes:
            # x-fastest ordering is Fortran order over the (x, y, z) axes
            fh.write(np.asarray(plane, dtype="<f8").ravel(order="F").tobytes())
    return path


def read_snapshot(path) -> AnyField:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, box_len, time_tag = _HEADER.unpack_from(data)
    if magic == TENSOR_MAGIC:
        nplanes = 5
    elif magic == SCALAR_MAGIC:
        nplanes = 1
    else:
        raise ValueError(f"{path}: unknown magic {magic!r}")
    expected = _HEADER.size + nplanes * n**3 * 8
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    grid = GridSpec(int(n), box_len)
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    planes = flat.reshape(nplanes, n**3)
    arr = np.stack([p.reshape(grid.shape, order="F") for p in planes])
    if nplanes == 5:
        return TensorField(grid, arr, time_tag)
    return ScalarField(grid, arr[0], time_tag)


def with_time(f: AnyField, t: float) -> AnyField:
    return replace(f, time_tag=t)
