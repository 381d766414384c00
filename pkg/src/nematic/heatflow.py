"""Heat kernel, the periodic heat semigroup and decay diagnostics for it."""
from __future__ import annotations

import math
import threading

import numpy as np
from scipy import integrate

from nematic.field import AnyField, GridSpec, ScalarField, physical, spectral

_FOUR_PI = 4.0 * math.pi


def _kernel_from_r2(r2, t):
    return np.exp(-r2 / (4.0 * t)) / (_FOUR_PI * t) ** 1.5


def heat_kernel(x, t):
    """``exp(-|x|^2/4t) / (4 pi t)^(3/2)``; ``x`` has a trailing axis of length 3."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat_kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    return _kernel_from_r2(np.sum(x * x, axis=-1), t)


def phi1(x, t):
    """Heat kernel shifted by one time unit, defined for ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("phi1 needs t >= 0")
    return heat_kernel(x, t + 1.0)


def gaussian_samples(grid: GridSpec, t: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Samples of the heat kernel at time ``t`` centred at ``center``."""
    if t <= 0:
        raise ValueError("need t > 0")
    x, y, z = grid.mesh()
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    return _kernel_from_r2(r2, t)


class HeatApplyPlan:
    """Caches the Fourier multipliers ``exp(-|k|^2 t)`` of one grid."""

    def __init__(self, grid: GridSpec, max_cached: int = 16):
        self.grid = grid
        self._symbols: dict[float, np.ndarray] = {}
        self._max_cached = max_cached
        self._lock = threading.Lock()

    def symbol(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        with self._lock:
            sym = self._symbols.get(t)
            if sym is None:
                sym = np.exp(-self.grid.k_squared() * t)
                sym.flags.writeable = False
                if len(self._symbols) >= self._max_cached:
                    self._symbols.pop(next(iter(self._symbols)))
                self._symbols[t] = sym
        return sym

    def apply_values(self, values: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(values, copy=True)
        return physical(spectral(values) * self.symbol(t), self.grid)

    def apply(self, f: AnyField, t: float) -> AnyField:
        return f.with_values(self.apply_values(f.values, t), f.time_tag + t)


def apply_heat(f: AnyField, t: float, plan: HeatApplyPlan | None = None) -> AnyField:
    """Exact periodic heat flow for time ``t``; the result's time tag advances by ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    plan = plan or HeatApplyPlan(f.grid)
    return plan.apply(f, t)


def zero_mean_residual(u0: ScalarField, t: float, plan: HeatApplyPlan | None = None) -> ScalarField:
    """``e^{t Lap} u0 - Phi(., t) int u0``, the part of the heat flow beyond the leading kernel."""
    if t <= 0:
        raise ValueError("t must be positive")
    evolved = apply_heat(u0, t, plan)
    return evolved.with_values(evolved.values - gaussian_samples(u0.grid, t) * u0.integral())


def decay_bound_profile(u0: ScalarField, t: float, radius, beta: float):
    """Right side of the pointwise zero-mean estimate without its constant.

    ``t^-2 (1 + |x|/sqrt(8t))^-beta  int |y| (1 + |y|/sqrt(8t))^beta |u0(y)| dy``
    """
    s = math.sqrt(8.0 * t)
    ry = u0.grid.radius()
    moment = float(np.sum(ry * (1.0 + ry / s) ** beta * np.abs(u0.values)) * u0.grid.cell_volume)
    return t**-2 * (1.0 + np.asarray(radius) / s) ** (-beta) * moment


def fit_decay_constant(u0: ScalarField, times, probes, beta: float = 2.0) -> dict:
    """Smallest constant making the pointwise estimate hold on the probe set.

    ``probes`` is an integer array ``(m, 4)`` of ``(time index, i, j, k)``.
    """
    probes = np.asarray(probes, dtype=int)
    plan = HeatApplyPlan(u0.grid)
    radius = u0.grid.radius()
    ratios = np.empty(len(probes))
    for ti, t in enumerate(times):
        sel = probes[:, 0] == ti
        if not np.any(sel):
            continue
        mbar = zero_mean_residual(u0, t, plan).values
        idx = tuple(probes[sel, 1:].T)
        bound = decay_bound_profile(u0, t, radius[idx], beta)
        ratios[sel] = np.abs(mbar[idx]) / bound
    return {"C": float(ratios.max()), "ratios": ratios}


def mineineq_check(X: float, Y: float, beta: float) -> tuple[float, float]:
    """``(int_{X-Y}^{X} exp(-xi^2) dxi,  Y ((1+Y)/(1+X))^beta)``."""
    if X < 0 or Y < 0 or beta <= 0:
        raise ValueError("need X, Y >= 0 and beta > 0")
    if Y == 0:
        return 0.0, 0.0
    lhs, _ = integrate.quad(lambda xi: math.exp(-xi * xi), X - Y, X, epsabs=1e-12, epsrel=1e-12, limit=200)
    return lhs, Y * ((1.0 + Y) / (1.0 + X)) ** beta


def kernel_difference_bound_check(x, t):
    """``(|Phi(x,t+1) - Phi(x,t)|,  2 exp(-|x|^2/8(t+1)) / (t+1)^(5/2))`` for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValueError("the kernel-difference bound needs t >= 1")
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    diff = np.abs(_kernel_from_r2(r2, t + 1.0) - _kernel_from_r2(r2, t))
    bound = 2.0 * np.exp(-r2 / (8.0 * (t + 1.0))) / (t + 1.0) ** 2.5
    return diff, bound
