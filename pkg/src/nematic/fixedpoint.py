"""Representation ``Q = A e^{-at} Phi_1 + e^{-at} V`` by Picard iteration.

The pair ``(A, V)`` is the fixed point of ``F = (F1, F2)``:

    F1 = int q0 + int_0^inf int h(A Phi_1 + V, s) dy ds
    F2(t) = e^{t Lap}(q0 - G int q0) + int_0^t e^{(t-s) Lap} h(s) ds - Phi_1(t) (F1 - int q0)

with ``G`` the unit Gaussian ``e^{-|y|^2/4}/(4 pi)^{3/2}`` and ``Phi_1(t) = e^{t Lap} G``.
``V`` lives on a time grid.  Between nodes ``h`` is split as
``e^{-as} g1(s) + e^{-2as} g2(s)`` with ``g1, g2`` interpolated linearly, and
each piece is integrated exactly against the heat propagator per Fourier
mode.  The mass of the Duhamel integral (its zero mode) then gives the time
integral in F1 with the same quadrature.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from nematic import qtensor
from nematic.dynamics import Trajectory, phi_functions
from nematic.field import (
    SPATIAL_AXES,
    GridSpec,
    TensorField,
    a_norm,
    physical,
    read_snapshot,
    spectral,
    write_snapshot,
    x0_weight_grid,
)
from nematic.heatflow import gaussian_samples
from nematic.qtensor import ModelParams, TracelessSym3

TAIL_TOL = 1e-12


class ContractionError(RuntimeError):
    def __init__(self, message: str, ratios):
        super().__init__(f"{message}; ratio history: {[round(r, 4) for r in ratios]}")
        self.ratios = list(ratios)


# ------------------------------------------------------------------ time grid


def horizon_for(p: ModelParams, tol: float = TAIL_TOL) -> float:
    """Smallest ``T`` with ``e^{-aT} (T+1)^{-3} <= tol`` (the integrand bound relative to its peak at 0)."""
    f = lambda t: -p.a * t - 3.0 * math.log1p(t) - math.log(tol)
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, 0.0, hi, xtol=1e-10)


def make_time_grid(horizon: float, t0: float = 0.05, rho: float = 1.05, n_initial: int = 10, include=()) -> np.ndarray:
    """Uniform nodes on ``[0, t0]`` then geometric nodes ``t0 rho^k`` up to ``horizon``.

    Times in ``include`` are inserted as extra nodes (dropping any existing
    node closer than a quarter of the local spacing).
    """
    if not (horizon > t0 > 0 and rho > 1 and n_initial >= 1):
        raise ValueError("need horizon > t0 > 0, rho > 1, n_initial >= 1")
    head = np.linspace(0.0, t0, n_initial + 1)
    k_max = math.ceil(math.log(horizon / t0) / math.log(rho))
    nodes = np.concatenate([head, t0 * rho ** np.arange(1, k_max + 1)])
    for t in include:
        if not 0 < t <= nodes.max():
            raise ValueError(f"extra node {t:g} outside (0, {nodes.max():g}]")
        gap = 0.25 * t * (rho - 1.0) if t > t0 else 0.25 * t0 / n_initial
        nodes = np.append(nodes[np.abs(nodes - t) > gap], t)
    return np.unique(nodes)


def tail_weight(T: float, p: ModelParams) -> float:
    return math.exp(-p.a * T) * (T + 1.0) ** -3


# ------------------------------------------------------------------ state


@dataclass
class DecompositionState:
    A: TracelessSym3
    V: list
    x0_norm_estimate: float
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    ball_radius: float = 0.0
    a_norm_q0: float = float("nan")
    tail: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([v.time_tag for v in self.V])

    @property
    def grid(self) -> GridSpec:
        return self.V[0].grid

    def V_at(self, t: float, tol: float = 1e-9) -> TensorField:
        for v in self.V:
            if abs(v.time_tag - t) <= tol * max(1.0, t):
                return v
        raise KeyError(f"no V node at t={t:g}")

    def reconstruct(self, t: float, p: ModelParams) -> TensorField:
        """``A e^{-at} Phi_1(t) + e^{-at} V(t)`` at a grid node."""
        v = self.V_at(t)
        phi = _discrete_phi1(v.grid, v.time_tag)
        q = math.exp(-p.a * v.time_tag) * (np.asarray(self.A)[:, None, None, None] * phi + v.values)
        return v.with_values(q)


def x0_norm(V, delta: float) -> float:
    """``max over nodes and grid points of omega(x, t) |V(x, t)|``."""
    best = 0.0
    for v in V:
        best = max(best, float(np.max(x0_weight_grid(v.grid, v.time_tag, delta) * v.pointwise_norm())))
    return best


def pair_norm(A, V, delta: float) -> float:
    return float(np.sqrt(qtensor.trace_sq(np.asarray(A)))) + x0_norm(V, delta)


# ------------------------------------------------------------------ operator F


def _unit_gaussian(grid: GridSpec) -> np.ndarray:
    return gaussian_samples(grid, 1.0)


def _discrete_phi1(grid: GridSpec, t: float) -> np.ndarray:
    g = _unit_gaussian(grid)
    if t == 0:
        return g
    return physical(spectral(g) * np.exp(-grid.k_squared() * t), grid)


@dataclass
class _Sweep:
    A: np.ndarray
    V: list
    H_total: np.ndarray
    tail: np.ndarray


def _g_parts(R, p):
    sq = qtensor.square_traceless(R)
    return p.b * sq, -p.c * qtensor.trace_sq(R) * R


def _sweep(A, V_vals, q0: TensorField, p: ModelParams, times: np.ndarray, reaction: bool = True) -> _Sweep:
    """One application of ``F``; ``V_vals`` holds arrays at ``times`` (or ``None`` for zero)."""
    grid = q0.grid
    vol = grid.cell_volume
    k2 = grid.k_squared()
    A = np.asarray(A, dtype=float)
    mass0 = q0.integral()
    g_hat = spectral(_unit_gaussian(grid))
    base_hat = spectral(q0.values) - g_hat[None] * mass0[:, None, None, None]

    m = len(times)
    R_needed = reaction and (np.any(A != 0) or V_vals is not None)
    D_hat = np.zeros_like(base_hat)
    out = []
    prev = None
    last_mass = np.zeros(5)
    for k, t in enumerate(times):
        phi_hat = g_hat * np.exp(-k2 * t)
        if R_needed:
            R = physical(phi_hat, grid)[None] * A[:, None, None, None]
            if V_vals is not None:
                R = R + V_vals[k]
            g1, g2 = (spectral(g) for g in _g_parts(R, p))
            if prev is not None:
                dt = t - times[k - 1]
                decay = np.exp(-k2 * dt)
                D_hat *= decay
                for rate, gk, gk1 in ((p.a, prev[0], g1), (2.0 * p.a, prev[1], g2)):
                    f1, f2 = phi_functions((rate - k2) * dt)
                    D_hat += (math.exp(-rate * t) * dt) * (f1 * gk + f2 * (gk1 - gk))
            prev = (g1, g2)
            last_mass = (math.exp(-p.a * t) * g1[..., 0, 0, 0].real + math.exp(-2 * p.a * t) * g2[..., 0, 0, 0].real) * vol
        out.append(physical(base_hat * np.exp(-k2 * t) + D_hat, grid))
    H_T = D_hat[..., 0, 0, 0].real * vol
    T = times[-1]
    # integrand mass beyond the horizon decays like e^{-as}(s+1)^{-3}
    tail = last_mass / (p.a + 3.0 / (T + 1.0))
    H_total = H_T + tail
    for k, t in enumerate(times):
        out[k] = out[k] - _discrete_phi1(grid, t)[None] * H_total[:, None, None, None]
    return _Sweep(mass0 + H_total, out, H_total, tail)


def _times_of(V, t_horizon, times):
    if V is not None:
        return np.array([v.time_tag for v in V])
    if times is not None:
        return np.asarray(times, dtype=float)
    return make_time_grid(t_horizon)


def _check_horizon(T: float, p: ModelParams, tol: float = TAIL_TOL):
    if tail_weight(T, p) > tol:
        raise ValueError(
            f"time horizon {T:g} too short: tail weight e^(-aT)(T+1)^-3 = {tail_weight(T, p):.3g} exceeds {tol:g}; "
            f"use T >= {horizon_for(p, tol):.4g}"
        )


def apply_F1(A, V, q0: TensorField, p: ModelParams, t_horizon: float, times=None, reaction: bool = True) -> TracelessSym3:
    """First component of ``F``; ``V`` is a list of TensorField on the time grid or ``None`` for zero."""
    grid_times = _times_of(V, t_horizon, times)
    _check_horizon(grid_times[-1], p)
    vals = None if V is None else [v.values for v in V]
    return TracelessSym3.from_array(_sweep(A, vals, q0, p, grid_times, reaction).A)


def apply_F2(A, V, q0: TensorField, p: ModelParams, t_eval: float, t_horizon: float | None = None, times=None, reaction: bool = True) -> TensorField:
    """Second component of ``F`` evaluated at the time-grid node ``t_eval``."""
    grid_times = _times_of(V, t_horizon or horizon_for(p), times)
    _check_horizon(grid_times[-1], p)
    idx = np.nonzero(np.abs(grid_times - t_eval) <= 1e-9 * max(1.0, t_eval))[0]
    if len(idx) == 0:
        raise KeyError(f"t={t_eval:g} is not a time-grid node")
    vals = None if V is None else [v.values for v in V]
    sweep = _sweep(A, vals, q0, p, grid_times, reaction)
    return TensorField(q0.grid, sweep.V[idx[0]], float(grid_times[idx[0]]))


def picard_solve(
    q0: TensorField,
    p: ModelParams,
    time_grid=None,
    max_iter: int = 40,
    tol: float = 1e-10,
    reaction: bool = True,
    eps0: float | None = None,
) -> DecompositionState:
    """Iterate ``(A, V) <- F(A, V)`` from zero until the X-norm update is below ``tol`` relative to the iterate.

    ``eps0``, when given, is the X-norm radius the iterates must stay inside;
    leaving it aborts with ContractionError.
    """
    times = make_time_grid(max(horizon_for(p), 1.0)) if time_grid is None else np.asarray(time_grid, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    _check_horizon(times[-1], p)
    size = a_norm(q0, p.delta)
    if size > p.eta:
        warnings.warn(f"initial data a-norm {size:.4g} exceeds eta = {p.eta:g}; contraction is not guaranteed", stacklevel=2)

    A = np.zeros(5)
    V = None
    ratios = []
    prev_diff = None
    radius = 0.0
    for it in range(1, max_iter + 1):
        sweep = _sweep(A, V, q0, p, times, reaction)
        dA = float(np.sqrt(qtensor.trace_sq(sweep.A - A)))
        dV = 0.0
        for k, t in enumerate(times):
            w = x0_weight_grid(q0.grid, t, p.delta)
            diff = sweep.V[k] if V is None else sweep.V[k] - V[k]
            dV = max(dV, float(np.max(w * np.sqrt(np.maximum(qtensor.trace_sq(diff), 0.0)))))
        diff_norm = dA + dV
        A, V = sweep.A, sweep.V
        size_now = float(np.sqrt(qtensor.trace_sq(A))) + max(
            float(np.max(x0_weight_grid(q0.grid, t, p.delta) * np.sqrt(np.maximum(qtensor.trace_sq(v), 0.0))))
            for t, v in zip(times, V)
        )
        radius = max(radius, size_now)
        if eps0 is not None and size_now > eps0:
            raise ContractionError(f"iterate {it} has X-norm {size_now:.4g} outside the ball eps0 = {eps0:g}", ratios)
        if prev_diff is not None and prev_diff > 0:
            ratios.append(diff_norm / prev_diff)
        prev_diff = diff_norm
        if diff_norm <= tol * max(size_now, np.finfo(float).tiny):
            fields = [TensorField(q0.grid, v, float(t)) for t, v in zip(times, V)]
            return DecompositionState(
                TracelessSym3.from_array(A), fields, x0_norm(fields, p.delta), ratios, it, True, radius, size, sweep.tail
            )
    raise ContractionError(f"no convergence in {max_iter} iterations", ratios)


# ------------------------------------------------------------------ coefficient from simulation


@dataclass
class CoefficientEstimate:
    A: TracelessSym3
    quad_error: float
    tail: float
    mass_check: TracelessSym3 | None = None

    @property
    def error_bar(self) -> float:
        return self.quad_error + abs(self.tail)

    @property
    def norm(self) -> float:
        return self.A.norm()


def _trapezoid(t, y):
    return np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)[:, None], axis=0)


def estimate_A(traj: Trajectory, p: ModelParams) -> CoefficientEstimate:
    """``int q0 + int_0^T int h(R, s) dy ds`` from the per-step non-linear masses, with a tail estimate.

    The error bar combines a Richardson estimate (full series against every
    second sample) with the magnitude of the extrapolated tail.
    """
    d = traj.diagnostics
    t = np.asarray(d.t)
    mass0 = np.atleast_1d(np.asarray(d.mass[0], dtype=float))
    nl = np.asarray(d.nl_mass, dtype=float).reshape(len(t), -1)
    if traj.kind in ("tensor", "scalar"):
        # h(R, s) = e^{as} N(Q) with Q = e^{-as} R
        integrand = np.exp(p.a * t)[:, None] * nl
    else:
        integrand = nl
    full = _trapezoid(t, integrand)
    idx = np.arange(0, len(t), 2)
    if idx[-1] != len(t) - 1:
        idx = np.append(idx, len(t) - 1)
    coarse = _trapezoid(t[idx], integrand[idx])
    quad_err = np.abs(full - coarse) / 3.0
    T = t[-1]
    tail = integrand[-1] / (p.a + 3.0 / (T + 1.0))
    total = mass0 + full + tail
    last = np.atleast_1d(np.asarray(d.mass[-1], dtype=float))
    scale = math.exp(p.a * T) if traj.kind in ("tensor", "scalar") else 1.0
    check = last * scale
    if traj.kind == "scalar":
        total = np.asarray(qtensor.make_uniaxial(float(total[0])))
        check = np.asarray(qtensor.make_uniaxial(float(check[0])))
        quad_err = quad_err * math.sqrt(6.0)
        tail = tail * math.sqrt(6.0)
    err = float(np.sqrt(np.sum(np.abs(quad_err) ** 2)))
    return CoefficientEstimate(
        TracelessSym3.from_array(total), err, float(np.sqrt(np.sum(np.abs(tail) ** 2))), TracelessSym3.from_array(check)
    )


def extract_A(traj: Trajectory, p: ModelParams) -> TracelessSym3:
    return estimate_A(traj, p).A


# ------------------------------------------------------------------ checks


@dataclass
class DecayReport:
    passed: bool
    slope: float
    threshold: float
    times: np.ndarray
    norms: np.ndarray


def v_decay_check(state: DecompositionState, threshold: float = -1.25 + 0.15, decade: bool = True) -> DecayReport:
    """Log-log slope of ``||V(t)||_2`` against ``t + 1`` over the last decade of the time grid."""
    t = state.times
    s = t + 1.0
    sel = s >= s[-1] / 10.0 if decade else np.ones_like(s, dtype=bool)
    if sel.sum() < 5:
        raise ValueError(f"need >= 5 nodes for the decay fit, have {int(sel.sum())}")
    norms = np.array([math.sqrt(float(np.sum(qtensor.trace_sq(v.values))) * v.grid.cell_volume) for v in state.V])
    if np.all(norms[sel] == 0):
        return DecayReport(True, float("-inf"), threshold, t[sel], norms[sel])
    keep = sel & (norms > 0)
    slope = float(np.polyfit(np.log(s[keep]), np.log(norms[keep]), 1)[0])
    return DecayReport(slope <= threshold, slope, threshold, t[sel], norms[sel])


def calibrate_eta(make_data, alphas, p: ModelParams, time_grid=None, ratio_cap: float = 0.5) -> dict:
    """Largest a-norm over a probe family for which every Picard ratio stays below ``ratio_cap``.

    ``make_data(alpha)`` returns a TensorField.  Scanning stops at the first
    failure, so the family should be ordered by increasing size.
    """
    rows = []
    eta = 0.0
    for alpha in alphas:
        q0 = make_data(alpha)
        size = a_norm(q0, p.delta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                state = picard_solve(q0, p, time_grid)
                worst = max(state.ratios) if state.ratios else 0.0
            except ContractionError as exc:
                worst = max(exc.ratios) if exc.ratios else float("inf")
        rows.append({"alpha": float(alpha), "a_norm": size, "max_ratio": worst})
        if worst > ratio_cap:
            break
        eta = max(eta, size)
    return {"eta": eta, "ratio_cap": ratio_cap, "scan": rows}


# ------------------------------------------------------------------ directory I/O


def save_decomposition(state: DecompositionState, out_dir, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "A.json").write_text(json.dumps(dict(zip(qtensor.COMPONENTS, map(float, np.asarray(state.A)))), indent=2))
    files = []
    for k, v in enumerate(state.V):
        name = f"V_t{k:04d}.qtf1"
        write_snapshot(out / name, v)
        files.append(name)
    meta = {
        "times": [float(t) for t in state.times],
        "files": files,
        "x0_norm_estimate": state.x0_norm_estimate,
        "ratios": [float(r) for r in state.ratios],
        "iterations": state.iterations,
        "converged": state.converged,
        "ball_radius": state.ball_radius,
        "a_norm_q0": state.a_norm_q0,
    }
    if extra:
        meta.update(extra)
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return out


def load_decomposition(in_dir) -> DecompositionState:
    src = Path(in_dir)
    a = json.loads((src / "A.json").read_text())
    meta = json.loads((src / "meta.json").read_text())
    V = [read_snapshot(src / name) for name in meta["files"]]
    return DecompositionState(
        TracelessSym3(**{k: float(a[k]) for k in qtensor.COMPONENTS}),
        V,
        meta["x0_norm_estimate"],
        meta.get("ratios", []),
        meta.get("iterations", 0),
        meta.get("converged", True),
        meta.get("ball_radius", 0.0),
        meta.get("a_norm_q0", float("nan")),
    )
