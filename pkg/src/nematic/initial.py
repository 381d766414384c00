"""Initial-data families and a small spec-string parser for them.

Spec strings look like ``uniaxial_power_tail alpha=0.01 delta=2``,
``plateau radius=3``, ``gaussian amp=0.5 time=0`` or ``file:path/to/snap.qtf1``.
"""
from __future__ import annotations

import math
import shlex

import numpy as np

from nematic import qtensor
from nematic.field import AnyField, GridSpec, ScalarField, TensorField, read_snapshot
from nematic.heatflow import gaussian_samples
from nematic.qtensor import ModelParams


class GeneratorError(ValueError):
    pass


def _radius_from(grid: GridSpec, center) -> np.ndarray:
    # minimum-image distance on the torus
    L = grid.box_len
    x, y, z = grid.mesh()
    parts = []
    for coord, c0 in zip((x, y, z), center):
        d = coord - c0
        d = d - L * np.round(d / L)
        parts.append(d * d)
    return np.sqrt(parts[0] + parts[1] + parts[2])


def power_tail(grid: GridSpec, alpha: float, delta: float, scale: float = 1.0, center=(0.0, 0.0, 0.0)) -> ScalarField:
    """``-alpha / (1 + |x - center|/scale)^(8 + delta)``."""
    if alpha < 0 or delta <= 0 or scale <= 0:
        raise GeneratorError("need alpha >= 0, delta > 0, scale > 0")
    r = _radius_from(grid, center)
    return ScalarField(grid, -alpha / (1.0 + r / scale) ** (8.0 + delta))


def plateau(grid: GridSpec, radius: float, p: ModelParams, center=(0.0, 0.0, 0.0)) -> ScalarField:
    """``lambda*`` inside the ball of the given radius, 0 outside."""
    if radius <= 0:
        raise GeneratorError("radius must be positive")
    r = _radius_from(grid, center)
    return ScalarField(grid, np.where(r < radius, qtensor.lambda_star(p), 0.0))


def gaussian_tensor(grid: GridSpec, amp, time: float = 0.0, center=(0.0, 0.0, 0.0)) -> TensorField:
    """``A0 Phi(x - center, time + 1)``; a scalar ``amp`` means ``A0 = diag(amp, amp, -2 amp)``."""
    a0 = np.asarray(qtensor.make_uniaxial(amp) if np.ndim(amp) == 0 else amp, dtype=float)
    if a0.shape != (5,):
        raise GeneratorError("amp must be a scalar or 5 components")
    g = gaussian_samples(grid, time + 1.0, center)
    return TensorField(grid, a0[:, None, None, None] * g[None], 0.0)


_FLOAT_KEYS = {
    "uniaxial_power_tail": {"alpha", "delta", "scale", "cx", "cy", "cz"},
    "plateau": {"radius", "cx", "cy", "cz"},
    "gaussian": {"amp", "time", "cx", "cy", "cz"},
    "zero": set(),
}


def parse_spec(spec: str) -> tuple[str, dict]:
    spec = spec.strip()
    if spec.startswith("file:"):
        return "file", {"path": spec[5:].strip()}
    tokens = shlex.split(spec)
    if not tokens:
        raise GeneratorError("empty generator spec")
    name, rest = tokens[0], tokens[1:]
    if name not in _FLOAT_KEYS:
        raise GeneratorError(f"unknown generator {name!r}; known: {sorted(_FLOAT_KEYS) + ['file:']}")
    args = {}
    for tok in rest:
        key, sep, val = tok.partition("=")
        if not sep:
            raise GeneratorError(f"expected key=value, got {tok!r}")
        if key not in _FLOAT_KEYS[name]:
            raise GeneratorError(f"generator {name!r} has no parameter {key!r}")
        try:
            args[key] = float(val)
        except ValueError as exc:
            raise GeneratorError(f"{key}={val!r} is not a number") from exc
        if not math.isfinite(args[key]):
            raise GeneratorError(f"{key} must be finite")
    return name, args


def build(spec: str, grid: GridSpec, p: ModelParams, kind: str = "tensor") -> AnyField:
    """Materialise a spec string as a TensorField (``kind='tensor'``) or ScalarField."""
    name, args = parse_spec(spec)
    center = (args.pop("cx", 0.0), args.pop("cy", 0.0), args.pop("cz", 0.0))
    if name == "file":
        f = read_snapshot(args["path"])
        if f.grid != grid:
            raise GeneratorError(f"{args['path']}: grid {f.grid} differs from configured {grid}")
    elif name == "zero":
        f = ScalarField(grid, np.zeros(grid.shape))
    elif name == "uniaxial_power_tail":
        if "alpha" not in args:
            raise GeneratorError("uniaxial_power_tail needs alpha=")
        f = power_tail(grid, args["alpha"], args.get("delta", p.delta), args.get("scale", 1.0), center)
    elif name == "plateau":
        if "radius" not in args:
            raise GeneratorError("plateau needs radius=")
        f = plateau(grid, args["radius"], p, center)
    else:
        if "amp" not in args:
            raise GeneratorError("gaussian needs amp=")
        f = gaussian_tensor(grid, args["amp"], args.get("time", 0.0), center)
    if kind == "tensor" and isinstance(f, ScalarField):
        return f.to_tensor()
    if kind == "scalar" and isinstance(f, TensorField):
        off = np.max(np.abs(f.values[2:])) + np.max(np.abs(f.values[0] - f.values[1]))
        if off > 0:
            raise GeneratorError("data is not uniaxial; cannot run the scalar equation")
        return ScalarField(grid, f.values[0], f.time_tag)
    return f
