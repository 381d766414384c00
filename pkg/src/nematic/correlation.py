"""Two-point correlation functions, Dirac-mixture ensembles and regime fits.

``c(r) = int tr(Q(x+r) Q(x)) dx / int tr(Q(x)^2) dx`` is computed for every
lattice offset with one FFT per component, then averaged over shells of
minimum-image radius ``k h`` (bin ``k`` collects ``|r|/h`` rounding to ``k``).
Regime errors compare against a target pointwise on the lattice before
binning, so the bin width does not enter the error.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from nematic import qtensor
from nematic.field import SPATIAL_AXES, AnyField, GridSpec, ScalarField, TensorField

REGIMES = ("gaussian_sqrt_t", "ballistic_t")


@functools.lru_cache(maxsize=8)
def _offset_radius(n: int, box_len: float) -> np.ndarray:
    h = box_len / n
    i = np.arange(n)
    d = np.minimum(i, n - i) * h
    r = np.sqrt(d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2)
    r.flags.writeable = False
    return r


@functools.lru_cache(maxsize=8)
def _bin_index(n: int, box_len: float) -> np.ndarray:
    idx = np.rint(_offset_radius(n, box_len) / (box_len / n)).astype(np.int64)
    idx.flags.writeable = False
    return idx


def offset_radius(grid: GridSpec) -> np.ndarray:
    """Minimum-image length of every lattice offset, in FFT (unshifted) layout."""
    return _offset_radius(grid.n, grid.box_len)


@dataclass
class CorrelationProfile:
    t: float
    r_bins: np.ndarray
    c_values: np.ndarray
    counts: np.ndarray
    norm: float
    grid: GridSpec | None = None
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.c_values) and abs(self.c_values[0] - 1.0) > 1e-10:
            raise ValueError("profile is not normalised at r = 0")

    def bin_mean(self, values3d: np.ndarray) -> np.ndarray:
        idx = _bin_index(self.grid.n, self.grid.box_len).ravel()
        sums = np.bincount(idx, weights=values3d.ravel(), minlength=len(self.r_bins))
        return sums[: len(self.r_bins)] / self.counts

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("r,c\n")
            for r, c in zip(self.r_bins, self.c_values):
                fh.write(f"{float(r)!r},{float(c)!r}\n")
        return path

    def sidecar(self, extra: dict | None = None) -> dict:
        meta = {
            "t": self.t,
            "grid": {"n": self.grid.n, "box_len": self.grid.box_len} if self.grid else None,
            "normalization": self.norm,
            "bins": len(self.r_bins),
        }
        if extra:
            meta.update(extra)
        return meta

    def write(self, csv_path, extra: dict | None = None) -> tuple[Path, Path]:
        csv_path = self.to_csv(csv_path)
        json_path = csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.sidecar(extra), indent=2))
        return csv_path, json_path


def read_profile(csv_path) -> CorrelationProfile:
    csv_path = Path(csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = csv_path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {"t": float("nan"), "normalization": float("nan")}
    grid = GridSpec(meta["grid"]["n"], meta["grid"]["box_len"]) if meta.get("grid") else None
    return CorrelationProfile(meta["t"], data[:, 0], data[:, 1], np.ones(len(data)), meta["normalization"], grid)


def _orthonormal_values(f: AnyField) -> np.ndarray:
    if isinstance(f, ScalarField):
        # tr(Q^2) of diag(l, l, -2l) is 6 l^2
        return math.sqrt(6.0) * f.values[None]
    return qtensor.to_orthonormal(f.values)


def autocorrelation(f: AnyField) -> tuple[np.ndarray, float]:
    """``int tr(Q(x+r)Q(x)) dx`` for every lattice offset ``r`` and its value at ``r = 0``."""
    w = _orthonormal_values(f)
    spec = sfft.rfftn(w, axes=SPATIAL_AXES)
    power = np.sum(spec.real**2 + spec.imag**2, axis=0)
    corr = sfft.irfftn(power, s=f.grid.shape, axes=SPATIAL_AXES) * f.grid.cell_volume
    # the zero offset is exactly the L2 norm squared; take it from the samples
    norm = float(np.sum(w * w)) * f.grid.cell_volume
    corr[0, 0, 0] = norm
    return corr, norm


def _profile(grid: GridSpec, num: np.ndarray, den: float, t: float) -> CorrelationProfile:
    c3 = num / den
    c3[0, 0, 0] = 1.0
    idx = _bin_index(grid.n, grid.box_len).ravel()
    counts = np.bincount(idx)
    nbins = len(counts)
    sums = np.bincount(idx, weights=c3.ravel(), minlength=nbins)
    keep = counts > 0
    r_bins = np.arange(nbins)[keep] * grid.spacing
    prof = CorrelationProfile(t, r_bins, sums[keep] / counts[keep], counts[keep].astype(float), den, grid, c3)
    if not np.all(keep):
        # empty shells cannot occur for bin width h, but keep indices aligned if they do
        raise RuntimeError("empty radial shell")
    return prof


def correlate_single(f: AnyField) -> CorrelationProfile:
    num, den = autocorrelation(f)
    if not den > 0:
        raise ValueError("zero field: the correlation ratio is undefined")
    return _profile(f.grid, num, den, f.time_tag)


def ensemble_correlate_fields(fields: Sequence[AnyField], weights: Sequence[float]) -> CorrelationProfile:
    """Ratio of weighted sums for a Dirac mixture, not the mean of per-member ratios."""
    weights = check_weights(weights)
    if len(fields) != len(weights):
        raise ValueError("one weight per member is required")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("all members must share a grid")
    num = np.zeros(grid.shape)
    den = 0.0
    for f, w in zip(fields, weights):
        nj, dj = autocorrelation(f)
        num += w * nj
        den += w * dj
    if not den > 0:
        raise ValueError("all members vanish: the correlation ratio is undefined")
    return _profile(grid, num, den, fields[0].time_tag)


def ensemble_correlate(trajs, weights: Sequence[float], t: float) -> CorrelationProfile:
    return ensemble_correlate_fields([tr.snapshot_at(t) for tr in trajs], weights)


def check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a nonempty list")
    if np.any(w <= 0) or np.any(w > 1):
        raise ValueError("weights must lie in (0, 1]")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w


@dataclass(frozen=True)
class EnsembleMember:
    weight: float
    source: str


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple[EnsembleMember, ...]

    def __post_init__(self):
        check_weights([m.weight for m in self.members])

    @property
    def weights(self) -> list[float]:
        return [m.weight for m in self.members]


# ------------------------------------------------------------------ regime errors


def _banded_error(prof: CorrelationProfile, target: Callable[[np.ndarray], np.ndarray], r_max: float) -> float:
    sel = prof.r_bins <= r_max + 1e-12
    if prof.raw is not None and prof.grid is not None:
        diff = prof.bin_mean(prof.raw - target(offset_radius(prof.grid)))
        return float(np.max(np.abs(diff[sel])))
    return float(np.max(np.abs(prof.c_values[sel] - target(prof.r_bins[sel]))))


def _cap(prof: CorrelationProfile) -> float:
    if prof.grid is None:
        return float(prof.r_bins[-1])
    return prof.grid.box_len / 4.0


def gaussian_target(r, t: float):
    return np.exp(-np.asarray(r) ** 2 / (8.0 * t))


def gaussian_regime_error(prof: CorrelationProfile, t: float | None = None) -> float:
    """Sup over shells with ``|r| <= L/4`` of ``|c(r, t) - exp(-|r|^2/8t)|``."""
    t = prof.t if t is None else t
    if not t > 0:
        raise ValueError("need t > 0")
    return _banded_error(prof, lambda r: gaussian_target(r, t), _cap(prof))


def ball_overlap_correlation(z, c_bar: float):
    """Overlap fraction of two balls of radius ``c_bar`` whose centres are ``z`` apart."""
    if not c_bar > 0:
        raise ValueError("c_bar must be positive")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    val = (4.0 * c_bar + z) * (2.0 * c_bar - z) ** 2 / (16.0 * c_bar**3)
    out = np.where(z <= 2.0 * c_bar, val, 0.0)
    return float(out) if out.ndim == 0 else out


def ballistic_regime_error(prof: CorrelationProfile, c_bar: float, t: float | None = None) -> float:
    """Sup over shells with ``|r| <= L/4`` of ``|c(r, t) - P(|r|/t)|``."""
    t = prof.t if t is None else t
    if not t > 0:
        raise ValueError("need t > 0")
    return _banded_error(prof, lambda r: ball_overlap_correlation(np.asarray(r) / t, c_bar), _cap(prof))


@dataclass
class RegimeFit:
    regime: str
    slope: float
    r_squared: float
    times: np.ndarray
    errors: np.ndarray
    window: tuple[float, float]
    c_bar: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if len(self.times) == 0:
            raise ValueError("fit window is empty")
        if np.any(np.asarray(self.errors) < 0):
            raise ValueError("errors must be nonnegative")

    def verdict(self, threshold: float) -> bool:
        return bool(self.slope <= threshold)

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "c_bar": self.c_bar,
            "series": [[float(t), float(e)] for t, e in zip(self.times, self.errors)],
        }


def rate_fit(errors) -> tuple[float, float]:
    """Least-squares slope of ``log e`` against ``log t`` and its ``r^2``."""
    data = np.asarray(errors, dtype=float).reshape(-1, 2)
    data = data[(data[:, 1] > 0) & (data[:, 0] > 0)]
    if len(data) < 5:
        raise ValueError(f"need >= 5 positive samples, have {len(data)}")
    t, e = data[:, 0], data[:, 1]
    if t.max() < 10.0 * t.min() * (1 - 1e-12):
        raise ValueError("samples must span at least one decade in t")
    x, y = np.log(t), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def gaussian_regime_fit(profiles: Sequence[CorrelationProfile]) -> RegimeFit:
    times = np.array([p.t for p in profiles])
    errs = np.array([gaussian_regime_error(p) for p in profiles])
    slope, r2 = rate_fit(np.column_stack([times, errs]))
    return RegimeFit("gaussian_sqrt_t", slope, r2, times, errs, (float(times.min()), float(times.max())))
