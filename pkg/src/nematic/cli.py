"""Command-line driver: ``nematic {simulate,correlate,ensemble,decompose,regime,fronts}``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

import nematic
from nematic import config as cfgmod
from nematic import correlation, dynamics, fixedpoint, initial, qtensor
from nematic.field import ScalarField, TensorField, read_snapshot, truncation_rule, write_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4


@dataclass
class RunManifest:
    digest: str
    params: dict
    grid: dict
    command: str
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    version: str = nematic.__version__
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        missing = [p for p in self.outputs if not (out_dir / p).exists()]
        if missing:
            raise RuntimeError(f"declared outputs missing: {missing}")
        body = {
            "digest": self.digest,
            "params": self.params,
            "grid": self.grid,
            "command": self.command,
            "outputs": self.outputs,
            "wall_clock_s": self.wall_clock_s,
            "version": self.version,
        }
        body.update(self.extra)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(body, indent=2, sort_keys=True))
        return path


def _params_dict(p) -> dict:
    return {"a": p.a, "b": p.b, "c": p.c, "delta": p.delta, "eta": p.eta}


def _snapshot_name(f) -> str:
    ext = "qtf1" if isinstance(f, TensorField) else "qsf1"
    return f"snap_t{f.time_tag:.6f}.{ext}"


def _profile_name(t: float) -> str:
    return f"profile_t{t:.6f}.csv"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _physical_snapshots(traj, p):
    if traj.kind == "transformed":
        return [dynamics.from_transformed(s, p) for s in traj.snapshots]
    return list(traj.snapshots)


def _simulate_member(spec, grid, p, sim, kind):
    q0 = initial.build(spec, grid, p, kind="scalar" if kind == "scalar" else "tensor")
    return dynamics.evolve(kind, q0, p, sim)


# ------------------------------------------------------------------ commands


def cmd_simulate(args) -> int:
    cfg = cfgmod.load(args.config)
    p, grid = cfgmod.model_params(cfg), cfgmod.grid_spec(cfg)
    sim, kind = cfgmod.sim_config(cfg, grid), cfgmod.run_kind(cfg)
    spec = cfg.get("initial", "data", required=True)
    out = _out_dir(args)
    t0 = time.perf_counter()
    traj = _simulate_member(spec, grid, p, sim, kind)
    outputs = []
    for snap in _physical_snapshots(traj, p):
        name = _snapshot_name(snap)
        write_snapshot(out / name, snap)
        outputs.append(name)
    traj.diagnostics.to_csv(out / "diagnostics.csv")
    outputs.append("diagnostics.csv")
    support = float(cfg.number("initial", "support_radius", grid.box_len / 4))
    RunManifest(
        cfg.digest(), _params_dict(p), {"n": grid.n, "box_len": grid.box_len}, "simulate", outputs,
        time.perf_counter() - t0,
        extra={"kind": kind, "truncation_rule": truncation_rule(grid.box_len, support, sim.t_final)},
    ).write(out)
    return EXIT_OK


def _collect_snapshots(paths, t):
    files = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("snap_t*.q?f1")))
        elif path.exists():
            files.append(path)
        else:
            raise FileNotFoundError(f"input not found: {path}")
    if not files:
        raise FileNotFoundError("no snapshot files found in the given inputs")
    fields = [read_snapshot(f) for f in files]
    if t is not None:
        chosen = [f for f in fields if abs(f.time_tag - t) <= 1e-9 * max(1.0, t)]
        if not chosen:
            raise dynamics.MissingSnapshotError(t, sorted({f.time_tag for f in fields}))
        fields = chosen
    return fields


def cmd_correlate(args) -> int:
    fields = _collect_snapshots(args.inputs, args.time)
    out = _out_dir(args)
    written = []
    for f in fields:
        prof = correlation.correlate_single(f)
        csv, js = prof.write(out / _profile_name(f.time_tag))
        written += [csv.name, js.name]
    (out / "correlate.json").write_text(json.dumps({"outputs": written}, indent=2))
    return EXIT_OK


def _ensemble_trajectories(cfg, threads):
    p, grid = cfgmod.model_params(cfg), cfgmod.grid_spec(cfg)
    sim, kind = cfgmod.sim_config(cfg, grid), cfgmod.run_kind(cfg)
    members = cfgmod.ensemble_members(cfg)
    try:
        weights = correlation.check_weights([w for w, _ in members])
    except ValueError as exc:
        raise cfgmod.ConfigError(f"{cfg.source}: [ensemble] {exc}") from None
    specs = [s for _, s in members]
    for s in specs:
        try:
            initial.parse_spec(s)
        except initial.GeneratorError as exc:
            raise cfgmod.ConfigError(f"{cfg.source}: [ensemble] {exc}") from None
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(lambda s: _simulate_member(s, grid, p, sim, kind), specs))
    else:
        trajs = [_simulate_member(s, grid, p, sim, kind) for s in specs]
    return p, grid, sim, trajs, weights


def cmd_ensemble(args) -> int:
    cfg = cfgmod.load(args.config)
    t0 = time.perf_counter()
    p, grid, sim, trajs, weights = _ensemble_trajectories(cfg, args.threads)
    raw_times = cfg.get("ensemble", "times")
    times = cfgmod.parse_times(raw_times, cfg.where("ensemble", "times")) if raw_times else sim.snapshot_times
    out = _out_dir(args)
    outputs, series = [], []
    for t in times:
        fields = [s for s in (_find(tr, t, p) for tr in trajs)]
        prof = correlation.ensemble_correlate_fields(fields, weights)
        csv, js = prof.write(out / _profile_name(t))
        outputs += [csv.name, js.name]
        if t > 0:
            series.append((t, correlation.gaussian_regime_error(prof)))
    with open(out / "gaussian_errors.csv", "w") as fh:
        fh.write("t,e\n")
        for t, e in series:
            fh.write(f"{float(t)!r},{float(e)!r}\n")
    outputs.append("gaussian_errors.csv")
    summary = {"weights": list(map(float, weights)), "times": list(times)}
    try:
        slope, r2 = correlation.rate_fit(series)
        summary.update({"slope": slope, "r_squared": r2})
    except ValueError as exc:
        summary["fit"] = f"skipped: {exc}"
    (out / "ensemble.json").write_text(json.dumps(summary, indent=2))
    outputs.append("ensemble.json")
    RunManifest(
        cfg.digest(), _params_dict(p), {"n": grid.n, "box_len": grid.box_len}, "ensemble", outputs,
        time.perf_counter() - t0,
    ).write(out)
    return EXIT_OK


def _find(traj, t, p):
    snap = traj.snapshot_at(t)
    return dynamics.from_transformed(snap, p) if traj.kind == "transformed" else snap


def cmd_decompose(args) -> int:
    cfg = cfgmod.load(args.config)
    p, grid = cfgmod.model_params(cfg), cfgmod.grid_spec(cfg)
    q0 = initial.build(cfg.get("initial", "data", required=True), grid, p, kind="tensor")
    horizon = cfg.number("decompose", "horizon", max(fixedpoint.horizon_for(p), 1.0))
    raw_nodes = cfg.get("decompose", "include")
    include = cfgmod.parse_times(raw_nodes) if raw_nodes else ()
    try:
        times = fixedpoint.make_time_grid(
            horizon,
            t0=cfg.number("decompose", "t0", 0.05),
            rho=cfg.number("decompose", "rho", 1.05),
            include=include,
        )
    except ValueError as exc:
        raise cfgmod.ConfigError(f"{cfg.source}: [decompose] {exc}") from None
    t0 = time.perf_counter()
    try:
        fixedpoint._check_horizon(times[-1], p)
    except ValueError as exc:
        raise cfgmod.ConfigError(f"{cfg.where('decompose', 'horizon')}: {exc}") from None
    state = fixedpoint.picard_solve(
        q0, p, times,
        max_iter=cfg.number("decompose", "max_iter", 40, cast=int),
        tol=cfg.number("decompose", "tol", 1e-10),
        reaction=cfg.flag("decompose", "reaction", True),
        eps0=cfg.number("decompose", "eps0", None),
    )
    out = _out_dir(args)
    fixedpoint.save_decomposition(state, out, {"v_decay_slope": fixedpoint.v_decay_check(state).slope})
    outputs = ["A.json", "meta.json"] + [f"V_t{k:04d}.qtf1" for k in range(len(state.V))]
    RunManifest(
        cfg.digest(), _params_dict(p), {"n": grid.n, "box_len": grid.box_len}, "decompose", outputs,
        time.perf_counter() - t0,
    ).write(out)
    return EXIT_OK


def _read_series(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"series file not found: {path}")
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def cmd_regime(args) -> int:
    if args.config:
        cfg = cfgmod.load(args.config)
        kind = cfg.get("regime", "kind", "gaussian")
        threshold = cfg.number("regime", "threshold", -0.35)
        series_path = cfg.get("regime", "series")
        profiles_dir = cfg.get("regime", "profiles")
        c_bar = cfg.number("regime", "c_bar", None)
    else:
        kind, threshold, series_path, profiles_dir, c_bar = args.kind, args.threshold, args.series, None, args.c_bar
    if kind not in ("gaussian", "ballistic"):
        raise cfgmod.ConfigError(f"regime kind must be 'gaussian' or 'ballistic', got {kind!r}")
    if series_path:
        data = _read_series(Path(series_path))
    elif profiles_dir:
        src = Path(profiles_dir)
        files = sorted(src.glob("profile_t*.csv"))
        if not files:
            raise FileNotFoundError(f"no profile_t*.csv files in {src}")
        profs = [correlation.read_profile(f) for f in files]
        if kind == "ballistic" and c_bar is None:
            raise cfgmod.ConfigError("ballistic regime needs c_bar")
        err = (lambda pr: correlation.ballistic_regime_error(pr, c_bar)) if kind == "ballistic" else correlation.gaussian_regime_error
        data = np.array([(pr.t, err(pr)) for pr in profs if pr.t > 0])
    else:
        raise cfgmod.ConfigError("regime needs a series CSV or a profiles directory")
    out = _out_dir(args)
    result = {"kind": kind, "series": data.tolist()}
    if kind == "gaussian":
        slope, r2 = correlation.rate_fit(data)
        result.update({"slope": slope, "r_squared": r2, "threshold": threshold, "verdict": "pass" if slope <= threshold else "fail"})
    else:
        t, e = data[:, 0], data[:, 1]
        sel = t >= t.max() / 10.0
        mono = bool(np.all(np.diff(e[sel]) < 0))
        result.update({"monotone_final_decade": mono, "verdict": "pass" if mono else "fail"})
    (out / "regime.json").write_text(json.dumps(result, indent=2))
    print(f"{kind}: {result['verdict']}" + (f" (slope {result['slope']:.4f})" if "slope" in result else ""))
    return EXIT_OK


def cmd_fronts(args) -> int:
    cfg = cfgmod.load(args.config)
    p, grid = cfgmod.model_params(cfg), cfgmod.grid_spec(cfg)
    sim = cfgmod.sim_config(cfg, grid)
    l0 = initial.build(cfg.get("initial", "data", required=True), grid, p, kind="scalar")
    level = cfg.number("fronts", "level", abs(qtensor.lambda_star(p)) / 2.0)
    raw_window = cfg.get("fronts", "window")
    if raw_window:
        window = cfgmod.parse_times(raw_window, cfg.where("fronts", "window"))
        if len(window) != 2:
            raise cfgmod.ConfigError(f"{cfg.where('fronts', 'window')}: need two times")
    else:
        window = (sim.t_final / 2.0, sim.t_final)
    t0 = time.perf_counter()
    traj = dynamics.evolve_scalar(l0, p, sim)
    times, radii = dynamics.front_radius_series(traj, level)
    c_bar, resid = dynamics.front_speed(traj, level, tuple(window))
    errors = []
    for snap in traj.snapshots:
        if snap.time_tag > 0:
            prof = correlation.correlate_single(snap)
            errors.append((snap.time_tag, correlation.ballistic_regime_error(prof, c_bar)))
    out = _out_dir(args)
    with open(out / "fronts.csv", "w") as fh:
        fh.write("t,radius\n")
        for t, r in zip(times, radii):
            fh.write(f"{float(t)!r},{float(r)!r}\n")
    err = np.array(errors)
    sel = err[:, 0] >= err[:, 0].max() / 10.0
    planar, width = qtensor.uniaxial_front_scales(p)
    summary = {
        "c_bar": c_bar,
        "fit_residual": resid,
        "window": list(window),
        "level": level,
        "planar_speed": planar,
        "interface_width": width,
        "ballistic_errors": err.tolist(),
        "monotone_final_decade": bool(np.all(np.diff(err[sel, 1]) < 0)),
        "overlap_prefactor": "1/(16 c^3)",
    }
    (out / "fronts.json").write_text(json.dumps(summary, indent=2))
    RunManifest(
        cfg.digest(), _params_dict(p), {"n": grid.n, "box_len": grid.box_len}, "fronts", ["fronts.csv", "fronts.json"],
        time.perf_counter() - t0,
    ).write(out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "correlate": cmd_correlate,
    "ensemble": cmd_ensemble,
    "decompose": cmd_decompose,
    "regime": cmd_regime,
    "fronts": cmd_fronts,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nematic", description=__doc__)
    parser.add_argument("--version", action="version", version=nematic.__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for FFTs and ensemble members")
    common.add_argument("--test-mode", action="store_true", help="single-threaded deterministic reductions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "ensemble", "decompose", "fronts"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--config", required=True)
    sp = sub.add_parser("correlate", parents=[common])
    sp.add_argument("inputs", nargs="+", help="snapshot files or trajectory directories")
    sp.add_argument("--time", type=float, default=None)
    sp = sub.add_parser("regime", parents=[common])
    sp.add_argument("--config", default=None)
    sp.add_argument("--series", default=None, help="CSV with header t,e")
    sp.add_argument("--kind", default="gaussian", choices=("gaussian", "ballistic"))
    sp.add_argument("--threshold", type=float, default=-0.35)
    sp.add_argument("--c-bar", dest="c_bar", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    workers = 1 if args.test_mode else args.threads
    if args.test_mode:
        args.threads = 1
    try:
        with sfft.set_workers(workers):
            return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, initial.GeneratorError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (dynamics.BlowUpError, fixedpoint.ContractionError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, dynamics.MissingSnapshotError) as exc:
        print(f"missing input: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
