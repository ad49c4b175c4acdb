"""Command-line experiment runner.

Every run lands in an output directory containing the requested data files
plus a manifest (config snapshot, version, wall clock, per-file checksums).
Data files depend only on config and seed, so a rerun with the same pair is
byte-identical; the manifest is the only place timing appears.

Exit codes: 0 success, 2 one or more acceptance criteria failed, 1 any
other error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import ALL_CRITERIA, run_suites
from .ctmc import GridSpec, RandomStream, SystemState, fluid_scale, simulate_a, simulate_b
from .diffusion import moment_ode
from .fluid import solve_fluid, solve_fluid_tv
from .params import InviteSimError
from .presets import ConfigInvalid, ExperimentConfig, config_from_json, get_preset, presets
from .stats import scale_sweep, stationary_moments, sup_deviation, gaussian_check

SWEEP_SCALES = (100, 300, 1000)
SWEEP_REPLICATIONS = 8


class OutputDirUnwritable(InviteSimError):
    pass


@dataclass
class RunManifest:
    name: str
    config: dict
    version: str
    wall_clock_s: float
    files: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    acceptance_failures: int = 0

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "version": self.version,
            "wall_clock_s": self.wall_clock_s,
            "files": self.files,
            "warnings": self.warnings,
            "acceptance_failures": self.acceptance_failures,
        }


def _ensure_outdir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputDirUnwritable(f"cannot write to {out}: {exc}") from exc
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_plot_data(path, sim, fluid=None, grid=None) -> list[str]:
    """Write overlay-ready columns; returns warnings for the manifest.

    Columns are t,sim_y,sim_x plus fluid_y,fluid_x when a fluid trajectory
    is supplied.  The fluid side is evaluated on the simulation grid; points
    past the fluid horizon are dropped and flagged rather than extrapolated.
    """
    warnings = []
    t = np.asarray(sim.t if grid is None else grid, dtype=float)
    sim_vals = np.column_stack([sim.y, sim.x]) if grid is None else sim.eval_on(t)
    if fluid is None:
        header = "t,sim_y,sim_x"
        cols = [t, sim_vals[:, 0], sim_vals[:, 1]]
    else:
        fh = fluid.horizon
        keep = t <= fh * (1 + 1e-12)
        if not keep.all():
            warnings.append(
                f"misaligned grids: {int((~keep).sum())} sample(s) past the "
                f"fluid horizon {fh} dropped from the overlay")
            t = t[keep]
            sim_vals = sim_vals[keep]
        native = getattr(fluid, "t", None)
        if native is not None:
            step = float(native[1] - native[0]) if len(native) > 1 else 1.0
            off = np.abs(t / step - np.round(t / step))
            if np.any(off > 1e-6):
                warnings.append(
                    "misaligned grids: fluid reference resampled onto the "
                    "simulation grid by linear interpolation")
        fluid_vals = fluid.eval_on(t)
        header = "t,sim_y,sim_x,fluid_y,fluid_x"
        cols = [t, sim_vals[:, 0], sim_vals[:, 1],
                fluid_vals[:, 0], fluid_vals[:, 1]]
    with open(path, "w") as out:
        out.write(header + "\n")
        for row in zip(*cols):
            out.write(",".join(format(v + 0.0, ".10g") for v in row) + "\n")
    return warnings


def _fluid_reference(config: ExperimentConfig):
    """Fluid trajectory matching the config's scaled initial state."""
    p = config.params
    r = p.scale_r
    y0 = config.initial[0] / r
    if config.scheme == "A":
        x0 = config.initial[2] / r - p.lam / p.beta
    else:
        x0 = config.initial[1] / r - p.lam / p.beta
    if config.arrival is not None and not config.arrival.is_constant:
        return solve_fluid_tv((config.initial[0] / r, config.initial[1] / r),
                              config.arrival, p, horizon=config.horizon)
    return solve_fluid((y0, x0), p, horizon=config.horizon)


def _run_acceptance(config: ExperimentConfig, out: Path, manifest: RunManifest,
                    echo=print) -> list[Path]:
    suite = config.name.removeprefix("acceptance-")
    names = list(ALL_CRITERIA) if suite == "all" else [suite]
    if any(n not in ALL_CRITERIA for n in names):
        raise ConfigInvalid(f"unknown acceptance suite {suite!r}; known: "
                            + ", ".join([*ALL_CRITERIA, "all"]))
    results = run_suites(names)
    for res in results:
        echo(res.line() + f"  [{res.wall_clock_s:.1f}s]")
    manifest.acceptance_failures = sum(not r.passed for r in results)
    payload = {"results": []}
    for res in results:
        entry = res.to_json_dict()
        entry.pop("wall_clock_s")  # keep data files seed-deterministic
        payload["results"].append(entry)
    payload["failures"] = manifest.acceptance_failures
    target = out / "acceptance.json"
    _write_json(target, payload)
    return [target]


def run(config: ExperimentConfig, out_dir, workers: int = 1, echo=print) -> RunManifest:
    """Execute a config's pipeline; returns the manifest (also written)."""
    t_start = time.perf_counter()
    out = _ensure_outdir(out_dir)
    manifest = RunManifest(name=config.name, config=config.to_json_dict(),
                           version=__version__, wall_clock_s=0.0)
    written: list[Path] = []
    if workers < 1:
        raise ConfigInvalid("workers must be >= 1")

    if "acceptance" in config.outputs:
        written += _run_acceptance(config, out, manifest, echo)
    else:
        p = config.params
        stream = RandomStream(seed=config.seed)
        grid = GridSpec(dt=config.grid_dt)
        traj = None
        if {"trajectory", "deviation", "stationary"} & set(config.outputs):
            if config.scheme == "A":
                init = SystemState(config.initial[0], config.initial[1],
                                   x_target=float(config.initial[2]))
                traj = simulate_a(init, p, horizon=config.horizon,
                                  stream=stream, sampling=grid)
            else:
                init = SystemState(config.initial[0], config.initial[1])
                traj = simulate_b(init, p, horizon=config.horizon,
                                  stream=stream, arrival=config.arrival,
                                  sampling=grid)
        fluid = None
        if {"fluid", "deviation"} & set(config.outputs):
            fluid = _fluid_reference(config)

        if "trajectory" in config.outputs:
            target = out / "trajectory.csv"
            traj.to_csv(target)
            written.append(target)
            if config.scheme == "A":
                target = out / "target_gap.csv"
                with open(target, "w") as fh:
                    fh.write("t,scaled_gap\n")
                    gap = np.abs(traj.x - traj.x_target) / p.scale_r
                    for tv, gv in zip(traj.t, gap):
                        fh.write(f"{tv:.10g},{gv:.10g}\n")
                written.append(target)
        if "fluid" in config.outputs:
            target = out / "fluid.csv"
            if hasattr(fluid, "segments"):
                fluid.to_csv(target, dt=config.grid_dt)
            else:
                every = max(1, round(config.grid_dt / fluid.dt))
                fluid.to_csv(target, every=every)
            written.append(target)
        if "deviation" in config.outputs:
            scaled = fluid_scale(traj, p)
            target = out / "overlay.csv"
            manifest.warnings += emit_plot_data(target, scaled, fluid)
            written.append(target)
            grid_t = np.arange(0.0, config.horizon * (1 + 1e-12), config.grid_dt)
            rep = sup_deviation(scaled, fluid, grid_t,
                                context={"name": config.name, "seed": config.seed})
            target = out / "deviation.json"
            _write_json(target, rep.to_json_dict())
            written.append(target)
        if "stationary" in config.outputs:
            burn = 100.0 if config.horizon > 300.0 else 0.2 * config.horizon
            est = stationary_moments(traj, p, burn_in=burn)
            target = out / "stationary.json"
            _write_json(target, est.to_json_dict())
            written.append(target)
            target = out / "gaussian.json"
            _write_json(target, gaussian_check(est, p).to_json_dict())
            written.append(target)
        if "moments" in config.outputs:
            path = moment_ode(np.zeros(2), np.zeros((2, 2)), p,
                              horizon=config.horizon, dt=1e-3)
            target = out / "moments.csv"
            every = max(1, round(config.grid_dt / path.dt))
            path.to_csv(target, every=every)
            written.append(target)
        if "sweep" in config.outputs:
            y0, x0 = config.initial[0] / p.scale_r, config.initial[1] / p.scale_r
            map_fn = None
            pool = None
            if workers > 1:
                pool = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
                map_fn = pool.map
            try:
                table = scale_sweep(
                    SWEEP_SCALES,
                    lambda r: (int(round(y0 * r)), int(round(x0 * r))),
                    p, horizon=config.horizon,
                    replications=SWEEP_REPLICATIONS, stream=stream,
                    grid_dt=config.grid_dt, map_fn=map_fn)
            finally:
                if pool is not None:
                    pool.shutdown()
            target = out / "sweep.csv"
            table.to_csv(target)
            written.append(target)

    manifest.files = [{"path": f.name, "sha256": _sha256(f),
                       "bytes": f.stat().st_size} for f in written]
    manifest.wall_clock_s = round(time.perf_counter() - t_start, 3)
    _write_json(out / "manifest.json", manifest.to_json_dict())
    return manifest


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage errors through exit code 1
        raise ConfigInvalid(message)


def _add_common(sub):
    sub.add_argument("--config", help="path to an experiment config JSON")
    sub.add_argument("--preset", help="name of a built-in preset")
    sub.add_argument("--seed", type=int, help="override the config's seed")
    sub.add_argument("--out", help="output directory (default runs/<name>)")
    sub.add_argument("--workers", type=int, default=1,
                     help="worker pool size for replicated work")


def _load_config(args, forced_outputs=None) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigInvalid("pass either --config or --preset, not both")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {args.config}: {exc}") from exc
        config = config_from_json(text)
    elif args.preset:
        config = get_preset(args.preset)
    else:
        raise ConfigInvalid("a config is required: pass --config or --preset")
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if forced_outputs is not None:
        config = replace(config, outputs=tuple(forced_outputs))
    return config


SUBCOMMAND_OUTPUTS = {
    "simulate": ("trajectory",),
    "fluid": ("fluid",),
    "diffusion": ("moments",),
    "stationary": ("trajectory", "stationary"),
    "compare": ("trajectory", "fluid", "deviation"),
    "sweep": ("sweep",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="invitesim",
                     description="simulate invitation feedback systems and "
                                 "compare them to their scaling limits")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("simulate", "run one trajectory and write raw counts"),
        ("fluid", "solve the deterministic scaled path"),
        ("diffusion", "integrate the fluctuation moment equations"),
        ("stationary", "estimate long-run moments by batch means"),
        ("compare", "overlay a run on its fluid reference"),
        ("sweep", "sup-deviation decay across system scales"),
    ):
        _add_common(subs.add_parser(name, help=blurb))
    pre = subs.add_parser("preset", help="run a named preset (no name: list)")
    pre.add_argument("name", nargs="?", help="preset to run")
    pre.add_argument("--seed", type=int, help="override the preset's seed")
    pre.add_argument("--out", help="output directory (default runs/<name>)")
    pre.add_argument("--workers", type=int, default=1)
    acc = subs.add_parser("acceptance", help="run pinned-seed acceptance suites")
    acc.add_argument("suite", help="suite name or 'all'")
    acc.add_argument("--out", help="optional directory for acceptance.json")
    acc.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "preset":
            if args.name is None:
                for name in sorted(presets()):
                    print(name)
                return 0
            config = get_preset(args.name)
            if args.seed is not None:
                config = replace(config, seed=args.seed)
        elif args.command == "acceptance":
            config = get_preset(f"acceptance-{args.suite}") \
                if f"acceptance-{args.suite}" in presets() else None
            if config is None:
                if args.suite != "all" and args.suite not in ALL_CRITERIA:
                    raise ConfigInvalid(
                        f"unknown acceptance suite {args.suite!r}; known: "
                        + ", ".join([*ALL_CRITERIA, "all"]))
                config = replace(get_preset("acceptance-generator"),
                                 name=f"acceptance-{args.suite}")
        else:
            config = _load_config(args, SUBCOMMAND_OUTPUTS[args.command])
        out_dir = getattr(args, "out", None) or Path("runs") / config.name
        manifest = run(config, out_dir, workers=getattr(args, "workers", 1))
        if manifest.acceptance_failures:
            print(f"{manifest.acceptance_failures} acceptance criteria failed",
                  file=sys.stderr)
            return 2
        return 0
    except InviteSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
