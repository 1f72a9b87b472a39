"""Command-line entry point: ``faao optimize | sweep-power | baseline | validate-config``."""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .ao import FaaoResult, convergence_csv, rates_csv, run_faao
from .baselines import BaselineKind, run_baseline
from .kinematics import Trajectory, read_trajectory_csv, straight_line_init, trajectory_csv
from .scenario import ConfigError, Scenario, default_scenario, load_scenario
from .sca_precoder import precoder_csv

log = logging.getLogger("faao")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2
WORKERS_ENV = "FAAO_WORKERS"
SCHEMES = ("faao", "mmse", "zf", "mrt")


@dataclass
class RunManifest:
    scenario_hash: str
    command: str
    seed: int
    out_dir: str
    files: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


# -- SVG ------------------------------------------------------------------------

WIDTH, HEIGHT, MARGIN = 800, 600, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class _Axes:
    def __init__(self, xs, ys):
        xs = np.asarray([x for x in xs if math.isfinite(x)] or [0.0, 1.0], dtype=float)
        ys = np.asarray([y for y in ys if math.isfinite(y)] or [0.0, 1.0], dtype=float)
        self.x0, self.x1 = _pad(xs.min(), xs.max())
        self.y0, self.y1 = _pad(ys.min(), ys.max())

    def px(self, x: float) -> float:
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y: float) -> float:
        return HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)


def _pad(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo < 1e-12:
        return lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - 0.05 * span, hi + 0.05 * span


def _svg(title: str, xlabel: str, ylabel: str, ax: _Axes, body: list[str]) -> str:
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="30" text-anchor="middle" font-size="18">{escape(title)}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" '
        'fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="14">{escape(xlabel)}</text>',
        f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {HEIGHT / 2})">{escape(ylabel)}</text>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 16}" font-size="11">{ax.x0:.4g}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="end" font-size="11">{ax.x1:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN}" text-anchor="end" font-size="11">{ax.y0:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 10}" text-anchor="end" font-size="11">{ax.y1:.4g}</text>',
    ]
    return "\n".join(parts + body + ["</svg>"]) + "\n"


def _polyline(ax: _Axes, xs, ys, color: str) -> str:
    pts = " ".join(f"{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'


def _legend(entries: list[tuple[str, str]]) -> list[str]:
    out = []
    for i, (label, color) in enumerate(entries):
        y = MARGIN + 20 + 18 * i
        out.append(f'<line x1="{WIDTH - MARGIN - 150}" y1="{y}" x2="{WIDTH - MARGIN - 125}" y2="{y}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 118}" y="{y + 4}" font-size="12">{escape(label)}</text>')
    return out


def trajectory_svg(traj: Trajectory, scenario: Scenario, reference: Trajectory | None = None) -> str:
    bs, gu = np.asarray(scenario.bs_pos, float), np.asarray(scenario.gu_pos, float)
    xs = list(traj.w[:, 0]) + [bs[0], gu[0]]
    ys = list(traj.w[:, 1]) + [bs[1], gu[1]]
    ax = _Axes(xs, ys)
    body = []
    entries = [("UAV trajectory", COLORS[0])]
    if reference is not None:
        body.append(_polyline(ax, reference.w[:, 0], reference.w[:, 1], "#999999"))
        entries.append(("straight path", "#999999"))
    body.append(_polyline(ax, traj.w[:, 0], traj.w[:, 1], COLORS[0]))
    for label, pos, color in (("BS", bs, COLORS[1]), ("GU", gu, COLORS[2])):
        body.append(f'<circle cx="{ax.px(pos[0]):.2f}" cy="{ax.py(pos[1]):.2f}" r="7" fill="{color}"/>')
        body.append(f'<text x="{ax.px(pos[0]) + 10:.2f}" y="{ax.py(pos[1]) - 10:.2f}" font-size="13">{label}</text>')
    return _svg(f"UAV trajectory, T = {scenario.horizon_T:g} s", "x (m)", "y (m)", ax, body + _legend(entries))


def convergence_svg(result: FaaoResult) -> str:
    recs = result.trace.records
    it = [r.iteration for r in recs]
    series = [("R_U", [r.R_U for r in recs]), ("R_G", [r.R_G for r in recs]), ("R_avg", [r.R_avg for r in recs])]
    ax = _Axes(it, [v for _, s in series for v in s])
    body = [_polyline(ax, it, s, COLORS[i]) for i, (_, s) in enumerate(series)]
    entries = [(name, COLORS[i]) for i, (name, _) in enumerate(series)]
    return _svg("Convergence", "outer iteration", "rate (bit/s/Hz)", ax, body + _legend(entries))


def sweep_svg(powers: list[float], schemes: list[str], table: dict) -> str:
    ys = [table[(p, s)] for p in powers for s in schemes]
    ax = _Axes(powers, ys)
    body, entries = [], []
    for i, s in enumerate(schemes):
        color = COLORS[i % len(COLORS)]
        body.append(_polyline(ax, powers, [table[(p, s)] for p in powers], color))
        entries.append((s.upper(), color))
    return _svg("Information rate versus transmit power", "W (dBm)", "R_avg (bit/s/Hz)", ax, body + _legend(entries))


# -- output -----------------------------------------------------------------------

def _prepare_out_dir(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise OSError(f"output directory {out_dir} is not writable")


def write_outputs(out_dir: Path, files: dict[str, str], manifest: RunManifest) -> None:
    """Write all files or none: stage in a temporary directory, then move into place."""
    _prepare_out_dir(out_dir)
    manifest.files = sorted(files) + ["manifest.json"]
    payload = dict(files)
    payload["manifest.json"] = manifest.to_json()
    moved: list[Path] = []
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".staging-") as stage:
        for name, text in payload.items():
            with open(Path(stage) / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        try:
            for name in payload:
                os.replace(Path(stage) / name, out_dir / name)
                moved.append(out_dir / name)
        except OSError:
            for path in moved:
                path.unlink(missing_ok=True)
            raise


# -- commands ---------------------------------------------------------------------

def _load(args) -> Scenario:
    if getattr(args, "out", None) is not None and args.func is not cmd_validate_config:
        # fail before the expensive part
        _prepare_out_dir(Path(args.out))
    if args.config is None:
        scenario = default_scenario()
    else:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        scenario = load_scenario(text)
    if args.seed is not None:
        scenario = scenario.replace(seed=args.seed)
    return scenario


def _manifest(scenario: Scenario, command: str, out_dir: Path, started: float) -> RunManifest:
    return RunManifest(scenario.digest(), command, scenario.seed, str(out_dir), wall_time_s=time.perf_counter() - started)


def cmd_optimize(args) -> int:
    started = time.perf_counter()
    scenario = _load(args)
    result = run_faao(scenario)
    files = {
        "trajectory.csv": trajectory_csv(result.trajectory),
        "rates.csv": rates_csv(result.rates),
        "convergence.csv": convergence_csv(result.trace, with_timing=args.timing),
        "precoders.csv": precoder_csv(result.precoders),
        "trajectory.svg": trajectory_svg(result.trajectory, scenario, straight_line_init(scenario)),
        "convergence.svg": convergence_svg(result),
    }
    out = Path(args.out)
    write_outputs(out, files, _manifest(scenario, "optimize", out, started))
    print(f"R_U={result.rates.R_U:.6f} R_G={result.rates.R_G:.6f} R_avg={result.rates.R_avg:.6f} "
          f"iterations={len(result.trace.records) - 1} converged={result.converged}")
    if not result.converged:
        print("warning: outer iteration budget exhausted before convergence", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_baseline(args) -> int:
    started = time.perf_counter()
    scenario = _load(args)
    kind = BaselineKind(args.kind)
    if args.trajectory is not None:
        traj = read_trajectory_csv(Path(args.trajectory).read_text(encoding="utf-8"), scenario.slot_dt)
        if traj.n_slots != scenario.n_slots:
            raise ConfigError(f"trajectory has {traj.n_slots} slots, scenario needs {scenario.n_slots}")
    else:
        traj = run_faao(scenario).trajectory
    schedule, rates = run_baseline(scenario, kind, traj)
    files = {
        "trajectory.csv": trajectory_csv(traj),
        "rates.csv": rates_csv(rates),
        "precoders.csv": precoder_csv(schedule),
    }
    out = Path(args.out)
    write_outputs(out, files, _manifest(scenario, f"baseline {kind.value}", out, started))
    print(f"{kind.value}: R_U={rates.R_U:.6f} R_G={rates.R_G:.6f} R_avg={rates.R_avg:.6f}")
    return EXIT_OK


def sweep_cell_rates(scenario: Scenario, power_dbm: float, schemes: list[str]) -> dict[str, float]:
    """``R_avg`` of every scheme at one power, sharing one FAAO trajectory; failures give NaN."""
    cell = scenario.replace(power_bs_dbm=power_dbm, power_uav_dbm=power_dbm)
    out = {s: math.nan for s in schemes}
    try:
        faao = run_faao(cell)
    except Exception as exc:  # noqa: BLE001 - one bad cell must not abort the sweep
        log.warning("power %g dBm: FAAO failed (%s)", power_dbm, exc)
        return out
    for s in schemes:
        if s == "faao":
            out[s] = faao.rates.R_avg
            continue
        try:
            _, rates = run_baseline(cell, BaselineKind(s), faao.trajectory, faao.small_scale)
            out[s] = rates.R_avg
        except Exception as exc:  # noqa: BLE001
            log.warning("power %g dBm, scheme %s failed (%s)", power_dbm, s, exc)
    return out


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def sweep_csv(powers: list[float], schemes: list[str], table: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["power_dbm", "scheme", "R_avg"])
    for p in powers:
        for s in schemes:
            writer.writerow([repr(float(p)), s, repr(float(table[(p, s)]))])
    return buf.getvalue()


def cmd_sweep_power(args) -> int:
    started = time.perf_counter()
    scenario = _load(args)
    powers = [float(p) for p in args.powers]
    schemes = [s.lower() for s in args.schemes]
    if not powers or not schemes:
        raise ConfigError("powers and schemes must be non-empty")
    unknown = sorted(set(schemes) - set(SCHEMES))
    if unknown:
        raise ConfigError(f"unknown schemes {unknown}; choose from {list(SCHEMES)}")
    workers = min(_workers(), len(powers))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(sweep_cell_rates, [scenario] * len(powers), powers, [schemes] * len(powers)))
    else:
        cells = [sweep_cell_rates(scenario, p, schemes) for p in powers]
    table = {(p, s): cell[s] for p, cell in zip(powers, cells) for s in schemes}
    if all(math.isnan(v) for v in table.values()):
        print("error: every sweep cell failed", file=sys.stderr)
        return EXIT_ERROR
    files = {"sweep.csv": sweep_csv(powers, schemes, table), "sweep.svg": sweep_svg(powers, schemes, table)}
    out = Path(args.out)
    write_outputs(out, files, _manifest(scenario, "sweep-power", out, started))
    for p in powers:
        print(f"{p:g} dBm: " + " ".join(f"{s}={table[(p, s)]:.6f}" for s in schemes))
    return EXIT_OK


def cmd_validate_config(args) -> int:
    scenario = _load(args)
    print(f"ok: {scenario.n_slots} slots, digest {scenario.digest()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file; omitted keys take default values")
    common.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--verbose", "-v", action="store_true", help="log solver progress to stderr")

    parser = argparse.ArgumentParser(prog="faao", description="UAV relay trajectory and precoder optimization "
                                     "under finite-alphabet inputs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[common], help="run the alternating optimization")
    p.add_argument("--timing", action="store_true", help="add a wall-clock column to convergence.csv")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep-power", parents=[common], help="compare schemes across transmit powers")
    p.add_argument("--powers", nargs="+", type=float, default=[0.0, 10.0, 20.0, 30.0],
                   help="transmit powers in dBm, applied to both BS and UAV (default: %(default)s)")
    p.add_argument("--schemes", nargs="+", default=list(SCHEMES), help="subset of %(default)s")
    p.set_defaults(func=cmd_sweep_power)

    p = sub.add_parser("baseline", parents=[common], help="evaluate one linear precoder on a trajectory")
    p.add_argument("--kind", required=True, choices=[k.value for k in BaselineKind])
    p.add_argument("--trajectory", help="trajectory.csv to reuse; by default the FAAO trajectory is computed")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("validate-config", parents=[common], help="check a scenario file and exit")
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
