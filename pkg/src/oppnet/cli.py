"""Command line front end: single runs, parameter sweeps, analytics and fits."""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from statistics import mean
from typing import Optional, Sequence

from . import analytics
from .config import ConfigError, load_scenario
from .engine import RunResult, run
from .mobility import truncated_visit_probability
from .scenario import (FieldSpec, HELPER, Point, Rect, ROUTERS, SATELLITE, ScenarioConfig,
                       ScenarioError, validate_scenario)

log = logging.getLogger("oppnet")

PRESET_DIR = Path(__file__).parent / "scenarios"
AXES = ("area_side", "mobility", "router")
NA = "NA"


@dataclass
class ReportRow:
    scenario: str
    seed: int
    router: str
    mobility: str
    area_side: float
    created: Optional[int]
    delivered: Optional[int]
    relayed: Optional[int]
    dropped_ttl: Optional[int]
    dropped_buffer: Optional[int]
    delivery_probability: Optional[float]
    overhead_ratio: Optional[float]
    avg_latency_s: Optional[float]
    encounters_src: Optional[int]
    encounters_dst: Optional[int]


COLUMNS = [f.name for f in fields(ReportRow)]
_INT_COLUMNS = {"seed", "created", "delivered", "relayed", "dropped_ttl", "dropped_buffer",
                "encounters_src", "encounters_dst"}
_FLOAT_COLUMNS = {"area_side", "delivery_probability", "overhead_ratio", "avg_latency_s"}


def _cell(v) -> str:
    if v is None:
        return NA
    if isinstance(v, float):
        # integral floats print bare; parsing restores the float type per column
        return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)
    return str(v)


def emit_report(rows: Sequence[ReportRow]) -> str:
    out = io.StringIO()
    out.write(",".join(COLUMNS) + "\n")
    for r in rows:
        out.write(",".join(_cell(getattr(r, c)) for c in COLUMNS) + "\n")
    return out.getvalue()


def _parse_cell(column: str, text: str):
    if text == NA:
        return None
    if column in _INT_COLUMNS:
        return int(text)
    if column in _FLOAT_COLUMNS:
        return float(text)
    return text


def parse_report(text: str) -> list[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != COLUMNS:
        raise ValueError(f"unexpected report header {header}")
    return [ReportRow(**{c: _parse_cell(c, v) for c, v in zip(COLUMNS, cells)}) for cells in reader if cells]


def mobility_label(cfg: ScenarioConfig) -> str:
    return "biased" if any(n.role == SATELLITE for n in cfg.nodes) else "unbiased"


def report_row(cfg: ScenarioConfig, result: RunResult) -> ReportRow:
    m = result.report
    return ReportRow(cfg.name, cfg.seed, cfg.router, mobility_label(cfg), cfg.field.side,
                     m.created, m.delivered, m.relayed, m.dropped_ttl, m.dropped_buffer,
                     m.delivery_probability, m.overhead_ratio, m.average_latency,
                     result.encounters[cfg.source.id], result.encounters[cfg.destination.id])


def failed_row(cfg: ScenarioConfig) -> ReportRow:
    return ReportRow(cfg.name, cfg.seed, cfg.router, mobility_label(cfg), cfg.field.side,
                     *([None] * 10))


# -- scenario transforms used by sweeps -------------------------------------

def _anchor(c: float, old: float, new: float) -> float:
    """Keep a coordinate's distance to its nearer wall when the field is resized."""
    moved = c if c <= old / 2 else new - (old - c)
    return min(max(moved, 0.0), new)


def _anchor_span(lo: float, hi: float, old: float, new: float) -> tuple[float, float]:
    shift = 0.0 if (lo + hi) / 2 <= old / 2 else new - old
    lo, hi = max(lo + shift, 0.0), min(hi + shift, new)
    return lo, hi


def with_field_side(cfg: ScenarioConfig, side: float) -> ScenarioConfig:
    """Resize the field; static nodes and bias regions stay anchored to their corners."""
    old = cfg.field.side
    nodes = []
    for n in cfg.nodes:
        if n.position is not None:
            n = replace(n, position=Point(_anchor(n.position.x, old, side), _anchor(n.position.y, old, side)))
        if n.bias is not None:
            r = n.bias.region
            x0, x1 = _anchor_span(r.x_min, r.x_max, old, side)
            y0, y1 = _anchor_span(r.y_min, r.y_max, old, side)
            n = replace(n, bias=replace(n.bias, region=Rect(x0, y0, x1, y1)))
        nodes.append(n)
    return replace(cfg, field=FieldSpec(side), nodes=tuple(nodes))


def unbiased(cfg: ScenarioConfig) -> ScenarioConfig:
    nodes = tuple(replace(n, role=HELPER, bias=None) if n.role == SATELLITE else n for n in cfg.nodes)
    return replace(cfg, nodes=nodes)


def apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "area_side":
        return with_field_side(cfg, value)
    if axis == "mobility":
        return cfg if value == "biased" else unbiased(cfg)
    if axis == "router":
        return replace(cfg, router=value)
    raise ValueError(f"unknown axis {axis!r}")


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    axes: tuple[tuple[str, tuple], ...]
    replications: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for name, values in self.axes:
            if name not in AXES:
                raise ValueError(f"unknown axis {name!r}; expected one of {AXES}")
            if not values or len(set(values)) != len(values):
                raise ValueError(f"axis {name} needs distinct, non-empty values")

    @property
    def seeds(self) -> list[int]:
        return [self.base.seed + r for r in range(self.replications)]

    def points(self) -> list[ScenarioConfig]:
        """One config per (axis combination x replication), in deterministic order."""
        out = []
        combos = itertools.product(*[[(name, v) for v in values] for name, values in self.axes])
        for combo in combos:
            cfg = self.base
            for name, value in combo:
                cfg = apply_axis(cfg, name, value)
            for seed in self.seeds:
                out.append(replace(cfg, seed=seed))
        return out


def parse_axis(text: str) -> tuple[str, tuple]:
    if "=" not in text:
        raise ValueError(f"axis must look like name=v1,v2,..., got {text!r}")
    name, raw = (s.strip() for s in text.split("=", 1))
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if name == "area_side":
        return name, tuple(float(v) if "." in v else int(v) for v in values)
    if name == "router":
        bad = [v for v in values if v not in ROUTERS]
        if bad:
            raise ValueError(f"unknown router(s) {bad}; expected {ROUTERS}")
    if name == "mobility" and not set(values) <= {"biased", "unbiased"}:
        raise ValueError("mobility values are 'biased' and 'unbiased'")
    return name, tuple(values)


def run_point(cfg: ScenarioConfig) -> ReportRow:
    try:
        return report_row(cfg, run(validate_scenario(cfg)))
    except (ScenarioError, ValueError) as exc:
        log.error("sweep point %s seed=%s failed: %s", cfg.name, cfg.seed, exc)
        return failed_row(cfg)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[ReportRow]:
    points = spec.points()
    if workers <= 1:
        return [run_point(p) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_point, points))


def encounter_samples(rows: Sequence[ReportRow]) -> list[tuple[float, float]]:
    """(area, mean encounter count with both endpoints) per field side."""
    by_side: dict[float, list[int]] = {}
    for r in rows:
        if r.encounters_src is None or r.encounters_dst is None:
            continue
        by_side.setdefault(r.area_side, []).append(r.encounters_src + r.encounters_dst)
    return [(side * side, mean(counts)) for side, counts in sorted(by_side.items())]


# -- presentation ----------------------------------------------------------

def _fmt(v, spec: str = ".6g") -> str:
    return NA if v is None else format(v, spec)


def estimator_table(cfg: ScenarioConfig) -> list[tuple[str, Optional[float], str]]:
    src, dst = cfg.source, cfg.destination
    fld = cfg.field
    mobile = next((n for n in cfg.nodes if not n.is_static), None)
    v = mobile.velocity if mobile else None
    rows = []
    for label, node in (("source", src), ("destination", dst)):
        region = analytics.encounter_region(node.position, node.rf_range, fld)
        rows.append((f"encounter probability ({label})", analytics.encounter_probability(region, fld), ""))
    rows.append(("expected transition length", analytics.expected_transition_length(fld), "m"))
    rows.append(("expected epoch time", analytics.expected_epoch_time(fld, v) if v else None, "s"))
    rows.append(("expected contact duration (diametral bound)",
                 analytics.expected_contact_duration(src.rf_range, v) if v else None, "s"))
    rows.append(("max inter-contact time, link budget",
                 analytics.max_intercontact_time(src.rf_range, src.bit_rate, cfg.traffic.rate, v) if v else None,
                 "s"))
    rows.append(("max inter-contact time, buffer bound",
                 analytics.buffer_intercontact_bound(src.buffer_capacity, cfg.traffic.rate), "s"))
    return rows


def print_estimators(cfg: ScenarioConfig, out=None) -> None:
    out = out or sys.stdout
    for label, value, unit in estimator_table(cfg):
        print(f"  {label:<46} {_fmt(value, '.6g'):>14} {unit}", file=out)


def print_metadata(cfg: ScenarioConfig, out=None) -> None:
    out = out or sys.stdout
    seen = set()
    for n in cfg.nodes:
        if n.bias is None or n.bias in seen:
            continue
        seen.add(n.bias)
        r = n.bias.region
        p = truncated_visit_probability(n.bias.degree, n.bias.sigma)
        print(f"  bias region ({r.x_min:g},{r.y_min:g})-({r.x_max:g},{r.y_max:g}): degree={n.bias.degree:g} "
              f"sigma={n.bias.sigma:.6g} truncated visit probability={p:.6g}", file=out)


def print_report(cfg: ScenarioConfig, row: ReportRow, out=None) -> None:
    out = out or sys.stdout
    print(f"scenario {cfg.name}  router={cfg.router}  mobility={row.mobility}  seed={cfg.seed}", file=out)
    print(f"  delivery probability  {_fmt(row.delivery_probability)}", file=out)
    print(f"  overhead ratio        {_fmt(row.overhead_ratio)}", file=out)
    print(f"  average latency (s)   {_fmt(row.avg_latency_s)}", file=out)
    print(f"  created={row.created} delivered={row.delivered} relayed={row.relayed} "
          f"dropped_ttl={row.dropped_ttl} dropped_buffer={row.dropped_buffer} "
          f"encounters_src={row.encounters_src} encounters_dst={row.encounters_dst}", file=out)


# -- commands --------------------------------------------------------------

def resolve_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    for candidate in (PRESET_DIR / name, PRESET_DIR / f"{name}.cfg"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no scenario file {name!r} (presets: "
                            f"{', '.join(sorted(p.stem for p in PRESET_DIR.glob('*.cfg')))})")


def _load(name: str, seed: Optional[int] = None) -> ScenarioConfig:
    cfg = load_scenario(resolve_scenario(name))
    return cfg if seed is None else replace(cfg, seed=seed)


def cmd_run(args) -> int:
    cfg = _load(args.scenario, args.seed)
    result = run(cfg)
    row = report_row(cfg, result)
    print_report(cfg, row)
    print_metadata(cfg)
    if args.analyze:
        print("estimators:")
        print_estimators(cfg)
    if args.csv:
        Path(args.csv).write_text(emit_report([row]), encoding="utf-8")
    if args.log:
        Path(args.log).write_text(result.log.to_csv(), encoding="utf-8")
    return 0


def cmd_sweep(args) -> int:
    base = _load(args.scenario, args.seed)
    spec = SweepSpec(base, tuple(parse_axis(a) for a in args.axis), args.reps)
    rows = run_sweep(spec, workers=args.workers)
    text = emit_report(rows)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args.scenario)
    print(f"scenario {cfg.name}: side={cfg.field.side:g} m, area={cfg.field.area:g} m^2")
    print_estimators(cfg)
    print_metadata(cfg)
    return 0


def cmd_fit_cube(args) -> int:
    rows = parse_report(Path(args.csv).read_text(encoding="utf-8"))
    samples = encounter_samples(rows)
    fit = analytics.fit_cube_law(samples)
    for area, count in samples:
        print(f"  area={area:.6g} m^2  mean encounters={count:.6g}")
    print(f"exponent={fit.exponent:.6g} c={fit.c:.6g} residual={fit.residual:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oppnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and print its metrics")
    r.add_argument("scenario", help="scenario file or preset name")
    r.add_argument("--seed", type=int)
    r.add_argument("--csv")
    r.add_argument("--log")
    r.add_argument("--analyze", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario over axis values and replications")
    s.add_argument("scenario")
    s.add_argument("--axis", action="append", required=True,
                   help="name=v1,v2,...; name is one of area_side, mobility, router (repeatable)")
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--seed", type=int, help="first seed; replication r uses seed + r")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="print closed-form estimators for a scenario")
    a.add_argument("scenario")
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit-cube", help="fit encounters against area from a sweep CSV")
    f.add_argument("--csv", required=True)
    f.set_defaults(func=cmd_fit_cube)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
