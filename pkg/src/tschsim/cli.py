"""Experiment runner: config files, arm x period x seed sweeps, CSV outputs."""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

from tschsim import metrics
from tschsim.config import CHARGE_KEYS, SCALAR_KEYS, ConfigError, RunConfig, apply_overrides, coerce
from tschsim.engine import run as run_once
from tschsim.topology import Topology, build_paper_topology

log = logging.getLogger("tschsim")

ENV_PREFIX = "TSCHSIM_"
EXIT_CONFIG = 3
EXIT_OUTPUT = 4

REFERENCE_ARM = "leafCopy+BDPC"
PAPER_ARMS: tuple[tuple[str, dict], ...] = (
    ("MSF-baseline", {"sf_kind": "MSF", "flooding": "none", "ap_mode": "strict"}),
    ("leafCopy", {"sf_kind": "MSF", "flooding": "leafCopy", "ap_mode": "strict"}),
    ("mid-flood", {"sf_kind": "MSF", "flooding": "midFlood", "ap_mode": "strict"}),
    ("mid-flood-drop", {"sf_kind": "MSF", "flooding": "midFloodDrop", "ap_mode": "strict"}),
    ("flood", {"sf_kind": "MSF", "flooding": "flood", "ap_mode": "strict"}),
    ("leafCopy+BDPC", {"sf_kind": "BDPC", "flooding": "leafCopy", "ap_mode": "strict", "sf_max": 0.1, "sf_min": 0.05}),
)
PAPER_PERIODS = (5.0, 10.0, 15.0)
PAPER_SEEDS = tuple(range(30))


@dataclass
class Arm:
    name: str
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentPlan:
    base: RunConfig
    arms: list[Arm]
    periods: list[float]
    seeds: list[int]
    topology: dict = field(default_factory=dict)

    def configs(self) -> list[tuple[str, RunConfig]]:
        out = []
        for arm in self.arms:
            cfg_arm = apply_overrides(self.base, arm.overrides)
            for p in self.periods:
                for s in self.seeds:
                    out.append((arm.name, cfg_arm.replace(pk_period_s=p, seed=s).validate()))
        return out

    def validate(self) -> "ExperimentPlan":
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ConfigError(f"arm names must be unique: {names}")
        if not self.arms or not self.periods or not self.seeds:
            raise ConfigError("plan needs at least one arm, one period and one seed")
        self.configs()
        return self

    def build_topology(self) -> Topology:
        return build_paper_topology(**self.topology)


def paper_plan() -> ExperimentPlan:
    return ExperimentPlan(
        RunConfig(), [Arm(n, dict(o)) for n, o in PAPER_ARMS], list(PAPER_PERIODS), list(PAPER_SEEDS)
    )


# ---------------------------------------------------------------- parsing

def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive), ``"1,3,7"`` or a mix such as ``"0..2,9"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", part)
        try:
            if m:
                lo, hi = int(m.group(1)), int(m.group(2))
                if hi < lo:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return seeds


def parse_periods(text: str) -> list[float]:
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse periods {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"periods must be positive seconds, got {text!r}")
    return vals


def _section_values(section: configparser.SectionProxy) -> dict:
    return {k: coerce(k, v) for k, v in section.items()}


def load_plan(path: Path) -> ExperimentPlan:
    """Read an INI-style plan: ``[defaults]``, ``[plan]``, ``[topology]`` and one ``[arm:NAME]`` per arm."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    base = RunConfig()
    if parser.has_section("defaults"):
        base = apply_overrides(base, _section_values(parser["defaults"]))
    arms = []
    for name in parser.sections():
        if name.startswith("arm:"):
            arms.append(Arm(name[4:].strip(), _section_values(parser[name])))
        elif name not in ("defaults", "plan", "topology"):
            raise ConfigError(f"unknown config section [{name}]")
    periods, seeds = list(PAPER_PERIODS), list(PAPER_SEEDS)
    if parser.has_section("plan"):
        sec = parser["plan"]
        for key in sec:
            if key not in ("periods", "seeds"):
                raise ConfigError(f"unknown key {key!r} in [plan]")
        if "periods" in sec:
            periods = parse_periods(sec["periods"])
        if "seeds" in sec:
            seeds = parse_seeds(sec["seeds"])
    topo = {}
    if parser.has_section("topology"):
        for key, raw in parser["topology"].items():
            if key not in ("groups", "group_size"):
                raise ConfigError(f"unknown key {key!r} in [topology]")
            try:
                topo[key] = int(raw)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if not arms:
        arms = [Arm(n, dict(o)) for n, o in PAPER_ARMS]
    return ExperimentPlan(base, arms, periods, seeds, topo)


def env_overrides(environ: Optional[dict] = None) -> dict:
    """Config values from ``TSCHSIM_<KEY>`` variables (key matched case-insensitively)."""
    environ = os.environ if environ is None else environ
    known = {k.lower(): k for k in list(SCALAR_KEYS) + sorted(CHARGE_KEYS)}
    out = {}
    for var, raw in environ.items():
        if not var.startswith(ENV_PREFIX):
            continue
        key = known.get(var[len(ENV_PREFIX):].lower())
        if key is None:
            raise ConfigError(f"environment variable {var} names no config key")
        out[key] = coerce(key, raw)
    return out


def plan_to_ini(plan: ExperimentPlan) -> str:
    lines = ["# Experiment plan: one [arm:NAME] section per arm, [defaults] for every run.", "", "[defaults]"]
    for f in fields(RunConfig):
        if f.name in ("charges", "reserved_slots", "listen_cells", "seed", "pk_period_s"):
            continue
        v = getattr(plan.base, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    for f in fields(plan.base.charges):
        lines.append(f"{f.name} = {getattr(plan.base.charges, f.name)}")
    lines += ["", "[plan]", "periods = " + ", ".join(f"{p:g}" for p in plan.periods),
              "seeds = " + _seeds_text(plan.seeds)]
    for arm in plan.arms:
        lines += ["", f"[arm:{arm.name}]"]
        lines += [f"{k} = {v}" for k, v in arm.overrides.items()]
    return "\n".join(lines) + "\n"


def _seeds_text(seeds: Sequence[int]) -> str:
    if list(seeds) == list(range(seeds[0], seeds[0] + len(seeds))):
        return f"{seeds[0]}..{seeds[-1]}"
    return ",".join(map(str, seeds))


# -------------------------------------------------------------- execution

def _worker(job: tuple[str, RunConfig, dict]) -> metrics.RunReport:
    arm, cfg, topo = job
    return run_once(cfg, build_paper_topology(**topo), arm)


def execute(plan: ExperimentPlan, jobs: int = 1) -> list[metrics.RunReport]:
    work = [(arm, cfg, plan.topology) for arm, cfg in plan.configs()]
    if jobs <= 1 or len(work) == 1:
        reports = []
        for i, job in enumerate(work, 1):
            log.info("run %d/%d: %s period=%g seed=%d", i, len(work), job[0], job[1].pk_period_s, job[1].seed)
            reports.append(_worker(job))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_worker, work))
    return metrics.sort_reports(reports)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text)


def write_outputs(out: Path, reports: list[metrics.RunReport], arm_names: Sequence[str]) -> None:
    (out / "delays").mkdir(parents=True, exist_ok=True)
    (out / "energy").mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(metrics.runs_csv(reports), encoding="utf-8")
    summary = metrics.aggregate(reports)
    (out / "summary.csv").write_text(metrics.summary_csv(summary), encoding="utf-8")
    (out / "summary_by_period.csv").write_text(
        metrics.summary_csv(metrics.aggregate(reports, by_period=True)), encoding="utf-8"
    )
    if REFERENCE_ARM in arm_names:
        others = [a for a in arm_names if a != REFERENCE_ARM]
        rows = metrics.ratio_table(summary, REFERENCE_ARM, others)
        (out / "ratios.csv").write_text(metrics.ratios_csv(rows), encoding="utf-8")
    for r in reports:
        stem = f"{_slug(r.arm)}_p{r.pk_period:g}_s{r.seed}"
        (out / "delays" / f"{stem}.txt").write_text(metrics.delays_text(r), encoding="utf-8")
        (out / "energy" / f"{stem}.csv").write_text(r.node_csv(), encoding="utf-8")


def _prepare_output(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


class OutputError(Exception):
    pass


# -------------------------------------------------------------------- CLI

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tschsim", description="6TiSCH replication and deadline-scheduling simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def plan_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="INI plan file (default: the benchmark plan)")
        sp.add_argument("--seeds", help="e.g. 0..4 or 1,3,5")
        sp.add_argument("--arms", help="comma-separated arm names to keep")
        sp.add_argument("--periods", help="comma-separated packet periods in seconds")
        sp.add_argument("--budget-rule", choices=("endtoend", "proportional"))
        sp.add_argument("--frames", type=int, help="slotframes per run")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key for every run")

    r = sub.add_parser("run", help="execute a plan and write CSV outputs")
    plan_flags(r)
    r.add_argument("--output-dir", required=True)
    r.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    pp = sub.add_parser("paper-plan", help="write the benchmark experiment plan as a config file")
    pp.add_argument("--output", help="file to write (default: stdout)")

    t = sub.add_parser("topo", help="print the benchmark topology as an edge list")
    t.add_argument("--groups", type=int, default=5)
    t.add_argument("--group-size", type=int, default=4)

    v = sub.add_parser("validate", help="check a plan without running it")
    plan_flags(v)
    return p


def resolve_plan(args: argparse.Namespace, environ: Optional[dict] = None) -> ExperimentPlan:
    plan = load_plan(Path(args.config)) if args.config else paper_plan()
    values = env_overrides(environ)
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = coerce(key.strip(), raw)
    if args.budget_rule:
        values["budget_rule"] = args.budget_rule
    if args.frames is not None:
        values["duration_slotframes"] = args.frames
    if values:
        plan.base = apply_overrides(plan.base, values)
        # explicit overrides beat per-arm settings
        for arm in plan.arms:
            for k in values:
                arm.overrides.pop(k, None)
    if args.seeds:
        plan.seeds = parse_seeds(args.seeds)
    if args.periods:
        plan.periods = parse_periods(args.periods)
    if args.arms:
        wanted = [a.strip() for a in args.arms.split(",") if a.strip()]
        known = {a.name: a for a in plan.arms}
        missing = [w for w in wanted if w not in known]
        if missing:
            raise ConfigError(f"unknown arm(s) {missing}; plan has {sorted(known)}")
        plan.arms = [known[w] for w in wanted]
    return plan.validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "paper-plan":
            text = plan_to_ini(paper_plan())
            if args.output:
                try:
                    Path(args.output).write_text(text, encoding="utf-8")
                except OSError as exc:
                    raise OutputError(f"cannot write {args.output}: {exc.strerror}") from None
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "topo":
            topo = build_paper_topology(args.groups, args.group_size)
            sys.stdout.write(topo.to_edge_list())
            return 0
        plan = resolve_plan(args)
        n = len(plan.arms) * len(plan.periods) * len(plan.seeds)
        if args.command == "validate":
            print(f"ok: {len(plan.arms)} arms x {len(plan.periods)} periods x {len(plan.seeds)} seeds = {n} runs")
            return 0
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = _prepare_output(args.output_dir)
        reports = execute(plan, args.jobs)
        write_outputs(out, reports, [a.name for a in plan.arms])
        print(f"wrote {len(reports)} runs to {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
