"""Command-line entry point: sample | estimate | clt | bounds | oracle.

Configuration is an INI file with a [model] section plus one section per
command; unknown keys are rejected.  The seed resolution order is
--seed flag, then the TBC_SEED environment variable, then [run] seed.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 theorem-hypothesis
violation.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass, field

from .analytic import (
    HypothesisViolation,
    clt_constants,
    euler_clt_constants,
    isolated_clt_constants,
    volume_clt_constants,
)
from .experiments import run_campaign
from .functionals import KINDS, evaluate, euler_characteristic, euler_characteristic_voxel_oracle
from .model import Degenerate, Discrete, ModelParams, StackingSchedule, UniformCap
from .sampling import replication_rng, sample_tbc

SCHEMA_VERSION = 1

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_HYPOTHESIS = 4


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    params: ModelParams
    seed: int = 0
    out: str | None = None
    estimate: dict = field(default_factory=dict)
    clt: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)


_MODEL_KEYS = {
    "d",
    "gamma",
    "r",
    "t",
    "h",
    "s",
    "direction_law",
    "degenerate_direction",
    "discrete_directions",
    "discrete_weights",
    "stacking_times",
    "stacking_q",
}
_RUN_KEYS = {"seed", "out"}
_ESTIMATE_KEYS = {"kind", "reps", "points"}
_CLT_KEYS = {"kind", "sizes", "reps", "points", "mc_pairs"}
_BOUNDS_KEYS = {"mc_pairs"}
_ORACLE_KEYS = {"resolution"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _check_keys(section: str, present, allowed) -> None:
    unknown = sorted(set(present) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _parse_model(cfg: configparser.ConfigParser) -> ModelParams:
    if not cfg.has_section("model"):
        raise ConfigError("missing [model] section")
    sec = cfg["model"]
    _check_keys("model", sec.keys(), _MODEL_KEYS)
    try:
        law_name = sec.get("direction_law", "uniform_cap").strip().lower()
        if law_name == "uniform_cap":
            law = UniformCap()
        elif law_name == "degenerate":
            raw = sec.get("degenerate_direction", "").strip()
            law = Degenerate(_floats(raw)) if raw else Degenerate()
        elif law_name == "discrete":
            dirs = tuple(
                _floats(part) for part in sec.get("discrete_directions", "").split(";") if part.strip()
            )
            weights = _floats(sec.get("discrete_weights", ""))
            law = Discrete(dirs, weights)
        else:
            raise ConfigError(f"unknown direction_law {law_name!r}")
        stacking = None
        if sec.get("stacking_times", "").strip():
            stacking = StackingSchedule(
                _floats(sec["stacking_times"]), float(sec.get("stacking_q", "0.5"))
            )
        return ModelParams(
            d=int(sec.get("d", "2")),
            gamma=float(sec.get("gamma", "1.0")),
            r=float(sec.get("r", "0.3")),
            T=float(sec.get("t", "1.0")),
            h=float(sec.get("h", "0.5")),
            s=float(sec.get("s", "8.0")),
            direction_law=law,
            stacking=stacking,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid [model] configuration: {exc}") from exc


def parse_config(path: str) -> RunConfig:
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in cfg.sections():
        if section not in ("model", "run", "estimate", "clt", "bounds", "oracle"):
            raise ConfigError(f"unknown section [{section}]")
    params = _parse_model(cfg)
    rc = RunConfig(params=params)
    if cfg.has_section("run"):
        _check_keys("run", cfg["run"].keys(), _RUN_KEYS)
        rc.seed = int(cfg["run"].get("seed", "0"))
        rc.out = cfg["run"].get("out", None)
    for name, allowed in (
        ("estimate", _ESTIMATE_KEYS),
        ("clt", _CLT_KEYS),
        ("bounds", _BOUNDS_KEYS),
        ("oracle", _ORACLE_KEYS),
    ):
        if cfg.has_section(name):
            _check_keys(name, cfg[name].keys(), allowed)
            setattr(rc, name, dict(cfg[name]))
    return rc


def _resolve_seed(args, rc: RunConfig) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("TBC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"TBC_SEED must be an integer, got {env!r}") from exc
    return rc.seed


def _resolve_out(args, rc: RunConfig, default: str) -> str:
    return args.out or rc.out or default


def cmd_sample(args, rc: RunConfig) -> int:
    seed = _resolve_seed(args, rc)
    sample = sample_tbc(rc.params, seed, replication_index=0)
    out = _resolve_out(args, rc, "sample.json")
    sample.save(out)
    return 0


def cmd_estimate(args, rc: RunConfig) -> int:
    seed = _resolve_seed(args, rc)
    kind = args.kind or rc.estimate.get("kind", "volume")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}")
    reps = args.reps or int(rc.estimate.get("reps", "1"))
    points = args.points or int(rc.estimate.get("points", "100000"))
    out = _resolve_out(args, rc, "estimates.csv")
    rows = []
    for rep in range(reps):
        sample = sample_tbc(rc.params, seed, replication_index=rep)
        res = evaluate(
            kind, sample, m_points=points, rng=replication_rng(seed, rep, 1)
        )
        rows.append(
            [
                kind,
                rep,
                res.value,
                res.meta.get("se", ""),
                res.meta.get("indeterminate", 0),
            ]
        )
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["functional", "replication", "value", "se", "indeterminate"])
        writer.writerows(rows)
    return 0


def cmd_clt(args, rc: RunConfig) -> int:
    seed = _resolve_seed(args, rc)
    kind = args.kind or rc.clt.get("kind", "volume")
    sizes = args.sizes or _floats(rc.clt.get("sizes", "4,8"))
    reps = args.reps or int(rc.clt.get("reps", "1000"))
    points = args.points or int(rc.clt.get("points", "100000"))
    mc_pairs = int(rc.clt.get("mc_pairs", "1000000"))
    report = run_campaign(
        rc.params, kind, sizes, reps, seed, m_points=points, n_mc_pairs=mc_pairs
    )
    out = _resolve_out(args, rc, "clt_report.json")
    report.save_json(out)
    report.save_values_csv(out + ".csv")
    return 0


def cmd_bounds(args, rc: RunConfig) -> int:
    seed = _resolve_seed(args, rc)
    mc_pairs = int(rc.bounds.get("mc_pairs", "1000000"))
    reports = {"volume": volume_clt_constants(rc.params)}
    skipped = {}
    hypothesis = 6.0 * (rc.params.max_scope + rc.params.r)
    for kind, fn in (("isolated", isolated_clt_constants), ("euler", euler_clt_constants)):
        if rc.params.s >= hypothesis:
            reports[kind] = fn(rc.params, n_mc_pairs=mc_pairs, seed=seed)
        else:
            skipped[kind] = f"requires s >= 6(R_h + r) = {hypothesis}"
    doc = {
        "schema_version": SCHEMA_VERSION,
        "reports": {k: v.to_json_dict() for k, v in reports.items()},
        "skipped": skipped,
    }
    out = _resolve_out(args, rc, "bounds.json")
    with open(out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    for kind, rep in reports.items():
        print(f"-- {kind} --")
        for key, value in rep.to_json_dict().items():
            if key != "meta":
                print(f"  {key:>22}: {value}")
    for kind, why in skipped.items():
        print(f"-- {kind}: skipped ({why})")
    return 0


def cmd_oracle(args, rc: RunConfig) -> int:
    seed = _resolve_seed(args, rc)
    resolution = float(rc.oracle.get("resolution", str(rc.params.r / 20.0 if rc.params.r else 0.05)))
    sample = sample_tbc(rc.params, seed, replication_index=0)
    voxel = euler_characteristic_voxel_oracle(sample, resolution)
    nerve = euler_characteristic(sample)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "voxel_chi": voxel.value,
        "unreliable": voxel.unreliable,
        "reasons": list(voxel.reasons),
        "nerve_chi": nerve.value,
        "nerve_meta": nerve.meta,
    }
    out = _resolve_out(args, rc, "oracle.json")
    with open(out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbcsim",
        description="Time-bounded cylinder mobility model: sampling, functionals, bounds, CLT campaigns.",
    )
    parser.add_argument("--config", required=True, help="path to the INI configuration")
    parser.add_argument("--out", help="output path (overrides [run] out)")
    parser.add_argument("--seed", type=int, help="master seed (overrides TBC_SEED and config)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", help="write one realization as JSON")
    est = sub.add_parser("estimate", help="write functional values as CSV rows")
    clt = sub.add_parser("clt", help="run a CLT campaign and write the report")
    sub.add_parser("bounds", help="write all closed-form constants")
    sub.add_parser("oracle", help="voxel-oracle Euler characteristic of one realization")
    for p in (est, clt):
        p.add_argument("--kind", choices=KINDS)
        p.add_argument("--reps", type=int)
        p.add_argument("--points", type=int)
    clt.add_argument("--sizes", type=lambda t: tuple(float(x) for x in t.split(",")))
    return parser


_COMMANDS = {
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "clt": cmd_clt,
    "bounds": cmd_bounds,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("kind", "reps", "points", "sizes"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        rc = parse_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, rc)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
