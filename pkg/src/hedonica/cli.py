"""Command-line front end.

Three subcommands:

* ``run``: execute ``n_runs`` seeded runs of one configuration and write
  ``steps.csv``, ``honesty.csv``, and ``summary.json`` to the output
  directory (plus per-run event traces and trust dumps on request),
* ``experiment``: the canned four-population study (all seeking, all averse,
  all neutral, equal mix) with a ``comparison.json`` of cross-population
  metrics and ordering checks,
* ``replay-check``: re-derive a recorded run set from its event traces alone
  and verify it against ``summary.json``.

Exit codes: 0 success, 1 I/O or internal invariant failure, 2 invalid
configuration, 3 replay divergence. The environment variable ``HEDONICA_OUT``
overrides the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .domain import SimConfig, validate_config
from .engine import ConfigError, RunResult, SimulationInvariantError, run_simulation
from .metrics import (
    HonestyBin,
    aggregate_runs,
    coalition_duration_stats,
    honesty_utility_profile,
)
from .tracefmt import read_trace, verify_trace, write_trace

STEPS_HEADER = "run,step,alone,solicited,initiator,coalitions_active,formed_this_step,mean_coalition_size"
HONESTY_HEADER = "bin_center,mean_gained_utility,agent_count"

EXPERIMENT_MIXES = ("seeking", "averse", "neutral", "mixed")


# --- configuration loading ----------------------------------------------------


def _coerce(name: str, kind: type, raw: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError([f"override {name}={raw!r}: {exc}"]) from None


def build_config(
    config_path: str | None,
    overrides: list[str],
    seed: int | None,
) -> SimConfig:
    """Defaults, then config file values, then k=v overrides, then --seed."""
    values: dict = {}
    field_types = {f.name: f.type for f in dataclasses.fields(SimConfig)}
    type_map = {"int": int, "float": float, "str": str}

    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = sorted(set(loaded) - set(field_types))
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in unknown])
        values.update(loaded)

    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not of the form key=value"])
        key, raw = item.split("=", 1)
        if key not in field_types:
            raise ConfigError([f"unknown config key {key!r}"])
        values[key] = _coerce(key, type_map.get(field_types[key], str), raw)

    config = SimConfig(**values)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def run_batch(config: SimConfig) -> list[RunResult]:
    """Run ``n_runs`` independent runs; run i uses seed + i."""
    return [run_simulation(config, seed=config.seed + i) for i in range(config.n_runs)]


# --- output files --------------------------------------------------------------


def _write_steps_csv(path: Path, results: list[RunResult]) -> None:
    lines = [STEPS_HEADER]
    for run_index, result in enumerate(results):
        for f in result.frames:
            lines.append(
                f"{run_index},{f.step},{f.alone},{f.solicited},{f.initiator},"
                f"{f.coalitions_active},{f.formed_this_step},{f.mean_coalition_size:.6f}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_honesty_csv(path: Path, bins: list[HonestyBin]) -> None:
    lines = [HONESTY_HEADER]
    for b in bins:
        lines.append(f"{b.bin_center:.6f},{b.mean_gained_utility:.6f},{b.agent_count}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _duration_stats_dict(results: list[RunResult]) -> dict:
    lifetimes = [
        (lt.formed_at, lt.dissolved_at) for r in results for lt in r.lifetimes
    ]
    n_steps = results[0].config.n_steps if results else 0
    stats = coalition_duration_stats(lifetimes, n_steps)
    return {"count": stats.count, "mean": stats.mean, "min": stats.min, "max": stats.max}


def _summary_dict(config: SimConfig, results: list[RunResult]) -> dict:
    return {
        "artifact": "hedonica",
        "version": __version__,
        "config": dataclasses.asdict(config),
        "seeds": [r.seed for r in results],
        "n_runs": len(results),
        "duration_stats": _duration_stats_dict(results),
        "runs": [
            {
                "seed": r.seed,
                "honesty": r.honesty,
                "attitudes": r.attitudes,
                "responders": r.responders,
                "final_balances": r.final_balances,
                "final_accruals": r.final_accruals,
                "final_trust": r.final_trust.values,
                "lifetimes": [
                    [lt.coalition_id, lt.formed_at, lt.dissolved_at, lt.size_at_formation]
                    for lt in r.lifetimes
                ],
            }
            for r in results
        ],
    }


def write_outputs(
    out_dir: Path,
    config: SimConfig,
    results: list[RunResult],
    write_traces: bool = False,
    dump_trust: bool = False,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_steps_csv(out_dir / "steps.csv", results)
    bins = honesty_utility_profile(results, mode=config.gained_utility_mode)
    _write_honesty_csv(out_dir / "honesty.csv", bins)
    summary = _summary_dict(config, results)
    with open(out_dir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if write_traces:
        for run_index, result in enumerate(results):
            write_trace(out_dir / f"trace_run{run_index:03d}.log", result.trace)
    if dump_trust:
        for run_index, result in enumerate(results):
            (out_dir / f"trust_run{run_index:03d}.csv").write_text(
                result.final_trust.to_csv(), encoding="utf-8"
            )


# --- experiment ----------------------------------------------------------------


def experiment_configs(base: SimConfig) -> dict[str, SimConfig]:
    return {mix: dataclasses.replace(base, risk_mix=mix) for mix in EXPERIMENT_MIXES}


def _argmax_bin(bins: list[HonestyBin]) -> float | None:
    occupied = [b for b in bins if b.agent_count > 0]
    if not occupied:
        return None
    best = max(occupied, key=lambda b: b.mean_gained_utility)
    return best.bin_center


FIG1_WINDOW = (0.10, 0.15, 0.20, 0.25)


def build_comparison(results_by_mix: dict[str, list[RunResult]]) -> dict:
    """Cross-population metrics plus the qualitative ordering checks."""
    per_mix: dict[str, dict] = {}
    for mix, results in results_by_mix.items():
        means = aggregate_runs([r.frames for r in results])
        n_steps = len(means)
        per_mix[mix] = {
            "duration": _duration_stats_dict(results),
            "mean_alone": sum(f.alone for f in means) / n_steps if n_steps else None,
            "mean_solicited": sum(f.solicited for f in means) / n_steps if n_steps else None,
            "mean_initiators": sum(f.initiator for f in means) / n_steps if n_steps else None,
            "honesty_profile_ledger": [
                dataclasses.asdict(b) for b in honesty_utility_profile(results, mode="ledger")
            ],
            "honesty_profile_accrual": [
                dataclasses.asdict(b) for b in honesty_utility_profile(results, mode="accrual")
            ],
        }

    def duration_mean(mix: str) -> float | None:
        return per_mix[mix]["duration"]["mean"]

    fig1 = {}
    for mix in ("seeking", "neutral"):
        fig1[mix] = {}
        for mode in ("ledger", "accrual"):
            bins = [HonestyBin(**d) for d in per_mix[mix][f"honesty_profile_{mode}"]]
            peak = _argmax_bin(bins)
            fig1[mix][mode] = {
                "argmax_bin": peak,
                "within_window": peak is not None and any(abs(peak - w) < 1e-9 for w in FIG1_WINDOW),
            }

    d_seek, d_avers, d_neut = (duration_mean(m) for m in ("seeking", "averse", "neutral"))
    alone = {m: per_mix[m]["mean_alone"] for m in ("seeking", "averse", "neutral")}
    initiators = {m: per_mix[m]["mean_initiators"] for m in ("seeking", "averse", "neutral")}
    orderings = {
        "duration_seeking_lt_averse": d_seek is not None and d_avers is not None and d_seek < d_avers,
        "duration_averse_lt_neutral": d_avers is not None and d_neut is not None and d_avers < d_neut,
        "alone_seeking_lowest": alone["seeking"] < alone["averse"] and alone["seeking"] < alone["neutral"],
        "initiators_neutral_lowest": initiators["neutral"] < initiators["seeking"]
        and initiators["neutral"] < initiators["averse"],
        "fig1_peak": fig1,
    }
    return {"configs": per_mix, "orderings": orderings}


# --- subcommands ----------------------------------------------------------------


def _resolve_out_dir(flag_value: str) -> Path:
    return Path(os.environ.get("HEDONICA_OUT", flag_value))


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = build_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    violations = validate_config(config)
    if violations:
        for violation in violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    try:
        results = run_batch(config)
        write_outputs(
            _resolve_out_dir(args.out),
            config,
            results,
            write_traces=args.trace,
            dump_trust=args.dump_trust,
        )
    except SimulationInvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {config.n_runs} runs to {_resolve_out_dir(args.out)}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    try:
        base = build_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    out_root = _resolve_out_dir(args.out)
    try:
        results_by_mix: dict[str, list[RunResult]] = {}
        for mix, config in experiment_configs(base).items():
            violations = validate_config(config)
            if violations:
                for violation in violations:
                    print(f"config error ({mix}): {violation}", file=sys.stderr)
                return 2
            results = run_batch(config)
            write_outputs(
                out_root / mix,
                config,
                results,
                write_traces=args.trace,
                dump_trust=args.dump_trust,
            )
            results_by_mix[mix] = results
        comparison = build_comparison(results_by_mix)
        out_root.mkdir(parents=True, exist_ok=True)
        with open(out_root / "comparison.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(comparison, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except SimulationInvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote 4 configurations to {out_root}")
    return 0


def cmd_replay_check(args: argparse.Namespace) -> int:
    out_dir = _resolve_out_dir(args.out)
    summary_path = out_dir / "summary.json"
    try:
        with open(summary_path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read {summary_path}: {exc}", file=sys.stderr)
        return 1
    config = summary["config"]
    for run_index, run_summary in enumerate(summary["runs"]):
        trace_path = out_dir / f"trace_run{run_index:03d}.log"
        try:
            events = read_trace(trace_path)
        except OSError as exc:
            print(f"error: cannot read {trace_path}: {exc}", file=sys.stderr)
            return 1
        problems = verify_trace(events, run_summary, config)
        if problems:
            print(f"replay divergence in run {run_index}: {problems[0]}", file=sys.stderr)
            for extra in problems[1:5]:
                print(f"  also: {extra}", file=sys.stderr)
            return 3
    print(f"replay check passed for {len(summary['runs'])} runs")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hedonica",
        description="Seeded simulator of history-based hedonic coalition formation",
    )
    parser.add_argument("--version", action="version", version=f"hedonica {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="base seed (run i uses seed + i)")
        p.add_argument("--out", default="out", help="output directory (HEDONICA_OUT overrides)")
        p.add_argument(
            "--overrides",
            nargs="*",
            default=[],
            metavar="KEY=VALUE",
            help="config field overrides applied after the config file",
        )
        p.add_argument("--trace", action="store_true", help="write per-run event traces")
        p.add_argument(
            "--dump-trust", action="store_true", help="write per-run final trust matrices"
        )

    p_run = sub.add_parser("run", help="run one configuration")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_exp = sub.add_parser("experiment", help="run the four-population study")
    add_common(p_exp)
    p_exp.set_defaults(func=cmd_experiment)

    p_replay = sub.add_parser("replay-check", help="verify recorded outputs against event traces")
    p_replay.add_argument("--out", default="out", help="directory with summary.json and traces")
    p_replay.set_defaults(func=cmd_replay_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
