"""Per-step role counts, cross-run aggregation, honesty bins, and durations.

Roles partition the population every step: an agent is alone, the initiator
of the coalition it sits in, or a solicited member of someone else's
coalition. Honesty bins pool agents across runs at the nearest multiple of
0.05 (ties round up). Coalition durations count both endpoints and include
right-censored coalitions still alive at the final step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

BIN_WIDTH = 0.05


@dataclass(frozen=True)
class StepFrame:
    """End-of-step population snapshot."""

    step: int
    alone: int
    solicited: int
    initiator: int
    coalitions_active: int
    formed_this_step: int
    mean_coalition_size: float


@dataclass(frozen=True)
class MeanFrame:
    """Arithmetic mean of StepFrame fields at one step index across runs."""

    step: int
    alone: float
    solicited: float
    initiator: float
    coalitions_active: float
    formed_this_step: float
    mean_coalition_size: float


@dataclass(frozen=True)
class HonestyBin:
    bin_center: float
    mean_gained_utility: float
    agent_count: int


@dataclass(frozen=True)
class DurationStats:
    count: int
    mean: float | None
    min: int | None
    max: int | None


def classify_roles(
    membership: Sequence[int | None],
    coalitions: Mapping[int, object],
) -> tuple[int, int, int]:
    """Count (alone, solicited, initiator) agents; the three always sum to n."""
    alone = solicited = initiator = 0
    for agent_id, coalition_id in enumerate(membership):
        if coalition_id is None:
            alone += 1
        elif coalitions[coalition_id].initiator == agent_id:
            initiator += 1
        else:
            solicited += 1
    return alone, solicited, initiator


def build_step_frame(
    step: int,
    membership: Sequence[int | None],
    coalitions: Mapping[int, object],
    formed_this_step: int,
) -> StepFrame:
    alone, solicited, initiator = classify_roles(membership, coalitions)
    sizes = [len(c.members) for c in coalitions.values()]
    mean_size = sum(sizes) / len(sizes) if sizes else 0.0
    return StepFrame(
        step=step,
        alone=alone,
        solicited=solicited,
        initiator=initiator,
        coalitions_active=len(coalitions),
        formed_this_step=formed_this_step,
        mean_coalition_size=mean_size,
    )


def aggregate_runs(runs: Sequence[Sequence[StepFrame]]) -> list[MeanFrame]:
    """Per-step means across runs; all runs must cover the same steps."""
    if not runs:
        return []
    n_steps = len(runs[0])
    for i, frames in enumerate(runs):
        if len(frames) != n_steps:
            raise ValueError(
                f"run 0 has {n_steps} steps but run {i} has {len(frames)}; cannot aggregate"
            )
    out: list[MeanFrame] = []
    n_runs = len(runs)
    for t in range(n_steps):
        frames = [run[t] for run in runs]
        out.append(
            MeanFrame(
                step=frames[0].step,
                alone=sum(f.alone for f in frames) / n_runs,
                solicited=sum(f.solicited for f in frames) / n_runs,
                initiator=sum(f.initiator for f in frames) / n_runs,
                coalitions_active=sum(f.coalitions_active for f in frames) / n_runs,
                formed_this_step=sum(f.formed_this_step for f in frames) / n_runs,
                mean_coalition_size=sum(f.mean_coalition_size for f in frames) / n_runs,
            )
        )
    return out


def honesty_bin_index(honesty: float) -> int:
    """Nearest multiple-of-0.05 bin, ties rounding up (0.125 -> 0.15)."""
    return math.floor(honesty * 20.0 + 0.5)


def honesty_utility_profile(results: Iterable[object], mode: str = "ledger") -> list[HonestyBin]:
    """Mean gained utility per honesty bin, pooling agents across runs.

    ``mode`` picks the reading of gained utility: ``ledger`` is the full
    cumulative ledger total (accruals plus all transfers minus all costs),
    ``accrual`` counts per-step coalition utility only. Empty bins are
    reported with a zero count.
    """
    if mode not in ("ledger", "accrual"):
        raise ValueError(f"unknown gained-utility mode {mode!r}")
    totals: dict[int, float] = {}
    counts: dict[int, int] = {}
    max_index = 0
    for result in results:
        gains = result.final_balances if mode == "ledger" else result.final_accruals
        max_index = max(max_index, honesty_bin_index(result.config.honesty_max))
        for honesty, gained in zip(result.honesty, gains):
            index = honesty_bin_index(honesty)
            totals[index] = totals.get(index, 0.0) + gained
            counts[index] = counts.get(index, 0) + 1
            max_index = max(max_index, index)
    bins: list[HonestyBin] = []
    for index in range(max_index + 1):
        count = counts.get(index, 0)
        mean = totals[index] / count if count else 0.0
        bins.append(HonestyBin(bin_center=index * BIN_WIDTH, mean_gained_utility=mean, agent_count=count))
    return bins


def coalition_duration(formed_at: int, dissolved_at: int | None, n_steps: int) -> int:
    """Inclusive step count; still-alive coalitions are censored at the final step."""
    end = dissolved_at if dissolved_at is not None else n_steps
    return end - formed_at + 1


def coalition_duration_stats(
    lifetimes: Iterable[tuple[int, int | None]],
    n_steps: int,
) -> DurationStats:
    """Duration statistics over (formed_at, dissolved_at) pairs from any number of runs."""
    durations = [coalition_duration(f, d, n_steps) for f, d in lifetimes]
    if not durations:
        return DurationStats(count=0, mean=None, min=None, max=None)
    return DurationStats(
        count=len(durations),
        mean=sum(durations) / len(durations),
        min=min(durations),
        max=max(durations),
    )
