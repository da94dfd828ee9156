"""Pairwise trust records with stay/leave updates.

``tr[i][j]`` is agent i's estimate of the probability that agent j stays in
their shared coalition for the next step. Every entry starts at 0.5, rises by
the trust reward when j stays, falls by the (larger) betray punishment when j
leaves, and is clamped so it always remains a probability.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum

from .domain import AgentId, SimConfig


class TrustEventKind(Enum):
    STAYED = "stayed"
    LEFT = "left"


@dataclass(frozen=True)
class TrustEvent:
    """One observation: ``observer`` saw ``subject`` stay in or leave their coalition."""

    observer: AgentId
    subject: AgentId
    kind: TrustEventKind
    step: int

    def __post_init__(self) -> None:
        if self.observer == self.subject:
            raise ValueError("an agent does not keep a trust record on itself")


@dataclass
class TrustMatrix:
    """Dense n x n trust values; the diagonal is allocated but never used."""

    values: list[list[float]]

    @property
    def n_agents(self) -> int:
        return len(self.values)

    def get(self, observer: AgentId, subject: AgentId) -> float:
        return self.values[observer][subject]

    def copy(self) -> "TrustMatrix":
        return TrustMatrix([row[:] for row in self.values])

    def to_csv(self) -> str:
        """Matrix as CSV text, row = observer, column = subject."""
        out = io.StringIO()
        for row in self.values:
            out.write(",".join(repr(v) for v in row))
            out.write("\n")
        return out.getvalue()


def init_trust(n_agents: int) -> TrustMatrix:
    """Fresh matrix with every off-diagonal entry at exactly 0.5."""
    if n_agents < 2:
        raise ValueError(f"trust needs at least two agents, got {n_agents}")
    return TrustMatrix([[0.5] * n_agents for _ in range(n_agents)])


def apply_trust_event(matrix: TrustMatrix, event: TrustEvent, config: SimConfig) -> TrustMatrix:
    """Apply one stay/leave observation, clamped to [0, 1]; touches one entry."""
    row = matrix.values[event.observer]
    if event.kind is TrustEventKind.STAYED:
        row[event.subject] = min(1.0, row[event.subject] + config.trust_reward)
    else:
        row[event.subject] = max(0.0, row[event.subject] - config.trust_punishment)
    return matrix
