"""Agent decision rules.

Four families of decisions live here:

* agreement-phase acceptance and response timing,
* the confirmation (leave/join) criterion,
* history-based interest estimation: the normalized distance between two
  coalitions is ``|symmetric difference| / n``, and a solicited agent's
  interest in a candidate is ``min(d_rcv, d_acc) - d_ref`` over the closest
  stored proposals in each category (negative means probably interested),
* the three risk-attitude preference operators used to pick which candidate
  coalitions to propose.

All functions are pure; randomness comes in only through the caller's seeded
generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence

from .domain import AgentId, AgentProfile, CoalitionSet, ResponderType, RiskAttitude, SimConfig
from .utility import coalition_utility


class Direction(IntEnum):
    RECEIVED = 0
    SENT_ACCEPTED = 1
    SENT_REFUSED = 2


@dataclass(frozen=True)
class ProposalRecord:
    """One remembered proposal.

    ``counterpart`` is the sender for a received proposal, and the solicited
    recipient (whose yes/no annotates the record) for a sent one.
    """

    coalition: CoalitionSet
    counterpart: AgentId
    direction: Direction
    step: int


@dataclass(frozen=True)
class InterestAssessment:
    """Worst-member interest and the formation probability it maps to."""

    delta: float
    p_formation: float


class ProposalHistory:
    """Everything one agent remembers about sent and received proposals.

    Keeps the raw records plus indexes: deduplicated coalition bitmasks per
    (counterpart, direction) for distance queries, and insertion-ordered
    pools of distinct coalitions for candidate sampling. ``version`` bumps on
    every insertion so callers can cache derived structures.
    """

    __slots__ = (
        "owner",
        "records",
        "version",
        "_mask_lists",
        "_mask_sets",
        "_sent_pool",
        "_sent_seen",
        "_recv_pool",
        "_recv_seen",
    )

    def __init__(self, owner: AgentId):
        self.owner = owner
        self.records: list[ProposalRecord] = []
        self.version = 0
        # One dict per Direction value, keyed by counterpart id.
        self._mask_lists: tuple[dict[AgentId, list[int]], ...] = ({}, {}, {})
        self._mask_sets: tuple[dict[AgentId, set[int]], ...] = ({}, {}, {})
        self._sent_pool: list[tuple[CoalitionSet, AgentId]] = []
        self._sent_seen: set[int] = set()
        self._recv_pool: list[tuple[CoalitionSet, AgentId]] = []
        self._recv_seen: set[int] = set()

    def add(self, record: ProposalRecord) -> None:
        self.records.append(record)
        self.version += 1
        counterpart = record.counterpart
        seen = self._mask_sets[record.direction].setdefault(counterpart, set())
        mask = record.coalition.mask
        if mask not in seen:
            seen.add(mask)
            self._mask_lists[record.direction].setdefault(counterpart, []).append(mask)
        if record.direction is Direction.RECEIVED:
            if mask not in self._recv_seen:
                self._recv_seen.add(mask)
                self._recv_pool.append((record.coalition, record.counterpart))
        else:
            if mask not in self._sent_seen:
                self._sent_seen.add(mask)
                self._sent_pool.append((record.coalition, self.owner))

    def masks(self, counterpart: AgentId, direction: Direction) -> list[int]:
        """Distinct coalition masks recorded for (counterpart, direction)."""
        return self._mask_lists[direction].get(counterpart, [])

    def mask_lists_by_direction(self) -> tuple[dict[AgentId, list[int]], ...]:
        """Live read-only view of the mask index, one dict per Direction value."""
        return self._mask_lists

    def sent_pool(self) -> list[tuple[CoalitionSet, AgentId]]:
        return self._sent_pool

    def received_pool(self) -> list[tuple[CoalitionSet, AgentId]]:
        return self._recv_pool

    def __len__(self) -> int:
        return len(self.records)


# --- agreement phase ---------------------------------------------------------


def should_accept(agent: AgentId, proposed: CoalitionSet, profile: AgentProfile) -> bool:
    """Accept unless the proposed coalition is worth less than being alone (0)."""
    return coalition_utility(agent, proposed, profile) >= 0.0


def response_step(
    responder_type: ResponderType,
    arrival_step: int,
    deadline: int,
    rng: random.Random,
) -> int:
    """Step at which the responder answers a proposal that arrived at ``arrival_step``.

    Early responders answer immediately, lazy ones at the last step that still
    counts, random ones uniformly anywhere in the window.
    """
    if deadline < 1:
        raise ValueError(f"deadline must be >= 1, got {deadline}")
    if responder_type is ResponderType.EARLY:
        return arrival_step
    if responder_type is ResponderType.LAZY:
        return arrival_step + deadline - 1
    return arrival_step + rng.randrange(deadline)


# --- confirmation phase ------------------------------------------------------


def should_switch(
    agent: AgentId,
    eu_current: float,
    eu_proposed: float,
    honesty: float,
    brc: float,
) -> bool:
    """Leave-and-join criterion: strict inequality, so ties keep the status quo."""
    if not 0.0 <= brc < 1.0:
        raise ValueError(f"bad reputation coefficient must be in [0, 1), got {brc}")
    return eu_current * (1.0 + honesty) < eu_proposed * (1.0 - brc)


# --- history-based interest --------------------------------------------------


def coalition_distance(c1: CoalitionSet, c2: CoalitionSet, n_agents: int) -> float:
    """Normalized distance: symmetric-difference size divided by population size."""
    if c1.members[-1] >= n_agents or c2.members[-1] >= n_agents:
        raise ValueError("coalition members must be < n_agents")
    return (c1.mask ^ c2.mask).bit_count() / n_agents


def _min_distance(masks: list[int], candidate_mask: int, n_agents: int) -> float:
    # An empty record category contributes the uninformed default distance 1.
    if not masks:
        return 1.0
    return min((m ^ candidate_mask).bit_count() for m in masks) / n_agents


def interest_degree(
    initiator_history: ProposalHistory,
    target: AgentId,
    candidate: CoalitionSet,
    n_agents: int,
) -> float:
    """Estimated willingness of ``target`` toward ``candidate``, in [-1, 1].

    Closest-precedent distances: received-from-target and accepted-by-target
    records pull the value down (similar coalitions were welcome), refused
    records push it up.
    """
    if target not in candidate:
        raise ValueError(f"target {target} not in candidate {candidate.members}")
    if target == initiator_history.owner:
        raise ValueError("an initiator has no interest record on itself")
    cmask = candidate.mask
    d_rcv = _min_distance(initiator_history.masks(target, Direction.RECEIVED), cmask, n_agents)
    d_acc = _min_distance(initiator_history.masks(target, Direction.SENT_ACCEPTED), cmask, n_agents)
    d_ref = _min_distance(initiator_history.masks(target, Direction.SENT_REFUSED), cmask, n_agents)
    return min(d_rcv, d_acc) - d_ref


def formation_probability(deltas: Sequence[float]) -> float:
    """Map the most unwilling member's interest onto [0, 1]."""
    if not deltas:
        raise ValueError("formation probability needs at least one solicited agent")
    return (1.0 - max(deltas)) / 2.0


def preference_score(
    utility: float,
    p_formation: float,
    attitude: RiskAttitude,
    alpha: float,
    beta: float,
) -> float:
    """Attitude-weighted desirability of proposing a candidate coalition."""
    if utility <= 0.0:
        raise ValueError(f"preference scores are defined for positive utility, got {utility}")
    if attitude is RiskAttitude.SEEKING:
        return utility**alpha * p_formation
    if attitude is RiskAttitude.AVERSE:
        return utility * p_formation**beta
    return utility * p_formation


# --- candidate generation and selection --------------------------------------


def _with_initiator(
    coalition: CoalitionSet,
    initiator: AgentId,
    originator: AgentId,
    size_max: int,
) -> CoalitionSet:
    """Remap a sampled coalition so it contains the initiator.

    If inserting the initiator would exceed the size cap, the sampled
    proposal's original initiator gives up its seat (failing that, the
    highest other id does).
    """
    if initiator in coalition:
        return coalition
    members = set(coalition.members)
    members.add(initiator)
    if len(members) > size_max:
        if originator in members and originator != initiator:
            members.discard(originator)
        else:
            members.discard(max(m for m in members if m != initiator))
    return CoalitionSet.of(members)


def generate_candidates(
    initiator: AgentId,
    history: ProposalHistory,
    config: SimConfig,
    rng: random.Random,
) -> list[CoalitionSet]:
    """Candidate coalitions: fresh random ones plus samples from both history pools.

    Every candidate contains the initiator and has at least two members; the
    result is deduplicated preserving first appearance.
    """
    out: list[CoalitionSet] = []
    seen: set[int] = set()
    size_max = min(config.random_coalition_size_max, config.n_agents)
    others = [a for a in range(config.n_agents) if a != initiator]

    for _ in range(config.candidate_random_count):
        size = rng.randint(2, size_max)
        members = rng.sample(others, size - 1)
        candidate = CoalitionSet.of([initiator, *members])
        if candidate.mask not in seen:
            seen.add(candidate.mask)
            out.append(candidate)

    for pool, want in (
        (history.sent_pool(), config.candidate_sent_count),
        (history.received_pool(), config.candidate_recv_count),
    ):
        take = min(want, len(pool))
        if take == 0:
            continue
        for coalition, originator in rng.sample(pool, take):
            candidate = _with_initiator(coalition, initiator, originator, size_max)
            if candidate.mask not in seen:
                seen.add(candidate.mask)
                out.append(candidate)

    return out


def select_proposals(
    initiator: AgentId,
    candidates: Sequence[CoalitionSet],
    profile: AgentProfile,
    history: ProposalHistory,
    current_coalition: CoalitionSet | None,
    config: SimConfig,
    utility_of: Callable[[CoalitionSet], float] | None = None,
    p_formation_of: Callable[[CoalitionSet], float] | None = None,
) -> list[CoalitionSet]:
    """Pick the proposals actually worth sending this step, best first.

    Pipeline: drop candidates with non-positive utility or identical to the
    current coalition, score the rest with the initiator's preference
    operator, keep the top ``max_proposals_per_step`` (ties broken by member
    ids), then apply the send gate ``utility * p_formation >= 2 * comm_cost``.

    ``utility_of`` / ``p_formation_of`` allow callers to plug in cached or
    vectorized equivalents of the default computations.
    """
    if utility_of is None:
        utility_of = lambda c: coalition_utility(initiator, c, profile)
    if p_formation_of is None:
        p_formation_of = lambda c: formation_probability(
            [interest_degree(history, j, c, config.n_agents) for j in c.others(initiator)]
        )

    current_mask = current_coalition.mask if current_coalition is not None else None
    scored: list[tuple[float, CoalitionSet, float, float]] = []
    for candidate in candidates:
        if initiator not in candidate:
            raise ValueError(f"candidate {candidate.members} does not contain initiator {initiator}")
        utility = utility_of(candidate)
        if utility <= 0.0:
            continue
        if candidate.mask == current_mask:
            continue
        p_formation = p_formation_of(candidate)
        score = preference_score(
            utility, p_formation, profile.risk_attitude, config.alpha, config.beta
        )
        scored.append((score, candidate, utility, p_formation))

    scored.sort(key=lambda item: (-item[0], item[1].members))
    gate = 2.0 * config.comm_cost
    kept = scored[: config.max_proposals_per_step]
    return [candidate for _, candidate, utility, p in kept if utility * p >= gate]
