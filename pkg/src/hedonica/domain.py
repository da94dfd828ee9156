"""Core identifiers, value types, and simulation configuration.

Agents are identified by dense integer ids in ``[0, n_agents)``; the id
order doubles as the deterministic iteration and tie-break order everywhere
else in the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Iterable

AgentId = int

#: Ledger entry for transfers that leave the agent economy (fee remainders).
SYSTEM_AGENT: AgentId = -1


class RiskAttitude(Enum):
    SEEKING = "seeking"
    AVERSE = "averse"
    NEUTRAL = "neutral"


class ResponderType(Enum):
    EARLY = "early"
    LAZY = "lazy"
    RANDOM = "random"


RISK_MIXES = ("seeking", "averse", "neutral", "mixed")
RESPONDER_MIXES = ("uniform", "early", "lazy", "random")
GAINED_UTILITY_MODES = ("ledger", "accrual")


@dataclass(frozen=True)
class CoalitionSet:
    """Non-empty set of agent ids, stored sorted so equality is canonical.

    ``mask`` is the bitset of member ids (bit i set iff agent i is a member);
    it is derived from ``members`` and cached for cheap set arithmetic.
    """

    members: tuple[AgentId, ...]
    mask: int = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(set(self.members)))
        if not ordered:
            raise ValueError("coalition must have at least one member")
        if ordered[0] < 0:
            raise ValueError(f"negative agent id in coalition: {ordered[0]}")
        object.__setattr__(self, "members", ordered)
        m = 0
        for a in ordered:
            m |= 1 << a
        object.__setattr__(self, "mask", m)

    @classmethod
    def of(cls, members: Iterable[AgentId]) -> "CoalitionSet":
        return cls(tuple(members))

    def __contains__(self, agent: AgentId) -> bool:
        return (self.mask >> agent) & 1 == 1 if agent >= 0 else False

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def others(self, agent: AgentId) -> tuple[AgentId, ...]:
        """Members excluding ``agent``."""
        return tuple(a for a in self.members if a != agent)


@dataclass(frozen=True)
class AgentProfile:
    """Immutable per-agent parameters fixed for a whole run.

    ``interaction_table[a][b]`` is this agent's private estimate of the
    interaction value between agents a and b (rows and columns exist for the
    owner as well; the diagonal is never read).
    """

    honesty: float
    risk_attitude: RiskAttitude
    responder_type: ResponderType
    interaction_table: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class Coalition:
    """A formed coalition: at least two members, one of them the initiator."""

    id: int
    members: CoalitionSet
    initiator: AgentId
    formed_at: int

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("formed coalitions have at least two members")
        if self.initiator not in self.members:
            raise ValueError("initiator must be a coalition member")


@dataclass
class SimConfig:
    """All simulation knobs.

    Values the source experiments fix (population size, horizon, repetitions,
    BRC, honesty range, expiration windows, trust deltas) default to those
    settings; the remaining economic and selection parameters are calibration
    knobs and every one of them can be overridden from a config file or the
    command line.
    """

    n_agents: int = 20
    n_steps: int = 100
    n_runs: int = 20
    seed: int = 42

    bad_reputation_coeff: float = 0.15
    honesty_min: float = 0.0
    honesty_max: float = 0.35

    response_deadline: int = 3
    confirm_deadline: int = 3

    obligatory_stay: int = 5          # T_c, minimum tenure before a free exit
    leave_penalty: float = 50.0       # P_c, paid on exit before T_c
    enroll_fee: float = 10.0          # paid by each solicited joiner
    initiator_reward_share: float = 0.5   # fraction of each fee paid to the initiator
    comm_cost: float = 1.0            # charged to the initiator per proposal sent
    step_coeff: float = 0.5           # one-step discount on switching costs

    trust_reward: float = 0.01        # added when a co-member stays
    trust_punishment: float = 0.05    # subtracted when a co-member leaves

    alpha: float = 2.0                # risk-seeking utility exponent
    beta: float = 0.5                 # risk-averse formation-probability exponent

    max_proposals_per_step: int = 1
    max_confirms_per_step: int = 2
    candidate_random_count: int = 10
    candidate_sent_count: int = 5
    candidate_recv_count: int = 5
    random_coalition_size_max: int = 5

    risk_mix: str = "mixed"           # seeking | averse | neutral | mixed
    responder_mix: str = "uniform"    # uniform | early | lazy | random
    gained_utility_mode: str = "ledger"   # ledger | accrual

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in fields(self))


def validate_config(config: SimConfig) -> list[str]:
    """Return human-readable descriptions of every violated invariant.

    An empty list means the configuration is runnable; the engine refuses to
    start on a non-empty result.
    """
    bad: list[str] = []
    c = config

    if c.n_agents < 2:
        bad.append(f"n_agents must be >= 2, got {c.n_agents}")
    if c.n_steps < 0:
        bad.append(f"n_steps must be >= 0, got {c.n_steps}")
    if c.n_runs < 1:
        bad.append(f"n_runs must be >= 1, got {c.n_runs}")
    if c.seed < 0 or c.seed >= 2**64:
        bad.append(f"seed must fit in 64 unsigned bits, got {c.seed}")

    if not 0.0 <= c.bad_reputation_coeff < 1.0:
        bad.append(f"bad_reputation_coeff must be in [0, 1), got {c.bad_reputation_coeff}")
    if not 0.0 <= c.honesty_min <= c.honesty_max:
        bad.append(
            f"honesty range must satisfy 0 <= min <= max, got [{c.honesty_min}, {c.honesty_max}]"
        )

    if c.response_deadline < 1:
        bad.append(f"response_deadline must be >= 1, got {c.response_deadline}")
    if c.confirm_deadline < 1:
        bad.append(f"confirm_deadline must be >= 1, got {c.confirm_deadline}")

    if c.obligatory_stay < 0:
        bad.append(f"obligatory_stay must be >= 0, got {c.obligatory_stay}")
    if c.leave_penalty < 0:
        bad.append(f"leave_penalty must be >= 0, got {c.leave_penalty}")
    if c.enroll_fee < 0:
        bad.append(f"enroll_fee must be >= 0, got {c.enroll_fee}")
    if not 0.0 <= c.initiator_reward_share <= 1.0:
        bad.append(f"initiator_reward_share must be in [0, 1], got {c.initiator_reward_share}")
    if c.comm_cost < 0:
        bad.append(f"comm_cost must be >= 0, got {c.comm_cost}")
    if not 0.0 < c.step_coeff < 1.0:
        bad.append(f"step_coeff must be in (0, 1), got {c.step_coeff}")

    if c.trust_reward <= 0:
        bad.append(f"trust_reward must be > 0, got {c.trust_reward}")
    if c.trust_punishment <= c.trust_reward:
        bad.append(
            "trust_punishment must exceed trust_reward, got "
            f"pu={c.trust_punishment} r={c.trust_reward}"
        )

    if c.alpha <= 1.0:
        bad.append(f"alpha must be > 1, got {c.alpha}")
    if not 0.0 < c.beta < 1.0:
        bad.append(f"beta must be in (0, 1), got {c.beta}")

    if c.max_proposals_per_step < 0:
        bad.append(f"max_proposals_per_step must be >= 0, got {c.max_proposals_per_step}")
    if c.max_confirms_per_step < 0:
        bad.append(f"max_confirms_per_step must be >= 0, got {c.max_confirms_per_step}")
    if c.candidate_random_count < 0:
        bad.append(f"candidate_random_count must be >= 0, got {c.candidate_random_count}")
    if c.candidate_sent_count < 0:
        bad.append(f"candidate_sent_count must be >= 0, got {c.candidate_sent_count}")
    if c.candidate_recv_count < 0:
        bad.append(f"candidate_recv_count must be >= 0, got {c.candidate_recv_count}")
    if not 2 <= c.random_coalition_size_max <= c.n_agents:
        bad.append(
            "random_coalition_size_max must be in [2, n_agents], got "
            f"{c.random_coalition_size_max} with n_agents={c.n_agents}"
        )

    if c.risk_mix not in RISK_MIXES:
        bad.append(f"risk_mix must be one of {RISK_MIXES}, got {c.risk_mix!r}")
    if c.responder_mix not in RESPONDER_MIXES:
        bad.append(f"responder_mix must be one of {RESPONDER_MIXES}, got {c.responder_mix!r}")
    if c.gained_utility_mode not in GAINED_UTILITY_MODES:
        bad.append(
            f"gained_utility_mode must be one of {GAINED_UTILITY_MODES}, got {c.gained_utility_mode!r}"
        )

    return bad


def risk_attitude_for(agent: AgentId, risk_mix: str) -> RiskAttitude:
    """Deterministic attitude assignment for a given population mix.

    The mixed population cycles Seeking, Averse, Neutral by agent id, so a
    population whose size is not divisible by three carries its remainder in
    that cycle order (20 agents: 7 Seeking, 7 Averse, 6 Neutral).
    """
    if risk_mix == "seeking":
        return RiskAttitude.SEEKING
    if risk_mix == "averse":
        return RiskAttitude.AVERSE
    if risk_mix == "neutral":
        return RiskAttitude.NEUTRAL
    if risk_mix == "mixed":
        return (RiskAttitude.SEEKING, RiskAttitude.AVERSE, RiskAttitude.NEUTRAL)[agent % 3]
    raise ValueError(f"unknown risk_mix {risk_mix!r}")
