"""Deterministic per-step scheduler, money ledger, and run driver.

Each step executes a fixed phase order:

1. expire proposals whose response or confirmation window closed,
2. deliver scheduled agreement responses due this step,
3. let agents confirm commitment-phase proposals (budgeted per step),
4. arbitrate which fully confirmed proposals form (seeded random order,
   first-come binding of members),
5. settle formations: departures, penalties, enrollment fees, trust events,
6. accrue each agent's per-step coalition utility,
7. let every agent select and open new proposals,
8. snapshot metrics.

Agents are always iterated in ascending id and every random draw comes from
the single per-run seeded generator, so a (config, seed) pair fixes the whole
trajectory bit for bit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .domain import (
    SYSTEM_AGENT,
    AgentId,
    AgentProfile,
    Coalition,
    CoalitionSet,
    ResponderType,
    SimConfig,
    risk_attitude_for,
    validate_config,
)
from .metrics import StepFrame, build_step_frame
from .protocol import (
    Proposal,
    ProposalPhase,
    RecordOutcome,
    expire_proposals,
    open_proposal,
    record_agreement,
    record_commitment,
)
from .strategy import (
    Direction,
    ProposalHistory,
    ProposalRecord,
    generate_candidates,
    response_step,
    select_proposals,
    should_accept,
    should_switch,
)
from .tracefmt import TraceEvent
from .trust import TrustEvent, TrustEventKind, TrustMatrix, apply_trust_event, init_trust
from .utility import coalition_utility, expected_utility_current, expected_utility_proposed


class ConfigError(ValueError):
    """Raised before any state is built when the configuration is invalid."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class SimulationInvariantError(RuntimeError):
    """A structural invariant broke mid-run; this is a bug trap, not user error."""


class LedgerKind(Enum):
    UTILITY_ACCRUAL = "accrue"
    COMM_COST = "comm_cost"
    ENROLL_FEE = "enroll_fee"
    INITIATOR_REWARD = "initiator_reward"
    FEE_SINK = "fee_sink"
    LEAVE_PENALTY = "leave_penalty"
    PENALTY_SHARE = "penalty_share"


@dataclass(frozen=True)
class LedgerEntry:
    step: int
    kind: LedgerKind
    agent: AgentId
    amount: float


class PendingResponse(NamedTuple):
    response_step: int
    proposal_id: int
    responder: AgentId
    answer: bool


@dataclass
class CoalitionLifetime:
    coalition_id: int
    formed_at: int
    initiator: AgentId
    size_at_formation: int
    dissolved_at: int | None = None


# SWAR popcount over uint64 arrays, used by the vectorized history scorer.
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_S1, _S2, _S4, _S56 = np.uint64(1), np.uint64(2), np.uint64(4), np.uint64(56)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x - ((x >> _S1) & _M1)
    x = (x & _M2) + ((x >> _S2) & _M2)
    x = (x + (x >> _S4)) & _M4
    return (x * _H01) >> _S56


class _DeltaScorer:
    """Vectorized formation-probability evaluation over one agent's history.

    Computes exactly what chaining ``interest_degree`` and
    ``formation_probability`` computes (same integer popcounts, same float
    divisions), just for all candidates at once. Only usable while coalition
    masks fit in 64 bits.
    """

    def __init__(self, history: ProposalHistory, n_agents: int):
        self.history = history
        self.n_agents = n_agents
        self._version = -1
        self._masks: np.ndarray | None = None
        self._starts: np.ndarray | None = None
        # One flat column table per Direction value: counterpart id -> segment
        # column in the reduceat output, or -1 when no records exist.
        self._cols: tuple[list[int], ...] = ([], [], [])

    def _rebuild(self) -> None:
        masks: list[int] = []
        starts: list[int] = []
        cols = tuple([-1] * self.n_agents for _ in range(3))
        for code, table in enumerate(self.history.mask_lists_by_direction()):
            for counterpart, mask_list in table.items():
                cols[code][counterpart] = len(starts)
                starts.append(len(masks))
                masks.extend(mask_list)
        if masks:
            self._masks = np.fromiter(masks, dtype=np.uint64, count=len(masks))
            self._starts = np.array(starts, dtype=np.intp)
        else:
            self._masks = None
            self._starts = None
        self._cols = cols
        self._version = self.history.version

    def p_formations(self, candidates: list[CoalitionSet], initiator: AgentId) -> list[float]:
        if self.history.version != self._version:
            self._rebuild()
        if self._masks is None:
            # No records: every category defaults to distance 1, delta 0.
            return [0.5] * len(candidates)
        n = self.n_agents
        cand = np.fromiter((c.mask for c in candidates), dtype=np.uint64, count=len(candidates))
        pops = _popcount(cand[:, None] ^ self._masks[None, :])
        mins = np.minimum.reduceat(pops, self._starts, axis=1).tolist()
        rcv_col, acc_col, ref_col = self._cols
        out: list[float] = []
        for idx, candidate in enumerate(candidates):
            row = mins[idx]
            worst = -2.0
            for member in candidate.members:
                if member == initiator:
                    continue
                c_rcv = rcv_col[member]
                c_acc = acc_col[member]
                c_ref = ref_col[member]
                d_rcv = row[c_rcv] / n if c_rcv >= 0 else 1.0
                d_acc = row[c_acc] / n if c_acc >= 0 else 1.0
                d_ref = row[c_ref] / n if c_ref >= 0 else 1.0
                delta = (d_rcv if d_rcv < d_acc else d_acc) - d_ref
                if delta > worst:
                    worst = delta
            out.append((1.0 - worst) / 2.0)
        return out


@dataclass
class AgentState:
    profile: AgentProfile
    history: ProposalHistory
    utility_cache: dict[int, float] = field(default_factory=dict)
    scorer: _DeltaScorer | None = None


@dataclass
class WorldState:
    """Everything one run owns; never shared across runs."""

    config: SimConfig
    seed: int
    rng: random.Random
    agents: list[AgentState]
    trust: TrustMatrix
    step: int = 0
    coalitions: dict[int, Coalition] = field(default_factory=dict)
    membership: list[int | None] = field(default_factory=list)
    proposals: dict[int, Proposal] = field(default_factory=dict)
    live_proposals: dict[int, Proposal] = field(default_factory=dict)
    pending_responses: list[PendingResponse] = field(default_factory=list)
    ledger: list[LedgerEntry] = field(default_factory=list)
    trace: list[TraceEvent] = field(default_factory=list)
    lifetimes: dict[int, CoalitionLifetime] = field(default_factory=dict)
    frames: list[StepFrame] = field(default_factory=list)
    next_proposal_id: int = 0
    next_coalition_id: int = 0


@dataclass
class RunResult:
    """Complete audit output of one run."""

    config: SimConfig
    seed: int
    frames: list[StepFrame]
    ledger: list[LedgerEntry]
    lifetimes: list[CoalitionLifetime]
    final_trust: TrustMatrix
    honesty: list[float]
    attitudes: list[str]
    responders: list[str]
    final_balances: list[float]
    final_accruals: list[float]
    trace: list[TraceEvent]


def new_world(config: SimConfig, seed: int) -> WorldState:
    """Build initial state: drawn profiles, fresh trust, everyone alone."""
    rng = random.Random(seed)
    n = config.n_agents
    agents: list[AgentState] = []
    for agent_id in range(n):
        honesty = rng.uniform(config.honesty_min, config.honesty_max)
        table = tuple(
            tuple(rng.uniform(-100.0, 100.0) for _ in range(n)) for _ in range(n)
        )
        if config.responder_mix == "uniform":
            responder = rng.choice((ResponderType.EARLY, ResponderType.LAZY, ResponderType.RANDOM))
        else:
            responder = ResponderType(config.responder_mix)
        profile = AgentProfile(
            honesty=honesty,
            risk_attitude=risk_attitude_for(agent_id, config.risk_mix),
            responder_type=responder,
            interaction_table=table,
        )
        history = ProposalHistory(agent_id)
        scorer = _DeltaScorer(history, n) if n <= 64 else None
        agents.append(AgentState(profile=profile, history=history, scorer=scorer))
    return WorldState(
        config=config,
        seed=seed,
        rng=rng,
        agents=agents,
        trust=init_trust(n),
        membership=[None] * n,
    )


def _utility(state: WorldState, agent_id: AgentId, coalition: CoalitionSet) -> float:
    """coalition_utility with a per-agent memo; tables are fixed for the run."""
    cache = state.agents[agent_id].utility_cache
    value = cache.get(coalition.mask)
    if value is None:
        value = coalition_utility(agent_id, coalition, state.agents[agent_id].profile)
        cache[coalition.mask] = value
    return value


def _post(state: WorldState, kind: LedgerKind, agent: AgentId, amount: float, obj: str) -> None:
    state.ledger.append(LedgerEntry(state.step, kind, agent, amount))
    state.trace.append(TraceEvent(state.step, kind.value, agent, obj, amount))


def _trust(state: WorldState, observer: AgentId, subject: AgentId, kind: TrustEventKind) -> None:
    apply_trust_event(state.trust, TrustEvent(observer, subject, kind, state.step), state.config)
    trace_kind = "trust_stay" if kind is TrustEventKind.STAYED else "trust_leave"
    state.trace.append(TraceEvent(state.step, trace_kind, observer, str(subject), None))


def _retire(state: WorldState, proposal: Proposal) -> None:
    state.live_proposals.pop(proposal.id, None)


def _deliver_agreement(
    state: WorldState,
    config: SimConfig,
    proposal: Proposal,
    responder: AgentId,
    answer: bool,
    nominal_step: int,
) -> None:
    """Feed one yes/no answer to a proposal and annotate the sender's history."""
    outcome = record_agreement(proposal, responder, answer, nominal_step, config.response_deadline)
    if outcome in (
        RecordOutcome.IGNORED_LATE,
        RecordOutcome.IGNORED_DUPLICATE,
        RecordOutcome.IGNORED_TERMINAL,
    ):
        state.trace.append(
            TraceEvent(state.step, "agree_ignored", responder, f"p{proposal.id}:{outcome.value}", None)
        )
        if outcome is RecordOutcome.IGNORED_DUPLICATE:
            return
    else:
        kind = "agree_yes" if answer else "agree_no"
        state.trace.append(TraceEvent(state.step, kind, responder, f"p{proposal.id}", None))
        if outcome is RecordOutcome.ENTERED_COMMITMENT:
            state.trace.append(
                TraceEvent(state.step, "to_commit", proposal.initiator, f"p{proposal.id}", None)
            )
    if proposal.is_terminal:
        _retire(state, proposal)
    # The answer is genuine willingness data for the sender even if the
    # proposal has already died; only duplicates are dropped above.
    direction = Direction.SENT_ACCEPTED if answer else Direction.SENT_REFUSED
    state.agents[proposal.initiator].history.add(
        ProposalRecord(proposal.coalition, responder, direction, state.step)
    )


def _phase_expire(state: WorldState, config: SimConfig) -> None:
    live = list(state.live_proposals.values())
    for proposal, from_phase in expire_proposals(live, state.step, config):
        _retire(state, proposal)
        if from_phase is ProposalPhase.AGREEMENT:
            state.trace.append(
                TraceEvent(state.step, "expire_agreement", proposal.initiator, f"p{proposal.id}", None)
            )
            # Non-response within the window counts as rejection.
            for responder, response in proposal.agreement.items():
                if response is None:
                    state.agents[proposal.initiator].history.add(
                        ProposalRecord(proposal.coalition, responder, Direction.SENT_REFUSED, state.step)
                    )
            state.pending_responses = [
                r for r in state.pending_responses if r.proposal_id != proposal.id
            ]
        else:
            state.trace.append(
                TraceEvent(state.step, "expire_commitment", proposal.initiator, f"p{proposal.id}", None)
            )


def _phase_deliver_responses(state: WorldState, config: SimConfig) -> None:
    due = sorted(
        (r for r in state.pending_responses if r.response_step == state.step),
        key=lambda r: (r.proposal_id, r.responder),
    )
    if not due:
        return
    state.pending_responses = [r for r in state.pending_responses if r.response_step != state.step]
    for pending in due:
        proposal = state.proposals[pending.proposal_id]
        _deliver_agreement(state, config, proposal, pending.responder, pending.answer, pending.response_step)


def _phase_confirm(state: WorldState, config: SimConfig) -> None:
    if config.max_confirms_per_step == 0:
        return
    for agent_id in range(config.n_agents):
        inbox = [
            p
            for p in state.live_proposals.values()
            if p.phase is ProposalPhase.COMMITMENT
            and agent_id in p.commitment
            and p.commitment[agent_id] is None
        ]
        if not inbox:
            continue
        profile = state.agents[agent_id].profile
        coalition_id = state.membership[agent_id]
        if coalition_id is None:
            eu_current = 0.0
            would_pay = False
        else:
            coalition = state.coalitions[coalition_id]
            utility = _utility(state, agent_id, coalition.members)
            eu_current = expected_utility_current(agent_id, coalition.members, utility, state.trust)
            would_pay = (state.step - coalition.formed_at) < config.obligatory_stay
        confirms = 0
        for proposal in inbox:
            if confirms >= config.max_confirms_per_step:
                break
            eu_proposed = expected_utility_proposed(
                agent_id,
                _utility(state, agent_id, proposal.coalition),
                would_pay,
                config,
                pays_enroll_fee=True,
            )
            if should_switch(agent_id, eu_current, eu_proposed, profile.honesty, config.bad_reputation_coeff):
                record_commitment(proposal, agent_id, True, state.step, config.confirm_deadline)
                state.trace.append(TraceEvent(state.step, "confirm", agent_id, f"p{proposal.id}", None))
                confirms += 1


def arbitrate_formations(
    eligible: list[Proposal],
    rng: random.Random,
) -> tuple[list[Proposal], list[Proposal]]:
    """Split fully confirmed proposals into (forming, blocked).

    Proposals are visited in seeded random order; one forms only if no member
    is already claimed by a proposal that formed earlier this step.
    """
    order = list(eligible)
    rng.shuffle(order)
    bound_mask = 0
    forming: list[Proposal] = []
    blocked: list[Proposal] = []
    for proposal in order:
        if proposal.coalition.mask & bound_mask:
            blocked.append(proposal)
        else:
            bound_mask |= proposal.coalition.mask
            forming.append(proposal)
    return forming, blocked


def apply_departure(
    agent: AgentId,
    old_coalition: Coalition,
    state: WorldState,
    config: SimConfig,
) -> None:
    """Remove ``agent`` from its coalition, settling penalties and trust.

    Leaving before the obligatory staying time costs the penalty, split
    equally among the members left behind. Those members record a betrayal;
    the leaver records them as having stayed. The coalition dissolves when it
    drops below two members or loses its initiator.
    """
    if agent not in old_coalition.members:
        raise ValueError(f"agent {agent} is not in coalition {old_coalition.id}")
    remaining = old_coalition.members.others(agent)
    age = state.step - old_coalition.formed_at
    state.trace.append(TraceEvent(state.step, "leave", agent, f"c{old_coalition.id}", None))

    if age < config.obligatory_stay:
        _post(state, LedgerKind.LEAVE_PENALTY, agent, -config.leave_penalty, f"c{old_coalition.id}")
        share = config.leave_penalty / len(remaining)
        for member in remaining:
            _post(state, LedgerKind.PENALTY_SHARE, member, share, f"c{old_coalition.id}")

    for member in remaining:
        _trust(state, member, agent, TrustEventKind.LEFT)
    for member in remaining:
        _trust(state, agent, member, TrustEventKind.STAYED)

    state.membership[agent] = None
    if len(remaining) < 2 or agent == old_coalition.initiator:
        for member in remaining:
            state.membership[member] = None
        del state.coalitions[old_coalition.id]
        state.lifetimes[old_coalition.id].dissolved_at = state.step
        state.trace.append(TraceEvent(state.step, "dissolve", SYSTEM_AGENT, f"c{old_coalition.id}", None))
    else:
        state.coalitions[old_coalition.id] = replace(
            old_coalition, members=CoalitionSet.of(remaining)
        )


def _phase_settle(state: WorldState, config: SimConfig, forming: list[Proposal]) -> int:
    formed_count = 0
    for proposal in forming:
        for member in proposal.coalition.members:
            coalition_id = state.membership[member]
            if coalition_id is not None:
                apply_departure(member, state.coalitions[coalition_id], state, config)
        coalition = Coalition(
            id=state.next_coalition_id,
            members=proposal.coalition,
            initiator=proposal.initiator,
            formed_at=state.step,
        )
        state.next_coalition_id += 1
        state.coalitions[coalition.id] = coalition
        for member in coalition.members:
            state.membership[member] = coalition.id
        state.lifetimes[coalition.id] = CoalitionLifetime(
            coalition_id=coalition.id,
            formed_at=state.step,
            initiator=coalition.initiator,
            size_at_formation=len(coalition.members),
        )
        proposal.phase = ProposalPhase.FORMED
        _retire(state, proposal)
        members_field = "+".join(str(m) for m in coalition.members)
        state.trace.append(
            TraceEvent(
                state.step,
                "form",
                proposal.initiator,
                f"c{coalition.id}:p{proposal.id}:{members_field}",
                None,
            )
        )
        formed_count += 1
        for joiner in proposal.coalition.others(proposal.initiator):
            _post(state, LedgerKind.ENROLL_FEE, joiner, -config.enroll_fee, f"c{coalition.id}")
            _post(
                state,
                LedgerKind.INITIATOR_REWARD,
                proposal.initiator,
                config.enroll_fee * config.initiator_reward_share,
                f"c{coalition.id}",
            )
            _post(
                state,
                LedgerKind.FEE_SINK,
                SYSTEM_AGENT,
                config.enroll_fee * (1.0 - config.initiator_reward_share),
                f"c{coalition.id}",
            )

    # Members still together in a pre-existing coalition observed each other stay.
    for coalition_id in sorted(state.coalitions):
        coalition = state.coalitions[coalition_id]
        if coalition.formed_at == state.step:
            continue
        members = coalition.members.members
        for observer in members:
            for subject in members:
                if observer != subject:
                    _trust(state, observer, subject, TrustEventKind.STAYED)
    return formed_count


def _phase_accrue(state: WorldState, config: SimConfig) -> None:
    for agent_id in range(config.n_agents):
        coalition_id = state.membership[agent_id]
        if coalition_id is None:
            _post(state, LedgerKind.UTILITY_ACCRUAL, agent_id, 0.0, "-")
        else:
            coalition = state.coalitions[coalition_id]
            _post(
                state,
                LedgerKind.UTILITY_ACCRUAL,
                agent_id,
                _utility(state, agent_id, coalition.members),
                f"c{coalition_id}",
            )


def _phase_propose(state: WorldState, config: SimConfig) -> None:
    if config.max_proposals_per_step == 0:
        return
    for agent_id in range(config.n_agents):
        agent = state.agents[agent_id]
        candidates = generate_candidates(agent_id, agent.history, config, state.rng)
        if not candidates:
            continue
        coalition_id = state.membership[agent_id]
        current = state.coalitions[coalition_id].members if coalition_id is not None else None
        if agent.scorer is not None:
            p_values = agent.scorer.p_formations(candidates, agent_id)
            table = {c.mask: p for c, p in zip(candidates, p_values)}
            p_formation_of = lambda c: table[c.mask]
        else:
            p_formation_of = None
        selected = select_proposals(
            agent_id,
            candidates,
            agent.profile,
            agent.history,
            current,
            config,
            utility_of=lambda c: _utility(state, agent_id, c),
            p_formation_of=p_formation_of,
        )
        for coalition in selected:
            proposal_id = state.next_proposal_id
            state.next_proposal_id += 1
            proposal = open_proposal(proposal_id, agent_id, coalition, state.step)
            state.proposals[proposal_id] = proposal
            state.live_proposals[proposal_id] = proposal
            members_field = "+".join(str(m) for m in coalition.members)
            state.trace.append(
                TraceEvent(state.step, "open", agent_id, f"p{proposal_id}:{members_field}", None)
            )
            _post(state, LedgerKind.COMM_COST, agent_id, -config.comm_cost, f"p{proposal_id}")
            for solicited in coalition.others(agent_id):
                state.agents[solicited].history.add(
                    ProposalRecord(coalition, agent_id, Direction.RECEIVED, state.step)
                )
                answer = should_accept(solicited, coalition, state.agents[solicited].profile)
                due = response_step(
                    state.agents[solicited].profile.responder_type,
                    state.step,
                    config.response_deadline,
                    state.rng,
                )
                if due == state.step:
                    _deliver_agreement(state, config, proposal, solicited, answer, due)
                else:
                    state.pending_responses.append(
                        PendingResponse(due, proposal_id, solicited, answer)
                    )


def check_invariants(state: WorldState) -> None:
    """Abort loudly if the partition, trust range, or coalition shape broke."""
    step = state.step
    seen_mask = 0
    for coalition_id, coalition in state.coalitions.items():
        if len(coalition.members) < 2:
            raise SimulationInvariantError(f"step {step}: coalition {coalition_id} has < 2 members")
        if coalition.initiator not in coalition.members:
            raise SimulationInvariantError(
                f"step {step}: initiator {coalition.initiator} missing from coalition {coalition_id}"
            )
        if coalition.members.mask & seen_mask:
            raise SimulationInvariantError(f"step {step}: coalition {coalition_id} overlaps another")
        seen_mask |= coalition.members.mask
        for member in coalition.members:
            if state.membership[member] != coalition_id:
                raise SimulationInvariantError(
                    f"step {step}: membership map disagrees for agent {member}"
                )
    for agent_id, coalition_id in enumerate(state.membership):
        if coalition_id is None:
            if (seen_mask >> agent_id) & 1:
                raise SimulationInvariantError(
                    f"step {step}: agent {agent_id} marked alone but sits in a coalition"
                )
        elif coalition_id not in state.coalitions:
            raise SimulationInvariantError(
                f"step {step}: agent {agent_id} maps to dead coalition {coalition_id}"
            )
    for row in state.trust.values:
        for value in row:
            if not 0.0 <= value <= 1.0:
                raise SimulationInvariantError(f"step {step}: trust value {value!r} out of [0, 1]")


def advance_step(state: WorldState, config: SimConfig) -> WorldState:
    """Run one full step in the fixed phase order; see the module docstring."""
    state.step += 1
    _phase_expire(state, config)
    _phase_deliver_responses(state, config)
    _phase_confirm(state, config)
    eligible = [
        p
        for p in state.live_proposals.values()
        if p.phase is ProposalPhase.COMMITMENT and p.all_confirmed()
    ]
    forming, blocked = arbitrate_formations(eligible, state.rng)
    for proposal in blocked:
        proposal.phase = ProposalPhase.CANCELLED
        _retire(state, proposal)
        state.trace.append(
            TraceEvent(state.step, "conflict_cancel", proposal.initiator, f"p{proposal.id}", None)
        )
    formed_count = _phase_settle(state, config, forming)
    _phase_accrue(state, config)
    _phase_propose(state, config)
    state.frames.append(
        build_step_frame(state.step, state.membership, state.coalitions, formed_count)
    )
    check_invariants(state)
    return state


def run_simulation(config: SimConfig, seed: int | None = None) -> RunResult:
    """Validate, build a fresh world, advance n_steps, and package the audit trail."""
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)
    state = new_world(config, config.seed if seed is None else seed)
    for _ in range(config.n_steps):
        advance_step(state, config)

    n = config.n_agents
    balances = [0.0] * n
    accruals = [0.0] * n
    for entry in state.ledger:
        if entry.agent != SYSTEM_AGENT:
            balances[entry.agent] += entry.amount
            if entry.kind is LedgerKind.UTILITY_ACCRUAL:
                accruals[entry.agent] += entry.amount
    return RunResult(
        config=config,
        seed=state.seed,
        frames=state.frames,
        ledger=state.ledger,
        lifetimes=[state.lifetimes[k] for k in sorted(state.lifetimes)],
        final_trust=state.trust,
        honesty=[a.profile.honesty for a in state.agents],
        attitudes=[a.profile.risk_attitude.value for a in state.agents],
        responders=[a.profile.responder_type.value for a in state.agents],
        final_balances=balances,
        final_accruals=accruals,
        trace=state.trace,
    )
