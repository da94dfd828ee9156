"""Two-phase proposal lifecycle: agreement, then commitment.

A proposal is a four-state machine: Agreement -> {Commitment, Cancelled} and
Commitment -> {Formed, Cancelled}, with Formed and Cancelled terminal. Late
and duplicate responses never raise; they are reported back so the caller can
audit them. Deadline windows include the creation step, so a window of k
steps covers steps ``created_at .. created_at + k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .domain import AgentId, CoalitionSet, SimConfig


class ProposalPhase(Enum):
    AGREEMENT = "agreement"
    COMMITMENT = "commitment"
    FORMED = "formed"
    CANCELLED = "cancelled"


class RecordOutcome(Enum):
    """What a response delivery did to the proposal."""

    RECORDED = "recorded"
    ENTERED_COMMITMENT = "entered_commitment"
    ELIGIBLE = "eligible"            # all commitments in; formation is the engine's call
    CANCELLED = "cancelled"
    IGNORED_LATE = "ignored_late"
    IGNORED_DUPLICATE = "ignored_duplicate"
    IGNORED_TERMINAL = "ignored_terminal"


@dataclass
class Proposal:
    """A candidate coalition moving through the two-phase protocol.

    Response maps are keyed by the solicited members (everyone but the
    initiator); ``None`` means pending, booleans mean yes/confirmed or
    no/declined.
    """

    id: int
    initiator: AgentId
    coalition: CoalitionSet
    created_at: int
    phase: ProposalPhase = ProposalPhase.AGREEMENT
    agreement: dict[AgentId, bool | None] = field(default_factory=dict)
    commitment: dict[AgentId, bool | None] = field(default_factory=dict)
    commitment_entered_at: int | None = None

    @property
    def solicited(self) -> tuple[AgentId, ...]:
        return self.coalition.others(self.initiator)

    @property
    def is_terminal(self) -> bool:
        return self.phase in (ProposalPhase.FORMED, ProposalPhase.CANCELLED)

    def all_confirmed(self) -> bool:
        return all(v is True for v in self.commitment.values())


def open_proposal(
    proposal_id: int,
    initiator: AgentId,
    coalition: CoalitionSet,
    step: int,
) -> Proposal:
    """Create a proposal in the agreement phase with every response pending."""
    if initiator not in coalition:
        raise ValueError(f"initiator {initiator} not in coalition {coalition.members}")
    if len(coalition) < 2:
        raise ValueError("a proposal must solicit at least one other agent")
    solicited = coalition.others(initiator)
    return Proposal(
        id=proposal_id,
        initiator=initiator,
        coalition=coalition,
        created_at=step,
        agreement={a: None for a in solicited},
        commitment={a: None for a in solicited},
    )


def record_agreement(
    proposal: Proposal,
    responder: AgentId,
    answer: bool,
    step: int,
    deadline: int,
) -> RecordOutcome:
    """Record a yes/no answer; all-yes enters commitment, any no cancels."""
    if proposal.phase is not ProposalPhase.AGREEMENT:
        return RecordOutcome.IGNORED_TERMINAL
    if responder not in proposal.agreement:
        raise ValueError(f"agent {responder} was not solicited for proposal {proposal.id}")
    if proposal.agreement[responder] is not None:
        return RecordOutcome.IGNORED_DUPLICATE
    if step > proposal.created_at + deadline - 1:
        return RecordOutcome.IGNORED_LATE

    proposal.agreement[responder] = answer
    if not answer:
        proposal.phase = ProposalPhase.CANCELLED
        return RecordOutcome.CANCELLED
    if all(v is True for v in proposal.agreement.values()):
        proposal.phase = ProposalPhase.COMMITMENT
        proposal.commitment_entered_at = step
        return RecordOutcome.ENTERED_COMMITMENT
    return RecordOutcome.RECORDED


def record_commitment(
    proposal: Proposal,
    responder: AgentId,
    confirmed: bool,
    step: int,
    deadline: int,
) -> RecordOutcome:
    """Record a confirmation; all-confirmed makes the proposal formation-eligible."""
    if proposal.phase is not ProposalPhase.COMMITMENT:
        return RecordOutcome.IGNORED_TERMINAL
    if responder not in proposal.commitment:
        raise ValueError(f"agent {responder} was not solicited for proposal {proposal.id}")
    if proposal.commitment[responder] is not None:
        return RecordOutcome.IGNORED_DUPLICATE
    assert proposal.commitment_entered_at is not None
    if step > proposal.commitment_entered_at + deadline - 1:
        return RecordOutcome.IGNORED_LATE

    proposal.commitment[responder] = confirmed
    if not confirmed:
        proposal.phase = ProposalPhase.CANCELLED
        return RecordOutcome.CANCELLED
    if proposal.all_confirmed():
        return RecordOutcome.ELIGIBLE
    return RecordOutcome.RECORDED


def expire_proposals(
    proposals: list[Proposal],
    current_step: int,
    config: SimConfig,
) -> list[tuple[Proposal, ProposalPhase]]:
    """Cancel proposals whose phase window has closed with answers still pending.

    Returns each cancelled proposal together with the phase it expired from.
    """
    expired: list[tuple[Proposal, ProposalPhase]] = []
    for proposal in proposals:
        if proposal.phase is ProposalPhase.AGREEMENT:
            too_old = current_step - proposal.created_at >= config.response_deadline
            if too_old and any(v is None for v in proposal.agreement.values()):
                proposal.phase = ProposalPhase.CANCELLED
                expired.append((proposal, ProposalPhase.AGREEMENT))
        elif proposal.phase is ProposalPhase.COMMITMENT:
            assert proposal.commitment_entered_at is not None
            too_old = current_step - proposal.commitment_entered_at >= config.confirm_deadline
            if too_old and any(v is None for v in proposal.commitment.values()):
                proposal.phase = ProposalPhase.CANCELLED
                expired.append((proposal, ProposalPhase.COMMITMENT))
    return expired
