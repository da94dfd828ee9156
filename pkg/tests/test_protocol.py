import random

import pytest

from hedonica.domain import CoalitionSet, SimConfig
from hedonica.protocol import (
    ProposalPhase,
    RecordOutcome,
    expire_proposals,
    open_proposal,
    record_agreement,
    record_commitment,
)


def fresh(members=(0, 1, 2), initiator=0, step=5, pid=0):
    return open_proposal(pid, initiator, CoalitionSet.of(members), step)


class TestOpenProposal:
    def test_construction(self):
        p = fresh()
        assert p.phase is ProposalPhase.AGREEMENT
        assert set(p.agreement) == {1, 2}
        assert all(v is None for v in p.agreement.values())
        assert set(p.commitment) == {1, 2}

    def test_initiator_alone_rejected(self):
        with pytest.raises(ValueError):
            fresh(members=(0,))

    def test_initiator_must_belong(self):
        with pytest.raises(ValueError):
            fresh(members=(1, 2), initiator=0)


class TestRecordAgreement:
    def test_all_yes_enters_commitment(self):
        p = fresh()
        assert record_agreement(p, 1, True, 5, 3) is RecordOutcome.RECORDED
        assert record_agreement(p, 2, True, 6, 3) is RecordOutcome.ENTERED_COMMITMENT
        assert p.phase is ProposalPhase.COMMITMENT
        assert p.commitment_entered_at == 6

    def test_any_no_cancels(self):
        p = fresh()
        assert record_agreement(p, 1, False, 5, 3) is RecordOutcome.CANCELLED
        assert p.phase is ProposalPhase.CANCELLED

    def test_late_response_ignored(self):
        p = fresh(step=5)
        assert record_agreement(p, 1, True, 8, 3) is RecordOutcome.IGNORED_LATE
        assert p.agreement[1] is None

    def test_window_last_step_counts(self):
        p = fresh(step=5)
        assert record_agreement(p, 1, True, 7, 3) is RecordOutcome.RECORDED

    def test_duplicate_ignored(self):
        p = fresh()
        record_agreement(p, 1, True, 5, 3)
        assert record_agreement(p, 1, False, 5, 3) is RecordOutcome.IGNORED_DUPLICATE
        assert p.agreement[1] is True

    def test_terminal_ignored(self):
        p = fresh()
        record_agreement(p, 1, False, 5, 3)
        assert record_agreement(p, 2, True, 5, 3) is RecordOutcome.IGNORED_TERMINAL

    def test_unsolicited_agent_is_an_error(self):
        p = fresh()
        with pytest.raises(ValueError):
            record_agreement(p, 9, True, 5, 3)


class TestRecordCommitment:
    def make_committed(self):
        p = fresh()
        record_agreement(p, 1, True, 5, 3)
        record_agreement(p, 2, True, 5, 3)
        return p

    def test_all_confirmed_is_eligible(self):
        p = self.make_committed()
        assert record_commitment(p, 1, True, 6, 3) is RecordOutcome.RECORDED
        assert record_commitment(p, 2, True, 6, 3) is RecordOutcome.ELIGIBLE
        assert p.phase is ProposalPhase.COMMITMENT  # formation is the engine's call

    def test_decline_cancels(self):
        p = self.make_committed()
        assert record_commitment(p, 1, False, 6, 3) is RecordOutcome.CANCELLED
        assert p.phase is ProposalPhase.CANCELLED

    def test_confirm_after_cancel_ignored(self):
        p = self.make_committed()
        record_commitment(p, 1, False, 6, 3)
        assert record_commitment(p, 2, True, 6, 3) is RecordOutcome.IGNORED_TERMINAL

    def test_commitment_window_from_entry_step(self):
        p = self.make_committed()  # entered at step 5
        assert record_commitment(p, 1, True, 8, 3) is RecordOutcome.IGNORED_LATE

    def test_wrong_phase_ignored(self):
        p = fresh()
        assert record_commitment(p, 1, True, 5, 3) is RecordOutcome.IGNORED_TERMINAL


class TestExpireProposals:
    def test_agreement_window_is_three_steps(self):
        config = SimConfig(response_deadline=3, confirm_deadline=3)
        p = fresh(step=5)
        assert expire_proposals([p], 7, config) == []
        expired = expire_proposals([p], 8, config)
        assert expired == [(p, ProposalPhase.AGREEMENT)]
        assert p.phase is ProposalPhase.CANCELLED

    def test_fully_answered_never_expires(self):
        config = SimConfig()
        p = fresh(step=5)
        record_agreement(p, 1, True, 5, 3)
        record_agreement(p, 2, True, 5, 3)
        record_commitment(p, 1, True, 5, 3)
        record_commitment(p, 2, True, 5, 3)
        assert expire_proposals([p], 50, config) == []

    def test_commitment_window_arithmetic(self):
        config = SimConfig()
        p = fresh(step=5)
        record_agreement(p, 1, True, 6, 3)
        record_agreement(p, 2, True, 6, 3)  # commitment entered at 6
        record_commitment(p, 1, True, 7, 3)
        assert expire_proposals([p], 8, config) == []
        expired = expire_proposals([p], 9, config)
        assert expired == [(p, ProposalPhase.COMMITMENT)]

    def test_terminal_proposals_untouched(self):
        config = SimConfig()
        p = fresh(step=1)
        record_agreement(p, 1, False, 1, 3)
        assert expire_proposals([p], 99, config) == []


def test_phase_graph_under_random_events():
    """Fuzz the state machine; only legal transitions may ever occur."""
    legal = {
        (ProposalPhase.AGREEMENT, ProposalPhase.COMMITMENT),
        (ProposalPhase.AGREEMENT, ProposalPhase.CANCELLED),
        (ProposalPhase.COMMITMENT, ProposalPhase.CANCELLED),
    }
    rng = random.Random(31)
    config = SimConfig()
    for trial in range(300):
        p = fresh(members=(0, 1, 2, 3), step=0, pid=trial)
        for step in range(0, 9):
            before = p.phase
            action = rng.random()
            responder = rng.choice([1, 2, 3])
            if action < 0.4:
                record_agreement(p, responder, rng.random() < 0.8, step, config.response_deadline)
            elif action < 0.8:
                record_commitment(p, responder, rng.random() < 0.8, step, config.confirm_deadline)
            else:
                expire_proposals([p], step, config)
            after = p.phase
            if before is not after:
                assert (before, after) in legal
            if before in (ProposalPhase.FORMED, ProposalPhase.CANCELLED):
                assert after is before  # terminal states never move
