import math
import random

import pytest

from hedonica.domain import CoalitionSet, ResponderType, RiskAttitude, SimConfig
from hedonica.strategy import (
    Direction,
    ProposalHistory,
    ProposalRecord,
    coalition_distance,
    formation_probability,
    generate_candidates,
    interest_degree,
    preference_score,
    response_step,
    select_proposals,
    should_accept,
    should_switch,
)

from conftest import make_profile


def record(owner_history, members, counterpart, direction, step=1):
    owner_history.add(ProposalRecord(CoalitionSet.of(members), counterpart, direction, step))


class TestShouldAccept:
    def test_positive_utility_accepted(self):
        profile = make_profile(4, entries={(0, 1): 25.0, (1, 0): 25.0})
        assert should_accept(0, CoalitionSet.of([0, 1]), profile)

    def test_worse_than_alone_rejected(self):
        profile = make_profile(4, entries={(0, 1): -1.0})
        assert not should_accept(0, CoalitionSet.of([0, 1]), profile)

    def test_zero_utility_is_accepted(self):
        profile = make_profile(4)
        assert should_accept(0, CoalitionSet.of([0, 1]), profile)

    def test_monotone_in_utility(self, rng):
        for _ in range(50):
            base = rng.uniform(-50.0, 50.0)
            lift = rng.uniform(0.0, 30.0)
            low = make_profile(3, entries={(0, 1): base, (1, 0): base})
            high = make_profile(3, entries={(0, 1): base + lift, (1, 0): base + lift})
            c = CoalitionSet.of([0, 1])
            if should_accept(0, c, low):
                assert should_accept(0, c, high)


class TestResponseStep:
    def test_early_responds_immediately(self, rng):
        assert response_step(ResponderType.EARLY, 7, 3, rng) == 7

    def test_lazy_waits_to_deadline(self, rng):
        assert response_step(ResponderType.LAZY, 7, 3, rng) == 9

    def test_random_is_uniform_over_window(self):
        rng = random.Random(99)
        draws = 10_000
        counts = {7: 0, 8: 0, 9: 0}
        for _ in range(draws):
            counts[response_step(ResponderType.RANDOM, 7, 3, rng)] += 1
        # each outcome within 3 sigma of p = 1/3
        sigma = math.sqrt(draws * (1 / 3) * (2 / 3))
        for step in (7, 8, 9):
            assert abs(counts[step] - draws / 3) < 3 * sigma

    def test_deadline_must_be_positive(self, rng):
        with pytest.raises(ValueError):
            response_step(ResponderType.EARLY, 7, 0, rng)


class TestShouldSwitch:
    def test_worked_example_honesty_point_one(self):
        assert not should_switch(0, 1000.0, 1100.0, 0.1, 0.0)
        assert should_switch(0, 1000.0, 1100.01, 0.1, 0.0)

    def test_worked_example_honesty_point_four(self):
        assert not should_switch(0, 1000.0, 1400.0, 0.4, 0.0)
        assert should_switch(0, 1000.0, 1400.01, 0.4, 0.0)

    def test_brc_raises_the_bar(self):
        # threshold moves from 1100 to 1100 / 0.85
        assert not should_switch(0, 1000.0, 1294.11, 0.1, 0.15)
        assert should_switch(0, 1000.0, 1294.13, 0.1, 0.15)

    def test_exact_tie_keeps_status_quo(self):
        assert not should_switch(0, 100.0, 300.0, 0.5, 0.5)  # 150.0 vs 150.0 exactly

    def test_alone_agent_switches_on_any_gain(self):
        assert should_switch(0, 0.0, 0.01, 0.35, 0.15)
        assert not should_switch(0, 0.0, 0.0, 0.35, 0.15)

    def test_brc_range_enforced(self):
        with pytest.raises(ValueError):
            should_switch(0, 1.0, 2.0, 0.1, 1.0)


class TestCoalitionDistance:
    def test_identity(self):
        c = CoalitionSet.of([1, 2, 3])
        assert coalition_distance(c, c, 20) == 0.0

    def test_hand_computed_overlap(self):
        c1, c2 = CoalitionSet.of([1, 2, 3]), CoalitionSet.of([2, 3, 4])
        assert coalition_distance(c1, c2, 20) == 0.1

    def test_disjoint(self):
        c1, c2 = CoalitionSet.of([0, 1, 2]), CoalitionSet.of([3, 4, 5, 6])
        assert coalition_distance(c1, c2, 20) == 0.35

    def test_members_must_fit_population(self):
        with pytest.raises(ValueError):
            coalition_distance(CoalitionSet.of([25]), CoalitionSet.of([1]), 20)

    def test_metric_axioms_random_sample(self):
        rng = random.Random(7)
        n = 20
        def sample():
            return CoalitionSet.of(rng.sample(range(n), rng.randint(1, 6)))
        for _ in range(500):
            a, b, c = sample(), sample(), sample()
            dab = coalition_distance(a, b, n)
            assert 0.0 <= dab <= 1.0
            assert dab == coalition_distance(b, a, n)
            assert coalition_distance(a, a, n) == 0.0
            assert dab <= coalition_distance(a, c, n) + coalition_distance(c, b, n) + 1e-12


class TestInterestDegree:
    def test_no_history_is_neutral(self):
        history = ProposalHistory(owner=0)
        assert interest_degree(history, 1, CoalitionSet.of([0, 1]), 20) == 0.0

    def test_hand_computed_mixture(self):
        # candidate {0,1,2,3}; distances: received 4/20, accepted 6/20, refused 8/20
        history = ProposalHistory(owner=0)
        record(history, [0, 1, 4, 5], 1, Direction.RECEIVED)
        record(history, [0, 7, 8, 9], 1, Direction.SENT_ACCEPTED)
        record(history, [4, 5, 6, 7], 1, Direction.SENT_REFUSED)
        delta = interest_degree(history, 1, CoalitionSet.of([0, 1, 2, 3]), 20)
        assert delta == pytest.approx(min(0.2, 0.3) - 0.4, abs=1e-12)

    def test_identical_refusal_maximally_uninterested(self):
        history = ProposalHistory(owner=0)
        candidate = CoalitionSet.of([0, 1, 2])
        record(history, [0, 1, 2], 1, Direction.SENT_REFUSED)
        assert interest_degree(history, 1, candidate, 20) == 1.0

    def test_closest_precedent_wins(self):
        history = ProposalHistory(owner=0)
        record(history, [0, 1], 1, Direction.RECEIVED)          # distance 1/20
        record(history, [0, 1, 5, 6, 7], 1, Direction.RECEIVED)  # distance 4/20
        candidate = CoalitionSet.of([0, 1, 2])
        delta = interest_degree(history, 1, candidate, 20)
        assert delta == pytest.approx(min(1 / 20, 1.0) - 1.0, abs=1e-12)

    def test_range_bounds(self, rng):
        history = ProposalHistory(owner=0)
        for _ in range(30):
            members = sorted(set([0] + rng.sample(range(1, 10), rng.randint(1, 4))))
            direction = rng.choice(list(Direction))
            record(history, members, rng.randint(1, 9), direction)
        for _ in range(100):
            members = sorted(set([0, 1] + rng.sample(range(2, 10), rng.randint(0, 4))))
            delta = interest_degree(history, 1, CoalitionSet.of(members), 10)
            assert -1.0 <= delta <= 1.0

    def test_target_must_be_in_candidate(self):
        history = ProposalHistory(owner=0)
        with pytest.raises(ValueError):
            interest_degree(history, 5, CoalitionSet.of([0, 1]), 20)


class TestFormationProbability:
    def test_fresh_history_midpoint(self):
        assert formation_probability([0.0, 0.0]) == 0.5

    def test_most_unwilling_governs(self):
        assert formation_probability([-0.2, -1.0]) == 0.6

    def test_endpoints(self):
        assert formation_probability([1.0]) == 0.0
        assert formation_probability([-1.0]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            formation_probability([])

    def test_always_in_unit_interval(self, rng):
        for _ in range(200):
            deltas = [rng.uniform(-1, 1) for _ in range(rng.randint(1, 6))]
            assert 0.0 <= formation_probability(deltas) <= 1.0


class TestPreferenceScore:
    def test_neutral_is_plain_product(self):
        assert preference_score(100.0, 0.5, RiskAttitude.NEUTRAL, 2.0, 0.5) == 50.0

    def test_seeking_amplifies_utility(self):
        assert preference_score(100.0, 0.5, RiskAttitude.SEEKING, 2.0, 0.5) == 5000.0

    def test_averse_amplifies_probability(self):
        assert preference_score(100.0, 0.25, RiskAttitude.AVERSE, 2.0, 0.5) == 50.0

    def test_zero_probability_scores_zero_for_averse(self):
        assert preference_score(100.0, 0.0, RiskAttitude.AVERSE, 2.0, 0.5) == 0.0

    def test_non_positive_utility_rejected(self):
        with pytest.raises(ValueError):
            preference_score(0.0, 0.5, RiskAttitude.NEUTRAL, 2.0, 0.5)

    def test_monotonicity(self, rng):
        for attitude in RiskAttitude:
            for _ in range(60):
                u = rng.uniform(1.0, 400.0)
                p = rng.uniform(0.01, 1.0)
                du = rng.uniform(0.1, 50.0)
                dp = rng.uniform(0.0, 1.0 - p)
                base = preference_score(u, p, attitude, 2.0, 0.5)
                assert preference_score(u + du, p, attitude, 2.0, 0.5) > base
                assert preference_score(u, p + dp, attitude, 2.0, 0.5) >= base


class TestGenerateCandidates:
    def test_empty_history_gives_random_candidates(self):
        config = SimConfig()
        history = ProposalHistory(owner=0)
        rng = random.Random(3)
        candidates = generate_candidates(0, history, config, rng)
        assert len(candidates) == config.candidate_random_count
        for c in candidates:
            assert 0 in c
            assert 2 <= len(c) <= config.random_coalition_size_max

    def test_history_sampling_counts(self):
        config = SimConfig()
        history = ProposalHistory(owner=0)
        for k in range(3):
            record(history, [0, k + 1], k + 1, Direction.SENT_ACCEPTED)
        rng = random.Random(3)
        candidates = generate_candidates(0, history, config, rng)
        assert len(candidates) <= config.candidate_random_count + 3

    def test_all_results_contain_initiator(self):
        config = SimConfig()
        history = ProposalHistory(owner=2)
        rng = random.Random(8)
        for k in range(8):
            members = sorted(set([2] + rng.sample([a for a in range(20) if a != 2], k % 4 + 1)))
            record(history, members, members[0] if members[0] != 2 else members[1],
                   rng.choice(list(Direction)))
        for _ in range(20):
            for c in generate_candidates(2, history, config, rng):
                assert 2 in c
                assert len(c) >= 2

    def test_deduplication(self):
        config = SimConfig(candidate_random_count=0, candidate_sent_count=5, candidate_recv_count=5)
        history = ProposalHistory(owner=0)
        # the same coalition seen in both pools collapses to one candidate
        record(history, [0, 1], 1, Direction.SENT_ACCEPTED)
        record(history, [0, 1], 1, Direction.RECEIVED)
        candidates = generate_candidates(0, history, config, random.Random(0))
        assert candidates == [CoalitionSet.of([0, 1])]

    def test_remap_inserts_missing_initiator(self):
        config = SimConfig(candidate_random_count=0, candidate_recv_count=5)
        history = ProposalHistory(owner=9)
        record(history, [1, 2], 1, Direction.RECEIVED)  # does not contain owner 9
        candidates = generate_candidates(9, history, config, random.Random(0))
        assert candidates == [CoalitionSet.of([1, 2, 9])]

    def test_remap_respects_size_cap_by_displacing_originator(self):
        config = SimConfig(candidate_random_count=0, candidate_recv_count=5, random_coalition_size_max=3)
        history = ProposalHistory(owner=9)
        record(history, [1, 2, 3], 1, Direction.RECEIVED)
        candidates = generate_candidates(9, history, config, random.Random(0))
        assert candidates == [CoalitionSet.of([2, 3, 9])]


def scripted_select(initiator, specs, attitude, config, current=None):
    """Run select_proposals with hand-chosen (utility, p) per candidate."""
    utilities = {c.mask: u for c, u, _ in specs}
    probabilities = {c.mask: p for c, _, p in specs}
    profile = make_profile(config.n_agents, attitude=attitude)
    history = ProposalHistory(owner=initiator)
    return select_proposals(
        initiator,
        [c for c, _, _ in specs],
        profile,
        history,
        current,
        config,
        utility_of=lambda c: utilities[c.mask],
        p_formation_of=lambda c: probabilities[c.mask],
    )


class TestSelectProposals:
    def test_neutral_ranks_by_plain_product(self):
        config = SimConfig(max_proposals_per_step=2)
        a, b = CoalitionSet.of([0, 1]), CoalitionSet.of([0, 2])
        chosen = scripted_select(0, [(a, 100.0, 0.5), (b, 60.0, 0.9)], RiskAttitude.NEUTRAL, config)
        assert chosen == [b, a]  # 54 beats 50

    def test_seeking_flips_the_ranking(self):
        config = SimConfig(max_proposals_per_step=2)
        a, b = CoalitionSet.of([0, 1]), CoalitionSet.of([0, 2])
        chosen = scripted_select(0, [(a, 100.0, 0.5), (b, 60.0, 0.9)], RiskAttitude.SEEKING, config)
        assert chosen == [a, b]  # 5000 beats 3240

    def test_send_gate_drops_weak_expected_value(self):
        config = SimConfig(comm_cost=1.0)
        a = CoalitionSet.of([0, 1])
        assert scripted_select(0, [(a, 3.0, 0.5)], RiskAttitude.NEUTRAL, config) == []

    def test_send_gate_boundary_kept(self):
        config = SimConfig(comm_cost=1.0)
        a = CoalitionSet.of([0, 1])
        assert scripted_select(0, [(a, 4.0, 0.5)], RiskAttitude.NEUTRAL, config) == [a]

    def test_non_positive_utility_filtered(self):
        config = SimConfig(max_proposals_per_step=3)
        a, b = CoalitionSet.of([0, 1]), CoalitionSet.of([0, 2])
        chosen = scripted_select(0, [(a, -5.0, 0.9), (b, 50.0, 0.9)], RiskAttitude.NEUTRAL, config)
        assert chosen == [b]

    def test_current_coalition_not_reproposed(self):
        config = SimConfig(max_proposals_per_step=3)
        a, b = CoalitionSet.of([0, 1]), CoalitionSet.of([0, 2])
        chosen = scripted_select(
            0, [(a, 90.0, 0.9), (b, 50.0, 0.9)], RiskAttitude.NEUTRAL, config, current=a
        )
        assert chosen == [b]

    def test_ties_break_on_member_ids(self):
        config = SimConfig(max_proposals_per_step=2)
        a, b = CoalitionSet.of([0, 5]), CoalitionSet.of([0, 2])
        chosen = scripted_select(0, [(a, 50.0, 0.5), (b, 50.0, 0.5)], RiskAttitude.NEUTRAL, config)
        assert chosen == [b, a]

    def test_budget_cap(self):
        config = SimConfig(max_proposals_per_step=1)
        specs = [(CoalitionSet.of([0, k]), 100.0 + k, 0.5) for k in range(1, 5)]
        chosen = scripted_select(0, specs, RiskAttitude.NEUTRAL, config)
        assert chosen == [CoalitionSet.of([0, 4])]

    def test_candidate_must_contain_initiator(self):
        config = SimConfig()
        profile = make_profile(config.n_agents)
        with pytest.raises(ValueError):
            select_proposals(
                0, [CoalitionSet.of([1, 2])], profile, ProposalHistory(owner=0), None, config
            )

    @pytest.mark.parametrize("attitude", list(RiskAttitude))
    def test_ranking_invariant_under_utility_scaling(self, attitude):
        rng = random.Random(17)
        config = SimConfig(max_proposals_per_step=4, comm_cost=0.0)
        for _ in range(50):
            specs = [
                (CoalitionSet.of([0, k]), rng.uniform(1.0, 300.0), rng.uniform(0.05, 1.0))
                for k in range(1, 7)
            ]
            base = scripted_select(0, specs, attitude, config)
            k = rng.uniform(0.1, 25.0)
            scaled = [(c, u * k, p) for c, u, p in specs]
            assert scripted_select(0, scaled, attitude, config) == base
