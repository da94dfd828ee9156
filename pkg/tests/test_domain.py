import dataclasses

import pytest

from hedonica.domain import (
    Coalition,
    CoalitionSet,
    RiskAttitude,
    SimConfig,
    risk_attitude_for,
    validate_config,
)


class TestCoalitionSet:
    def test_stores_sorted_and_deduplicated(self):
        c = CoalitionSet.of([3, 1, 2, 1])
        assert c.members == (1, 2, 3)

    def test_equality_is_order_independent(self):
        assert CoalitionSet.of([5, 2]) == CoalitionSet.of([2, 5])
        assert hash(CoalitionSet.of([5, 2])) == hash(CoalitionSet.of([2, 5]))

    def test_mask_matches_members(self):
        c = CoalitionSet.of([0, 2, 4])
        assert c.mask == 0b10101

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            CoalitionSet.of([])

    def test_negative_id_rejected(self):
        with pytest.raises(ValueError):
            CoalitionSet.of([-1, 2])

    def test_membership_and_others(self):
        c = CoalitionSet.of([1, 4, 7])
        assert 4 in c and 5 not in c
        assert c.others(4) == (1, 7)
        assert len(c) == 3


class TestCoalition:
    def test_initiator_must_be_member(self):
        with pytest.raises(ValueError):
            Coalition(id=0, members=CoalitionSet.of([1, 2]), initiator=3, formed_at=1)

    def test_singleton_rejected(self):
        with pytest.raises(ValueError):
            Coalition(id=0, members=CoalitionSet.of([1]), initiator=1, formed_at=1)


class TestValidateConfig:
    def test_defaults_are_valid(self):
        assert validate_config(SimConfig()) == []

    def test_step_coeff_bound(self):
        bad = dataclasses.replace(SimConfig(), step_coeff=1.2)
        violations = validate_config(bad)
        assert len(violations) == 1
        assert "step_coeff" in violations[0]

    def test_punishment_must_exceed_reward(self):
        bad = dataclasses.replace(SimConfig(), trust_punishment=0.005, trust_reward=0.01)
        violations = validate_config(bad)
        assert len(violations) == 1
        assert "trust_punishment" in violations[0]

    def test_small_population_rejected(self):
        assert any("n_agents" in v for v in validate_config(dataclasses.replace(SimConfig(), n_agents=1)))

    @pytest.mark.parametrize(
        "field,value",
        [
            ("alpha", 1.0),
            ("beta", 0.0),
            ("beta", 1.0),
            ("initiator_reward_share", 1.5),
            ("bad_reputation_coeff", 1.0),
            ("response_deadline", 0),
            ("risk_mix", "bold"),
            ("responder_mix", "sometimes"),
            ("gained_utility_mode", "net"),
            ("random_coalition_size_max", 1),
        ],
    )
    def test_individual_bounds(self, field, value):
        bad = dataclasses.replace(SimConfig(), **{field: value})
        assert any(field in v for v in validate_config(bad))


class TestRiskMix:
    def test_pure_mixes(self):
        assert risk_attitude_for(7, "seeking") is RiskAttitude.SEEKING
        assert risk_attitude_for(7, "averse") is RiskAttitude.AVERSE
        assert risk_attitude_for(7, "neutral") is RiskAttitude.NEUTRAL

    def test_mixed_cycles_by_id(self):
        attitudes = [risk_attitude_for(i, "mixed") for i in range(6)]
        assert attitudes == [
            RiskAttitude.SEEKING,
            RiskAttitude.AVERSE,
            RiskAttitude.NEUTRAL,
        ] * 2

    def test_mixed_remainder_goes_to_seeking_then_averse(self):
        counts = {a: 0 for a in RiskAttitude}
        for i in range(20):
            counts[risk_attitude_for(i, "mixed")] += 1
        assert counts[RiskAttitude.SEEKING] == 7
        assert counts[RiskAttitude.AVERSE] == 7
        assert counts[RiskAttitude.NEUTRAL] == 6
