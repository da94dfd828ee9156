"""Coalition utility and the two expected-utility evaluations.

A coalition is worth, to an agent, the sum of its private interaction
estimates over every ordered pair of distinct members. The expected value of
staying discounts that sum by the product of the agent's trust in each
co-member; the expected value of a proposed coalition instead discounts the
one-off switching costs.
"""

from __future__ import annotations

from .domain import AgentId, AgentProfile, CoalitionSet, SimConfig
from .trust import TrustMatrix

UtilityValue = float


def coalition_utility(agent: AgentId, coalition: CoalitionSet, profile: AgentProfile) -> float:
    """Sum of ``table[a][b]`` over ordered pairs (a, b), a != b, in the coalition.

    The sum runs in ascending (a, b) order so results are bit-reproducible.
    A singleton coalition has no pairs and is worth exactly 0.
    """
    if agent not in coalition:
        raise ValueError(f"agent {agent} is not a member of {coalition.members}")
    table = profile.interaction_table
    total = 0.0
    for a in coalition.members:
        row = table[a]
        for b in coalition.members:
            if a != b:
                total += row[b]
    return total


def expected_utility_current(
    agent: AgentId,
    coalition: CoalitionSet,
    utility: UtilityValue,
    trust: TrustMatrix,
) -> float:
    """Utility of the current coalition scaled by trust in every co-member.

    With no co-members the product is empty and the utility passes through.
    """
    if agent not in coalition:
        raise ValueError(f"agent {agent} is not a member of {coalition.members}")
    product = 1.0
    row = trust.values[agent]
    for other in coalition.members:
        if other != agent:
            product *= row[other]
    return utility * product


def expected_utility_proposed(
    agent: AgentId,
    proposed_utility: UtilityValue,
    would_pay_leave_penalty: bool,
    config: SimConfig,
    pays_enroll_fee: bool = True,
) -> float:
    """Proposed-coalition utility net of discounted switching costs.

    The leave penalty applies when the agent would exit a coalition younger
    than the obligatory staying time. Initiators evaluating their own
    candidate are not solicited, pay no enrollment fee, and pass
    ``pays_enroll_fee=False``.
    """
    penalty = config.leave_penalty if would_pay_leave_penalty else 0.0
    fee = config.enroll_fee if pays_enroll_fee else 0.0
    return proposed_utility - (penalty + fee) * config.step_coeff
