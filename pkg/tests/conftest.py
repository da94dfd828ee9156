import random

import pytest

from hedonica.domain import AgentProfile, ResponderType, RiskAttitude


def make_table(n, default=0.0, entries=None):
    """n x n interaction table with selected (a, b) overrides."""
    table = [[default] * n for _ in range(n)]
    if entries:
        for (a, b), value in entries.items():
            table[a][b] = value
    return tuple(tuple(row) for row in table)


def random_table(n, rng):
    return tuple(tuple(rng.uniform(-100.0, 100.0) for _ in range(n)) for _ in range(n))


def make_profile(
    n,
    honesty=0.1,
    attitude=RiskAttitude.NEUTRAL,
    responder=ResponderType.EARLY,
    table=None,
    entries=None,
):
    if table is None:
        table = make_table(n, entries=entries)
    return AgentProfile(
        honesty=honesty,
        risk_attitude=attitude,
        responder_type=responder,
        interaction_table=table,
    )


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
