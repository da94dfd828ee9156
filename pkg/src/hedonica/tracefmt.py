"""Line-oriented event traces and replay verification.

Every run can emit a trace: one event per line, ``step|kind|actor|object|amount``,
in causal order. The trace is complete enough to re-derive the money ledger,
the coalition partition, and the trust trajectories from scratch, which is
what :func:`verify_trace` does when checking a recorded run for consistency.

Floats are serialized with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

from .domain import SYSTEM_AGENT


class TraceEvent(NamedTuple):
    step: int
    kind: str
    actor: int
    obj: str
    amount: float | None


# Money events mirror the ledger one-to-one.
MONEY_KINDS = frozenset(
    {
        "accrue",
        "comm_cost",
        "enroll_fee",
        "initiator_reward",
        "fee_sink",
        "leave_penalty",
        "penalty_share",
    }
)

STRUCTURE_KINDS = frozenset(
    {
        "open",
        "agree_yes",
        "agree_no",
        "agree_ignored",
        "to_commit",
        "confirm",
        "expire_agreement",
        "expire_commitment",
        "conflict_cancel",
        "form",
        "leave",
        "dissolve",
    }
)

TRUST_KINDS = frozenset({"trust_stay", "trust_leave"})


def format_event(event: TraceEvent) -> str:
    amount = "" if event.amount is None else repr(event.amount)
    return f"{event.step}|{event.kind}|{event.actor}|{event.obj}|{amount}"


def parse_event(line: str) -> TraceEvent:
    parts = line.rstrip("\n").split("|")
    if len(parts) != 5:
        raise ValueError(f"malformed trace line: {line!r}")
    step, kind, actor, obj, amount = parts
    return TraceEvent(int(step), kind, int(actor), obj, float(amount) if amount else None)


def write_trace(path, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for event in events:
            fh.write(format_event(event))
            fh.write("\n")


def read_trace(path) -> list[TraceEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        return [parse_event(line) for line in fh if line.strip()]


def _members_of(field: str) -> list[int]:
    return [int(m) for m in field.split("+")]


class _PartitionReplay:
    """Membership bookkeeping rebuilt purely from form/leave/dissolve events."""

    def __init__(self, n_agents: int):
        self.membership: dict[int, int] = {}
        self.coalitions: dict[int, set[int]] = {}
        self.n_agents = n_agents

    def form(self, coalition_id: int, members: list[int], step: int) -> str | None:
        for m in members:
            if m in self.membership:
                return (
                    f"step {step}: agent {m} joins coalition {coalition_id} while still "
                    f"a member of coalition {self.membership[m]}"
                )
            if not 0 <= m < self.n_agents:
                return f"step {step}: member id {m} out of range"
        if len(members) < 2:
            return f"step {step}: coalition {coalition_id} formed with fewer than 2 members"
        self.coalitions[coalition_id] = set(members)
        for m in members:
            self.membership[m] = coalition_id
        return None

    def leave(self, coalition_id: int, agent: int, step: int) -> str | None:
        group = self.coalitions.get(coalition_id)
        if group is None or agent not in group:
            return f"step {step}: agent {agent} left coalition {coalition_id} it was not in"
        group.discard(agent)
        del self.membership[agent]
        return None

    def dissolve(self, coalition_id: int, step: int) -> str | None:
        group = self.coalitions.pop(coalition_id, None)
        if group is None:
            return f"step {step}: dissolve of unknown coalition {coalition_id}"
        for m in group:
            del self.membership[m]
        return None


def verify_trace(events: list[TraceEvent], run_summary: dict, config: dict) -> list[str]:
    """Re-derive a run from its trace and compare against recorded outputs.

    Checks, in order of detection: per-step money conservation (penalty
    debits vs shares, fees vs reward + sink), partition consistency, the
    formed-implies-full-consent audit, per-step proposal/confirmation
    budgets, final per-agent balances and accrual totals, and the trust
    trajectory replay. Returns divergence descriptions; empty means
    consistent.
    """
    problems: list[str] = []
    n_agents = int(config["n_agents"])
    r = float(config["trust_reward"])
    pu = float(config["trust_punishment"])

    balances = [0.0] * n_agents
    accruals = [0.0] * n_agents
    trust = [[0.5] * n_agents for _ in range(n_agents)]
    partition = _PartitionReplay(n_agents)

    step_penalties: dict[int, float] = {}
    step_fees: dict[int, float] = {}
    opens: dict[tuple[int, int], int] = {}
    confirms: dict[tuple[int, int], int] = {}
    agreed: dict[int, set[int]] = {}
    confirmed: dict[int, set[int]] = {}
    proposal_members: dict[int, list[int]] = {}

    for event in events:
        kind = event.kind
        if kind in MONEY_KINDS:
            if event.amount is None:
                problems.append(f"step {event.step}: money event {kind} without amount")
                continue
            if event.actor != SYSTEM_AGENT:
                balances[event.actor] += event.amount
                if kind == "accrue":
                    accruals[event.actor] += event.amount
            if kind in ("leave_penalty", "penalty_share"):
                step_penalties[event.step] = step_penalties.get(event.step, 0.0) + event.amount
            elif kind in ("enroll_fee", "initiator_reward", "fee_sink"):
                step_fees[event.step] = step_fees.get(event.step, 0.0) + event.amount
        elif kind == "trust_stay":
            subject = int(event.obj)
            trust[event.actor][subject] = min(1.0, trust[event.actor][subject] + r)
        elif kind == "trust_leave":
            subject = int(event.obj)
            trust[event.actor][subject] = max(0.0, trust[event.actor][subject] - pu)
        elif kind == "open":
            pid_field, members_field = event.obj.split(":")
            pid = int(pid_field[1:])
            proposal_members[pid] = _members_of(members_field)
            key = (event.step, event.actor)
            opens[key] = opens.get(key, 0) + 1
        elif kind == "agree_yes":
            agreed.setdefault(int(event.obj[1:]), set()).add(event.actor)
        elif kind == "confirm":
            pid = int(event.obj[1:])
            confirmed.setdefault(pid, set()).add(event.actor)
            key = (event.step, event.actor)
            confirms[key] = confirms.get(key, 0) + 1
        elif kind == "form":
            cid_field, pid_field, members_field = event.obj.split(":")
            cid, pid = int(cid_field[1:]), int(pid_field[1:])
            members = _members_of(members_field)
            problem = partition.form(cid, members, event.step)
            if problem:
                problems.append(problem)
            solicited = set(members) - {event.actor}
            if solicited - agreed.get(pid, set()):
                problems.append(
                    f"step {event.step}: proposal {pid} formed without agreement from "
                    f"{sorted(solicited - agreed.get(pid, set()))}"
                )
            if solicited - confirmed.get(pid, set()):
                problems.append(
                    f"step {event.step}: proposal {pid} formed without confirmation from "
                    f"{sorted(solicited - confirmed.get(pid, set()))}"
                )
        elif kind == "leave":
            problem = partition.leave(int(event.obj[1:]), event.actor, event.step)
            if problem:
                problems.append(problem)
        elif kind == "dissolve":
            problem = partition.dissolve(int(event.obj[1:]), event.step)
            if problem:
                problems.append(problem)

    for step in sorted(step_penalties):
        if abs(step_penalties[step]) > 1e-9:
            problems.append(
                f"step {step}: leave penalties and shares do not balance "
                f"(net {step_penalties[step]!r})"
            )
    for step in sorted(step_fees):
        if abs(step_fees[step]) > 1e-9:
            problems.append(
                f"step {step}: enrollment fees, rewards, and sink do not balance "
                f"(net {step_fees[step]!r})"
            )

    max_opens = int(config["max_proposals_per_step"])
    for (step, actor), count in sorted(opens.items()):
        if count > max_opens:
            problems.append(f"step {step}: agent {actor} opened {count} proposals (max {max_opens})")
    max_confirms = int(config["max_confirms_per_step"])
    for (step, actor), count in sorted(confirms.items()):
        if count > max_confirms:
            problems.append(
                f"step {step}: agent {actor} confirmed {count} proposals (max {max_confirms})"
            )

    # Surviving coalitions must all still have >= 2 members.
    for cid, group in sorted(partition.coalitions.items()):
        if len(group) < 2:
            problems.append(f"end of trace: coalition {cid} survives with {len(group)} member(s)")

    recorded_balances = run_summary["final_balances"]
    for agent in range(n_agents):
        if abs(balances[agent] - recorded_balances[agent]) > 1e-9:
            problems.append(
                f"final balance of agent {agent}: replay {balances[agent]!r} "
                f"!= recorded {recorded_balances[agent]!r}"
            )
    recorded_accruals = run_summary["final_accruals"]
    for agent in range(n_agents):
        if abs(accruals[agent] - recorded_accruals[agent]) > 1e-9:
            problems.append(
                f"final accrual of agent {agent}: replay {accruals[agent]!r} "
                f"!= recorded {recorded_accruals[agent]!r}"
            )

    recorded_trust = run_summary["final_trust"]
    for i in range(n_agents):
        for j in range(n_agents):
            if i != j and abs(trust[i][j] - recorded_trust[i][j]) > 1e-12:
                problems.append(
                    f"final trust[{i}][{j}]: replay {trust[i][j]!r} "
                    f"!= recorded {recorded_trust[i][j]!r}"
                )

    return problems
