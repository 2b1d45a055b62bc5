from collections import deque
from dataclasses import dataclass

import pytest

from trade.errors import StateSpaceBudgetExceeded
from trade.explorer import (
    CONFIGS,
    ExploreConfig,
    Transition,
    build,
    enabled_transitions,
    explore,
    regression_counts,
)
from trade.explorer.core import TERMINATION


@dataclass
class Graph:
    """Hand-written toy model: a successor table and a set of final states."""

    edges: dict
    finals: frozenset
    name: str = "toy"
    bad: frozenset = frozenset()

    def initial_states(self):
        return ["a"]

    def successors(self, state):
        return [(Transition(f"{state}->{n}"), n) for n in self.edges.get(state, ())]

    def all_final(self, state):
        return state in self.finals

    def invariant(self, state):
        return ["bad state"] if state in self.bad else []

    def final_check(self, state):
        return []


def test_chain_counts():
    report = explore(Graph({"a": ["b"], "b": ["c"]}, frozenset({"c"})))
    # 1 initial + 2 firings + 1 stutter at the final state.
    assert (report.depth, report.states_found, report.distinct_states, report.errors) == (3, 4, 3, 0)


def test_diamond_counts():
    report = explore(Graph({"a": ["b", "c"], "b": ["d"], "c": ["d"]}, frozenset({"d"})))
    assert (report.depth, report.states_found, report.distinct_states) == (3, 6, 4)
    assert report.final_states == 1


def test_deadlock_is_an_error():
    report = explore(Graph({"a": ["b", "c"]}, frozenset({"b"})))
    assert report.deadlocks == 1 and report.errors == 1 and not report.passed


def test_cycle_is_an_error():
    report = explore(Graph({"a": ["b"], "b": ["a", "c"]}, frozenset({"c"})))
    assert report.cycles == 1 and report.errors == 1


def test_invariant_violation_is_reported():
    report = explore(Graph({"a": ["b"]}, frozenset({"b"}), bad=frozenset({"b"})))
    assert report.errors == 1 and "bad state" in report.violations[0]


def test_budget():
    edges = {i: [i + 1] for i in range(100)}
    graph = Graph(edges, frozenset({100}))
    graph.initial_states = lambda: [0]
    with pytest.raises(StateSpaceBudgetExceeded):
        explore(graph, max_states=50)
    with pytest.raises(StateSpaceBudgetExceeded):
        regression_counts("registration", ExploreConfig(orgs=2, registrars=2), max_states=100)


def test_report_rendering():
    report = explore(Graph({"a": ["b"]}, frozenset({"b"})))
    assert report.line() == "toy|2|3|2|0"
    assert report.summary() == "toy: depth 2, 3 states found, 2 distinct, 1 final, no errors"


def _step(workflow, state, name, actor=""):
    for t, nxt in workflow.successors(state):
        if t.name == name and (not actor or t.actor == actor):
            return nxt
    raise AssertionError(f"{name} not enabled; have {enabled_transitions(workflow, state)}")


def test_registration_enabled_transitions():
    wf = build("registration")
    s0 = next(iter(wf.initial_states()))
    assert enabled_transitions(wf, s0) == [Transition("Setup")]
    s1 = _step(wf, s0, "Setup")
    assert enabled_transitions(wf, s1) == [Transition("Preparation", "O1")]


# One organization, one registrar, one profile: the only interleaving.
HAPPY_PATH = ["Setup", "Preparation", "Register", "Verification", "BlockchainIdentityCreation",
              "SaveMapping", "ConfirmReceipt", "ConfirmReceipt", "ReceiveBlockchainIdentity"]


def test_registration_happy_path_reaches_termination():
    wf = build("registration")
    state = next(iter(wf.initial_states()))
    for name in HAPPY_PATH:
        state = _step(wf, state, name)
    assert enabled_transitions(wf, state) == [Transition(TERMINATION)]
    assert wf.final_check(state) == []
    report = explore(wf)
    assert report.depth == len(HAPPY_PATH) + 1


def _finals(wf):
    seen, queue, finals = set(), deque(wf.initial_states()), []
    while queue:
        state = queue.popleft()
        if state in seen:
            continue
        seen.add(state)
        succ = wf.successors(state)
        if not succ and wf.all_final(state):
            finals.append(state)
        queue.extend(n for _, n in succ)
    return finals


@pytest.mark.parametrize("name", ["registration", "policy-creation", "cti-insertion",
                                  "access-authorization"])
def test_confluence(name):
    workflow, config = CONFIGS[name]
    finals = _finals(build(workflow, config))
    assert finals
    blocks = {frozenset(getattr(s, "iblock", ())) | frozenset(getattr(s, "ablock", ()))
              for s in finals}
    assert len(blocks) == 1


def test_two_by_two_registration_is_safe():
    report = explore(build("registration", ExploreConfig(orgs=2, registrars=2)))
    assert report.errors == 0 and report.final_states >= 1


@pytest.mark.parametrize("workflow", ["registration", "cti-insertion", "access-authorization"])
def test_injected_failures_keep_the_models_safe(workflow):
    plain = explore(build(workflow, ExploreConfig()))
    injected = explore(build(workflow, ExploreConfig(inject_failures=True)))
    assert injected.errors == 0
    assert injected.distinct_states > plain.distinct_states


def test_failure_configs_rename_and_stay_safe():
    for label, (workflow, config) in CONFIGS.items():
        report = explore(build(workflow, config))
        assert report.workflow == label and report.errors == 0


def test_unknown_workflow():
    with pytest.raises(ValueError):
        build("nope")
