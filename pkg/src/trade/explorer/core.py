"""Breadth-first explicit-state exploration over a finite workflow model.

A model supplies initial states and a successor function.  The explorer
enumerates every reachable state once, records the transition firings, and
checks for deadlocks, invariant violations, non-terminating cycles and
unsafe final states.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Protocol

from ..errors import StateSpaceBudgetExceeded

TERMINATION = "Termination"


@dataclass(frozen=True, order=True)
class Transition:
    name: str
    actor: str = ""
    detail: str = ""

    def __str__(self) -> str:
        label = f"{self.name}({self.actor})" if self.actor else self.name
        return f"{label}[{self.detail}]" if self.detail else label


class Workflow(Protocol):
    name: str

    def initial_states(self) -> Iterable[Hashable]: ...

    def successors(self, state) -> list[tuple[Transition, Hashable]]: ...

    def all_final(self, state) -> bool: ...

    def invariant(self, state) -> list[str]: ...

    def final_check(self, state) -> list[str]: ...


@dataclass
class ExplorationReport:
    workflow: str
    depth: int
    states_found: int
    distinct_states: int
    errors: int
    deadlocks: int = 0
    cycles: int = 0
    violations: list[str] = field(default_factory=list)
    final_states: int = 0

    @property
    def passed(self) -> bool:
        return self.errors == 0

    def line(self) -> str:
        return f"{self.workflow}|{self.depth}|{self.states_found}|{self.distinct_states}|{self.errors}"

    def summary(self) -> str:
        verdict = "no errors" if self.passed else f"{self.errors} error(s)"
        text = (f"{self.workflow}: depth {self.depth}, {self.states_found} states found, "
                f"{self.distinct_states} distinct, {self.final_states} final, {verdict}")
        if self.violations:
            text += "\n" + "\n".join("  " + v for v in self.violations[:20])
        return text


def enabled_transitions(workflow: Workflow, state) -> list[Transition]:
    """Distinct transitions enabled in ``state``, in a stable order."""
    transitions = {t for t, _ in workflow.successors(state)}
    if workflow.all_final(state):
        transitions.add(Transition(TERMINATION))
    return sorted(transitions)


def explore(workflow: Workflow, max_states: int = 10 ** 6) -> ExplorationReport:
    initial = list(dict.fromkeys(workflow.initial_states()))
    index: dict[Hashable, int] = {}
    edges: list[list[int]] = []
    violations: list[str] = []
    found = len(initial)
    deadlocks = 0
    final_states = 0
    queue: deque = deque()

    def visit(state) -> int:
        if state in index:
            return index[state]
        if len(index) >= max_states:
            raise StateSpaceBudgetExceeded(f"more than {max_states} distinct states")
        index[state] = len(edges)
        edges.append([])
        queue.append(state)
        for problem in workflow.invariant(state):
            violations.append(f"invariant: {problem} in {state!r}")
        return index[state]

    for state in initial:
        visit(state)
    while queue:
        state = queue.popleft()
        me = index[state]
        succ = workflow.successors(state)
        stutter = workflow.all_final(state)
        found += len(succ) + (1 if stutter else 0)
        for _, nxt in succ:
            target = visit(nxt)
            if target != me:
                edges[me].append(target)
        if not succ:
            if stutter:
                final_states += 1
                for problem in workflow.final_check(state):
                    violations.append(f"final: {problem} in {state!r}")
            else:
                deadlocks += 1
                violations.append(f"deadlock in {state!r}")
    depth, cycles = _longest_path(edges, [index[s] for s in initial])
    if cycles:
        violations.append(f"{cycles} cycle(s) allow non-terminating runs")
    errors = len(violations)
    return ExplorationReport(workflow.name, depth, found, len(index), errors, deadlocks,
                             cycles, violations, final_states)


def _longest_path(edges: list[list[int]], roots: list[int]) -> tuple[int, int]:
    """Longest path counted in states, and the number of back edges seen."""
    n = len(edges)
    WHITE, GREY, BLACK = 0, 1, 2
    colour = [WHITE] * n
    longest = [1] * n
    cycles = 0
    for root in roots:
        if colour[root] != WHITE:
            continue
        stack = [(root, 0)]
        colour[root] = GREY
        while stack:
            node, i = stack[-1]
            if i < len(edges[node]):
                stack[-1] = (node, i + 1)
                child = edges[node][i]
                if colour[child] == WHITE:
                    colour[child] = GREY
                    stack.append((child, 0))
                elif colour[child] == GREY:
                    cycles += 1
            else:
                stack.pop()
                colour[node] = BLACK
                best = 0
                for child in edges[node]:
                    if colour[child] == BLACK:
                        best = max(best, longest[child])
                longest[node] = 1 + best
    return (max((longest[r] for r in roots), default=0), cycles)
