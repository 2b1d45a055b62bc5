"""Workflow models and the explicit-state explorer that checks them."""

from __future__ import annotations

from .core import ExplorationReport, Transition, enabled_transitions, explore
from .workflows import (
    WORKFLOWS,
    AccessWorkflow,
    ExploreConfig,
    InsertionWorkflow,
    PolicyCreationWorkflow,
    RegistrationWorkflow,
)

# The six checked configurations plus the two-policy creation run.
CONFIGS = {
    "registration": ("registration", ExploreConfig()),
    "registration-failure": ("registration", ExploreConfig(failure=True)),
    "policy-creation": ("policy-creation", ExploreConfig(pool=2)),
    "cti-insertion": ("cti-insertion", ExploreConfig()),
    "cti-insertion-failure": ("cti-insertion", ExploreConfig(failure=True)),
    "access-authorization": ("access-authorization", ExploreConfig()),
    "access-authorization-badge-failure": ("access-authorization", ExploreConfig(failure=True)),
}


def build(workflow: str, config: ExploreConfig = ExploreConfig()):
    try:
        return WORKFLOWS[workflow](config)
    except KeyError:
        raise ValueError(f"unknown workflow {workflow!r}; choose from {sorted(WORKFLOWS)}") from None


def regression_counts(workflow: str, config: ExploreConfig = ExploreConfig(),
                      max_states: int = 10 ** 6) -> tuple[int, int, int]:
    report = explore(build(workflow, config), max_states)
    return (report.depth, report.states_found, report.distinct_states)


__all__ = [
    "CONFIGS", "WORKFLOWS", "AccessWorkflow", "ExplorationReport", "ExploreConfig",
    "InsertionWorkflow", "PolicyCreationWorkflow", "RegistrationWorkflow", "Transition",
    "build", "enabled_transitions", "explore", "regression_counts",
]
