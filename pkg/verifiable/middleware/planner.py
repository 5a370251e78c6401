"""
Cost-based planning over fixed step templates.

Single-table statements leave no join order to search, so each statement kind
has one valid step ordering and the planner's work is pricing it. The engine
runs a plan by dispatching its steps in order, so the listed order is the
executed order: payloads are stored first, then both indexes take the new
entries, then the new roots are anchored in the appended block.
"""

from dataclasses import dataclass
from enum import Enum

from .statements import Delete, Insert, SelectFuzzy, SelectSimple, SelectTimeRange, Update


class PlanStep(str, Enum):
    CACHE_PROBE = 'cache-probe'
    INDEX_LOOKUP = 'index-lookup'
    OFF_CHAIN_FETCH = 'off-chain-fetch'
    MERGE = 'merge'
    VO_ATTACH = 'vo-attach'
    OFF_CHAIN_PUT = 'off-chain-put'
    LEDGER_APPEND = 'ledger-append'
    INDEX_INSERT = 'index-insert'
    ANCHOR = 'anchor'


DEFAULT_STEP_COSTS = {
    PlanStep.CACHE_PROBE: 1,
    PlanStep.INDEX_LOOKUP: 50,
    PlanStep.OFF_CHAIN_FETCH: 500,
    PlanStep.MERGE: 5,
    PlanStep.VO_ATTACH: 5,
    PlanStep.OFF_CHAIN_PUT: 500,
    PlanStep.LEDGER_APPEND: 100,
    PlanStep.INDEX_INSERT: 50,
    PlanStep.ANCHOR: 100,
}

SELECT_STEPS = (
    PlanStep.CACHE_PROBE,
    PlanStep.INDEX_LOOKUP,
    PlanStep.OFF_CHAIN_FETCH,
    PlanStep.MERGE,
    PlanStep.VO_ATTACH,
)
# One INDEX_INSERT per index: time first, then prefix.
WRITE_STEPS = (PlanStep.INDEX_INSERT, PlanStep.INDEX_INSERT, PlanStep.ANCHOR, PlanStep.LEDGER_APPEND)
DELETE_STEPS = (PlanStep.ANCHOR, PlanStep.LEDGER_APPEND)


@dataclass(frozen=True)
class ExecutionPlan:
    steps: tuple
    est_cost: int

    def as_dict(self):
        return {'steps': [step.value for step in self.steps], 'est_cost': self.est_cost}


def step_costs(overrides=None):
    """Default step costs with ``overrides`` (keyed by step or step name) applied."""
    costs = dict(DEFAULT_STEP_COSTS)
    for key, value in (overrides or {}).items():
        costs[PlanStep(key)] = int(value)
    return costs


def plan(statement, costs=None):
    costs = costs or DEFAULT_STEP_COSTS
    if isinstance(statement, (SelectSimple, SelectTimeRange, SelectFuzzy)):
        steps = SELECT_STEPS
    elif isinstance(statement, (Insert, Update)):
        steps = _payload_puts(statement) + WRITE_STEPS
    elif isinstance(statement, Delete):
        steps = DELETE_STEPS
    else:
        raise TypeError(f"cannot plan {type(statement).__name__}")
    return ExecutionPlan(steps, sum(costs[step] for step in steps))


def _payload_puts(statement):
    if isinstance(statement, Insert):
        payloads = (statement.image, statement.video)
    else:
        changed = statement.changed()
        payloads = (changed.get('image'), changed.get('video'))
    return tuple(PlanStep.OFF_CHAIN_PUT for payload in payloads if payload is not None)


def plan_batch(statements, costs=None):
    """Plan several inserts appended as one block."""
    costs = costs or DEFAULT_STEP_COSTS
    puts = ()
    for statement in statements:
        if not isinstance(statement, Insert):
            raise TypeError(f"cannot batch {type(statement).__name__}")
        puts += _payload_puts(statement)
    steps = puts + WRITE_STEPS
    return ExecutionPlan(steps, sum(costs[step] for step in steps))
