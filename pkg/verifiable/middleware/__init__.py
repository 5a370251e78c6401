from .engine import Engine, default_engine, reset_engine
from .parser import parse
from .planner import ExecutionPlan, PlanStep, plan
from .results import MutationReceipt, ResultRow, ResultSet

__all__ = [
    'Engine',
    'ExecutionPlan',
    'MutationReceipt',
    'PlanStep',
    'ResultRow',
    'ResultSet',
    'default_engine',
    'parse',
    'plan',
    'reset_engine',
]
