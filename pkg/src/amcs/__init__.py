"""Asynchronous multi-context systems: framework, simulator, validator."""

from .terms import EOC, Term, Var, parse_term, render_term
from .kernel import (
    AMCSSpec,
    Context,
    ContextConfiguration,
    ContextManagement,
    DataPackage,
    LogicSuite,
    OutputRule,
    SystemConfiguration,
    Violation,
    body_holds,
    relout,
    stakeholders,
    validate_system,
)
from .engine import (
    EngineFault,
    FixedLatency,
    RunTrace,
    SensorEvent,
    SystemValidationError,
    TableLatency,
    UniformLatency,
    run,
    step,
)
from .validator import validate_run, validate_trace

__version__ = "0.1.0"

__all__ = [
    "EOC",
    "Term",
    "Var",
    "parse_term",
    "render_term",
    "AMCSSpec",
    "Context",
    "ContextConfiguration",
    "ContextManagement",
    "DataPackage",
    "LogicSuite",
    "OutputRule",
    "SystemConfiguration",
    "Violation",
    "body_holds",
    "relout",
    "stakeholders",
    "validate_system",
    "EngineFault",
    "FixedLatency",
    "UniformLatency",
    "TableLatency",
    "RunTrace",
    "SensorEvent",
    "SystemValidationError",
    "run",
    "step",
    "validate_run",
    "validate_trace",
    "__version__",
]
