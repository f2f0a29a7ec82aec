"""Office smart-home simulator."""
from __future__ import annotations

from .interpreter import AppInstance, Effect, Event, Interpreter, InterpreterError, Provenance
from .runtime import (
    PlainAppError, RunOutput, Simulator, bundled_app_names, generate_routine, load_app_source,
    parse_log_message, prepare_apps, run,
)
from .scenario import (
    BUNDLED_SCENARIOS, DAY_MS, AppBinding, DeviceModel, Routine, Scenario, SchemaError, ThreatInjection,
    TimelineEvent, TruthLabel, User, Zone, load_scenario, scenario_from_dict,
)
from .threats import ACTIVITIES, BEHAVIORS, BENIGN, THREATS, TIME_DEPENDENT, UnknownThreat, inject_threat

__all__ = [n for n in dir() if not n.startswith("_")]
