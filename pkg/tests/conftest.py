from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from iotforensics.sim import bundled_app_names, load_app_source

FIXTURES = Path(__file__).parent / "fixtures"

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text()


@pytest.fixture(scope="session")
def manifest() -> dict:
    return yaml.safe_load((FIXTURES / "manifest.yaml").read_text())


@pytest.fixture(scope="session")
def corpus():
    """Bundled apps as SourceUnits, keyed by name."""
    return {name: load_app_source(name) for name in bundled_app_names()}


class FakeHost:
    """Just enough of the runtime for driving the interpreter directly."""

    def __init__(self, values: dict | None = None) -> None:
        self.values = values or {}
        self.clock = 0
        self.logs: list[str] = []
        self.scheduled: list[tuple[float, str]] = []
        self.mode = "Office"

    def now(self) -> int:
        return self.clock

    def location_mode(self) -> str:
        return self.mode

    def set_mode(self, app, mode):
        self.mode = mode

    def current_value(self, device_id, attribute):
        return self.values.get((device_id, attribute))

    def device_commands(self, device_id):
        return {"on": ("switch", "on"), "off": ("switch", "off")}

    def command(self, app, device_id, command, args):
        pass

    def message(self, app, api, recipient, text):
        pass

    def http(self, app, api, url, body):
        pass

    def schedule_in(self, app, seconds, method):
        self.scheduled.append((seconds, method))

    def schedule_cron(self, app, cron, method):
        self.scheduled.append((cron, method))

    def unschedule(self, app, method):
        pass

    def subscribe(self, app, target, attribute, method):
        pass

    def unsubscribe(self, app):
        pass

    def log_iotdots(self, app, message):
        self.logs.append(message)
