"""Discrete-event office simulator driving instrumented smart apps."""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

from ..devices import CAPABILITIES, DEVICE_TYPES
from ..frontend import ast as A
from ..frontend.lexer import SourceUnit
from ..frontend.parser import parse_source
from ..instrumenter import LABELS, instrument, is_instrumented
from ..logstore.records import Batch, LogRecord
from ..logstore.transport import BATCH_SIZE, FLUSH_INTERVAL_MS, Transport
from .cron import Cron, CronError
from .interpreter import (
    AppInstance, DeviceGroup, DeviceRef, Effect, Event, Interpreter, InterpreterError, Provenance,
)
from .scenario import DAY_MS, AppBinding, Scenario, TimelineEvent, TruthLabel, parse_clock

MOTION_TIMEOUT_MS = 30_000
DOOR_DELAY_MS = 5_000
FALLBACK_DELAY_MS = 20_000
TEMP_PERIOD_MS = 600_000
LUX_PERIOD_MS = 900_000
LIGHT_LUX = 350.0
SIDE_CHANNEL_TOGGLES = 4
SIDE_CHANNEL_WINDOW_MS = 5_000
MALICIOUS_SOURCES = {"Behavior-4": "energy-saver", "Behavior-5": "light-signal"}


class PlainAppError(ValueError):
    pass


@dataclass
class RunOutput:
    logs: list[LogRecord]
    truth: tuple[TruthLabel, ...]
    effects: list[Effect]
    requests: int = 0
    batches: list[Batch] = field(default_factory=list, repr=False)
    seed: int = 0
    scenario: Scenario | None = field(default=None, repr=False)


# -- app sources ----------------------------------------------------------------

def bundled_app_names() -> list[str]:
    root = resources.files("iotforensics.sim").joinpath("apps")
    return sorted(p.name[: -len(".groovy")] for p in root.iterdir() if p.name.endswith(".groovy"))


def load_app_source(source: str) -> SourceUnit:
    """A bundled app by name, or a file path."""
    root = resources.files("iotforensics.sim").joinpath("apps")
    bundled = root.joinpath(f"{source}.groovy")
    if bundled.is_file():
        return SourceUnit(bundled.read_text(), f"{source}.groovy")
    path = Path(source)
    if not path.is_file():
        raise FileNotFoundError(f"app source not found: {source}")
    return SourceUnit(path.read_text(), path.name)


def scenario_sources(scenario: Scenario) -> list[str]:
    names = [b.source for b in scenario.apps]
    for t in scenario.threats:
        src = t.params.get("source") if t.threat in MALICIOUS_SOURCES else None
        if src:
            names.append(src)
    return list(dict.fromkeys(names))


def prepare_apps(scenario: Scenario, instrumented: bool = True) -> dict[str, A.SmartAppAst]:
    """Parse (and by default instrument) every app source the scenario needs."""
    out = {}
    for name in scenario_sources(scenario):
        unit = load_app_source(name)
        if instrumented:
            unit, _ = instrument(unit)
        out[name] = parse_source(unit)
    return out


# -- log message parsing ------------------------------------------------------------

def _typed(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def parse_log_message(message: str, known_devices=frozenset(), context_device: str | None = None):
    """Split ``Label: [device.]name=value`` into record fields.

    Returns a list of (kind, device_id, attribute, value); device groups fan out.
    """
    label, sep, body = message.partition(": ")
    if not sep or label not in LABELS:
        raise ValueError(f"unrecognized forensic log message {message!r}")
    kind = LABELS[label].value
    if "=" not in body:
        return [(kind, None, "recipient" if kind == "UserInput" else None, _typed(body))]
    lhs, _, value = body.partition("=")
    if "." in lhs:
        devs, _, attr = lhs.rpartition(".")
        ids = devs.split(",")
        return [(kind, d, attr, _typed(value)) for d in ids]
    parts = value.split(",")
    if kind == "DeviceInfo" and parts and all(p in known_devices for p in parts):
        return [(kind, p, lhs, p) for p in parts]
    return [(kind, context_device, lhs, _typed(value))]


# -- the simulator -------------------------------------------------------------------

@dataclass
class _Sub:
    app_id: str
    target: str          # device id or "location"
    attribute: str
    value_filter: str | None
    handler: str


class Simulator:
    def __init__(self, scenario: Scenario, apps: dict[str, A.SmartAppAst], seed: int,
                 sink: Callable[[Batch], object] | None = None,
                 batch_size: int = BATCH_SIZE, interval_ms: int = FLUSH_INTERVAL_MS) -> None:
        self.sc = scenario
        self.seed = seed
        self.sources = apps
        self.clock = 0
        self.mode = "Other"
        self._heap: list = []
        self._counter = 0
        self.interp = Interpreter(self)
        self.batch_size = batch_size
        self.interval_ms = interval_ms
        self.batches: list[Batch] = []
        self._external_sink = sink
        self.transports: dict[str, Transport] = {}
        self.seq: dict[str, int] = {}
        self.apps: dict[str, AppInstance] = {}
        self.subs: list[_Sub] = []
        self.timers: dict[tuple, int] = {}       # (app, method) -> token for runIn
        self.crons: dict[tuple, int] = {}
        self._tokens: dict[int, bool] = {}
        self._provenance = Provenance()
        self._event_device: str | None = None
        self.noise = random.Random(f"noise:{seed}")

        self.devices = {d.id: d for d in scenario.devices}
        self.physical: dict[str, dict] = {}
        self.reported: dict[str, dict] = {}
        for d in scenario.devices:
            spec = DEVICE_TYPES[d.type]
            values = {a.name: (a.bounds[0] if a.numeric else a.values[-1 if a.name == "mode" else 0])
                      for a in spec.attributes}
            values.update(_initial(d.type))
            values.update(d.attributes)
            self.physical[d.id] = dict(values)
            self.reported[d.id] = dict(values)
        self.by_zone: dict[str, list[str]] = {}
        for d in scenario.devices:
            self.by_zone.setdefault(d.zone, []).append(d.id)
        self.hub = next((d.id for d in scenario.devices if d.type == "hub"), None)
        self.entrance = next((d.id for d in scenario.devices if d.type == "lock" and d.zone == "lobby"), None)
        self.where: dict[str, str | None] = {}
        self.controllers = {u.id: u.controller for u in scenario.users}
        self.frozen: set[str] = set()
        self.diverged: set[str] = set()         # frozen devices whose true state moved away from the report
        self.held: set[str] = set()
        self.inverted: set[tuple[str, str]] = set()
        self.watchers: dict[str, str] = {}      # light id -> compromised camera id
        self.toggles: dict[str, list[int]] = {}
        self.day_peak: dict[int, float] = {}

    # -- Host protocol -----------------------------------------------------------

    def now(self) -> int:
        return self.clock

    def location_mode(self) -> str:
        return self.mode

    def set_mode(self, app: AppInstance, mode: str) -> None:
        if mode not in ("Office", "Other"):
            raise InterpreterError(f"unknown mode {mode!r}", app.origin)
        if mode == self.mode:
            return
        self.mode = mode
        if self.hub is not None:
            self.physical[self.hub]["mode"] = mode
            self._report(self.hub, "mode", mode, Provenance())
        self._push(self.clock, self._deliver_location, mode)

    def current_value(self, device_id: str, attribute: str):
        values = self.reported.get(device_id, {})
        return values.get(attribute)

    def device_commands(self, device_id: str) -> dict:
        return DEVICE_TYPES[self.devices[device_id].type].commands

    def command(self, app: AppInstance, device_id: str, command: str, args: tuple) -> None:
        self._actuate(device_id, command, Provenance())

    def message(self, app: AppInstance, api: str, recipient: str, text: str) -> None:
        pass

    def http(self, app: AppInstance, api: str, url: str, body) -> None:
        pass

    def schedule_in(self, app: AppInstance, seconds: float, method: str) -> None:
        key = (app.app_id, method)
        old = self.timers.get(key)
        if old is not None:
            self._tokens[old] = False
        token = self._push(self.clock + int(seconds * 1000), self._fire, app.app_id, method)
        self.timers[key] = token

    def schedule_cron(self, app: AppInstance, cron: str, method: str) -> None:
        try:
            spec = Cron.parse(cron)
        except CronError as exc:
            raise InterpreterError(str(exc), app.origin) from None
        key = (app.app_id, method)
        if key in self.crons:
            self._tokens[self.crons[key]] = False
        self._arm_cron(app.app_id, method, spec)

    def unschedule(self, app: AppInstance, method: str | None) -> None:
        for table in (self.timers, self.crons):
            for key in [k for k in table if k[0] == app.app_id and (method is None or k[1] == method)]:
                self._tokens[table.pop(key)] = False

    def subscribe(self, app: AppInstance, target, attribute: str, method: str) -> None:
        attr, _, value = attribute.partition(".")
        self.subs.append(_Sub(app.app_id, target, attr, value or None, method))

    def unsubscribe(self, app: AppInstance) -> None:
        self.subs = [s for s in self.subs if s.app_id != app.app_id]

    def log_iotdots(self, app: AppInstance, message: str) -> None:
        prov = self._provenance
        location = prov.location if prov.controller_id and prov.location else self.mode
        for kind, dev, attr, value in parse_log_message(message, self.devices, self._event_device):
            seq = self.seq.get(app.app_id, 0) + 1
            self.seq[app.app_id] = seq
            rec = LogRecord(self.clock, app.app_id, seq, kind, dev, attr, value, location, prov.controller_id)
            self.transports[app.app_id].send(rec, self.clock)

    # -- scheduling ---------------------------------------------------------------

    def _push(self, ts: int, fn, *args) -> int:
        self._counter += 1
        self._tokens[self._counter] = True
        heapq.heappush(self._heap, (ts, self._counter, fn, args))
        return self._counter

    def _fire(self, app_id: str, method: str) -> None:
        self.timers.pop((app_id, method), None)
        if app_id in self.apps:
            self._invoke(app_id, method, None, Provenance())

    def _arm_cron(self, app_id: str, method: str, spec: Cron) -> None:
        t = spec.next_after(self.clock, self.sc.start_weekday)
        if t is not None and t < self.sc.end:
            self.crons[(app_id, method)] = self._push(t, self._cron_fire, app_id, method, spec)

    def _cron_fire(self, app_id: str, method: str, spec: Cron) -> None:
        self.crons.pop((app_id, method), None)
        if app_id not in self.apps:
            return
        self._arm_cron(app_id, method, spec)
        self._invoke(app_id, method, None, Provenance())

    def _invoke(self, app_id: str, method: str, event: Event | None, prov: Provenance) -> None:
        app = self.apps[app_id]
        saved = self._provenance, self._event_device
        self._provenance = prov
        self._event_device = event.device_id if event is not None else None
        try:
            self.interp.eval_handler(app, method, event)
        finally:
            self._provenance, self._event_device = saved

    # -- devices ------------------------------------------------------------------------

    def _report(self, device_id: str, attribute: str, value, prov: Provenance, force: bool = False) -> None:
        if device_id in self.frozen:
            if self.reported[device_id].get(attribute) != value:
                self.diverged.add(device_id)
            return
        if not force and self.reported[device_id].get(attribute) == value:
            return
        self.reported[device_id][attribute] = value
        self._push(self.clock, self._deliver, device_id, attribute, value, prov)

    def _deliver(self, device_id: str, attribute: str, value, prov: Provenance) -> None:
        for sub in list(self.subs):
            if sub.target != device_id or sub.attribute != attribute or sub.app_id not in self.apps:
                continue
            shown = _invert(value) if (sub.app_id, device_id) in self.inverted else value
            if sub.value_filter is not None and str(shown) != sub.value_filter:
                continue
            self._invoke(sub.app_id, sub.handler, Event(device_id, attribute, shown, prov), prov)

    def _deliver_location(self, mode: str) -> None:
        for sub in list(self.subs):
            if sub.target == "location" and sub.attribute == "mode" and sub.app_id in self.apps:
                self._invoke(sub.app_id, sub.handler, Event("location", "mode", mode), Provenance())

    def _actuate(self, device_id: str, command: str, prov: Provenance) -> None:
        dev = self.devices[device_id]
        spec = DEVICE_TYPES[dev.type]
        if command not in spec.commands:
            raise InterpreterError(f"unknown command '{command}' for device {device_id}")
        attr, value = spec.commands[command]
        before = self.physical[device_id].get(attr)
        self.physical[device_id][attr] = value
        if dev.type == "camera" and attr == "switch":
            self._update_camera(device_id)
        # a command on an unchanged state still produces an event when issued by a person
        self._report(device_id, attr, value, prov, force=prov.controller_id is not None and before == value)
        if before != value and dev.type == "light":
            self._light_changed(device_id)

    # -- physics ------------------------------------------------------------------------

    def occupied(self, zone: str) -> bool:
        return any(z == zone for z in self.where.values())

    def _move(self, actor: str, zone: str | None) -> None:
        old = self.where.get(actor)
        if old == zone:
            return
        controller = self.controllers.get(actor)
        crossing = (old is None) != (zone is None)
        if crossing and controller and self.entrance and self.physical[self.entrance]["lock"] == "locked":
            self._actuate(self.entrance, "unlock", Provenance(controller, "Office", physical=True))
            self._push(self.clock + 30_000, self._relock_entrance, controller)
        self.where[actor] = zone
        for z in (old, zone):
            if z is not None:
                self._zone_changed(z)

    def _relock_entrance(self, controller: str) -> None:
        if self.mode == "Other" and self.physical[self.entrance]["lock"] == "unlocked":
            self._actuate(self.entrance, "lock", Provenance(controller, "Office", physical=True))

    def _zone_changed(self, zone: str) -> None:
        occ = self.occupied(zone)
        for dev_id in self.by_zone.get(zone, []):
            dtype = self.devices[dev_id].type
            if dtype == "motion-sensor":
                if occ and self.physical[dev_id]["motion"] != "active":
                    self.physical[dev_id]["motion"] = "active"
                    self._report(dev_id, "motion", "active", Provenance(physical=True))
                    self._motion_changed(zone)
                elif not occ:
                    self._push(self.clock + MOTION_TIMEOUT_MS, self._motion_timeout, zone)
            elif dtype == "door-sensor":
                self._push(self.clock + DOOR_DELAY_MS, self._door_update, dev_id)
        if occ:
            self._push(self.clock + FALLBACK_DELAY_MS, self._fallback, zone)

    def _motion_timeout(self, zone: str) -> None:
        if self.occupied(zone):
            return
        for dev_id in self.by_zone.get(zone, []):
            if self.devices[dev_id].type == "motion-sensor" and self.physical[dev_id]["motion"] == "active":
                self.physical[dev_id]["motion"] = "inactive"
                self._report(dev_id, "motion", "inactive", Provenance(physical=True))
        self._motion_changed(zone)

    def _motion_changed(self, zone: str) -> None:
        for dev_id in self.by_zone.get(zone, []):
            if self.devices[dev_id].type == "camera":
                self._update_camera(dev_id)

    def _update_camera(self, dev_id: str) -> None:
        zone = self.devices[dev_id].zone
        seen = any(self.physical[m]["motion"] == "active" for m in self.by_zone.get(zone, [])
                   if self.devices[m].type == "motion-sensor") or self.occupied(zone)
        state = "active" if seen and self.physical[dev_id]["switch"] == "on" else "idle"
        if self.physical[dev_id]["recording"] != state:
            self.physical[dev_id]["recording"] = state
            self._report(dev_id, "recording", state, Provenance(physical=True))

    def _door_update(self, dev_id: str) -> None:
        dev = self.devices[dev_id]
        occ = self.occupied(dev.zone)
        behavior = dev.attributes.get("contact", "closed")   # resting state when the zone is empty
        if behavior == "open":
            state = "closed" if occ else "open"
        else:
            state = "open" if occ else "closed"
        if self.physical[dev_id]["contact"] != state:
            self.physical[dev_id]["contact"] = state
            self._report(dev_id, "contact", state, Provenance(physical=True))

    def _fallback(self, zone: str) -> None:
        if not self.occupied(zone) or zone in self.held:
            return
        for dev_id in self.by_zone.get(zone, []):
            if self.devices[dev_id].type == "light" and self.physical[dev_id]["switch"] == "off":
                self._actuate(dev_id, "on", Provenance(physical=True))

    def _light_changed(self, light_id: str) -> None:
        zone = self.devices[light_id].zone
        for dev_id in self.by_zone.get(zone, []):
            if self.devices[dev_id].type == "light-sensor":
                self._lux_report(dev_id, force=True)
        if self.physical[light_id]["switch"] == "off" and self.occupied(zone):
            self._push(self.clock + FALLBACK_DELAY_MS, self._fallback, zone)
        cam = self.watchers.get(light_id)
        if cam is not None:
            hist = [t for t in self.toggles.get(light_id, []) if self.clock - t <= SIDE_CHANNEL_WINDOW_MS]
            hist.append(self.clock)
            self.toggles[light_id] = hist
            if len(hist) >= SIDE_CHANNEL_TOGGLES and self.physical[cam]["switch"] == "on":
                self._actuate(cam, "off", Provenance(physical=True))

    def temperature(self, ts: int) -> float:
        day = ts // DAY_MS
        if day not in self.day_peak:
            self.day_peak[day] = random.Random(f"weather:{self.seed}:{day}").uniform(9.0, 14.0)
        hour = (ts % DAY_MS) / 3_600_000
        bump = math.sin(math.pi * (hour - 8) / 12) if 8 <= hour <= 20 else 0.0
        return 68.0 + self.day_peak[day] * bump

    def daylight(self, ts: int) -> float:
        hour = (ts % DAY_MS) / 3_600_000
        return 250.0 * math.sin(math.pi * (hour - 6) / 14) if 6 <= hour <= 20 else 0.0

    def _temp_report(self, dev_id: str) -> None:
        zone = self.sc.zone(self.devices[dev_id].zone)
        heat = zone.heat if zone is not None else 0.0
        value = round(self.temperature(self.clock) + heat + self.noise.uniform(-0.5, 0.5), 1)
        self.physical[dev_id]["temperature"] = value
        self._report(dev_id, "temperature", value, Provenance(), force=True)
        if self.clock + TEMP_PERIOD_MS < self.sc.end:
            self._push(self.clock + TEMP_PERIOD_MS, self._temp_report, dev_id)

    def _lux_report(self, dev_id: str, force: bool = False) -> None:
        zone = self.devices[dev_id].zone
        lit = any(self.physical[l]["switch"] == "on" for l in self.by_zone.get(zone, [])
                  if self.devices[l].type == "light")
        value = round(self.daylight(self.clock) + (LIGHT_LUX if lit else 0.0) + self.noise.uniform(-0.5, 0.5))
        value = max(0, value)
        self.physical[dev_id]["illuminance"] = value
        self._report(dev_id, "illuminance", value, Provenance(), force=True)

    def _lux_periodic(self, dev_id: str) -> None:
        self._lux_report(dev_id)
        if self.clock + LUX_PERIOD_MS < self.sc.end:
            self._push(self.clock + LUX_PERIOD_MS, self._lux_periodic, dev_id)

    # -- timeline -----------------------------------------------------------------------

    def _timeline(self, ev: TimelineEvent) -> None:
        p = ev.params
        if ev.action == "move":
            self._move(ev.actor, p.get("zone"))
        elif ev.action == "command":
            location = "Other" if p.get("remote") else "Office"
            self._actuate(p["device"], p["command"],
                          Provenance(p.get("controller") or self.controllers.get(ev.actor), location))
        elif ev.action == "physical":
            self._actuate(p["device"], p["command"], Provenance(physical=True))
        elif ev.action == "pin":
            controller = p.get("controller") or self.controllers.get(ev.actor)
            self._actuate(p["device"], p.get("command", "unlock"), Provenance(controller, "Office", physical=True))

    # -- apps ----------------------------------------------------------------------------

    def install(self, binding: AppBinding) -> None:
        ast = self.sources.get(binding.source)
        if ast is None:
            raise InterpreterError(f"no source loaded for app {binding.source!r}", binding.id)
        settings = {}
        for decl in ast.inputs:
            if decl.name in binding.devices:
                ref = binding.devices[decl.name]
                allowed = CAPABILITIES.get(decl.input_type)
                refs = ref if isinstance(ref, list) else [ref]
                for r in refs:
                    if allowed is not None and self.devices[r].type not in allowed:
                        raise InterpreterError(f"device {r} does not provide {decl.input_type}", ast.origin,
                                               decl.span)
                if decl.multiple or isinstance(ref, list):
                    settings[decl.name] = DeviceGroup(DeviceRef(r) for r in refs)
                else:
                    settings[decl.name] = DeviceRef(ref)
            elif decl.name in binding.settings:
                settings[decl.name] = binding.settings[decl.name]
            elif decl.default is not None:
                settings[decl.name] = decl.default
            elif decl.required and decl.is_device:
                raise InterpreterError(f"required input '{decl.name}' is not bound", ast.origin, decl.span)
        for key in binding.settings:
            if ast.input(key) is None:
                raise InterpreterError(f"app has no input '{key}'", ast.origin)
        app = AppInstance(binding.id, ast, settings)
        self.apps[binding.id] = app
        self.transports[binding.id] = Transport(binding.id, self._sink, self.batch_size, self.interval_ms)
        saved = self._provenance
        self._provenance = Provenance()
        try:
            self.interp.run_preferences(app)
            if ast.method("installed") is not None:
                self.interp.eval_handler(app, "installed")
        finally:
            self._provenance = saved

    def uninstall(self, app_id: str) -> None:
        app = self.apps.get(app_id)
        if app is None:
            return
        self.unsubscribe(app)
        self.unschedule(app, None)
        del self.apps[app_id]

    def _sink(self, batch: Batch) -> None:
        self.batches.append(batch)
        if self._external_sink is not None:
            self._external_sink(batch)

    # -- threats -------------------------------------------------------------------------

    def _arm_threats(self) -> None:
        for t in self.sc.threats:
            p = t.params
            if t.threat == "Activity-1":
                self._push(t.start, self.held.add, p["zone"])
                self._push(t.end, self._release, p["zone"])
            elif t.threat == "Behavior-1":
                self._push(t.start, self.frozen.update, list(p["devices"]))
                self._push(t.end, self.frozen.difference_update, list(p["devices"]))
            elif t.threat == "Behavior-3":
                key = (p["app"], p["device"])
                self._push(t.start, self.inverted.add, key)
                self._push(t.end, self.inverted.discard, key)
            elif t.threat == "Behavior-4":
                binding = AppBinding(p["app"], p["source"], {"temp1": p["temp"], "thermostat1": p["thermostat"]},
                                     {"trigger": p["trigger"]})
                self._push(t.start, self.install, binding)
                self._push(t.end, self.uninstall, p["app"])
            elif t.threat == "Behavior-5":
                binding = AppBinding(p["app"], p["source"], {"light1": p["light"]}, {"blinks": p["toggles"]})
                self._push(t.start, self.watchers.__setitem__, p["light"], p["camera"])
                self._push(t.start, self.install, binding)
                self._push(t.end, self.uninstall, p["app"])
                self._push(t.end, self.watchers.pop, p["light"], None)

    def _release(self, zone: str) -> None:
        self.held.discard(zone)
        self._push(self.clock + FALLBACK_DELAY_MS, self._fallback, zone)

    # -- main loop -----------------------------------------------------------------------

    def run(self) -> None:
        for binding in self.sc.apps:
            self.install(binding)
        for i, dev_id in enumerate(sorted(self.devices)):
            dtype = self.devices[dev_id].type
            if dtype == "temperature-sensor":
                self._push(i * 17_000, self._temp_report, dev_id)
            elif dtype == "light-sensor":
                self._push(i * 13_000, self._lux_periodic, dev_id)
            # configured resting values are announced once so observers do not assume the default
            for attr, value in sorted(self.devices[dev_id].attributes.items()):
                self._push(i * 1_000, self._report, dev_id, attr, value, Provenance(physical=True), True)
        for ev in generate_routine(self.sc, self.seed):
            self._push(ev.ts, self._timeline, ev)
        self._arm_threats()
        end = self.sc.end
        while self._heap:
            ts, token, fn, args = self._heap[0]
            if ts >= end:
                break
            self._flush_due(ts)
            heapq.heappop(self._heap)
            if not self._tokens.pop(token, False):
                continue
            self.clock = ts
            fn(*args)
        self._flush_due(end)
        self.clock = end
        for transport in self.transports.values():
            transport.close(end)

    def _flush_due(self, until: int) -> None:
        while True:
            due = [(t.next_deadline(), app_id) for app_id, t in self.transports.items()
                   if t.next_deadline() is not None and t.next_deadline() <= until]
            if not due:
                return
            deadline, app_id = min(due)
            self.transports[app_id].tick(deadline)


def _initial(dtype: str) -> dict:
    return {
        "hub": {"mode": "Other"},
        "light": {"switch": "off"},
        "lock": {"lock": "locked"},
        "fire-alarm": {"smoke": "clear"},
        "camera": {"switch": "on", "recording": "idle"},
        "thermostat": {"thermostatOperatingState": "idle"},
        "motion-sensor": {"motion": "inactive"},
        "light-sensor": {"illuminance": 0.0},
        "temperature-sensor": {"temperature": 68.0},
        "door-sensor": {"contact": "closed"},
    }[dtype]


_INVERSE = {"active": "inactive", "inactive": "active", "on": "off", "off": "on", "open": "closed",
            "closed": "open", "locked": "unlocked", "unlocked": "locked"}


def _invert(value):
    return _INVERSE.get(value, value) if isinstance(value, str) else value


# -- user routines -----------------------------------------------------------------------

def _clock(text: str) -> int:
    return parse_clock(text, "")


def generate_routine(sc: Scenario, seed: int) -> list[TimelineEvent]:
    """Scripted daily routines for every user, merged with the explicit timeline."""
    events: list[TimelineEvent] = []
    lights_by_zone: dict[str, list[str]] = {}
    for d in sc.devices:
        if d.type == "light":
            lights_by_zone.setdefault(d.zone, []).append(d.id)
    late_overrides = {}
    for t in sc.threats:
        if t.threat == "Activity-4":
            late_overrides[(t.start // DAY_MS, t.params["user"])] = (t.start, t.end, t.params["zone"])
    # people and rooms used by injected activity are kept out of routine plans around it
    scripted_busy: dict[str, list[tuple[int, int]]] = {}
    reserved: list[tuple[int, int]] = []
    for t in sc.threats:
        lo, hi = t.start - 300_000, t.end + 300_000
        for ev in sc.timeline:
            if lo <= ev.ts <= hi:
                scripted_busy.setdefault(ev.actor, []).append((lo, hi))
                if ev.action == "move" and ev.params.get("zone") == "meeting-room":
                    reserved.append((lo, hi))
    server = next((z for z in sc.zones if z.restricted), None)
    server_lock = next((d.id for d in sc.devices if server and d.zone == server.name and d.type == "lock"), None)
    rt = sc.routine
    for day in range(sc.days):
        if sc.weekday(day) >= 5 and not rt.weekend_work:
            continue
        rng = random.Random(f"routine:{seed}:{day}")
        base = day * DAY_MS
        day_events: list[TimelineEvent] = []
        span: dict[str, tuple[int, int]] = {}
        busy: dict[str, list[tuple[int, int]]] = {}
        for u in sc.users:
            if u.role == "reception":
                arrive = rng.randint(_clock("07:30"), _clock("08:00"))
                leave = rng.randint(_clock("17:00"), _clock("17:30"))
            else:
                arrive = rng.randint(*rt.arrive)
                leave = rng.randint(*rt.leave)
                if rng.random() < rt.late_probability:
                    leave = rng.randint(*rt.late)
            override = late_overrides.get((day, u.id))
            if override is not None:
                leave = max(leave, override[1] - base + 60_000)
            span[u.id] = (arrive, leave)
            busy[u.id] = [(a - base, b - base) for a, b in scripted_busy.get(u.id, ())]
            day_events += [TimelineEvent(base + arrive, u.id, "move", {"zone": "lobby"}),
                           TimelineEvent(base + arrive + 20_000, u.id, "move", {"zone": u.home}),
                           TimelineEvent(base + leave, u.id, "move", {"zone": "lobby"}),
                           TimelineEvent(base + leave + 20_000, u.id, "move", {"zone": None})]
            if override is not None:
                start, _, zone = override
                day_events.append(TimelineEvent(start, u.id, "move", {"zone": zone}))
                busy[u.id].append((start - base - 600_000, override[1] - base))

        def free(uid: str, a: int, b: int) -> bool:
            lo, hi = span[uid]
            return lo + 60_000 <= a and b <= hi - 60_000 and all(b <= s or a >= e for s, e in busy[uid])

        staff = [u for u in sc.users if u.role != "reception"]
        # meetings
        t = _clock("09:30")
        for _ in range(rng.randint(*rt.meetings)):
            start = t + rng.randrange(0, 7_200_000, 300_000)
            if start > _clock("16:00"):
                break
            end = start + rng.choice((30, 45, 60)) * 60_000
            if any(base + start - 300_000 < b and a < base + end + 300_000 for a, b in reserved):
                t = end + 900_000
                continue
            pool = [u for u in staff if free(u.id, start - 300_000, end + 300_000)]
            want = rng.randint(2, 5)
            if len(pool) >= 2:
                attendees = rng.sample(pool, min(want, len(pool)))
                for u in attendees:
                    day_events.append(TimelineEvent(base + start + rng.randint(0, 120_000), u.id, "move",
                                                    {"zone": "meeting-room"}))
                    day_events.append(TimelineEvent(base + end + rng.randint(0, 60_000), u.id, "move",
                                                    {"zone": u.home}))
                    busy[u.id].append((start, end + 60_000))
            t = end + 900_000
        # restricted-zone visits by the manager
        for u in sc.users:
            if u.role != "manager" or server is None or server_lock is None or u.id not in server.authorized:
                continue
            for _ in range(rng.randint(*rt.server_visits)):
                start = rng.randint(_clock("10:00"), _clock("16:30"))
                dur = rng.randint(600_000, 1_200_000)
                if not free(u.id, start, start + dur):
                    continue
                day_events += [
                    TimelineEvent(base + start, u.id, "pin", {"device": server_lock, "command": "unlock"}),
                    TimelineEvent(base + start + 5_000, u.id, "move", {"zone": server.name}),
                    TimelineEvent(base + start + dur, u.id, "move", {"zone": u.home}),
                ]
                busy[u.id].append((start, start + dur))
            if lights_by_zone.get("lobby") and rng.random() < rt.remote_light_probability:
                at = _clock("07:20") + rng.randint(-300_000, 300_000)
                day_events.append(TimelineEvent(base + at, u.id, "command",
                                                {"device": lights_by_zone["lobby"][0], "command": "on",
                                                 "remote": True}))
        # short lobby trips
        for u in staff:
            for _ in range(rng.randint(*rt.lobby_trips)):
                lo, hi = span[u.id]
                if hi - lo < 3_600_000:
                    continue
                start = rng.randint(lo + 1_800_000, hi - 1_800_000)
                dur = rng.randint(120_000, 300_000)
                if not free(u.id, start, start + dur):
                    continue
                day_events += [TimelineEvent(base + start, u.id, "move", {"zone": "lobby"}),
                               TimelineEvent(base + start + dur, u.id, "move", {"zone": u.home})]
                busy[u.id].append((start, start + dur))
        # the last person leaving a zone switches its light off from their controller
        last: dict[str, tuple[int, str]] = {}
        for u in sc.users:
            leave = span[u.id][1]
            if u.home in lights_by_zone and (u.home not in last or leave > last[u.home][0]):
                last[u.home] = (leave, u.id)
        for zone, (leave, uid) in sorted(last.items()):
            for light in lights_by_zone[zone]:
                day_events.append(TimelineEvent(base + leave - 5_000, uid, "command",
                                                {"device": light, "command": "off"}))
        events += day_events
    events += list(sc.timeline)
    return sorted(events, key=lambda e: e.ts)


def run(scenario: Scenario, apps: dict[str, A.SmartAppAst] | None = None, seed: int | None = None,
        allow_plain: bool = False, sink: Callable[[Batch], object] | None = None,
        batch_size: int = BATCH_SIZE, interval_ms: int = FLUSH_INTERVAL_MS) -> RunOutput:
    """Simulate ``scenario`` and return its forensic logs, truth labels and side effects."""
    seed = scenario.seed if seed is None else seed
    if apps is None:
        apps = prepare_apps(scenario, instrumented=not allow_plain)
    if not allow_plain:
        for name, ast in apps.items():
            if not is_instrumented(ast):
                raise PlainAppError(f"app {name!r} is not instrumented (pass allow_plain to run it anyway)")
    sim = Simulator(scenario, apps, seed, sink, batch_size, interval_ms)
    sim.run()
    logs = sorted((r for b in sim.batches for r in b.records), key=lambda r: r.sort_key)
    truth = tuple(replace(t, detail={**t.detail, "diverged": sorted(sim.diverged & set(t.detail.get("devices", ())))})
                  if t.label == "Behavior-1" else t for t in scenario.truth)
    return RunOutput(logs, truth, list(sim.interp.effects), len(sim.batches), sim.batches, seed,
                     scenario)
