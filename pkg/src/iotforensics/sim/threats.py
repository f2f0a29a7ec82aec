"""Threat catalog: amend a scenario's timeline and ground truth."""
from __future__ import annotations

import random
from dataclasses import replace

from .scenario import DAY_MS, Scenario, ThreatInjection, TimelineEvent, TruthLabel, parse_clock

ACTIVITIES = tuple(f"Activity-{i}" for i in range(1, 6))
BEHAVIORS = tuple(f"Behavior-{i}" for i in range(1, 6))
THREATS = ACTIVITIES + BEHAVIORS
TIME_DEPENDENT = ("Activity-4", "Activity-5")
BENIGN = "Benign"

_ALIASES = {f"A{i}": f"Activity-{i}" for i in range(1, 6)} | {f"B{i}": f"Behavior-{i}" for i in range(1, 6)}

# per-threat parameters and defaults; None means "derived from the scenario"
DEFAULTS: dict[str, dict] = {
    "Activity-1": {"day": 0, "at": "10:30", "duration": 600, "device": "light-open", "actor": None},
    "Activity-2": {"day": 0, "at": "23:00", "duration": 600, "device": "thermostat-1", "command": "cool",
                   "controller": None},
    "Activity-3": {"day": 0, "at": "14:00", "duration": 600, "lock": "lock-server", "user": None},
    "Activity-4": {"day": 0, "at": "20:45", "duration": 900, "user": None, "zone": None},
    "Activity-5": {"day": 0, "at": "20:45", "duration": 600, "lock": "lock-entrance", "user": None},
    "Behavior-1": {"day": 0, "at": "06:00", "duration": None, "devices": None, "k": 0, "choice_seed": 0},
    "Behavior-2": {"day": 0, "at": "13:00", "duration": 600, "lock": "lock-server", "controller": "ctl-x99"},
    "Behavior-3": {"day": 0, "at": "11:00", "duration": 1800, "app": "lights-meeting",
                   "device": "motion-meeting", "attendees": 3},
    "Behavior-4": {"day": 0, "at": "15:00", "duration": 1800, "source": "energy-saver",
                   "app": "energy-saver-x", "temp": "temp-open", "thermostat": "thermostat-1",
                   "trigger": 75},
    "Behavior-5": {"day": 0, "at": "16:00", "duration": 300, "source": "light-signal", "app": "light-show-x",
                   "light": "light-lobby", "camera": "camera-lobby", "toggles": 6},
}


class UnknownThreat(KeyError):
    def __str__(self) -> str:
        return f"unknown threat {self.args[0]!r}; expected one of {', '.join(THREATS)}"


class ParamError(ValueError):
    pass


def canonical(threat_id: str) -> str:
    tid = _ALIASES.get(threat_id, threat_id)
    if tid not in THREATS:
        raise UnknownThreat(threat_id)
    return tid


def _device(sc: Scenario, dev_id, name: str, kind: str | None = None) -> str:
    dev = sc.device(dev_id) if isinstance(dev_id, str) else None
    if dev is None:
        raise ParamError(f"{name}: unknown device {dev_id!r}")
    if kind is not None and dev.type != kind:
        raise ParamError(f"{name}: {dev_id} is a {dev.type}, expected {kind}")
    return dev_id


def _user(sc: Scenario, user_id, name: str) -> str:
    if sc.user(user_id) is None:
        raise ParamError(f"{name}: unknown user {user_id!r}")
    return user_id


def _staff(sc: Scenario) -> list:
    staff = [u for u in sc.users if u.role == "staff"]
    return staff or list(sc.users)


def _resolve(sc: Scenario, tid: str, params: dict) -> dict:
    unknown = set(params) - set(DEFAULTS[tid])
    if unknown:
        raise ParamError(f"{tid}: unknown parameter {sorted(unknown)[0]!r}")
    p = dict(DEFAULTS[tid]) | params
    if not sc.users and tid in ("Activity-1", "Activity-2", "Activity-3", "Activity-4", "Activity-5"):
        raise ParamError(f"{tid} needs at least one user")
    if tid == "Activity-1" and p["actor"] is None:
        p["actor"] = _staff(sc)[0].id
    if tid == "Activity-2" and p["controller"] is None:
        p["controller"] = sc.users[-1].controller
    if tid == "Activity-3" and p["user"] is None:
        lock = sc.device(p["lock"])
        zone = sc.zone(lock.zone) if lock else None
        allowed = zone.authorized if zone else ()
        candidates = [u for u in sc.users if u.id not in allowed]
        if not candidates:
            raise ParamError(f"{tid}: every user is authorized for the zone")
        p["user"] = candidates[-1].id
    if tid in ("Activity-4", "Activity-5") and p["user"] is None:
        p["user"] = _staff(sc)[-1].id
    if tid == "Activity-4" and p["zone"] is None:
        p["zone"] = sc.user(p["user"]).home
    return p


def _window(sc: Scenario, tid: str, p: dict) -> tuple[int, int]:
    day = p["day"]
    if not isinstance(day, int) or not 0 <= day < sc.days:
        raise ParamError(f"{tid}: day {day!r} outside the scenario's {sc.days} day(s)")
    try:
        start = day * DAY_MS + parse_clock(p["at"], "at")
    except ValueError as exc:
        raise ParamError(f"{tid}: {exc}") from None
    duration = p["duration"]
    if duration is None:
        end = (day + 1) * DAY_MS
    else:
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise ParamError(f"{tid}: duration must be a positive number of seconds")
        end = start + int(duration * 1000)
    if end > sc.end:
        raise ParamError(f"{tid}: window ends past the end of the timeline")
    return start, end


def inject_threat(sc: Scenario, threat_id: str, params: dict | None = None) -> Scenario:
    tid = canonical(threat_id)
    p = _resolve(sc, tid, dict(params or {}))
    start, end = _window(sc, tid, p)
    events: list[TimelineEvent] = []
    detail: dict = {}

    if tid == "Activity-1":
        dev = _device(sc, p["device"], "device", "light")
        zone = sc.device(dev).zone
        _user(sc, p["actor"], "actor")
        events.append(TimelineEvent(start, p["actor"], "move", {"zone": zone}))
        events.append(TimelineEvent(start + 2000, p["actor"], "physical", {"device": dev, "command": "off"}))
        p["zone"] = zone
        detail = {"device": dev, "zone": zone, "actor": p["actor"]}
    elif tid == "Activity-2":
        dev = _device(sc, p["device"], "device")
        if p["command"] not in sc.device(dev).commands:
            raise ParamError(f"{tid}: {dev} has no command {p['command']!r}")
        events.append(TimelineEvent(start, p["controller"], "command",
                                    {"device": dev, "command": p["command"], "remote": True,
                                     "controller": p["controller"]}))
        detail = {"device": dev, "controller": p["controller"]}
    elif tid in ("Activity-3", "Behavior-2"):
        lock = _device(sc, p["lock"], "lock", "lock")
        zone = sc.device(lock).zone
        if tid == "Activity-3":
            user = sc.user(_user(sc, p["user"], "user"))
            actor, controller = user.id, user.controller
        else:
            if any(u.controller == p["controller"] for u in sc.users):
                raise ParamError(f"{tid}: controller {p['controller']!r} is registered")
            actor, controller = "intruder", p["controller"]
        events.append(TimelineEvent(start, actor, "pin", {"device": lock, "command": "unlock",
                                                         "controller": controller}))
        events.append(TimelineEvent(start + 5000, actor, "move", {"zone": zone}))
        stay = min(300_000, (end - start) // 2)
        leave = sc.user(actor).home if sc.user(actor) else None
        events.append(TimelineEvent(start + 5000 + stay, actor, "move", {"zone": leave}))
        detail = {"lock": lock, "zone": zone, "controller": controller, "actor": actor}
    elif tid == "Activity-4":
        user = _user(sc, p["user"], "user")
        if sc.zone(p["zone"]) is None:
            raise ParamError(f"{tid}: unknown zone {p['zone']!r}")
        detail = {"user": user, "zone": p["zone"]}
    elif tid == "Activity-5":
        lock = _device(sc, p["lock"], "lock", "lock")
        user = sc.user(_user(sc, p["user"], "user"))
        zone = sc.device(lock).zone
        events.append(TimelineEvent(start, user.id, "pin", {"device": lock, "command": "unlock",
                                                           "controller": user.controller}))
        events.append(TimelineEvent(start + 5000, user.id, "move", {"zone": zone}))
        events.append(TimelineEvent(start + 65_000, user.id, "move", {"zone": None}))
        events.append(TimelineEvent(start + 95_000, user.id, "pin", {"device": lock, "command": "lock",
                                                                    "controller": user.controller}))
        detail = {"lock": lock, "user": user.id, "controller": user.controller}
    elif tid == "Behavior-1":
        devices = p["devices"]
        if devices is None:
            k = p["k"]
            if not isinstance(k, int) or not 0 <= k <= len(sc.devices):
                raise ParamError(f"{tid}: k must be in 0..{len(sc.devices)}")
            pool = sorted(d.id for d in sc.devices)
            devices = sorted(random.Random(p["choice_seed"]).sample(pool, k))
        for d in devices:
            _device(sc, d, "devices")
        if not devices:
            return sc
        p["devices"] = list(devices)
        detail = {"devices": list(devices)}
    elif tid == "Behavior-3":
        if not any(a.id == p["app"] for a in sc.apps):
            raise ParamError(f"{tid}: unknown app {p['app']!r}")
        dev = _device(sc, p["device"], "device")
        zone = sc.device(dev).zone
        people = _staff(sc)[: max(0, int(p["attendees"]))]
        for i, u in enumerate(people):
            events.append(TimelineEvent(start + 60_000 + i * 20_000, u.id, "move", {"zone": zone}))
        back = start + min(end - start - 120_000, 20 * 60_000)
        for i, u in enumerate(people):
            events.append(TimelineEvent(back + i * 15_000, u.id, "move", {"zone": u.home}))
        detail = {"app": p["app"], "device": dev}
    elif tid == "Behavior-4":
        _device(sc, p["temp"], "temp", "temperature-sensor")
        _device(sc, p["thermostat"], "thermostat", "thermostat")
        detail = {"app": p["app"], "device": p["thermostat"]}
    elif tid == "Behavior-5":
        _device(sc, p["light"], "light", "light")
        _device(sc, p["camera"], "camera", "camera")
        detail = {"app": p["app"], "light": p["light"], "camera": p["camera"]}

    timeline = tuple(sorted(sc.timeline + tuple(events), key=lambda e: e.ts))
    threat = ThreatInjection(tid, start, end, p)
    truth = TruthLabel(tid, start, end, detail)
    return replace(sc, timeline=timeline, threats=sc.threats + (threat,), truth=sc.truth + (truth,))
