"""Scenario model and YAML loader."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from ..devices import DEVICE_TYPES, device_type

DAY_MS = 86_400_000
WEEKDAYS = ("MON", "TUE", "WED", "THU", "FRI", "SAT", "SUN")
BUNDLED_SCENARIOS = ("office-baseline", "minimal")


class SchemaError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def parse_clock(value, path: str) -> int:
    """'HH:MM' or 'HH:MM:SS' -> ms since midnight."""
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, str):
        raise SchemaError(path, f"expected a time of day, got {value!r}")
    parts = value.split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise SchemaError(path, f"bad time of day {value!r}") from None
    if len(nums) not in (2, 3) or not (0 <= nums[0] <= 24 and 0 <= nums[1] < 60):
        raise SchemaError(path, f"bad time of day {value!r}")
    h, m = nums[0], nums[1]
    s = nums[2] if len(nums) == 3 else 0
    return ((h * 60 + m) * 60 + s) * 1000


def format_clock(ms: int) -> str:
    day, rest = divmod(ms, DAY_MS)
    h, rest = divmod(rest, 3_600_000)
    m, rest = divmod(rest, 60_000)
    text = f"{h:02d}:{m:02d}:{rest // 1000:02d}"
    return f"d{day} {text}" if day else text


@dataclass(frozen=True)
class Zone:
    name: str
    restricted: bool = False
    authorized: tuple[str, ...] = ()     # user ids allowed in a restricted zone
    heat: float = 0.0                    # degrees F the zone runs above the building temperature


@dataclass(frozen=True)
class DeviceModel:
    id: str
    type: str
    zone: str
    attributes: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def spec(self):
        return device_type(self.type)

    @property
    def commands(self) -> dict:
        return self.spec.commands


@dataclass(frozen=True)
class User:
    id: str
    controller: str
    home: str
    role: str = "staff"     # staff | manager | reception


@dataclass(frozen=True)
class AppBinding:
    id: str
    source: str                 # bundled app name or a file path
    devices: dict = field(default_factory=dict, compare=False, hash=False)   # input -> id or [ids]
    settings: dict = field(default_factory=dict, compare=False, hash=False)  # input -> literal


@dataclass(frozen=True)
class TimelineEvent:
    ts: int
    actor: str
    action: str                 # move | command | physical | pin
    params: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class ThreatInjection:
    threat: str
    start: int
    end: int
    params: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class TruthLabel:
    label: str                  # threat class, e.g. Activity-4
    start: int
    end: int
    detail: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class Routine:
    arrive: tuple[int, int] = (parse_clock("07:30", ""), parse_clock("09:30", ""))
    leave: tuple[int, int] = (parse_clock("16:30", ""), parse_clock("19:30", ""))
    late: tuple[int, int] = (parse_clock("20:00", ""), parse_clock("21:30", ""))
    late_probability: float = 0.004
    meetings: tuple[int, int] = (1, 3)
    server_visits: tuple[int, int] = (1, 2)
    remote_light_probability: float = 0.5
    lobby_trips: tuple[int, int] = (0, 2)
    weekend_work: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    days: int
    start_weekday: int
    zones: tuple[Zone, ...]
    devices: tuple[DeviceModel, ...]
    users: tuple[User, ...]
    apps: tuple[AppBinding, ...]
    routine: Routine = Routine()
    policy: dict = field(default_factory=dict, compare=False, hash=False)
    timeline: tuple[TimelineEvent, ...] = ()
    threats: tuple[ThreatInjection, ...] = ()
    truth: tuple[TruthLabel, ...] = ()
    seed: int = 0

    @property
    def end(self) -> int:
        return self.days * DAY_MS

    def device(self, device_id: str) -> DeviceModel | None:
        return next((d for d in self.devices if d.id == device_id), None)

    def zone(self, name: str) -> Zone | None:
        return next((z for z in self.zones if z.name == name), None)

    def user(self, user_id: str) -> User | None:
        return next((u for u in self.users if u.id == user_id), None)

    def weekday(self, day: int) -> int:
        return (self.start_weekday + day) % 7

    def with_users(self, n: int) -> Scenario:
        """Keep the first ``n`` users (roles of dropped users are not reassigned)."""
        return replace(self, users=self.users[:n])

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- loading ------------------------------------------------------------------

_TOP_KEYS = {"name", "days", "start_weekday", "seed", "zones", "devices", "users", "apps",
             "routine", "policy", "timeline", "threats"}


def _require(d: dict, key: str, path: str, kind=None):
    if key not in d:
        raise SchemaError(f"{path}.{key}" if path else key, "required field missing")
    value = d[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}" if path else key,
                          f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    extra = set(d) - allowed
    if extra:
        key = sorted(extra)[0]
        raise SchemaError(f"{path}.{key}" if path else key, "unknown field")


def _range(value, path: str) -> tuple[int, int]:
    if not isinstance(value, list) or len(value) != 2:
        raise SchemaError(path, "expected a [start, end] pair")
    lo, hi = parse_clock(value[0], f"{path}[0]"), parse_clock(value[1], f"{path}[1]")
    if hi < lo:
        raise SchemaError(path, "range end before start")
    return lo, hi


def _count_range(value, path: str) -> tuple[int, int]:
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, int) and v >= 0 for v in value) or value[1] < value[0]):
        raise SchemaError(path, "expected a [min, max] pair of non-negative integers")
    return value[0], value[1]


def _routine(d: dict, path: str) -> Routine:
    if not isinstance(d, dict):
        raise SchemaError(path, "expected a mapping")
    _check_keys(d, set(Routine.__dataclass_fields__), path)
    kw = {}
    for key in ("arrive", "leave", "late"):
        if key in d:
            kw[key] = _range(d[key], f"{path}.{key}")
    for key in ("meetings", "server_visits", "lobby_trips"):
        if key in d:
            kw[key] = _count_range(d[key], f"{path}.{key}")
    for key in ("late_probability", "remote_light_probability"):
        if key in d:
            v = d[key]
            if not isinstance(v, (int, float)) or not 0 <= v <= 1:
                raise SchemaError(f"{path}.{key}", "expected a probability in [0, 1]")
            kw[key] = float(v)
    if "weekend_work" in d:
        kw["weekend_work"] = bool(d["weekend_work"])
    return Routine(**kw)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError("$", "scenario document must be a mapping")
    _check_keys(doc, _TOP_KEYS, "")
    name = _require(doc, "name", "", str)
    days = doc.get("days", 1)
    if not isinstance(days, int) or isinstance(days, bool) or days < 1:
        raise SchemaError("days", "expected a positive integer")
    start_weekday = doc.get("start_weekday", 0)
    if isinstance(start_weekday, str):
        if start_weekday.upper()[:3] not in WEEKDAYS:
            raise SchemaError("start_weekday", f"unknown weekday {start_weekday!r}")
        start_weekday = WEEKDAYS.index(start_weekday.upper()[:3])
    if not isinstance(start_weekday, int) or not 0 <= start_weekday < 7:
        raise SchemaError("start_weekday", "expected 0..6 or a weekday name")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise SchemaError("seed", "expected an integer")

    zones = []
    for i, z in enumerate(_require(doc, "zones", "", list)):
        p = f"zones[{i}]"
        if isinstance(z, str):
            z = {"name": z}
        if not isinstance(z, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(z, {"name", "restricted", "authorized", "heat"}, p)
        heat = z.get("heat", 0.0)
        if isinstance(heat, bool) or not isinstance(heat, (int, float)):
            raise SchemaError(f"{p}.heat", "expected a number")
        zones.append(Zone(_require(z, "name", p, str), bool(z.get("restricted", False)),
                          tuple(z.get("authorized", ())), float(heat)))
    zone_names = {z.name for z in zones}
    if len(zone_names) != len(zones):
        raise SchemaError("zones", "duplicate zone name")

    devices = []
    for i, d in enumerate(_require(doc, "devices", "", list)):
        p = f"devices[{i}]"
        if not isinstance(d, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(d, {"id", "type", "zone", "attributes"}, p)
        dev_id = _require(d, "id", p, str)
        dtype = _require(d, "type", p, str)
        if dtype not in DEVICE_TYPES:
            raise SchemaError(f"{p}.type", f"unknown device type {dtype!r}")
        zone = _require(d, "zone", p, str)
        if zone not in zone_names:
            raise SchemaError(f"{p}.zone", f"unknown zone {zone!r}")
        attrs = dict(d.get("attributes", {}))
        spec = DEVICE_TYPES[dtype]
        for key, value in attrs.items():
            a = spec.attribute(key)
            if a is None:
                raise SchemaError(f"{p}.attributes.{key}", f"{dtype} has no attribute {key!r}")
            if not a.accepts(value):
                raise SchemaError(f"{p}.attributes.{key}", f"value {value!r} out of range")
        devices.append(DeviceModel(dev_id, dtype, zone, attrs))
    ids = [d.id for d in devices]
    if len(set(ids)) != len(ids):
        raise SchemaError("devices", "duplicate device id")

    users = []
    for i, u in enumerate(doc.get("users", [])):
        p = f"users[{i}]"
        if not isinstance(u, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(u, {"id", "controller", "home", "role"}, p)
        home = _require(u, "home", p, str)
        if home not in zone_names:
            raise SchemaError(f"{p}.home", f"unknown zone {home!r}")
        role = u.get("role", "staff")
        if role not in ("staff", "manager", "reception"):
            raise SchemaError(f"{p}.role", f"unknown role {role!r}")
        users.append(User(_require(u, "id", p, str), _require(u, "controller", p, str), home, role))

    apps = []
    for i, a in enumerate(_require(doc, "apps", "", list)):
        p = f"apps[{i}]"
        if not isinstance(a, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(a, {"id", "source", "devices", "settings"}, p)
        bound = a.get("devices", {}) or {}
        settings = a.get("settings", {}) or {}
        if not isinstance(bound, dict):
            raise SchemaError(f"{p}.devices", "expected a mapping")
        if not isinstance(settings, dict):
            raise SchemaError(f"{p}.settings", "expected a mapping")
        for key, value in bound.items():
            refs = value if isinstance(value, list) else [value]
            for j, ref in enumerate(refs):
                if ref not in ids:
                    suffix = f"[{j}]" if isinstance(value, list) else ""
                    raise SchemaError(f"{p}.devices.{key}{suffix}",
                                      f"bound device {ref!r} is not in the topology")
        apps.append(AppBinding(_require(a, "id", p, str), _require(a, "source", p, str), bound, settings))
    if len({a.id for a in apps}) != len(apps):
        raise SchemaError("apps", "duplicate app id")

    routine = _routine(doc.get("routine", {}), "routine")
    policy = doc.get("policy", {}) or {}
    if not isinstance(policy, dict):
        raise SchemaError("policy", "expected a mapping")

    end = days * DAY_MS
    timeline = []
    last = 0
    for i, e in enumerate(doc.get("timeline", []) or []):
        p = f"timeline[{i}]"
        if not isinstance(e, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(e, {"ts", "day", "at", "actor", "action", "params"}, p)
        if "ts" in e:
            ts = e["ts"]
            if not isinstance(ts, int) or ts < 0:
                raise SchemaError(f"{p}.ts", "expected a non-negative integer (ms)")
        else:
            ts = int(e.get("day", 0)) * DAY_MS + parse_clock(_require(e, "at", p), f"{p}.at")
        if ts < last:
            raise SchemaError(f"{p}.ts", "timeline timestamps must be non-decreasing")
        if ts >= end:
            raise SchemaError(f"{p}.ts", "event lies past the end of the timeline")
        last = ts
        action = _require(e, "action", p, str)
        if action not in ("move", "command", "physical", "pin"):
            raise SchemaError(f"{p}.action", f"unknown action {action!r}")
        params = dict(e.get("params", {}) or {})
        dev = params.get("device")
        if dev is not None and dev not in ids:
            raise SchemaError(f"{p}.params.device", f"unknown device {dev!r}")
        timeline.append(TimelineEvent(ts, _require(e, "actor", p, str), action, params))

    sc = Scenario(name, days, start_weekday, tuple(zones), tuple(devices), tuple(users), tuple(apps),
                  routine, policy, tuple(timeline), (), (), seed)
    threats = doc.get("threats", []) or []
    from .threats import inject_threat  # local import: threats depends on this module

    for i, t in enumerate(threats):
        p = f"threats[{i}]"
        if not isinstance(t, dict):
            raise SchemaError(p, "expected a mapping")
        _check_keys(t, {"threat", "params"}, p)
        try:
            sc = inject_threat(sc, _require(t, "threat", p, str), dict(t.get("params", {}) or {}))
        except (ValueError, KeyError) as exc:
            raise SchemaError(p, str(exc)) from None
    return sc


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    text = None
    if str(path) in BUNDLED_SCENARIOS:
        text = resources.files("iotforensics.sim").joinpath(f"scenarios/{path}.yaml").read_text()
    else:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"scenario file not found: {p}")
        text = p.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("$", f"not valid YAML: {exc}") from None
    return scenario_from_dict(doc)
