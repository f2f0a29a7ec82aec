"""Security policy: allowed hours, restricted zones, authorized controllers and apps."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..sim.scenario import DAY_MS, WEEKDAYS, parse_clock


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    weekday: int        # 0 = Monday
    start: int          # ms since midnight
    end: int

    def __post_init__(self) -> None:
        if not 0 <= self.weekday < 7 or not 0 <= self.start < self.end <= DAY_MS:
            raise PolicyError(f"malformed window {self}")


@dataclass(frozen=True)
class SecurityPolicy:
    allowed: tuple[Window, ...] = ()
    restricted: dict[str, frozenset[str]] = field(default_factory=dict, hash=False)  # zone -> user ids
    users: dict[str, str] = field(default_factory=dict, hash=False)                   # user id -> controller
    controllers: frozenset[str] = frozenset()
    apps: frozenset[str] = frozenset()
    start_weekday: int = 0
    thresholds: dict[str, float] = field(default_factory=dict, hash=False)   # fallback binarizer thresholds

    def allowed_at(self, ts: int) -> bool:
        day, tod = divmod(ts, DAY_MS)
        wd = (self.start_weekday + day) % 7
        return any(w.weekday == wd and w.start <= tod < w.end for w in self.allowed)

    def disallowed_spans(self, start: int, end: int) -> list[tuple[int, int]]:
        """Sub-intervals of [start, end) that fall outside every allowed window."""
        out = []
        day = start // DAY_MS
        t = start
        while t < end:
            day_start = day * DAY_MS
            day_end = min(end, day_start + DAY_MS)
            wd = (self.start_weekday + day) % 7
            cuts = sorted((day_start + w.start, day_start + w.end) for w in self.allowed if w.weekday == wd)
            for a, b in cuts:
                if a > t:
                    out.append((t, min(a, day_end)))
                t = max(t, b)
                if t >= day_end:
                    break
            if t < day_end:
                out.append((t, day_end))
            t = day_end
            day += 1
        return [(a, b) for a, b in out if a < b]

    def authorized_for_zone(self, controller: str, zone: str) -> bool:
        users = self.restricted.get(zone)
        if users is None:
            return True
        return any(self.users.get(u) == controller or u == controller for u in users)

    def to_dict(self) -> dict:
        days: dict[tuple[int, int], list[str]] = {}
        for w in self.allowed:
            days.setdefault((w.start, w.end), []).append(WEEKDAYS[w.weekday])
        return {
            "allowed": [{"days": d, "hours": [_clock(a), _clock(b)]} for (a, b), d in sorted(days.items())],
            "restricted": {z: sorted(u) for z, u in sorted(self.restricted.items())},
            "users": dict(sorted(self.users.items())),
            "controllers": sorted(self.controllers),
            "apps": sorted(self.apps),
            "start_weekday": WEEKDAYS[self.start_weekday],
            "thresholds": dict(sorted(self.thresholds.items())),
        }


def _clock(ms: int) -> str:
    return f"{ms // 3_600_000:02d}:{ms // 60_000 % 60:02d}"


def _weekday(value, path: str) -> int:
    if isinstance(value, int) and 0 <= value < 7:
        return value
    if isinstance(value, str) and value.upper()[:3] in WEEKDAYS:
        return WEEKDAYS.index(value.upper()[:3])
    raise PolicyError(f"{path}: unknown weekday {value!r}")


def policy_from_dict(doc: dict, zones: set[str] | None = None) -> SecurityPolicy:
    """Build a policy; ``zones`` (when given) must contain every restricted zone."""
    if not isinstance(doc, dict):
        raise PolicyError("policy must be a mapping")
    known = {"allowed", "allowed_days", "allowed_hours", "restricted", "users", "controllers", "apps",
             "start_weekday", "thresholds"}
    unknown = set(doc) - known
    if unknown:
        raise PolicyError(f"unknown policy key {sorted(unknown)[0]!r}")
    windows = []
    specs = list(doc.get("allowed", []) or [])
    if "allowed_days" in doc or "allowed_hours" in doc:
        specs.append({"days": doc.get("allowed_days", list(WEEKDAYS)),
                      "hours": doc.get("allowed_hours", ["00:00", "24:00"])})
    for i, spec in enumerate(specs):
        path = f"allowed[{i}]"
        hours = spec.get("hours")
        if not isinstance(hours, list) or len(hours) != 2:
            raise PolicyError(f"{path}.hours: expected [start, end]")
        try:
            a = parse_clock(hours[0], f"{path}.hours")
            b = DAY_MS if hours[1] == "24:00" else parse_clock(hours[1], f"{path}.hours")
        except ValueError as exc:
            raise PolicyError(str(exc)) from None
        for d in spec.get("days", list(WEEKDAYS)):
            windows.append(Window(_weekday(d, f"{path}.days"), a, b))
    restricted = {}
    for zone, users in (doc.get("restricted", {}) or {}).items():
        if zones is not None and zone not in zones:
            raise PolicyError(f"restricted.{zone}: zone not in the topology")
        restricted[zone] = frozenset(users or ())
    return SecurityPolicy(
        tuple(windows), restricted, dict(doc.get("users", {}) or {}),
        frozenset(doc.get("controllers", ()) or ()), frozenset(doc.get("apps", ()) or ()),
        _weekday(doc.get("start_weekday", 0), "start_weekday"),
        {str(k): float(v) for k, v in (doc.get("thresholds", {}) or {}).items()})


def policy_for_scenario(scenario) -> SecurityPolicy:
    """The scenario's policy block, with user/controller bindings and zones from its topology."""
    doc = dict(scenario.policy)
    doc.setdefault("users", {u.id: u.controller for u in scenario.users})
    doc.setdefault("controllers", [u.controller for u in scenario.users])
    doc.setdefault("start_weekday", scenario.start_weekday)
    if "restricted" not in doc:
        doc["restricted"] = {z.name: list(z.authorized) for z in scenario.zones if z.restricted}
    return policy_from_dict(doc, {z.name for z in scenario.zones})


def load_policy(path: str | Path, zones: set[str] | None = None) -> SecurityPolicy:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise PolicyError(f"policy file is not valid YAML: {exc}") from None
    return policy_from_dict(doc, zones)
