"""Device-type catalog shared by the simulator and the analyzer."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    values: tuple[str, ...] = ()          # enumerated states; empty for numeric
    bounds: tuple[float, float] | None = None
    unit: str = ""
    active: tuple[str, ...] = ()          # values that binarize to 1

    @property
    def numeric(self) -> bool:
        return self.bounds is not None

    def accepts(self, value) -> bool:
        if self.numeric:
            lo, hi = self.bounds
            return isinstance(value, (int, float)) and not isinstance(value, bool) and lo <= value <= hi
        return value in self.values


@dataclass(frozen=True)
class DeviceType:
    name: str
    attributes: tuple[AttributeSpec, ...]
    commands: dict[str, tuple[str, str]] = field(default_factory=dict)  # command -> (attribute, value)
    primary: str = ""                    # attribute tracked as the device's state bit

    def attribute(self, name: str) -> AttributeSpec | None:
        return next((a for a in self.attributes if a.name == name), None)

    @property
    def state_attribute(self) -> AttributeSpec:
        spec = self.attribute(self.primary)
        assert spec is not None
        return spec


def _enum(name: str, values: tuple[str, ...], active: tuple[str, ...]) -> AttributeSpec:
    return AttributeSpec(name, values=values, active=active)


DEVICE_TYPES: dict[str, DeviceType] = {t.name: t for t in (
    DeviceType("hub", (_enum("mode", ("Office", "Other"), ("Office",)),), {}, "mode"),
    DeviceType("light", (_enum("switch", ("on", "off"), ("on",)),),
               {"on": ("switch", "on"), "off": ("switch", "off")}, "switch"),
    DeviceType("lock", (_enum("lock", ("locked", "unlocked"), ("unlocked",)),),
               {"lock": ("lock", "locked"), "unlock": ("lock", "unlocked")}, "lock"),
    DeviceType("fire-alarm", (_enum("smoke", ("clear", "tested", "detected"), ("tested", "detected")),),
               {"test": ("smoke", "tested"), "clear": ("smoke", "clear")}, "smoke"),
    DeviceType("camera", (_enum("switch", ("on", "off"), ("on",)),
                          _enum("recording", ("active", "idle"), ("active",))),
               {"on": ("switch", "on"), "off": ("switch", "off")}, "recording"),
    DeviceType("thermostat", (_enum("thermostatOperatingState", ("cooling", "idle"), ("cooling",)),),
               {"cool": ("thermostatOperatingState", "cooling"), "off": ("thermostatOperatingState", "idle")},
               "thermostatOperatingState"),
    DeviceType("motion-sensor", (_enum("motion", ("active", "inactive"), ("active",)),), {}, "motion"),
    DeviceType("light-sensor", (AttributeSpec("illuminance", bounds=(0.0, 2000.0), unit="lux"),), {},
               "illuminance"),
    DeviceType("temperature-sensor", (AttributeSpec("temperature", bounds=(-40.0, 150.0), unit="F"),), {},
               "temperature"),
    DeviceType("door-sensor", (_enum("contact", ("open", "closed"), ("open",)),), {}, "contact"),
)}

# capability names accepted by device inputs
CAPABILITIES: dict[str, tuple[str, ...]] = {
    "capability.switch": ("light", "camera"),
    "capability.lock": ("lock",),
    "capability.smokeDetector": ("fire-alarm",),
    "capability.videoCamera": ("camera",),
    "capability.thermostat": ("thermostat",),
    "capability.motionSensor": ("motion-sensor",),
    "capability.illuminanceMeasurement": ("light-sensor",),
    "capability.temperatureMeasurement": ("temperature-sensor",),
    "capability.contactSensor": ("door-sensor",),
    "capability.bridge": ("hub",),
    "capability.sensor": tuple(DEVICE_TYPES),
    "capability.actuator": ("light", "lock", "fire-alarm", "camera", "thermostat"),
}


def device_type(name: str) -> DeviceType:
    try:
        return DEVICE_TYPES[name]
    except KeyError:
        raise KeyError(f"unknown device type {name!r}") from None
