"""Quartz-style cron subset: ``sec min hour dom month dow`` plus ``@every <seconds>``."""
from __future__ import annotations

from dataclasses import dataclass

from .scenario import DAY_MS, WEEKDAYS


class CronError(ValueError):
    pass


def _field(text: str, lo: int, hi: int, names: tuple[str, ...] = ()) -> frozenset[int]:
    if text in ("*", "?"):
        return frozenset(range(lo, hi + 1))

    def value(tok: str) -> int:
        tok = tok.upper()
        if tok in names:
            return names.index(tok) + lo
        try:
            v = int(tok)
        except ValueError:
            raise CronError(f"bad cron token {tok!r}") from None
        if not lo <= v <= hi:
            raise CronError(f"cron value {v} outside {lo}..{hi}")
        return v

    out: set[int] = set()
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.update(range(value(a), value(b) + 1))
        else:
            out.add(value(part))
    return frozenset(out)


@dataclass(frozen=True)
class Cron:
    seconds: frozenset[int]
    minutes: frozenset[int]
    hours: frozenset[int]
    weekdays: frozenset[int]       # 0 = Monday
    every_ms: int | None = None

    @classmethod
    def parse(cls, text: str) -> Cron:
        text = text.strip()
        if text.startswith("@every"):
            try:
                seconds = int(text.split()[1])
            except (IndexError, ValueError):
                raise CronError(f"bad interval {text!r}") from None
            if seconds <= 0:
                raise CronError("interval must be positive")
            return cls(frozenset(), frozenset(), frozenset(), frozenset(), seconds * 1000)
        fields = text.split()
        if len(fields) < 6:
            raise CronError(f"expected 6 cron fields, got {len(fields)}")
        # day-of-month and month are accepted but only '*'/'?' are meaningful here
        return cls(_field(fields[0], 0, 59), _field(fields[1], 0, 59), _field(fields[2], 0, 23),
                   _field(fields[5], 0, 6, WEEKDAYS))

    def next_after(self, now: int, start_weekday: int) -> int | None:
        """First firing time strictly after ``now`` (ms), or None within two weeks."""
        if self.every_ms is not None:
            return (now // self.every_ms + 1) * self.every_ms
        day = now // DAY_MS
        for d in range(day, day + 15):
            if (start_weekday + d) % 7 not in self.weekdays:
                continue
            for h in sorted(self.hours):
                for m in sorted(self.minutes):
                    for s in sorted(self.seconds):
                        t = d * DAY_MS + ((h * 60 + m) * 60 + s) * 1000
                        if t > now:
                            return t
        return None
