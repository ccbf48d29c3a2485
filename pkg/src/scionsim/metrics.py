"""Counters and recorded values, exported as sorted ``key=value`` lines."""
from __future__ import annotations

import hashlib
from collections import Counter


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.6f" % value
    return str(value)


class Metrics:
    def __init__(self):
        self.counters: Counter = Counter()
        self.values: dict[str, object] = {}
        self.series: dict[str, list] = {}

    def inc(self, key: str, n: int = 1) -> None:
        self.counters[key] += n

    def set(self, key: str, value) -> None:
        self.values[key] = value

    def set_once(self, key: str, value) -> None:
        self.values.setdefault(key, value)

    def record(self, name: str, t: float, value) -> None:
        self.series.setdefault(name, []).append((t, value))

    def get(self, key: str, default=0):
        if key in self.values:
            return self.values[key]
        return self.counters.get(key, default)

    def export_lines(self) -> list[str]:
        rows = {k: _fmt(v) for k, v in self.counters.items() if v}
        rows.update((k, _fmt(v)) for k, v in self.values.items())
        for name, points in self.series.items():
            rows["series.%s" % name] = ";".join("%s:%s" % (_fmt(float(t)), _fmt(v)) for t, v in points)
        return ["%s=%s" % (k, rows[k]) for k in sorted(rows)]

    def export(self) -> str:
        lines = self.export_lines()
        return "\n".join(lines) + ("\n" if lines else "")

    def digest(self) -> str:
        return hashlib.sha256(self.export().encode()).hexdigest()
