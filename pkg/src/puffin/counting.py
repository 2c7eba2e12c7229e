"""Multiply-add tallies used to cross-check the analytic complexity model.

Hot paths report their multiply-add counts under a category key ("conv",
"proj", "resample", "ola").  Counting is off unless a tally is active, so
the cost in production is one None check per layer application.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

NETWORK_KEYS = ("conv", "proj")  # weight MACs; assembly (resample/ola/ifft) excluded

_active: "MacTally | None" = None


@dataclass
class MacTally:
    counts: dict = field(default_factory=dict)

    def add(self, key: str, n: int) -> None:
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def total(self, *keys: str) -> int:
        if not keys:
            keys = tuple(self.counts)
        return sum(self.counts.get(k, 0) for k in keys)

    @property
    def network_macs(self) -> int:
        return self.total(*NETWORK_KEYS)

    @property
    def network_flops(self) -> int:
        # one multiply plus one add per MAC
        return 2 * self.network_macs


def add(key: str, n: int) -> None:
    if _active is not None:
        _active.add(key, n)


@contextmanager
def tally():
    """Activate a fresh tally for the duration of the block (not reentrant)."""
    global _active
    previous = _active
    current = MacTally()
    _active = current
    try:
        yield current
    finally:
        _active = previous
