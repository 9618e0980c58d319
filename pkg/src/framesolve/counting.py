"""Operation counters used as the cost model for scaling checks.

Counted units are matrix-entry evaluations consumed by products and sparse
vector element touches.  A counter object is passed explicitly wherever
costs are tracked; there is no global state.
"""

from dataclasses import dataclass

__all__ = ["Counters"]


@dataclass
class Counters:
    entry_evals: int = 0
    touches: int = 0

    def add_entries(self, n: int):
        self.entry_evals += int(n)

    def add_touches(self, n: int):
        self.touches += int(n)

    @property
    def total(self) -> int:
        return self.entry_evals + self.touches

    def snapshot(self):
        return (self.entry_evals, self.touches)
