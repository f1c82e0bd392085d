"""Trash patches, pickup and the efficiency-driven bias."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import PATCH1, PATCH2, Patch


@dataclass
class TrashField:
    """Trash items with the time each was collected (-1 while uncollected)."""

    xy: np.ndarray           # (n, 2)
    patch: np.ndarray        # (n,) patch id of each item
    collected_at: np.ndarray  # (n,) float

    @classmethod
    def empty(cls) -> "TrashField":
        return cls(np.empty((0, 2)), np.empty(0, dtype=int), np.empty(0))

    @classmethod
    def uniform(cls, patches, counts: dict, rng: np.random.Generator) -> "TrashField":
        field = cls.empty()
        for p in patches:
            field.add(p, int(counts.get(p.id, 0)), rng)
        return field

    def add(self, patch: Patch, count: int, rng: np.random.Generator) -> None:
        """Place ``count`` new items uniformly at random inside ``patch``."""
        if count <= 0:
            return
        pts = np.column_stack([rng.uniform(*patch.x_bounds, size=count),
                               rng.uniform(*patch.y_bounds, size=count)])
        self.xy = np.vstack([self.xy, pts])
        self.patch = np.concatenate([self.patch, np.full(count, patch.id, dtype=int)])
        self.collected_at = np.concatenate([self.collected_at, np.full(count, -1.0)])

    @property
    def uncollected(self) -> np.ndarray:
        return self.collected_at < 0

    def counts(self) -> dict:
        out = {}
        for pid in (PATCH1, PATCH2):
            mask = self.patch == pid
            out[pid] = dict(total=int(mask.sum()),
                            uncollected=int((mask & self.uncollected).sum()))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "collected_at_time"])
            for (x, y), t in zip(self.xy, self.collected_at):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(t))])


@dataclass
class EfficiencyAccount:
    collected_count: int = 0
    distance_in_patch: float = 0.0
    q0: float = 2.0
    epsilon: float = 0.01
    s: int = 1
    q_min: float = 1.5

    def __post_init__(self):
        if self.q0 <= 0 or self.epsilon <= 0 or self.q_min <= 0:
            raise ValueError("q0, epsilon and q_min must be positive")
        if self.s not in (1, -1):
            raise ValueError("s must be +1 or -1")

    @property
    def patch(self) -> int:
        return PATCH1 if self.s > 0 else PATCH2


def efficiency(acct: EfficiencyAccount) -> float:
    """Pieces collected in the patch (plus q0) per distance travelled there (plus epsilon)."""
    return (acct.collected_count + acct.q0) / (acct.distance_in_patch + acct.epsilon)


def bias_from_efficiency(acct: EfficiencyAccount, q: float | None = None) -> float:
    """b = s (tanh(q) - tanh(q_min)); positive b favours patch 1."""
    q = efficiency(acct) if q is None else q
    return acct.s * (np.tanh(q) - np.tanh(acct.q_min))


def on_patch_entry(acct: EfficiencyAccount, entered: Patch | int) -> EfficiencyAccount:
    pid = entered.id if isinstance(entered, Patch) else int(entered)
    acct.collected_count = 0
    acct.distance_in_patch = 0.0
    acct.s = 1 if pid == PATCH1 else -1
    return acct


def sense_and_collect(position, field: TrashField, radius: float, t: float,
                      inside_patch: bool = True) -> int:
    """Mark every uncollected item within ``radius`` of ``position`` as collected at ``t``.

    Pickup only happens while the agent is inside a patch.  Mutates ``field``
    in place and returns the number of items picked.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not inside_patch or len(field.collected_at) == 0:
        return 0
    live = field.uncollected
    d2 = np.sum((field.xy - np.asarray(position, dtype=float)) ** 2, axis=1)
    hit = live & (d2 <= radius * radius)
    n = int(hit.sum())
    if n:
        field.collected_at[hit] = t
    return n
