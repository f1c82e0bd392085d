"""Pairwise barrier filter on single-integrator velocities.

Each agent keeps ``<v, p_i - p_j> >= -(alpha/2) (|p_i - p_j|^2 - D^2)`` for every
neighbour j, with D = 2 * agent_radius + margin; both agents of a pair take
half of the barrier budget.  The filtered velocity is the point of that
polygon closest to the command, found with Dykstra's alternating projections
(with an exact vertex solve for the slow-converging corner cases).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

TINY = 1e-12


@dataclass(frozen=True)
class SafetyConfig:
    agent_radius: float = 0.04
    margin: float = 0.01
    gain_alpha: float = 1.0
    max_sweeps: int = 20
    window: int = 50
    enabled: bool = True

    def __post_init__(self):
        if self.agent_radius <= 0 or self.margin < 0 or self.gain_alpha <= 0:
            raise ValueError("need agent_radius > 0, margin >= 0, gain_alpha > 0")
        if self.max_sweeps < 1 or self.window < 1:
            raise ValueError("max_sweeps and window must be >= 1")

    @property
    def safe_distance(self) -> float:
        return 2.0 * self.agent_radius + self.margin


def barrier_constraints(self_pos, neighbors, cfg: SafetyConfig):
    """Rows ``a`` and offsets ``c`` of the half-planes ``a @ v >= c``."""
    p = np.asarray(self_pos, dtype=float)
    nb = np.asarray(neighbors, dtype=float).reshape(-1, 2)
    a = p - nb
    h = np.sum(a * a, axis=1) - cfg.safe_distance**2
    return a, -0.5 * cfg.gain_alpha * h


def _violation(a, c, v) -> float:
    if len(c) == 0:
        return 0.0
    return float(np.max(c - a @ v, initial=0.0))


def filter_velocity(self_pos, self_vel_cmd, neighbors, cfg: SafetyConfig = SafetyConfig(),
                    feas_tol: float = 1e-9):
    """Return ``(safe_vel, speed_ratio)``.

    The command passes through untouched (ratio exactly 1) when no barrier
    is violated.  Otherwise Dykstra's projections run until the iterate passes
    the optimality check (feasible, complementary slackness), at most
    ``cfg.max_sweeps`` sweeps; if it has not passed by then the closest
    polygon vertex is computed directly.
    When no velocity satisfies every barrier the agent is deadlocked: zero
    velocity, ratio 0.
    """
    cmd = np.asarray(self_vel_cmd, dtype=float)
    a, c = _unit_constraints(self_pos, neighbors, cfg)
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    if _violation(a, c, cmd) <= feas_tol * scale:
        return cmd.copy(), 1.0

    # plain floats: the polygon is small and numpy call overhead dominates here
    rows = [(float(ax), float(ay), float(cj), float(ax * ax + ay * ay))
            for (ax, ay), cj in zip(a, c)]
    vx, vy = float(cmd[0]), float(cmd[1])
    corr = [[0.0, 0.0] for _ in rows]
    tol = feas_tol * scale
    for _ in range(cfg.max_sweeps):
        for (ax, ay, cj, n2), cr in zip(rows, corr):
            yx, yy = vx + cr[0], vy + cr[1]
            gap = cj - (ax * yx + ay * yy)
            if gap > 0:
                px, py = yx + gap / n2 * ax, yy + gap / n2 * ay
            else:
                px, py = yx, yy
            cr[0], cr[1] = yx - px, yy - py
            vx, vy = px, py
        # cmd = v + sum(corr) with corr_j = -mu_j a_j, mu_j >= 0, so v is the minimiser
        # once it is feasible and every constraint still carrying a correction is tight
        slack = [ax * vx + ay * vy - cj for ax, ay, cj, _ in rows]
        if min(slack) >= -tol and all(sl <= tol or (cr[0] == 0.0 and cr[1] == 0.0)
                                      for sl, cr in zip(slack, corr)):
            break
    else:
        # sharp corners converge slowly; finish with the exact 2-D solve
        v = _closest_vertex(cmd, a, c)
        if v is None:
            return np.zeros(2), 0.0
        vx, vy = float(v[0]), float(v[1])
    speed = math.hypot(vx, vy)
    return np.array([vx, vy]), speed / max(math.hypot(cmd[0], cmd[1]), TINY)


def exact_filter(self_pos, self_vel_cmd, neighbors, cfg: SafetyConfig = SafetyConfig()):
    """Closest feasible velocity by enumerating the vertices of the 2-D polygon.

    Returns None when no velocity satisfies every barrier.
    """
    cmd = np.asarray(self_vel_cmd, dtype=float)
    return _closest_vertex(cmd, *_unit_constraints(self_pos, neighbors, cfg))


def _unit_constraints(self_pos, neighbors, cfg):
    """Barrier half-planes with unit normals, so tolerances are in velocity units.

    (Near-)coincident neighbours give no direction and are dropped.
    """
    a, c = barrier_constraints(self_pos, neighbors, cfg)
    n = np.sqrt(np.sum(a * a, axis=1))
    keep = n > TINY
    return a[keep] / n[keep, None], c[keep] / n[keep]


def _closest_vertex(cmd, a, c):
    tol = 1e-10 * max(1.0, float(np.max(np.abs(c), initial=0.0)))

    def feasible(v):
        return len(c) == 0 or np.all(a @ v >= c - tol)

    cands = [cmd]
    for j in range(len(c)):
        cands.append(cmd + (c[j] - a[j] @ cmd) / (a[j] @ a[j]) * a[j])
        for k in range(j + 1, len(c)):
            M = np.array([a[j], a[k]])
            if abs(np.linalg.det(M)) > 1e-14 * (a[j] @ a[j]) ** 0.5 * (a[k] @ a[k]) ** 0.5:
                cands.append(np.linalg.solve(M, [c[j], c[k]]))
    best = None
    for v in cands:
        if feasible(v) and (best is None or np.linalg.norm(v - cmd) < np.linalg.norm(best - cmd)):
            best = v
    return best


class SpeedRatioWindow:
    """Moving average of recent speed ratios, mapped onto an effective K_x."""

    def __init__(self, nominal_Kx: float, window: int = 50):
        if window <= 0:
            raise ValueError("window must be positive")
        self.nominal_Kx = float(nominal_Kx)
        self._buf: deque[float] = deque(maxlen=int(window))
        self._sum = 0.0

    def push(self, ratio: float) -> None:
        r = min(max(float(ratio), 0.0), 1.0)
        if len(self._buf) == self._buf.maxlen:
            self._sum -= self._buf[0]
        self._buf.append(r)
        # recompute occasionally to keep the running sum from drifting
        self._sum = float(sum(self._buf)) if len(self._buf) % 64 == 0 else self._sum + r

    @property
    def mean_ratio(self) -> float:
        return self._sum / len(self._buf) if self._buf else 1.0

    def effective_Kx(self) -> float:
        if not self._buf:
            return self.nominal_Kx
        return self.nominal_Kx * self.mean_ratio


def effective_Kx(nominal_Kx: float, ratios) -> float:
    """K_x scaled by the mean speed ratio over a window; nominal for an empty window."""
    r = np.clip(np.asarray(list(ratios), dtype=float), 0.0, 1.0)
    if r.size == 0:
        return float(nominal_Kx)
    return float(nominal_Kx * r.mean())
