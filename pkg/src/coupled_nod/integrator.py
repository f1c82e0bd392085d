"""Fixed-step RK4 integration, waypoint re-sampling, patch entry and scheduled events."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import (TRANSIT, AgentParams, AgentState, Patch, coupled_field, switch_fn,
                    waypoint_x, y_field)

COMMIT_ETA = 0.5
EVENT_KINDS = ("set_u", "set_Kx", "add_trash")


class NumericalBlowup(ArithmeticError):
    """A derivative evaluated to NaN or inf."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message if step_index is None else f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    t_end: float = 100.0
    arrival_tol: float = 0.02

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be > 0")
        if not (np.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError("t_end must be >= 0")
        if not (np.isfinite(self.arrival_tol) and self.arrival_tol > 0):
            raise ValueError("arrival_tol must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Event:
    """Instantaneous change applied between steps.

    ``target`` is an agent index for set_u / set_Kx and a patch id for add_trash.
    """

    time: float
    kind: str
    target: int
    value: float

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}; expected one of {EVENT_KINDS}")
        if not np.isfinite(self.time) or self.time < 0:
            raise ValueError("event time must be finite and >= 0")
        if self.kind == "add_trash" and (self.value < 0 or int(self.value) != self.value):
            raise ValueError("add_trash needs a non-negative integer count")
        if self.kind in ("set_u", "set_Kx") and not self.value > 0:
            raise ValueError(f"{self.kind} needs a positive value")

    def to_dict(self) -> dict:
        return dict(time=self.time, kind=self.kind, target=self.target, value=self.value)


class EventQueue:
    """Time-sorted events, each handed out exactly once."""

    def __init__(self, events):
        # stable sort keeps declaration order for simultaneous events
        self._events = sorted(events, key=lambda e: e.time)
        self._next = 0

    def due(self, t: float, eps: float = 1e-9) -> list[Event]:
        out = []
        while self._next < len(self._events) and self._events[self._next].time <= t + eps:
            out.append(self._events[self._next])
            self._next += 1
        return out

    def __len__(self):
        return len(self._events) - self._next


def rk4(fun, y, dt):
    """One classical Runge-Kutta step of y' = fun(y) (autonomous)."""
    k1 = fun(y)
    k2 = fun(y + 0.5 * dt * k1)
    k3 = fun(y + 0.5 * dt * k2)
    k4 = fun(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def agent_rhs(params, rho, y_bar, *, b=None, u=None, K_x=None, v_corr=(0.0, 0.0)):
    """Build f(s) for s = (z, x, y) with stacked rows; works for one agent or many.

    ``params`` may be an :class:`AgentParams` or any object with array-valued
    attributes of the same names.  ``v_corr`` is a velocity correction added
    to (dx, dy), held fixed over the step.
    """
    vcx, vcy = v_corr

    def fun(s):
        dz, dx = coupled_field(params, s[0], s[1], rho, b=b, u=u, K_x=K_x)
        dy = y_field(params, s[2], y_bar)
        out = np.stack([dz, dx + vcx, dy + vcy])
        if not np.all(np.isfinite(out)):
            raise NumericalBlowup("non-finite derivative")
        return out

    return fun


def step(state: AgentState, params: AgentParams, cfg: IntegratorConfig) -> AgentState:
    """Advance (z, x, y) of one agent by one RK4 step with its waypoint held fixed.

    Without a waypoint the y-attraction is off (target = current y) and rho = 0.
    """
    vals = (state.z, state.x, state.y)
    if not all(np.isfinite(v) for v in vals):
        raise NumericalBlowup("non-finite state")
    y_bar = state.y if state.y_bar is None else state.y_bar
    rho = state.rho if state.has_waypoint else 0.0
    s = rk4(agent_rhs(params, rho, y_bar), np.array(vals, dtype=float), cfg.dt)
    return replace(state, z=float(s[0]), x=float(s[1]), y=float(s[2]))


def is_committed(z, sigma) -> bool:
    return switch_fn(z, sigma) < COMMIT_ETA


def draw_point(patch: Patch, rng: np.random.Generator) -> tuple[float, float]:
    return float(rng.uniform(*patch.x_bounds)), float(rng.uniform(*patch.y_bounds))


def resample_waypoint(state: AgentState, patch: Patch, rng: np.random.Generator,
                      sigma: float | None = None) -> AgentState:
    """Draw a uniform point of ``patch``; keep |r_x| as rho and r_y as the y target.

    When ``sigma`` is given the agent must be committed (eta(z) < 0.5);
    otherwise the state is returned unchanged and no random number is drawn.
    """
    if sigma is not None and not is_committed(state.z, sigma):
        return state
    rx, ry = draw_point(patch, rng)
    return replace(state, rho=abs(rx), y_bar=ry)


def waypoint_of(state: AgentState, params: AgentParams) -> tuple[float, float] | None:
    if not state.has_waypoint:
        return None
    return float(waypoint_x(params, state.z, state.rho)), float(state.y_bar)


def patch_of(x, y, patches) -> int:
    for p in patches:
        if p.contains(x, y):
            return p.id
    return TRANSIT


def detect_patch_entry(prev: AgentState, nxt: AgentState, patches):
    """The patch containing the end point but not the start point, else None."""
    for p in patches:
        if p.contains(nxt.x, nxt.y) and not p.contains(prev.x, prev.y):
            return p
    return None
