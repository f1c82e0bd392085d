"""Multi-agent simulation loop, trajectory log and post-processing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .environment import TrashField, sense_and_collect
from .integrator import Event, EventQueue, IntegratorConfig, NumericalBlowup
from .model import PATCH1, PATCH2, TRANSIT, AgentParams, AgentState, Patch
from .safety import SafetyConfig, filter_velocity

WAYPOINT_MODES = ("independent", "shared", "mirrored", "mirrored_y")
LOG_COLUMNS = ("t", "agent_id", "z", "x", "y", "b", "q", "u", "effective_Kx", "patch",
               "picked_this_step")


@dataclass(frozen=True)
class EfficiencyConfig:
    q0: float = 2.0
    epsilon: float = 0.01
    q_min: float = 1.5
    pickup_radius: float = 0.05

    def __post_init__(self):
        for name in ("q0", "epsilon", "q_min", "pickup_radius"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0")


@dataclass
class Scenario:
    patches: tuple[Patch, Patch]
    agents: list[tuple[AgentParams, AgentState]]
    trash: TrashField
    events: list[Event] = field(default_factory=list)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    seed: int = 0
    efficiency: EfficiencyConfig = field(default_factory=EfficiencyConfig)
    labels: list[str] | None = None
    # "independent": one waypoint stream per agent; "shared": every agent replays the
    # same stream (paired comparison of agents that differ only in their parameters);
    # "mirrored": shared, but odd-indexed agents reflect each draw through the patch
    # centre, so paired agents get equal leg lengths without chasing the same points;
    # "mirrored_y": as "mirrored" but reflecting only y (pairs started at +y / -y)
    waypoints: str = "independent"

    def validate(self) -> None:
        if self.waypoints not in WAYPOINT_MODES:
            raise ValueError(f"scenario.waypoints must be one of {WAYPOINT_MODES}")
        if not self.agents:
            raise ValueError("scenario.agents: at least one agent is required")
        ids = sorted(p.id for p in self.patches)
        if ids != [PATCH1, PATCH2]:
            raise ValueError("scenario.patches: need exactly patch 1 and patch 2")
        p1, p2 = sorted(self.patches, key=lambda p: p.id)
        if (not np.allclose(p1.x_bounds, [-p2.x_bounds[1], -p2.x_bounds[0]])
                or not np.allclose(p1.y_bounds, p2.y_bounds)):
            raise ValueError("scenario.patches: patches must mirror each other across x=0")
        if p1.x_bounds[0] <= 0 or p1.x_bounds[0] >= p1.x_bounds[1]:
            raise ValueError("scenario.patches: patch 1 must lie in x > 0")
        for i, (params, st) in enumerate(self.agents):
            if not all(np.isfinite(v) for v in (st.z, st.x, st.y)):
                raise ValueError(f"scenario.agents[{i}]: non-finite initial state")
            if st.z == 0 or np.sign(st.z) != np.sign(st.x):
                raise ValueError(f"scenario.agents[{i}]: need sign(z0) == sign(x0) != 0")
            if abs(params.l - p1.outer_bound) > 1e-12:
                raise ValueError(f"scenario.agents[{i}]: l must equal the patch outer bound")
        if self.labels is not None and len(self.labels) != len(self.agents):
            raise ValueError("scenario.labels: one label per agent")
        for e in self.events:
            if e.kind == "add_trash" and e.target not in (PATCH1, PATCH2):
                raise ValueError(f"event at t={e.time}: add_trash target must be 1 or 2")
            if e.kind != "add_trash" and not 0 <= e.target < len(self.agents):
                raise ValueError(f"event at t={e.time}: agent index {e.target} out of range")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("scenario.seed must be a 64-bit unsigned integer")

    def patch(self, pid: int) -> Patch:
        return next(p for p in self.patches if p.id == pid)


@dataclass
class TrajectoryLog:
    """Columns of shape (n_times, n_agents); ``t`` has shape (n_times,)."""

    t: np.ndarray
    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    b: np.ndarray
    q: np.ndarray
    u: np.ndarray
    effective_Kx: np.ndarray
    patch: np.ndarray
    picked: np.ndarray
    trash: TrashField | None = None
    labels: list[str] | None = None

    @property
    def n_agents(self) -> int:
        return self.z.shape[1]

    def table(self) -> np.ndarray:
        """Rows ordered by time, then agent id, in LOG_COLUMNS order."""
        T, N = self.z.shape
        cols = [np.repeat(self.t, N), np.tile(np.arange(N), T)]
        cols += [a.reshape(-1) for a in (self.z, self.x, self.y, self.b, self.q, self.u,
                                          self.effective_Kx, self.patch, self.picked)]
        return np.column_stack(cols)

    def to_csv(self, path) -> None:
        fmt = ["%.10g", "%d"] + ["%.17g"] * 7 + ["%d", "%d"]
        np.savetxt(path, self.table(), fmt=fmt, delimiter=",", header=",".join(LOG_COLUMNS),
                   comments="")


class _ParamArrays:
    """Attribute bundle of per-agent constants; duck-types AgentParams for the field code."""

    def __init__(self, params: list[AgentParams]):
        for name in ("d", "u", "b", "K_z", "K_x", "K_y", "k", "sigma", "l"):
            setattr(self, name, np.array([getattr(p, name) for p in params], dtype=float))


def _safe_corrections(pos, cmd, cfg: SafetyConfig):
    """Per-agent (safe - cmd) and speed ratio, all from the same position snapshot."""
    n = len(pos)
    dv = np.zeros_like(cmd)
    ratio = np.ones(n)
    if n < 2:
        return dv, ratio
    diff = pos[:, None, :] - pos[None, :, :]
    h = np.sum(diff * diff, axis=2) - cfg.safe_distance**2
    lhs = np.einsum("ijk,ik->ij", diff, cmd)
    viol = lhs < -0.5 * cfg.gain_alpha * h - 1e-12
    np.fill_diagonal(viol, False)
    for i in np.flatnonzero(viol.any(axis=1)):
        others = np.delete(pos, i, axis=0)
        safe, r = filter_velocity(pos[i], cmd[i], others, cfg)
        dv[i] = safe - cmd[i]
        ratio[i] = min(r, 1.0)
    return dv, ratio


def make_rhs(P, rho, ybar, b, u, Kx, vcx=0.0, vcy=0.0):
    """Vectorized (dz, dx, dy) for all agents; same formulas as ``coupled_field``/``y_field``."""
    neg_inv = -0.5 / (P.sigma * P.sigma)
    amp = rho / P.l
    d, Kz, Ky, k = P.d, P.K_z, P.K_y, P.k

    def fun(s):
        z, x, y = s
        eta = np.exp(z * z * neg_inv)
        out = np.empty_like(s)
        out[0] = -d * z + u * np.tanh(z) + b - Kz * eta * (z - x)
        out[1] = (1.0 - eta) * Kx * (amp * np.tanh(k * z) - x) - eta * (x - z) + vcx
        out[2] = Ky * (ybar - y) + vcy
        return out

    return fun


def _rk4_from(fun, s, k1, dt):
    k2 = fun(s + 0.5 * dt * k1)
    k3 = fun(s + 0.5 * dt * k2)
    k4 = fun(s + dt * k3)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run(scenario: Scenario) -> TrajectoryLog:
    """Simulate the scenario.

    Per step: events, pickups (ascending id), efficiency and bias, commanded
    velocities with the effective K_x, safety filter from a common snapshot,
    RK4 step, patch entries / waypoint re-sampling, logging.
    """
    scenario.validate()
    cfg = scenario.integrator
    eff = scenario.efficiency
    dt = cfg.dt
    N = len(scenario.agents)
    P = _ParamArrays([p for p, _ in scenario.agents])
    u = P.u.copy()
    Kx_nom = P.K_x.copy()
    streams = np.random.SeedSequence(int(scenario.seed)).spawn(N + 1)
    reflect = {"mirrored": "point", "mirrored_y": "y"}.get(scenario.waypoints, "")
    flip = [reflect if i % 2 else "" for i in range(N)]
    if scenario.waypoints != "independent":
        # a SeedSequence is stateless, so each generator replays the same stream
        rngs = [np.random.default_rng(streams[0]) for _ in range(N)]
    else:
        rngs = [np.random.default_rng(s) for s in streams[:N]]
    env_rng = np.random.default_rng(streams[N])
    trash = TrashField(scenario.trash.xy.copy(), scenario.trash.patch.copy(),
                       scenario.trash.collected_at.copy())
    events = EventQueue(scenario.events)
    patches = {p.id: p for p in scenario.patches}

    z = np.array([s.z for _, s in scenario.agents], dtype=float)
    x = np.array([s.x for _, s in scenario.agents], dtype=float)
    y = np.array([s.y for _, s in scenario.agents], dtype=float)
    rho = np.zeros(N)
    ybar = np.zeros(N)
    # efficiency accounts as arrays: same arithmetic as environment.efficiency / bias
    collected = np.zeros(N)
    dist = np.zeros(N)
    sgn = np.where(z > 0, 1.0, -1.0)
    assigned = np.where(z > 0, PATCH1, PATCH2)
    for i, (_, st) in enumerate(scenario.agents):
        if st.has_waypoint:
            rho[i], ybar[i] = st.rho, st.y_bar
        else:
            rho[i], ybar[i] = _draw(patches[int(assigned[i])], rngs[i], flip[i])
    tanh_qmin = np.tanh(eff.q_min)
    # speed-ratio ring buffer; same arithmetic as SpeedRatioWindow, for all agents at once
    W = scenario.safety.window
    ratio_buf = np.ones((W, N))
    n_pushed = 0
    where = _where(x, y, patches)
    commit_z = P.sigma * np.sqrt(2.0 * np.log(2.0))  # eta(z) < 0.5  <=>  |z| > commit_z

    n = cfg.n_steps
    shape = (n + 1, N)
    log = TrajectoryLog(t=np.arange(n + 1) * dt, z=np.empty(shape), x=np.empty(shape),
                        y=np.empty(shape), b=np.empty(shape), q=np.empty(shape),
                        u=np.empty(shape), effective_Kx=np.empty(shape),
                        patch=np.empty(shape, dtype=int), picked=np.zeros(shape, dtype=int),
                        trash=trash, labels=scenario.labels)
    q = (collected + eff.q0) / (dist + eff.epsilon)
    b = sgn * (np.tanh(q) - tanh_qmin)
    Kx_eff = Kx_nom.copy()
    _record(log, 0, z, x, y, b, q, u, Kx_eff, where, np.zeros(N, dtype=int))

    for step_i in range(n):
        t = step_i * dt
        # (1) events
        for ev in events.due(t):
            if ev.kind == "set_u":
                u[ev.target] = ev.value
            elif ev.kind == "set_Kx":
                Kx_nom[ev.target] = ev.value
            else:
                trash.add(patches[ev.target], int(ev.value), env_rng)
        # (2) pickups, ascending id
        picked = np.zeros(N, dtype=int)
        for i in np.flatnonzero(where != TRANSIT):
            picked[i] = sense_and_collect((x[i], y[i]), trash, eff.pickup_radius, t)
        collected += picked
        # (3) efficiency and bias
        q = (collected + eff.q0) / (dist + eff.epsilon)
        b = sgn * (np.tanh(q) - tanh_qmin)
        # (4) commanded velocities with the crowd-dependent K_x
        if n_pushed:
            Kx_eff = Kx_nom * (ratio_buf[:min(n_pushed, W)].sum(axis=0) / min(n_pushed, W))
        else:
            Kx_eff = Kx_nom.copy()
        s0 = np.array([z, x, y])
        f0 = make_rhs(P, rho, ybar, b, u, Kx_eff)(s0)
        # (5) safety filter from the common snapshot
        if scenario.safety.enabled and N > 1:
            dv, ratio = _safe_corrections(np.column_stack([x, y]), f0[1:].T, scenario.safety)
        else:
            dv, ratio = None, np.ones(N)
        ratio_buf[n_pushed % W] = np.clip(ratio, 0.0, 1.0)
        n_pushed += 1
        # (6) integrate; the safety correction is held over the step
        if dv is None or not dv.any():
            fun, k1 = make_rhs(P, rho, ybar, b, u, Kx_eff), f0
        else:
            fun = make_rhs(P, rho, ybar, b, u, Kx_eff, dv[:, 0], dv[:, 1])
            k1 = f0 + np.vstack([np.zeros(N), dv[:, 0], dv[:, 1]])
        s1 = _rk4_from(fun, s0, k1, dt)
        if not np.all(np.isfinite(s1)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(s1), axis=0))[0])
            raise NumericalBlowup(f"non-finite state for agent {bad} at t={t:.6g}", step_i)
        step_len = np.hypot(s1[1] - x, s1[2] - y)
        z, x, y = s1[0], s1[1], s1[2]
        # (7) entries, accounting, waypoints
        new_where = _where(x, y, patches)
        committed = (np.abs(z) > commit_z).tolist()
        wx_all = (rho / P.l * np.tanh(P.k * z)).tolist()
        xs, ys, zs, sl = x.tolist(), y.tolist(), z.tolist(), step_len.tolist()
        for i in range(N):
            nw = int(new_where[i])
            if nw != TRANSIT and nw != where[i] and nw != assigned[i]:
                # entered the other patch: reset the account, pick a waypoint there
                assigned[i] = nw
                sgn[i] = 1.0 if nw == PATCH1 else -1.0
                collected[i] = 0.0
                dist[i] = 0.0
                if committed[i]:
                    rho[i], ybar[i] = _draw(patches[int(nw)], rngs[i], flip[i])
                continue
            if nw == assigned[i]:
                dist[i] += sl[i]
            if committed[i]:
                if math.hypot(wx_all[i] - xs[i], float(ybar[i]) - ys[i]) < cfg.arrival_tol:
                    rho[i], ybar[i] = _draw(patches[PATCH1 if zs[i] > 0 else PATCH2], rngs[i],
                                            flip[i])
        where = new_where
        # (8) log
        _record(log, step_i + 1, z, x, y, b, q, u, Kx_eff, where, picked)
    return log


def _draw(patch: Patch, rng, flip: str = "") -> tuple[float, float]:
    rx = rng.uniform(*patch.x_bounds)
    ry = rng.uniform(*patch.y_bounds)
    if flip == "point":  # reflect through the patch centre
        rx = sum(patch.x_bounds) - rx
    if flip:
        ry = sum(patch.y_bounds) - ry
    return abs(rx), ry


def _where(x, y, patches) -> np.ndarray:
    out = np.full(len(x), TRANSIT, dtype=int)
    for pid, p in patches.items():
        out[p.contains(x, y)] = pid
    return out


def _record(log, k, z, x, y, b, q, u, kx, where, picked):
    log.z[k], log.x[k], log.y[k] = z, x, y
    log.b[k], log.q[k], log.u[k] = b, q, u
    log.effective_Kx[k], log.patch[k], log.picked[k] = kx, where, picked


# ---------------------------------------------------------------- analysis

def _crossings(t, z):
    out = []
    sgn = np.sign(z)
    # carry the previous sign through exact zeros
    for k in range(1, len(sgn)):
        if sgn[k] == 0:
            sgn[k] = sgn[k - 1]
    for k in np.flatnonzero(sgn[1:] * sgn[:-1] < 0):
        z0, z1 = z[k], z[k + 1]
        frac = 0.0 if z1 == z0 else z0 / (z0 - z1)
        tc = t[k] + frac * (t[k + 1] - t[k])
        src = PATCH1 if sgn[k] > 0 else PATCH2
        out.append((float(tc), src, PATCH2 if src == PATCH1 else PATCH1))
    return out


def switch_times(log: TrajectoryLog) -> list[list[tuple[float, int, int]]]:
    """Per agent: (time, from_patch, to_patch) at every interpolated zero crossing of z."""
    return [_crossings(log.t, log.z[:, i]) for i in range(log.n_agents)]


def first_switch(log: TrajectoryLog) -> list[float | None]:
    return [s[0][0] if s else None for s in switch_times(log)]


def crowding_at(positions) -> float:
    """Mean inverse pairwise distance of the given points (0 for fewer than two)."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    iu = np.triu_indices(len(pts), 1)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)[iu]
    return float(np.mean(1.0 / np.maximum(d, 1e-12)))


def crowding_metric(log: TrajectoryLog, patch: int, t: float) -> float:
    k = int(np.argmin(np.abs(log.t - t)))
    inside = log.patch[k] == patch
    return crowding_at(np.column_stack([log.x[k, inside], log.y[k, inside]]))


def mean_effective_Kx(log: TrajectoryLog) -> np.ndarray:
    return log.effective_Kx.mean(axis=0)


def summary(log: TrajectoryLog, crowding_every: float = 1.0) -> dict:
    sw = switch_times(log)
    horizon = float(log.t[-1])
    times = np.arange(0.0, horizon + 1e-9, crowding_every)
    labels = log.labels or [str(i) for i in range(log.n_agents)]
    agents = []
    for i in range(log.n_agents):
        agents.append(dict(
            agent_id=i, label=labels[i],
            first_switch=sw[i][0][0] if sw[i] else None,
            switches=[dict(t=t, from_patch=a, to_patch=b) for t, a, b in sw[i]],
            picked_total=int(log.picked[:, i].sum()),
            mean_effective_Kx=float(log.effective_Kx[:, i].mean()),
            final=dict(z=float(log.z[-1, i]), x=float(log.x[-1, i]), y=float(log.y[-1, i])),
        ))
    counts = log.trash.counts() if log.trash is not None else {}
    return dict(
        t_end=horizon,
        agents=agents,
        crowding={str(pid): dict(t=times.tolist(),
                                 value=[crowding_metric(log, pid, tt) for tt in times])
                  for pid in (PATCH1, PATCH2)},
        trash={str(k): v for k, v in counts.items()},
    )


def write_summary(log: TrajectoryLog, path) -> dict:
    data = summary(log)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
    return data
