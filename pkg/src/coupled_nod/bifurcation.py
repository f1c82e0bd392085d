"""Equilibria, stability and fold points of the coupled (z, x) system.

Production branches are traced on the full two-dimensional system by
pseudo-arclength continuation.  The scalar reduction ``g(z)`` (x eliminated
through dz/dt = 0) is kept for diagnostics and as an independent oracle; it
divides by eta(z) and is therefore only usable near z = 0.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    AgentParams,
    coupled_field,
    jacobian,
    parameter_derivative,
    saturation,
    switch_fn,
    waypoint_x,
)

ETA_UNDERFLOW = 1e-300
RESIDUAL_TOL = 1e-10
MARGINAL_EIG = 1e-9
FREE_PARAMS = ("u", "b", "K_x")


class ReductionDomainError(ValueError):
    """eta(z) underflowed, so x cannot be eliminated at this z."""


class OutOfTheoryError(ValueError):
    """Parameter set violates a hypothesis of the pitchfork recognition problem."""


class ContinuationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# scalar reduction


def x_of_z(params: AgentParams, z, rho):
    """x on the dz/dt = 0 nullcline."""
    p = params
    eta = switch_fn(z, p.sigma)
    return z + (p.d * z - p.u * saturation(z) - p.b) / (p.K_z * eta)


def reduce_to_scalar(params: AgentParams, z: float, rho: float) -> tuple[float, float]:
    """Return ``(x(z), g(z))``; g vanishes exactly at equilibria of the 2-D system."""
    eta = float(switch_fn(z, params.sigma))
    if eta < ETA_UNDERFLOW:
        raise ReductionDomainError(f"eta({z}) = {eta:g} underflows; reduction invalid")
    x = float(x_of_z(params, z, rho))
    g = (1.0 - eta) * params.K_x * (float(waypoint_x(params, z, rho)) - x) - eta * (x - z)
    return x, g


def g_values(params: AgentParams, z: np.ndarray, rho: float) -> np.ndarray:
    """Vectorised g; NaN where eta underflows."""
    z = np.asarray(z, dtype=float)
    eta = switch_fn(z, params.sigma)
    ok = eta >= ETA_UNDERFLOW
    out = np.full(z.shape, np.nan)
    zz, ee = z[ok], eta[ok]
    x = zz + (params.d * zz - params.u * np.tanh(zz) - params.b) / (params.K_z * ee)
    out[ok] = (1.0 - ee) * params.K_x * (waypoint_x(params, zz, rho) - x) - ee * (x - zz)
    return out


def scan_g_roots(params: AgentParams, rho: float, z_lo: float, z_hi: float,
                 step: float = 1e-4, xtol: float = 1e-14) -> np.ndarray:
    """Roots of g on [z_lo, z_hi] by a uniform sign scan refined with bisection."""
    n = int(np.ceil((z_hi - z_lo) / step)) + 1
    grid = np.linspace(z_lo, z_hi, n)
    vals = g_values(params, grid, rho)
    roots = list(grid[vals == 0.0])
    s = np.sign(vals)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    for i in idx:
        a, b = grid[i], grid[i + 1]
        ga = vals[i]
        while b - a > xtol:
            m = 0.5 * (a + b)
            gm = reduce_to_scalar(params, m, rho)[1]
            if gm == 0.0:
                a = b = m
                break
            if np.sign(gm) == np.sign(ga):
                a, ga = m, gm
            else:
                b = m
        roots.append(0.5 * (a + b))
    return np.sort(np.asarray(roots, dtype=float))


# ---------------------------------------------------------------------------
# equilibria of the full system


def _with_param(params: AgentParams, name: str, value: float) -> AgentParams:
    return params.with_(**{name: float(value)})


def residual(params: AgentParams, z: float, x: float, rho: float) -> np.ndarray:
    dz, dx = coupled_field(params, z, x, rho)
    return np.array([dz, dx], dtype=float)


def newton_equilibrium(params: AgentParams, rho: float, z0: float, x0: float,
                       tol: float = 1e-13, maxiter: int = 60) -> tuple[float, float]:
    """Newton solve of (dz, dx) = 0 at fixed parameters."""
    w = np.array([z0, x0], dtype=float)
    for _ in range(maxiter):
        F = residual(params, w[0], w[1], rho)
        if np.max(np.abs(F)) <= tol:
            return float(w[0]), float(w[1])
        try:
            step = np.linalg.solve(jacobian(params, w[0], w[1], rho), -F)
        except np.linalg.LinAlgError as exc:
            raise ContinuationError("singular Jacobian in Newton solve") from exc
        # damp huge steps; the Gaussian gate makes far iterates useless
        scale = np.max(np.abs(step))
        if scale > 0.5:
            step *= 0.5 / scale
        w += step
        if not np.all(np.isfinite(w)):
            break
    F = residual(params, w[0], w[1], rho)
    if np.all(np.isfinite(F)) and np.max(np.abs(F)) <= RESIDUAL_TOL:
        return float(w[0]), float(w[1])
    raise ContinuationError(f"Newton did not converge from ({z0}, {x0})")


def newton_equilibria_grid(params: AgentParams, rho: float, z_range=(-1.0, 1.0),
                           x_range=(-1.5, 1.5), n_z: int = 41, n_x: int = 31,
                           dedupe: float = 1e-7) -> np.ndarray:
    """All distinct equilibria reached by Newton from a grid of starting points."""
    found: list[tuple[float, float]] = []
    for z0 in np.linspace(*z_range, n_z):
        for x0 in np.linspace(*x_range, n_x):
            try:
                z, x = newton_equilibrium(params, rho, z0, x0)
            except ContinuationError:
                continue
            if not z_range[0] - 1e-12 <= z <= z_range[1] + 1e-12:
                continue
            if all(abs(z - fz) > dedupe or abs(x - fx) > dedupe for fz, fx in found):
                found.append((z, x))
    found.sort()
    return np.array(found, dtype=float).reshape(-1, 2)


def stability(params: AgentParams, z: float, x: float, rho: float) -> str:
    re = np.linalg.eigvals(jacobian(params, z, x, rho)).real
    top = float(np.max(re))
    if top < -MARGINAL_EIG:
        return "stable"
    if top > MARGINAL_EIG:
        return "unstable"
    return "marginal"


# ---------------------------------------------------------------------------
# analysis at the neutral equilibrium


def neutral_jacobian(params: AgentParams) -> np.ndarray:
    p = params
    return np.array([[-p.d + p.u - p.K_z, p.K_z], [1.0, -1.0]])


def neutral_stability(params: AgentParams) -> str:
    """Stability of (z, x) = (0, 0) for b = 0 from the eigenvalues of its Jacobian."""
    if params.b != 0:
        raise ValueError("neutral-equilibrium analysis requires b = 0")
    eig = np.linalg.eigvals(neutral_jacobian(params))
    det = params.d - params.u
    # the product of eigenvalues equals d - u; decide marginality from it
    # directly so that u = d is not lost to rounding in the eigensolver
    if det == 0.0:
        return "marginal"
    return "stable" if np.all(eig.real < 0) else "unstable"


def cubic_coefficient(params: AgentParams, rho: float) -> float:
    """Criticality coefficient -2d/K_z - 3 K_x (1 - k rho / l) / sigma."""
    p = params
    return -2.0 * p.d / p.K_z - 3.0 * p.K_x * (1.0 - p.k * rho / p.l) / p.sigma


def quintic_coefficient(params: AgentParams, rho: float) -> float:
    p = params
    r = rho / p.l
    inner = (20.0 * p.K_x * p.K_z * p.k**3 * p.sigma * r + 15.0 * p.K_x * p.K_z * p.k * r
             - 16.0 * p.d * p.sigma**2 + 20.0 * p.K_x * p.d * p.sigma - 15.0 * p.K_x * p.K_z)
    return -inner / (p.K_z * p.sigma**2)


def series_cubic_coefficient(params: AgentParams, rho: float) -> float:
    """Third z-derivative of g at (z, u, b) = (0, d, 0) from the Taylor series of g.

    Differs from :func:`cubic_coefficient` in the power of sigma
    (1 - eta ~ z^2 / (2 sigma^2)); both agree in sign on the shipped parameter sets.
    """
    p = params
    return 3.0 * p.K_x * (p.k * rho / p.l - 1.0) / p.sigma**2 - 2.0 * p.d / p.K_z


def classify_criticality(params: AgentParams, rho: float, tol: float = 1e-12) -> str:
    if params.b != 0:
        raise ValueError("criticality is defined for the unbiased problem (b = 0)")
    if quintic_coefficient(params, rho) >= 0:
        raise OutOfTheoryError("quintic coefficient is non-negative; pitchfork recognition fails")
    c3 = cubic_coefficient(params, rho)
    if abs(c3) <= tol:
        return "degenerate_quintic"
    return "supercritical" if c3 < 0 else "subcritical_quintic"


def normal_form_saddles(u: float, d: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Fold points of -z^3 + (u - d) z + b as b varies."""
    if u <= d:
        raise ValueError("saddle-node pair exists only for u > d")
    a = (u - d) / 3.0
    z1, b1 = np.sqrt(a), -2.0 * a**1.5
    return (float(z1), float(b1)), (float(-z1), float(-b1))


# ---------------------------------------------------------------------------
# continuation


@dataclass(frozen=True)
class BifurcationProblem:
    params: AgentParams
    free_param: str
    range: tuple[float, float]
    rho: float = 0.5

    def __post_init__(self):
        if self.free_param not in FREE_PARAMS:
            raise ValueError(f"free_param must be one of {FREE_PARAMS}")
        lo, hi = self.range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("range must be a finite interval lo < hi")

    def at(self, value: float) -> AgentParams:
        return _with_param(self.params, self.free_param, value)


@dataclass(frozen=True)
class Fold:
    param: float
    z: float
    x: float
    kind: str = "fold"  # or "branch_point"


@dataclass
class EquilibriumBranch:
    problem: BifurcationProblem
    param: np.ndarray
    z: np.ndarray
    x: np.ndarray
    stability: list[str]
    folds: list[Fold] = field(default_factory=list)
    branch_points: list[Fold] = field(default_factory=list)

    def __len__(self):
        return len(self.param)

    def equilibria_at(self, value: float, dedupe: float = 1e-7) -> np.ndarray:
        """Equilibria on this branch at ``param = value``, Newton-refined at that value."""
        pr = self.problem
        params = pr.at(value)
        out: list[tuple[float, float]] = []
        d = self.param - value
        for i in range(len(d) - 1):
            if d[i] == 0.0 or d[i] * d[i + 1] < 0:
                t = 0.0 if d[i] == 0.0 else d[i] / (d[i] - d[i + 1])
                z0 = self.z[i] + t * (self.z[i + 1] - self.z[i])
                x0 = self.x[i] + t * (self.x[i + 1] - self.x[i])
                z, x = newton_equilibrium(params, pr.rho, z0, x0)
                if all(abs(z - a) > dedupe for a, _ in out):
                    out.append((z, x))
        if len(d) and d[-1] == 0.0 and all(abs(self.z[-1] - a) > dedupe for a, _ in out):
            out.append((float(self.z[-1]), float(self.x[-1])))
        out.sort()
        return np.array(out, dtype=float).reshape(-1, 2)

    def rows(self):
        fold_params = {(f.param, f.z) for f in self.folds}
        for p, z, x, s in zip(self.param, self.z, self.x, self.stability):
            yield p, z, x, s, int((p, z) in fold_params)

    def to_csv(self, path) -> None:
        """Write ``param,z,x,stability,is_fold``; refined folds are merged in arclength order."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "z", "x", "stability", "is_fold"])
            for p, z, x, s, f in self.rows():
                w.writerow([repr(float(p)), repr(float(z)), repr(float(x)), s, f])

    def folds_json(self) -> list[dict]:
        return [dict(param=f.param, z=f.z, x=f.x, kind=f.kind) for f in self.folds]


def _augmented(params: AgentParams, name: str, w: np.ndarray, rho: float) -> np.ndarray:
    p = _with_param(params, name, w[2])
    return np.column_stack([jacobian(p, w[0], w[1], rho),
                            parameter_derivative(p, w[0], w[1], rho, name)])


def _raw_tangent(params: AgentParams, name: str, w: np.ndarray, rho: float) -> np.ndarray:
    """Cross product of the rows of [J | F_p]; reverses orientation at branch points."""
    M = _augmented(params, name, w, rho)
    return np.cross(M[0], M[1])


def _null_tangent(params: AgentParams, name: str, w: np.ndarray, rho: float) -> np.ndarray:
    t = _raw_tangent(params, name, w, rho)
    n = np.linalg.norm(t)
    if n == 0.0:
        t = np.linalg.svd(_augmented(params, name, w, rho))[2][-1]
        n = np.linalg.norm(t)
    return t / n


def _correct(params: AgentParams, name: str, rho: float, w_pred: np.ndarray, tau: np.ndarray,
             tol: float, maxiter: int = 10):
    w = w_pred.copy()
    for it in range(1, maxiter + 1):
        p = _with_param(params, name, w[2])
        F = residual(p, w[0], w[1], rho)
        r = np.append(F, tau @ (w - w_pred))
        if not np.all(np.isfinite(r)):
            return None, it
        if np.max(np.abs(F)) <= tol and abs(r[2]) <= tol:
            return w, it
        A = np.vstack([_augmented(params, name, w, rho), tau])
        try:
            dw = np.linalg.solve(A, -r)
        except np.linalg.LinAlgError:
            return None, it
        w = w + dw
        if not np.isfinite(w[2]) or not _param_ok(name, w[2]):
            return None, it
    p = _with_param(params, name, w[2])
    F = residual(p, w[0], w[1], rho)
    if np.all(np.isfinite(F)) and np.max(np.abs(F)) <= tol:
        return w, maxiter
    return None, maxiter


def _param_ok(name: str, value: float) -> bool:
    return name == "b" or value > 0


def continue_branch(problem: BifurcationProblem, start: tuple[float, float, float],
                    direction: int = -1, tangent=None, ds: float = 1e-3, ds_max: float = 0.02,
                    tol: float = 1e-12, max_steps: int = 20000,
                    max_halvings: int = 10, fold_tol: float = 1e-8) -> EquilibriumBranch:
    """Pseudo-arclength continuation from ``start = (param, z, x)``.

    ``direction`` is the initial sign of d(param)/ds; ``tangent`` (a vector in
    (z, x, param) order) overrides it, e.g. after a branch switch.  Tracing
    stops when the parameter leaves ``problem.range`` or after ``max_steps``
    accepted steps.  Turning points of the parameter are refined by bisection
    on the arclength.  A reversal of the null-vector orientation marks a branch
    point; turning points that coincide with one (the symmetric pitchfork seen
    from its side branch) are reported as branch points, not folds.
    """
    pr = problem
    name, rho, params = pr.free_param, pr.rho, pr.params
    lo, hi = pr.range
    p0, z0, x0 = (float(v) for v in start)
    z0, x0 = newton_equilibrium(_with_param(params, name, p0), rho, z0, x0)
    w = np.array([z0, x0, p0])
    tau = _null_tangent(params, name, w, rho)
    if tangent is not None:
        if tau @ np.asarray(tangent, dtype=float) < 0:
            tau = -tau
    elif tau[2] * direction < 0 or (tau[2] == 0 and direction < 0):
        tau = -tau
    t_prev = tau
    orient_prev = np.sign(_raw_tangent(params, name, w, rho) @ tau)

    pts = [w.copy()]
    folds: list[Fold] = []
    branch_points: list[Fold] = []
    h = ds
    for _ in range(max_steps):
        halvings = 0
        while True:
            w_new, iters = _correct(params, name, rho, w + h * tau, tau, tol)
            if w_new is not None and np.linalg.norm(w_new - w) <= 3.0 * h:
                break
            h *= 0.5
            halvings += 1
            if halvings > max_halvings:
                raise ContinuationError(
                    f"corrector failed after {max_halvings} step halvings near "
                    f"{name}={w[2]:.6g}, z={w[0]:.6g}")
        secant = w_new - w
        span = np.linalg.norm(secant)
        secant /= span
        t_new = _null_tangent(params, name, w_new, rho)
        if t_new @ secant < 0:
            t_new = -t_new
        orient = np.sign(_raw_tangent(params, name, w_new, rho) @ secant)
        turned = t_prev[2] * t_new[2] < 0
        crossed = orient * orient_prev < 0
        if turned or crossed:
            if turned:
                sign_a = np.sign(t_prev[2])

                def same_side(wm, tm, _s=sign_a):
                    return np.sign(tm[2]) == _s
            else:
                def same_side(wm, tm, _o=orient_prev):
                    return np.sign(_raw_tangent(params, name, wm, rho) @ tm) == _o
            fw = _bisect(params, name, rho, w, t_prev, span, tol, same_side,
                         fold_tol if turned else 1e-2 * fold_tol)
            f = Fold(float(fw[2]), float(fw[0]), float(fw[1]),
                     "branch_point" if crossed else "fold")
            (branch_points if crossed else folds).append(f)
            pts.append(fw)
        w, tau, t_prev, orient_prev = w_new, secant, t_new, orient
        pts.append(w.copy())
        if iters <= 3:
            h = min(h * 1.5, ds_max)
        if not lo <= w[2] <= hi:
            break

    arr = np.array(pts)
    stab = [stability(_with_param(params, name, pp), zz, xx, rho) for zz, xx, pp in arr]
    special = {(f.param, f.z) for f in folds + branch_points}
    for i, (zz, xx, pp) in enumerate(arr):
        if (pp, zz) in special:
            stab[i] = "marginal"
    return EquilibriumBranch(pr, arr[:, 2], arr[:, 0], arr[:, 1], stab, folds, branch_points)


def _bisect(params, name, rho, w_a, tau_a, span, tol, same_side, fold_tol) -> np.ndarray:
    """Bisect the arclength between w_a and the next accepted sample."""
    lo_s, hi_s = 0.0, span
    best = w_a
    # the parameter is stationary at a fold, so its error scales like ds^2;
    # callers pass a smaller fold_tol for branch points
    s_tol = 1e-3 * np.sqrt(fold_tol) if fold_tol >= 1e-8 else fold_tol
    while hi_s - lo_s > s_tol:
        mid = 0.5 * (lo_s + hi_s)
        w_mid, _ = _correct(params, name, rho, w_a + mid * tau_a, tau_a, tol)
        if w_mid is None:
            break
        best = w_mid
        t = _null_tangent(params, name, w_mid, rho)
        if t @ tau_a < 0:
            t = -t
        if same_side(w_mid, t):
            lo_s = mid
        else:
            hi_s = mid
    return best


def switch_branch(problem: BifurcationProblem, bp: Fold, along: np.ndarray,
                  eps: float = 1e-3, tol: float = 1e-12):
    """Start points on the branch crossing ``along`` at branch point ``bp``.

    Returns ``[(start, tangent), ...]`` for both directions of the new branch.
    """
    name, rho, params = problem.free_param, problem.rho, problem.params
    w_bp = np.array([bp.z, bp.x, bp.param])
    along = np.asarray(along, dtype=float)
    along = along / np.linalg.norm(along)
    vt = np.linalg.svd(_augmented(params, name, w_bp, rho))[2]
    best = None
    for k in vt[1:]:
        v = k - (k @ along) * along
        if best is None or np.linalg.norm(v) > np.linalg.norm(best):
            best = v
    v = best / np.linalg.norm(best)
    out = []
    for sgn in (+1.0, -1.0):
        w_pred = w_bp + sgn * eps * v
        w, _ = _correct(params, name, rho, w_pred, v, tol)
        if w is None:
            raise ContinuationError("branch switch corrector failed")
        out.append(((float(w[2]), float(w[0]), float(w[1])), sgn * v))
    return out


# ---------------------------------------------------------------------------
# convenience drivers


def opinionated_start(params: AgentParams, rho: float, sign: int = 1) -> tuple[float, float]:
    """Equilibrium with the largest |z| on the requested side, found by Newton from |z| = 3."""
    z0 = 3.0 * sign
    return newton_equilibrium(params, rho, z0, float(waypoint_x(params, z0, rho)))


def b_branch(params: AgentParams, rho: float, b_range=(-1.0, 1.0), **kw) -> EquilibriumBranch:
    """Whole equilibrium curve in b, traced from the positive opinion at the top of the range.

    Equilibria form a graph b(z), so one branch from large z > 0 down to large
    z < 0 contains every equilibrium in the range.
    """
    b_hi = b_range[1]
    p = params.with_(b=b_hi)
    z, x = opinionated_start(p, rho, +1)
    pr = BifurcationProblem(params, "b", tuple(b_range), rho)
    return continue_branch(pr, (b_hi, z, x), direction=-1, **kw)


def u_diagram(params: AgentParams, rho: float, u_range=(0.5, 1.2)) -> list[EquilibriumBranch]:
    """Equilibrium branches in u at b = 0.

    The neutral branch is traced first; at each of its branch points the
    crossing branch is followed both ways.  The outermost opinionated
    equilibria at the top of the range are traced downward as well, since
    for the subcritical case they need not connect to the pitchfork.
    """
    if params.b != 0:
        raise ValueError("u_diagram assumes the unbiased problem (b = 0)")
    lo, hi = u_range
    pr = BifurcationProblem(params, "u", (lo, hi), rho)
    trivial = continue_branch(pr, (lo, 0.0, 0.0), direction=+1)
    branches = [trivial]
    for bp in trivial.branch_points:
        for start, tangent in switch_branch(pr, bp, np.array([0.0, 0.0, 1.0])):
            branches.append(continue_branch(pr, start, tangent=tangent))
    top = params.with_(u=hi)
    for sign in (+1, -1):
        try:
            z, x = opinionated_start(top, rho, sign)
        except ContinuationError:
            continue
        known = np.vstack([br.equilibria_at(hi) for br in branches] + [np.empty((0, 2))])
        if len(known) and np.min(np.abs(known[:, 0] - z) + np.abs(known[:, 1] - x)) < 1e-7:
            continue
        branches.append(continue_branch(pr, (hi, z, x), direction=-1))
    return branches


def equilibria_on(branches, value: float, dedupe: float = 1e-7) -> np.ndarray:
    """Distinct equilibria at ``param = value`` over several branches, sorted by z."""
    pts: list[tuple[float, float]] = []
    for br in branches:
        for z, x in br.equilibria_at(value):
            if all(abs(z - a) > dedupe or abs(x - c) > dedupe for a, c in pts):
                pts.append((float(z), float(x)))
    pts.sort()
    return np.array(pts, dtype=float).reshape(-1, 2)


def saddle_pair(branch: EquilibriumBranch) -> tuple[Fold, Fold]:
    """Folds nearest to z = 0 on each side: the pair born at the pitchfork."""
    pos = [f for f in branch.folds if f.z > 0]
    neg = [f for f in branch.folds if f.z < 0]
    if not pos or not neg:
        raise ContinuationError("branch does not contain a fold on both sides of z = 0")
    return min(pos, key=lambda f: f.z), max(neg, key=lambda f: f.z)


@dataclass(frozen=True)
class Sensitivity:
    which: str
    fold: Fold
    analytic: float
    finite_difference: float


def dbstar_dKx_formula(params: AgentParams, z: float, b: float, rho: float) -> float:
    """Closed-form d b*/d K_x at a fold (z, b)."""
    p = params
    eta = float(switch_fn(z, p.sigma))
    lead = p.K_z * (eta - 1.0) / (p.K_x * (1.0 / eta - 1.0) + 1.0)
    tail = (rho * np.tanh(p.k * z) / p.l
            + (b - p.d * z + p.u * saturation(z) - p.K_z * z * eta) / (p.K_z * eta))
    return float(lead * tail)


def threshold_sensitivity(problem: BifurcationProblem, which: str, fold: Fold | None = None,
                          delta: float = 1e-3, branch: EquilibriumBranch | None = None) -> Sensitivity:
    """Analytic and central-difference d b*/d(which) at a fold of a b-continuation."""
    if problem.free_param != "b":
        raise ValueError("threshold sensitivity needs a b-continuation problem")
    if which not in ("u", "K_x"):
        raise ValueError("which must be 'u' or 'K_x'")
    if fold is None:
        branch = branch or b_branch(problem.params, problem.rho, problem.range)
        fold = saddle_pair(branch)[0]
    if fold.kind != "fold":
        raise ContinuationError("sensitivity is defined only at a converged fold")
    p = problem.params.with_(b=fold.param)
    check = residual(p, fold.z, fold.x, problem.rho)
    if np.max(np.abs(check)) > RESIDUAL_TOL:
        raise ContinuationError("fold is not a converged equilibrium")
    if which == "u":
        analytic = -float(saturation(fold.z))
    else:
        analytic = dbstar_dKx_formula(p, fold.z, fold.param, problem.rho)

    base = getattr(problem.params, which)
    shifted = []
    for sgn in (+1, -1):
        q = problem.params.with_(**{which: base + sgn * delta})
        br = b_branch(q, problem.rho, problem.range)
        if not br.folds:
            raise ContinuationError("no fold in perturbed continuation")
        shifted.append(min(br.folds, key=lambda f: abs(f.z - fold.z)).param)
    fd = (shifted[0] - shifted[1]) / (2.0 * delta)
    return Sensitivity(which, fold, analytic, float(fd))


def threshold_table(params: AgentParams, rho: float, which: str, values,
                    b_range=(-1.0, 1.0)) -> list[dict]:
    """Switching thresholds (innermost fold pair) for each value of ``which``."""
    rows = []
    for i, v in enumerate(values):
        q = params.with_(**{which: float(v)})
        row = dict(index=i, param_value=float(v), ok=True)
        try:
            f1, f2 = saddle_pair(b_branch(q, rho, b_range))
            row.update(b1_star=f1.param, b2_star=f2.param, z1_star=f1.z, z2_star=f2.z)
        except (ContinuationError, ValueError) as exc:
            row.update(b1_star=np.nan, b2_star=np.nan, z1_star=np.nan, z2_star=np.nan,
                       ok=False, error=str(exc))
        rows.append(row)
    return rows


def write_folds_json(branch: EquilibriumBranch, path) -> None:
    Path(path).write_text(json.dumps(
        dict(free_param=branch.problem.free_param, folds=branch.folds_json(),
             branch_points=[dict(param=f.param, z=f.z, x=f.x) for f in branch.branch_points]),
        indent=2))
