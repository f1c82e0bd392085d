"""Coupled opinion / physical dynamics of a single agent choosing between two patches.

The opinion ``z`` (sign = preferred patch, magnitude = commitment) follows a
saturating self-reinforcing ODE and is coupled to the horizontal position ``x``
through a Gaussian gate ``eta(z)`` that switches between waypoint navigation
(``|z|`` large) and travel toward the origin (``|z|`` small).

All field functions are written with numpy ufuncs and accept scalars or arrays.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

PATCH1, PATCH2, TRANSIT = 1, 2, 0


def saturation(z):
    """Odd saturating function with S(0) = 0 and S'(0) = 1."""
    return np.tanh(z)


def saturation_prime(z):
    return 1.0 / np.cosh(z) ** 2


def switch_fn(z, sigma):
    """Smooth switch eta(z) = exp(-z^2 / (2 sigma^2)), in (0, 1]."""
    return np.exp(-(z * z) / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class AgentParams:
    d: float = 1.0
    u: float = 1.3
    b: float = 0.0
    K_z: float = 2.0
    K_x: float = 0.15
    K_y: float = 0.15
    k: float = 10.0
    sigma: float = 0.1
    l: float = 1.0

    def __post_init__(self):
        for name in ("d", "u", "K_z", "K_x", "K_y", "k", "sigma", "l"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"AgentParams.{name} must be finite and > 0, got {value!r}")
        if not np.isfinite(self.b):
            raise ValueError(f"AgentParams.b must be finite, got {self.b!r}")

    def with_(self, **changes) -> "AgentParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Patch:
    """Axis-aligned rectangular task region."""

    id: int
    x_bounds: tuple[float, float]
    y_bounds: tuple[float, float]

    def contains(self, x, y):
        return (
            (x >= self.x_bounds[0]) & (x <= self.x_bounds[1])
            & (y >= self.y_bounds[0]) & (y <= self.y_bounds[1])
        )

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * sum(self.x_bounds), 0.5 * sum(self.y_bounds))

    @property
    def outer_bound(self) -> float:
        return max(abs(self.x_bounds[0]), abs(self.x_bounds[1]))


def mirrored_patches(inner: float, l: float = 1.0, y_bounds=(-0.5, 0.5)) -> tuple[Patch, Patch]:
    """Patch 1 on x > 0 and its mirror image patch 2, outer edges at distance ``l``."""
    if not 0 <= inner < l:
        raise ValueError("need 0 <= inner < l")
    y_bounds = (float(y_bounds[0]), float(y_bounds[1]))
    return (
        Patch(PATCH1, (float(inner), float(l)), y_bounds),
        Patch(PATCH2, (-float(l), -float(inner)), y_bounds),
    )


@dataclass
class AgentState:
    z: float
    x: float
    y: float
    y_bar: float | None = None
    rho: float = 0.0
    patch: int = TRANSIT

    @property
    def has_waypoint(self) -> bool:
        return self.y_bar is not None


def uncoupled_opinion_field(params: AgentParams, z, b=None, u=None):
    """dz/dt = -d z + u S(z) + b of the isolated opinion dynamics."""
    b = params.b if b is None else b
    u = params.u if u is None else u
    return -params.d * z + u * saturation(z) + b


def waypoint_x(params: AgentParams, z, rho):
    """Opinion-dependent x coordinate of the waypoint, (rho / l) tanh(k z)."""
    return (rho / params.l) * np.tanh(params.k * z)


def coupled_field(params: AgentParams, z, x, rho, *, b=None, u=None, K_x=None):
    """Right-hand side (dz, dx) of the coupled opinion/position model.

    ``b``, ``u`` and ``K_x`` override the values carried by ``params``; the
    simulator uses this for per-step bias and the crowd-dependent K_x.
    """
    K_x = params.K_x if K_x is None else K_x
    eta = switch_fn(z, params.sigma)
    dz = uncoupled_opinion_field(params, z, b=b, u=u) - params.K_z * eta * (z - x)
    dx = (1.0 - eta) * K_x * (waypoint_x(params, z, rho) - x) - eta * (x - z)
    return dz, dx


def y_field(params: AgentParams, y, y_bar):
    return params.K_y * (y_bar - y)


def jacobian(params: AgentParams, z: float, x: float, rho: float) -> np.ndarray:
    """Analytic 2x2 Jacobian of (dz, dx) with respect to (z, x)."""
    p = params
    eta = switch_fn(z, p.sigma)
    deta = -z / p.sigma**2 * eta
    xbar = waypoint_x(p, z, rho)
    dxbar = (rho / p.l) * p.k / np.cosh(p.k * z) ** 2
    f_z = -p.d + p.u * saturation_prime(z) - p.K_z * (deta * (z - x) + eta)
    f_x = p.K_z * eta
    h_z = -deta * p.K_x * (xbar - x) + (1.0 - eta) * p.K_x * dxbar - deta * (x - z) + eta
    h_x = -(1.0 - eta) * p.K_x - eta
    return np.array([[f_z, f_x], [h_z, h_x]], dtype=float)


def parameter_derivative(params: AgentParams, z: float, x: float, rho: float, name: str) -> np.ndarray:
    """d(dz, dx)/d(name) for name in {"u", "b", "K_x"}."""
    if name == "b":
        return np.array([1.0, 0.0])
    if name == "u":
        return np.array([float(saturation(z)), 0.0])
    if name == "K_x":
        eta = switch_fn(z, params.sigma)
        return np.array([0.0, float((1.0 - eta) * (waypoint_x(params, z, rho) - x))])
    raise ValueError(f"unsupported parameter {name!r}")
