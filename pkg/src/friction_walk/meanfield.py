"""Fluctuation-free approximation: dK/dt = -eta |K| K and dX/dt = K/m.

Both integrate in closed form.  With r0 = |k0|,

    K_t = k0/r0 / (eta t + 1/r0),
    X_t = x0 + k0/(m eta r0) log(1 + eta r0 t),

so the mean-field tracer drifts off logarithmically in a fixed direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ZeroMomentum
from .kernel import PhysParams, as_vec3


@dataclass(frozen=True)
class MeanFieldState:
    k0: np.ndarray
    x0: np.ndarray
    eta: float
    m: float

    def __post_init__(self):
        k0 = as_vec3(self.k0, "k0")
        if not np.any(k0):
            raise ZeroMomentum("mean-field solution needs |k0| > 0")
        object.__setattr__(self, "k0", k0)
        object.__setattr__(self, "x0", as_vec3(self.x0, "x0"))
        if not (self.eta > 0 and self.m > 0):
            raise DomainError("eta and m must be > 0")

    @classmethod
    def from_params(cls, p: PhysParams, x0, k0):
        return cls(k0=k0, x0=x0, eta=p.eta, m=p.m)

    @property
    def r0(self) -> float:
        return float(np.linalg.norm(self.k0))

    @property
    def direction(self) -> np.ndarray:
        return self.k0 / self.r0


def _times(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(~np.isfinite(t)):
        raise DomainError("t must be finite and >= 0")
    return t


def meanfield_speed(st: MeanFieldState, t):
    """|K_t| = 1/(eta t + 1/|k0|)."""
    t = _times(t)
    return 1.0 / (st.eta * t + 1.0 / st.r0)


def meanfield_momentum(st: MeanFieldState, t):
    """K_t; shape (3,) for scalar t, (len(t), 3) for an array."""
    s = meanfield_speed(st, t)
    return s[..., None] * st.direction


def meanfield_distance(st: MeanFieldState, t):
    """|X_t - x0| = log(1 + eta |k0| t) / (m eta)."""
    t = _times(t)
    return np.log1p(st.eta * st.r0 * t) / (st.m * st.eta)


def meanfield_position(st: MeanFieldState, t):
    return st.x0 + meanfield_distance(st, t)[..., None] * st.direction


def residual_ode(st: MeanFieldState, t: float, h: float) -> float:
    """|central difference of K at t minus (-eta |K_t| K_t)|.

    For t < h the stencil uses the analytic continuation of the solution to
    small negative times, which is smooth while eta |k0| |t| < 1.
    """
    if not h > 0:
        raise DomainError("h must be > 0")
    if t < 0:
        raise DomainError("t must be >= 0")
    r0, eta = st.r0, st.eta
    if eta * r0 * h >= 1:
        raise DomainError("h too large for the stencil at t near 0")

    def K(s):
        return st.direction / (eta * s + 1.0 / r0)

    dK = (K(t + h) - K(t - h)) / (2.0 * h)
    Kt = K(t)
    return float(np.linalg.norm(dK + eta * np.linalg.norm(Kt) * Kt))


def log_grid(lo: float, hi: float, per_decade: int = 8) -> np.ndarray:
    """Log-spaced points from lo to hi inclusive, ``per_decade`` per factor 10."""
    if not (0 < lo < hi):
        raise DomainError("need 0 < lo < hi")
    n = int(round(per_decade * math.log10(hi / lo)))
    return np.logspace(math.log10(lo), math.log10(hi), n + 1)
