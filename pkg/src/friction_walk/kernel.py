"""Physical parameters, dispersion laws and the zero-temperature jump kernel.

With ``a = m/(m+M)`` the energy shell of a jump from momentum ``k`` is the
sphere ``a k + (1-a)|k| S^2`` and the landing point is uniform on it.  The
total jump rate is linear in ``|k|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ZeroMomentum
from .rng import RandomStream


@dataclass(frozen=True)
class PhysParams:
    """Tracer mass ``m``, atom mass ``M`` and coupling ``w`` (fixed to 1)."""

    m: float = 1.0
    M: float = 1.0
    w: float = 1.0

    def __post_init__(self):
        for name in ("m", "M"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"mass {name} must be finite and > 0, got {v!r}")
        if self.w != 1.0:
            raise DomainError(f"coupling w is fixed to 1 in these units, got {self.w!r}")
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "M", float(self.M))

    @property
    def a(self) -> float:
        """Mass ratio m/(m+M)."""
        return self.m / (self.m + self.M)

    @property
    def one_minus_a(self) -> float:
        """M/(m+M), without the cancellation of 1 - a when m >> M."""
        return self.M / (self.m + self.M)

    @property
    def rate_coeff(self) -> float:
        """Sigma(k)/|k| = 4 pi M^2 m / (m+M)^2."""
        return 4.0 * math.pi * self.M**2 * self.m / (self.m + self.M) ** 2

    @property
    def eta(self) -> float:
        """Friction coefficient in E(dK | K) = -eta |K| K dt."""
        return 4.0 * math.pi * self.M**3 * self.m / (self.m + self.M) ** 3

    @property
    def increment_prefactor(self) -> float:
        """(m+M)^2 / (4 pi m^2 M^2): displacement per unit lambda_j Y_j."""
        return (self.m + self.M) ** 2 / (4.0 * math.pi * self.m**2 * self.M**2)


def as_vec3(v, name="vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise DomainError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite components: {arr}")
    return arr


def epsilon(p: PhysParams, k) -> float:
    """Tracer kinetic energy |k|^2 / 2m."""
    k = as_vec3(k, "k")
    return float(k @ k) / (2.0 * p.m)


def omega(p: PhysParams, q) -> float:
    """Atom kinetic energy |q|^2 / 2M."""
    q = as_vec3(q, "q")
    return float(q @ q) / (2.0 * p.M)


def energy_residual(p: PhysParams, k, k2) -> float:
    """eps(k) - eps(k') - omega(k - k'); zero exactly on the energy shell."""
    k = as_vec3(k, "k")
    k2 = as_vec3(k2, "k'")
    return epsilon(p, k) - epsilon(p, k2) - omega(p, k - k2)


def scattering_rate(p: PhysParams, k) -> float:
    k = as_vec3(k, "k")
    return p.rate_coeff * float(np.linalg.norm(k))


def jump_from_direction(p: PhysParams, k, u) -> np.ndarray:
    """Landing momentum a k + (1-a)|k| u for a given unit vector u."""
    k = as_vec3(k, "k")
    u = as_vec3(u, "u")
    return p.a * k + p.one_minus_a * np.linalg.norm(k) * u


def sample_jump(p: PhysParams, k, rng: RandomStream) -> np.ndarray:
    k = as_vec3(k, "k")
    if not np.any(k):
        raise ZeroMomentum("k = 0 is absorbing; there is no next jump")
    return jump_from_direction(p, k, rng.directions(1)[0])


def sample_jumps(p: PhysParams, K: np.ndarray, rng: RandomStream) -> np.ndarray:
    """Vectorised :func:`sample_jump` over the rows of ``K`` (shape (n, 3))."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[1] != 3:
        raise DomainError(f"K must have shape (n, 3), got {K.shape}")
    if not np.all(np.isfinite(K)):
        raise DomainError("K has non-finite entries")
    R = np.sqrt(np.einsum("ij,ij->i", K, K))
    if np.any(R == 0.0):
        raise ZeroMomentum(f"{int(np.sum(R == 0.0))} rows of K are zero")
    return p.a * K + p.one_minus_a * R[:, None] * rng.directions(len(K))


def mean_drift(p: PhysParams, k) -> np.ndarray:
    """Exact Sigma(k) E(k' - k) using E(U) = 0."""
    k = as_vec3(k, "k")
    return -scattering_rate(p, k) * p.one_minus_a * k


def friction_drift(p: PhysParams, k) -> np.ndarray:
    """-eta |k| k."""
    k = as_vec3(k, "k")
    return -p.eta * np.linalg.norm(k) * k
