"""Exception types raised by the simulator and the verification checks."""

import math


class FrictionWalkError(Exception):
    """Base class for all package errors."""


class DomainError(FrictionWalkError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ZeroMomentum(FrictionWalkError, ValueError):
    """k = 0 is absorbing: the scattering rate vanishes and no jump ever occurs."""


class OutOfRange(FrictionWalkError, ValueError):
    """A query falls outside what the object covers (path horizon, slope range)."""

    # value reported for the rate function outside the attainable slopes
    sentinel = math.inf


class ResourceLimit(FrictionWalkError, RuntimeError):
    """A configured cap (jump count, time horizon) was hit before completion."""


class InsufficientTail(FrictionWalkError):
    """Too few tail events to estimate a large-deviation rate."""


class InsufficientData(FrictionWalkError, ValueError):
    """A statistical fit was requested on too few points."""
