"""Rotating reference-frame algebra.

Amplitude-invariant Park convention (2/3 scaling): a balanced three-phase
set of peak magnitude ``V_m`` maps to a dq vector of magnitude ``V_m``.
The zero-sequence component is dropped (three-wire circuits only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

_TWO_THIRDS_PI = 2.0 * math.pi / 3.0


@dataclass(frozen=True)
class ThreePhase:
    """Instantaneous phase quantities (V or A). May be unbalanced."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class DqPhasor:
    """A voltage or current in a rotating frame, rectangular components."""

    d: float
    q: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.d, self.q)

    @property
    def angle(self) -> float:
        """Angle in (-pi, pi]. Values near +-pi are a wrap hazard."""
        return math.atan2(self.q, self.d)

    @classmethod
    def from_polar(cls, magnitude: float, angle: float) -> "DqPhasor":
        return cls(magnitude * math.cos(angle), magnitude * math.sin(angle))


def park(x: ThreePhase, theta: float) -> DqPhasor:
    """Transform instantaneous abc quantities to the dq frame at angle theta."""
    ca = math.cos(theta)
    cb = math.cos(theta - _TWO_THIRDS_PI)
    cc = math.cos(theta + _TWO_THIRDS_PI)
    sa = math.sin(theta)
    sb = math.sin(theta - _TWO_THIRDS_PI)
    sc = math.sin(theta + _TWO_THIRDS_PI)
    d = (2.0 / 3.0) * (x.a * ca + x.b * cb + x.c * cc)
    q = -(2.0 / 3.0) * (x.a * sa + x.b * sb + x.c * sc)
    return DqPhasor(d, q)


def inverse_park(v: DqPhasor, theta: float) -> ThreePhase:
    """Reconstruct instantaneous abc quantities (zero sequence assumed 0)."""
    a = v.d * math.cos(theta) - v.q * math.sin(theta)
    b = v.d * math.cos(theta - _TWO_THIRDS_PI) - v.q * math.sin(theta - _TWO_THIRDS_PI)
    c = v.d * math.cos(theta + _TWO_THIRDS_PI) - v.q * math.sin(theta + _TWO_THIRDS_PI)
    return ThreePhase(a, b, c)


def rotate(v: DqPhasor, dtheta: float) -> DqPhasor:
    """Rotate a dq vector from one frame into a frame leading it by dtheta.

    This is the grid-to-PLL frame map: ``rotate(v_g, theta_pll)`` expresses
    the grid-frame vector ``v_g`` in the PLL frame, i.e. multiplication by
    ``exp(-j*dtheta)``.
    """
    c = math.cos(dtheta)
    s = math.sin(dtheta)
    return DqPhasor(v.d * c + v.q * s, -v.d * s + v.q * c)
