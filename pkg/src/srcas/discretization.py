"""Exact discretization of the converter over one switching period.

The tank (iL, vc) is propagated with the output voltage frozen at its
period-start value; the output filter is then driven by the rectified
closed-form tank current. Both steps are exact for that two-step model, so
the composed one-period map is linear in the period-start state and input
for fixed subinterval times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.linalg import expm

from .core import (ConverterParams, StateVector, SubintervalTimes, big_g2, derive_params,
                   g1, g1_prime)


class ConfigIndex(IntEnum):
    """Switch configurations of one period, in order of occurrence."""

    NEG_ON = 1   # bridge +Vin, iL < 0, [0, T1]
    POS_ON = 2   # bridge +Vin, iL > 0, [T1, Ts/2]
    POS_OFF = 3  # bridge -Vin, iL > 0, [Ts/2, T3]
    NEG_OFF = 4  # bridge -Vin, iL < 0, [T3, Ts]

    @property
    def bridge_sign(self) -> int:
        return 1 if self in (ConfigIndex.NEG_ON, ConfigIndex.POS_ON) else -1

    @property
    def current_sign(self) -> int:
        """Polarity of iL, which sets the rectifier state."""
        return 1 if self in (ConfigIndex.POS_ON, ConfigIndex.POS_OFF) else -1


def drive_voltage(config: ConfigIndex, vin: float, vo: float, N: float) -> float:
    """Voltage the tank rotates about in ``config``: bridge voltage minus the
    reflected output voltage."""
    config = ConfigIndex(config)
    return config.bridge_sign * vin - config.current_sign * vo / N


def _check_dt(dt):
    if not dt >= 0:
        raise ValueError(f"propagation interval must be non-negative, got {dt!r}")


def propagate_tank(state2, inputs, config: ConfigIndex, dt: float,
                   p: ConverterParams) -> tuple[float, float]:
    """Advance (iL, vc) through ``dt`` seconds of ``config``.

    ``inputs`` is ``(Vin, Vo)``, both held constant over the interval.
    """
    _check_dt(dt)
    iL, vc = state2
    vin, vo = inputs
    w = 1.0 / math.sqrt(p.Lr * p.Cr)
    Z = math.sqrt(p.Lr / p.Cr)
    E = drive_voltage(config, vin, vo, p.N)
    c, s = math.cos(w * dt), math.sin(w * dt)
    return iL * c - (vc - E) / Z * s, E + (vc - E) * c + Z * iL * s


def propagate_output(vo: float, tank_start, inputs, config: ConfigIndex, dt: float,
                     p: ConverterParams) -> float:
    """Advance the output voltage through ``dt`` seconds of ``config``.

    The RC output filter is driven by the rectified tank current ``|iL|/N``,
    where iL is the closed-form tank solution starting from ``tank_start``.
    ``inputs`` is ``(Vin, Vo_frozen)`` as seen by the tank.
    """
    _check_dt(dt)
    config = ConfigIndex(config)
    iL0, vc0 = tank_start
    vin, vo_frozen = inputs
    w = 1.0 / math.sqrt(p.Lr * p.Cr)
    Z = math.sqrt(p.Lr / p.Cr)
    a = 1.0 / (p.Ro * p.Co)
    E = drive_voltage(config, vin, vo_frozen, p.N)
    K = -(vc0 - E) / Z  # iL(t) = iL0 cos wt + K sin wt
    G = a * a + w * w
    decay = math.exp(-a * dt)
    c, s = math.cos(w * dt), math.sin(w * dt)
    conv_cos = (a * c + w * s - a * decay) / G
    conv_sin = (a * s - w * c + w * decay) / G
    return decay * vo + config.current_sign / (p.N * p.Co) * (iL0 * conv_cos + K * conv_sin)


def _segments(times: SubintervalTimes):
    Ts = times.Ts
    return ((ConfigIndex.NEG_ON, times.T1), (ConfigIndex.POS_ON, Ts / 2 - times.T1),
            (ConfigIndex.POS_OFF, times.T3 - Ts / 2), (ConfigIndex.NEG_OFF, Ts - times.T3))


def propagate_period(p: ConverterParams, state, vin: float, times: SubintervalTimes,
                     nodes: bool = False):
    """Compose the four configurations over one period.

    Returns the state at ``Ts``; with ``nodes=True`` returns the list of
    states at ``0, T1, Ts/2, T3, Ts``.
    """
    iL, vc, vo = state
    vo_frozen = vo
    out = [StateVector(iL, vc, vo)]
    for cfg, dt in _segments(times):
        vo = propagate_output(vo, (iL, vc), (vin, vo_frozen), cfg, dt, p)
        iL, vc = propagate_tank((iL, vc), (vin, vo_frozen), cfg, dt, p)
        out.append(StateVector(iL, vc, vo))
    return out if nodes else out[-1]


@dataclass(frozen=True)
class DiscreteStateSpace:
    """One-period map ``x[k+1] = A x[k] + B u[k]`` for state ``[iL, vc, vo]``
    and scalar input ``u = Vin``."""

    A: np.ndarray
    B: np.ndarray
    times: SubintervalTimes

    def apply(self, state, vin: float) -> np.ndarray:
        return self.A @ np.asarray(state, dtype=float) + self.B[:, 0] * vin


def assemble_period_map(p: ConverterParams, times: SubintervalTimes) -> DiscreteStateSpace:
    """Closed-form one-period matrices (A_d, B_d).

    Output-row terms of the form ``G1 * exp(t/RoCo)`` are evaluated as
    ``-exp(-(Ts - t)/RoCo) / (N Co G2)`` so nothing overflows when
    ``Ro*Co << Ts``.
    """
    if not isinstance(times, SubintervalTimes):
        raise TypeError("times must be a SubintervalTimes")
    d = derive_params(p)
    w, Z, N = d.omega_r, d.Zc, p.N
    Ts, T1, T3 = times.Ts, times.T1, times.T3
    a = 1.0 / (p.Ro * p.Co)
    c1 = -1.0 / (N * p.Co * big_g2(p))

    def E(t):
        return math.exp(-(Ts - t) * a)

    cs, ss = math.cos(w * Ts), math.sin(w * Ts)
    a11 = cs
    a12 = -ss / Z
    a21 = Z * ss
    a22 = cs
    a13 = (ss + 2 * math.sin(w * (Ts - T3)) - 2 * math.sin(w * (Ts - T1))) / (N * Z)
    a23 = (1 - cs - 2 * math.cos(w * (Ts - T3)) + 2 * math.cos(w * (Ts - T1))) / N
    b11 = (ss - 2 * math.sin(w * Ts / 2)) / Z
    b21 = 2 * math.cos(w * Ts / 2) - cs - 1

    a31 = c1 * (2 * E(T1) * g1_prime(T1, p) - 2 * E(T3) * g1_prime(T3, p)
                + E(Ts) * g1_prime(Ts, p) - a * E(0))
    a32 = c1 / Z * (2 * E(T3) * g1(T3, p) - 2 * E(T1) * g1(T1, p)
                    - E(Ts) * g1(Ts, p) - w * E(0))
    common = 2 * E(T1) * g1(T1, p) - 2 * E(T3) * g1(T3, p) + E(Ts) * g1(Ts, p) + w * E(0)
    # leading term is the free decay exp(-Ts/RoCo) of the output capacitor
    a33 = E(0) + c1 / (N * Z) * (common + 4 * E(T3) * g1(T3 - T1, p)
                                 - 2 * E(Ts) * g1(Ts - T1, p) + 2 * w * E(T1)
                                 + 2 * E(Ts) * g1(Ts - T3, p) + 2 * w * E(T3))
    b31 = c1 / Z * (common + 4 * E(T3) * g1(T3 - Ts / 2, p)
                    - 2 * E(Ts) * g1(Ts / 2, p) + 2 * w * E(Ts / 2))

    A = np.array([[a11, a12, a13], [a21, a22, a23], [a31, a32, a33]])
    B = np.array([[b11], [b21], [b31]])
    return DiscreteStateSpace(A=A, B=B, times=times)


def _augmented_generator(p: ConverterParams, config: ConfigIndex) -> np.ndarray:
    # state [iL, vc, vo, Vo_frozen, Vin]
    config = ConfigIndex(config)
    sb, sg = config.bridge_sign, config.current_sign
    M = np.zeros((5, 5))
    M[0, 1] = -1.0 / p.Lr
    M[0, 3] = -sg / (p.N * p.Lr)
    M[0, 4] = sb / p.Lr
    M[1, 0] = 1.0 / p.Cr
    M[2, 0] = sg / (p.N * p.Co)
    M[2, 2] = -1.0 / (p.Ro * p.Co)
    return M


def period_map_expm(p: ConverterParams, times: SubintervalTimes) -> DiscreteStateSpace:
    """Numeric (A_d, B_d) by composing matrix exponentials of the four
    configurations; independent of the closed forms above."""
    Phi = np.eye(5)
    for cfg, dt in _segments(times):
        Phi = expm(_augmented_generator(p, cfg) * dt) @ Phi
    A = Phi[:3, :3].copy()
    A[:, 2] += Phi[:3, 3]  # frozen Vo equals the period-start vo
    B = Phi[:3, 4:5].copy()
    return DiscreteStateSpace(A=A, B=B, times=times)
