"""Converter parameters, derived tank quantities and the exponential-sine
helper functions shared by the closed-form period map.

State ordering is fixed everywhere as ``[iL, vc, vo]``; SI base units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Literal, NamedTuple

import numpy as np


class ParameterError(ValueError):
    """Invalid converter parameters."""


class BelowResonanceError(ParameterError):
    """Switching frequency at or below the tank resonance (F <= 1)."""


@dataclass(frozen=True)
class ConverterParams:
    """Physical component values and operating inputs of the series resonant
    converter (full bridge, series LC tank, 1:N transformer, diode bridge,
    capacitive output filter)."""

    Lr: float
    Cr: float
    Co: float
    Ro: float
    N: float
    Vin: float
    fs: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ParameterError(f"{f.name} must be a finite number, got {v!r}")
            if v <= 0:
                raise ParameterError(f"{f.name} must be strictly positive, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        fr = 1.0 / (2 * math.pi * math.sqrt(self.Lr * self.Cr))
        if self.fs <= fr:
            raise BelowResonanceError(
                f"below-resonance operation unsupported: fs={self.fs:g} Hz <= fr={fr:g} Hz")

    def replace(self, **changes) -> "ConverterParams":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ConverterParams(**d)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DerivedParams:
    omega_r: float  # rad/s
    Zc: float       # ohm
    Ts: float       # s
    F: float
    Rac: float      # ohm
    Qe: float

    @property
    def fr(self) -> float:
        return self.omega_r / (2 * math.pi)


def derive_params(p: ConverterParams) -> DerivedParams:
    omega_r = 1.0 / math.sqrt(p.Lr * p.Cr)
    Zc = math.sqrt(p.Lr / p.Cr)
    fr = omega_r / (2 * math.pi)
    Rac = 8.0 / math.pi**2 * p.Ro / p.N**2
    return DerivedParams(omega_r=omega_r, Zc=Zc, Ts=1.0 / p.fs, F=p.fs / fr, Rac=Rac, Qe=Zc / Rac)


def from_design(F: float, Qe: float, fr: float, N: float, Ro: float, Vin: float,
                Co: float = 100e-9) -> ConverterParams:
    """Build physical parameters from the normalized design pair (F, Qe).

    The tank is sized so that ``Zc = Qe * Rac`` at resonance ``fr``; the
    switching frequency is ``F * fr``.
    """
    if F <= 1:
        raise BelowResonanceError(f"below-resonance operation unsupported: F={F!r}")
    for name, v in (("Qe", Qe), ("fr", fr), ("N", N), ("Ro", Ro), ("Vin", Vin), ("Co", Co)):
        if not v > 0:
            raise ParameterError(f"{name} must be strictly positive, got {v!r}")
    Rac = 8.0 / math.pi**2 * Ro / N**2
    Zc = Qe * Rac
    wr = 2 * math.pi * fr
    return ConverterParams(Lr=Zc / wr, Cr=1.0 / (Zc * wr), Co=Co, Ro=Ro, N=N, Vin=Vin, fs=F * fr)


# Base design used for (F, Qe) sweeps: 100 kHz tank, 10 kOhm load, 700 V bus.
NOMINAL_BASE = dict(fr=100e3, N=16.0, Ro=10e3, Vin=700.0, Co=100e-9)


def nominal_design(F: float, Qe: float, **overrides) -> ConverterParams:
    base = {**NOMINAL_BASE, **overrides}
    return from_design(F, Qe, **base)


def experimental_design(Vin: float = 8.4) -> ConverterParams:
    """10 kW prototype with the effective inductance from the measured 98 kHz
    tank resonance, operated at F = 1.01."""
    Cr = 16e-9
    fr = 98e3
    Lr = 1.0 / (4 * math.pi**2 * Cr * fr**2)
    return ConverterParams(Lr=Lr, Cr=Cr, Co=100e-9, Ro=10e3, N=16.0, Vin=Vin, fs=1.01 * fr)


class StateVector(NamedTuple):
    iL: float
    vc: float
    vo: float

    def as_array(self) -> np.ndarray:
        return np.array([self.iL, self.vc, self.vo], dtype=float)


@dataclass(frozen=True)
class SubintervalTimes:
    """Zero-crossing times of the tank current within one switching period.

    Configuration boundaries are [0, T1], [T1, Ts/2], [Ts/2, T3], [T3, Ts].
    """

    T1: float
    T3: float
    Ts: float

    def __post_init__(self):
        if not all(math.isfinite(t) for t in (self.T1, self.T3, self.Ts)):
            raise ParameterError("subinterval times must be finite")
        if not (0 < self.T1 < self.Ts / 2 < self.T3 < self.Ts):
            raise ParameterError(
                f"times out of order: need 0 < T1 < Ts/2 < T3 < Ts, got "
                f"T1={self.T1!r}, T3={self.T3!r}, Ts={self.Ts!r}")


# -- exponential-sine helpers ------------------------------------------------

GKind = Literal["g1", "g2", "g1'", "g2'"]


def _rates(p: ConverterParams) -> tuple[float, float]:
    return 1.0 / math.sqrt(p.Lr * p.Cr), 1.0 / (p.Ro * p.Co)


def g1(t, p: ConverterParams):
    w, a = _rates(p)
    return a * np.sin(w * t) - w * np.cos(w * t)


def g2(t, p: ConverterParams):
    w, a = _rates(p)
    return a * np.sin(w * t) + w * np.cos(w * t)


def g1_prime(t, p: ConverterParams):
    """Derivative of :func:`g1` with respect to the angle ``omega_r * t``."""
    w, a = _rates(p)
    return a * np.cos(w * t) + w * np.sin(w * t)


def g2_prime(t, p: ConverterParams):
    """Derivative of :func:`g2` with respect to the angle ``omega_r * t``."""
    w, a = _rates(p)
    return a * np.cos(w * t) - w * np.sin(w * t)


_G_FUNCS = {"g1": g1, "g2": g2, "g1'": g1_prime, "g2'": g2_prime}


def helper_g(kind: GKind, t, p: ConverterParams):
    if kind not in _G_FUNCS:
        raise ValueError(f"unknown helper {kind!r}; expected one of {sorted(_G_FUNCS)}")
    if not np.all(np.isfinite(t)):
        raise ValueError("helper argument must be finite")
    return _G_FUNCS[kind](t, p)


def big_g2(p: ConverterParams) -> float:
    w, a = _rates(p)
    return a * a + w * w


def big_g1(p: ConverterParams) -> float:
    """Common prefactor of the output-row entries of the period map.

    ``G1 = -exp(-Ts/(Ro*Co)) / (N*Co*G2)``.
    """
    _, a = _rates(p)
    return -math.exp(-a / p.fs) / (p.N * p.Co * big_g2(p))
