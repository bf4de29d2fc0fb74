"""Small-signal audiosusceptibility model about the cyclic steady state.

Input perturbations move the zero-crossing times; linearizing the crossing
conditions expresses those time shifts through the state and input
perturbations, which folds them into the one-period map:

    A_sd = A_d + T_d T_kx,    B_sd = B_d + T_d T_ku
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import signal

from .core import ConverterParams, big_g2, derive_params, g1_prime, g2, g2_prime
from .discretization import assemble_period_map
from .steady_state import OperatingPoint

DEGENERATE_FPRIME = 1e-9


class DegenerateOperatingPointError(ValueError):
    """A zero crossing is (nearly) tangential, so the timing sensitivities blow up."""


def _sym(p: ConverterParams, op: OperatingPoint):
    d = derive_params(p)
    iL, vc, vo = op.state
    vin = op.Vin if math.isfinite(op.Vin) else p.Vin
    return d, iL, vc, vo, vin, op.times.T1, op.times.T3


def _fprime_scale(p: ConverterParams) -> float:
    d = derive_params(p)
    return p.Vin / d.Zc * d.omega_r


def fprime_T1(p: ConverterParams, op: OperatingPoint) -> float:
    """Negated slope of the T1 crossing condition with respect to T1 (A/s).

    The current crosses zero upward at T1, so the value is negative.
    """
    d, iL, vc, vo, vin, T1, _ = _sym(p, op)
    w, Z = d.omega_r, d.Zc
    k = (vc - vin - vo / p.N) / Z
    val = w * iL * math.sin(w * T1) + w * k * math.cos(w * T1)
    if abs(val) < DEGENERATE_FPRIME * _fprime_scale(p):
        warnings.warn("degenerate operating point: f'_T1 is near zero", RuntimeWarning,
                      stacklevel=2)
    return val


def fprime_T3(p: ConverterParams, op: OperatingPoint) -> float:
    """Negated partial slope of the T3 crossing condition with respect to T3
    (A/s); positive for a downward crossing."""
    d, iL, vc, vo, vin, T1, T3 = _sym(p, op)
    w, Z, Ts = d.omega_r, d.Zc, d.Ts
    k = (vc - vin - vo / p.N) / Z
    val = (w * iL * math.sin(w * T3) + w * k * math.cos(w * T3)
           + 2 * vo * w / (p.N * Z) * math.cos(w * (T3 - T1))
           + 2 * vin * w / Z * math.cos(w * (T3 - Ts / 2)))
    if abs(val) < DEGENERATE_FPRIME * _fprime_scale(p):
        warnings.warn("degenerate operating point: f'_T3 is near zero", RuntimeWarning,
                      stacklevel=2)
    return val


@dataclass(frozen=True)
class TimingSensitivities:
    T_d: np.ndarray   # 3x2, d(period map)/d(T1, T3)
    T_kx: np.ndarray  # 2x3
    T_ku: np.ndarray  # 2x1
    fprime_T1: float
    fprime_T3: float


def build_timing_sensitivities(p: ConverterParams, op: OperatingPoint) -> TimingSensitivities:
    d, IL, Vc, Vo, Vin, T1, T3 = _sym(p, op)
    w, Z, N, Ts, Co = d.omega_r, d.Zc, p.N, d.Ts, p.Co
    a = 1.0 / (p.Ro * Co)
    G2 = big_g2(p)
    c1 = -1.0 / (N * Co * G2)
    fp1 = fprime_T1(p, op)
    fp3 = fprime_T3(p, op)
    scale = _fprime_scale(p)
    if abs(fp1) < DEGENERATE_FPRIME * scale or abs(fp3) < DEGENERATE_FPRIME * scale:
        raise DegenerateOperatingPointError(
            f"tangential zero crossing: f'_T1={fp1:.3e}, f'_T3={fp3:.3e}")

    def E(t):
        return math.exp(-(Ts - t) * a)

    s1, c1t = math.sin(w * T1), math.cos(w * T1)
    s3, c3t = math.sin(w * T3), math.cos(w * T3)

    td11 = 2 * w * Vo * math.cos(w * (Ts - T1)) / (N * Z)
    td12 = -2 * w * Vo * math.cos(w * (Ts - T3)) / (N * Z)
    td21 = 2 * w * Vo * math.sin(w * (Ts - T1)) / N
    td22 = -2 * w * Vo * math.sin(w * (Ts - T3)) / N
    td31 = (-2 * IL * c1t / (N * Co) * E(T1)
            + 2 * Vc * s1 / (N * Z * Co) * E(T1)
            + c1 * Vo / (N * Z) * (2 * G2 * E(T1) * s1
                                   - 4 * w * E(T3) * g1_prime(T3 - T1, p)
                                   + 2 * w * E(Ts) * g1_prime(Ts - T1, p)
                                   + 2 * w * a * E(T1))
            - 2 * Vin * s1 / (N * Z * Co) * E(T1))
    td32 = (2 * IL * c3t / (N * Co) * E(T3)
            - 2 * Vc * s3 / (N * Z * Co) * E(T3)
            + c1 * Vo / (N * Z) * (E(T3) * (-2 * G2 * s3 + 2 * w * a
                                            + 4 * G2 * math.sin(w * (T3 - T1)))
                                   - 2 * w * g1_prime(Ts - T3, p))
            + c1 * Vin * E(T3) / Z * (-2 * G2 * s3 + 4 * a * g2(T3 - Ts / 2, p)
                                      - 4 * w * g2_prime(T3 - Ts / 2, p)))
    T_d = np.array([[td11, td12], [td21, td22], [td31, td32]])

    cross = 2 * Vo * w * math.cos(w * (T3 - T1)) / (N * Z * fp1 * fp3)
    tx11 = c1t / fp1
    tx12 = -s1 / (Z * fp1)
    tx13 = s1 / (N * Z * fp1)
    tx21 = c3t / fp3 + cross * c1t
    tx22 = -s3 / (Z * fp3) - cross * s1 / Z
    tx23 = (s3 - 2 * math.sin(w * (T3 - T1))) / (N * Z * fp3) + cross * s1 / (N * Z)
    tu11 = s1 / (Z * fp1)
    tu21 = (s3 - 2 * math.sin(w * (T3 - Ts / 2))) / (Z * fp3) + cross * s1 / Z
    T_kx = np.array([[tx11, tx12, tx13], [tx21, tx22, tx23]])
    T_ku = np.array([[tu11], [tu21]])
    return TimingSensitivities(T_d=T_d, T_kx=T_kx, T_ku=T_ku, fprime_T1=fp1, fprime_T3=fp3)


@dataclass(frozen=True)
class SmallSignalModel:
    A_sd: np.ndarray
    B_sd: np.ndarray
    variant: Literal["full", "simplified"]
    op: OperatingPoint
    Ts: float

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A_sd))))

    def response(self, f_in) -> np.ndarray:
        """Complex vo/vin gain at ripple frequencies ``f_in`` (Hz)."""
        return state_space_response(self.A_sd, self.B_sd, self.Ts, f_in)

    def step(self, x_tilde, u_tilde) -> np.ndarray:
        return self.A_sd @ np.asarray(x_tilde, float) + self.B_sd[:, 0] * u_tilde


def build_full_model(p: ConverterParams, op: OperatingPoint) -> SmallSignalModel:
    dss = assemble_period_map(p, op.times)
    ts = build_timing_sensitivities(p, op)
    return SmallSignalModel(A_sd=dss.A + ts.T_d @ ts.T_kx, B_sd=dss.B + ts.T_d @ ts.T_ku,
                            variant="full", op=op, Ts=1.0 / p.fs)


def build_simplified_model(p: ConverterParams, op: OperatingPoint) -> SmallSignalModel:
    """Closed-form model valid for T3 = Ts/2 + T1, negligible output decay
    within a period and (1/RoCo)^2 << omega_r^2."""
    d = derive_params(p)
    w, Z, N, Ts = d.omega_r, d.Zc, p.N, d.Ts
    Vo = op.state.vo
    fp1 = fprime_T1(p, op)
    s = math.sin(w * Ts)
    A = np.array([[1 + 4 * w * Vo / (N * Z * fp1), -s / Z, 0.0],
                  [Z * s, 1.0, 4.0 / N],
                  [0.0, -4.0 / (N * Z * p.Co * w), 1.0]])
    B = np.array([[0.0], [-4.0], [0.0]])
    return SmallSignalModel(A_sd=A, B_sd=B, variant="simplified", op=op, Ts=Ts)


def state_space_response(A: np.ndarray, B: np.ndarray, Ts: float, f_in) -> np.ndarray:
    f = np.atleast_1d(np.asarray(f_in, dtype=float))
    z = np.exp(2j * np.pi * f * Ts)
    b = np.asarray(B, dtype=complex).reshape(3)
    out = np.array([np.linalg.solve(zk * np.eye(3) - A, b)[2] for zk in z])
    return out if np.ndim(f_in) else out[0]


@dataclass(frozen=True)
class RationalTF:
    """Rational transfer function vo(z)/vin(z).

    ``num`` and ``den`` hold coefficients in descending powers of ``(z - 1)``.
    """

    num: np.ndarray
    den: np.ndarray
    Ts: float
    dc_gain: float
    origin: str = "closed-form"

    def __call__(self, z):
        y = np.asarray(z) - 1.0
        return np.polyval(self.num, y) / np.polyval(self.den, y)

    @property
    def num_z(self) -> np.ndarray:
        """Numerator in descending powers of z."""
        return np.poly1d(self.num)(np.poly1d([1.0, -1.0])).coeffs

    @property
    def den_z(self) -> np.ndarray:
        return np.poly1d(self.den)(np.poly1d([1.0, -1.0])).coeffs

    def poles(self) -> np.ndarray:
        return np.roots(self.den) + 1.0


def _shift_to_y(coeffs_z: np.ndarray) -> np.ndarray:
    # p(z) -> q(y) with z = y + 1
    return np.poly1d(coeffs_z)(np.poly1d([1.0, 1.0])).coeffs


def transfer_function_from_state_space(A, B, Ts: float, dc_gain: float,
                                       origin: str = "state-space") -> RationalTF:
    num, den = signal.ss2tf(A, np.asarray(B).reshape(3, 1), np.array([[0.0, 0.0, 1.0]]),
                            np.zeros((1, 1)))
    num = np.trim_zeros(np.atleast_1d(num[0]), "f")
    return RationalTF(num=_shift_to_y(num), den=_shift_to_y(den), Ts=Ts, dc_gain=dc_gain,
                      origin=origin)


def as_transfer_function(p: ConverterParams, op: OperatingPoint) -> RationalTF:
    """Closed-form audiosusceptibility TF in powers of (z - 1).

    The ``(z - 1)`` factor of the numerator cancels the real pole of the
    denominator, leaving ``4q / ((z-1)^2 + 4q/N)`` with
    ``4q = 16/(N Zc Co omega_r)``; its value at z = 1 is exactly N.
    """
    d = derive_params(p)
    w, Z, N, Co = d.omega_r, d.Zc, p.N, p.Co
    Vo = op.state.vo
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fp1 = fprime_T1(p, op)
    if caught:
        warnings.warn("f'_T1 is near zero; using the state-space form of the "
                      "simplified model", RuntimeWarning, stacklevel=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = build_simplified_model(p, op)
        return transfer_function_from_state_space(m.A_sd, m.B_sd, d.Ts, op.dc_gain)
    k = 4 * w * Vo / (N * Z * fp1)
    q4 = 16.0 / (N * Z * Co * w)
    num = q4 * np.array([1.0, -k])
    den = np.array([1.0, -k, q4 / N, -q4 * k / N])
    return RationalTF(num=num, den=den, Ts=d.Ts, dc_gain=op.dc_gain)


@dataclass(frozen=True)
class ResonanceFrequency:
    omega: float       # rad/s, closed-form arctangent expression
    hz: float
    pole_omega: float  # rad/s, from the complex pole angle of the TF denominator
    pole_hz: float


def as_resonance_frequency(p: ConverterParams, op: OperatingPoint | None = None,
                           tf: RationalTF | None = None) -> ResonanceFrequency:
    d = derive_params(p)
    c = 16.0 / (p.N**2 * p.Co * d.omega_r * d.Zc)
    omega = math.atan(math.sqrt(c)) / d.Ts
    if tf is None:
        tf = as_transfer_function(p, op) if op is not None else None
    if tf is None:
        pole_angle = math.atan(math.sqrt(c))  # complex pair of (z-1)^2 + c
    else:
        poles = tf.poles()
        cplx = poles[np.abs(poles.imag) > 1e-12 * np.abs(poles)]
        if cplx.size == 0:
            raise ValueError("transfer function has no complex poles")
        pole_angle = float(np.max(np.angle(cplx)))
    pole_omega = pole_angle / d.Ts
    return ResonanceFrequency(omega=omega, hz=omega / (2 * math.pi), pole_omega=pole_omega,
                              pole_hz=pole_omega / (2 * math.pi))


@dataclass(frozen=True)
class GainPoint:
    gain: complex | np.ndarray
    ripple_gain_db: float | np.ndarray
    normalized_gain: float | np.ndarray


def evaluate_gain(tf: RationalTF, f_in) -> GainPoint:
    """Evaluate ``tf`` on the unit circle at ripple frequency ``f_in`` (Hz)."""
    f = np.asarray(f_in, dtype=float)
    nyq = 0.5 / tf.Ts
    if np.any(f <= 0) or np.any(f >= nyq):
        raise ValueError(f"ripple frequency must lie in (0, {nyq:g}) Hz")
    h = tf(np.exp(2j * np.pi * f * tf.Ts))
    mag = np.abs(h)
    return GainPoint(gain=h, ripple_gain_db=20 * np.log10(mag), normalized_gain=mag / tf.dc_gain)
