"""Cyclic steady state of the sampled-data converter model.

Unknowns are the period-start state (iL, vc, vo) and the zero-crossing times
(T1, T3). They satisfy periodicity of the one-period map plus iL(T1) = 0 and
iL(T3) = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ConverterParams, ParameterError, StateVector, SubintervalTimes, derive_params
from .discretization import assemble_period_map

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class Residuals:
    periodicity: np.ndarray  # x(Ts) - x(0), state units
    f_T1: float              # A
    f_T3: float              # A

    def normalized(self, p: ConverterParams) -> np.ndarray:
        """Residual vector scaled by Vin (voltages) and Vin/Zc (currents)."""
        Zc = math.sqrt(p.Lr / p.Cr)
        s_i = p.Vin / Zc
        return np.array([self.periodicity[0] / s_i, self.periodicity[1] / p.Vin,
                         self.periodicity[2] / p.Vin, self.f_T1 / s_i, self.f_T3 / s_i])


@dataclass(frozen=True)
class OperatingPoint:
    state: StateVector
    times: SubintervalTimes
    residual_norm: float
    dc_gain: float
    iterations: int = 0
    Vin: float = float("nan")


def f_T1(p: ConverterParams, state, T1: float, vin: float | None = None) -> float:
    """Tank current at T1 from the period-start state."""
    vin = p.Vin if vin is None else vin
    iL, vc, vo = state
    d = derive_params(p)
    w, Z = d.omega_r, d.Zc
    return iL * math.cos(w * T1) - (vc - vin - vo / p.N) / Z * math.sin(w * T1)


def f_T3(p: ConverterParams, state, T1: float, T3: float, vin: float | None = None) -> float:
    """Tank current at T3 from the period-start state."""
    vin = p.Vin if vin is None else vin
    iL, vc, vo = state
    d = derive_params(p)
    w, Z, Ts = d.omega_r, d.Zc, d.Ts
    return (iL * math.cos(w * T3) - (vc - vin - vo / p.N) / Z * math.sin(w * T3)
            - 2 * vo / (p.N * Z) * math.sin(w * (T3 - T1))
            - 2 * vin / Z * math.sin(w * (T3 - Ts / 2)))


def residuals(p: ConverterParams, state, times: SubintervalTimes,
              vin: float | None = None) -> Residuals:
    vin = p.Vin if vin is None else vin
    x = np.asarray(state, dtype=float)
    nxt = assemble_period_map(p, times).apply(x, vin)
    return Residuals(periodicity=nxt - x,
                     f_T1=f_T1(p, x, times.T1, vin),
                     f_T3=f_T3(p, x, times.T1, times.T3, vin))


def initial_guess(p: ConverterParams) -> tuple[StateVector, SubintervalTimes]:
    """First-harmonic estimate of the operating point.

    The bridge fundamental ``4 Vin/pi`` drives ``Rac + j Zc (F - 1/F)``; the
    current lag angle gives T1.
    """
    d = derive_params(p)
    X = d.Zc * (d.F - 1.0 / d.F)
    zmag = math.hypot(d.Rac, X)
    phi = math.atan2(X, d.Rac)
    ipk = 4 * p.Vin / math.pi / zmag
    ws = 2 * math.pi * p.fs
    vo = p.N * p.Vin * d.Rac / zmag
    state = StateVector(-ipk * math.sin(phi), -ipk * math.cos(phi) / (p.Cr * ws), vo)
    T1 = min(max(phi / ws, 1e-3 * d.Ts), 0.499 * d.Ts)
    return state, SubintervalTimes(T1, T1 + d.Ts / 2, d.Ts)


def _scales(p: ConverterParams) -> np.ndarray:
    Zc = math.sqrt(p.Lr / p.Cr)
    return np.array([p.Vin / Zc, p.Vin, p.Vin, 1.0 / p.fs, 1.0 / p.fs])


def _unpack(p, u, scale):
    z = u * scale
    return z[:3], z[3], z[4]


def _residual_vec(p: ConverterParams, u: np.ndarray, scale: np.ndarray) -> np.ndarray:
    x, T1, T3 = _unpack(p, u, scale)
    return residuals(p, x, SubintervalTimes(T1, T3, 1.0 / p.fs)).normalized(p)


def _project(u: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    u = u.copy()
    u[3] = min(max(u[3], margin), 0.5 - margin)
    u[4] = min(max(u[4], 0.5 + margin), 1.0 - margin)
    return u


def _newton(p, u, scale, tol, max_iter, fd_step):
    r = _residual_vec(p, u, scale)
    best = float(np.max(np.abs(r)))
    for it in range(max_iter + 1):
        if best < tol:
            return u, best, it
        if it == max_iter:
            break
        J = np.empty((5, 5))
        for j in range(5):
            h = fd_step * max(abs(u[j]), 1.0)
            e = np.zeros(5)
            e[j] = h
            J[:, j] = (_residual_vec(p, _project(u + e, 1e-12), scale)
                       - _residual_vec(p, _project(u - e, 1e-12), scale)) / (2 * h)
        try:
            du = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            du = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = _project(u + lam * du)
            try:
                rt = _residual_vec(p, trial, scale)
            except ParameterError:
                lam *= 0.5
                continue
            if np.max(np.abs(rt)) < best or lam <= 1e-3:
                break
            lam *= 0.5
        else:
            raise ConvergenceError("times out of order: projection failed", best)
        u, r = trial, rt
        best = float(np.max(np.abs(r)))
    raise ConvergenceError(f"no convergence after {max_iter} iterations", best)


def solve_cyclic_steady_state(p: ConverterParams, init=None, tol: float = 1e-9,
                              max_iter: int = 100, fd_step: float = 1e-7,
                              fallback: bool = True) -> OperatingPoint:
    """Newton iteration on (iL, vc, vo, T1, T3).

    ``init`` is an optional ``(state, times)`` pair or an
    :class:`OperatingPoint`; the first-harmonic estimate is used otherwise.
    On failure the sampled-data map is time-marched and Newton restarted.
    """
    if init is None:
        state, times = initial_guess(p)
    elif isinstance(init, OperatingPoint):
        state, times = init.state, init.times
    else:
        state, times = init
    scale = _scales(p)
    u0 = np.r_[np.asarray(state, dtype=float), times.T1, times.T3] / scale
    try:
        u, res, its = _newton(p, u0, scale, tol, max_iter, fd_step)
    except ConvergenceError as exc:
        if not fallback:
            raise
        log.warning("Newton failed (%s); warm-starting from time-marching", exc)
        from .time_sim import march_sampled

        x, tt = march_sampled(p, np.asarray(state, dtype=float), periods=5000)
        u0 = np.r_[x, tt.T1, tt.T3] / scale
        u, res, its = _newton(p, u0, scale, tol, max_iter, fd_step)
    x, T1, T3 = _unpack(p, u, scale)
    return OperatingPoint(state=StateVector(*map(float, x)),
                          times=SubintervalTimes(float(T1), float(T3), 1.0 / p.fs),
                          residual_norm=res, dc_gain=float(x[2] / p.Vin),
                          iterations=its, Vin=p.Vin)


def steady_state_waveform(p: ConverterParams, op: OperatingPoint, points: int) -> np.ndarray:
    """Sample (t, iL, vc, vo) at ``points`` instants evenly covering one period
    of the steady-state orbit; returns a ``(points, 4)`` array."""
    from .discretization import _segments, propagate_output, propagate_tank

    if points < 2:
        raise ValueError("need at least 2 waveform points")
    Ts = op.times.Ts
    x = op.state.as_array()
    vin, vo_frozen = op.Vin, x[2]
    starts, t0 = [], 0.0
    for cfg, dt in _segments(op.times):
        starts.append((t0, dt, cfg, x.copy()))
        vo = propagate_output(x[2], x[:2], (vin, vo_frozen), cfg, dt, p)
        x = np.array([*propagate_tank(x[:2], (vin, vo_frozen), cfg, dt, p), vo])
        t0 += dt
    out = np.empty((points, 4))
    for i, t in enumerate(np.linspace(0.0, Ts, points)):
        for t_start, dt, cfg, xs in starts:
            if t <= t_start + dt or cfg == starts[-1][2]:
                tau = min(max(t - t_start, 0.0), dt)
                iL, vc = propagate_tank(xs[:2], (vin, vo_frozen), cfg, tau, p)
                vo = propagate_output(xs[2], xs[:2], (vin, vo_frozen), cfg, tau, p)
                out[i] = (t, iL, vc, vo)
                break
    return out
