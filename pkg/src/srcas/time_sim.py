"""Switched time-domain simulator with input-ripple injection.

Each switching period the input is sampled from the ripple sinusoid and held;
the zero crossings of the tank current are located by bisection and the
state is propagated in closed form through the four configurations.

Two propagation modes are offered:

``"exact"``
    All three states evolve together inside every configuration, i.e. the
    output voltage reflected onto the tank is not frozen. Each configuration
    is a 3x3 LTI system solved by modal decomposition (numba kernel).
``"sampled"``
    The two-step model used by the discrete-time analysis: the tank sees the
    period-start output voltage. Propagation reuses
    :func:`srcas.discretization.propagate_period`.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import ConverterParams, ParameterError, StateVector, SubintervalTimes, derive_params
from .discretization import ConfigIndex, propagate_period, propagate_tank
from .steady_state import solve_cyclic_steady_state

log = logging.getLogger(__name__)

MODES = ("exact", "sampled")
_BISECT_TOL = 1e-13
_SCAN_POINTS = 16


class ModeViolationError(RuntimeError):
    """The current waveform left the four-configuration operating mode."""


class NoResonanceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RippleSpec:
    f_in: float          # Hz
    amplitude: float     # V, peak
    phase: float = 0.0   # rad

    def __post_init__(self):
        if not (math.isfinite(self.f_in) and self.f_in > 0):
            raise ParameterError(f"ripple frequency must be positive, got {self.f_in!r}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ParameterError(f"ripple amplitude must be >= 0, got {self.amplitude!r}")

    def check_against(self, p: ConverterParams) -> None:
        if self.f_in >= p.fs / 2:
            raise ParameterError(f"ripple frequency {self.f_in:g} Hz must be below fs/2")
        if self.amplitude > 0.05 * p.Vin:
            warnings.warn(f"ripple amplitude {self.amplitude:g} V exceeds 5% of Vin; "
                          "small-signal comparisons may not hold", RuntimeWarning, stacklevel=3)


@dataclass
class SimTrace:
    """Period-start samples of one simulation run.

    Arrays are indexed by period ``k``; ``T1``/``T3`` are the crossing times
    inside period ``k`` and ``charge`` the rectified tank charge
    ``integral |iL| dt`` over it.
    """

    Ts: float
    iL: np.ndarray
    vc: np.ndarray
    vo: np.ndarray
    vin: np.ndarray
    T1: np.ndarray
    T3: np.ndarray
    charge: np.ndarray
    vo_mean: np.ndarray
    settle_periods: int
    measure_periods: int
    f_in: float
    mode: str
    final_state: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(3))

    @property
    def n_periods(self) -> int:
        return len(self.vo)

    @property
    def measure_slice(self) -> slice:
        return slice(self.settle_periods, self.settle_periods + self.measure_periods)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_periods) * self.Ts


# -- exact (coupled) kernel ---------------------------------------------------

def _config_matrix(p: ConverterParams, cfg: ConfigIndex) -> np.ndarray:
    sg = cfg.current_sign
    return np.array([[0.0, -1.0 / p.Lr, -sg / (p.N * p.Lr)],
                     [1.0 / p.Cr, 0.0, 0.0],
                     [sg / (p.N * p.Co), 0.0, -1.0 / (p.Ro * p.Co)]])


@functools.lru_cache(maxsize=256)
def _modal_data(p: ConverterParams):
    lam = np.empty((4, 3), dtype=np.complex128)
    V = np.empty((4, 3, 3), dtype=np.complex128)
    Vinv = np.empty((4, 3, 3), dtype=np.complex128)
    sb = np.empty(4)
    for i, cfg in enumerate(ConfigIndex):
        w, v = np.linalg.eig(_config_matrix(p, cfg))
        lam[i], V[i], Vinv[i] = w, v, np.linalg.inv(v)
        sb[i] = cfg.bridge_sign
    return lam, V, Vinv, sb


@numba.njit(cache=True)
def _modal_coef(Vinv_c, x, xeq):
    y = np.empty(3, dtype=np.complex128)
    for i in range(3):
        y[i] = 0.0
        for j in range(3):
            y[i] += Vinv_c[i, j] * (x[j] - xeq[j])
    return y


@numba.njit(cache=True)
def _modal_eval(V_c, lam_c, coef, xeq, t, out):
    for i in range(3):
        s = 0.0 + 0.0j
        for j in range(3):
            s += V_c[i, j] * coef[j] * np.exp(lam_c[j] * t)
        out[i] = s.real + xeq[i]


@numba.njit(cache=True)
def _modal_iL(V_c, lam_c, coef, t):
    s = 0.0 + 0.0j
    for j in range(3):
        s += V_c[0, j] * coef[j] * np.exp(lam_c[j] * t)
    return s.real


@numba.njit(cache=True)
def _modal_int_vo(V_c, lam_c, coef, xeq, t):
    s = 0.0 + 0.0j
    for j in range(3):
        s += V_c[2, j] * coef[j] * (np.exp(lam_c[j] * t) - 1.0) / lam_c[j]
    return s.real + xeq[2] * t


@numba.njit(cache=True)
def _crossing(V_c, lam_c, coef, span, rising, tol):
    """First sign change of iL on (0, span]; rising means from negative."""
    sgn = 1.0 if rising else -1.0
    t_prev = 0.0
    f_prev = sgn * _modal_iL(V_c, lam_c, coef, 0.0)
    for k in range(1, _SCAN_POINTS + 1):
        t = span * k / _SCAN_POINTS
        f = sgn * _modal_iL(V_c, lam_c, coef, t)
        if f_prev < 0.0 and f >= 0.0:
            lo, hi = t_prev, t
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if sgn * _modal_iL(V_c, lam_c, coef, mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        t_prev, f_prev = t, f
    return -1.0


@numba.njit(cache=True)
def _run_exact(lam, V, Vinv, sb, Cr, x0, vin, Ts, tol,
               iL, vc, vo, T1s, T3s, charge, vo_mean, xfinal):
    """Returns (status, period); status 0 ok, 1 no rising crossing,
    2 no falling crossing, 3 non-finite state."""
    x = x0.copy()
    xeq = np.zeros(3)
    xn = np.empty(3)
    half = 0.5 * Ts
    for k in range(vin.shape[0]):
        iL[k], vc[k], vo[k] = x[0], x[1], x[2]
        if not (np.isfinite(x[0]) and np.isfinite(x[1]) and np.isfinite(x[2])):
            return 3, k
        u = vin[k]
        vc0 = x[1]
        # configuration 1: bridge +, current negative
        xeq[1] = sb[0] * u
        coef = _modal_coef(Vinv[0], x, xeq)
        t1 = _crossing(V[0], lam[0], coef, half, True, tol)
        if t1 < 0.0:
            return 1, k
        ivo = _modal_int_vo(V[0], lam[0], coef, xeq, t1)
        _modal_eval(V[0], lam[0], coef, xeq, t1, xn)
        x[:] = xn
        vc1 = x[1]
        # configuration 2
        xeq[1] = sb[1] * u
        coef = _modal_coef(Vinv[1], x, xeq)
        ivo += _modal_int_vo(V[1], lam[1], coef, xeq, half - t1)
        _modal_eval(V[1], lam[1], coef, xeq, half - t1, xn)
        x[:] = xn
        # configuration 3: bridge -, current positive
        xeq[1] = sb[2] * u
        coef = _modal_coef(Vinv[2], x, xeq)
        d3 = _crossing(V[2], lam[2], coef, half, False, tol)
        if d3 < 0.0:
            return 2, k
        ivo += _modal_int_vo(V[2], lam[2], coef, xeq, d3)
        _modal_eval(V[2], lam[2], coef, xeq, d3, xn)
        x[:] = xn
        vc3 = x[1]
        # configuration 4
        xeq[1] = sb[3] * u
        coef = _modal_coef(Vinv[3], x, xeq)
        ivo += _modal_int_vo(V[3], lam[3], coef, xeq, half - d3)
        _modal_eval(V[3], lam[3], coef, xeq, half - d3, xn)
        x[:] = xn
        T1s[k] = t1
        T3s[k] = half + d3
        charge[k] = Cr * (-(vc1 - vc0) + (vc3 - vc1) - (x[1] - vc3))
        vo_mean[k] = ivo / Ts
    xfinal[:] = x
    return 0, vin.shape[0]


_STATUS = {1: "no zero crossing found in half period (rising, first half)",
           2: "no zero crossing found in half period (falling, second half)",
           3: "state became non-finite"}


def _simulate_exact(p, x0, vin):
    n = len(vin)
    arrs = [np.empty(n) for _ in range(7)]
    xf = np.empty(3)
    lam, V, Vinv, sb = _modal_data(p)
    Ts = 1.0 / p.fs
    status, k = _run_exact(lam, V, Vinv, sb, p.Cr, np.asarray(x0, dtype=float),
                           np.ascontiguousarray(vin, dtype=float), Ts, _BISECT_TOL * Ts,
                           *arrs, xf)
    if status:
        raise ModeViolationError(f"{_STATUS[status]} at period {k}")
    return arrs, xf


# -- sampled (two-step) mode ----------------------------------------------------

def _tank_iL(p, x2, vin, vo_frozen, cfg, t):
    return propagate_tank(x2, (vin, vo_frozen), cfg, t, p)[0]


def _first_crossing_py(fun, span, rising, tol):
    sgn = 1.0 if rising else -1.0
    t_prev, f_prev = 0.0, sgn * fun(0.0)
    for k in range(1, _SCAN_POINTS + 1):
        t = span * k / _SCAN_POINTS
        f = sgn * fun(t)
        if f_prev < 0.0 <= f:
            if f == 0.0:
                return t
            return brentq(fun, t_prev, t, xtol=tol, rtol=1e-15)
        t_prev, f_prev = t, f
    return None


def sampled_period_times(p: ConverterParams, state, vin: float) -> SubintervalTimes:
    """Crossing times of the two-step model for one period from ``state``."""
    Ts = 1.0 / p.fs
    half = Ts / 2
    tol = _BISECT_TOL * Ts
    iL, vc, vo = state
    t1 = _first_crossing_py(lambda t: _tank_iL(p, (iL, vc), vin, vo, ConfigIndex.NEG_ON, t),
                            half, True, tol)
    if t1 is None or t1 <= 0.0:
        raise ModeViolationError(_STATUS[1])
    x2 = propagate_tank((iL, vc), (vin, vo), ConfigIndex.NEG_ON, t1, p)
    x2 = propagate_tank(x2, (vin, vo), ConfigIndex.POS_ON, half - t1, p)
    d3 = _first_crossing_py(lambda t: _tank_iL(p, x2, vin, vo, ConfigIndex.POS_OFF, t),
                            half, False, tol)
    if d3 is None or d3 <= 0.0 or d3 >= half:
        raise ModeViolationError(_STATUS[2])
    return SubintervalTimes(t1, half + d3, Ts)


def _simulate_sampled(p, x0, vin):
    n = len(vin)
    iL, vc, vo, T1, T3, Q, vm = (np.empty(n) for _ in range(7))
    x = np.asarray(x0, dtype=float)
    for k in range(n):
        iL[k], vc[k], vo[k] = x
        if not np.all(np.isfinite(x)):
            raise ModeViolationError(f"{_STATUS[3]} at period {k}")
        try:
            tt = sampled_period_times(p, x, vin[k])
        except (ModeViolationError, ParameterError) as exc:
            raise ModeViolationError(f"{exc} at period {k}") from None
        nodes = propagate_period(p, x, vin[k], tt, nodes=True)
        vcs = [s.vc for s in nodes]
        T1[k], T3[k] = tt.T1, tt.T3
        Q[k] = p.Cr * (-(vcs[1] - vcs[0]) + (vcs[3] - vcs[1]) - (vcs[4] - vcs[3]))
        vm[k] = math.nan  # the two-step output is not resolved within the period
        x = np.asarray(nodes[-1], dtype=float)
    return [iL, vc, vo, T1, T3, Q, vm], x


def march_sampled(p: ConverterParams, state, periods: int = 2000, vin: float | None = None):
    """Time-march the two-step model at constant input.

    Returns the final period-start state and the crossing times of the last
    period.
    """
    vin = p.Vin if vin is None else vin
    arrs, x = _simulate_sampled(p, state, np.full(periods, vin, dtype=float))
    return x, SubintervalTimes(arrs[3][-1], arrs[4][-1], 1.0 / p.fs)


def step_period(p: ConverterParams, state, vin: float | None = None,
                mode: str = "exact") -> np.ndarray:
    """Advance one switching period at constant input."""
    vin = p.Vin if vin is None else vin
    run = _simulate_exact if mode == "exact" else _simulate_sampled
    return run(p, state, np.array([vin], dtype=float))[1]


@functools.lru_cache(maxsize=256)
def periodic_orbit(p: ConverterParams, mode: str = "exact") -> StateVector:
    """Period-start state of the unperturbed periodic orbit.

    The two-step model's orbit comes from the Newton solver; the exact
    orbit is found by Newton on ``x -> step(x) - x`` warm-started there,
    with time-marching as fallback.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    op = solve_cyclic_steady_state(p)
    if mode == "sampled":
        return op.state
    scale = np.array([p.Vin / derive_params(p).Zc, p.Vin, p.Vin])
    x = op.state.as_array()
    for attempt in range(3):
        try:
            x = _orbit_newton(p, x, scale)
            return StateVector(*map(float, x))
        except (ModeViolationError, np.linalg.LinAlgError, ArithmeticError) as exc:
            log.debug("exact-orbit Newton failed (%s); marching", exc)
        start = x if np.all(np.isfinite(x)) else op.state.as_array()
        x = _simulate_exact(p, start, np.full(20000, p.Vin))[1]
    raise ModeViolationError("exact periodic orbit not found")


def _orbit_newton(p, x, scale, tol=1e-12, max_iter=30):
    for _ in range(max_iter):
        r = (step_period(p, x) - x) / scale
        if np.max(np.abs(r)) < tol:
            return x
        J = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6 * scale[j]
            J[:, j] = (step_period(p, x + e) - step_period(p, x - e)) / (2e-6 * scale[j]) / scale
        J -= np.eye(3)
        x = x - np.linalg.solve(J, r) * scale
    raise ArithmeticError("no convergence")


# -- ripple runs ------------------------------------------------------------------

def snap_window(f_in: float, Ts: float, min_periods: int) -> tuple[int, int, float]:
    """Choose a measure window of ``M >= min_periods`` periods holding an
    integer number of ripple cycles ``n``, minimizing the shift of the
    ripple frequency to ``n / (M Ts)``.

    Returns ``(M, n, f_effective)``.
    """
    span = max(1, int(math.ceil(1.0 / (f_in * Ts))))
    best = None
    for M in range(min_periods, min_periods + span + 1):
        n = max(1, round(f_in * M * Ts))
        f_eff = n / (M * Ts)
        err = abs(f_eff - f_in)
        if best is None or err < best[0] - 1e-15 * f_in:
            best = (err, M, n, f_eff)
    return best[1], best[2], best[3]


def default_windows(p: ConverterParams, f_in: float) -> tuple[int, int]:
    Ts = 1.0 / p.fs
    per_ripple = 1.0 / (f_in * Ts)
    settle = int(math.ceil(max(20 * per_ripple, 50 * p.Ro * p.Co / Ts)))
    measure = int(math.ceil(max(4 * per_ripple, 500)))
    return settle, measure


def simulate(params: ConverterParams, ripple: RippleSpec, settle_periods: int | None = None,
             measure_periods: int | None = None, mode: str = "exact",
             x0=None) -> SimTrace:
    """Run the switched simulator with ripple ``vin[k] = Vin + A sin(2 pi f k Ts + phase)``.

    The measure window is lengthened until it spans an integer number of
    ripple cycles; the ripple frequency is shifted to the nearest such value
    (``SimTrace.f_in``). The run starts from the unperturbed periodic orbit
    unless ``x0`` is given.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    ripple.check_against(params)
    Ts = 1.0 / params.fs
    d_settle, d_measure = default_windows(params, ripple.f_in)
    settle = d_settle if settle_periods is None else int(settle_periods)
    measure = d_measure if measure_periods is None else int(measure_periods)
    if settle < 0 or measure < 1:
        raise ValueError("settle_periods must be >= 0 and measure_periods >= 1")
    measure, _, f_eff = snap_window(ripple.f_in, Ts, measure)
    n = settle + measure
    k = np.arange(n)
    vin = params.Vin + ripple.amplitude * np.sin(2 * np.pi * f_eff * k * Ts + ripple.phase)
    if x0 is None:
        x0 = periodic_orbit(params, mode).as_array()
    run = _simulate_exact if mode == "exact" else _simulate_sampled
    (iL, vc, vo, T1, T3, Q, vm), xf = run(params, x0, vin)
    return SimTrace(Ts=Ts, iL=iL, vc=vc, vo=vo, vin=vin, T1=T1, T3=T3, charge=Q, vo_mean=vm,
                    settle_periods=settle, measure_periods=measure, f_in=f_eff, mode=mode,
                    final_state=xf)


def project_bin(samples, f: float, Ts: float) -> complex:
    """Single-bin DFT: complex amplitude of ``samples`` at frequency ``f``.

    For ``x[k] = A cos(2 pi f k Ts + phi)`` on an integer-periodic window the
    result is ``A exp(j phi)``.
    """
    x = np.asarray(samples, dtype=float)
    k = np.arange(len(x))
    return complex(2.0 / len(x) * np.sum(x * np.exp(-2j * np.pi * f * k * Ts)))


@dataclass(frozen=True)
class RippleGain:
    gain: complex            # vo / vin at the ripple frequency
    normalized_gain: float   # |gain| / (Vo/Vin)
    ripple_gain_db: float
    dc_gain: float
    f_in: float


def measure_ripple_gain(trace: SimTrace, f_in: float | None = None) -> RippleGain:
    f = trace.f_in if f_in is None else float(f_in)
    M = trace.measure_periods
    cycles = f * M * trace.Ts
    if abs(cycles - round(cycles)) > 1e-6 or round(cycles) < 1:
        raise ValueError(f"measure window of {M} periods is not an integer number of "
                         f"ripple cycles at {f:g} Hz ({cycles:.6f})")
    sl = trace.measure_slice
    vo, vin = trace.vo[sl], trace.vin[sl]
    g = project_bin(vo, f, trace.Ts) / project_bin(vin, f, trace.Ts)
    dc = float(np.mean(vo) / np.mean(vin))
    return RippleGain(gain=g, normalized_gain=abs(g) / dc, ripple_gain_db=20 * math.log10(abs(g)),
                      dc_gain=dc, f_in=f)


def ripple_gain_at(params: ConverterParams, f_in: float, amplitude: float | None = None,
                   mode: str = "exact", **kw) -> RippleGain:
    amp = 1e-4 * params.Vin if amplitude is None else amplitude
    return measure_ripple_gain(simulate(params, RippleSpec(f_in, amp), mode=mode, **kw))


@dataclass(frozen=True)
class Peak:
    f: float
    value: float
    interior: bool


def scan_peak(fun, f_lo: float, f_hi: float, scan_points: int = 24,
              rel_resolution: float = 5e-3) -> Peak:
    """Maximize ``fun`` over ``[f_lo, f_hi]``.

    A logarithmic scan brackets the maximum; golden-section search then
    refines an interior bracket to ``rel_resolution`` in frequency. Endpoint
    maxima are returned with ``interior=False``.
    """
    cache: dict[float, float] = {}

    def val(f):
        if f not in cache:
            cache[f] = float(fun(f))
        return cache[f]

    grid = np.geomspace(f_lo, f_hi, scan_points)
    g = np.array([val(f) for f in grid])
    i = int(np.argmax(g))
    if i == 0 or i == len(grid) - 1:
        return Peak(f=float(grid[i]), value=float(g[i]), interior=False)
    minimize_scalar(lambda f: -val(f), bracket=(grid[i - 1], grid[i], grid[i + 1]),
                    method="golden", options={"xtol": rel_resolution / 2})
    f_best = max(cache, key=cache.get)
    return Peak(f=f_best, value=cache[f_best], interior=True)


@dataclass(frozen=True)
class SimResonance:
    f_peak: float
    normalized_gain: float
    ripple_gain_db: float


def find_resonance_sim(params: ConverterParams, f_lo: float, f_hi: float,
                       amplitude: float | None = None, mode: str = "exact",
                       scan_points: int = 24) -> SimResonance:
    """Peak of the simulated normalized ripple gain in ``[f_lo, f_hi]``
    (0.5% frequency resolution)."""
    if not (0 < f_lo < f_hi < params.fs / 2):
        raise ValueError("need 0 < f_lo < f_hi < fs/2")
    runs: dict[float, RippleGain] = {}

    def gain(f):
        runs[f] = ripple_gain_at(params, f, amplitude, mode)
        return runs[f].normalized_gain

    pk = scan_peak(gain, f_lo, f_hi, scan_points)
    if not pk.interior:
        raise NoResonanceError(f"no resonance in range [{f_lo:g}, {f_hi:g}] Hz")
    rg = runs[pk.f]
    return SimResonance(f_peak=rg.f_in, normalized_gain=rg.normalized_gain,
                        ripple_gain_db=rg.ripple_gain_db)
