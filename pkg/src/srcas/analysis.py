"""Sweeps over the (F, Qe) design plane, resonance-frequency error and the
unity-gain design region.

Three gain evaluators are available everywhere a ``method`` is taken:

* ``"model"``: full small-signal state space ``(zI - A_sd)^-1 B_sd``,
* ``"tf"``: the closed-form second-order transfer function,
* ``"sim"``: the exact switched simulator with ripple injection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import NOMINAL_BASE, ConverterParams, derive_params, from_design
from .small_signal import (as_resonance_frequency, as_transfer_function, build_full_model,
                           evaluate_gain)
from .steady_state import solve_cyclic_steady_state
from .time_sim import NoResonanceError, periodic_orbit, ripple_gain_at, scan_peak

log = logging.getLogger(__name__)

METHODS = ("model", "tf", "sim")
_ALIASES = {"simulation": "sim", "full": "model"}
F_LO_DEFAULT = 100.0
F_HI_CAP = 10e3


class BoundaryOutsideBoundsError(ValueError):
    pass


def _method(name: str) -> str:
    m = _ALIASES.get(name, name)
    if m not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    return m


@dataclass(frozen=True)
class SweepGrid:
    F: tuple
    Qe: tuple
    f_in: tuple
    base: dict = field(default_factory=lambda: dict(NOMINAL_BASE))

    def __post_init__(self):
        object.__setattr__(self, "F", tuple(float(x) for x in self.F))
        object.__setattr__(self, "Qe", tuple(float(x) for x in self.Qe))
        object.__setattr__(self, "f_in", tuple(float(x) for x in self.f_in))
        if not all(1 < f <= 2 for f in self.F):
            raise ValueError("F values must lie in (1, 2]")
        if not all(q > 0 for q in self.Qe):
            raise ValueError("Qe values must be positive")
        if not all(f > 0 for f in self.f_in):
            raise ValueError("ripple frequencies must be positive")
        fs_min = min(self.F) * self.base["fr"]
        if self.f_in and max(self.f_in) >= fs_min / 2:
            raise ValueError("every ripple frequency must be below fs/2")

    def params(self, F: float, Qe: float) -> ConverterParams:
        return from_design(F, Qe, **self.base)


@dataclass
class FrequencyResponse:
    params: ConverterParams
    f_in: np.ndarray
    gain: np.ndarray            # complex vo/vin
    normalized_gain: np.ndarray
    gain_db: np.ndarray
    method: str
    dc_gain: float
    F: float = math.nan
    Qe: float = math.nan
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def gain_function(p: ConverterParams, method: str) -> tuple[Callable, float]:
    """Return ``(f -> complex gain, dc gain)`` for ``method``."""
    method = _method(method)
    if method == "sim":
        cache = {}

        def g(f):
            if f not in cache:
                cache[f] = ripple_gain_at(p, f)
            return cache[f].gain
        return g, periodic_orbit(p).vo / p.Vin
    op = solve_cyclic_steady_state(p)
    if method == "model":
        m = build_full_model(p, op)
        return m.response, op.dc_gain
    tf = as_transfer_function(p, op)
    return (lambda f: evaluate_gain(tf, f).gain), op.dc_gain


def frequency_response(p: ConverterParams, f_in, method: str = "model") -> FrequencyResponse:
    method = _method(method)
    f = np.asarray(f_in, dtype=float)
    if method == "sim":
        runs = [ripple_gain_at(p, fk) for fk in f]
        h = np.array([r.gain for r in runs])
        f = np.array([r.f_in for r in runs])
        dc = float(np.mean([r.dc_gain for r in runs]))
        norm = np.array([r.normalized_gain for r in runs])
    else:
        g, dc = gain_function(p, method)
        h = np.asarray(g(f), dtype=complex)
        norm = np.abs(h) / dc
    d = derive_params(p)
    return FrequencyResponse(params=p, f_in=f, gain=h, normalized_gain=norm,
                             gain_db=20 * np.log10(np.abs(h)), method=method, dc_gain=dc,
                             F=d.F, Qe=d.Qe)


def frequency_sweep(grid: SweepGrid, method: str = "model") -> list[FrequencyResponse]:
    """Frequency response at every (F, Qe) of ``grid``, sorted by (F, Qe).

    Failures are recorded on the affected response and the sweep continues.
    """
    method = _method(method)
    out = []
    n = len(grid.f_in)
    for F in sorted(grid.F):
        for Qe in sorted(grid.Qe):
            try:
                p = grid.params(F, Qe)
                fr = frequency_response(p, grid.f_in, method)
                fr.F, fr.Qe = F, Qe
            except Exception as exc:  # recorded per point
                log.warning("sweep point F=%g Qe=%g failed: %s", F, Qe, exc)
                nan = np.full(n, np.nan)
                fr = FrequencyResponse(params=None, f_in=np.array(grid.f_in), gain=nan + 0j,
                                       normalized_gain=nan, gain_db=nan, method=method,
                                       dc_gain=math.nan, F=F, Qe=Qe,
                                       errors=[f"{type(exc).__name__}: {exc}"])
            out.append(fr)
    return out


def peak_search_range(p: ConverterParams, f_lo: float = F_LO_DEFAULT) -> tuple[float, float]:
    return f_lo, min(F_HI_CAP, p.fs / 4)


@dataclass(frozen=True)
class PeakGain:
    f_peak: float
    normalized_gain: float
    gain_db: float
    interior: bool
    method: str


def peak_gain(p: ConverterParams, method: str = "model", f_lo: float = F_LO_DEFAULT,
              f_hi: float | None = None) -> PeakGain:
    """Maximum normalized gain over the ripple band, endpoints included."""
    method = _method(method)
    lo, hi = peak_search_range(p, f_lo)
    hi = hi if f_hi is None else f_hi
    g, dc = gain_function(p, method)
    scan = 24 if method == "sim" else 200
    pk = scan_peak(lambda f: abs(g(f)) / dc, lo, hi, scan_points=scan,
                   rel_resolution=5e-3 if method == "sim" else 1e-6)
    h = abs(g(pk.f))
    return PeakGain(f_peak=pk.f, normalized_gain=h / dc, gain_db=20 * math.log10(h),
                    interior=pk.interior, method=method)


def percent_error(f_sim: float, f_model: float) -> float:
    """Signed resonance error relative to the simulated value, in percent."""
    return (f_sim - f_model) / f_sim * 100.0


@dataclass(frozen=True)
class ResonanceComparison:
    f_model: float   # Hz, closed-form resonance
    f_sim: float     # Hz, simulated peak
    error_pct: float
    sim_peak: PeakGain


def resonance_error(p: ConverterParams, f_lo: float = F_LO_DEFAULT,
                    f_hi: float | None = None) -> ResonanceComparison:
    """Closed-form resonance frequency against the simulated peak."""
    pk = peak_gain(p, "sim", f_lo, f_hi)
    if not pk.interior:
        raise NoResonanceError("no simulated resonance in the ripple band")
    f_model = as_resonance_frequency(p).hz
    return ResonanceComparison(f_model=f_model, f_sim=pk.f_peak,
                               error_pct=percent_error(pk.f_peak, f_model), sim_peak=pk)


@dataclass(frozen=True)
class RegionCurve:
    points: tuple      # ((Qe, F_boundary), ...) sorted by Qe
    method: str
    F_bounds: tuple

    @property
    def Qe(self) -> np.ndarray:
        return np.array([q for q, _ in self.points])

    @property
    def F(self) -> np.ndarray:
        return np.array([f for _, f in self.points])

    def boundary_at(self, Qe: float) -> float:
        """Piecewise-linear boundary in log(Qe)."""
        return float(np.interp(math.log(Qe), np.log(self.Qe), self.F))


def boundary_for_qe(Qe: float, F_bounds=(1.01, 1.5), method: str = "model",
                    base: dict | None = None, tol: float = 1e-3) -> float:
    """Smallest F in ``F_bounds`` at which the peak normalized gain drops to 1."""
    base = dict(NOMINAL_BASE) if base is None else base
    method = _method(method)
    seen = []

    def excess(F):
        v = peak_gain(from_design(F, Qe, **base), method).normalized_gain - 1.0
        seen.append((F, v))
        return v

    lo, hi = map(float, F_bounds)
    e_lo, e_hi = excess(lo), excess(hi)
    if not (e_lo > 0 > e_hi):
        raise BoundaryOutsideBoundsError(
            f"boundary outside bounds at Qe={Qe:g}: peak gain - 1 is {e_lo:+.4f} at F={lo:g} "
            f"and {e_hi:+.4f} at F={hi:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    seen.sort()
    vals = [v for _, v in seen]
    if any(b > a + 1e-9 for a, b in zip(vals, vals[1:])):
        log.warning("peak gain not monotone in F at Qe=%g: %s", Qe, seen)
    return 0.5 * (lo + hi)


def design_region_boundary(Qe_grid, F_bounds=(1.01, 1.5), method: str = "model",
                           base: dict | None = None, tol: float = 1e-3) -> RegionCurve:
    """Unity-gain boundary F(Qe): above it the normalized gain stays below 1
    at every ripple frequency."""
    method = _method(method)
    pts = tuple((float(q), boundary_for_qe(q, F_bounds, method, base, tol))
                for q in sorted(Qe_grid))
    return RegionCurve(points=pts, method=method, F_bounds=tuple(F_bounds))
