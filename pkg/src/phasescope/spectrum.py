"""Periodogram of a measurement record and the Lorentzian-overlap criterion."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .trajectory import MeasurementRecord

DEFAULT_OMEGA_CAP = 40.0
DEFAULT_SPAN = 20.0
NORM_TOL = 1e-8
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class Normalization(str, enum.Enum):
    RAW = "raw"
    UNIT_L2 = "unit_l2"
    UNIT_SQUARE = "unit_square"


def trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    if n > 1:
        w[0] = w[-1] = step / 2
    return w


@dataclass
class Spectrum:
    """Nonnegative PSD on a uniform angular-frequency grid."""

    frequencies: np.ndarray
    values: np.ndarray
    normalization: Normalization = Normalization.RAW
    mean_removed: bool = False
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.normalization = Normalization(self.normalization)
        if self.frequencies.shape != self.values.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and values must be 1-D arrays of equal length")
        if len(self.frequencies) < 2:
            raise ValueError("spectrum needs at least two grid points")
        steps = np.diff(self.frequencies)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0) or steps[0] <= 0:
            raise ValueError("frequency grid must be uniform and increasing")
        if np.any(self.values < 0):
            raise ValueError("spectrum values must be nonnegative")
        if self.normalization is not Normalization.RAW:
            norm = self.square_integral()
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"declared {self.normalization.value} normalisation violated: integral = {norm}")

    @property
    def step(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(len(self.frequencies), self.step)

    def square_integral(self) -> float:
        return float(self.weights @ (self.values**2))

    def normalized(self, kind: Normalization = Normalization.UNIT_L2) -> "Spectrum":
        peak = float(np.max(self.values))
        if not peak > 0:
            raise ValueError("cannot normalise an all-zero spectrum")
        scaled = self.values / peak  # avoids underflow of tiny spectra when squared
        norm = float(self.weights @ scaled**2)
        return replace(self, values=scaled / np.sqrt(norm), normalization=Normalization(kind))

    def to_csv(self) -> str:
        header = {
            "format": "phasescope.spectrum/1",
            "normalization": self.normalization.value,
            "mean_removed": self.mean_removed,
            "grid": {"start": float(self.frequencies[0]), "step": self.step, "n": len(self.frequencies)},
            **self.meta,
        }
        lines = ["# " + json.dumps(header, sort_keys=True, default=str), "omega,S"]
        lines += [f"{w!r},{s!r}" for w, s in zip(self.frequencies.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Spectrum":
        lines = text.splitlines()
        header = json.loads(lines[0][2:])
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln.strip()])
        meta = {k: v for k, v in header.items() if k not in ("format", "normalization", "mean_removed", "grid")}
        return cls(data[:, 0], data[:, 1], header["normalization"], header["mean_removed"], meta)


def record_series(record: MeasurementRecord, source: str = "record") -> np.ndarray:
    """Increments entering the periodogram.

    ``"record"`` is the measured dI_n. ``"signal"`` is its conditional mean
    gamma <M>_n dt, i.e. the record with the innovation (white shot noise)
    removed; it needs a record produced with ``means``.
    """
    if source == "record":
        return record.increments
    if source == "signal":
        if record.means is None:
            raise ValueError("record carries no conditional means; cannot use source='signal'")
        return record.gamma * record.means * record.dt
    raise ValueError(f"unknown periodogram source {source!r}")


def periodogram(record: MeasurementRecord, remove_mean: bool = True, omega_cap: float = DEFAULT_OMEGA_CAP,
                source: str = "record") -> Spectrum:
    """S(w_k) = (gamma T)^-1 |sum_n e^{-i w_k t_n} dI_n|^2 on w_k = 2 pi k / T, |w_k| <= cap."""
    n = len(record)
    if n == 0:
        raise ValueError("empty record")
    if record.gamma <= 0:
        raise ZeroDivisionError("periodogram normalisation needs gamma > 0")
    x = record_series(record, source)
    if remove_mean:
        x = x - x.mean()
    total = n * record.dt
    spec = np.fft.fft(x)
    kmax = min(int(math.floor(omega_cap * total / (2 * math.pi) + 1e-9)), (n - 1) // 2)
    k = np.arange(-kmax, kmax + 1)
    values = np.abs(spec[k % n]) ** 2 / (record.gamma * total)
    meta = {"omega_cap": omega_cap, "record": record.digest(), "gamma": record.gamma, "T": total,
            "window": "none", "source": source}
    return Spectrum(2 * math.pi * k / total, values, Normalization.RAW, remove_mean, meta)


def lorentz_norm_constant(width: float) -> float:
    """C with int C^2 / (width^2 + w^2)^2 dw = 1 over the real line."""
    return width**1.5 * math.sqrt(2.0 / math.pi)


def lorentzian_filter(frequencies: np.ndarray, width: float, weights: np.ndarray | None = None) -> np.ndarray:
    """Zero-centred Lorentzian with unit L2 norm under the grid's trapezoid rule.

    On the full line this is C/(width^2 + w^2) with C from
    :func:`lorentz_norm_constant`; normalising with the same quadrature as the
    spectrum keeps F <= 1 exactly on a finite grid.
    """
    raw = 1.0 / (width**2 + frequencies**2)
    if weights is None:
        weights = trapezoid_weights(len(frequencies), frequencies[1] - frequencies[0])
    return raw / np.sqrt(weights @ raw**2)


def lorentz_overlap(spectrum: Spectrum, width: float) -> float:
    """F(width) = int L_width(w) S'(w) dw with S' the unit-L2 spectrum."""
    if not width > 0:
        raise ValueError("Lorentzian width must be > 0")
    s = spectrum if spectrum.normalization is not Normalization.RAW else spectrum.normalized()
    w = s.weights
    return float(w @ (lorentzian_filter(s.frequencies, width, w) * s.values))


@dataclass
class LorentzFit:
    gamma_max: float
    overlap: float
    boundary: bool
    bracket: tuple[float, float]
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_max": self.gamma_max,
            "overlap": self.overlap,
            "boundary_flag": self.boundary,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
        }


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float, int]:
    """Maximise a unimodal ``f`` on [a, b] to absolute tolerance ``tol``."""
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol:
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x), it


def maximize_overlap(spectrum: Spectrum, width_min: float | None = None, width_max: float = DEFAULT_SPAN,
                     scan_points: int = 48, rtol: float = 1e-4) -> LorentzFit:
    """Log-spaced scan of F over [one bin, span], then golden-section refinement.

    A maximum on either end of the scan is reported with ``boundary=True``.
    """
    s = spectrum if spectrum.normalization is not Normalization.RAW else spectrum.normalized()
    w = s.weights
    lo = width_min if width_min is not None else s.step
    if not 0 < lo < width_max:
        raise ValueError("invalid Lorentzian width search range")

    def overlap_at(logw):
        return float(w @ (lorentzian_filter(s.frequencies, math.exp(logw), w) * s.values))

    grid = np.linspace(math.log(lo), math.log(width_max), scan_points)
    scan = np.array([overlap_at(g) for g in grid])
    best = int(np.argmax(scan))
    boundary = best in (0, scan_points - 1)
    a, b = grid[max(best - 1, 0)], grid[min(best + 1, scan_points - 1)]
    x, fx, it = golden_section_max(overlap_at, a, b, math.log1p(rtol))
    if scan[best] > fx:
        x, fx = grid[best], scan[best]
    return LorentzFit(math.exp(x), fx, boundary, (math.exp(a), math.exp(b)), it)
