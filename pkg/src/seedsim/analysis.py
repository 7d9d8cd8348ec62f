"""Post-run analysis: spectral cross-check of the tachometer against the
vibration seen by the accelerometer, and the electrical performance report.
Both operate purely on extracted flash-log records.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import MissingChannels, NoRotation, TooShort

DEFAULT_FFT_SIZE = 1024
DEFAULT_SAMPLE_RATE = 250.0


@dataclass
class SpectrumResult:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    sample_rate: float
    window: str

    @property
    def bin_width(self) -> float:
        return self.frequencies[1] - self.frequencies[0] if len(self.frequencies) > 1 else 0.0


def fft_magnitude(samples, rate: float, window: str = "rect") -> SpectrumResult:
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        raise TooShort(f"need at least 2 samples, got {n}")
    if window == "hann":
        x = x * np.hanning(n)
    elif window != "rect":
        raise ValueError(f"unknown window {window!r}")
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    return SpectrumResult(frequencies=freqs, magnitudes=mags, sample_rate=rate,
                          window=window)


def spectral_peaks(spec: SpectrumResult, floor_factor: float = 4.0) -> list:
    """Indices of local maxima clearly above the median magnitude."""
    m = spec.magnitudes
    floor = floor_factor * float(np.median(m))
    peaks = []
    for i in range(1, len(m) - 1):
        if m[i] > m[i - 1] and m[i] >= m[i + 1] and m[i] > floor:
            peaks.append(i)
    return peaks


def _peak_near(spec: SpectrumResult, target_hz: float, tol_bins: int = 1):
    """Local-maximum bin within +-tol_bins of the target frequency, or None."""
    m = spec.magnitudes
    bin_w = spec.bin_width
    center = int(round(target_hz / bin_w))
    best = None
    for b in range(max(center - tol_bins, 1), min(center + tol_bins, len(m) - 2) + 1):
        if m[b] >= m[b - 1] and m[b] >= m[b + 1]:
            if best is None or m[b] > m[best]:
                best = b
    return best


@dataclass
class TachWindowResult:
    start_s: float
    tach_hz: float
    peaks: dict           # harmonic k -> (freq_hz, magnitude) or None
    dominant_ok: bool
    passed: bool


@dataclass
class TachReport:
    windows: list
    analyzed: int
    passed: bool
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "analyzed_windows": self.analyzed,
            "diagnostic": self.diagnostic,
            "windows": [
                {"start_s": w.start_s, "tach_hz": w.tach_hz, "passed": w.passed,
                 "dominant_ok": w.dominant_ok,
                 "peaks": {str(k): v for k, v in w.peaks.items()}}
                for w in self.windows],
        }


HARMONICS = (1, 2, 4)


def validate_tachometer(records, n_fft: int = DEFAULT_FFT_SIZE,
                        rate: float = DEFAULT_SAMPLE_RATE,
                        channel: str = "accel_precise_x") -> TachReport:
    """Check that vibration peaks sit at the tachometer rate and its second and
    fourth harmonics, with the fourth dominant (four-bladed rotor).

    Only windows where the tachometer is steady (spread below one bin) are
    analyzed; windows spanning a setpoint change would smear the peaks.
    """
    if len(records) < n_fft:
        raise TooShort(f"log holds {len(records)} records, need {n_fft}")
    tach = np.array([r.tach_hz for r in records], dtype=float)
    if channel == "accel_precise_x":
        signal = np.array([r.accel_precise_g[0] for r in records], dtype=float)
    elif channel == "accel_precise_y":
        signal = np.array([r.accel_precise_g[1] for r in records], dtype=float)
    else:
        raise MissingChannels(f"unknown analysis channel {channel!r}")
    if float(np.max(tach)) < 0.5:
        raise NoRotation("tachometer reads zero throughout the log")

    bin_w = rate / n_fft
    hop = n_fft // 2
    windows = []
    for start in range(0, len(records) - n_fft + 1, hop):
        t_win = tach[start:start + n_fft]
        f = float(np.mean(t_win))
        # steady-rotation gate: robust spread below one bin, so sensor noise
        # does not reject a window but a setpoint transition does
        spread = float(np.percentile(t_win, 97.5) - np.percentile(t_win, 2.5))
        if f < 0.5 or spread > bin_w:
            continue
        spec = fft_magnitude(signal[start:start + n_fft] - np.mean(signal[start:start + n_fft]),
                             rate, window="hann")
        peaks = {}
        for k in HARMONICS:
            b = _peak_near(spec, k * f)
            peaks[k] = (float(spec.frequencies[b]), float(spec.magnitudes[b])) \
                if b is not None else None
        found = all(peaks[k] is not None for k in HARMONICS)
        dominant = found and peaks[4][1] > peaks[1][1] and peaks[4][1] > peaks[2][1]
        windows.append(TachWindowResult(start_s=start / rate, tach_hz=f, peaks=peaks,
                                        dominant_ok=dominant,
                                        passed=found and dominant))
    if not windows:
        raise NoRotation("no steady-rotation window found in the log")
    bad = [w for w in windows if not w.passed]
    if not bad:
        diag = f"all {len(windows)} windows show f/2f/4f peaks with 4f dominant"
    else:
        w = bad[0]
        missing = [k for k in HARMONICS if w.peaks[k] is None]
        if missing:
            diag = (f"window at {w.start_s:.1f}s: no peak within 1 bin of harmonic(s) "
                    f"{missing} of {w.tach_hz:.2f} Hz")
        else:
            diag = (f"window at {w.start_s:.1f}s: 4th harmonic not dominant "
                    f"(|4f|={w.peaks[4][1]:.2f} vs |1f|={w.peaks[1][1]:.2f}, "
                    f"|2f|={w.peaks[2][1]:.2f})")
    return TachReport(windows=windows, analyzed=len(windows), passed=not bad,
                      diagnostic=diag)


# --------------------------------------------------------------------------
# Electrical performance report
# --------------------------------------------------------------------------

@dataclass
class PowerReport:
    time_s: np.ndarray
    i_bat1: np.ndarray
    i_bat2: np.ndarray
    v_bus: np.ndarray
    servo_a: np.ndarray
    equality_metric: float
    min_bus_voltage: float
    min_bus_voltage_during_pulses: float
    threshold_v: float
    equality_bound: float
    passed: bool
    flags: list

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "equality_metric": self.equality_metric,
            "equality_bound": self.equality_bound,
            "min_bus_voltage": self.min_bus_voltage,
            "min_bus_voltage_during_pulses": self.min_bus_voltage_during_pulses,
            "threshold_v": self.threshold_v,
            "flags": self.flags,
            "samples": len(self.time_s),
        }


def power_report(records, threshold_v: float = 7.5,
                 equality_bound: float = 0.05) -> PowerReport:
    """Summarize string sharing and bus sag out of the flash log."""
    if not records:
        raise MissingChannels("empty log")
    t = np.array([r.time_us * 1e-6 for r in records])
    i1 = np.array([r.i_bat1 for r in records])
    i2 = np.array([r.i_bat2 for r in records])
    v = np.array([r.v_bus for r in records])
    servo = np.array([r.servo_current_a for r in records])
    total = i1 + i2
    drawing = total > 1e-6
    if not np.any(drawing):
        raise MissingChannels("no battery current anywhere in the log")
    equality = float(np.mean(np.abs(i1 - i2)[drawing]) / np.mean(total[drawing]))
    pulses = servo > 0.0
    min_v_pulses = float(np.min(v[pulses])) if np.any(pulses) else float(np.min(v))
    flags = []
    if equality >= equality_bound:
        flags.append(f"string imbalance: equality metric {equality:.3f} >= {equality_bound}")
    if min_v_pulses <= threshold_v:
        flags.append(f"bus sag: {min_v_pulses:.2f} V <= {threshold_v} V during servo pulses")
    if np.any(i1 < -1e-9) or np.any(i2 < -1e-9):
        flags.append("reverse battery current observed")
    return PowerReport(time_s=t, i_bat1=i1, i_bat2=i2, v_bus=v, servo_a=servo,
                       equality_metric=equality,
                       min_bus_voltage=float(np.min(v)),
                       min_bus_voltage_during_pulses=min_v_pulses,
                       threshold_v=threshold_v, equality_bound=equality_bound,
                       passed=not flags, flags=flags)


def write_spectra_csv(spectra, path) -> None:
    """Plot-ready CSV: one row per (window, bin)."""
    with open(path, "w") as fh:
        fh.write("window_start_s,frequency_hz,magnitude\n")
        for start_s, spec in spectra:
            for f, m in zip(spec.frequencies, spec.magnitudes):
                fh.write(f"{start_s:.3f},{f:.4f},{m:.6f}\n")


def write_report_json(report, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
