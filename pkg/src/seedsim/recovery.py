"""Recovery device: rotate a directional antenna on the spot, estimate the
beacon bearing from the RSSI-vs-heading sweep, walk that way, repeat.

Bearing estimation is the argmax of the sweep after matched-filter smoothing:
the measured (mean-removed) RSSI samples are correlated against the antenna's
own gain template shifted over a fine candidate grid. For a symmetric pattern
and no noise the peak lands exactly on the true bearing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MaxStepsExceeded, NoSignal
from .transports import LoRaChannel


@dataclass(frozen=True)
class AntennaPattern:
    kind: str = "cardioid"         # omni | cardioid | yagi
    beamwidth_deg: float = 90.0
    floor_db: float = -30.0

    def gain_db(self, theta_deg):
        """Gain relative to boresight at off-axis angle(s) in degrees."""
        scalar = np.ndim(theta_deg) == 0
        theta = np.abs((np.asarray(theta_deg, dtype=float) + 180.0) % 360.0 - 180.0)
        if self.kind == "omni":
            out = np.zeros_like(theta)
        elif self.kind == "cardioid":
            out = 10.0 * np.log10((1.0 + np.cos(np.radians(theta))) / 2.0 + 1e-3)
        elif self.kind == "yagi":
            out = np.maximum(-12.0 * (theta / self.beamwidth_deg) ** 2, self.floor_db)
        else:
            raise ValueError(f"unknown antenna pattern {self.kind!r}")
        return float(out) if scalar else out


@dataclass
class BearingEstimate:
    bearing_deg: float
    confidence_deg: float
    samples: list  # (heading_deg, rssi_dbm or None)


FINE_GRID_DEG = 0.25


def estimate_bearing(samples, pattern: AntennaPattern,
                     grid_deg: float = FINE_GRID_DEG) -> BearingEstimate:
    """Matched-filter argmax over a fine bearing grid."""
    headings = np.array([h for h, r in samples if r is not None], dtype=float)
    rssi = np.array([r for _, r in samples if r is not None], dtype=float)
    if len(rssi) == 0:
        raise NoSignal("every sample in the sweep was below sensitivity")
    candidates = np.arange(0.0, 360.0, grid_deg)
    # template[c, j] = gain at |wrap(heading_j - candidate_c)|
    offsets = headings[None, :] - candidates[:, None]
    templates = pattern.gain_db(offsets)
    r = rssi - rssi.mean()
    t = templates - templates.mean(axis=1, keepdims=True)
    r_norm = np.linalg.norm(r)
    t_norm = np.linalg.norm(t, axis=1)
    if r_norm == 0.0 or np.all(t_norm == 0.0):
        # flat sweep (omni antenna): bearing is undefined, report the max sample
        best = int(np.argmax(rssi))
        return BearingEstimate(bearing_deg=float(headings[best]), confidence_deg=180.0,
                               samples=list(samples))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (t @ r) / np.where(t_norm > 0, t_norm * r_norm, np.inf)
    best = int(np.argmax(corr))
    bearing = float(candidates[best])
    peak = corr[best]
    near = corr >= peak - 0.05 * abs(peak)
    confidence = 0.5 * grid_deg * float(np.count_nonzero(near))
    return BearingEstimate(bearing_deg=bearing, confidence_deg=confidence,
                           samples=list(samples))


def scan_rotation(device_pos, step_deg: float, channel: LoRaChannel, seed_pos,
                  pattern: AntennaPattern, rng=None) -> BearingEstimate:
    """Turn on the spot in `step_deg` increments, sampling one beacon each."""
    samples = []
    for heading in np.arange(0.0, 360.0, step_deg):
        rssi = channel.receive(seed_pos, device_pos, float(heading), pattern, rng)
        samples.append((float(heading), rssi))
    return estimate_bearing(samples, pattern)


def estimate_distance(estimate: BearingEstimate, channel: LoRaChannel,
                      pattern: AntennaPattern) -> float:
    """Invert the path-loss model using the received samples and the bearing."""
    losses = []
    for heading, rssi in estimate.samples:
        if rssi is None:
            continue
        gain = pattern.gain_db(estimate.bearing_deg - heading)
        losses.append(channel.tx_power_dbm + gain - rssi)
    path_loss = float(np.median(losses))
    exponent = (path_loss - channel.reference_loss_db) / (10.0 * channel.path_loss_exponent)
    return 10.0 ** exponent


@dataclass
class LocateResult:
    path: list                 # positions including start and final
    bearings: list
    steps: int
    final_distance_m: float
    no_signal_steps: int = 0


def locate(start_pos, seed_pos, channel: LoRaChannel, pattern: AntennaPattern,
           rng=None, step_length_m: float = 100.0, max_steps: int = 100,
           capture_radius_m: float = 25.0, scan_step_deg: float = 10.0) -> LocateResult:
    """Repeat scan-and-walk until within the capture radius."""
    pos = (float(start_pos[0]), float(start_pos[1]))
    target = (float(seed_pos[0]), float(seed_pos[1]))
    path = [pos]
    bearings = []
    no_signal = 0

    def distance_to_target(p):
        return math.hypot(target[0] - p[0], target[1] - p[1])

    for step in range(max_steps):
        if distance_to_target(pos) <= capture_radius_m:
            return LocateResult(path=path, bearings=bearings, steps=step,
                                final_distance_m=distance_to_target(pos),
                                no_signal_steps=no_signal)
        try:
            est = scan_rotation(pos, scan_step_deg, channel, target, pattern, rng)
        except NoSignal:
            no_signal += 1
            bearings.append(None)
            path.append(pos)
            continue
        bearings.append(est.bearing_deg)
        est_dist = estimate_distance(est, channel, pattern)
        stride = min(step_length_m, max(capture_radius_m / 2.0, est_dist))
        rad = math.radians(est.bearing_deg)
        pos = (pos[0] + stride * math.sin(rad), pos[1] + stride * math.cos(rad))
        path.append(pos)
    if distance_to_target(pos) <= capture_radius_m:
        return LocateResult(path=path, bearings=bearings, steps=max_steps,
                            final_distance_m=distance_to_target(pos),
                            no_signal_steps=no_signal)
    raise MaxStepsExceeded(
        f"not within {capture_radius_m} m after {max_steps} steps "
        f"({no_signal} scans without signal)", path=path)


def write_path_csv(result: LocateResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("step,east_m,north_m,bearing_deg\n")
        for i, p in enumerate(result.path):
            bearing = result.bearings[i - 1] if 0 < i <= len(result.bearings) else None
            b = f"{bearing:.2f}" if bearing is not None else ""
            fh.write(f"{i},{p[0]:.2f},{p[1]:.2f},{b}\n")
