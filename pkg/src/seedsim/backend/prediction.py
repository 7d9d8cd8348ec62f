"""Landing prediction from the stream of GPS-bearing telemetry records.

Constant-velocity extrapolation: fit position-vs-time lines over the latest
window of fixes, extend to altitude zero. The uncertainty radius is the
standard linear-regression prediction interval (3 sigma) of the horizontal
axes at the touchdown time, so it widens with noisy fixes and long lead times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientData

M_PER_DEG_LAT = 111320.0


@dataclass(frozen=True)
class Fix:
    t_s: float
    lat_deg: float
    lon_deg: float
    alt_m: float


@dataclass
class LandingPrediction:
    lat_deg: float
    lon_deg: float
    time_to_land_s: float
    uncertainty_radius_m: float
    based_on: int

    def to_dict(self) -> dict:
        return {
            "predicted_lat": self.lat_deg,
            "predicted_lon": self.lon_deg,
            "time_to_land_s": self.time_to_land_s,
            "uncertainty_radius_m": self.uncertainty_radius_m,
            "based_on": self.based_on,
        }


def _fit_line(t: np.ndarray, y: np.ndarray) -> tuple:
    """Least-squares y = a + b t; returns (a, b, residual_var, t_mean, sxx)."""
    t_mean = float(np.mean(t))
    y_mean = float(np.mean(y))
    dt = t - t_mean
    sxx = float(np.dot(dt, dt))
    if sxx == 0.0:
        raise InsufficientData("fixes do not span time")
    b = float(np.dot(dt, y - y_mean)) / sxx
    a = y_mean - b * t_mean
    resid = y - (a + b * t)
    dof = max(len(t) - 2, 1)
    return a, b, float(np.dot(resid, resid)) / dof, t_mean, sxx


def predict_landing(fixes, window: int = 20, min_floor_m: float = 25.0) -> LandingPrediction:
    """Extrapolate the newest `window` fixes to touchdown."""
    if len(fixes) < 2:
        raise InsufficientData(f"{len(fixes)} fixes, need at least 2")
    recent = list(fixes)[-window:]
    t = np.array([f.t_s for f in recent])
    alt = np.array([f.alt_m for f in recent])
    lat0 = recent[-1].lat_deg
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    east = np.array([(f.lon_deg - recent[-1].lon_deg) * m_per_deg_lon for f in recent])
    north = np.array([(f.lat_deg - lat0) * M_PER_DEG_LAT for f in recent])

    a_alt, vz, _, _, _ = _fit_line(t, alt)
    if vz >= -1e-9:
        raise InsufficientData(f"not descending (vz={vz:.2f} m/s)")
    t_now = float(t[-1])
    alt_now = a_alt + vz * t_now
    t_land = t_now + max(alt_now, 0.0) / -vz

    def extrapolate(y):
        a, b, var, t_mean, sxx = _fit_line(t, y)
        y_land = a + b * t_land
        pred_var = var * (1.0 + 1.0 / len(t) + (t_land - t_mean) ** 2 / sxx)
        return y_land, pred_var

    east_land, var_e = extrapolate(east)
    north_land, var_n = extrapolate(north)
    radius = max(min_floor_m, 3.0 * math.sqrt(var_e + var_n))
    return LandingPrediction(
        lat_deg=lat0 + north_land / M_PER_DEG_LAT,
        lon_deg=recent[-1].lon_deg + east_land / m_per_deg_lon,
        time_to_land_s=t_land - t_now,
        uncertainty_radius_m=radius,
        based_on=len(recent))
