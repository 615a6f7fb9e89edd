"""Post-run analysis of trajectories: transition windows, critical-point
estimates, surplus and second-giant statistics, dyadic bin profiles.

All functions are pure over recorded rows.  Window endpoints are exact up
to one grid interval (ceil(grid_dt * n) steps); the engine's threshold
trackers provide exact step resolution where sweeps need it.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .engine import EnsembleResult, Trajectory

H_L_TAGS = ("sqrt", "two_thirds", "n_over_log")


@dataclass
class WindowReport:
    mode: str                     # "fraction_thresholds" | "jump_thresholds"
    a: float | None = None
    b: float | None = None
    h_L: str | None = None
    delta_fraction: float | None = None
    m_minus: int | None = None
    m_plus: int | None = None
    delta_steps: int | None = None
    delta_norm: float | None = None
    grid_resolution_steps: int | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass
class CriticalEstimate:
    method: str                   # "l1_crossing" | "susceptibility_peak"
    t_c: float | None
    detail: float | None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass
class MaxStat:
    value: int
    at_m: int


def _grid_resolution(traj: Trajectory) -> int:
    return int(math.ceil(traj.config.grid_dt * traj.config.n))


def window(traj: Trajectory, a: float, b: float) -> WindowReport:
    """Steps between the last grid row with l1 <= a*n and the first with
    l1 >= b*n; endpoints are None when the threshold is never met."""
    if not 0 <= a < b <= 1:
        raise ValueError("need 0 <= a < b <= 1")
    n = traj.n
    return _window_from_levels(traj, a * n, b * n,
                               WindowReport(mode="fraction_thresholds", a=a, b=b))


def jump_window(traj: Trajectory, h_L_tag: str, delta: float) -> WindowReport:
    """Window from l1 <= h_L(n) to l1 >= delta*n for sublinear levels
    h_L in {n^(1/2), n^(2/3), n/ln n}."""
    if h_L_tag not in H_L_TAGS:
        raise ValueError(f"h_L tag must be one of {H_L_TAGS}")
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    n = traj.n
    level = {"sqrt": n ** 0.5, "two_thirds": n ** (2.0 / 3.0),
             "n_over_log": n / math.log(n) if n > 1 else 1.0}[h_L_tag]
    return _window_from_levels(traj, level, delta * n,
                               WindowReport(mode="jump_thresholds", h_L=h_L_tag,
                                            delta_fraction=delta))


def _window_from_levels(traj: Trajectory, low: float, high: float,
                        report: WindowReport) -> WindowReport:
    l1 = traj.l1
    below = np.nonzero(l1 <= low)[0]
    above = np.nonzero(l1 >= high)[0]
    report.grid_resolution_steps = _grid_resolution(traj)
    if below.size:
        report.m_minus = int(traj.m[below[-1]])
    if above.size:
        report.m_plus = int(traj.m[above[0]])
    if report.m_minus is not None and report.m_plus is not None:
        report.delta_steps = report.m_plus - report.m_minus
        report.delta_norm = report.delta_steps / traj.n
    return report


def surplus_max(traj: Trajectory, K: int) -> MaxStat:
    """Maximum over rows of N_{>=K} - L1 and its argmax step.

    K must be the configured surplus threshold or derivable from the
    recorded N_{<=k} grid (K-1 in record_ks).
    """
    if K == traj.config.surplus_K:
        series = traj.surplus
    elif K == 1:
        series = traj.n - traj.l1
    elif K - 1 in traj.config.record_ks:
        series = (traj.n - traj.n_le_col(K - 1)) - traj.l1
    else:
        raise ValueError(
            f"K={K} was not recorded (surplus_K={traj.config.surplus_K}) "
            f"and is not derivable from record_ks={traj.config.record_ks}")
    i = int(np.argmax(series))
    return MaxStat(int(series[i]), int(traj.m[i]))


def l2_max(traj: Trajectory) -> MaxStat:
    i = int(np.argmax(traj.l2))
    return MaxStat(int(traj.l2[i]), int(traj.m[i]))


def top_surplus_max(traj: Trajectory, K: int) -> MaxStat:
    """Like surplus_max with L1 replaced by the recorded top-(ell-1) sum;
    the natural statistic for rules that grow several giants."""
    if K == traj.config.surplus_K:
        n_ge = traj.surplus + traj.l1
    elif K - 1 in traj.config.record_ks:
        n_ge = traj.n - traj.n_le_col(K - 1)
    else:
        raise ValueError(f"K={K} not recorded")
    series = n_ge - traj.ltop
    i = int(np.argmax(series))
    return MaxStat(int(series[i]), int(traj.m[i]))


def susceptibility(traj: Trajectory) -> np.ndarray:
    """Per-row (sum_s s^2 hist[s] - l1^2) / n, the mean component size of
    a random vertex with the largest component removed."""
    return (traj.chi.astype(np.float64) - traj.l1.astype(np.float64) ** 2) / traj.n


def _mean_series(obj, name: str):
    if isinstance(obj, EnsembleResult):
        return obj.t, obj.column(name).astype(np.float64).mean(axis=0)
    return obj.t, getattr(obj, name).astype(np.float64)


def tc_estimate(obj, method: str = "l1_crossing") -> CriticalEstimate:
    """Finite-n critical point estimate from a trajectory or ensemble.

    l1_crossing: first time l1 reaches n^(2/3), interpolated linearly
    between the bracketing grid rows.  susceptibility_peak: grid time of
    the susceptibility maximum.  Both are conventions; agreement between
    them is reported, never asserted.
    """
    n = (obj.master_config.n if isinstance(obj, EnsembleResult)
         else obj.config.n)
    if method == "l1_crossing":
        level = n ** (2.0 / 3.0)
        t, l1 = _mean_series(obj, "l1")
        above = np.nonzero(l1 >= level)[0]
        if not above.size:
            return CriticalEstimate(method, None, float(level))
        i = int(above[0])
        if i == 0:
            return CriticalEstimate(method, float(t[0]), float(level))
        t0, t1 = t[i - 1], t[i]
        y0, y1 = l1[i - 1], l1[i]
        tc = t0 + (level - y0) * (t1 - t0) / (y1 - y0) if y1 > y0 else t1
        return CriticalEstimate(method, float(tc), float(level))
    if method == "susceptibility_peak":
        if isinstance(obj, EnsembleResult):
            chis = np.stack([susceptibility(tr) for tr in obj.trajectories])
            chi = chis.mean(axis=0)
            t = obj.t
        else:
            chi = susceptibility(obj)
            t = obj.t
        i = int(np.argmax(chi))
        return CriticalEstimate(method, float(t[i]), float(chi[i]))
    raise ValueError(f"unknown method {method!r}")


def sigma_profile(traj: Trajectory, t: float) -> np.ndarray:
    """Normalized dyadic size-bin occupancies at the grid row nearest t;
    entry j is the vertex fraction in components of size in [2^j, 2^(j+1))."""
    if t > traj.config.t_max + 1e-12:
        raise ValueError("t beyond the recorded horizon")
    i = int(np.argmin(np.abs(traj.t - t)))
    return traj.sigma[i].astype(np.float64) / traj.n
