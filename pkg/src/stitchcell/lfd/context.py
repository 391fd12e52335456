"""Task-context detection from cross-demonstration variance.

For aligned demonstrations, the per-sample spread over demos is summarized
by var_t (worst translation axis, meters squared) and var_r (worst
rotation axis, degrees squared).  The speed ratio R maps those onto
{0.5, 1.5, 2}: branches are evaluated top-down and the first match wins,
so when the overlapping "or" conditions select several branches the
slowest applies.  Boundary values belong to the earlier-listed branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewDemos


def speed_ratio(var_t: float, var_r: float) -> float:
    """Reproduction-to-demonstration speed ratio for one sample."""
    if var_t > 0.01 or var_r > 15.0:
        return 0.5
    if 0.005 <= var_t <= 0.01 or 5.0 <= var_r <= 15.0:
        return 1.5
    # reaching here implies var_t < 0.005 and var_r < 5
    return 2.0


@dataclass
class ContextProfile:
    times: np.ndarray    # (N,) aligned timeline, seconds
    var_t: np.ndarray    # (N,) worst-axis translation variance, m^2
    var_r: np.ndarray    # (N,) worst-axis rotation variance, deg^2
    ratios: np.ndarray   # (N,) R per sample

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.var_t = np.asarray(self.var_t, dtype=float).reshape(-1)
        self.var_r = np.asarray(self.var_r, dtype=float).reshape(-1)
        self.ratios = np.asarray(self.ratios, dtype=float).reshape(-1)

    def ratio_at(self, t: float) -> float:
        """Piecewise-constant lookup by nearest sample."""
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.ratios[i])


def context_profile(times: np.ndarray, aligned: list[np.ndarray]) -> ContextProfile:
    """Per-sample variance summary and speed ratios for aligned streams.

    ``aligned`` holds >= 2 h streams of identical length (the dtw_align
    output); ``times`` is their shared timeline.
    """
    if len(aligned) < 2:
        raise TooFewDemos(f"need >= 2 aligned demonstrations, got {len(aligned)}")
    stack = np.stack([np.atleast_2d(np.asarray(a, dtype=float)) for a in aligned])
    var = stack.var(axis=0)                 # (N, 6), population variance
    var_t = var[:, :3].max(axis=1)
    var_r = var[:, 3:].max(axis=1)
    ratios = np.array([speed_ratio(vt, vr) for vt, vr in zip(var_t, var_r)])
    return ContextProfile(times=times, var_t=var_t, var_r=var_r, ratios=ratios)
