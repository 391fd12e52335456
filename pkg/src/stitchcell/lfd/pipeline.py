"""Demonstration-to-reference pipeline in one call.

Chains the pieces in their canonical order: segment each demonstration into
the five primitives, time-align every primitive across demonstrations onto
demo 0's timeline, summarize cross-demo variance into a speed-ratio context,
encode (t, h) with a mixture whose K is chosen by held-out likelihood, and
attach the metadata the execution side needs (taught slot, ready pose,
camera-mandrel relation, grip contact angles).
"""

from __future__ import annotations

import numpy as np

from ..errors import TooFewDemos
from ..geometry.pose import Pose
from .context import context_profile
from .demonstration import Demonstration, segment
from .dtw import dtw_align
from .gmm import MIN_POINTS_PER_COMPONENT, fit_gmm, select_k
from .reference import PrimitiveModel, ReferenceTrajectory, build_reference

DEFAULT_K_CANDIDATES = (8, 13, 21, 34)
CV_FOLDS = 3


def pose_record(pose: Pose) -> dict:
    alpha, beta, theta = pose.euler_deg()
    return {"xyz": [float(v) for v in pose.t],
            "euler_deg": [float(alpha), float(beta), float(theta)]}


def pose_from_record(d: dict) -> Pose:
    return Pose.from_euler_deg(d["xyz"], d["euler_deg"])


def learn_models(demos: list[Demonstration],
                 k_candidates=DEFAULT_K_CANDIDATES,
                 seed: int = 0) -> list[PrimitiveModel]:
    """Fit one primitive model per stitch-cycle primitive."""
    if len(demos) < 2:
        raise TooFewDemos(f"need >= 2 demonstrations, got {len(demos)}")
    segs_per_demo = [segment(d) for d in demos]

    meta = dict(demos[0].meta)
    meta["camera_mandrel"] = pose_record(demos[0].camera_mandrel)

    k_candidates = tuple(k_candidates)
    models = []
    for p in range(5):
        segs = [sd[p] for sd in segs_per_demo]
        aligned = dtw_align(segs[0].h_array, [s.h_array for s in segs[1:]])
        times = segs[0].times
        ctx = context_profile(times, aligned)
        pts = np.vstack([np.column_stack([times, a]) for a in aligned])
        # every cross-validation fold must keep each component identifiable
        limit = len(pts) // (CV_FOLDS * MIN_POINTS_PER_COMPONENT)
        feasible = tuple(k for k in k_candidates if k <= limit) or k_candidates[:1]
        K = (select_k(pts, feasible, folds=CV_FOLDS, seed=seed)
             if len(feasible) > 1 else feasible[0])
        gm = fit_gmm(pts, K, seed=seed)
        models.append(PrimitiveModel(
            primitive_index=p + 1,
            frame=segs[0].frame,
            model=gm,
            context=ctx,
            demo_slot=pose_record(demos[0].demo_slot),
            needle_ready=dict(meta["needle_ready_slot"]),
            meta=meta,
        ))
    return models


def references_from_models(models: list[PrimitiveModel],
                           rate_hz: float = 20.0) -> list[ReferenceTrajectory]:
    """Sample each model on a uniform query grid at the given cadence."""
    refs = []
    for m in sorted(models, key=lambda m: m.primitive_index):
        dur = float(m.context.times[-1] - m.context.times[0])
        n = max(2, int(round(dur * rate_hz)) + 1)
        refs.append(build_reference(m.model, m.context, n,
                                    primitive_index=m.primitive_index,
                                    frame=m.frame))
    return refs
