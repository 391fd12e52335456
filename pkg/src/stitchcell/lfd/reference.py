"""Reference trajectories retrieved from primitive models.

build_reference samples the mixture on a uniform query grid and converts
the context ratios into playback dwell times: a sample's dwell is the
query-grid step divided by its R, so R > 1 plays back faster and R < 1
slower, while the retrieved path itself is untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..geometry import FrameId
from .context import ContextProfile
from .gmm import GmmModel
from .gmr import gmr


@dataclass
class ReferenceTrajectory:
    primitive_index: int
    frame: FrameId
    times: np.ndarray     # (N,) playback timestamps, strictly increasing
    mu: np.ndarray        # (N, 6) h vectors (m, deg)
    sigma: np.ndarray     # (N, 6, 6)
    ratios: np.ndarray    # (N,) R per sample

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.ratios = np.asarray(self.ratios, dtype=float).reshape(-1)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class PrimitiveModel:
    """A fitted mixture plus the context it was learned in."""

    primitive_index: int
    frame: FrameId
    model: GmmModel
    context: ContextProfile
    demo_slot: dict | None = None      # pose record of the taught slot (m -> s)
    needle_ready: dict | None = None   # pose record, needle start pose in slot frame
    meta: dict = field(default_factory=dict)


def build_reference(
    model: GmmModel,
    context: ContextProfile,
    n_samples: int,
    primitive_index: int = 0,
    frame: FrameId | None = None,
) -> ReferenceTrajectory:
    """Retrieve a speed-scheduled reference on a uniform query grid."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    t_grid = np.linspace(context.times[0], context.times[-1], n_samples)
    mu, sigma = gmr(model, t_grid)
    ratios = np.array([context.ratio_at(t) for t in t_grid])

    times = np.empty(n_samples)
    times[0] = 0.0
    dt = np.diff(t_grid)
    times[1:] = np.cumsum(dt / ratios[1:])

    return ReferenceTrajectory(
        primitive_index=primitive_index,
        frame=frame if frame is not None else FrameId.mandrel(),
        times=times,
        mu=mu,
        sigma=sigma,
        ratios=ratios,
    )


# ---------------------------------------------------------------------------
# model and reference files

def save_model(pm: PrimitiveModel, path) -> None:
    m = pm.model
    doc = {
        "primitive_index": pm.primitive_index,
        "frame": pm.frame.tag(),
        "K": m.K,
        "priors": m.priors.tolist(),
        "means": m.means.tolist(),
        "covariances": m.covariances.tolist(),
        "epsilon": m.epsilon,
        "seed": m.seed,
        "context": {
            "times": pm.context.times.tolist(),
            "var_t": pm.context.var_t.tolist(),
            "var_r": pm.context.var_r.tolist(),
            "R": pm.context.ratios.tolist(),
        },
        "demo_slot": pm.demo_slot,
        "needle_ready": pm.needle_ready,
        "meta": pm.meta,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_model(path) -> PrimitiveModel:
    with open(path) as f:
        doc = json.load(f)
    model = GmmModel(
        priors=np.array(doc["priors"]),
        means=np.array(doc["means"]),
        covariances=np.array(doc["covariances"]),
        epsilon=float(doc["epsilon"]),
        seed=doc.get("seed"),
    )
    ctx = doc["context"]
    context = ContextProfile(
        times=np.array(ctx["times"]),
        var_t=np.array(ctx["var_t"]),
        var_r=np.array(ctx["var_r"]),
        ratios=np.array(ctx["R"]),
    )
    return PrimitiveModel(
        primitive_index=int(doc["primitive_index"]),
        frame=FrameId.from_tag(doc["frame"]),
        model=model,
        context=context,
        demo_slot=doc.get("demo_slot"),
        needle_ready=doc.get("needle_ready"),
        meta=doc.get("meta", {}),
    )


def save_reference(ref: ReferenceTrajectory, path) -> None:
    doc = {
        "primitive_index": ref.primitive_index,
        "frame": ref.frame.tag(),
        "samples": [
            {
                "t": float(ref.times[i]),
                "mu_h": ref.mu[i].tolist(),
                "sigma_hh": ref.sigma[i].tolist(),
                "R": float(ref.ratios[i]),
            }
            for i in range(len(ref))
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_reference(path) -> ReferenceTrajectory:
    with open(path) as f:
        doc = json.load(f)
    samples = doc["samples"]
    return ReferenceTrajectory(
        primitive_index=int(doc["primitive_index"]),
        frame=FrameId.from_tag(doc["frame"]),
        times=np.array([s["t"] for s in samples]),
        mu=np.array([s["mu_h"] for s in samples]),
        sigma=np.array([s["sigma_hh"] for s in samples]),
        ratios=np.array([s["R"] for s in samples]),
    )
