"""Constrained needle pose estimation from a curvilinear feature map.

The needle is rigidly (but not exactly repeatably) held by a driver whose
pose is known from its marker adapter. The residual uncertainty of the
grip is a slide along the jaw axis and three bounded rotations, so the
needle pose is found by exhaustively scoring a 4D grid of candidate
needle-in-driver transforms: each candidate projects the needle's model
points into the image and sums the feature response under them; the
highest-scoring candidate wins.

The grid is large (about 1.6 million candidates at default resolution), so
the rotated model points are cached per (model, grid) and the scoring loop
runs through a compiled kernel when numba is available, falling back to
vectorized numpy otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoCandidateVisible
from ..geometry.pose import FramedPose, Pose, perturbation_pose
from .camera import CameraModel, project_points

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba present in the supported env
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class NeedleModel:
    """Semicircular needle: model points spread evenly along the arc.

    Appearance is deliberately asymmetric: feature brightness tapers from
    the swaged tail (where the thread attaches) down to the sharpened tip,
    and a short thread stub continues past the tail along the arc tangent.
    Detection weights match the rendered profile. Without the asymmetry a
    near-in-plane rotation of the grip spins the circular arc almost onto
    its own image and scores competitively with the true grip.

    The tip sits at (+radius, 0, 0) in the needle frame, the tail at
    (-radius, 0, 0); the stub extends from the tail toward -z.
    """

    radius_mm: float = 4.0
    n_points: int = 10
    tip_fade: float = 0.35      # feature height at the tip, tail = 1
    stub_mm: float = 2.0        # thread stub length past the tail
    stub_points: int = 2
    grip: FramedPose = None  # needle-in-driver transform currently assumed

    def points(self) -> np.ndarray:
        """(n, 3) needle-frame points on the arc, tips included."""
        phi = np.arange(self.n_points) * (math.pi / (self.n_points - 1))
        return self.radius_mm * np.column_stack(
            [np.cos(phi), np.zeros(self.n_points), np.sin(phi)]
        )

    def dense_arc(self, n: int = 64) -> np.ndarray:
        phi = np.linspace(0.0, math.pi, n)
        return self.radius_mm * np.column_stack(
            [np.cos(phi), np.zeros(n), np.sin(phi)]
        )

    def arc_weight(self, t) -> np.ndarray:
        """Feature height at arc parameter t in [0, 1], tip to tail."""
        return self.tip_fade + (1.0 - self.tip_fade) * np.asarray(t, dtype=float)

    def feature_points(self) -> np.ndarray:
        """Arc points plus thread-stub points, needle frame."""
        arc = self.points()
        if self.stub_points <= 0 or self.stub_mm <= 0.0:
            return arc
        depth = self.stub_mm * np.arange(1, self.stub_points + 1) / self.stub_points
        stub = np.column_stack([
            np.full(self.stub_points, -self.radius_mm),
            np.zeros(self.stub_points),
            -depth,
        ])
        return np.vstack([arc, stub])

    def feature_weights(self) -> np.ndarray:
        """Per feature-point scoring weight, matching the rendered heights."""
        w = self.arc_weight(np.arange(self.n_points) / (self.n_points - 1))
        if self.stub_points <= 0 or self.stub_mm <= 0.0:
            return w
        return np.concatenate([w, np.ones(self.stub_points)])

    def validate(self) -> None:
        p = self.points()
        r = np.linalg.norm(p, axis=1)
        if np.max(np.abs(r - self.radius_mm)) > 1e-9:
            raise ValueError("model points fell off the arc")
        if np.max(np.abs(p[:, 1])) > 1e-9:
            raise ValueError("model points left the arc plane")
        if not 0.0 < self.tip_fade <= 1.0:
            raise ValueError("tip_fade must lie in (0, 1]")
        if self.stub_mm < 0.0:
            raise ValueError("stub length cannot be negative")


def _axis_values(bound: float, step: float, name: str) -> np.ndarray:
    if step <= 0.0 or bound <= 0.0:
        raise ValueError(f"{name}: bound and step must be positive")
    count = int(round(2.0 * bound / step)) + 1
    if abs((count - 1) * step - 2.0 * bound) > 1e-9:
        raise ValueError(f"{name}: step must divide the span exactly")
    return np.linspace(-bound, bound, count)


@dataclass(frozen=True)
class NeedleSearchSpace:
    """Bounded 4D grip search: slide along jaws, three rotations.

    Bounds are fixed properties of the gripper mechanics; only the grid
    resolution is tunable.
    """

    x_mm: float = 5.0
    rx_deg: float = 10.0
    ry_deg: float = 60.0
    rz_deg: float = 30.0
    step_x_mm: float = 0.5
    step_rx_deg: float = 1.0
    step_ry_deg: float = 2.0
    step_rz_deg: float = 1.0

    @staticmethod
    def paper_preset() -> "NeedleSearchSpace":
        return NeedleSearchSpace(step_x_mm=1.0, step_rx_deg=2.0,
                                 step_ry_deg=4.0, step_rz_deg=2.0)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            _axis_values(self.x_mm, self.step_x_mm, "x"),
            _axis_values(self.rx_deg, self.step_rx_deg, "rx"),
            _axis_values(self.ry_deg, self.step_ry_deg, "ry"),
            _axis_values(self.rz_deg, self.step_rz_deg, "rz"),
        )

    @property
    def n_candidates(self) -> int:
        xs, rxs, rys, rzs = self.axes()
        return len(xs) * len(rxs) * len(rys) * len(rzs)

    def contains(self, params, tol: float = 1e-9) -> bool:
        """Whether (dx, rx, ry, rz) lies within the mechanical bounds."""
        dx, rx, ry, rz = (float(v) for v in params)
        return (abs(dx) <= self.x_mm + tol and abs(rx) <= self.rx_deg + tol
                and abs(ry) <= self.ry_deg + tol and abs(rz) <= self.rz_deg + tol)


@dataclass(frozen=True)
class FeatureMap:
    """Non-negative response sampled on a (possibly supersampled) grid.

    ``scale`` is map pixels per image pixel. A map of shape
    ((H-1)*scale+1, (W-1)*scale+1) spans exactly the image extent, so
    image coordinate (u, v) lands at map coordinate (u*scale, v*scale)
    with the corners matching exactly. sample() takes image coordinates.
    """

    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError("feature map must be 2D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("feature map must be finite and non-negative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def sample(self, u, v) -> np.ndarray:
        """Bilinear sample at image coordinates; zero outside the map."""
        u = np.atleast_1d(np.asarray(u, dtype=float)) * self.scale
        v = np.atleast_1d(np.asarray(v, dtype=float)) * self.scale
        h, w = self.values.shape
        ok = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
        out = np.zeros(u.shape, dtype=float)
        if np.any(ok):
            uu, vv = u[ok], v[ok]
            i0 = np.minimum(uu.astype(int), w - 2)
            j0 = np.minimum(vv.astype(int), h - 2)
            fu, fv = uu - i0, vv - j0
            m = self.values
            out[ok] = (
                m[j0, i0] * (1 - fu) * (1 - fv)
                + m[j0, i0 + 1] * fu * (1 - fv)
                + m[j0 + 1, i0] * (1 - fu) * fv
                + m[j0 + 1, i0 + 1] * fu * fv
            )
        return out


@dataclass(frozen=True)
class ClutterModel:
    """Background distractors for the feature renderer."""

    level: float = 0.3          # blob amplitude relative to the arc ridge
    n_blobs: int = 25
    blob_sigma_px: tuple = (1.5, 4.0)
    blur_sigma_px: float = 0.0


def _splat(valmap: np.ndarray, u: float, v: float, amp: float, sigma: float,
           mode: str = "add") -> None:
    h, w = valmap.shape
    r = max(2, int(math.ceil(4.0 * sigma)))
    i0, i1 = int(math.floor(u)) - r, int(math.floor(u)) + r + 1
    j0, j1 = int(math.floor(v)) - r, int(math.floor(v)) + r + 1
    i0c, i1c = max(i0, 0), min(i1, w)
    j0c, j1c = max(j0, 0), min(j1, h)
    if i0c >= i1c or j0c >= j1c:
        return
    ii = np.arange(i0c, i1c)
    jj = np.arange(j0c, j1c)
    du = (ii - u) ** 2
    dv = (jj - v) ** 2
    patch = amp * np.exp(
        -(dv[:, None] + du[None, :]) / (2.0 * sigma * sigma)
    ).astype(np.float32)
    if mode == "max":
        np.maximum(valmap[j0c:j1c, i0c:i1c], patch, out=valmap[j0c:j1c, i0c:i1c])
    else:
        valmap[j0c:j1c, i0c:i1c] += patch


def render_needle_features(camera: CameraModel, needle_pose: Pose,
                           clutter: ClutterModel = None, rng=None,
                           model: NeedleModel = None, arc_samples: int = 128,
                           ridge_sigma_px: float = 2.4,
                           amplitude: float = 1.0,
                           supersample: int = 4) -> FeatureMap:
    """Synthesize the curvilinear feature response for a known needle pose.

    The projected arc becomes a ridge whose height follows the model's
    tail-to-tip taper, topped out at ``amplitude`` at the tail; the thread
    stub past the tail renders at full height. Splats compose by max, so
    foreshortened arc segments do not pile up. Clutter adds random blobs of
    height <= level * amplitude plus optional blur. The map is rendered at
    ``supersample`` map pixels per image pixel so that bilinear reads track
    the continuous ridge closely. Needle out of view -> all-zero map.
    """
    model = NeedleModel() if model is None else model
    s = int(supersample)
    if s < 1:
        raise ValueError("supersample must be >= 1")
    h = (camera.height - 1) * s + 1
    w = (camera.width - 1) * s + 1
    vals = np.zeros((h, w), dtype=np.float32)
    pts = model.dense_arc(arc_samples)
    amps = amplitude * model.arc_weight(np.linspace(0.0, 1.0, arc_samples))
    if model.stub_mm > 0.0:
        # sample the stub about as densely as the arc
        n_stub = max(2, int(round(
            arc_samples * model.stub_mm / (math.pi * model.radius_mm))))
        depth = np.linspace(0.0, model.stub_mm, n_stub)
        stub = np.column_stack([
            np.full(n_stub, -model.radius_mm), np.zeros(n_stub), -depth])
        pts = np.vstack([pts, stub])
        amps = np.concatenate([amps, np.full(n_stub, amplitude)])
    px, inside = project_points(camera, needle_pose.apply(pts))
    if np.any(inside):
        for (u, v), a in zip(px[inside], amps[inside]):
            _splat(vals, float(u) * s, float(v) * s, float(a),
                   ridge_sigma_px * s, mode="max")
    if clutter is not None and clutter.level > 0.0:
        rng = np.random.default_rng() if rng is None else rng
        for _ in range(clutter.n_blobs):
            u = rng.uniform(0, camera.width - 1)
            v = rng.uniform(0, camera.height - 1)
            amp = clutter.level * amplitude * rng.uniform(0.3, 1.0)
            sig = rng.uniform(*clutter.blob_sigma_px)
            _splat(vals, u * s, v * s, amp, sig * s)
        if clutter.blur_sigma_px > 0.0:
            from scipy.ndimage import gaussian_filter

            vals = gaussian_filter(vals, clutter.blur_sigma_px * s)
    return FeatureMap(values=np.maximum(vals, 0.0), scale=float(s))


# cached rotated model points, keyed by grid + grip + model geometry
_ROTATION_CACHE: dict = {}


def _rotation_matrices(rx_deg, ry_deg, rz_deg) -> np.ndarray:
    """All Rx(rx) @ Ry(ry) @ Rz(rz) combos, row-major over (rx, ry, rz)."""

    def stack(angles_deg, axis):
        a = np.radians(angles_deg)
        c, s = np.cos(a), np.sin(a)
        n = len(a)
        R = np.zeros((n, 3, 3))
        if axis == 0:
            R[:, 0, 0] = 1
            R[:, 1, 1], R[:, 1, 2] = c, -s
            R[:, 2, 1], R[:, 2, 2] = s, c
        elif axis == 1:
            R[:, 1, 1] = 1
            R[:, 0, 0], R[:, 0, 2] = c, s
            R[:, 2, 0], R[:, 2, 2] = -s, c
        else:
            R[:, 2, 2] = 1
            R[:, 0, 0], R[:, 0, 1] = c, -s
            R[:, 1, 0], R[:, 1, 1] = s, c
        return R

    Rx = stack(rx_deg, 0)
    Ry = stack(ry_deg, 1)
    Rz = stack(rz_deg, 2)
    Rxy = np.einsum("aij,bjk->abik", Rx, Ry)
    R = np.einsum("abik,ckl->abcil", Rxy, Rz)
    return R.reshape(-1, 3, 3)


def _cached_points(model: NeedleModel, space: NeedleSearchSpace) -> np.ndarray:
    """(n_rot, n_pts, 3) float32: rotated nominal-grip needle feature points."""
    grip = model.grip.pose if isinstance(model.grip, FramedPose) else model.grip
    key = (
        tuple(np.round(grip.t, 12)), tuple(np.round(grip.q, 12)),
        model.radius_mm, model.n_points,
        model.stub_mm, model.stub_points,
        space.x_mm, space.rx_deg, space.ry_deg, space.rz_deg,
        space.step_x_mm, space.step_rx_deg, space.step_ry_deg, space.step_rz_deg,
    )
    hit = _ROTATION_CACHE.get(key)
    if hit is not None:
        return hit
    _, rxs, rys, rzs = space.axes()
    q = grip.apply(model.feature_points())  # driver frame, nominal grip
    R = _rotation_matrices(rxs, rys, rzs)
    B = np.einsum("rij,pj->rpi", R, q).astype(np.float32)
    _ROTATION_CACHE.clear()  # one active grid at a time keeps memory flat
    _ROTATION_CACHE[key] = B
    return B


if _HAVE_NUMBA:

    @_njit(cache=True, fastmath=True)
    def _score_kernel(A, shifts, fmap, fx, fy, cx, cy):  # pragma: no cover - jit
        n_rot, n_pts = A.shape[0], A.shape[1]
        n_dx = shifts.shape[0]
        h, w = fmap.shape
        best = np.float32(-1.0)
        best_flat = -1
        for d in range(n_dx):
            sx, sy, sz = shifts[d, 0], shifts[d, 1], shifts[d, 2]
            for r in range(n_rot):
                s = np.float32(0.0)
                for j in range(n_pts):
                    Z = A[r, j, 2] + sz
                    if Z <= 0.0:
                        continue
                    u = fx * (A[r, j, 0] + sx) / Z + cx
                    v = fy * (A[r, j, 1] + sy) / Z + cy
                    if u < 0.0 or u > w - 1 or v < 0.0 or v > h - 1:
                        continue
                    i0 = int(u)
                    if i0 > w - 2:
                        i0 = w - 2
                    j0 = int(v)
                    if j0 > h - 2:
                        j0 = h - 2
                    fu = u - i0
                    fv = v - j0
                    s += (
                        fmap[j0, i0] * (1 - fu) * (1 - fv)
                        + fmap[j0, i0 + 1] * fu * (1 - fv)
                        + fmap[j0 + 1, i0] * (1 - fu) * fv
                        + fmap[j0 + 1, i0 + 1] * fu * fv
                    )
                if s > best:
                    best = s
                    best_flat = d * n_rot + r
        return best_flat, best


def _score_numpy(A: np.ndarray, shifts: np.ndarray, fm: FeatureMap,
                 camera: CameraModel) -> tuple[int, float]:
    n_rot, n_pts = A.shape[0], A.shape[1]
    best_flat, best = -1, -1.0
    flat = A.reshape(-1, 3)
    for d, sh in enumerate(shifts):
        P = flat + sh
        z = P[:, 2]
        front = z > 0
        u = np.where(front, camera.fx * P[:, 0] / np.where(front, z, 1.0) + camera.cx, -1.0)
        v = np.where(front, camera.fy * P[:, 1] / np.where(front, z, 1.0) + camera.cy, -1.0)
        vals = fm.sample(u, v)
        scores = vals.reshape(n_rot, n_pts).sum(axis=1)
        r = int(np.argmax(scores))
        if scores[r] > best:
            best = float(scores[r])
            best_flat = d * n_rot + r
    return best_flat, best


def detect_needle(fmap: FeatureMap, camera: CameraModel, driver_pose: Pose,
                  model: NeedleModel, space: NeedleSearchSpace,
                  stamp: float = 0.0) -> tuple[FramedPose, float]:
    """Exhaustive grid argmax of the needle-in-driver transform.

    Candidate grips are perturbation_pose(dx, (rx, ry, rz)) composed onto the
    model's nominal grip; ties break toward the first candidate in
    (dx, rx, ry, rz) row-major order. Raises NoCandidateVisible when no
    candidate collects any feature response.
    """
    xs, rxs, rys, rzs = space.axes()
    B = _cached_points(model, space)
    R_cd = driver_pose.rotation_matrix()
    A = (B @ R_cd.T.astype(np.float32)) + driver_pose.t.astype(np.float32)
    shifts = (xs[:, None] * R_cd[:, 0][None, :]).astype(np.float32)

    if _HAVE_NUMBA:
        # pre-scale intrinsics so projections land in map coordinates
        s = fmap.scale
        flat, score = _score_kernel(
            A, shifts, fmap.values,
            np.float32(camera.fx * s), np.float32(camera.fy * s),
            np.float32(camera.cx * s), np.float32(camera.cy * s),
        )
    else:
        flat, score = _score_numpy(A, shifts, fmap, camera)

    if flat < 0 or score <= 0.0:
        raise NoCandidateVisible("no needle candidate collects feature support")

    n_rot = len(rxs) * len(rys) * len(rzs)
    d, r = divmod(int(flat), n_rot)
    i_rx, rem = divmod(r, len(rys) * len(rzs))
    i_ry, i_rz = divmod(rem, len(rzs))
    grip0 = model.grip.pose if isinstance(model.grip, FramedPose) else model.grip
    pose = perturbation_pose(float(xs[d]),
                             (rxs[i_rx], rys[i_ry], rzs[i_rz])) * grip0
    if isinstance(model.grip, FramedPose):
        framed = FramedPose.varying(model.grip.parent, model.grip.child, pose, stamp)
    else:
        from ..geometry.pose import FrameId

        framed = FramedPose.varying(FrameId.driver("A"), FrameId.needle(), pose, stamp)
    return framed, float(score)


def decompose_grip(grip, reference_grip) -> tuple[np.ndarray, float]:
    """Factor a grip as slide-and-tilt relative to a reference grip.

    Returns (params, residual): params = (dx_mm, rx_deg, ry_deg, rz_deg) such
    that perturbation_pose(dx, (rx, ry, rz)) * reference matches the grip's
    rotation and jaw-axis slide exactly; residual is the off-axis translation
    magnitude the parameterisation cannot express (zero for anything produced
    by the detector or by in-plane slips).
    """
    g = grip.pose if isinstance(grip, FramedPose) else grip
    g0 = (reference_grip.pose if isinstance(reference_grip, FramedPose)
          else reference_grip)
    P = g * g0.inverse()
    M = P.rotation_matrix()
    b = math.asin(min(1.0, max(-1.0, float(M[0, 2]))))
    a = math.atan2(-M[1, 2], M[2, 2])
    c = math.atan2(-M[0, 1], M[0, 0])
    params = np.array([float(P.t[0]), math.degrees(a), math.degrees(b),
                       math.degrees(c)])
    residual = float(math.hypot(float(P.t[1]), float(P.t[2])))
    return params, residual
