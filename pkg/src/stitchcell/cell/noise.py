"""Noise presets and the cell's believed-pose sensors.

Three presets ship: ``none`` (every observation is exact, detection is
bypassed), ``desk`` (bench-scale imaging noise: 0.5 px corners, mild grip
drift per hand-over, 1% tracking outliers) and ``paper`` (disturbances tuned
so that every failure mode of the sewing study occurs). Preset values are
configuration, not measured quantities.

Sewing runs sense the mandrel through a pose-level measurement model whose
sigmas were calibrated once against the marker pipeline (single 30 mm marker
on the octagonal adapter, 550 mm range, 0.5 px corner noise gives roughly
2 mm / 0.8 deg single-shot error with occasional ambiguity flips; flips enter
as dropouts). Benches that reproduce the camera experiments drive the same
sensor through the actual marker tracker instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import TargetUnobservable
from ..geometry.pose import Pose
from ..vision.kalman import DoubleRateKalman, KalmanConfig
from ..vision.markers import AssemblyTracker, MarkerAssembly, ObservationNoise
from ..vision.needle import NeedleSearchSpace


@dataclass(frozen=True)
class NoisePreset:
    """Every stochastic knob of a simulated run."""

    name: str = "none"
    # imaging-path noise (marker corners, forward-backward gate, clutter)
    pixel_sigma_px: float = 0.0
    roundtrip_sigma_px: float = 0.0
    outlier_rate: float = 0.0
    clutter_level: float = 0.0
    # pose-level observation stand-in for per-tick mandrel sensing
    obs_sigma_mm: float = 0.0
    obs_sigma_deg: float = 0.0
    obs_drop_rate: float = 0.0
    # grip disturbances at each hand-over
    handover_sigma_mm: float = 0.0
    handover_sigma_deg: float = 0.0
    slip_rate: float = 0.0          # coarse in-bounds slip probability
    slip_mm: tuple = (0.0, 0.0)
    slip_deg: tuple = (0.0, 0.0)
    loss_rate: float = 0.0          # outright grip-loss probability
    entangle_rate: float = 0.0      # thread-entangle event probability per cycle
    tension_sigma: float = 0.0
    # needle-detection grid steps (x, rx, ry, rz); None keeps the default grid
    grid_steps: tuple | None = None

    @property
    def exact(self) -> bool:
        """True when observations and detection bypass the noisy stack."""
        return self.name == "none"

    def search_space(self) -> NeedleSearchSpace:
        if self.grid_steps is None:
            return NeedleSearchSpace()
        sx, srx, sry, srz = self.grid_steps
        return NeedleSearchSpace(step_x_mm=sx, step_rx_deg=srx,
                                 step_ry_deg=sry, step_rz_deg=srz)

    def observation_noise(self) -> ObservationNoise:
        return ObservationNoise(
            pixel_sigma=self.pixel_sigma_px,
            roundtrip_sigma=self.roundtrip_sigma_px,
            outlier_rate=self.outlier_rate,
        )

    def with_overrides(self, **kw) -> "NoisePreset":
        return replace(self, **kw)


def preset(name: str) -> NoisePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown noise preset {name!r}; have {sorted(PRESETS)}")


PRESETS = {
    "none": NoisePreset(name="none"),
    "desk": NoisePreset(
        name="desk",
        pixel_sigma_px=0.5,
        roundtrip_sigma_px=0.2,
        outlier_rate=0.01,
        clutter_level=0.3,
        obs_sigma_mm=2.0,
        obs_sigma_deg=0.8,
        obs_drop_rate=0.05,
        handover_sigma_deg=0.5,
    ),
    "paper": NoisePreset(
        name="paper",
        pixel_sigma_px=1.0,
        roundtrip_sigma_px=0.3,
        outlier_rate=0.02,
        clutter_level=0.45,
        obs_sigma_mm=1.0,
        obs_sigma_deg=0.4,
        obs_drop_rate=0.05,
        handover_sigma_mm=0.15,
        handover_sigma_deg=0.5,
        slip_rate=0.06,
        slip_mm=(0.8, 2.0),
        slip_deg=(4.0, 12.0),
        loss_rate=0.02,
        entangle_rate=0.025,
        tension_sigma=0.05,
        grid_steps=(0.5, 1.0, 2.0, 1.0),
    ),
}


def sample_pose_noise(rng: np.random.Generator, sigma_mm: float,
                      sigma_deg: float) -> Pose:
    """Small random rigid displacement, isotropic in both components."""
    t = rng.normal(0.0, sigma_mm, 3) if sigma_mm > 0 else np.zeros(3)
    rv = (np.radians(rng.normal(0.0, sigma_deg, 3))
          if sigma_deg > 0 else np.zeros(3))
    return Pose.from_rotvec(rv, t)


# ---------------------------------------------------------------------------
# believed-pose sensing

@dataclass(frozen=True)
class SensorConfig:
    """Filter and gate settings for a near-static tracked body."""

    q_trans: float = 0.01    # mm^2/s^3, low: the mandrel holds still mid-cycle
    q_rot: float = 1e-5      # rad^2/s^3
    gate_mm: float = 8.0     # innovation gate, absorbs pose-ambiguity flips
    gate_deg: float = 8.0
    max_rejects: int = 25    # hard re-init after this many consecutive rejects


class PoseSensor:
    """Per-camera-tick belief about one rigid body.

    A measurement backend produces a raw pose or ``None`` (dropout); a gross
    innovation against the filter prediction is treated as a dropout too,
    which suppresses marker-ambiguity flips. The constant-velocity filter
    smooths what survives. With no backend the sensor is exact: the belief
    is the true pose.
    """

    def __init__(self, initial: Pose, dt: float, measure=None,
                 meas_sigma_mm: float = 2.0, meas_sigma_deg: float = 0.8,
                 config: SensorConfig = SensorConfig()):
        self.dt = float(dt)
        self.measure = measure
        self.config = config
        self._exact = measure is None
        self._estimate = initial
        self._rejects = 0
        self._cmd = Pose.identity()
        self._res = initial
        self._kcfg = KalmanConfig(
            q_trans=config.q_trans,
            q_rot=config.q_rot,
            r_trans_mm=max(meas_sigma_mm, 1e-3),
            r_rot_rad=max(math.radians(meas_sigma_deg), 1e-5),
        )
        self._kf = None if self._exact else DoubleRateKalman(initial, self._kcfg)

    def estimate(self) -> Pose:
        return self._estimate

    def advance_command(self, increment: Pose) -> None:
        """Feed commanded motion of the body forward into the belief.

        The filter keeps estimating the command-invariant residual
        ``true * cmd^-1``, so a fast commanded move does not drag the
        near-static filter behind it; the belief jumps with the command and
        measurements keep correcting only the residual.
        """
        if self._exact:
            return
        self._cmd = self._cmd * increment
        self._estimate = self._estimate * increment

    def _gated(self, res_meas: Pose) -> Pose | None:
        delta = self._res.inverse() * res_meas
        ok = (delta.translation_norm() <= self.config.gate_mm
              and delta.rotation_angle_deg() <= self.config.gate_deg)
        if ok:
            self._rejects = 0
            return res_meas
        self._rejects += 1
        if self._rejects > self.config.max_rejects:
            # the body really moved: restart the filter at the measurement
            self._kf = DoubleRateKalman(res_meas, self._kcfg)
            self._res = res_meas
            self._rejects = 0
        return None

    def tick(self, true_pose: Pose, rng: np.random.Generator) -> Pose:
        """One camera tick: measure, gate, filter; returns the new belief."""
        if self._exact:
            self._estimate = true_pose
            return true_pose
        meas = self.measure(true_pose, rng)
        if meas is not None:
            meas = self._gated(meas * self._cmd.inverse())
        self._res = self._kf.step(self.dt, meas)
        self._estimate = self._res * self._cmd
        return self._estimate


def pose_level_backend(preset: NoisePreset):
    """Raw measurement model: gaussian pose noise plus dropouts."""
    if preset.exact:
        return None

    def measure(true_pose: Pose, rng: np.random.Generator):
        if preset.obs_drop_rate > 0 and rng.random() < preset.obs_drop_rate:
            return None
        return true_pose * sample_pose_noise(
            rng, preset.obs_sigma_mm, preset.obs_sigma_deg)

    return measure


def marker_backend(assembly: MarkerAssembly, camera, mount: Pose,
                   preset: NoisePreset, tau: float = 1.0):
    """Measurement through the actual marker pipeline.

    ``mount`` is the body-to-assembly transform (the octagonal adapter rings
    the mandrel axis, so its prism axis is the body x axis).
    """
    tracker = AssemblyTracker(assembly, camera, tau=tau)
    noise = preset.observation_noise()
    inv_mount = mount.inverse()

    def measure(true_pose: Pose, rng: np.random.Generator):
        try:
            est, _ = tracker.observe(true_pose * mount, noise, rng)
        except TargetUnobservable:
            return None
        return est * inv_mount

    return measure


# body-to-adapter mount: the marker prism axis lies along the mandrel x axis
MANDREL_MARKER_MOUNT = Pose.from_axis_angle_deg((0.0, 1.0, 0.0), 90.0)
