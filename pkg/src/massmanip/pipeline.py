"""End-to-end synthesis: trajectory -> hands -> contacts -> fitting.

A ModelSnapshot is an immutable set of loaded models plus the run config;
the service and CLI both drive these entry points.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .connet import ConNetModel, estimate_contacts
from .diffusion import Condition
from .errors import ConfigError
from .fitopt import FitConfig, fit_sequence, temporal_smooth
from .handdiff import HandDiffModel, JointTrack, synthesize_hands
from .handmodel import ObjectShape
from .persist import MotionBundle
from .retime import RatioNetModel, retime_user_path
from .trajdiff import ObjectTrajectory, TrajDiffModel, synthesize_trajectory


@dataclass(frozen=True)
class ModelSnapshot:
    config: RunConfig
    trajdiff: TrajDiffModel | None = None
    handdiff: HandDiffModel | None = None
    connet: ConNetModel | None = None
    rationet: RatioNetModel | None = None

    @staticmethod
    def load(config: RunConfig) -> "ModelSnapshot":
        """Load whatever checkpoints exist under config.checkpoint_dir."""
        kwargs = {}
        loaders = {"trajdiff": TrajDiffModel, "handdiff": HandDiffModel,
                   "connet": ConNetModel, "rationet": RatioNetModel}
        for name, cls in loaders.items():
            path = config.checkpoint(name)
            if path.exists():
                kwargs[name] = cls.load(path)
        return ModelSnapshot(config=config, **kwargs)

    def loaded(self) -> dict:
        return {name: getattr(self, name).steps_trained
                for name in ("trajdiff", "handdiff", "connet", "rationet")
                if getattr(self, name) is not None}

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"snapshot is missing trained models: {missing}")


def _action_onehot(action):
    if action is None:
        return None
    a = np.zeros(6, dtype=np.float32)
    a[int(action)] = 1.0
    return a


def run_synthesis(snapshot: ModelSnapshot, mass: float, action: int | None = None,
                  seed: int = 0, traj: ObjectTrajectory | None = None,
                  fit_iters: int | None = None):
    """Full pipeline; returns (MotionBundle, summary dict)."""
    if mass <= 0:
        raise ConfigError(f"mass must be positive, got {mass}")
    if action is not None and not 0 <= int(action) <= 5:
        raise ConfigError(f"action must be in [0, 5], got {action}")
    cfg = snapshot.config
    shape = ObjectShape("sphere", cfg.radius)

    if traj is None:
        snapshot.require("trajdiff")
        traj = synthesize_trajectory(snapshot.trajdiff, mass, action, n=cfg.n_frames, seed=seed)
    elif traj.n_frames != cfg.n_frames:
        raise ConfigError(f"horizon mismatch: trajectory has {traj.n_frames} frames, "
                          f"models expect {cfg.n_frames}")

    snapshot.require("handdiff", "connet")
    joints = synthesize_hands(snapshot.handdiff, traj, mass,
                              action if snapshot.handdiff.use_action else None, seed=seed + 1)
    contacts = estimate_contacts(snapshot.connet, joints, traj,
                                 Condition(m=mass, a=_action_onehot(action)))
    fit_cfg = FitConfig(max_iters=fit_iters or cfg.fit_iters, tolerance=cfg.fit_tolerance,
                        l_hand=cfg.l_hand)
    result = fit_sequence(joints, contacts, traj, shape, fit_cfg)
    fitted_joints = JointTrack(result.surface.joints.reshape(traj.n_frames, -1), fps=traj.fps)
    if shape.kind != "sphere":
        smoothed = temporal_smooth(fitted_joints.joints, fit_cfg.smooth_sigma)
        fitted_joints = JointTrack(smoothed, fps=traj.fps)

    bundle = MotionBundle(traj=traj, joints=fitted_joints, contacts=contacts,
                          hand_params=result.params,
                          meta={"mass": mass, "action": action, "seed": seed,
                                "energy": result.report["terms"],
                                "fit_status": result.report["status"]})
    summary = {"mass": mass, "action": action, "seed": seed,
               "n_frames": traj.n_frames, "fit": result.report}
    return bundle, summary


def run_retime(snapshot: ModelSnapshot, points, mass: float, seed: int = 0,
               synthesize: bool = False):
    """Retiming pipeline; optionally continues into hand synthesis."""
    snapshot.require("rationet")
    if mass <= 0:
        raise ConfigError(f"mass must be positive, got {mass}")
    traj, ratios, phi_fix, d_user = retime_user_path(snapshot.rationet, points, mass)
    summary = {"d_user": d_user, "ratio_sum": float(ratios.r.sum()),
               "n_frames": traj.n_frames}
    if not synthesize:
        return MotionBundle(traj=traj, meta={"mass": mass, "seed": seed}), summary
    if traj.n_frames != snapshot.config.n_frames:
        raise ConfigError(f"horizon mismatch: retimed trajectory has {traj.n_frames} frames, "
                          f"models expect {snapshot.config.n_frames}")
    bundle, synth_summary = run_synthesis(snapshot, mass, None, seed=seed, traj=traj)
    summary.update(synth_summary)
    return bundle, summary


def motion_id(request: dict) -> str:
    """Deterministic id for a request payload."""
    return hashlib.sha256(json.dumps(request, sort_keys=True).encode()).hexdigest()[:16]
