"""Motion bundle container: one file holding trajectory, joints, contacts, fit.

Layout: uint32 header length, JSON header, concatenated little-endian
float32 blocks. The header carries per-block offsets/shapes, presence flags
for optional parts, and a sha256 checksum of the payload; loading a
corrupted file raises ConfigError.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .connet import ContactMap
from .errors import ConfigError, ShapeError
from .handdiff import JointTrack
from .handmodel import HandParams
from .trajdiff import ObjectTrajectory

FORMAT_VERSION = 1


@dataclass
class MotionBundle:
    traj: ObjectTrajectory | None = None
    joints: JointTrack | None = None
    contacts: ContactMap | None = None
    hand_params: HandParams | None = None
    meta: dict | None = None

    @property
    def n_frames(self) -> int | None:
        for part in (self.traj, self.joints, self.contacts, self.hand_params):
            if part is not None:
                return part.n_frames
        return None


def _blocks_of(bundle: MotionBundle) -> dict:
    blocks = {}
    if bundle.traj is not None:
        blocks["trajectory"] = bundle.traj.poses
    if bundle.joints is not None:
        blocks["joints"] = bundle.joints.joints
    if bundle.contacts is not None:
        blocks["contacts"] = bundle.contacts.b
    if bundle.hand_params is not None:
        h = bundle.hand_params
        blocks["hand_tau"] = h.tau
        blocks["hand_rot6"] = h.rot6
        blocks["hand_theta"] = h.theta.reshape(h.n_frames, -1)
        blocks["hand_beta"] = h.beta
    return blocks


def persist_motion(path, bundle: MotionBundle):
    """Write a bundle; all present parts must agree on the frame count."""
    n = bundle.n_frames
    if n is None:
        raise ShapeError("cannot persist an empty motion bundle")
    for part in (bundle.traj, bundle.joints, bundle.contacts, bundle.hand_params):
        if part is not None and part.n_frames != n:
            raise ShapeError(f"bundle frame counts disagree: {part.n_frames} vs {n}")
    blocks = _blocks_of(bundle)
    payload = b""
    index = {}
    for name in sorted(blocks):
        arr = np.ascontiguousarray(blocks[name], dtype="<f4")
        index[name] = {"offset": len(payload), "shape": list(arr.shape)}
        payload += arr.tobytes()
    header = {
        "version": FORMAT_VERSION,
        "n_frames": n,
        "fps": bundle.traj.fps if bundle.traj is not None else 50.0,
        "flags": {
            "trajectory": bundle.traj is not None,
            "joints": bundle.joints is not None,
            "contacts": bundle.contacts is not None,
            "hand_params": bundle.hand_params is not None,
        },
        "blocks": index,
        "payload_size": len(payload),
        "checksum": hashlib.sha256(payload).hexdigest(),
        "meta": bundle.meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(payload)
    return path


def load_motion(path) -> MotionBundle:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"motion file not found: {path}")
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + hlen].decode())
    payload = raw[4 + hlen:]
    if len(payload) != header["payload_size"]:
        raise ConfigError(f"payload size mismatch in {path}: header says {header['payload_size']}, "
                          f"file has {len(payload)}")
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise ConfigError(f"checksum mismatch in {path}: file is corrupt")

    def block(name):
        meta = header["blocks"][name]
        shape = tuple(meta["shape"])
        count = int(np.prod(shape))
        return np.frombuffer(payload, dtype="<f4", count=count,
                             offset=meta["offset"]).reshape(shape).copy()

    flags = header["flags"]
    traj = joints = contacts = hand_params = None
    if flags["trajectory"]:
        meta = header.get("meta", {})
        traj = ObjectTrajectory(block("trajectory"), fps=header["fps"],
                                mass=meta.get("mass"), action=meta.get("action"))
    if flags["joints"]:
        joints = JointTrack(block("joints"), fps=header["fps"])
    if flags["contacts"]:
        contacts = ContactMap(block("contacts"))
    if flags["hand_params"]:
        n = header["n_frames"]
        hand_params = HandParams(block("hand_tau"), block("hand_rot6"),
                                 block("hand_theta").reshape(n, 2, 15, 3),
                                 block("hand_beta"))
    return MotionBundle(traj=traj, joints=joints, contacts=contacts,
                        hand_params=hand_params, meta=header.get("meta", {}))


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
