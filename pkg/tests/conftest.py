import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from signscore import quat
from signscore.motion import MotionSequence
from signscore.skeleton import Joint, Skeleton, default_skeleton


@pytest.fixture(scope="session")
def hands32():
    return default_skeleton()


@pytest.fixture(scope="session")
def tiny_skeleton():
    """Two 3-joint chains (N = 6), cheap enough for transformer tests."""
    joints = [
        Joint(0, "a_root", None, (0.0, 0.0, 0.0)),
        Joint(1, "a_mid", 0, (0.0, 1.0, 0.0)),
        Joint(2, "a_tip", 1, (0.0, 0.5, 0.0)),
        Joint(3, "b_root", None, (1.0, 0.0, 0.0)),
        Joint(4, "b_mid", 3, (0.0, 1.0, 0.0)),
        Joint(5, "b_tip", 4, (0.0, 0.5, 0.0)),
    ]
    return Skeleton("tiny6", joints)


def random_quats(rng, shape):
    """Uniform random unit quaternions (canonical), any leading shape."""
    q = rng.normal(size=shape + (4,))
    return quat.canonicalize(q)


def random_sequence(rng, skel, n_frames=12, fps=30.0, max_angle=0.9):
    axes = rng.normal(size=(n_frames, skel.n_joints, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, size=(n_frames, skel.n_joints, 1))
    rots = quat.from_axis_angle(axes * angles)
    return MotionSequence(skel.skeleton_id, fps, rots, np.arange(n_frames) / fps)


def constant_sequence(skel, rotation, n_frames=10, fps=30.0):
    rots = np.broadcast_to(rotation, (n_frames, skel.n_joints, 4)).copy()
    return MotionSequence(skel.skeleton_id, fps, rots, np.arange(n_frames) / fps)
