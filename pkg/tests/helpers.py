"""Small builders shared by the test modules."""

import json
import os

import numpy as np

from motion_lingua.core import Trajectory

HERE = os.path.dirname(__file__)
GOLDEN = os.path.join(HERE, "golden")


def make_traj(actions, ep_id="ep", instruction="pick up the cup", positions=None, frame_refs=None):
    return Trajectory.from_arrays(ep_id, instruction, np.asarray(actions, dtype=float), positions, frame_refs)


def x_steps(values, gripper=1.0):
    """Normalized actions moving along x only."""
    a = np.zeros((len(values), 7))
    a[:, 0] = values
    a[:, 6] = gripper
    return a


def write_jsonl(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    return str(path)


def golden_path(name):
    return os.path.join(GOLDEN, name)
