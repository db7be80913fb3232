"""Joint hierarchies: definition files, traversal order, forward kinematics.

A skeleton is a forest of joints; each joint carries a rest offset
expressed in its parent's frame.  The bundled default asset
``skeleton_hands32`` models two 16-joint hands (wrist root plus five
fingers of three joints each, N = 32).  Its rest offsets are plausible
hand proportions chosen for this package, not measured data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import quat
from .errors import ParseError, ValidationError

SKELETON_FORMAT_VERSION = 1
DEFAULT_SKELETON_ID = "skeleton_hands32"


@dataclass(frozen=True)
class Joint:
    id: int
    name: str
    parent: int | None
    rest_offset: tuple[float, float, float]


class Skeleton:
    """Validated, immutable joint hierarchy with cached traversal tables."""

    def __init__(self, skeleton_id, joints):
        if not skeleton_id:
            raise ValidationError("skeleton id must be nonempty")
        joints = sorted(joints, key=lambda j: j.id)
        if not joints:
            raise ValidationError("skeleton has no joints")
        ids = [j.id for j in joints]
        if ids != list(range(len(joints))):
            raise ValidationError("joint ids must be exactly 0..N-1 and unique")
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise ValidationError("joint names must be unique")

        n = len(joints)
        parents = np.full(n, -1, dtype=np.int64)
        for j in joints:
            if j.parent is None:
                continue
            if j.parent == j.id:
                raise ValidationError(f"joint {j.id} is its own parent")
            if not 0 <= j.parent < n:
                raise ValidationError(f"joint {j.id} references missing parent {j.parent}")
            parents[j.id] = j.parent

        depths = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            seen = []
            k = i
            while k >= 0 and depths[k] < 0:
                seen.append(k)
                k = int(parents[k])
                if len(seen) > n:
                    raise ValidationError("skeleton hierarchy contains a cycle")
            base = 0 if k < 0 else int(depths[k]) + 1
            for step, node in enumerate(reversed(seen)):
                depths[node] = base + step
        if (parents < 0).sum() == 0:
            raise ValidationError("skeleton has no root joint")

        offsets = np.array([j.rest_offset for j in joints], dtype=np.float64)
        if offsets.shape != (n, 3) or not np.all(np.isfinite(offsets)):
            raise ValidationError("rest offsets must be finite 3-vectors")

        self.skeleton_id = skeleton_id
        self.joints = tuple(joints)
        self.parents = parents
        self.rest_offsets = offsets
        self.depths = depths
        # breadth-first order: by depth, ties broken by id (roots first)
        self.topo_order = tuple(sorted(range(n), key=lambda i: (depths[i], i)))
        self._ancestors = tuple(self._chain(i) for i in range(n))

    def _chain(self, i):
        out = []
        k = int(self.parents[i])
        while k >= 0:
            out.append(k)
            k = int(self.parents[k])
        return tuple(out)

    @property
    def n_joints(self):
        return len(self.joints)

    def ancestors(self, i):
        """Joint ids on the chain above i, nearest parent first."""
        return self._ancestors[i]

    def descendants(self, i):
        return tuple(j for j in range(self.n_joints) if i in self._ancestors[j])

    def ancestry_mask(self):
        """Boolean (N, N) over topo-order positions: row i may attend to
        column j iff joint(j) is joint(i) itself or one of its ancestors."""
        order = self.topo_order
        n = self.n_joints
        mask = np.zeros((n, n), dtype=bool)
        for a in range(n):
            allowed = set(self._ancestors[order[a]]) | {order[a]}
            for b in range(n):
                mask[a, b] = order[b] in allowed
        return mask

    def to_json(self):
        return {
            "format_version": SKELETON_FORMAT_VERSION,
            "id": self.skeleton_id,
            "joints": [
                {
                    "id": j.id,
                    "name": j.name,
                    "parent": j.parent,
                    "rest_offset": list(j.rest_offset),
                }
                for j in self.joints
            ],
        }

    @classmethod
    def from_json(cls, doc):
        try:
            version = doc["format_version"]
            if version != SKELETON_FORMAT_VERSION:
                raise ParseError(f"unsupported skeleton format_version {version!r}")
            joints = [
                Joint(
                    id=int(j["id"]),
                    name=str(j["name"]),
                    parent=None if j["parent"] is None else int(j["parent"]),
                    rest_offset=tuple(float(c) for c in j["rest_offset"]),
                )
                for j in doc["joints"]
            ]
            skeleton_id = str(doc["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed skeleton document: {exc}") from exc
        return cls(skeleton_id, joints)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def topological_order(skel):
    """Joint ids with every parent before its children: breadth-first by
    depth, ties broken by ascending id (so chain roots come first)."""
    return list(skel.topo_order)


def load_skeleton(name_or_path):
    """Load a skeleton definition file, or a bundled asset by bare name."""
    text = None
    name = str(name_or_path)
    if "/" not in name and not name.endswith(".json"):
        res = resources.files("signscore.assets").joinpath(f"{name}.json")
        if res.is_file():
            text = res.read_text(encoding="utf-8")
    if text is None:
        try:
            with open(name_or_path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValidationError(f"cannot read skeleton {name_or_path!r}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"skeleton file is not valid JSON: {exc}") from exc
    return Skeleton.from_json(doc)


def default_skeleton():
    return load_skeleton(DEFAULT_SKELETON_ID)


def forward_kinematics(skel, rotations):
    """Global joint positions from per-joint local rotations.

    The accumulated rotation at joint i is Q_parent * q_i and the joint
    sits at parent_position + Q_i applied to its rest offset, i.e. each
    joint's own rotation swings the bone that carries it.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape != (skel.n_joints, 4):
        raise ValidationError(
            f"frame has shape {rotations.shape}, skeleton wants ({skel.n_joints}, 4)"
        )
    n = skel.n_joints
    acc = np.empty((n, 4))
    pos = np.empty((n, 3))
    for i in skel.topo_order:
        p = int(skel.parents[i])
        if p < 0:
            acc[i] = rotations[i]
            pos[i] = quat.rotate(acc[i], skel.rest_offsets[i])
        else:
            acc[i] = quat.compose(acc[p], rotations[i])
            pos[i] = pos[p] + quat.rotate(acc[i], skel.rest_offsets[i])
    return pos
