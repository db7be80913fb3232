"""Pose-sequence data model, text serialization, and scored-sample sidecars.

On disk a sequence is line-delimited text: a versioned header followed by
one ``frame`` record per frame holding the timestamp and N axis-angle
triples (the storage form matches common mesh-recovery exporters; unit
quaternions are derived in memory).  Floats are written with ``repr``,
which carries full double precision, so serialize/parse round-trips are
exact up to the axis-angle/quaternion trig conversion.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import ParseError, ValidationError
from .skeleton import topological_order  # re-exported: traversal lives with Skeleton

__all__ = [
    "SEQUENCE_FORMAT_VERSION",
    "PoseFrame",
    "MotionSequence",
    "ScoredSample",
    "ReferenceLibrary",
    "parse_sequence",
    "serialize_sequence",
    "read_sequence",
    "write_sequence",
    "read_scored_sample",
    "write_scored_sample",
    "topological_order",
]

SEQUENCE_FORMAT_VERSION = 1
SIDECAR_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PoseFrame:
    rotations: np.ndarray  # (N, 4) canonical unit quaternions, skeleton id order
    timestamp: float


class MotionSequence:
    """T frames of per-joint rotations; immutable after construction."""

    def __init__(self, skeleton_id, fps, rotations, timestamps):
        rotations = np.asarray(rotations, dtype=np.float64)
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if rotations.ndim != 3 or rotations.shape[2] != 4:
            raise ValidationError("rotations must have shape (T, N, 4)")
        if rotations.shape[0] < 2:
            raise ValidationError("sequence length: need T >= 2 frames")
        if timestamps.shape != (rotations.shape[0],):
            raise ValidationError("timestamps must have one entry per frame")
        if not np.all(np.isfinite(timestamps)):
            raise ValidationError("timestamps must be finite")
        if np.any(np.diff(timestamps) <= 0.0):
            raise ValidationError("timestamps strictly increasing violated")
        if not (np.isfinite(fps) and fps > 0):
            raise ValidationError("fps must be positive")
        self.skeleton_id = str(skeleton_id)
        self.fps = float(fps)
        self.rotations = quat.canonicalize(rotations)
        self.rotations.flags.writeable = False
        self.timestamps = timestamps
        self.timestamps.flags.writeable = False

    @property
    def n_frames(self):
        return self.rotations.shape[0]

    @property
    def n_joints(self):
        return self.rotations.shape[1]

    def __len__(self):
        return self.n_frames

    def frame(self, t):
        return PoseFrame(self.rotations[t], float(self.timestamps[t]))

    @property
    def frames(self):
        return [self.frame(t) for t in range(self.n_frames)]

    def with_rotations(self, rotations):
        """Same metadata, new rotation payload."""
        return MotionSequence(self.skeleton_id, self.fps, rotations, self.timestamps)

    def validate_against(self, skel):
        if self.skeleton_id != skel.skeleton_id:
            raise ValidationError(
                f"sequence targets skeleton {self.skeleton_id!r}, got {skel.skeleton_id!r}"
            )
        if self.n_joints != skel.n_joints:
            raise ValidationError(
                f"sequence has {self.n_joints} joints, skeleton {skel.n_joints}"
            )

    def allclose(self, other, atol=1e-12):
        return (
            self.skeleton_id == other.skeleton_id
            and self.n_frames == other.n_frames
            and self.n_joints == other.n_joints
            and np.allclose(self.timestamps, other.timestamps, atol=atol, rtol=0.0)
            and np.allclose(self.rotations, other.rotations, atol=atol, rtol=0.0)
        )


class ScoredSample:
    """A learner sequence with expert scores and checkpoint annotations."""

    def __init__(self, motion, reference_id, expert_scores, checkpoints=()):
        expert_scores = np.asarray(expert_scores, dtype=np.float64)
        if expert_scores.shape != (3,):
            raise ValidationError("expert_scores must be a 3-vector")
        if not np.all(np.isfinite(expert_scores)):
            raise ValidationError("expert_scores must be finite")
        if np.any(expert_scores < 0.0) or np.any(expert_scores > 100.0):
            raise ValidationError("expert_scores must lie in [0, 100]")
        checkpoints = [(int(t), float(s)) for t, s in checkpoints]
        last = -1
        for t, s in checkpoints:
            if not 0 <= t < motion.n_frames:
                raise ValidationError(f"checkpoint index {t} outside [0, {motion.n_frames})")
            if t <= last:
                raise ValidationError("checkpoint indices must be strictly increasing")
            if not np.isfinite(s):
                raise ValidationError("checkpoint baseline scores must be finite")
            last = t
        self.motion = motion
        self.reference_id = str(reference_id)
        self.expert_scores = expert_scores
        self.checkpoints = checkpoints

    @classmethod
    def from_scalar_score(cls, motion, reference_id, score, checkpoints=()):
        """Ingest a single averaged expert score by replicating it across
        the three output dimensions."""
        return cls(motion, reference_id, [score, score, score], checkpoints)


class ReferenceLibrary:
    """Read-only map of reference id -> MotionSequence."""

    def __init__(self, entries):
        self._entries = dict(entries)
        for rid, seq in self._entries.items():
            if not isinstance(seq, MotionSequence):
                raise ValidationError(f"library entry {rid!r} is not a MotionSequence")

    @classmethod
    def from_dir(cls, path):
        entries = {}
        for name in sorted(os.listdir(path)):
            if not name.endswith(".seq"):
                continue
            rid = name[: -len(".seq")]
            entries[rid] = read_sequence(os.path.join(path, name))
        if not entries:
            raise ValidationError(f"no .seq files found in {path!r}")
        return cls(entries)

    @property
    def ids(self):
        return sorted(self._entries)

    def __contains__(self, rid):
        return rid in self._entries

    def get(self, rid):
        try:
            return self._entries[rid]
        except KeyError:
            raise ValidationError(f"unknown reference id {rid!r}") from None


def _as_text(source):
    if isinstance(source, bytes):
        return source.decode("utf-8", errors="strict")
    if isinstance(source, str):
        return source
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    raise TypeError(f"cannot read sequence from {type(source).__name__}")


def _parse_float(tok, ln):
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"invalid number {tok!r}", line=ln) from None
    return val


def parse_sequence(source):
    """Parse the line-delimited sequence format into a MotionSequence.

    Raises ParseError (with line number) for unreadable records and
    ValidationError when records read fine but violate an invariant.
    """
    try:
        text = _as_text(source)
    except UnicodeDecodeError as exc:
        raise ParseError(f"sequence is not valid UTF-8: {exc}") from exc

    header = {}
    header_order = ["format_version", "skeleton", "fps", "joints"]
    frames = []
    timestamps = []
    n_joints = None

    for ln, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        key = tokens[0]
        if len(header) < len(header_order):
            expected = header_order[len(header)]
            if key != expected:
                raise ParseError(f"expected header field {expected!r}, got {key!r}", line=ln)
            if len(tokens) != 2:
                raise ParseError(f"header field {key!r} takes exactly one value", line=ln)
            if key == "format_version":
                if tokens[1] != str(SEQUENCE_FORMAT_VERSION):
                    raise ParseError(f"unsupported format_version {tokens[1]!r}", line=ln)
                header[key] = tokens[1]
            elif key == "skeleton":
                header[key] = tokens[1]
            elif key == "fps":
                header[key] = _parse_float(tokens[1], ln)
            else:  # joints
                try:
                    n_joints = int(tokens[1])
                except ValueError:
                    raise ParseError(f"invalid joint count {tokens[1]!r}", line=ln) from None
                if n_joints <= 0:
                    raise ValidationError(f"joint count must be positive, got {n_joints}")
                header[key] = n_joints
            continue
        if key != "frame":
            raise ParseError(f"expected 'frame' record, got {key!r}", line=ln)
        idx = len(frames)
        got_fields = len(tokens) - 2
        if got_fields != 3 * n_joints:
            raise ValidationError(
                f"frame {idx}: expected {n_joints} rotations "
                f"({3 * n_joints} fields), got {got_fields}"
            )
        values = [_parse_float(tok, ln) for tok in tokens[1:]]
        timestamps.append(values[0])
        frames.append(values[1:])

    if len(header) < len(header_order):
        raise ParseError("incomplete header: missing "
                         + header_order[len(header)])
    if len(frames) < 2:
        raise ValidationError(f"sequence length: need T >= 2 frames, got {len(frames)}")

    axis_angles = np.array(frames, dtype=np.float64).reshape(len(frames), n_joints, 3)
    rotations = quat.from_axis_angle(axis_angles)
    return MotionSequence(header["skeleton"], header["fps"], rotations, timestamps)


def serialize_sequence(seq):
    """Canonical, deterministic text form; same value -> identical bytes."""
    out = [
        f"format_version {SEQUENCE_FORMAT_VERSION}",
        f"skeleton {seq.skeleton_id}",
        f"fps {seq.fps!r}",
        f"joints {seq.n_joints}",
    ]
    axis_angles = quat.to_axis_angle(seq.rotations)
    for t in range(seq.n_frames):
        fields = [repr(float(seq.timestamps[t]))]
        fields.extend(repr(float(v)) for v in axis_angles[t].ravel())
        out.append("frame " + " ".join(fields))
    return "\n".join(out) + "\n"


def read_sequence(path):
    try:
        with open(path, "rb") as fh:
            return parse_sequence(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read sequence {path!r}: {exc}") from exc


def write_sequence(seq, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_sequence(seq))


def write_scored_sample(sample, path):
    doc = {
        "format_version": SIDECAR_FORMAT_VERSION,
        "reference_id": sample.reference_id,
        "expert_scores": [float(v) for v in sample.expert_scores],
        "checkpoints": [
            {"frame_index": t, "baseline_score": s} for t, s in sample.checkpoints
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_scored_sample(motion, path):
    """Attach a sidecar annotation file to an already-loaded sequence."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read sidecar {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"sidecar is not valid JSON: {exc}") from exc
    try:
        version = doc["format_version"]
        if version != SIDECAR_FORMAT_VERSION:
            raise ParseError(f"unsupported sidecar format_version {version!r}")
        reference_id = doc["reference_id"]
        scores = doc["expert_scores"]
        checkpoints = [(c["frame_index"], c["baseline_score"]) for c in doc["checkpoints"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed sidecar document: {exc}") from exc
    return ScoredSample(motion, reference_id, scores, checkpoints)
