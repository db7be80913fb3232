"""End-to-end wiring: smooth, embed, align, score, plus dataset-level
evaluation and the on-disk dataset layout.

Dataset directory layout (written by ``signscore synth``):

    references/<ref_id>.seq          reference sequences
    samples/<sample_id>.seq          learner sequences
    samples/<sample_id>.score.json   sidecar: reference id, scores, checkpoints
    pairs/<sample_id>.clean.seq      de-jittering targets (train split only)
    split.json                       {"train": [...], "test": [...]}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import alignment, smoothing
from .embedding import (EmbedModel, TruncationPolicy, pair_log_distance,
                        truncated_distance_batch)
from .errors import ParseError, ValidationError
from .motion import (ReferenceLibrary, read_scored_sample, read_sequence,
                     write_scored_sample, write_sequence)
from .scorehead import FeatureVector, Score, ScoreHead, spearman, tier_accuracy
from .skeleton import load_skeleton

__all__ = [
    "PipelineConfig",
    "Pipeline",
    "compute_features",
    "run_pipeline",
    "evaluate",
    "load_dataset",
    "write_dataset",
    "DiskDataset",
]

SPLIT_FORMAT_VERSION = 1


@dataclass
class PipelineConfig:
    skeleton: str = "skeleton_hands32"
    smoother_path: str | None = None
    embed_path: str | None = None
    head_path: str | None = None
    library_dir: str | None = None
    threshold: float = 1.0
    penalty: float | None = None
    local_cost: str = "gradient"  # or "embedding"
    use_embed_feature: bool = False  # append c_e to (c_s, c_a)


class Pipeline:
    """Loaded models plus configuration; all inference goes through it."""

    def __init__(self, skeleton, smoother, head=None, embed=None, library=None,
                 policy=None, local_cost="gradient", use_embed_feature=False):
        self.skeleton = skeleton
        self.smoother = smoother
        self.head = head
        self.embed = embed
        self.library = library
        self.policy = policy or TruncationPolicy()
        if local_cost not in ("gradient", "embedding"):
            raise ValidationError(f"unknown local cost {local_cost!r}")
        if local_cost == "embedding" and embed is None:
            raise ValidationError("embedding local cost requires an embed checkpoint")
        self.local_cost = local_cost
        self.use_embed_feature = use_embed_feature

    @classmethod
    def from_config(cls, cfg):
        skeleton = load_skeleton(cfg.skeleton)
        if cfg.smoother_path:
            smoother = smoothing.load_smoother(cfg.smoother_path)
        else:
            smoother = smoothing.SmootherModel.savgol_fallback()
        head = ScoreHead.load(cfg.head_path) if cfg.head_path else None
        embed = EmbedModel.load(cfg.embed_path) if cfg.embed_path else None
        library = ReferenceLibrary.from_dir(cfg.library_dir) if cfg.library_dir else None
        policy = TruncationPolicy(cfg.threshold, cfg.penalty)
        return cls(skeleton, smoother, head=head, embed=embed, library=library,
                   policy=policy, local_cost=cfg.local_cost,
                   use_embed_feature=cfg.use_embed_feature)

    @property
    def n_features(self):
        return 3 if self.use_embed_feature else 2


def compute_features(learner, reference, smoother, local_cost="gradient",
                     embed=None, policy=None, diagnostics=False):
    """Sequence-level features (c_s, c_a, c_e) for one learner/reference pair.

    Both sequences are smoothed; the smoothing cost c_s is the learner's
    own deviation, alignment runs on the smoothed pair, and c_e is the
    mean over warped frame pairs of the per-frame sum of raw joint
    log-distance magnitudes.
    """
    sm_l = smoothing.smooth_sequence(learner, smoother)
    sm_r = smoothing.smooth_sequence(reference, smoother)
    c_a, result = alignment.alignment_cost(sm_l.smoothed, sm_r.smoothed,
                                           mode=local_cost, embed_model=embed)
    path = np.asarray(result.path, dtype=np.int64)
    d = pair_log_distance(learner.rotations[path[:, 0]],
                          reference.rotations[path[:, 1]])  # (K, N)
    c_e = float(d.sum(axis=1).mean())
    features = FeatureVector(c_s=sm_l.cost, c_a=c_a, c_e=c_e)
    if not diagnostics:
        return features, None
    diag = {
        "c_s": sm_l.cost,
        "c_a": c_a,
        "c_e": c_e,
        "path": [[int(a), int(b)] for a, b in result.path],
        "smoother_kind": sm_l.smoother_kind,
    }
    if embed is not None:
        order = embed.topo_order
        w = np.concatenate([
            embed.forward_pairs(
                learner.rotations[path[s:s + 512, 0]][:, order],
                reference.rotations[path[s:s + 512, 1]][:, order]).data
            for s in range(0, len(path), 512)
        ])
        pol = policy or TruncationPolicy()
        dists, steps = truncated_distance_batch(w, pol)
        diag["d_per_frame"] = [float(v) for v in dists]
        counts = {}
        for s in steps:
            counts[int(s)] = counts.get(int(s), 0) + 1
        diag["s_counts"] = {str(k): v for k, v in sorted(counts.items())}
    else:
        diag["d_per_frame"] = None
        diag["s_counts"] = None
    return features, diag


def run_pipeline(pipe, learner, reference_id):
    """Full scoring pass: smooth -> embed -> align -> score, with the
    diagnostics bundle."""
    if pipe.library is None:
        raise ValidationError("pipeline has no reference library")
    if pipe.head is None:
        raise ValidationError("pipeline has no trained score head")
    reference = pipe.library.get(reference_id)
    learner.validate_against(pipe.skeleton)
    reference.validate_against(pipe.skeleton)
    features, diag = compute_features(
        learner, reference, pipe.smoother, local_cost=pipe.local_cost,
        embed=pipe.embed, policy=pipe.policy, diagnostics=True)
    from .scorehead import score_forward

    score = score_forward(features, pipe.head)
    return score, diag


@dataclass
class DiskDataset:
    root: str
    references: ReferenceLibrary
    samples: list  # [(sample_id, ScoredSample)]
    split: dict
    pair_targets: dict = field(default_factory=dict)  # sample_id -> clean MotionSequence

    def subset(self, split):
        if split == "all":
            wanted = {sid for sid, _ in self.samples}
        else:
            try:
                wanted = set(self.split[split])
            except KeyError:
                raise ValidationError(f"split {split!r} not present in dataset") from None
        return [(sid, s) for sid, s in self.samples if sid in wanted]


def write_dataset(ds, outdir, n_train=None, seed=0):
    """Serialize a SynthDataset into the on-disk layout."""
    from .synth import split_ids

    os.makedirs(os.path.join(outdir, "references"), exist_ok=True)
    os.makedirs(os.path.join(outdir, "samples"), exist_ok=True)
    os.makedirs(os.path.join(outdir, "pairs"), exist_ok=True)
    for rid in sorted(ds.references):
        write_sequence(ds.references[rid], os.path.join(outdir, "references", f"{rid}.seq"))
    ids = [rec.sample_id for rec in ds.samples]
    if n_train is None:
        n_train = max(1, int(round(0.8 * len(ids))))
    split = split_ids(ids, n_train, seed) if len(ids) > 1 else {"train": ids, "test": []}
    train_set = set(split["train"])
    for rec in ds.samples:
        base = os.path.join(outdir, "samples", rec.sample_id)
        write_sequence(rec.sample.perturbed, base + ".seq")
        write_scored_sample(rec.scored(), base + ".score.json")
        if rec.sample_id in train_set:
            write_sequence(rec.sample.dejitter_target,
                           os.path.join(outdir, "pairs", f"{rec.sample_id}.clean.seq"))
    ds.skeleton.save(os.path.join(outdir, "skeleton.json"))
    with open(os.path.join(outdir, "split.json"), "w", encoding="utf-8") as fh:
        json.dump({"format_version": SPLIT_FORMAT_VERSION, **split}, fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


def load_dataset(root):
    refs = ReferenceLibrary.from_dir(os.path.join(root, "references"))
    samples_dir = os.path.join(root, "samples")
    samples = []
    for name in sorted(os.listdir(samples_dir)):
        if not name.endswith(".seq"):
            continue
        sid = name[: -len(".seq")]
        seq = read_sequence(os.path.join(samples_dir, name))
        sidecar = os.path.join(samples_dir, f"{sid}.score.json")
        if not os.path.exists(sidecar):
            raise ValidationError(f"sample {sid} is missing its sidecar")
        samples.append((sid, read_scored_sample(seq, sidecar)))
    split_path = os.path.join(root, "split.json")
    try:
        with open(split_path, "r", encoding="utf-8") as fh:
            split_doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"dataset has no split.json: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"split.json is not valid JSON: {exc}") from exc
    if split_doc.get("format_version") != SPLIT_FORMAT_VERSION:
        raise ParseError("unsupported split.json format_version")
    split = {"train": list(split_doc["train"]), "test": list(split_doc["test"])}
    pair_targets = {}
    pairs_dir = os.path.join(root, "pairs")
    if os.path.isdir(pairs_dir):
        for name in sorted(os.listdir(pairs_dir)):
            if name.endswith(".clean.seq"):
                sid = name[: -len(".clean.seq")]
                pair_targets[sid] = read_sequence(os.path.join(pairs_dir, name))
    return DiskDataset(root=root, references=refs, samples=samples, split=split,
                       pair_targets=pair_targets)


def features_for_samples(records, references, smoother, local_cost="gradient",
                         embed=None):
    """FeatureVectors for (sample_id, ScoredSample) records, in input order."""
    out = []
    for sid, sample in records:
        ref = references.get(sample.reference_id)
        features, _ = compute_features(sample.motion, ref, smoother,
                                       local_cost=local_cost, embed=embed)
        out.append((sid, features))
    return out


def evaluate(pipe, dataset, split="test"):
    """Score every sample in the split and compare against expert scores.

    The headline metrics are Spearman rank correlation and 5-point tier
    accuracy of the mean over the three score dimensions (the scalar a
    single averaged expert score maps onto); per-dimension correlations
    ride along in the report.
    """
    records = dataset.subset(split)
    if len(records) < 2:
        raise ValidationError(f"evaluation needs >= 2 samples, split {split!r} has {len(records)}")
    if pipe.head is None:
        raise ValidationError("pipeline has no trained score head")
    rows = []
    truth = []
    pred = []
    for sid, sample in sorted(records, key=lambda r: r[0]):
        ref = pipe.library.get(sample.reference_id) if pipe.library else \
            dataset.references.get(sample.reference_id)
        features, _ = compute_features(sample.motion, ref, pipe.smoother,
                                       local_cost=pipe.local_cost, embed=pipe.embed)
        from .scorehead import score_forward

        score = score_forward(features, pipe.head)
        truth.append(sample.expert_scores)
        pred.append(score.as_array())
        rows.append({
            "sample_id": sid,
            "truth": [float(v) for v in sample.expert_scores],
            "predicted": [float(v) for v in score.as_array()],
            "c_s": features.c_s,
            "c_a": features.c_a,
            "c_e": features.c_e,
        })
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    dims = {}
    for k, name in enumerate(("smoothness", "completeness", "recognizability")):
        dims[name] = {
            "spearman": spearman(truth[:, k], pred[:, k]),
            "tier_accuracy": tier_accuracy(truth[:, k], pred[:, k]),
        }
    mean_truth = truth.mean(axis=1)
    mean_pred = pred.mean(axis=1)
    metrics = {
        "n_samples": len(rows),
        "spearman": spearman(mean_truth, mean_pred),
        "tier_accuracy": tier_accuracy(mean_truth, mean_pred),
        "per_dimension": dims,
    }
    return metrics, rows


def write_table(rows, path):
    """Per-sample score table for plotting: one TSV row per sample."""
    header = ["sample_id", "truth_smoothness", "truth_completeness",
              "truth_recognizability", "pred_smoothness", "pred_completeness",
              "pred_recognizability", "c_s", "c_a", "c_e"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            cells = [row["sample_id"]]
            cells += [repr(v) for v in row["truth"]]
            cells += [repr(v) for v in row["predicted"]]
            cells += [repr(row["c_s"]), repr(row["c_a"]), repr(row["c_e"])]
            fh.write("\t".join(cells) + "\n")
