"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 validation error, 3 parse error, 4 training
divergence.  Every subcommand grows a ``--json`` flag for machine
consumption; human-readable tables otherwise.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import __version__, pipeline, smoothing, synth
from .embedding import (EmbedModel, TruncationPolicy, embed_frame_pair,
                        truncated_distance)
from .errors import SignscoreError
from .motion import read_sequence, write_sequence
from .optim import TrainConfig
from .scorehead import ScoreHead
from .skeleton import load_skeleton
from .training import train_embedding, train_scorehead


def _emit(doc, as_json):
    if as_json:
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        for key, value in doc.items():
            click.echo(f"{key}: {value}")


@click.group()
@click.version_option(__version__, prog_name="signscore")
def cli():
    """Sign-motion scoring: synthesize, smooth, embed, align, score,
    train, and evaluate."""


@cli.command("synth")
@click.option("--n", "n_samples", type=int, required=True, help="Total scored samples.")
@click.option("--per-ref", type=int, default=4, show_default=True,
              help="Learners generated per reference gesture.")
@click.option("--out", "outdir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fps", type=float, default=30.0, show_default=True)
@click.option("--n-train", type=int, default=None,
              help="Train-split size (default: 80% of samples).")
@click.option("--json", "as_json", is_flag=True)
def synth_cmd(n_samples, per_ref, outdir, seed, fps, n_train, as_json):
    """Generate a synthetic dataset with oracle scores."""
    n_refs = max(1, -(-n_samples // per_ref))
    ds = synth.build_dataset(n_refs, per_reference=per_ref, seed=seed, fps=fps,
                             total=n_samples)
    pipeline.write_dataset(ds, outdir, n_train=n_train, seed=seed)
    _emit({"samples": len(ds.samples), "references": len(ds.references),
           "out": outdir}, as_json)


@cli.command("smooth")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Smoother checkpoint; omitted = parameter-free quadratic fallback.")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
@click.option("--emit-cost", is_flag=True, help="Print the smoothing cost C_s.")
@click.option("--json", "as_json", is_flag=True)
def smooth_cmd(model_path, input_path, output_path, emit_cost, as_json):
    """De-jitter a sequence with a trained or fallback smoother."""
    model = (smoothing.load_smoother(model_path) if model_path
             else smoothing.SmootherModel.savgol_fallback())
    seq = read_sequence(input_path)
    result = smoothing.smooth_sequence(seq, model)
    write_sequence(result.smoothed, output_path)
    doc = {"output": output_path, "smoother_kind": result.smoother_kind}
    if emit_cost or as_json:
        doc["cost"] = result.cost
    _emit(doc, as_json)


@cli.command("embed")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--seq", "seq_path", type=click.Path(exists=True), required=True)
@click.option("--ref", "ref_path", type=click.Path(exists=True), required=True)
@click.option("--frame", type=int, required=True)
@click.option("--ref-frame", type=int, required=True)
@click.option("--threshold", type=float, default=1.0, show_default=True)
@click.option("--penalty", type=float, default=None,
              help="Per-skipped-joint penalty (default 2 * threshold).")
@click.option("--json", "as_json", is_flag=True)
def embed_cmd(model_path, seq_path, ref_path, frame, ref_frame, threshold, penalty,
              as_json):
    """Per-joint difference weights for one frame pair."""
    model = EmbedModel.load(model_path)
    seq = read_sequence(seq_path)
    ref = read_sequence(ref_path)
    weights = embed_frame_pair(seq.frame(frame), ref.frame(ref_frame), model)
    policy = TruncationPolicy(threshold, penalty)
    dist = truncated_distance(weights, policy)
    doc = {
        "w": [float(v) for v in weights.weights],
        "D": dist.distance,
        "S": dist.step,
    }
    _emit(doc, as_json)


@cli.command("align")
@click.option("--learner", "learner_path", type=click.Path(exists=True), required=True)
@click.option("--ref", "ref_path", type=click.Path(exists=True), required=True)
@click.option("--smooth-model", type=click.Path(exists=True), default=None)
@click.option("--local-cost", type=click.Choice(["gradient", "embedding"]),
              default="gradient", show_default=True)
@click.option("--embed-model", type=click.Path(exists=True), default=None)
@click.option("--emit-path", "path_file", type=click.Path(), default=None,
              help="Write one 't_learner t_reference cost' triple per line.")
@click.option("--json", "as_json", is_flag=True)
def align_cmd(learner_path, ref_path, smooth_model, local_cost, embed_model,
              path_file, as_json):
    """Derivative-DTW alignment of two sequences."""
    from . import alignment

    learner = read_sequence(learner_path)
    reference = read_sequence(ref_path)
    if smooth_model:
        model = smoothing.load_smoother(smooth_model)
        learner = smoothing.smooth_sequence(learner, model).smoothed
        reference = smoothing.smooth_sequence(reference, model).smoothed
    embed = EmbedModel.load(embed_model) if embed_model else None
    c_a, result = alignment.alignment_cost(learner, reference, mode=local_cost,
                                           embed_model=embed)
    if path_file:
        ga = alignment.motion_gradient(learner).grads
        gb = alignment.motion_gradient(reference).grads
        with open(path_file, "w", encoding="utf-8") as fh:
            for i, j in result.path:
                cell = float(np.sum((ga[i] - gb[j]) ** 2))
                fh.write(f"{i} {j} {cell!r}\n")
    doc = {"c_a": c_a, "path_length": len(result.path)}
    if path_file:
        doc["path_file"] = path_file
    _emit(doc, as_json)


@cli.command("score")
@click.option("--learner", "learner_path", type=click.Path(exists=True), required=True)
@click.option("--ref-id", required=True)
@click.option("--library", "library_dir", type=click.Path(exists=True), required=True)
@click.option("--smooth-model", type=click.Path(exists=True), default=None)
@click.option("--embed-model", type=click.Path(exists=True), default=None)
@click.option("--head", "head_path", type=click.Path(exists=True), required=True)
@click.option("--skeleton", default="skeleton_hands32", show_default=True)
@click.option("--local-cost", type=click.Choice(["gradient", "embedding"]),
              default="gradient", show_default=True)
@click.option("--emit-path", "path_file", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
def score_cmd(learner_path, ref_id, library_dir, smooth_model, embed_model,
              head_path, skeleton, local_cost, path_file, as_json):
    """Score a learner sequence against a library reference."""
    head = ScoreHead.load(head_path)
    cfg = pipeline.PipelineConfig(
        skeleton=skeleton, smoother_path=smooth_model, embed_path=embed_model,
        head_path=None, library_dir=library_dir, local_cost=local_cost,
        use_embed_feature=head.n_features == 3)
    pipe = pipeline.Pipeline.from_config(cfg)
    pipe.head = head
    learner = read_sequence(learner_path)
    score, diag = pipeline.run_pipeline(pipe, learner, ref_id)
    if path_file:
        with open(path_file, "w", encoding="utf-8") as fh:
            for i, j in diag["path"]:
                fh.write(f"{i} {j}\n")
    doc = {
        "smoothness": score.smoothness,
        "completeness": score.completeness,
        "recognizability": score.recognizability,
        "c_s": diag["c_s"],
        "c_a": diag["c_a"],
        "c_e": diag["c_e"],
        "d_per_frame": diag["d_per_frame"],
        "path": diag["path"],
        "s_counts": diag["s_counts"],
    }
    if path_file:
        doc["path_file"] = path_file
    if as_json:
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        for name in ("smoothness", "completeness", "recognizability"):
            click.echo(f"{name}: {doc[name]:.2f}")
        click.echo(f"c_s: {doc['c_s']!r}")
        click.echo(f"c_a: {doc['c_a']!r}")


def _load_train_config(config_path, seed):
    cfg_doc = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            cfg_doc = json.load(fh)
    if seed is not None:
        cfg_doc["seed"] = seed
    return cfg_doc


@cli.group("train")
def train_group():
    """Fit a model component; prints one 'epoch loss...' line per epoch."""


@train_group.command("smoother")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--window", type=int, default=8, show_default=True)
@click.option("--max-pairs", type=int, default=24, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def train_smoother_cmd(data_dir, config_path, seed, window, max_pairs, out_path,
                       as_json):
    """Fit the de-jittering smoother on (noisy, clean) pairs."""
    cfg_doc = _load_train_config(config_path, seed)
    cfg_doc.setdefault("learning_rate", 0.02)
    cfg_doc.setdefault("epochs", 120)
    cfg_doc.setdefault("batch_size", 64)
    config = TrainConfig.from_json(cfg_doc)
    ds = pipeline.load_dataset(data_dir)
    by_id = dict(ds.samples)
    pairs = []
    for sid in sorted(ds.pair_targets):
        pairs.append((by_id[sid].motion, ds.pair_targets[sid]))
        if len(pairs) >= max_pairs:
            break
    model, trace = smoothing.fit_smoother(pairs, config, window=window)
    smoothing.save_smoother(model, out_path)
    for epoch, loss in enumerate(trace):
        click.echo(f"epoch {epoch} loss {loss!r}")
    _emit({"out": out_path, "final_loss": model.final_loss, "pairs": len(pairs)},
          as_json)


@train_group.command("embed")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--smooth-model", type=click.Path(exists=True), default=None)
@click.option("--max-pairs", type=int, default=24, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def train_embed_cmd(data_dir, config_path, seed, smooth_model, max_pairs, out_path,
                    as_json):
    """Train the joint-difference embedding model."""
    cfg_doc = _load_train_config(config_path, seed)
    cfg_doc.setdefault("learning_rate", 0.003)
    cfg_doc.setdefault("epochs", 40)
    cfg_doc.setdefault("batch_size", 6)
    config = TrainConfig.from_json(cfg_doc)
    ds = pipeline.load_dataset(data_dir)
    skel = load_skeleton(f"{data_dir}/skeleton.json")
    train_ids = set(ds.split["train"])
    records = [s for sid, s in ds.samples if sid in train_ids][:max_pairs]
    pairs = synth.pairset_from_samples(records, ds.references, seed=config.seed)
    smoother = smoothing.load_smoother(smooth_model) if smooth_model else None
    model, trace = train_embedding(pairs, config, skel, smoother=smoother)
    model.save(out_path)
    for epoch, row in enumerate(trace):
        click.echo(f"epoch {epoch} l_s {row['l_s']!r} l_t {row['l_t']!r} "
                   f"l_d {row['l_d']!r}")
    _emit({"out": out_path, "final_l_d": trace[-1]["l_d"]}, as_json)


@train_group.command("head")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--smooth-model", type=click.Path(exists=True), default=None)
@click.option("--features", "n_features", type=click.Choice(["2", "3"]), default="2",
              show_default=True, help="2 = (c_s, c_a); 3 appends c_e.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def train_head_cmd(data_dir, config_path, seed, smooth_model, n_features, out_path,
                   as_json):
    """Train the score regressor on train-split features."""
    cfg_doc = _load_train_config(config_path, seed)
    cfg_doc.setdefault("learning_rate", 0.02)
    cfg_doc.setdefault("epochs", 300)
    cfg_doc.setdefault("batch_size", 64)
    config = TrainConfig.from_json(cfg_doc)
    ds = pipeline.load_dataset(data_dir)
    smoother = (smoothing.load_smoother(smooth_model) if smooth_model
                else smoothing.SmootherModel.savgol_fallback())
    train_ids = set(ds.split["train"])
    records = [(sid, s) for sid, s in ds.samples if sid in train_ids]
    feats = pipeline.features_for_samples(records, ds.references, smoother)
    by_id = dict(ds.samples)
    samples = [(fv, by_id[sid].expert_scores) for sid, fv in feats]
    head, trace = train_scorehead(samples, config, n_features=int(n_features))
    head.save(out_path)
    for epoch, row in enumerate(trace):
        click.echo(f"epoch {epoch} total {row['total']!r}")
    _emit({"out": out_path, "final_total": trace[-1]["total"]}, as_json)


@cli.command("eval")
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--smooth-model", type=click.Path(exists=True), default=None)
@click.option("--embed-model", type=click.Path(exists=True), default=None)
@click.option("--head", "head_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test",
              show_default=True)
@click.option("--table-out", type=click.Path(), default=None,
              help="Write the per-sample score table (TSV).")
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(data_dir, smooth_model, embed_model, head_path, split, table_out,
             as_json):
    """Spearman and tier accuracy of pipeline scores on a dataset split."""
    ds = pipeline.load_dataset(data_dir)
    head = ScoreHead.load(head_path)
    smoother = (smoothing.load_smoother(smooth_model) if smooth_model
                else smoothing.SmootherModel.savgol_fallback())
    embed = EmbedModel.load(embed_model) if embed_model else None
    skel = load_skeleton(f"{data_dir}/skeleton.json")
    pipe = pipeline.Pipeline(skel, smoother, head=head, embed=embed,
                             library=ds.references,
                             use_embed_feature=head.n_features == 3)
    metrics, rows = pipeline.evaluate(pipe, ds, split=split)
    if table_out:
        pipeline.write_table(rows, table_out)
        metrics["table"] = table_out
    if as_json:
        click.echo(json.dumps(metrics, sort_keys=True))
    else:
        click.echo(f"samples: {metrics['n_samples']}")
        click.echo(f"spearman: {metrics['spearman']!r}")
        click.echo(f"tier_accuracy: {metrics['tier_accuracy']!r}")
        for dim, vals in metrics["per_dimension"].items():
            click.echo(f"  {dim}: spearman {vals['spearman']:.4f} "
                       f"tier {vals['tier_accuracy']:.4f}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except SignscoreError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.Abort:
        sys.exit(130)
    return 0


if __name__ == "__main__":
    main()
