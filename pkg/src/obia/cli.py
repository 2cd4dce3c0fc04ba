"""Command-line interface: one subcommand per pipeline step plus ``run-paper``."""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from obia import assessment as asm
from obia.classifiers import CartTree, Mlp, SampleSet, cart_train, mlp_predict, mlp_train
from obia.classifiers.mlp import write_history_csv
from obia.features import NUMERIC_FEATURES, compute_features, read_features_csv, write_features_csv
from obia.pipeline import PipelineConfig, object_majority_labels, replay, run, stratified_objects
from obia.raster import (DEFAULT_LEGEND, read_labels, read_raster, render_class_map, write_labels,
                         write_raster)
from obia.ruleset import (builtin_qinhuai_ruleset, classify as apply_rules, load_ruleset,
                          rasterize_labels, write_trace_csv)
from obia.scene import SceneSpec, generate_scene
from obia.segmentation import (SegParams, esp_scan, read_segment_ids, segment, segmentation_from_ids,
                               write_merge_log, write_segments)


def _friendly(fn):
    """Turn library errors into a one-line diagnostic and exit status 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, KeyError, OSError) as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
            raise click.ClickException(f"{click.get_current_context().info_name}: {msg}") from exc

    return wrapper


def _labels_from_segments(seg_ids, names_by_segment):
    return rasterize_labels(seg_ids, names_by_segment, DEFAULT_LEGEND)


@click.group()
def main():
    """Object-based land-cover classification toolkit."""


@main.command("gen-scene")
@click.option("--out", required=True, help="Output stem for the spectral raster.")
@click.option("--truth", "truth_out", required=True, help="Output stem for the ground-truth labels.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--width", default=512, show_default=True, type=int)
@click.option("--height", default=512, show_default=True, type=int)
@click.option("--noise", default=SceneSpec.noise, show_default=True, type=float)
@click.option("--jitter", default=SceneSpec.object_jitter, show_default=True, type=float)
@_friendly
def gen_scene(out, truth_out, seed, width, height, noise, jitter):
    """Generate a synthetic 4-band scene and its ground truth."""
    spec = SceneSpec(width=width, height=height, noise=noise, object_jitter=jitter, seed=seed)
    raster, truth = generate_scene(spec)
    write_raster(raster, out)
    write_labels(truth, truth_out, raster.pixel_size_m)
    click.echo(f"wrote {width}x{height} scene (seed {seed})")


@main.command("segment")
@click.argument("raster_path")
@click.option("--out", required=True, help="Output stem for the segment id plane.")
@click.option("--scale", default=100.0, show_default=True, type=float)
@click.option("--shape", default=0.2, show_default=True, type=float)
@click.option("--compactness", default=0.6, show_default=True, type=float)
@click.option("--band-weights", default=None, help="Comma-separated weight per band.")
@click.option("--merge-log", default=None, help="Optional CSV of merges (a, b, cost).")
@_friendly
def segment_cmd(raster_path, out, scale, shape, compactness, band_weights, merge_log):
    """Multiresolution segmentation."""
    weights = None if band_weights is None else tuple(float(x) for x in band_weights.split(","))
    params = SegParams(scale, shape, compactness, weights)
    raster = read_raster(raster_path)
    seg = segment(raster, params)
    write_segments(seg, out, raster.pixel_size_m)
    if merge_log:
        write_merge_log(seg, merge_log)
    click.echo(f"{seg.n_segments} segments")


@main.command("esp")
@click.argument("raster_path")
@click.option("--scales", required=True, help="Ascending comma-separated scale list, e.g. 20,40,60.")
@click.option("--shape", default=0.2, show_default=True, type=float)
@click.option("--compactness", default=0.6, show_default=True, type=float)
@click.option("--out", default=None, help="Optional CSV output.")
@_friendly
def esp(raster_path, scales, shape, compactness, out):
    """Local-variance scan over segmentation scales."""
    values = [float(s) for s in scales.split(",")]
    entries = esp_scan(read_raster(raster_path), values, SegParams(values[0], shape, compactness))
    lines = ["scale,mean_local_variance,rate_of_change,n_segments"]
    lines += [f"{e.scale!r},{e.mean_local_variance!r},{e.rate_of_change!r},{e.n_segments}" for e in entries]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    click.echo(text, nl=False)


@main.command("features")
@click.argument("raster_path")
@click.argument("segments_path")
@click.option("--out", required=True, help="Output CSV.")
@_friendly
def features(raster_path, segments_path, out):
    """Per-object spectral and shape features."""
    raster = read_raster(raster_path)
    seg = segmentation_from_ids(raster, read_segment_ids(segments_path))
    records = compute_features(raster, seg)
    write_features_csv(records, out)
    click.echo(f"{len(records)} objects")


@main.command("classify")
@click.option("--features", "features_path", required=True, help="Object feature CSV.")
@click.option("--segments", "segments_path", required=True, help="Segment id plane.")
@click.option("--rules", default="builtin", show_default=True, help="'builtin' or a rule-set file.")
@click.option("--out", required=True, help="Output stem for the class map.")
@click.option("--trace", default=None, help="Optional per-object trace CSV.")
@_friendly
def classify(features_path, segments_path, rules, out, trace):
    """Apply a staged rule set to object features."""
    ruleset = builtin_qinhuai_ruleset() if rules == "builtin" else load_ruleset(rules)
    results = apply_rules(read_features_csv(features_path), ruleset)
    labels = _labels_from_segments(read_segment_ids(segments_path), results)
    write_labels(labels, out)
    if trace:
        write_trace_csv(results, trace)
    click.echo(_count_line(labels))


def _count_line(labels):
    counts = labels.counts()
    return ", ".join(f"{labels.legend.get(k, 'Unclassified')}: {n}" for k, n in sorted(counts.items()))


@main.command("train-cart")
@click.option("--features", "features_path", required=True)
@click.option("--segments", "segments_path", required=True)
@click.option("--truth", "truth_path", required=True)
@click.option("--out", required=True, help="Output model file.")
@click.option("--per-class", default=25, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--max-depth", default=8, show_default=True, type=int)
@click.option("--min-leaf", default=1, show_default=True, type=int)
@_friendly
def train_cart(features_path, segments_path, truth_path, out, per_class, seed, max_depth, min_leaf):
    """Train a CART tree on objects labelled by majority ground truth."""
    records = read_features_csv(features_path)
    ids = read_segment_ids(segments_path)
    truth = read_labels(truth_path)
    majority = object_majority_labels(ids, truth)
    rows = stratified_objects(majority, per_class, seed)
    x = np.array([r.vector(NUMERIC_FEATURES) for r in records])
    samples = SampleSet(x[rows], [truth.legend[int(k)] for k in majority[rows]], NUMERIC_FEATURES)
    tree = cart_train(samples, max_depth=max_depth, min_leaf=min_leaf)
    Path(out).write_text(tree.to_text())
    click.echo(f"{len(samples)} samples, depth {tree.depth}, {tree.n_leaves} leaves")


@main.command("train-mlp")
@click.option("--raster", "raster_path", required=True)
@click.option("--truth", "truth_path", required=True)
@click.option("--out", required=True, help="Output model file.")
@click.option("--per-class", default=400, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--hidden", default=16, show_default=True, type=int)
@click.option("--lr", default=0.5, show_default=True, type=float)
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--batch", default=32, show_default=True, type=int)
@click.option("--history", default=None, help="Optional training-curve CSV.")
@_friendly
def train_mlp(raster_path, truth_path, out, per_class, seed, hidden, lr, epochs, batch, history):
    """Train the per-pixel perceptron on stratified pixel samples."""
    raster = read_raster(raster_path)
    truth = read_labels(truth_path)
    points = asm.stratified_sample(truth, per_class, seed)
    x = raster.spectral()[:, points[:, 0], points[:, 1]].T
    y = [truth.legend[int(k)] for k in truth.labels[points[:, 0], points[:, 1]]]
    model = mlp_train(SampleSet(x, y, ("Blue", "Green", "Red", "NIR")), hidden, lr, epochs, batch, seed)
    Path(out).write_text(model.to_text())
    if history:
        write_history_csv(model, history)
    final = f", final loss {model.history[-1][1]:.4f}" if model.history else ""
    click.echo(f"{len(x)} samples{final}")


@main.command("predict")
@click.option("--model", "model_path", required=True)
@click.option("--out", required=True, help="Output stem for the class map.")
@click.option("--raster", "raster_path", default=None, help="Spectral raster (MLP models).")
@click.option("--features", "features_path", default=None, help="Object features (CART models).")
@click.option("--segments", "segments_path", default=None, help="Segment id plane (CART models).")
@_friendly
def predict(model_path, out, raster_path, features_path, segments_path):
    """Apply a trained CART or MLP model."""
    text = Path(model_path).read_text()
    kind = json.loads(text).get("format")
    if kind == "obia-mlp/1":
        if raster_path is None:
            raise click.UsageError("MLP models need --raster")
        labels = mlp_predict(Mlp.from_text(text), read_raster(raster_path), DEFAULT_LEGEND)
        pixel_size = read_raster(raster_path).pixel_size_m
    elif kind == "obia-cart/1":
        if features_path is None or segments_path is None:
            raise click.UsageError("CART models need --features and --segments")
        tree = CartTree.from_text(text)
        records = read_features_csv(features_path)
        pred = tree.predict_many([r.vector(tree.schema) for r in records])
        labels = _labels_from_segments(read_segment_ids(segments_path),
                                       {r.segment_id: str(c) for r, c in zip(records, pred)})
        pixel_size = 1.0
    else:
        raise click.ClickException(f"predict: unknown model format {kind!r}")
    write_labels(labels, out, pixel_size)
    click.echo(_count_line(labels))


@main.command("assess")
@click.option("--truth", "truth_path", required=True)
@click.option("--pred", "pred_path", required=True)
@click.option("--per-class", default=None, type=int, help="Stratified points per class (default: all pixels).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None, help="Optional metrics CSV.")
@click.option("--confusion-out", default=None, help="Optional confusion-matrix CSV.")
@_friendly
def assess(truth_path, pred_path, per_class, seed, out, confusion_out):
    """Confusion matrix, overall accuracy and kappa."""
    truth = read_labels(truth_path)
    pred = read_labels(pred_path)
    mask = None if per_class is None else asm.stratified_sample(truth, per_class, seed)
    cm = asm.confusion(truth, pred, mask)
    m = asm.metrics(cm)
    click.echo(asm.format_accuracy_table({Path(pred_path).stem: m}), nl=False)
    click.echo(f"overall={m.overall!r} kappa={m.kappa!r} n={m.n}")
    if out:
        asm.write_metrics_csv({Path(pred_path).stem: m}, out)
    if confusion_out:
        asm.write_confusion_csv(cm, confusion_out)


@main.command("stats")
@click.argument("labels_path")
@click.option("--pixel-size", default=None, type=float, help="Metres per pixel (default: from header).")
@click.option("--out", default=None, help="Optional CSV output.")
@_friendly
def stats(labels_path, pixel_size, out):
    """Per-class perimeter, area and area share."""
    labels = read_labels(labels_path)
    if pixel_size is None:
        pixel_size = read_raster(labels_path).pixel_size_m
    rows = asm.class_stats(labels, pixel_size)
    click.echo(f"{'class':<12}{'perimeter_km':>14}{'area_ha':>10}{'ratio_%':>9}")
    for s in rows:
        click.echo(f"{s.name:<12}{s.perimeter_km:>14.4f}{s.area_ha:>10.4f}{s.area_ratio_percent:>9.2f}")
    if out:
        asm.write_class_stats_csv({Path(labels_path).stem: rows}, out)


@main.command("render")
@click.argument("labels_path")
@click.option("--out", required=True, help="Output PNG.")
@_friendly
def render(labels_path, out):
    """Render a class map as an RGB PNG."""
    Path(out).write_bytes(render_class_map(read_labels(labels_path)))


@main.command("run-paper")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--outdir", required=True, help="Directory for the report bundle.")
@click.option("--from-manifest", "manifest", default=None, help="Replay a previous run's manifest.")
@_friendly
def run_paper(seed, outdir, manifest):
    """Full workflow on the standard synthetic scene, with baselines."""
    result = replay(manifest, outdir) if manifest else run(PipelineConfig.standard(seed), outdir)
    for name, m in result.reports.items():
        click.echo(f"{name:<13} overall={m.overall:.4f} kappa={m.kappa:.4f} "
                   f"isolated={result.isolated[name]}")
    click.echo(f"wrote {len(result.files)} files to {outdir}")


if __name__ == "__main__":
    sys.exit(main())
