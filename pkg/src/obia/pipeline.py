"""End-to-end reproduction run on a synthetic scene.

One seed drives everything: the scene, the assessment points, the training
samples and the MLP initialization. The run manifest lists every parameter,
so ``replay`` regenerates an identical bundle from the manifest alone.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from obia.assessment import (Metrics, class_stats, confusion, count_isolated_pixels, format_accuracy_table,
                             metrics, stratified_sample, write_class_stats_csv, write_confusion_csv,
                             write_metrics_csv)
from obia.classifiers import SampleSet, cart_train, mlp_train, mlp_predict
from obia.classifiers.mlp import write_history_csv
from obia.features import NUMERIC_FEATURES, compute_features, feature_table, write_features_csv
from obia.raster import CLASS_NAMES, DEFAULT_LEGEND, LabelRaster, render_class_map, write_labels, write_raster
from obia.ruleset import builtin_qinhuai_ruleset, classify, load_ruleset, rasterize_labels, write_trace_csv
from obia.scene import SceneSpec, generate_scene
from obia.segmentation import DEFAULT_PARAMS, SegParams, segment, write_segments

MANIFEST_HEADER = "# obia run manifest v1"
METHODS = ("object_rules", "cart", "mlp")
TABLE_NAMES = {"object_rules": "Object rules", "cart": "Object CART", "mlp": "Pixel MLP"}


def derived_seeds(seed: int) -> dict[str, int]:
    """Independent sub-seeds for the sampling and training steps."""
    state = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint32)
    return dict(zip(("assess_seed", "mlp_sample_seed", "mlp_seed", "cart_sample_seed"), map(int, state)))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scene: SceneSpec = field(default_factory=SceneSpec)
    seg: SegParams = DEFAULT_PARAMS
    rules: str = "builtin"
    assess_per_class: int = 500
    assess_seed: int = 0
    mlp_per_class: int = 400
    mlp_sample_seed: int = 0
    mlp_hidden: int = 16
    mlp_lr: float = 0.5
    mlp_epochs: int = 100
    mlp_batch: int = 32
    mlp_seed: int = 0
    cart_per_class: int = 25
    cart_sample_seed: int = 0
    cart_max_depth: int = 8
    cart_min_leaf: int = 1

    def __post_init__(self):
        for name in ("assess_per_class", "mlp_per_class", "cart_per_class"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def standard(cls, seed: int = 0) -> "PipelineConfig":
        """The standard noisy 512x512 scene with the default segmentation parameters."""
        return cls(seed=seed, scene=SceneSpec(seed=seed), **derived_seeds(seed))

    def to_manifest(self) -> str:
        items = {
            "seed": self.seed,
            "scene": self.scene.to_dict(),
            "segmentation": {"scale": self.seg.scale, "shape_weight": self.seg.shape_weight,
                             "compactness_weight": self.seg.compactness_weight,
                             "band_weights": None if self.seg.band_weights is None else list(self.seg.band_weights)},
        }
        for name in self.__dataclass_fields__:
            if name not in ("seed", "scene", "seg"):
                items[name] = getattr(self, name)
        lines = [MANIFEST_HEADER] + [f"{k} = {json.dumps(v)}" for k, v in items.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "PipelineConfig":
        lines = text.splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ValueError("not a run manifest (missing header line)")
        values = {}
        for lineno, raw in enumerate(lines[1:], start=2):
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            key, sep, value = raw.partition(" = ")
            if not sep:
                raise ValueError(f"manifest line {lineno}: expected 'key = value'")
            try:
                values[key.strip()] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise ValueError(f"manifest line {lineno}: {exc.msg}") from None
        seg = values.pop("segmentation")
        if seg.get("band_weights") is not None:
            seg["band_weights"] = tuple(seg["band_weights"])
        values["seg"] = SegParams(**seg)
        values["scene"] = SceneSpec.from_dict(values["scene"])
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**values)


@dataclass
class RunResult:
    config: PipelineConfig
    truth: LabelRaster
    maps: dict[str, LabelRaster]
    reports: dict[str, Metrics]
    full_scene: dict[str, Metrics]
    isolated: dict[str, int]
    files: list[str]


def object_majority_labels(seg_ids: np.ndarray, truth: LabelRaster) -> np.ndarray:
    """Majority ground-truth class id of every segment (lowest id on ties).

    ``seg_ids`` is a segment id plane with ids 1..K.
    """
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    if seg_ids.shape != truth.labels.shape:
        raise ValueError(f"segment plane {seg_ids.shape} does not match truth {truth.labels.shape}")
    k = int(seg_ids.max())
    n_cls = int(truth.labels.max()) + 1
    joint = np.bincount((seg_ids.ravel() - 1) * n_cls + truth.labels.ravel(),
                        minlength=k * n_cls).reshape(k, n_cls)
    return joint.argmax(axis=1)


def stratified_objects(labels: np.ndarray, per_class: int, seed: int) -> np.ndarray:
    """Equal-allocation sample of object indices per class id."""
    rng = np.random.default_rng(seed)
    picks = []
    for k in np.unique(labels):
        pool = np.flatnonzero(labels == k)
        picks.append(pool if pool.size <= per_class else np.sort(rng.choice(pool, per_class, replace=False)))
    return np.sort(np.concatenate(picks))


def _run_rules(objects, rules, seg):
    results = classify(objects, rules)
    return results, rasterize_labels(seg, results, DEFAULT_LEGEND)


def _run_cart(objects, table, seg, truth, cfg):
    majority = object_majority_labels(seg.segment_ids, truth)
    rows = stratified_objects(majority, cfg.cart_per_class, cfg.cart_sample_seed)
    x = np.stack([table[f] for f in NUMERIC_FEATURES], axis=1)
    samples = SampleSet(x[rows], [truth.legend[int(k)] for k in majority[rows]], NUMERIC_FEATURES)
    tree = cart_train(samples, max_depth=cfg.cart_max_depth, min_leaf=cfg.cart_min_leaf)
    pred = tree.predict_many(x)
    labels = {o.segment_id: str(c) for o, c in zip(objects, pred)}
    return tree, rasterize_labels(seg, labels, DEFAULT_LEGEND)


def _run_mlp(raster, truth, exclude, cfg):
    points = stratified_sample(truth, cfg.mlp_per_class, cfg.mlp_sample_seed, exclude=exclude)
    x = raster.spectral()[:, points[:, 0], points[:, 1]].T
    y = [truth.legend[int(k)] for k in truth.labels[points[:, 0], points[:, 1]]]
    model = mlp_train(SampleSet(x, y, ("Blue", "Green", "Red", "NIR")), hidden=cfg.mlp_hidden, lr=cfg.mlp_lr,
                      epochs=cfg.mlp_epochs, batch=cfg.mlp_batch, seed=cfg.mlp_seed)
    return model, mlp_predict(model, raster, DEFAULT_LEGEND)


def run(cfg: PipelineConfig, outdir=None) -> RunResult:
    """Run the whole workflow; write the report bundle when ``outdir`` is given."""
    raster, truth = generate_scene(cfg.scene)
    seg = segment(raster, cfg.seg)
    objects = compute_features(raster, seg)
    table = feature_table(raster, seg)
    rules = builtin_qinhuai_ruleset() if cfg.rules == "builtin" else load_ruleset(cfg.rules)

    points = stratified_sample(truth, cfg.assess_per_class, cfg.assess_seed)
    held_out = np.zeros(truth.labels.shape, dtype=bool)
    held_out[points[:, 0], points[:, 1]] = True

    with ThreadPoolExecutor(max_workers=3) as pool:
        f_rules = pool.submit(_run_rules, objects, rules, seg)
        f_cart = pool.submit(_run_cart, objects, table, seg, truth, cfg)
        f_mlp = pool.submit(_run_mlp, raster, truth, held_out, cfg)
        trace, rule_map = f_rules.result()
        _, cart_map = f_cart.result()
        model, mlp_map = f_mlp.result()

    maps = {"object_rules": rule_map, "cart": cart_map, "mlp": mlp_map}
    cms = {m: confusion(truth, maps[m], points, classes=CLASS_NAMES) for m in METHODS}
    reports = {m: metrics(cms[m]) for m in METHODS}
    full = {m: metrics(confusion(truth, maps[m], classes=CLASS_NAMES)) for m in METHODS}
    isolated = {m: count_isolated_pixels(maps[m]) for m in METHODS}

    files: list[str] = []
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)

        def name(fn):
            files.append(fn)
            return out / fn

        name("manifest.txt").write_text(cfg.to_manifest(), encoding="utf-8")
        write_raster(raster, name("scene.hdr"))
        files.append("scene.bin")
        write_segments(seg, name("segments.hdr"), raster.pixel_size_m)
        files.append("segments.bin")
        for stem, lab in (("truth", truth), *maps.items()):
            write_labels(lab, name(f"{stem}.hdr"), raster.pixel_size_m)
            files.append(f"{stem}.bin")
            name(f"{stem}.png").write_bytes(render_class_map(lab))
        write_features_csv(objects, name("features.csv"))
        write_trace_csv(trace, name("trace.csv"))
        write_history_csv(model, name("mlp_training.csv"))
        write_metrics_csv({TABLE_NAMES[m]: reports[m] for m in METHODS}, name("metrics.csv"))
        write_metrics_csv({TABLE_NAMES[m]: full[m] for m in METHODS}, name("metrics_all_pixels.csv"))
        for m in METHODS:
            write_confusion_csv(cms[m], name(f"confusion_{m}.csv"))
        write_class_stats_csv({"Ground truth": class_stats(truth, raster.pixel_size_m),
                               **{TABLE_NAMES[m]: class_stats(maps[m], raster.pixel_size_m) for m in METHODS}},
                              name("class_stats.csv"))
        name("table3.txt").write_text(table3_text(reports, isolated, n_points=len(points)), encoding="utf-8")
    return RunResult(cfg, truth, maps, reports, full, isolated, sorted(files))


def table3_text(reports: dict[str, Metrics], isolated: dict[str, int], n_points: int) -> str:
    a, b = reports["object_rules"], reports["mlp"]
    deltas = {
        "overall": a.overall - b.overall,
        "kappa": a.kappa - b.kappa,
        "producer": tuple(x - y for x, y in zip(a.producer, b.producer)),
        "user": tuple(x - y for x, y in zip(a.user, b.user)),
    }
    text = format_accuracy_table({TABLE_NAMES[m]: reports[m] for m in METHODS}, deltas=deltas)
    lines = [f"Assessment: {n_points} stratified reference points; deltas are object rules minus pixel MLP.", ""]
    tail = ["", "Isolated single-pixel islands:"]
    tail += [f"  {TABLE_NAMES[m]:<14}{isolated[m]:>8}" for m in METHODS]
    return "\n".join(lines) + text + "\n".join(tail) + "\n"


def replay(manifest_path, outdir) -> RunResult:
    cfg = PipelineConfig.from_manifest(Path(manifest_path).read_text(encoding="utf-8"))
    return run(cfg, outdir)
