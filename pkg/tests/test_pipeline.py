import dataclasses

import numpy as np
import pytest

from obia.pipeline import (METHODS, PipelineConfig, derived_seeds, object_majority_labels, replay, run,
                           stratified_objects)
from obia.raster import LabelRaster
from obia.segmentation import SegParams

from conftest import small_spec


def small_config(seed=5):
    return dataclasses.replace(PipelineConfig.standard(seed), scene=small_spec(seed), assess_per_class=40,
                               mlp_per_class=40, mlp_epochs=5, cart_per_class=10)


def bundle(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_derived_seeds_are_distinct_and_stable():
    a = derived_seeds(0)
    assert a == derived_seeds(0)
    assert len(set(a.values())) == 4
    assert a != derived_seeds(1)


def test_manifest_round_trip():
    cfg = dataclasses.replace(small_config(), seg=SegParams(60.0, 0.3, 0.5, (1.0, 2.0, 1.0, 1.0)))
    text = cfg.to_manifest()
    assert PipelineConfig.from_manifest(text) == cfg
    assert PipelineConfig.from_manifest(text).to_manifest() == text


def test_manifest_keeps_roof_order():
    text = PipelineConfig.standard(0).to_manifest()
    scene_line = next(l for l in text.splitlines() if l.startswith("scene = "))
    roofs = PipelineConfig.standard(0).scene.roofs
    positions = [scene_line.index(f'"{name}"') for name in roofs]
    assert positions == sorted(positions)


@pytest.mark.parametrize("edit, pattern", [
    (lambda t: t.replace("# obia run manifest v1", "# something else"), "header"),
    (lambda t: t + "bogus = 1\n", "unknown manifest keys"),
    (lambda t: t + "no equals sign\n", "line"),
    (lambda t: t.replace("mlp_epochs = 5", "mlp_epochs = [5"), "line"),
])
def test_manifest_errors(edit, pattern):
    with pytest.raises(ValueError, match=pattern):
        PipelineConfig.from_manifest(edit(small_config().to_manifest()))


def test_object_majority_labels():
    truth = LabelRaster(np.array([[1, 1, 2], [2, 2, 3]]))
    ids = np.array([[1, 1, 1], [2, 2, 2]])
    assert object_majority_labels(ids, truth).tolist() == [1, 2]
    with pytest.raises(ValueError):
        object_majority_labels(ids[:, :2], truth)


def test_stratified_objects():
    labels = np.array([1, 1, 1, 2, 2, 3])
    picks = stratified_objects(labels, 2, seed=0)
    assert np.bincount(labels[picks]).tolist() == [0, 2, 2, 1]
    assert np.array_equal(picks, stratified_objects(labels, 2, seed=0))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run(small_config(), out), out


def test_run_bundle_contents(small_run):
    result, out = small_run
    names = set(result.files)
    assert names == {p.name for p in out.iterdir()}
    for stem in ("truth", *METHODS):
        assert {f"{stem}.hdr", f"{stem}.bin", f"{stem}.png"} <= names
    assert {"manifest.txt", "table3.txt", "metrics.csv", "class_stats.csv", "trace.csv",
            "features.csv", "mlp_training.csv"} <= names


def test_run_reports(small_run):
    result, _ = small_run
    for m in METHODS:
        assert result.reports[m].n == 200
        assert 0 <= result.reports[m].overall <= 1
    assert result.isolated["mlp"] > result.isolated["object_rules"]
    text = (small_run[1] / "table3.txt").read_text()
    assert "Object rules" in text and "Pixel MLP" in text and "Isolated" in text


def test_replay_is_byte_identical(small_run, tmp_path):
    _, out = small_run
    replay(out / "manifest.txt", tmp_path)
    assert bundle(tmp_path) == bundle(out)


def test_invalid_config():
    with pytest.raises(ValueError):
        dataclasses.replace(small_config(), assess_per_class=0)
