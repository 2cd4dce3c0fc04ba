import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import label

from obia.features import (FIELD_NAMES, NUMERIC_FEATURES, compute_features, feature_table, ndvi, ndwi,
                           read_features_csv, write_features_csv)
from obia.segmentation import DEFAULT_PARAMS, segment, segmentation_from_ids

from conftest import four_band
from oracles import brute_features


def one_object(mask, values=(1.0, 2.0, 3.0, 4.0)):
    """Features of segment 1 (``mask``) against a background segment 2; the object comes first."""
    mask = np.asarray(mask, dtype=bool)
    data = np.stack([np.where(mask, v, 0.0) for v in values])
    ids = np.where(mask, 1, 2)
    if mask.all():
        ids = np.ones(mask.shape, dtype=int)
    raster = four_band(data)
    return compute_features(raster, segmentation_from_ids(raster, ids))


@pytest.mark.parametrize("nir, red, expected", [(800, 800, 0.0), (2000, 1200, 0.25), (0, 0, 0.0)])
def test_ndvi_examples(nir, red, expected):
    assert ndvi(nir, red) == expected


@pytest.mark.parametrize("green, nir, expected", [(700, 700, 0.0), (1100, 900, 0.1), (0, 1000, -1.0)])
def test_ndwi_examples(green, nir, expected):
    assert ndwi(green, nir) == pytest.approx(expected, abs=1e-15)


@given(a=st.floats(0, 1e5), b=st.floats(0, 1e5), k=st.floats(1e-3, 1e3))
def test_indices_bounded_and_ratio_invariant(a, b, k):
    for f in (ndvi, ndwi):
        v = f(a, b)
        assert -1.0 <= v <= 1.0
        if a + b > 0 and a * k + b * k > 0:
            assert f(a * k, b * k) == pytest.approx(v, abs=1e-12)


def test_indices_vectorized():
    out = ndvi(np.array([2000.0, 0.0]), np.array([1200.0, 0.0]))
    assert out.tolist() == [0.25, 0.0]


def test_square_10x10():
    rec = one_object(np.ones((10, 10)))[0]
    assert rec.area_px == 100
    assert rec.perimeter_px == 40
    assert rec.shape_index == 1.0
    assert rec.asymmetry == 0.0
    assert rec.length_width == 1.0


def test_strip_1x60():
    rec = one_object(np.ones((1, 60)))[0]
    assert rec.area_px == 60
    assert rec.perimeter_px == 122
    assert rec.shape_index == 122 / (4 * math.sqrt(60))
    assert rec.length_width == pytest.approx(60.0, rel=1e-12)
    assert rec.length_width > 4.8 and rec.shape_index > 2


def test_vertical_strip_matches_horizontal():
    a = one_object(np.ones((1, 60)))[0]
    b = one_object(np.ones((60, 1)))[0]
    for name in ("area_px", "perimeter_px", "shape_index", "length_width", "asymmetry"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-12)


def test_uniform_object_brightness_and_std():
    rec = one_object(np.ones((4, 5)), values=(900.0, 900.0, 900.0, 900.0))[0]
    assert rec.brightness == 900.0
    assert (rec.std_blue, rec.std_green, rec.std_red, rec.std_nir) == (0.0, 0.0, 0.0, 0.0)


def test_single_pixel_object():
    mask = np.zeros((3, 3), dtype=bool)
    mask[1, 1] = True
    data = np.stack([np.where(mask, 5.0, 1.0)] * 4)
    raster = four_band(data)
    ids = np.where(mask, 1, 2)
    rec = compute_features(raster, segmentation_from_ids(raster, ids))[0]
    assert rec.area_px == 1 and rec.perimeter_px == 4
    assert rec.length_width == 1.0 and rec.asymmetry == 0.0


def test_dimension_mismatch(small_scene):
    raster, _ = small_scene
    seg = segment(four_band(np.ones((4, 5, 5))), DEFAULT_PARAMS)
    with pytest.raises(ValueError, match="does not match"):
        compute_features(raster, seg)


def test_matches_brute_force(small_scene):
    raster, _ = small_scene
    seg = segment(raster, DEFAULT_PARAMS)
    records = compute_features(raster, seg)
    ref = brute_features(raster.spectral(), seg.segment_ids)
    assert sum(r.area_px for r in records) == raster.width * raster.height
    for rec in records:
        exp = ref[rec.segment_id]
        for name in FIELD_NAMES:
            got = getattr(rec, name)
            assert got == pytest.approx(exp[name], rel=1e-9, abs=1e-9), name


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 12), w=st.integers(1, 12), k=st.integers(1, 6))
def test_random_partitions_match_brute_force(seed, h, w, k):
    # arbitrary (possibly disconnected) label planes still have well-defined features
    rng = np.random.default_rng(seed)
    ids = rng.integers(1, k + 1, (h, w))
    data = rng.uniform(0, 3000, (4, h, w))
    raster = four_band(data)
    seg = segmentation_from_ids(raster, ids)
    ref = brute_features(raster.spectral(), seg.segment_ids)
    for rec in compute_features(raster, seg):
        for name in FIELD_NAMES:
            assert getattr(rec, name) == pytest.approx(ref[rec.segment_id][name], rel=1e-9, abs=1e-9), name


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), turns=st.integers(1, 3))
def test_rotation_invariance(seed, turns):
    rng = np.random.default_rng(seed)
    mask = rng.random((9, 7)) < 0.5
    mask[4, 3] = True
    # keep the 4-connected component through the centre so the object is one region
    comp, _ = label(mask)
    mask = comp == comp[4, 3]
    pad = np.pad(mask, 1)
    a = one_object(pad)[0]
    b = one_object(np.rot90(pad, turns))[0]
    for name in ("area_px", "perimeter_px", "shape_index", "length_width", "asymmetry"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9, abs=1e-12), name


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.floats(0.1, 10.0))
def test_value_scaling(seed, k):
    rng = np.random.default_rng(seed)
    data = rng.uniform(1, 3000, (4, 6, 6))
    ids = rng.integers(1, 4, (6, 6))
    r1, r2 = four_band(data), four_band(data * k)
    a = feature_table(r1, segmentation_from_ids(r1, ids))
    b = feature_table(r2, segmentation_from_ids(r2, ids))
    # float32 storage rounds both rasters, so compare loosely
    np.testing.assert_allclose(a["ndvi"], b["ndvi"], atol=1e-6)
    np.testing.assert_allclose(a["ndwi"], b["ndwi"], atol=1e-6)
    np.testing.assert_allclose(b["brightness"], k * a["brightness"], rtol=1e-6)


def test_invariant_ranges(small_scene):
    raster, _ = small_scene
    for rec in compute_features(raster, segment(raster, DEFAULT_PARAMS)):
        assert -1 <= rec.ndvi <= 1 and -1 <= rec.ndwi <= 1
        assert 0 <= rec.asymmetry < 1
        assert rec.length_width >= 1
        assert rec.shape_index >= 1 - 1e-12


def test_csv_round_trip(tmp_path, small_scene):
    raster, _ = small_scene
    records = compute_features(raster, segment(raster, DEFAULT_PARAMS))
    write_features_csv(records, tmp_path / "f.csv")
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header.split(",") == list(FIELD_NAMES)
    assert read_features_csv(tmp_path / "f.csv") == records


def test_vector_uses_numeric_schema(small_scene):
    raster, _ = small_scene
    rec = compute_features(raster, segment(raster, DEFAULT_PARAMS))[0]
    assert rec.vector().shape == (len(NUMERIC_FEATURES),)
    assert rec.vector(["ndvi"])[0] == rec.ndvi
