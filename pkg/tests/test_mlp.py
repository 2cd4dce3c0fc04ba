import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obia.classifiers import SampleSet, mlp_gradient_check, mlp_predict, mlp_train
from obia.classifiers.mlp import Mlp, MlpConfig, backprop, cross_entropy, forward, init_mlp, write_history_csv
from obia.raster import CLASS_IDS, BandRole, MultibandRaster

from conftest import four_band, gradient_pairs

BANDS = ("blue", "green", "red", "nir")


def toy_spectra(seed=0, n=200):
    """Two classes separated along NIR - Red."""
    rng = np.random.default_rng(seed)
    water = rng.uniform([300, 600, 400, 200], [500, 800, 600, 500], (n, 4))
    veg = rng.uniform([300, 600, 400, 2000], [500, 800, 600, 2600], (n, 4))
    return SampleSet(np.vstack([water, veg]), np.array(["Water"] * n + ["Vegetation"] * n), BANDS)


def zero_model(classes=("Vegetation", "Water", "Road"), hidden=3):
    c = len(classes)
    return Mlp(np.zeros((4, hidden)), np.zeros(hidden), np.zeros((hidden, c)), np.zeros(c), tuple(classes),
               np.zeros(4), np.ones(4))


def test_zero_epochs_returns_initialization():
    s = toy_spectra()
    model = mlp_train(s, hidden=5, epochs=0, seed=9)
    ref = init_mlp(4, model.classes, MlpConfig(hidden=5, epochs=0, seed=9), model.offset, model.scale)
    for k in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(model, k), getattr(ref, k))
    assert model.history == []


def test_initialization_range_and_shapes():
    model = init_mlp(4, ("Water", "Road", "Building"), MlpConfig(hidden=7, seed=2))
    assert model.layer_sizes == (4, 7, 3)
    for w in model.params().values():
        assert np.all((w >= -0.5) & (w < 0.5))


def test_separable_two_class_training():
    s = toy_spectra()
    model = mlp_train(s, hidden=8, lr=0.5, epochs=500, batch=32, seed=0)
    acc = np.mean(np.array(model.classes)[model.proba(s.features).argmax(axis=1)] == s.labels)
    assert acc >= 0.99
    assert model.history[-1][2] >= 0.99
    assert len(model.history) == 500


def test_same_seed_bit_identical():
    s = toy_spectra(1, 50)
    a = mlp_train(s, hidden=4, epochs=20, seed=3)
    b = mlp_train(s, hidden=4, epochs=20, seed=3)
    assert a.to_text() == b.to_text()
    assert a.history == b.history
    c = mlp_train(s, hidden=4, epochs=20, seed=4)
    assert not np.array_equal(a.w1, c.w1)


def test_loss_decreases_on_toy_problem():
    losses = [l for _, l, _ in mlp_train(toy_spectra(), hidden=8, epochs=50, seed=0).history]
    assert losses[-1] < losses[0]


@pytest.mark.parametrize("kw", [dict(hidden=0), dict(lr=0.0), dict(lr=-1.0), dict(epochs=-1), dict(batch=0)])
def test_invalid_hyperparameters(kw):
    with pytest.raises(ValueError):
        mlp_train(toy_spectra(0, 10), **kw)


def test_training_errors():
    with pytest.raises(ValueError, match="two classes"):
        mlp_train(SampleSet(np.ones((3, 4)), np.array(["Water"] * 3), BANDS))
    with pytest.raises(ValueError, match="empty"):
        mlp_train(SampleSet(np.zeros((0, 4)), np.array([], dtype=object), BANDS))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hidden=st.integers(1, 12), classes=st.integers(2, 5),
       rows=st.integers(1, 30))
def test_softmax_rows_sum_to_one_and_loss_non_negative(seed, hidden, classes, rows):
    rng = np.random.default_rng(seed)
    names = tuple(CLASS_IDS)[:classes]
    model = init_mlp(4, names, MlpConfig(hidden=hidden, seed=seed % 1000))
    z = rng.normal(0, 5, (rows, 4))
    proba = forward(model.params(), z)[1]
    assert np.all(np.abs(proba.sum(axis=1) - 1.0) <= 1e-9)
    assert cross_entropy(proba, rng.integers(0, classes, rows)) >= 0.0


@pytest.mark.parametrize("model, x, label", gradient_pairs())
def test_gradient_check(model, x, label):
    assert mlp_gradient_check(model, x, label) < 1e-4


def test_gradient_check_on_trained_model():
    s = toy_spectra(2, 40)
    model = mlp_train(s, hidden=6, epochs=30, seed=1)
    for row, label in zip(s.features[::20], s.labels[::20]):
        assert mlp_gradient_check(model, row, label) < 1e-4


def corrupt(params, z, y):
    grads = backprop(params, z, y)
    grads["b2"] = grads["b2"].copy()
    grads["b2"][0] *= 2.0
    return grads


@pytest.mark.parametrize("model, x, label", gradient_pairs(5))
def test_corrupted_gradient_detected(model, x, label):
    assert mlp_gradient_check(model, x, label, grad_fn=corrupt) > 0.3


def test_zero_input_zero_weights_gives_zero_input_weight_gradients():
    model = zero_model()
    grads = backprop(model.params(), np.zeros((1, 4)), np.array([1]))
    assert np.all(grads["w1"] == 0.0)
    assert mlp_gradient_check(model, np.zeros(4), "Water") < 1e-4


def test_zero_weights_predict_tie_break_class():
    model = zero_model(("Water", "Road", "Vegetation"))
    rng = np.random.default_rng(0)
    raster = four_band(rng.uniform(0, 3000, (4, 5, 6)))
    out = mlp_predict(model, raster)
    # lowest class id among the model's classes
    assert np.all(out.labels == CLASS_IDS["Vegetation"])


def test_model_classes_ordered_by_id():
    model = mlp_train(toy_spectra(0, 20), hidden=2, epochs=1)
    assert model.classes == ("Vegetation", "Water")


def test_uniform_raster_uniform_map():
    model = mlp_train(toy_spectra(0, 30), hidden=4, epochs=5, seed=0)
    out = mlp_predict(model, four_band(np.broadcast_to(np.array([400.0, 700, 500, 2200])[:, None, None],
                                                       (4, 6, 7))))
    assert np.unique(out.labels).size == 1


def test_predict_maps_back_to_class_ids():
    model = mlp_train(toy_spectra(0, 100), hidden=8, epochs=100, seed=0)
    planes = np.zeros((4, 1, 2))
    planes[:, 0, 0] = [400, 700, 500, 300]
    planes[:, 0, 1] = [400, 700, 500, 2300]
    out = mlp_predict(model, four_band(planes))
    assert out.labels.tolist() == [[CLASS_IDS["Water"], CLASS_IDS["Vegetation"]]]
    assert out.legend[CLASS_IDS["Water"]] == "Water"


def test_missing_band():
    model = zero_model()
    raster = MultibandRaster(np.ones((3, 2, 2), dtype=np.float32), (BandRole.BLUE, BandRole.GREEN, BandRole.RED))
    with pytest.raises(KeyError, match="NIR"):
        mlp_predict(model, raster)


def test_serialization_round_trip():
    model = mlp_train(toy_spectra(0, 30), hidden=3, epochs=3, seed=5)
    back = Mlp.from_text(model.to_text())
    assert back.to_text() == model.to_text()
    x = toy_spectra(1, 10).features
    assert np.array_equal(back.proba(x), model.proba(x))


def test_history_csv(tmp_path):
    model = mlp_train(toy_spectra(0, 20), hidden=3, epochs=4, seed=0)
    write_history_csv(model, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [1, 2, 3, 4]
    assert all(float(l.split(",")[1]) >= 0 for l in lines[1:])
