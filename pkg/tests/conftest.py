import numpy as np
import pytest

from obia.raster import SPECTRAL_ROLES, MultibandRaster
from obia.scene import SceneSpec, generate_scene


def four_band(planes):
    """Build a Blue/Green/Red/NIR raster from a (4, H, W) array-like."""
    return MultibandRaster(np.asarray(planes, dtype=np.float32), SPECTRAL_ROLES)


def small_spec(seed, size=128, **kw):
    """A scaled-down scene; lot and blob sizes shrink with the canvas."""
    return SceneSpec(width=size, height=size, lot_size=(12, 30), rotated_buildings=2,
                     road_width=(5, 8), water_blobs=1, vegetation_scale=(6, 14),
                     bare_scale=(6, 10), seed=seed, **kw)


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(small_spec(7))


@pytest.fixture(scope="session")
def standard_scene():
    return generate_scene(SceneSpec())


def gradient_pairs(n=20):
    """Seeded (model, spectrum, label) triples for finite-difference checks."""
    from obia.classifiers.mlp import MlpConfig, init_mlp
    from obia.raster import CLASS_NAMES

    out = []
    for seed in range(n):
        rng = np.random.default_rng([seed, 99])
        hidden = int(rng.integers(2, 17))
        classes = CLASS_NAMES[:int(rng.integers(2, 6))]
        offset = rng.uniform(500, 2000, 4)
        scale = rng.uniform(100, 800, 4)
        model = init_mlp(4, classes, MlpConfig(hidden=hidden, seed=seed), offset, scale)
        x = rng.uniform(0, 3000, 4)
        out.append((model, x, classes[int(rng.integers(len(classes)))]))
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
