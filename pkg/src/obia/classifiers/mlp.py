"""Single-hidden-layer perceptron for per-pixel spectral classification."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from obia.classifiers.samples import SampleSet
from obia.raster import CLASS_IDS, LabelRaster, MultibandRaster

PARAMS = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 16
    lr: float = 0.5
    epochs: int = 200
    batch: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden <= 0:
            raise ValueError(f"hidden must be positive, got {self.hidden}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch <= 0:
            raise ValueError(f"batch must be positive, got {self.batch}")


@dataclass
class Mlp:
    """Weights for ``input -> sigmoid hidden -> softmax``.

    Inputs are standardized with the stored ``offset``/``scale`` before the
    first layer. ``classes`` are ordered by class id, so an argmax tie goes
    to the lowest id.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    classes: tuple[str, ...]
    offset: np.ndarray
    scale: np.ndarray
    config: MlpConfig = field(default_factory=MlpConfig)
    history: list[tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self):
        d, h = self.w1.shape
        c = len(self.classes)
        if self.b1.shape != (h,) or self.w2.shape != (h, c) or self.b2.shape != (c,):
            raise ValueError("inconsistent weight shapes")
        if self.offset.shape != (d,) or self.scale.shape != (d,):
            raise ValueError("inconsistent input scaling shapes")

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAMS}

    def with_params(self, params: dict[str, np.ndarray]) -> "Mlp":
        return Mlp(params["w1"], params["b1"], params["w2"], params["b2"], self.classes,
                   self.offset, self.scale, self.config, list(self.history))

    def proba(self, x) -> np.ndarray:
        return forward(self.params(), self.standardize(x))[1]

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale

    def to_text(self) -> str:
        cfg = self.config
        doc = {
            "format": "obia-mlp/1",
            "classes": list(self.classes),
            "offset": self.offset.tolist(),
            "scale": self.scale.tolist(),
            "config": {"hidden": cfg.hidden, "lr": cfg.lr, "epochs": cfg.epochs,
                       "batch": cfg.batch, "seed": cfg.seed},
            **{k: getattr(self, k).tolist() for k in PARAMS},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Mlp":
        doc = json.loads(text)
        if doc.get("format") != "obia-mlp/1":
            raise ValueError("not an MLP model document")
        arr = {k: np.array(doc[k], dtype=np.float64) for k in PARAMS}
        return cls(arr["w1"], arr["b1"], arr["w2"], arr["b2"], tuple(doc["classes"]),
                   np.array(doc["offset"]), np.array(doc["scale"]), MlpConfig(**doc["config"]))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, z):
    hidden = _sigmoid(z @ params["w1"] + params["b1"])
    return hidden, _softmax(hidden @ params["w2"] + params["b2"])


def cross_entropy(proba, y) -> float:
    picked = proba[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss(params, z, y) -> float:
    return cross_entropy(forward(params, z)[1], y)


def backprop(params, z, y) -> dict[str, np.ndarray]:
    """Gradient of the mean cross-entropy with respect to every parameter."""
    hidden, proba = forward(params, z)
    m = z.shape[0]
    delta2 = proba.copy()
    delta2[np.arange(m), y] -= 1.0
    delta2 /= m
    delta1 = (delta2 @ params["w2"].T) * hidden * (1.0 - hidden)
    return {
        "w1": z.T @ delta1,
        "b1": delta1.sum(axis=0),
        "w2": hidden.T @ delta2,
        "b2": delta2.sum(axis=0),
    }


def _class_order(names) -> tuple[str, ...]:
    big = len(CLASS_IDS) + 1
    return tuple(sorted(set(names), key=lambda c: (CLASS_IDS.get(c, big), c)))


def init_mlp(n_inputs: int, classes, config: MlpConfig, offset=None, scale=None) -> Mlp:
    rng = np.random.default_rng(config.seed)
    h, c = config.hidden, len(classes)
    w1 = rng.uniform(-0.5, 0.5, (n_inputs, h))
    b1 = rng.uniform(-0.5, 0.5, h)
    w2 = rng.uniform(-0.5, 0.5, (h, c))
    b2 = rng.uniform(-0.5, 0.5, c)
    offset = np.zeros(n_inputs) if offset is None else np.asarray(offset, dtype=np.float64)
    scale = np.ones(n_inputs) if scale is None else np.asarray(scale, dtype=np.float64)
    return Mlp(w1, b1, w2, b2, tuple(classes), offset, scale, config)


def mlp_train(samples: SampleSet, hidden: int = 16, lr: float = 0.5, epochs: int = 200,
              batch: int = 32, seed: int = 0) -> Mlp:
    """Mini-batch gradient descent on cross-entropy; fully determined by ``seed``."""
    config = MlpConfig(hidden, lr, epochs, batch, seed)
    if len(samples) == 0:
        raise ValueError("cannot train on an empty sample set")
    classes = _class_order(samples.labels.tolist())
    if len(classes) < 2:
        raise ValueError("training needs at least two classes")
    x = samples.features
    offset = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    model = init_mlp(x.shape[1], classes, config, offset, scale)
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[c] for c in samples.labels], dtype=np.int64)
    z = model.standardize(x)

    params = {k: v.copy() for k, v in model.params().items()}
    # separate stream so the initialization is independent of the shuffles
    shuffle = np.random.default_rng([config.seed, 1])
    history = []
    for epoch in range(1, epochs + 1):
        order = shuffle.permutation(len(y))
        for lo in range(0, len(y), batch):
            rows = order[lo:lo + batch]
            grads = backprop(params, z[rows], y[rows])
            for k in PARAMS:
                params[k] -= lr * grads[k]
        proba = forward(params, z)[1]
        history.append((epoch, cross_entropy(proba, y), float(np.mean(proba.argmax(axis=1) == y))))
    trained = model.with_params(params)
    trained.history = history
    return trained


def mlp_predict(model: Mlp, raster: MultibandRaster, legend: dict[int, str] | None = None) -> LabelRaster:
    """Per-pixel argmax class over the Blue/Green/Red/NIR spectrum."""
    spectra = raster.spectral().reshape(4, -1).T
    if spectra.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"model expects {model.layer_sizes[0]} inputs, raster has 4 spectral bands")
    if legend is None:
        legend = {CLASS_IDS[c]: c for c in model.classes if c in CLASS_IDS}
        extra = [c for c in model.classes if c not in CLASS_IDS]
        for i, c in enumerate(extra, start=max(legend, default=0) + 1):
            legend[i] = c
    ids_of = {name: k for k, name in legend.items()}
    lut = np.array([ids_of[c] for c in model.classes], dtype=np.int64)
    # argmax takes the first maximum, so visit columns in id order
    order = np.argsort(lut, kind="stable")
    lut = lut[order]
    out = np.empty(spectra.shape[0], dtype=np.int64)
    step = 1 << 16
    for lo in range(0, spectra.shape[0], step):
        out[lo:lo + step] = lut[model.proba(spectra[lo:lo + step])[:, order].argmax(axis=1)]
    return LabelRaster(out.reshape(raster.height, raster.width), legend)


def mlp_gradient_check(model: Mlp, x, label, step: float = 1e-5, grad_fn=None) -> float:
    """Max relative difference between analytic and central-difference gradients.

    ``grad_fn(params, z, y)`` replaces backprop, e.g. to check that a broken
    gradient is caught.
    """
    grad_fn = backprop if grad_fn is None else grad_fn
    z = model.standardize(np.atleast_2d(x))
    y = np.array([model.classes.index(label) if isinstance(label, str) else int(label)])
    params = {k: v.astype(np.float64).copy() for k, v in model.params().items()}
    analytic = grad_fn(params, z, y)
    worst = 0.0
    for k in PARAMS:
        p = params[k]
        flat = p.reshape(-1)
        g_bp = np.asarray(analytic[k]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss(params, z, y)
            flat[i] = orig - step
            down = loss(params, z, y)
            flat[i] = orig
            g_fd = (up - down) / (2.0 * step)
            err = abs(g_bp[i] - g_fd) / max(abs(g_bp[i]), abs(g_fd), 1e-12)
            worst = max(worst, err)
    return worst


def write_history_csv(model: Mlp, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,train_acc\n")
        for epoch, l, acc in model.history:
            fh.write(f"{epoch},{l!r},{acc!r}\n")
