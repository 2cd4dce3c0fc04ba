"""Confusion matrices, accuracy metrics and per-class area statistics."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from obia.raster import UNCLASSIFIED, LabelRaster


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = reference (truth) and columns = predicted."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise ValueError(f"counts shape {counts.shape} does not match {k} classes")
        if np.any(counts < 0) or not np.all(counts == np.round(counts)):
            raise ValueError("counts must be non-negative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.classes == other.classes
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class Metrics:
    classes: tuple[str, ...]
    overall: float
    kappa: float
    producer: tuple[float, ...]
    user: tuple[float, ...]
    # classes with an empty reference row / predicted column (accuracy reported as 0)
    absent_reference: tuple[str, ...] = ()
    absent_predicted: tuple[str, ...] = ()
    n: int = 0


def confusion(truth: LabelRaster, pred: LabelRaster, sample_mask=None, classes=None) -> ConfusionMatrix:
    """Tabulate reference vs predicted labels.

    ``sample_mask`` is a boolean plane or an ``(N, 2)`` array of (row, col)
    coordinates; all pixels are used when it is None. Pixels that are
    Unclassified in the truth are skipped. ``classes`` fixes the matrix
    order; by default it is every class present in the sample, in legend id
    order. An "Unclassified" column is added only when the prediction leaves
    sampled pixels unclassified.
    """
    if truth.labels.shape != pred.labels.shape:
        raise ValueError(f"dimension mismatch: truth {truth.labels.shape} vs pred {pred.labels.shape}")
    t = truth.labels
    p = pred.labels
    if sample_mask is None:
        t, p = t.ravel(), p.ravel()
    else:
        mask = np.asarray(sample_mask)
        if mask.dtype == bool:
            if mask.shape != t.shape:
                raise ValueError("sample mask shape does not match the rasters")
            t, p = t[mask], p[mask]
        else:
            rc = mask.reshape(-1, 2).astype(np.int64)
            t, p = t[rc[:, 0], rc[:, 1]], p[rc[:, 0], rc[:, 1]]
    keep = t != UNCLASSIFIED
    t, p = t[keep], p[keep]
    if t.size == 0:
        raise ValueError("empty effective sample")

    for legend, ids in ((truth.legend, t), (pred.legend, p)):
        for k in np.unique(ids):
            if k != UNCLASSIFIED and int(k) not in legend:
                raise ValueError(f"label {k} missing from legend")
    if classes is None:
        present: dict[str, None] = {}
        for legend, ids in ((truth.legend, t), (pred.legend, p)):
            ids = set(np.unique(ids).tolist())
            for k in sorted(legend):
                if k in ids:
                    present.setdefault(legend[k])
        classes = list(present)
    else:
        classes = list(classes)
        named = set(classes)
        for legend, ids in ((truth.legend, t), (pred.legend, p)):
            for k in np.unique(ids):
                if k != UNCLASSIFIED and legend[int(k)] not in named:
                    raise ValueError(f"class {legend[int(k)]!r} is not in the requested class list")
    if np.any(p == UNCLASSIFIED) and "Unclassified" not in classes:
        classes.append("Unclassified")
    index = {c: i for i, c in enumerate(classes)}

    def to_index(ids, legend):
        lut = np.full(max(legend, default=0) + 1, index.get("Unclassified", -1), dtype=np.int64)
        for k, name in legend.items():
            lut[k] = index.get(name, -1)
        return lut[ids]

    ti = to_index(t, truth.legend)
    pi = to_index(p, pred.legend)
    k = len(classes)
    counts = np.bincount(ti * k + pi, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(tuple(classes), counts)


def metrics(cm: ConfusionMatrix) -> Metrics:
    counts = cm.counts.astype(np.float64)
    n = counts.sum()
    if n <= 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    p_o = diag.sum() / n
    p_e = float(np.sum(rows * cols)) / (n * n)
    if p_e == 1.0:
        kappa = 1.0 if p_o == 1.0 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    with np.errstate(divide="ignore", invalid="ignore"):
        producer = np.where(rows > 0, diag / rows, 0.0)
        user = np.where(cols > 0, diag / cols, 0.0)
    return Metrics(
        classes=cm.classes,
        overall=float(p_o),
        kappa=float(kappa),
        producer=tuple(float(v) for v in producer),
        user=tuple(float(v) for v in user),
        absent_reference=tuple(c for c, r in zip(cm.classes, rows) if r == 0),
        absent_predicted=tuple(c for c, s in zip(cm.classes, cols) if s == 0),
        n=int(n),
    )


def stratified_sample(truth: LabelRaster, per_class: int, seed: int, exclude=None) -> np.ndarray:
    """Equal-allocation random sample of (row, col) points per reference class.

    Classes with fewer eligible pixels contribute all of them. ``exclude`` is
    an optional boolean plane of pixels that may not be drawn.
    """
    rng = np.random.default_rng(seed)
    flat = truth.labels.ravel()
    eligible = np.ones(flat.size, dtype=bool) if exclude is None else ~np.asarray(exclude).ravel()
    picks = []
    for k in sorted(truth.legend):
        pool = np.flatnonzero((flat == k) & eligible)
        if pool.size == 0:
            continue
        take = pool if pool.size <= per_class else np.sort(rng.choice(pool, per_class, replace=False))
        picks.append(take)
    idx = np.concatenate(picks) if picks else np.zeros(0, dtype=np.int64)
    return np.stack(np.divmod(idx, truth.width), axis=1)


def count_isolated_pixels(labels: LabelRaster) -> int:
    """Pixels whose label differs from every one of their 4-neighbors."""
    lab = labels.labels
    pad = np.pad(lab, 1, constant_values=-1)
    core = pad[1:-1, 1:-1]
    alone = np.ones(lab.shape, dtype=bool)
    for nb in (pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]):
        alone &= nb != core
    return int(alone.sum())


@dataclass(frozen=True)
class ClassStat:
    name: str
    perimeter_km: float
    area_ha: float
    area_ratio_percent: float
    pixels: int


def class_stats(labels: LabelRaster, pixel_size_m: float = 1.0) -> list[ClassStat]:
    """Perimeter, area and area share of every legend class present."""
    if not pixel_size_m > 0:
        raise ValueError("pixel_size_m must be positive")
    lab = labels.labels
    counts = labels.counts()
    classified = sum(c for k, c in counts.items() if k != UNCLASSIFIED)
    pad = np.pad(lab, 1, constant_values=-1)
    core = pad[1:-1, 1:-1]
    edges = np.zeros(int(lab.max()) + 1, dtype=np.int64)
    for nb in (pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]):
        edges += np.bincount(core[nb != core], minlength=edges.size)
    out = []
    for k in sorted(labels.legend):
        n = counts.get(k, 0)
        if n == 0:
            continue
        out.append(ClassStat(
            name=labels.legend[k],
            perimeter_km=edges[k] * pixel_size_m / 1000.0,
            area_ha=n * pixel_size_m ** 2 / 10000.0,
            area_ratio_percent=100.0 * n / classified,
            pixels=n,
        ))
    return out


@dataclass(frozen=True)
class Comparison:
    classes: tuple[str, ...]
    names: tuple[str, str]
    a: Metrics
    b: Metrics

    @property
    def deltas(self) -> dict[str, object]:
        return {
            "overall": self.a.overall - self.b.overall,
            "kappa": self.a.kappa - self.b.kappa,
            "producer": tuple(x - y for x, y in zip(self.a.producer, self.b.producer)),
            "user": tuple(x - y for x, y in zip(self.a.user, self.b.user)),
        }

    def table(self) -> str:
        return format_accuracy_table({self.names[0]: self.a, self.names[1]: self.b}, deltas=self.deltas)


def compare_reports(a: Metrics, b: Metrics, names=("A", "B")) -> Comparison:
    if a.classes != b.classes:
        raise ValueError(f"class lists differ: {a.classes} vs {b.classes}")
    return Comparison(a.classes, tuple(names), a, b)


def format_accuracy_table(reports: dict[str, Metrics], deltas=None) -> str:
    """Aligned text: producer/user rows per method, then overall and kappa."""
    first = next(iter(reports.values()))
    classes = first.classes
    for m in reports.values():
        if m.classes != classes:
            raise ValueError("all reports must share one class list")
    label_w = max(len("Kappa coefficient"), len("Category Accuracy (%)"))
    method_w = max(len(n) for n in reports)
    col_w = max(10, max(len(c) for c in classes) + 1)
    head = f"{'Category Accuracy (%)':<{label_w}}  {'Method':<{method_w}}" + "".join(
        f"{c:>{col_w}}" for c in classes)
    lines = [head, "-" * len(head)]
    for name, m in reports.items():
        lines.append(f"{'Producer':<{label_w}}  {name:<{method_w}}" + "".join(
            f"{100 * v:>{col_w}.2f}" for v in m.producer))
        lines.append(f"{'User':<{label_w}}  {'':<{method_w}}" + "".join(
            f"{100 * v:>{col_w}.2f}" for v in m.user))
        lines.append(f"{'Overall':<{label_w}}  {'':<{method_w}}{100 * m.overall:>{col_w}.2f}")
        lines.append(f"{'Kappa coefficient':<{label_w}}  {'':<{method_w}}{m.kappa:>{col_w}.4f}")
    if deltas is not None:
        lines.append("-" * len(head))
        lines.append(f"{'Producer delta':<{label_w}}  {'':<{method_w}}" + "".join(
            f"{100 * v:>{col_w}.2f}" for v in deltas["producer"]))
        lines.append(f"{'User delta':<{label_w}}  {'':<{method_w}}" + "".join(
            f"{100 * v:>{col_w}.2f}" for v in deltas["user"]))
        lines.append(f"{'Overall delta':<{label_w}}  {'':<{method_w}}{100 * deltas['overall']:>{col_w}.2f}")
        lines.append(f"{'Kappa delta':<{label_w}}  {'':<{method_w}}{deltas['kappa']:>{col_w}.4f}")
    return "\n".join(lines) + "\n"


def write_metrics_csv(reports: dict[str, Metrics], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["method", "metric", "class", "value"])
        for name, m in reports.items():
            for c, v in zip(m.classes, m.producer):
                out.writerow([name, "producer", c, repr(v)])
            for c, v in zip(m.classes, m.user):
                out.writerow([name, "user", c, repr(v)])
            out.writerow([name, "overall", "", repr(m.overall)])
            out.writerow([name, "kappa", "", repr(m.kappa)])


def write_class_stats_csv(stats: dict[str, list[ClassStat]], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["classification", "class", "perimeter_km", "area_ha", "area_ratio_percent", "pixels"])
        for name, rows in stats.items():
            for s in rows:
                out.writerow([name, s.name, f"{s.perimeter_km:.4f}", f"{s.area_ha:.4f}",
                              f"{s.area_ratio_percent:.2f}", s.pixels])


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["reference\\predicted", *cm.classes])
        for c, row in zip(cm.classes, cm.counts):
            out.writerow([c, *row.tolist()])
