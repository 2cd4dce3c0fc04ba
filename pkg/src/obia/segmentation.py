"""Multiresolution region-merging segmentation, ESP-style scale scan and audit."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from obia._merge import region_merge
from obia.raster import BandRole, MultibandRaster, RasterFormatError, _read, write_raster


@dataclass(frozen=True)
class SegParams:
    scale: float = 100.0
    shape_weight: float = 0.2
    compactness_weight: float = 0.6
    band_weights: tuple[float, ...] | None = None  # None -> 1 for every band

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if not 0.0 <= self.shape_weight < 1.0:
            raise ValueError(f"shape_weight must be in [0, 1), got {self.shape_weight}")
        if not 0.0 <= self.compactness_weight <= 1.0:
            raise ValueError(f"compactness_weight must be in [0, 1], got {self.compactness_weight}")
        if self.band_weights is not None:
            w = tuple(float(x) for x in self.band_weights)
            if any(x < 0 or not np.isfinite(x) for x in w) or not any(x > 0 for x in w):
                raise ValueError(f"band weights must be >= 0 with at least one > 0, got {w}")
            object.__setattr__(self, "band_weights", w)

    def weights_for(self, n_bands: int) -> np.ndarray:
        if self.band_weights is None:
            return np.ones(n_bands)
        if len(self.band_weights) != n_bands:
            raise ValueError(f"{len(self.band_weights)} band weights for a {n_bands}-band raster")
        return np.asarray(self.band_weights, dtype=np.float64)


DEFAULT_PARAMS = SegParams(scale=100.0, shape_weight=0.2, compactness_weight=0.6)


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Partition of a raster into 4-connected segments with ids 1..K.

    Per-segment arrays are indexed by ``id - 1``. ``bbox`` rows are
    ``(row_min, row_max, col_min, col_max)``. The merge log records the
    working ids used during merging (1 + flat index of the segment's lowest
    pixel), survivor first.
    """

    segment_ids: np.ndarray
    n: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray
    perimeter: np.ndarray
    bbox: np.ndarray
    merge_a: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    merge_b: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    merge_cost: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_segments(self) -> int:
        return int(self.n.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.segment_ids.shape

    @property
    def merge_log(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(f)) for a, b, f in zip(self.merge_a, self.merge_b, self.merge_cost)]


def _pixel_values(raster: MultibandRaster) -> np.ndarray:
    return raster.data.reshape(raster.n_bands, -1).T.astype(np.float64)


def segment(raster: MultibandRaster, params: SegParams = DEFAULT_PARAMS) -> Segmentation:
    """Bottom-up region merging with the Baatz-Schaepe fusion criterion.

    A pair merges when each is the other's cheapest 4-neighbor and the
    fusion cost is below ``scale**2``.
    """
    h, w = raster.height, raster.width
    weights = params.weights_for(raster.n_bands)
    roots, n, s, sq, perim, bbox, la, lb, lf = region_merge(
        np.ascontiguousarray(_pixel_values(raster)), h, w, weights,
        float(params.scale) ** 2, float(params.shape_weight), float(params.compactness_weight),
    )
    uniq, dense = np.unique(roots, return_inverse=True)
    return Segmentation(
        segment_ids=(dense + 1).reshape(h, w).astype(np.int64),
        n=n[uniq].copy(),
        sums=s[uniq].copy(),
        sumsq=sq[uniq].copy(),
        perimeter=perim[uniq].copy(),
        bbox=bbox[uniq].copy(),
        merge_a=la + 1,
        merge_b=lb + 1,
        merge_cost=lf,
    )


def segmentation_from_ids(raster: MultibandRaster, ids) -> Segmentation:
    """Rebuild per-segment statistics for an existing id plane (no merge log).

    Ids are relabeled densely 1..K in order of first appearance by value.
    """
    ids = np.asarray(ids)
    h, w = raster.height, raster.width
    if ids.shape != (h, w):
        raise ValueError(f"id plane {ids.shape} does not match raster {(h, w)}")
    uniq, dense = np.unique(ids.ravel(), return_inverse=True)
    k = uniq.size
    vals = _pixel_values(raster)
    n = np.bincount(dense, minlength=k)
    sums = np.stack([np.bincount(dense, weights=vals[:, b], minlength=k) for b in range(vals.shape[1])], axis=1)
    sumsq = np.stack([np.bincount(dense, weights=vals[:, b] ** 2, minlength=k)
                      for b in range(vals.shape[1])], axis=1)
    plane = dense.reshape(h, w)
    pad = np.pad(plane, 1, constant_values=-1)
    core = pad[1:-1, 1:-1]
    perim = np.zeros(k, dtype=np.int64)
    for nb in (pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]):
        perim += np.bincount(core[nb != core], minlength=k)
    rr, cc = np.divmod(np.arange(h * w), w)
    bbox = np.stack([np.full(k, h), np.full(k, -1), np.full(k, w), np.full(k, -1)], axis=1).astype(np.int64)
    np.minimum.at(bbox[:, 0], dense, rr)
    np.maximum.at(bbox[:, 1], dense, rr)
    np.minimum.at(bbox[:, 2], dense, cc)
    np.maximum.at(bbox[:, 3], dense, cc)
    return Segmentation(plane.astype(np.int64) + 1, n.astype(np.int64), sums, sumsq, perim, bbox)


def write_segments(seg: Segmentation, path, pixel_size_m: float = 1.0) -> None:
    """Store the segment id plane as a single ``Label`` band."""
    plane = seg.segment_ids.astype(np.float32)[None]
    write_raster(MultibandRaster(plane, (BandRole.LABEL,), pixel_size_m), path)


def read_segment_ids(path) -> np.ndarray:
    meta, data = _read(path)
    if meta["roles"] != (BandRole.LABEL,):
        raise RasterFormatError(f"{path}: expected a single Label band of segment ids")
    ids = data[0]
    if not np.all(ids == np.round(ids)) or ids.min() < 1:
        raise RasterFormatError(f"{path}: segment ids must be positive integers")
    return ids.astype(np.int64)


def read_segments(path, raster: MultibandRaster) -> Segmentation:
    """Segment id plane from disk with statistics rebuilt against ``raster``."""
    return segmentation_from_ids(raster, read_segment_ids(path))


def segment_std(raster: MultibandRaster, seg: Segmentation, weights: np.ndarray) -> np.ndarray:
    """Band-weight-averaged population standard deviation of each segment."""
    n = seg.n.astype(np.float64)[:, None]
    mean = seg.sums / n
    var = np.maximum(seg.sumsq / n - mean * mean, 0.0)
    return np.sqrt(var) @ weights / weights.sum()


@dataclass(frozen=True)
class EspEntry:
    scale: float
    mean_local_variance: float
    rate_of_change: float
    n_segments: int


def esp_scan(raster: MultibandRaster, scales, params: SegParams = DEFAULT_PARAMS,
             max_workers: int | None = None) -> list[EspEntry]:
    """Local variance and its rate of change across a list of scales.

    ``params.scale`` is ignored; each entry of ``scales`` replaces it.
    """
    scales = [float(s) for s in scales]
    if len(scales) < 2:
        raise ValueError("esp_scan needs at least two scales")
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    if any(b < a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be ascending")
    weights = params.weights_for(raster.n_bands)

    def lv(scale):
        p = SegParams(scale, params.shape_weight, params.compactness_weight, params.band_weights)
        seg = segment(raster, p)
        return float(segment_std(raster, seg, weights).mean()), seg.n_segments

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(lv, scales))
    out = []
    prev = None
    for scale, (value, k) in zip(scales, results):
        if prev is None or prev == 0:
            roc = 0.0
        else:
            roc = 100.0 * (value - prev) / prev
        out.append(EspEntry(scale, value, roc, k))
        prev = value
    return out


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    violation: str | None = None

    def __bool__(self):
        return self.ok


def _rel_close(a, b, rtol):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) <= rtol * np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


def audit_segmentation(raster: MultibandRaster, seg: Segmentation, params: SegParams,
                       rtol: float = 1e-6) -> AuditReport:
    """Check a segmentation against from-scratch recomputation.

    Checks run in order: partition, 4-connectivity, statistics, merge-cost
    bound. The first violation found is reported.
    """
    ids = np.asarray(seg.segment_ids)
    h, w = raster.height, raster.width
    if ids.shape != (h, w):
        return AuditReport(False, f"partition: id plane {ids.shape} does not match raster {(h, w)}")
    k = seg.n_segments
    present = np.unique(ids)
    if present[0] < 1 or present[-1] != k or present.size != k:
        return AuditReport(False, f"partition: ids are not dense 1..{k}")

    flat = ids.ravel()
    idx = np.arange(h * w).reshape(h, w)
    same_h = ids[:, 1:] == ids[:, :-1]
    same_v = ids[1:, :] == ids[:-1, :]
    rows = np.concatenate([idx[:, 1:][same_h], idx[1:, :][same_v]])
    cols = np.concatenate([idx[:, :-1][same_h], idx[:-1, :][same_v]])
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(h * w, h * w))
    n_comp, comp = connected_components(graph, directed=False)
    if n_comp != k:
        counts = np.bincount(flat, minlength=k + 1)
        comp_per_seg = np.zeros(k + 1, dtype=np.int64)
        first = np.unique(comp, return_index=True)[1]
        np.add.at(comp_per_seg, flat[first], 1)
        bad = int(np.nonzero(comp_per_seg > 1)[0][0])
        return AuditReport(False, f"connectivity: segment {bad} ({counts[bad]} px) is not 4-connected")

    lab = flat - 1
    n = np.bincount(lab, minlength=k)
    if not np.array_equal(n, seg.n):
        bad = int(np.nonzero(n != seg.n)[0][0]) + 1
        return AuditReport(False, f"stats: pixel count of segment {bad} is wrong")
    vals = _pixel_values(raster)
    for b in range(vals.shape[1]):
        s = np.bincount(lab, weights=vals[:, b], minlength=k)
        sq = np.bincount(lab, weights=vals[:, b] ** 2, minlength=k)
        for name, ref, got in (("sum", s, seg.sums[:, b]), ("sum of squares", sq, seg.sumsq[:, b])):
            ok = _rel_close(ref, got, rtol)
            if not ok.all():
                bad = int(np.nonzero(~ok)[0][0]) + 1
                return AuditReport(False, f"stats: band {b} {name} of segment {bad} is wrong")
    perim = np.zeros(k, dtype=np.int64)
    pad = np.pad(ids, 1, constant_values=0)
    core = pad[1:-1, 1:-1]
    for nb in (pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]):
        np.add.at(perim, (core[nb != core] - 1), 1)
    if not np.array_equal(perim, seg.perimeter):
        bad = int(np.nonzero(perim != seg.perimeter)[0][0]) + 1
        return AuditReport(False, f"stats: perimeter of segment {bad} is wrong")
    rr, cc = np.divmod(np.arange(h * w), w)
    bbox = np.stack([
        np.full(k, h), np.full(k, -1), np.full(k, w), np.full(k, -1),
    ], axis=1).astype(np.int64)
    np.minimum.at(bbox[:, 0], lab, rr)
    np.maximum.at(bbox[:, 1], lab, rr)
    np.minimum.at(bbox[:, 2], lab, cc)
    np.maximum.at(bbox[:, 3], lab, cc)
    if not np.array_equal(bbox, seg.bbox):
        bad = int(np.nonzero((bbox != seg.bbox).any(axis=1))[0][0]) + 1
        return AuditReport(False, f"stats: bounding box of segment {bad} is wrong")

    bound = float(params.scale) ** 2
    over = np.nonzero(~(np.asarray(seg.merge_cost) < bound))[0]
    if over.size:
        i = int(over[0])
        return AuditReport(
            False,
            f"merge log: entry {i} ({seg.merge_a[i]}, {seg.merge_b[i]}) has cost "
            f"{seg.merge_cost[i]!r} >= scale^2 = {bound!r}",
        )
    if len(seg.merge_cost) != h * w - k:
        return AuditReport(False, f"merge log: {len(seg.merge_cost)} merges but {h * w} px -> {k} segments")
    return AuditReport(True)


def write_merge_log(seg: Segmentation, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["a", "b", "cost"])
        for a, b, f in seg.merge_log:
            out.writerow([a, b, repr(f)])
