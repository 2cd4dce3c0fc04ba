"""Per-object spectral and geometric features."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from obia.raster import MultibandRaster
from obia.segmentation import Segmentation

BANDS = ("blue", "green", "red", "nir")
# floor for the minor-axis variance; also the variance of a unit pixel along one axis
PIXEL_VARIANCE = 1.0 / 12.0


def _normalized_difference(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    den = x + y
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0, 0.0, (x - y) / np.where(den == 0, 1.0, den))
    out = np.clip(out, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def ndvi(mean_nir, mean_red):
    """(NIR - Red) / (NIR + Red); 0 when both are 0."""
    return _normalized_difference(mean_nir, mean_red)


def ndwi(mean_green, mean_nir):
    """(Green - NIR) / (Green + NIR); 0 when both are 0."""
    return _normalized_difference(mean_green, mean_nir)


@dataclass(frozen=True)
class ObjectRecord:
    segment_id: int
    area_px: int
    perimeter_px: int
    mean_blue: float
    mean_green: float
    mean_red: float
    mean_nir: float
    std_blue: float
    std_green: float
    std_red: float
    std_nir: float
    brightness: float
    ndvi: float
    ndwi: float
    length_width: float
    shape_index: float
    asymmetry: float
    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def vector(self, names=None) -> np.ndarray:
        names = NUMERIC_FEATURES if names is None else names
        return np.array([getattr(self, n) for n in names], dtype=np.float64)


FIELD_NAMES = tuple(f.name for f in fields(ObjectRecord))
# features usable by rules and classifiers
NUMERIC_FEATURES = FIELD_NAMES[1:17]


def axes_from_moments(var_r, var_c, cov_rc):
    """Eigenvalues (major, minor) of the 2x2 coordinate covariance."""
    half_tr = 0.5 * (var_r + var_c)
    disc = np.sqrt((0.5 * (var_r - var_c)) ** 2 + cov_rc ** 2)
    return half_tr + disc, np.maximum(half_tr - disc, 0.0)


def shape_descriptors(lam1, lam2):
    """length/width and asymmetry from the covariance eigenvalues."""
    lam1 = np.asarray(lam1, dtype=np.float64)
    lam2 = np.asarray(lam2, dtype=np.float64)
    lw = np.sqrt(lam1 / np.maximum(lam2, PIXEL_VARIANCE))
    with np.errstate(divide="ignore", invalid="ignore"):
        asym = np.where(lam1 > 0, 1.0 - np.sqrt(lam2 / np.where(lam1 > 0, lam1, 1.0)), 0.0)
    return np.maximum(lw, 1.0), np.clip(asym, 0.0, 1.0)


def feature_table(raster: MultibandRaster, seg: Segmentation) -> dict[str, np.ndarray]:
    """Column-wise features for every segment, rows ordered by segment id."""
    ids = np.asarray(seg.segment_ids)
    if ids.shape != (raster.height, raster.width):
        raise ValueError(
            f"segmentation {ids.shape[1]}x{ids.shape[0]} does not match raster "
            f"{raster.width}x{raster.height}"
        )
    h, w = ids.shape
    k = int(ids.max())
    lab = ids.ravel() - 1
    spectra = raster.spectral().reshape(4, -1)
    area = np.bincount(lab, minlength=k)
    fa = area.astype(np.float64)

    cols: dict[str, np.ndarray] = {"segment_id": np.arange(1, k + 1), "area_px": area}
    pad = np.pad(ids, 1, constant_values=0)
    core = pad[1:-1, 1:-1]
    perim = np.zeros(k, dtype=np.int64)
    for nb in (pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]):
        perim += np.bincount(lab[(nb != core).ravel()], minlength=k)
    cols["perimeter_px"] = perim

    means = []
    for name, v in zip(BANDS, spectra):
        m = np.bincount(lab, weights=v, minlength=k) / fa
        means.append(m)
        cols[f"mean_{name}"] = m
    for name, v, m in zip(BANDS, spectra, means):
        dev = v - m[lab]
        cols[f"std_{name}"] = np.sqrt(np.bincount(lab, weights=dev * dev, minlength=k) / fa)
    cols["brightness"] = sum(means) / 4.0
    cols["ndvi"] = ndvi(cols["mean_nir"], cols["mean_red"])
    cols["ndwi"] = ndwi(cols["mean_green"], cols["mean_nir"])

    rr, cc = np.divmod(np.arange(h * w, dtype=np.float64), w)
    cr = np.bincount(lab, weights=rr, minlength=k) / fa
    ccn = np.bincount(lab, weights=cc, minlength=k) / fa
    dr = rr - cr[lab]
    dc = cc - ccn[lab]
    # moments of the pixel squares, not their centers: add a unit pixel's variance
    var_r = np.bincount(lab, weights=dr * dr, minlength=k) / fa + PIXEL_VARIANCE
    var_c = np.bincount(lab, weights=dc * dc, minlength=k) / fa + PIXEL_VARIANCE
    cov = np.bincount(lab, weights=dr * dc, minlength=k) / fa
    lam1, lam2 = axes_from_moments(var_r, var_c, cov)
    cols["length_width"], cols["asymmetry"] = shape_descriptors(lam1, lam2)
    cols["shape_index"] = perim / (4.0 * np.sqrt(fa))

    r_i, c_i = np.divmod(np.arange(h * w), w)
    bb = np.empty((k, 4), dtype=np.int64)
    bb[:, 0], bb[:, 2] = h, w
    bb[:, 1], bb[:, 3] = -1, -1
    np.minimum.at(bb[:, 0], lab, r_i)
    np.maximum.at(bb[:, 1], lab, r_i)
    np.minimum.at(bb[:, 2], lab, c_i)
    np.maximum.at(bb[:, 3], lab, c_i)
    cols["row_min"], cols["row_max"], cols["col_min"], cols["col_max"] = bb.T
    return {name: cols[name] for name in FIELD_NAMES}


def compute_features(raster: MultibandRaster, seg: Segmentation) -> list[ObjectRecord]:
    table = feature_table(raster, seg)
    ints = {"segment_id", "area_px", "perimeter_px", "row_min", "row_max", "col_min", "col_max"}
    columns = [table[n].tolist() for n in FIELD_NAMES]
    out = []
    for row in zip(*columns):
        out.append(ObjectRecord(*(int(v) if n in ints else float(v) for n, v in zip(FIELD_NAMES, row))))
    return out


def write_features_csv(records: list[ObjectRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(FIELD_NAMES)
        for rec in records:
            out.writerow([repr(v) if isinstance(v, float) else v for v in astuple(rec)])


def read_features_csv(path) -> list[ObjectRecord]:
    ints = {"segment_id", "area_px", "perimeter_px", "row_min", "row_max", "col_min", "col_max"}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ObjectRecord(**{k: int(r[k]) if k in ints else float(r[k]) for k in FIELD_NAMES}) for r in rows]
