"""Deterministic synthetic urban scenes with ground truth.

Class spectra are chosen so that each class's mean spectrum satisfies the
builtin rule-set thresholds; geometry is built from simple primitives:
rectangular building lots (some rotated), straight road strips, and
disc-cluster blobs for water, vegetation and bare land.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from obia.raster import CLASS_IDS, DEFAULT_LEGEND, LabelRaster, MultibandRaster, SPECTRAL_ROLES

# Blue, Green, Red, NIR on the 0-10000 scale
DEFAULT_SIGNATURES = {
    "Vegetation": (850.0, 1050.0, 850.0, 2600.0),
    "Water": (1000.0, 1050.0, 800.0, 650.0),
    "Road": (1180.0, 1230.0, 1270.0, 1390.0),
    "Bare Land": (1200.0, 1450.0, 1650.0, 1950.0),
}
# roof types: name -> (spectrum, share of building lots)
DEFAULT_ROOFS = {
    "gray": ((1050.0, 1100.0, 1150.0, 1300.0), 0.70),
    "blue": ((1500.0, 1350.0, 1000.0, 1700.0), 0.15),
    "bright": ((1650.0, 1700.0, 1750.0, 1400.0), 0.15),
}
DEFAULT_FRACTIONS = {
    "Vegetation": 0.30,
    "Water": 0.08,
    "Road": 0.10,
    "Bare Land": 0.07,
    "Building": 0.45,
}


@dataclass(frozen=True)
class SceneSpec:
    width: int = 512
    height: int = 512
    fractions: dict = field(default_factory=lambda: dict(DEFAULT_FRACTIONS))
    signatures: dict = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))
    roofs: dict = field(default_factory=lambda: dict(DEFAULT_ROOFS))
    noise: float = 120.0          # per-pixel, per-band Gaussian std
    object_jitter: float = 35.0   # per-object brightness offset std
    jitter_clip: float = 80.0
    lot_size: tuple[int, int] = (18, 56)
    rotated_buildings: int = 12
    road_width: tuple[int, int] = (7, 12)
    road_max_angle_deg: float = 8.0
    water_blobs: int = 3
    vegetation_scale: tuple[int, int] = (12, 36)
    bare_scale: tuple[int, int] = (12, 22)
    pixel_size_m: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        unknown = set(self.fractions) - set(CLASS_IDS)
        if unknown:
            raise ValueError(f"unknown classes in fractions: {sorted(unknown)}")
        total = sum(self.fractions.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"class fractions must sum to 1, got {total!r}")
        if any(v < 0 for v in self.fractions.values()):
            raise ValueError("class fractions must be non-negative")
        if self.noise < 0 or self.object_jitter < 0:
            raise ValueError("noise levels must be non-negative")
        lo, hi = self.road_width
        if not 0 < lo <= hi:
            raise ValueError(f"bad road width range {self.road_width}")
        if self.fractions.get("Road", 0) > 0 and hi >= min(self.width, self.height):
            raise ValueError(f"road width {hi} exceeds the scene dimension")
        if not 0 < self.lot_size[0] <= self.lot_size[1]:
            raise ValueError(f"bad lot size range {self.lot_size}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def fraction(self, name: str) -> float:
        return float(self.fractions.get(name, 0.0))

    def to_dict(self) -> dict:
        """Plain JSON-ready form; ``from_dict`` inverts it exactly."""
        return {
            "width": self.width, "height": self.height,
            "fractions": {k: float(v) for k, v in self.fractions.items()},
            "signatures": {k: [float(x) for x in v] for k, v in self.signatures.items()},
            "roofs": {k: [[float(x) for x in s], float(p)] for k, (s, p) in self.roofs.items()},
            "noise": float(self.noise), "object_jitter": float(self.object_jitter),
            "jitter_clip": float(self.jitter_clip),
            "lot_size": list(self.lot_size), "rotated_buildings": self.rotated_buildings,
            "road_width": list(self.road_width), "road_max_angle_deg": float(self.road_max_angle_deg),
            "water_blobs": self.water_blobs,
            "vegetation_scale": list(self.vegetation_scale), "bare_scale": list(self.bare_scale),
            "pixel_size_m": float(self.pixel_size_m), "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene fields: {sorted(unknown)}")
        for key in ("lot_size", "road_width", "vegetation_scale", "bare_scale"):
            if key in d:
                d[key] = tuple(d[key])
        if "signatures" in d:
            d["signatures"] = {k: tuple(v) for k, v in d["signatures"].items()}
        if "roofs" in d:
            d["roofs"] = {k: (tuple(v[0]), v[1]) for k, v in d["roofs"].items()}
        return cls(**d)


def _disc(mask, cy, cx, r):
    h, w = mask.shape
    y0, y1 = max(0, int(np.floor(cy - r))), min(h, int(np.ceil(cy + r)) + 1)
    x0, x1 = max(0, int(np.floor(cx - r))), min(w, int(np.ceil(cx + r)) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask[y0:y1, x0:x1] |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _ellipse(shape, cy, cx, ry, rx, theta):
    h, w = shape
    rad = max(ry, rx)
    y0, y1 = max(0, int(cy - rad) - 1), min(h, int(cy + rad) + 2)
    x0, x1 = max(0, int(cx - rad) - 1), min(w, int(cx + rad) + 2)
    out = np.zeros(shape, dtype=bool)
    if y0 >= y1 or x0 >= x1:
        return out
    yy, xx = np.mgrid[y0:y1, x0:x1]
    c, s = np.cos(theta), np.sin(theta)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    out[y0:y1, x0:x1] = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    return out


def _rotated_rect(shape, cy, cx, half_len, half_wid, theta):
    h, w = shape
    rad = np.hypot(half_len, half_wid)
    y0, y1 = max(0, int(cy - rad) - 1), min(h, int(cy + rad) + 2)
    x0, x1 = max(0, int(cx - rad) - 1), min(w, int(cx + rad) + 2)
    out = np.zeros(shape, dtype=bool)
    if y0 >= y1 or x0 >= x1:
        return out
    yy, xx = np.mgrid[y0:y1, x0:x1]
    c, s = np.cos(theta), np.sin(theta)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    out[y0:y1, x0:x1] = (np.abs(u) <= half_len) & (np.abs(v) <= half_wid)
    return out


def polyline_strip(shape, vertices, width) -> np.ndarray:
    """Pixels whose center lies within ``width / 2`` of a polyline."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    best = np.full(shape, np.inf)
    pts = np.asarray(vertices, dtype=np.float64)
    for (ya, xa), (yb, xb) in zip(pts[:-1], pts[1:]):
        dy, dx = yb - ya, xb - xa
        t = np.clip(((yy - ya) * dy + (xx - xa) * dx) / (dy * dy + dx * dx), 0.0, 1.0)
        best = np.minimum(best, np.hypot(yy - (ya + t * dy), xx - (xa + t * dx)))
    return best <= width / 2.0


def _blob(rng, shape, area, scale):
    """Cluster of overlapping discs grown by a short random walk."""
    mask = np.zeros(shape, dtype=bool)
    h, w = shape
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    r = float(scale)
    for _ in range(200):
        _disc(mask, cy, cx, r * rng.uniform(0.7, 1.0))
        if mask.sum() >= area:
            break
        ang = rng.uniform(0, 2 * np.pi)
        cy = float(np.clip(cy + 0.8 * r * np.sin(ang), 0, h - 1))
        cx = float(np.clip(cx + 0.8 * r * np.cos(ang), 0, w - 1))
    return mask


def _paint(label, obj, mask, class_id, allowed, next_obj):
    region = mask & allowed
    label[region] = class_id
    obj[region] = next_obj
    return int(region.sum())


def generate_scene(spec: SceneSpec = SceneSpec()) -> tuple[MultibandRaster, LabelRaster]:
    """Spectral raster and ground-truth labels; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    n_px = h * w
    ids = CLASS_IDS
    label = np.full((h, w), ids["Building"], dtype=np.int64)
    obj = np.zeros((h, w), dtype=np.int64)  # object index; spectra are drawn per object
    kinds: list[tuple[str, str]] = []  # per object: (class name, roof type or "")

    # building lots tile the scene, then a few rotated buildings on top
    roof_names = list(spec.roofs)
    roof_p = np.array([spec.roofs[r][1] for r in roof_names], dtype=np.float64)
    roof_p = roof_p / roof_p.sum() if roof_p.sum() > 0 else roof_p
    lo, hi = spec.lot_size
    y = 0
    while y < h:
        lh = int(rng.integers(lo, hi + 1))
        x = 0
        while x < w:
            lw = int(rng.integers(lo, hi + 1))
            obj[y:y + lh, x:x + lw] = len(kinds)
            kinds.append(("Building", roof_names[int(rng.choice(len(roof_names), p=roof_p))] if roof_names else ""))
            x += lw
        y += lh
    for _ in range(spec.rotated_buildings if roof_names else 0):
        m = _rotated_rect((h, w), rng.uniform(0, h), rng.uniform(0, w),
                          rng.uniform(lo / 2, hi / 2), rng.uniform(lo / 2, hi / 2) * 0.6,
                          rng.uniform(0, np.pi))
        obj[m] = len(kinds)
        kinds.append(("Building", roof_names[int(rng.choice(len(roof_names), p=roof_p))]))

    free = np.ones((h, w), dtype=bool)  # pixels still available to non-building classes

    # roads: near-parallel straight strips so that no two cross
    target = spec.fraction("Road") * n_px
    if target > 0:
        wlo, whi = spec.road_width
        horizontal = w >= h
        length = w if horizontal else h
        across = h if horizontal else w
        n_roads = max(1, int(round(target / (length * (wlo + whi) / 2.0))))
        base = np.deg2rad(rng.uniform(-spec.road_max_angle_deg, spec.road_max_angle_deg))
        spacing = across / n_roads
        painted = 0
        for i in range(n_roads):
            if painted >= target:
                break
            width = float(rng.integers(wlo, whi + 1))
            theta = base + np.deg2rad(rng.uniform(-1.0, 1.0))
            mid = (i + 0.5) * spacing + rng.uniform(-0.15, 0.15) * spacing
            drift = np.tan(theta) * length / 2.0
            if horizontal:
                verts = [(mid - drift, -1.0), (mid + drift, w + 1.0)]
            else:
                verts = [(-1.0, mid - drift), (h + 1.0, mid + drift)]
            m = polyline_strip((h, w), verts, width)
            painted += _paint(label, obj, m, ids["Road"], free, len(kinds))
            kinds.append(("Road", ""))
            free &= ~m

    def blobs(name, scale_range, count=None, compact=False):
        target = spec.fraction(name) * n_px
        painted = 0
        tries = 0
        while painted < target and tries < 10000:
            tries += 1
            remaining = target - painted
            if count:
                area = min(remaining, target / count * 1.05)
                scale = np.sqrt(area / np.pi) / 2.0
                m = _blob(rng, (h, w), area, max(scale, 4.0))
            elif compact:
                r = rng.uniform(*scale_range)
                m = _ellipse((h, w), rng.uniform(0, h), rng.uniform(0, w),
                             r, r * rng.uniform(1.0, 1.4), rng.uniform(0, np.pi))
                # keep bare patches whole and apart so their shapes stay compact
                grown = np.zeros_like(m)
                for dy, dx in ((-2, 0), (2, 0), (0, -2), (0, 2)):
                    grown |= np.roll(m, (dy, dx), axis=(0, 1))
                if (m & ~free).any() or (grown & (label != ids["Building"])).any():
                    continue
            else:
                scale = rng.uniform(*scale_range)
                m = _blob(rng, (h, w), np.pi * scale ** 2 * rng.uniform(1.0, 3.0), scale)
            n = _paint(label, obj, m, ids[name], free, len(kinds))
            if n:
                kinds.append((name, ""))
                painted += n
                free[m] = False

    blobs("Water", None, count=max(1, spec.water_blobs))
    blobs("Bare Land", spec.bare_scale, compact=True)
    blobs("Vegetation", spec.vegetation_scale)

    if spec.fraction("Building") == 0:
        rest = label == ids["Building"]
        if rest.any():
            fill = max((n for n in spec.fractions if n != "Building"), key=spec.fraction)
            label[rest] = ids[fill]
            obj[rest] = len(kinds)
            kinds.append((fill, ""))

    # spectra: class or roof mean + per-object brightness offset + per-pixel noise
    n_obj = len(kinds)
    means = np.zeros((n_obj, 4))
    for i, (cls, roof) in enumerate(kinds):
        means[i] = spec.roofs[roof][0] if cls == "Building" and roof else spec.signatures[cls]
    if spec.object_jitter > 0:
        offsets = np.clip(rng.normal(0.0, spec.object_jitter, n_obj), -spec.jitter_clip, spec.jitter_clip)
        means = means + offsets[:, None]
    data = means[obj].transpose(2, 0, 1)
    if spec.noise > 0:
        data = data + rng.normal(0.0, spec.noise, data.shape)
    data = np.maximum(data, 0.0).astype(np.float32)
    raster = MultibandRaster(data, SPECTRAL_ROLES, spec.pixel_size_m)
    return raster, LabelRaster(label, dict(DEFAULT_LEGEND))


def checksum(raster: MultibandRaster) -> str:
    return hashlib.sha256(raster.data.tobytes()).hexdigest()
