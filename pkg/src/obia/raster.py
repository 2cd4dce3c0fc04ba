"""Raster data model, flat-binary BSQ I/O and PNG class-map rendering."""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class RasterFormatError(ValueError):
    """Raised for malformed headers or payloads."""


class BandRole(str, enum.Enum):
    BLUE = "Blue"
    GREEN = "Green"
    RED = "Red"
    NIR = "NIR"
    # Carrier role for integer planes (class ids, segment ids).
    LABEL = "Label"


SPECTRAL_ROLES = (BandRole.BLUE, BandRole.GREEN, BandRole.RED, BandRole.NIR)

UNCLASSIFIED = 0
CLASS_NAMES = ("Vegetation", "Water", "Road", "Bare Land", "Building")
CLASS_IDS = {name: i + 1 for i, name in enumerate(CLASS_NAMES)}
DEFAULT_LEGEND = {i + 1: name for i, name in enumerate(CLASS_NAMES)}
DEFAULT_PALETTE = {
    1: (34, 139, 34),
    2: (30, 90, 220),
    3: (128, 128, 128),
    4: (210, 180, 110),
    5: (220, 40, 40),
}


@dataclass(frozen=True, eq=False)
class MultibandRaster:
    """Band-sequential float32 image, shape ``(bands, height, width)``."""

    data: np.ndarray
    roles: tuple[BandRole, ...]
    pixel_size_m: float = 1.0
    nodata: float | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ValueError(f"expected (bands, height, width) array, got shape {data.shape}")
        nb, h, w = data.shape
        if h <= 0 or w <= 0 or nb <= 0:
            raise ValueError(f"raster dimensions must be positive, got {w}x{h} with {nb} bands")
        roles = tuple(BandRole(r) for r in self.roles)
        if len(roles) != nb:
            raise ValueError(f"{nb} band planes but {len(roles)} roles")
        if len(set(roles)) != len(roles):
            raise ValueError(f"duplicate band roles: {[r.value for r in roles]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("pixel values must be finite")
        if np.any(data < 0):
            raise ValueError("pixel values must be >= 0")
        if not self.pixel_size_m > 0:
            raise ValueError("pixel_size_m must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "pixel_size_m", float(self.pixel_size_m))

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    def band(self, role: BandRole | str) -> np.ndarray:
        role = BandRole(role)
        try:
            return self.data[self.roles.index(role)]
        except ValueError:
            raise KeyError(f"raster has no {role.value} band") from None

    def spectral(self) -> np.ndarray:
        """Blue, Green, Red, NIR planes stacked in that order (float64)."""
        missing = [r.value for r in SPECTRAL_ROLES if r not in self.roles]
        if missing:
            raise KeyError(f"raster is missing required bands: {', '.join(missing)}")
        return np.stack([self.band(r) for r in SPECTRAL_ROLES]).astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, MultibandRaster):
            return NotImplemented
        return (
            self.roles == other.roles
            and self.pixel_size_m == other.pixel_size_m
            and self.nodata == other.nodata
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True, eq=False)
class LabelRaster:
    labels: np.ndarray
    legend: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_LEGEND))

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError(f"labels must be a non-empty 2-D plane, got shape {labels.shape}")
        if labels.dtype.kind == "f":
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if np.any(labels < 0):
            raise ValueError("labels must be non-negative")
        legend = {int(k): str(v) for k, v in self.legend.items()}
        missing = sorted(set(np.unique(labels).tolist()) - {UNCLASSIFIED} - set(legend))
        if missing:
            raise ValueError(f"labels {missing} are not in the legend")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "legend", legend)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def counts(self) -> dict[int, int]:
        ids, n = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, n)}

    def __eq__(self, other):
        if not isinstance(other, LabelRaster):
            return NotImplemented
        return self.legend == other.legend and np.array_equal(self.labels, other.labels)


# ---------------------------------------------------------------- file format

_REQUIRED_KEYS = ("width", "height", "bands", "dtype", "interleave", "pixel_size_m", "byteorder")
_OPTIONAL_KEYS = ("nodata", "legend")


def _stem(path) -> Path:
    path = Path(path)
    if path.suffix in (".hdr", ".bin"):
        path = path.with_suffix("")
    return path


def raster_paths(path) -> tuple[Path, Path]:
    """Header and payload paths for a raster named by stem, .hdr or .bin path."""
    stem = _stem(path)
    return stem.with_name(stem.name + ".hdr"), stem.with_name(stem.name + ".bin")


def _format_float(x: float) -> str:
    return repr(float(x))


def _header_text(raster: MultibandRaster, legend: dict[int, str] | None) -> str:
    lines = [
        f"width={raster.width}",
        f"height={raster.height}",
        "bands=" + ",".join(r.value for r in raster.roles),
        "dtype=float32",
        "interleave=BSQ",
        f"pixel_size_m={_format_float(raster.pixel_size_m)}",
        "byteorder=LE",
    ]
    if raster.nodata is not None:
        lines.append(f"nodata={_format_float(raster.nodata)}")
    if legend:
        lines.append("legend=" + ";".join(f"{k}:{legend[k]}" for k in sorted(legend)))
    return "\n".join(lines) + "\n"


def _parse_header(text: str) -> dict:
    fields: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if "=" not in line:
            raise RasterFormatError(f"header line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _REQUIRED_KEYS and key not in _OPTIONAL_KEYS:
            raise RasterFormatError(f"header line {lineno}: unknown field {key!r}")
        if key in fields:
            raise RasterFormatError(f"header line {lineno}: duplicate field {key!r}")
        fields[key] = (value, lineno)
    for key in _REQUIRED_KEYS:
        if key not in fields:
            raise RasterFormatError(f"header: missing required field {key!r}")

    def bad(key, why):
        value, lineno = fields[key]
        return RasterFormatError(f"header line {lineno}: field {key!r}: {why} (got {value!r})")

    out = {}
    for key in ("width", "height"):
        try:
            out[key] = int(fields[key][0])
        except ValueError:
            raise bad(key, "not an integer") from None
        if out[key] <= 0:
            raise bad(key, "must be positive")
    roles = []
    for name in fields["bands"][0].split(","):
        try:
            roles.append(BandRole(name.strip()))
        except ValueError:
            raise bad("bands", f"unknown band role {name.strip()!r}") from None
    out["roles"] = tuple(roles)
    if fields["dtype"][0] != "float32":
        raise bad("dtype", "only float32 is supported")
    if fields["interleave"][0] != "BSQ":
        raise bad("interleave", "only BSQ is supported")
    if fields["byteorder"][0] != "LE":
        raise bad("byteorder", "only LE is supported")
    try:
        out["pixel_size_m"] = float(fields["pixel_size_m"][0])
    except ValueError:
        raise bad("pixel_size_m", "not a number") from None
    out["nodata"] = None
    if "nodata" in fields:
        try:
            out["nodata"] = float(fields["nodata"][0])
        except ValueError:
            raise bad("nodata", "not a number") from None
    out["legend"] = None
    if "legend" in fields:
        legend = {}
        for item in filter(None, fields["legend"][0].split(";")):
            k, sep, name = item.partition(":")
            if not sep:
                raise bad("legend", f"entry {item!r} is not id:name")
            try:
                legend[int(k)] = name
            except ValueError:
                raise bad("legend", f"class id {k!r} is not an integer") from None
        out["legend"] = legend
    return out


def _write(raster: MultibandRaster, path, legend=None) -> None:
    hdr, binp = raster_paths(path)
    payload = raster.data.astype("<f4", copy=False).tobytes(order="C")
    try:
        hdr.write_text(_header_text(raster, legend), encoding="utf-8")
        binp.write_bytes(payload)
    except OSError as exc:
        raise OSError(f"cannot write raster to {hdr.parent}: {exc}") from exc


def write_raster(raster: MultibandRaster, path) -> None:
    """Write ``<stem>.hdr`` and ``<stem>.bin`` (little-endian float32, BSQ)."""
    if not isinstance(raster, MultibandRaster):
        raise TypeError("write_raster expects a MultibandRaster")
    _write(raster, path)


def _read(path):
    hdr, binp = raster_paths(path)
    meta = _parse_header(hdr.read_text(encoding="utf-8"))
    payload = binp.read_bytes()
    nb, h, w = len(meta["roles"]), meta["height"], meta["width"]
    expected = nb * h * w * 4
    if len(payload) != expected:
        raise RasterFormatError(
            f"size mismatch: header declares {nb} band(s) of {w}x{h} float32 "
            f"({expected} bytes) but payload holds {len(payload)} bytes"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(nb, h, w).astype(np.float32)
    return meta, data


def read_raster(path) -> MultibandRaster:
    meta, data = _read(path)
    return MultibandRaster(data, meta["roles"], meta["pixel_size_m"], meta["nodata"])


def write_labels(labels: LabelRaster, path, pixel_size_m: float = 1.0) -> None:
    """Store a class-id plane as a single ``Label`` band with the legend in the header."""
    raster = MultibandRaster(labels.labels.astype(np.float32)[None], (BandRole.LABEL,), pixel_size_m)
    _write(raster, path, legend=labels.legend)


def read_labels(path) -> LabelRaster:
    meta, data = _read(path)
    if meta["roles"] != (BandRole.LABEL,):
        raise RasterFormatError(f"{path}: expected a single Label band")
    legend = meta["legend"] if meta["legend"] is not None else {}
    return LabelRaster(data[0], legend)


# ---------------------------------------------------------------- rendering


def render_class_map(labels: LabelRaster, palette: dict[int, tuple[int, int, int]] | None = None,
                     background: tuple[int, int, int] = (0, 0, 0)) -> bytes:
    """Encode a class map as an 8-bit RGB PNG, one image pixel per cell."""
    palette = DEFAULT_PALETTE if palette is None else palette
    present = set(np.unique(labels.labels).tolist()) - {UNCLASSIFIED}
    missing = sorted(present - set(palette))
    if missing:
        raise KeyError(f"no palette entry for labels {missing}")
    lut = np.zeros((int(labels.labels.max()) + 1, 3), dtype=np.uint8)
    lut[:] = background
    for k in present:
        lut[k] = palette[k]
    rgb = lut[labels.labels]
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return buf.getvalue()
