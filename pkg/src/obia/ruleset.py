"""Ordered threshold / fuzzy rule sets over object records.

Rule sets are stored as canonical JSON (see ``ruleset.schema.json``).
"""
from __future__ import annotations

import csv
import json
import operator
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from obia.features import NUMERIC_FEATURES, ObjectRecord
from obia.raster import LabelRaster, UNCLASSIFIED
from obia.segmentation import Segmentation

UNCLASSIFIED_NAME = "Unclassified"
FORMAT = "obia-ruleset/1"

# Table-style spellings accepted on input; serialization always uses field names.
FEATURE_ALIASES = {
    "ndvi": "ndvi",
    "ndwi": "ndwi",
    "mean blue": "mean_blue",
    "mean green": "mean_green",
    "mean red": "mean_red",
    "mean nir": "mean_nir",
    "nir": "mean_nir",
    "brightness": "brightness",
    "asymmetry": "asymmetry",
    "area": "area_px",
    "length/width": "length_width",
    "shape index": "shape_index",
}

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}
_OP_CANON = {"≤": "<=", "≥": ">="}


class RuleSetError(ValueError):
    """Syntax or semantic problem in a rule-set document."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def resolve_feature(name: str) -> str:
    if name in NUMERIC_FEATURES:
        return name
    alias = FEATURE_ALIASES.get(name.strip().lower())
    if alias is None:
        raise KeyError(name)
    return alias


@dataclass(frozen=True)
class MembershipFunction:
    """Linear ramp between ``a`` and ``b``: rising for ramp_up, falling for ramp_down."""

    direction: str
    a: float
    b: float

    def __post_init__(self):
        if self.direction not in ("ramp_up", "ramp_down"):
            raise ValueError(f"unknown membership direction {self.direction!r}")
        if not self.a < self.b:
            raise ValueError(f"membership interval needs a < b, got a ≥ b ({self.a}, {self.b})")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        up = np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        mu = up if self.direction == "ramp_up" else 1.0 - up
        return float(mu) if mu.ndim == 0 else mu


@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str | None = None
    threshold: float | None = None
    membership: MembershipFunction | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature", resolve_feature(self.feature))
        if (self.membership is None) == (self.op is None):
            raise ValueError("a predicate is either crisp (op + threshold) or fuzzy (membership)")
        if self.op is not None:
            op = _OP_CANON.get(self.op, self.op)
            if op not in _OPS:
                raise ValueError(f"unknown comparator {self.op!r}")
            if self.threshold is None:
                raise ValueError("crisp predicate needs a threshold")
            object.__setattr__(self, "op", op)
            object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def is_fuzzy(self) -> bool:
        return self.membership is not None

    def holds(self, values):
        return _OPS[self.op](np.asarray(values, dtype=np.float64), self.threshold)

    def to_dict(self) -> dict:
        if self.is_fuzzy:
            m = self.membership
            return {"feature": self.feature, "membership": {"direction": m.direction, "a": m.a, "b": m.b}}
        return {"feature": self.feature, "op": self.op, "threshold": self.threshold}


@dataclass(frozen=True)
class Stage:
    target: str
    predicates: tuple[Predicate, ...] = ()
    source: str = UNCLASSIFIED_NAME
    alpha: float = 0.5
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    def evaluate(self, table: Mapping[str, np.ndarray], n: int) -> tuple[np.ndarray, np.ndarray]:
        """(fires, fuzzy score) for every row of a feature table."""
        crisp = np.ones(n, dtype=bool)
        score = np.ones(n)
        for p in self.predicates:
            values = table[p.feature]
            if p.is_fuzzy:
                score = np.minimum(score, p.membership(values))
            else:
                crisp &= p.holds(values)
        return crisp & (score >= self.alpha), score

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "target": self.target,
            "alpha": self.alpha,
            "predicates": [p.to_dict() for p in self.predicates],
        }


@dataclass(frozen=True)
class RuleSet:
    stages: tuple[Stage, ...]
    final_class: str
    classes: tuple[str, ...]
    fold: Mapping[str, str] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "fold", dict(self.fold))
        _check_semantics(self.to_dict())

    def __hash__(self):
        return hash(to_text(self))

    @property
    def labels(self) -> tuple[str, ...]:
        """Every label a stage may assign or examine."""
        return (UNCLASSIFIED_NAME, *self.classes, *sorted(self.fold))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "name": self.name,
            "classes": list(self.classes),
            "fold": dict(self.fold),
            "final_class": self.final_class,
            "stages": [s.to_dict() for s in self.stages],
        }


def to_text(rules: RuleSet) -> str:
    """Canonical serialization: sorted keys, two-space indent, repr floats."""
    return json.dumps(rules.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("obia").joinpath("ruleset.schema.json").read_text(encoding="utf-8"))


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _check_semantics(doc: dict) -> None:
    known = {UNCLASSIFIED_NAME, *doc["classes"], *doc.get("fold", {})}
    for inter, final in doc.get("fold", {}).items():
        if final not in doc["classes"]:
            raise RuleSetError(f"fold target {final!r} is not a declared class", f"fold.{inter}")
        if inter in doc["classes"]:
            raise RuleSetError(f"intermediate class {inter!r} is also a final class", f"fold.{inter}")
    if doc["final_class"] not in doc["classes"]:
        raise RuleSetError(f"final_class {doc['final_class']!r} is not a declared class", "final_class")
    for i, st in enumerate(doc["stages"]):
        loc = f"stages[{i}]"
        for key in ("source", "target"):
            name = st.get(key, UNCLASSIFIED_NAME)
            if name not in known:
                raise RuleSetError(f"undeclared class {name!r}", f"{loc}.{key}")
        alpha = st.get("alpha", 0.5)
        if not 0.0 < alpha <= 1.0:
            raise RuleSetError(f"alpha must be in (0, 1], got {alpha}", f"{loc}.alpha")
        for j, p in enumerate(st["predicates"]):
            ploc = f"{loc}.predicates[{j}]"
            try:
                resolve_feature(p["feature"])
            except KeyError:
                raise RuleSetError(f"unknown feature {p['feature']!r}", f"{ploc}.feature") from None
            m = p.get("membership")
            if m is not None and not m["a"] < m["b"]:
                raise RuleSetError(f"malformed interval ({m['a']}, {m['b']}): a ≥ b", f"{ploc}.membership")


def parse_ruleset(text: str) -> RuleSet:
    """Parse and validate a rule-set document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleSetError(f"syntax error: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from None
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise RuleSetError(err.message, _path(err.absolute_path))
    _check_semantics(doc)
    stages = []
    for st in doc["stages"]:
        preds = []
        for p in st["predicates"]:
            m = p.get("membership")
            preds.append(Predicate(
                feature=p["feature"],
                op=p.get("op"),
                threshold=p.get("threshold"),
                membership=MembershipFunction(m["direction"], m["a"], m["b"]) if m else None,
            ))
        stages.append(Stage(
            target=st["target"],
            predicates=tuple(preds),
            source=st.get("source", UNCLASSIFIED_NAME),
            alpha=st.get("alpha", 0.5),
            name=st.get("name", ""),
        ))
    return RuleSet(tuple(stages), doc["final_class"], tuple(doc["classes"]),
                   doc.get("fold", {}), doc.get("name", ""))


def load_ruleset(path) -> RuleSet:
    if str(path) == "builtin":
        return builtin_qinhuai_ruleset()
    with open(path, encoding="utf-8") as fh:
        return parse_ruleset(fh.read())


def builtin_qinhuai_ruleset() -> RuleSet:
    """The five-class urban rule set: vegetation, water, road, bare land, building."""

    def crisp(feature, op, t):
        return Predicate(feature, op=op, threshold=t)

    def fuzzy(feature, direction, a, b):
        return Predicate(feature, membership=MembershipFunction(direction, a, b))

    stages = (
        Stage("Vegetation", (fuzzy("ndvi", "ramp_up", 0.16, 0.22),), name="vegetation"),
        Stage("building1", (crisp("mean_blue", ">", 1250),), source="Vegetation", name="blue roofs"),
        Stage("Water", (crisp("ndwi", ">=", -0.085), crisp("mean_nir", "<", 1100)), name="water"),
        Stage("small_object", (crisp("area_px", "<", 60),), name="small objects"),
        Stage("Road", (crisp("length_width", ">", 4.8), crisp("shape_index", ">", 2)), name="road"),
        Stage("building2", (crisp("mean_blue", ">", 1450),), source="Road", name="bright strip roofs"),
        Stage("building3", (crisp("mean_nir", ">", 1930), crisp("mean_blue", "<", 1200)),
              source="Road", name="high-NIR strip roofs"),
        Stage("Bare Land", (
            fuzzy("asymmetry", "ramp_down", 0.0, 0.8),
            fuzzy("brightness", "ramp_up", 1050, 1250),
            fuzzy("mean_red", "ramp_up", 1180, 1500),
            fuzzy("mean_nir", "ramp_up", 1380, 1800),
        ), alpha=0.5, name="bare land"),
        Stage("Building", (), name="remainder"),
    )
    return RuleSet(
        stages=stages,
        final_class="Building",
        classes=("Vegetation", "Water", "Road", "Bare Land", "Building"),
        fold={"building1": "Building", "building2": "Building", "building3": "Building",
              "small_object": "Building"},
        name="qinhuai",
    )


@dataclass(frozen=True)
class Classification:
    segment_id: int
    label: str
    score: float
    stage: str
    intermediate: str


def records_table(objects: Sequence[ObjectRecord]) -> dict[str, np.ndarray]:
    return {name: np.array([getattr(o, name) for o in objects], dtype=np.float64)
            for name in NUMERIC_FEATURES}


def classify(objects: Sequence[ObjectRecord], rules: RuleSet) -> list[Classification]:
    """Run the stages in order; returns one result per object, in input order."""
    n = len(objects)
    table = records_table(objects)
    label = np.array([UNCLASSIFIED_NAME] * n, dtype=object)
    score = np.ones(n)
    fired = np.array([""] * n, dtype=object)
    for i, stage in enumerate(rules.stages):
        todo = label == stage.source
        if not todo.any():
            continue
        fires, s = stage.evaluate(table, n)
        hit = todo & fires
        label[hit] = stage.target
        score[hit] = s[hit]
        fired[hit] = stage.name or f"stage{i + 1}"
    rest = label == UNCLASSIFIED_NAME
    label[rest] = rules.final_class
    score[rest] = 1.0
    fired[rest] = "final"
    out = []
    for o, lab, sc, st in zip(objects, label, score, fired):
        out.append(Classification(o.segment_id, rules.fold.get(lab, lab), float(sc), st, lab))
    return out


def rasterize_labels(seg: Segmentation, labels, legend: Mapping[int, str] | None = None) -> LabelRaster:
    """Paint each segment with its class.

    ``seg`` is a :class:`Segmentation` or a plain id plane (ids 1..K).
    ``labels`` maps segment id -> class name, or is a sequence of
    :class:`Classification`.
    """
    from obia.raster import DEFAULT_LEGEND

    ids = np.asarray(seg.segment_ids if isinstance(seg, Segmentation) else seg, dtype=np.int64)
    n_segments = int(ids.max())
    legend = dict(DEFAULT_LEGEND if legend is None else legend)
    if not isinstance(labels, Mapping):
        labels = {c.segment_id: c.label for c in labels}
    ids_of = {name: k for k, name in legend.items()}
    lut = np.zeros(n_segments + 1, dtype=np.int64)
    for sid in range(1, n_segments + 1):
        if sid not in labels:
            raise KeyError(f"no label for segment {sid}")
        name = labels[sid]
        if name == UNCLASSIFIED_NAME:
            lut[sid] = UNCLASSIFIED
            continue
        if name not in ids_of:
            raise KeyError(f"class {name!r} (segment {sid}) is not in the legend")
        lut[sid] = ids_of[name]
    return LabelRaster(lut[ids], legend)


def write_trace_csv(results: Sequence[Classification], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["segment_id", "final_class", "stage_fired", "fuzzy_score", "intermediate_class"])
        for c in results:
            out.writerow([c.segment_id, c.label, c.stage, repr(c.score), c.intermediate])
