"""Expert knowledge database: component ratings, badges, and grading scales.

The database is a JSON document of rated method components (a method, a
loss, an optimizer, and inference algorithms).  Ratings combine
pessimistically: per category the worst non-neutral component rating wins,
with neutral acting as identity.  Measurement badges grade raw resource
values against order-of-magnitude scales stored alongside the ratings.
"""
from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .checks import ComplexityClass, complexity_class

CATEGORIES = ("expressivity", "usability", "reliability", "runtime", "memory")
COMPONENT_KINDS = ("method", "loss", "optimizer", "inference")
COMPLEXITY_AXES = ("side", "edges")
RESOURCES = ("runtime", "memory", "energy")
CHECK_IDS = ("distribution_recovery", "convergence", "runtime_bound", "memory_bound")


class SchemaError(ValueError):
    """A knowledge-database document violates the schema."""


class Rating(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    NEUTRAL = "neutral"

    @property
    def rank(self) -> int | None:
        """Position in the total order D < C < B < A; None for neutral."""
        return None if self is Rating.NEUTRAL else "DCBA".index(self.value)


def parse_rating(value: str, where: str) -> Rating:
    try:
        return Rating(value)
    except ValueError:
        raise SchemaError(f"{where}: unknown rating {value!r}") from None


def worst_rating(ratings: Sequence[Rating]) -> Rating:
    """Pessimistic combination: the minimum non-neutral rating, else neutral."""
    ranked = [r for r in ratings if r is not Rating.NEUTRAL]
    if not ranked:
        return Rating.NEUTRAL
    return min(ranked, key=lambda r: r.rank)


@dataclass(frozen=True)
class Criterion:
    id: str
    text: str
    fulfilled: bool


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    kind: str
    name: str
    description: str
    ratings: Mapping[str, Rating]
    criteria: tuple[Criterion, ...] = ()
    badges: tuple[str, ...] = ()
    reliability_guarantees: tuple[str, ...] = ()
    expected_runtime_class: ComplexityClass | None = None
    expected_memory_class: ComplexityClass | None = None
    complexity_axis: str | None = None


@dataclass(frozen=True)
class MethodConfiguration:
    """One id per component kind; overrides replace combined ratings when set."""

    method: str
    loss: str
    optimizer: str
    inference: str
    rating_overrides: Mapping[str, Rating] = field(default_factory=dict)

    def component_ids(self) -> tuple[str, str, str, str]:
        return (self.method, self.loss, self.optimizer, self.inference)


class ConfigurationError(KeyError):
    """A configuration names a component the database cannot resolve."""


@dataclass(frozen=True)
class BadgeSpec:
    id: str
    name: str
    description: str


@dataclass(frozen=True)
class KnowledgeDB:
    schema_version: int
    components: Mapping[str, ComponentSpec]
    badges: Mapping[str, BadgeSpec]
    badge_scales: Mapping[str, tuple[float, float, float]]
    combination_rule: str

    def resolve(self, configuration: MethodConfiguration) -> tuple[ComponentSpec, ...]:
        out = []
        for kind, cid in zip(COMPONENT_KINDS, configuration.component_ids()):
            comp = self.components.get(cid)
            if comp is None:
                raise ConfigurationError(f"no component with id {cid!r} in the database")
            if comp.kind != kind:
                raise ConfigurationError(
                    f"component {cid!r} has kind {comp.kind!r}, expected {kind!r}")
            out.append(comp)
        return tuple(out)


def _parse_component(doc: dict, where: str) -> ComponentSpec:
    for key in ("id", "kind", "name", "ratings"):
        if key not in doc:
            raise SchemaError(f"{where}: missing field {key!r}")
    cid = doc["id"]
    kind = doc["kind"]
    if kind not in COMPONENT_KINDS:
        raise SchemaError(f"{where} (component {cid!r}): unknown kind {kind!r}")
    ratings_doc = doc["ratings"]
    ratings = {}
    for cat in CATEGORIES:
        if cat not in ratings_doc:
            raise SchemaError(f"{where} (component {cid!r}): missing rating "
                              f"for category {cat!r}")
        ratings[cat] = parse_rating(ratings_doc[cat], f"{where} (component {cid!r})")
    for cat in ratings_doc:
        if cat not in CATEGORIES:
            raise SchemaError(f"{where} (component {cid!r}): unknown category {cat!r}")
    criteria = tuple(
        Criterion(c["id"], c["text"], bool(c["fulfilled"]))
        for c in doc.get("criteria", ()))
    guarantees = tuple(doc.get("reliability_guarantees", ()))
    for g in guarantees:
        if g not in CHECK_IDS:
            raise SchemaError(f"{where} (component {cid!r}): unknown check id {g!r}")
    rt_cls = mem_cls = None
    axis = None
    if kind == "inference":
        for key in ("expected_runtime_class", "expected_memory_class", "complexity_axis"):
            if key not in doc:
                raise SchemaError(f"{where} (component {cid!r}): inference "
                                  f"components need {key!r}")
        try:
            rt_cls = complexity_class(doc["expected_runtime_class"])
            mem_cls = complexity_class(doc["expected_memory_class"])
        except ValueError as exc:
            raise SchemaError(f"{where} (component {cid!r}): {exc}") from None
        axis = doc["complexity_axis"]
        if axis not in COMPLEXITY_AXES:
            raise SchemaError(f"{where} (component {cid!r}): unknown "
                              f"complexity_axis {axis!r}")
    else:
        for key in ("expected_runtime_class", "expected_memory_class", "complexity_axis"):
            if key in doc:
                raise SchemaError(f"{where} (component {cid!r}): {key!r} is only "
                                  "valid on inference components")
    return ComponentSpec(
        id=cid, kind=kind, name=doc["name"], description=doc.get("description", ""),
        ratings=ratings, criteria=criteria, badges=tuple(doc.get("badges", ())),
        reliability_guarantees=guarantees, expected_runtime_class=rt_cls,
        expected_memory_class=mem_cls, complexity_axis=axis)


def parse_knowledge_db(doc: dict, source: str = "<memory>") -> KnowledgeDB:
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: document root must be an object")
    version = doc.get("schema_version")
    if version != 1:
        raise SchemaError(f"{source}: unsupported schema_version {version!r}")
    rule = doc.get("combination_rule", "infimum")
    if rule != "infimum":
        raise SchemaError(f"{source}: unsupported combination_rule {rule!r}")
    badges = {}
    for i, b in enumerate(doc.get("badges", ())):
        where = f"{source}: badges[{i}]"
        for key in ("id", "name", "description"):
            if key not in b:
                raise SchemaError(f"{where}: missing field {key!r}")
        if b["id"] in badges:
            raise SchemaError(f"{where}: duplicate badge id {b['id']!r}")
        badges[b["id"]] = BadgeSpec(b["id"], b["name"], b["description"])
    components = {}
    for i, c in enumerate(doc.get("components", ())):
        where = f"{source}: components[{i}]"
        comp = _parse_component(c, where)
        if comp.id in components:
            raise SchemaError(f"{where}: duplicate component id {comp.id!r}")
        for badge_id in comp.badges:
            if badge_id not in badges:
                raise SchemaError(f"{where} (component {comp.id!r}): unknown "
                                  f"badge id {badge_id!r}")
        components[comp.id] = comp
    scales_doc = doc.get("badge_scales")
    if not isinstance(scales_doc, dict):
        raise SchemaError(f"{source}: missing badge_scales object")
    scales = {}
    for res in RESOURCES:
        if res not in scales_doc:
            raise SchemaError(f"{source}: badge_scales missing resource {res!r}")
        ts = scales_doc[res]
        if len(ts) != 3 or not (ts[0] < ts[1] < ts[2]):
            raise SchemaError(f"{source}: badge_scales[{res!r}] must be three "
                              "strictly increasing thresholds")
        scales[res] = (float(ts[0]), float(ts[1]), float(ts[2]))
    return KnowledgeDB(schema_version=1, components=components, badges=badges,
                       badge_scales=scales, combination_rule=rule)


def load_knowledge_db(path) -> KnowledgeDB:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"knowledge database file not found: {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p}: not valid JSON ({exc})") from None
    return parse_knowledge_db(doc, source=str(p))


def default_knowledge_db() -> KnowledgeDB:
    """The bundled database covering the MRF method family."""
    text = importlib.resources.files("carelabel").joinpath(
        "data/knowledge_db.json").read_text()
    return parse_knowledge_db(json.loads(text), source="bundled knowledge_db.json")


def combine_ratings(configuration: MethodConfiguration,
                    db: KnowledgeDB) -> dict[str, Rating]:
    """Per category the worst non-neutral component rating (neutral if all
    are neutral); an explicit override on the configuration wins."""
    comps = db.resolve(configuration)
    combined = {}
    for cat in CATEGORIES:
        override = configuration.rating_overrides.get(cat)
        if override is not None:
            combined[cat] = Rating(override)
            continue
        combined[cat] = worst_rating([c.ratings[cat] for c in comps])
    return combined


def collect_badges(configuration: MethodConfiguration, db: KnowledgeDB) -> list[str]:
    """Deduplicated union of component badges, sorted by badge id."""
    comps = db.resolve(configuration)
    seen = set()
    for c in comps:
        for b in c.badges:
            if b not in db.badges:
                raise SchemaError(f"component {c.id!r} references unknown badge {b!r}")
            seen.add(b)
    return sorted(seen)


def measurement_badge(value: float, scale: Sequence[float]) -> Rating:
    """Grade a raw measurement on a three-threshold scale.

    Strictly-less comparisons, so a value exactly on a threshold gets the
    worse grade.
    """
    t1, t2, t3 = scale
    if not (t1 < t2 < t3):
        raise ValueError("scale thresholds must be strictly increasing")
    if value < t1:
        return Rating.A
    if value < t2:
        return Rating.B
    if value < t3:
        return Rating.C
    return Rating.D
