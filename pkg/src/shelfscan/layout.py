"""The 2D store model: shelf interactive faces, obstacles, portals.

The world is flat. Shelves are represented only by the floor projection of
their product-facing side, a segment with an outward unit normal; every
other sight-blocking edge (shelf backs, walls, pillars) is an obstacle
segment. Portals (entrances/exits) are carried as metadata and play no
role in detection.

Coordinates are meters in a shared world frame; angles are radians,
counterclockwise from the +x axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParseError, ValidationError

MIN_SEGMENT_LENGTH = 1e-9
UNIT_NORM_TOL = 1e-6
PERP_TOL = 1e-6  # radians


@dataclass(frozen=True)
class Segment2D:
    """A non-degenerate line segment between points `a` and `b` (meters)."""

    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "a", (float(self.a[0]), float(self.a[1])))
        object.__setattr__(self, "b", (float(self.b[0]), float(self.b[1])))
        if self.length <= MIN_SEGMENT_LENGTH:
            raise ValidationError(f"degenerate segment {self.a}-{self.b}")

    @property
    def vector(self) -> tuple[float, float]:
        return (self.b[0] - self.a[0], self.b[1] - self.a[1])

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0)


@dataclass(frozen=True)
class Shelf:
    """An interactive shelf face with its outward unit normal.

    The normal comes from the layout file and is authoritative; it is only
    validated (unit length, perpendicular to the face) and re-normalized
    when within tolerance, never inferred from vertex winding.
    """

    id: int
    face: Segment2D
    normal: tuple[float, float]

    def __post_init__(self):
        nx, ny = float(self.normal[0]), float(self.normal[1])
        norm = math.hypot(nx, ny)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"normal {self.normal} is not unit length", element=f"shelf {self.id}")
        nx, ny = nx / norm, ny / norm
        fx, fy = self.face.vector
        flen = self.face.length
        # |sin(angle from perpendicular)| == |dot(n, face_unit)|
        if abs((nx * fx + ny * fy) / flen) > PERP_TOL:
            raise ValidationError("normal not perpendicular to face", element=f"shelf {self.id}")
        object.__setattr__(self, "normal", (nx, ny))


@dataclass(frozen=True)
class Obstacle:
    """A vision-blocking segment that is not an interactive face."""

    id: int
    segment: Segment2D


@dataclass(frozen=True)
class Portal:
    """An entrance and/or exit area; metadata only."""

    id: int
    segment: Segment2D
    entrance: bool = True
    exit: bool = True

    def __post_init__(self):
        if not (self.entrance or self.exit):
            raise ValidationError("portal is neither entrance nor exit", element=f"portal {self.id}")


@dataclass(frozen=True)
class StoreLayout:
    """Validated, immutable store model; safe to share across workers."""

    store_id: str
    shelves: tuple[Shelf, ...]
    obstacles: tuple[Obstacle, ...] = ()
    portals: tuple[Portal, ...] = ()
    area_m2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "shelves", tuple(self.shelves))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "portals", tuple(self.portals))
        if not self.shelves:
            raise ValidationError("layout has no shelves", element=self.store_id)
        shelf_ids = [s.id for s in self.shelves]
        if shelf_ids != list(range(1, len(shelf_ids) + 1)):
            raise ValidationError(
                f"shelf ids must be exactly 1..{len(shelf_ids)} in order, got {shelf_ids}",
                element=self.store_id,
            )
        n_s = len(shelf_ids)
        obstacle_ids = [o.id for o in self.obstacles]
        if obstacle_ids != list(range(n_s + 1, n_s + 1 + len(obstacle_ids))):
            raise ValidationError(
                f"obstacle ids must be exactly {n_s + 1}..{n_s + len(obstacle_ids)} in order, got {obstacle_ids}",
                element=self.store_id,
            )

    @property
    def n_shelves(self) -> int:
        return len(self.shelves)

    @cached_property
    def segment_points(self) -> np.ndarray:
        """(n_segments, 2, 2) endpoint array, shelves first then obstacles."""
        segs = [s.face for s in self.shelves] + [o.segment for o in self.obstacles]
        return np.array([[seg.a, seg.b] for seg in segs], dtype=float)

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of all segments, portals included."""
        pts = self.segment_points.reshape(-1, 2).tolist()
        for p in self.portals:
            pts.extend([p.segment.a, p.segment.b])
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return (min(xs), min(ys), max(xs), max(ys))


def all_segments(layout: StoreLayout) -> list[tuple[int, Segment2D, bool]]:
    """Every sight-blocking segment as (index, segment, is_shelf_face).

    Indices run 1..n_s over the shelf faces then n_s+1.. over obstacles,
    deterministically, so index <= n_s identifies an interactive face.
    """
    out = [(shelf.id, shelf.face, True) for shelf in layout.shelves]
    out.extend((obs.id, obs.segment, False) for obs in layout.obstacles)
    return out


def _parse_segment(pair) -> Segment2D:
    (ax, ay), (bx, by) = pair
    return Segment2D((float(ax), float(ay)), (float(bx), float(by)))


def load_layout(path) -> StoreLayout:
    """Load and validate a store layout from its JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot parse layout file {path}: {exc}") from exc
    return layout_from_dict(doc)


def _with_element(exc: ValidationError, element: str) -> ValidationError:
    if exc.element is None:
        return ValidationError(str(exc), element=element)
    return exc


def layout_from_dict(doc: dict) -> StoreLayout:
    try:
        shelves = []
        for s in doc.get("shelves", []):
            try:
                shelves.append(
                    Shelf(id=int(s["id"]), face=_parse_segment(s["face"]), normal=tuple(s["normal"]))
                )
            except ValidationError as exc:
                raise _with_element(exc, f"shelf {s.get('id')}") from exc
        obstacles = []
        for o in doc.get("obstacles", []):
            try:
                obstacles.append(Obstacle(id=int(o["id"]), segment=_parse_segment(o["segment"])))
            except ValidationError as exc:
                raise _with_element(exc, f"obstacle {o.get('id')}") from exc
        portals = []
        for p in doc.get("portals", []):
            try:
                portals.append(Portal(
                    id=int(p["id"]),
                    segment=_parse_segment(p["segment"]),
                    entrance=bool(p.get("entrance", True)),
                    exit=bool(p.get("exit", True)),
                ))
            except ValidationError as exc:
                raise _with_element(exc, f"portal {p.get('id')}") from exc
        area = doc.get("area_m2")
        return StoreLayout(
            store_id=str(doc["store_id"]),
            # file order is not significant; ids are
            shelves=tuple(sorted(shelves, key=lambda s: s.id)),
            obstacles=tuple(sorted(obstacles, key=lambda o: o.id)),
            portals=tuple(portals),
            area_m2=None if area is None else float(area),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed layout document: {exc!r}") from exc


def layout_to_dict(layout: StoreLayout) -> dict:
    doc = {
        "store_id": layout.store_id,
        "shelves": [
            {"id": s.id, "face": [list(s.face.a), list(s.face.b)], "normal": list(s.normal)}
            for s in layout.shelves
        ],
        "obstacles": [
            {"id": o.id, "segment": [list(o.segment.a), list(o.segment.b)]}
            for o in layout.obstacles
        ],
        "portals": [
            {
                "id": p.id,
                "segment": [list(p.segment.a), list(p.segment.b)],
                "entrance": p.entrance,
                "exit": p.exit,
            }
            for p in layout.portals
        ],
    }
    if layout.area_m2 is not None:
        doc["area_m2"] = layout.area_m2
    return doc


def save_layout(layout: StoreLayout, path) -> None:
    with open(path, "w") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2, sort_keys=True)
        fh.write("\n")
