"""Geometric relation rules between oriented boxes on the ground plane.

Ten directional/vertical predicates plus ``none``. The XY plane is the
ground, Z is up, yaw rotates about Z. All distances are in absolute scene
units; the close/medium band thresholds (1 and 3) are configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .scene import SceneLayout, SceneObject

CLOSE_DISTANCE = 1.0
MEDIUM_DISTANCE = 3.0


class RelationPredicate(str, Enum):
    RIGHT_OF = "right_of"
    IN_FRONT_OF = "in_front_of"
    LEFT_OF = "left_of"
    BEHIND = "behind"
    CLOSELY_RIGHT_OF = "closely_right_of"
    CLOSELY_IN_FRONT_OF = "closely_in_front_of"
    CLOSELY_LEFT_OF = "closely_left_of"
    CLOSELY_BEHIND = "closely_behind"
    ABOVE = "above"
    BELOW = "below"
    NONE = "none"


#: The 10 predicates that may appear in stored triplets (everything but none).
RELATION_SET = tuple(p for p in RelationPredicate if p is not RelationPredicate.NONE)

_PREDICATE_IDS = {p: i for i, p in enumerate(RELATION_SET)}


def predicate_id(p: RelationPredicate) -> int:
    """Stable class index of a non-none predicate."""
    return _PREDICATE_IDS[p]

_MIRROR = {
    RelationPredicate.RIGHT_OF: RelationPredicate.LEFT_OF,
    RelationPredicate.LEFT_OF: RelationPredicate.RIGHT_OF,
    RelationPredicate.IN_FRONT_OF: RelationPredicate.BEHIND,
    RelationPredicate.BEHIND: RelationPredicate.IN_FRONT_OF,
    RelationPredicate.CLOSELY_RIGHT_OF: RelationPredicate.CLOSELY_LEFT_OF,
    RelationPredicate.CLOSELY_LEFT_OF: RelationPredicate.CLOSELY_RIGHT_OF,
    RelationPredicate.CLOSELY_IN_FRONT_OF: RelationPredicate.CLOSELY_BEHIND,
    RelationPredicate.CLOSELY_BEHIND: RelationPredicate.CLOSELY_IN_FRONT_OF,
    RelationPredicate.ABOVE: RelationPredicate.BELOW,
    RelationPredicate.BELOW: RelationPredicate.ABOVE,
    RelationPredicate.NONE: RelationPredicate.NONE,
}


def mirror_predicate(p: RelationPredicate) -> RelationPredicate:
    """Predicate seen from the swapped pair: right_of <-> left_of etc."""
    return _MIRROR[p]


@dataclass(frozen=True)
class GeometryFrame:
    """Oriented box: center, half extents, yaw (radians, about Z)."""

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValueError(f"half extents must be positive, got {self.half_extents}")


def frame_of(obj: SceneObject) -> GeometryFrame:
    return GeometryFrame(
        center=obj.position,
        half_extents=tuple(s / 2.0 for s in obj.size),
        yaw=math.radians(obj.yaw_deg),
    )


def footprint_corners(f: GeometryFrame) -> list[tuple[float, float]]:
    """Ground-plane corners of the yaw-rotated box, counter-clockwise.

    Shared by the relation rules, the collision metrics and the renderer so
    all three agree on the footprint geometry.
    """
    cx, cy = f.center[0], f.center[1]
    hx, hy = f.half_extents[0], f.half_extents[1]
    c, s = math.cos(f.yaw), math.sin(f.yaw)
    corners = []
    for dx, dy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
        corners.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
    return corners


def relative_orientation(s: GeometryFrame, o: GeometryFrame) -> float:
    """Ground-plane angle of the subject as seen from the object.

    Coincident centers return 0 (the atan2(0, 0) convention).
    """
    return math.atan2(s.center[1] - o.center[1], s.center[0] - o.center[0])


def ground_distance(s: GeometryFrame, o: GeometryFrame) -> float:
    return math.hypot(s.center[0] - o.center[0], s.center[1] - o.center[1])


def inside(s: GeometryFrame, o: GeometryFrame) -> bool:
    """True iff the subject's center lies within the object's 2D footprint."""
    dx = s.center[0] - o.center[0]
    dy = s.center[1] - o.center[1]
    c, sn = math.cos(o.yaw), math.sin(o.yaw)
    # rotate the offset into the object's frame
    local_x = dx * c + dy * sn
    local_y = -dx * sn + dy * c
    return abs(local_x) <= o.half_extents[0] and abs(local_y) <= o.half_extents[1]


def _horizontal_sector(theta: float, closely: bool) -> RelationPredicate:
    if -math.pi / 4 <= theta < math.pi / 4:
        return RelationPredicate.CLOSELY_RIGHT_OF if closely else RelationPredicate.RIGHT_OF
    if math.pi / 4 <= theta < 3 * math.pi / 4:
        return RelationPredicate.CLOSELY_IN_FRONT_OF if closely else RelationPredicate.IN_FRONT_OF
    if -3 * math.pi / 4 <= theta < -math.pi / 4:
        return RelationPredicate.CLOSELY_BEHIND if closely else RelationPredicate.BEHIND
    return RelationPredicate.CLOSELY_LEFT_OF if closely else RelationPredicate.LEFT_OF


def classify_relation(
    s: GeometryFrame,
    o: GeometryFrame,
    close_distance: float = CLOSE_DISTANCE,
    medium_distance: float = MEDIUM_DISTANCE,
) -> RelationPredicate:
    """Classify the subject relative to the object.

    Vertical relations take precedence over the distance bands (a stacked
    pair also satisfies d <= close_distance); beyond the medium band the
    relation is none.
    """
    height_s = 2 * s.half_extents[2]
    height_o = 2 * o.half_extents[2]
    dz = s.center[2] - o.center[2]
    if inside(s, o) or inside(o, s):
        if dz > (height_s + height_o) / 2:
            return RelationPredicate.ABOVE
        if -dz > (height_s + height_o) / 2:
            return RelationPredicate.BELOW
    d = ground_distance(s, o)
    if d > medium_distance:
        return RelationPredicate.NONE
    theta = relative_orientation(s, o)
    return _horizontal_sector(theta, closely=d <= close_distance)


@dataclass(frozen=True)
class RelationTriplet:
    """Symbolic (subject category, predicate, object category) constraint."""

    subject: str
    predicate: RelationPredicate
    object: str
    subject_instance: int | None = None
    object_instance: int | None = None

    def __post_init__(self):
        if self.predicate is RelationPredicate.NONE:
            raise ValueError("stored triplets must have a real predicate")

    def key(self) -> tuple:
        return (self.subject, self.predicate.value, self.object, self.subject_instance, self.object_instance)


def extract_triplets(scene: SceneLayout, **kwargs) -> list[RelationTriplet]:
    """Classify every ordered object pair; drops none results.

    Returned in (subject index, object index) order; deterministic.
    """
    frames = [frame_of(obj) for obj in scene.objects]
    triplets = []
    for i, si in enumerate(scene.objects):
        for j, oj in enumerate(scene.objects):
            if i == j:
                continue
            pred = classify_relation(frames[i], frames[j], **kwargs)
            if pred is RelationPredicate.NONE:
                continue
            triplets.append(
                RelationTriplet(
                    subject=si.category,
                    predicate=pred,
                    object=oj.category,
                    subject_instance=i,
                    object_instance=j,
                )
            )
    return triplets
