"""Scene evaluation: collision metrics on oriented boxes, instruction
recall, and exact-match attribute accuracies for infill tasks.

The analytic intersection volume clips the two yaw-rotated footprints
against each other (Sutherland-Hodgman) and multiplies the polygon area by
the vertical overlap; a Monte-Carlo estimator serves as its independent
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instructions import Instruction
from .relations import GeometryFrame, classify_relation, footprint_corners, frame_of
from .scene import SceneLayout, TokenizedScene


def _clip_polygon(subject: list[tuple[float, float]], clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip a convex polygon against a convex window.

    Both polygons counter-clockwise; returns the (possibly empty) result.
    """
    output = subject
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        cp1 = clip[i - 1]
        cp2 = clip[i]
        edge_x, edge_y = cp2[0] - cp1[0], cp2[1] - cp1[1]

        def is_inside(p):
            return edge_x * (p[1] - cp1[1]) - edge_y * (p[0] - cp1[0]) >= 0.0

        def intersect(a, b):
            dx, dy = b[0] - a[0], b[1] - a[1]
            denom = edge_x * dy - edge_y * dx
            t = (edge_x * (a[1] - cp1[1]) - edge_y * (a[0] - cp1[0])) / -denom
            return (a[0] + t * dx, a[1] + t * dy)

        result = []
        prev = output[-1]
        prev_in = is_inside(prev)
        for point in output:
            point_in = is_inside(point)
            if point_in:
                if not prev_in:
                    result.append(intersect(prev, point))
                result.append(point)
            elif prev_in:
                result.append(intersect(prev, point))
            prev, prev_in = point, point_in
        output = result
    return output


def _polygon_area(points: list[tuple[float, float]]) -> float:
    if len(points) < 3:
        return 0.0
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:] + points[:1]):
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def box_volume(f: GeometryFrame) -> float:
    hx, hy, hz = f.half_extents
    return 8.0 * hx * hy * hz


def obb_intersection_volume(a: GeometryFrame, b: GeometryFrame) -> float:
    """Exact intersection volume of two yaw-only oriented boxes."""
    z_lo = max(a.center[2] - a.half_extents[2], b.center[2] - b.half_extents[2])
    z_hi = min(a.center[2] + a.half_extents[2], b.center[2] + b.half_extents[2])
    if z_hi <= z_lo:
        return 0.0
    overlap = _clip_polygon(footprint_corners(a), footprint_corners(b))
    return _polygon_area(overlap) * (z_hi - z_lo)


def _points_inside(points: np.ndarray, f: GeometryFrame) -> np.ndarray:
    rel = points - np.asarray(f.center)
    c, s = np.cos(f.yaw), np.sin(f.yaw)
    local_x = rel[:, 0] * c + rel[:, 1] * s
    local_y = -rel[:, 0] * s + rel[:, 1] * c
    hx, hy, hz = f.half_extents
    return (np.abs(local_x) <= hx) & (np.abs(local_y) <= hy) & (np.abs(rel[:, 2]) <= hz)


def monte_carlo_volume(
    a: GeometryFrame, b: GeometryFrame, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Rejection-sampling volume estimate with its standard error.

    Samples uniformly in the intersection of the two axis-aligned bounding
    regions (a superset of the true intersection).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")

    def aabb(f):
        corners = np.asarray(footprint_corners(f))
        lo = np.array([corners[:, 0].min(), corners[:, 1].min(), f.center[2] - f.half_extents[2]])
        hi = np.array([corners[:, 0].max(), corners[:, 1].max(), f.center[2] + f.half_extents[2]])
        return lo, hi

    lo_a, hi_a = aabb(a)
    lo_b, hi_b = aabb(b)
    lo = np.maximum(lo_a, lo_b)
    hi = np.minimum(hi_a, hi_b)
    if (hi <= lo).any():
        return 0.0, 0.0
    region = float(np.prod(hi - lo))
    points = rng.uniform(lo, hi, size=(samples, 3))
    hits = _points_inside(points, a) & _points_inside(points, b)
    p = hits.mean()
    stderr = region * float(np.sqrt(p * (1 - p) / samples))
    return region * float(p), stderr


@dataclass
class CollisionReport:
    v_sum: float
    v_avg: float
    io_min: float
    colliding_pairs: int

    def to_json(self) -> dict:
        return {
            "v_sum": self.v_sum,
            "v_avg": self.v_avg,
            "io_min": self.io_min,
            "colliding_pairs": self.colliding_pairs,
        }


def collision_metrics(scene: SceneLayout) -> CollisionReport:
    """Intersection-volume metrics over unordered object pairs.

    v_avg and io_min average over colliding pairs only; a collision-free
    scene reports zeros.
    """
    frames = [frame_of(o) for o in scene.objects]
    v_sum = 0.0
    volumes = []
    ratios = []
    for i in range(len(frames)):
        for j in range(i + 1, len(frames)):
            v = obb_intersection_volume(frames[i], frames[j])
            if v > 0.0:
                v_sum += v
                volumes.append(v)
                ratios.append(v / min(box_volume(frames[i]), box_volume(frames[j])))
    pairs = len(volumes)
    return CollisionReport(
        v_sum=v_sum,
        v_avg=float(np.mean(volumes)) if pairs else 0.0,
        io_min=float(np.mean(ratios)) if pairs else 0.0,
        colliding_pairs=pairs,
    )


def _realized_pairs(scene: SceneLayout, s_cat: str, pred, o_cat: str) -> list[tuple[int, int]]:
    frames = [frame_of(o) for o in scene.objects]
    pairs = []
    for i, a in enumerate(scene.objects):
        if a.category != s_cat:
            continue
        for j, b in enumerate(scene.objects):
            if i == j or b.category != o_cat:
                continue
            if classify_relation(frames[i], frames[j]) is pred:
                pairs.append((i, j))
    return pairs


def _max_bipartite(candidates: list[list[tuple[int, int]]]) -> int:
    """Most triplets satisfiable with each object pair used at most once."""
    assigned: dict[tuple[int, int], int] = {}

    def try_assign(t: int, seen: set) -> bool:
        for pair in candidates[t]:
            if pair in seen:
                continue
            seen.add(pair)
            if pair not in assigned or try_assign(assigned[pair], seen):
                assigned[pair] = t
                return True
        return False

    matched = 0
    for t in range(len(candidates)):
        if try_assign(t, set()):
            matched += 1
    return matched


def irecall(instructions: list[Instruction], scenes: list[SceneLayout]) -> tuple[float, dict[int, float]]:
    """Percentage of instructed triplets realized in the paired scenes.

    A triplet is realized when distinct generated objects of the right
    categories stand in the stated relation; when one instruction repeats a
    category pair, each triplet needs its own object pair (injective
    matching). Also returns the recall split by relation count k.
    """
    if len(instructions) != len(scenes):
        raise ValueError("instruction/scene lists differ in length")
    realized_total = 0
    count_total = 0
    by_k: dict[int, list[int]] = {}
    for instr, scene in zip(instructions, scenes):
        k = len(instr.triplets)
        candidates = [_realized_pairs(scene, t.subject, t.predicate, t.object) for t in instr.triplets]
        realized = _max_bipartite(candidates) if scene.objects else 0
        realized_total += realized
        count_total += k
        by_k.setdefault(k, []).append((realized, k))
    per_k = {
        k: 100.0 * sum(r for r, _ in vals) / sum(n for _, n in vals)
        for k, vals in sorted(by_k.items())
    }
    overall = 100.0 * realized_total / count_total if count_total else 0.0
    return overall, per_k


def attribute_accuracy(
    target_grids: list[TokenizedScene],
    generated_grids: list[TokenizedScene],
    scored_positions: list[np.ndarray],
    codec,
) -> dict[str, dict[str, float]]:
    """Exact-match rates at the scored (model-filled) grid positions.

    Frozen positions are excluded by construction; positions whose target
    is a PAD token (empty rows) are skipped since heads cannot emit PAD.
    Layout columns also report a within-one-bin rate.
    """
    groups = {
        "category": [0],
        "appearance": [1, 2, 3, 4],
        "position": [5, 6, 7],
        "size": [8, 9, 10],
        "rotation": [11],
    }
    exact = {g: [0, 0] for g in groups}
    near = {g: [0, 0] for g in groups}
    for target, generated, scored in zip(target_grids, generated_grids, scored_positions):
        for name, cols in groups.items():
            for c in cols:
                col = codec.columns[c]
                rows = np.where(scored[:, c])[0]
                for r in rows:
                    t = int(target.tokens[r, c])
                    if col.pad_id is not None and t == col.pad_id:
                        continue
                    g = int(generated.tokens[r, c])
                    exact[name][0] += int(g == t)
                    exact[name][1] += 1
                    near[name][0] += int(abs(g - t) <= 1)
                    near[name][1] += 1
    out: dict[str, dict[str, float]] = {}
    for name in groups:
        hit, total = exact[name]
        entry = {"exact": hit / total if total else 0.0, "count": total}
        if name in ("position", "size", "rotation"):
            nhit, ntotal = near[name]
            entry["within_one_bin"] = nhit / ntotal if ntotal else 0.0
        out[name] = entry
    return out
