import math

import numpy as np
import pytest

from scenenat.evaluation import (
    attribute_accuracy,
    box_volume,
    collision_metrics,
    irecall,
    monte_carlo_volume,
    obb_intersection_volume,
)
from scenenat.instructions import Instruction
from scenenat.relations import GeometryFrame, RelationPredicate, RelationTriplet
from scenenat.scene import DiscretizationSpec, SceneCodec, SceneLayout, SceneObject


def frame(x=0.0, y=0.0, z=0.5, w=1.0, d=1.0, h=1.0, yaw=0.0):
    return GeometryFrame(center=(x, y, z), half_extents=(w / 2, d / 2, h / 2), yaw=yaw)


def random_frame(rng):
    return GeometryFrame(
        center=(float(rng.uniform(-0.6, 0.6)), float(rng.uniform(-0.6, 0.6)), float(rng.uniform(0.2, 1.0))),
        half_extents=tuple(rng.uniform(0.15, 0.8, size=3)),
        yaw=float(rng.uniform(-math.pi, math.pi)),
    )


def test_identical_unit_cubes():
    assert obb_intersection_volume(frame(), frame()) == pytest.approx(1.0, abs=1e-12)


def test_rotated_unit_square_octagon():
    rotated = frame(yaw=math.radians(45))
    expected = 2 * math.sqrt(2) - 2
    assert obb_intersection_volume(frame(), rotated) == pytest.approx(expected, abs=1e-9)


def test_disjoint_boxes():
    assert obb_intersection_volume(frame(), frame(x=5.0)) == 0.0
    assert obb_intersection_volume(frame(), frame(z=5.0)) == 0.0


def test_axis_aligned_exact():
    a = frame(0, 0, 0.5, w=2, d=2, h=1)  # x,y in [-1,1], z in [0,1]
    b = frame(0.5, 0.5, 1.0, w=1, d=1, h=1.5)  # x,y in [0,1], z in [0.25,1.75]
    expected = 1.0 * 1.0 * 0.75
    assert obb_intersection_volume(a, b) == pytest.approx(expected, abs=1e-9)


def test_symmetry_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = random_frame(rng), random_frame(rng)
        v_ab = obb_intersection_volume(a, b)
        v_ba = obb_intersection_volume(b, a)
        assert v_ab == pytest.approx(v_ba, abs=1e-12)
        assert 0.0 <= v_ab <= min(box_volume(a), box_volume(b)) + 1e-12


def test_rigid_motion_invariance():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b = random_frame(rng), random_frame(rng)
        base = obb_intersection_volume(a, b)
        dx, dy, dz = rng.uniform(-2, 2, size=3)
        phi = float(rng.uniform(-math.pi, math.pi))
        c, s = math.cos(phi), math.sin(phi)

        def moved(f):
            x, y, z = f.center
            return GeometryFrame(
                center=(c * x - s * y + dx, s * x + c * y + dy, z + dz),
                half_extents=f.half_extents,
                yaw=f.yaw + phi,
            )

        assert obb_intersection_volume(moved(a), moved(b)) == pytest.approx(base, abs=1e-9)


def test_monte_carlo_identical_cubes():
    rng = np.random.default_rng(7)
    est, stderr = monte_carlo_volume(frame(), frame(), 1_000_000, rng)
    assert est == pytest.approx(1.0, abs=0.005)
    assert stderr == 0.0  # every sample inside both


def test_monte_carlo_disjoint():
    rng = np.random.default_rng(8)
    est, _ = monte_carlo_volume(frame(), frame(x=9.0), 1000, rng)
    assert est == 0.0


def test_monte_carlo_agrees_with_analytic():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = random_frame(rng), random_frame(rng)
        exact = obb_intersection_volume(a, b)
        est, stderr = monte_carlo_volume(a, b, 20_000, rng)
        tol = max(0.02 * exact, 3 * stderr, 1e-3)
        assert abs(exact - est) <= tol


def obj(cat, x, y, z=0.25, w=0.5, d=0.5, h=0.5):
    return SceneObject(cat, (0, 0, 0, 0), (x, y, z), (w, d, h), 0.0)


def test_collision_single_object():
    report = collision_metrics(SceneLayout("bedroom", [obj("bed", 0, 0)]))
    assert report.v_sum == 0.0 and report.colliding_pairs == 0


def test_collision_containment_iomin():
    big = SceneObject("bed", (0, 0, 0, 0), (0, 0, 0.5), (2, 2, 1), 0.0)
    small = SceneObject("lamp", (0, 0, 0, 0), (0, 0, 0.5), (0.2, 0.2, 0.2), 0.0)
    report = collision_metrics(SceneLayout("bedroom", [big, small]))
    assert report.io_min == pytest.approx(1.0)
    assert report.colliding_pairs == 1


def test_collision_sum_additivity():
    # three boxes: 0-1 overlap and 2-3 overlap are disjoint events
    a = obj("a", 0.0, 0.0)
    b = obj("b", 0.25, 0.0)
    c = obj("c", 3.0, 0.0)
    d = obj("d", 3.25, 0.0)
    pair_ab = collision_metrics(SceneLayout("r", [a, b])).v_sum
    pair_cd = collision_metrics(SceneLayout("r", [c, d])).v_sum
    both = collision_metrics(SceneLayout("r", [a, b, c, d])).v_sum
    assert both == pytest.approx(pair_ab + pair_cd, abs=1e-12)
    report = collision_metrics(SceneLayout("r", [a, b, c, d]))
    assert report.v_sum >= report.v_avg * report.colliding_pairs - 1e-9


def make_instruction(triplets):
    return Instruction(text="", tokens=[], triplets=triplets)


def test_irecall_partial():
    scene = SceneLayout(
        "bedroom",
        [obj("chair", 2, 0), obj("desk", 0, 0), obj("lamp", 0, 2)],
    )
    triplets = [
        RelationTriplet("chair", RelationPredicate.RIGHT_OF, "desk"),
        RelationTriplet("lamp", RelationPredicate.IN_FRONT_OF, "desk"),
        RelationTriplet("chair", RelationPredicate.ABOVE, "desk"),
        RelationTriplet("desk", RelationPredicate.BEHIND, "lamp"),
    ]
    overall, by_k = irecall([make_instruction(triplets)], [scene])
    assert overall == pytest.approx(75.0)
    assert by_k == {4: pytest.approx(75.0)}


def test_irecall_empty_scene_scores_zero():
    triplets = [RelationTriplet("chair", RelationPredicate.RIGHT_OF, "desk")]
    overall, _ = irecall([make_instruction(triplets)], [SceneLayout("bedroom", [])])
    assert overall == 0.0


def test_irecall_injective_matching():
    # two identical instructed triplets but only one realizing pair
    scene = SceneLayout("bedroom", [obj("chair", 2, 0), obj("desk", 0, 0)])
    t = RelationTriplet("chair", RelationPredicate.RIGHT_OF, "desk")
    overall, _ = irecall([make_instruction([t, t])], [scene])
    assert overall == pytest.approx(50.0)
    # a second chair provides the second pair
    scene2 = SceneLayout("bedroom", [obj("chair", 2, 0), obj("desk", 0, 0), obj("chair", 2, 0.5)])
    overall2, _ = irecall([make_instruction([t, t])], [scene2])
    assert overall2 == pytest.approx(100.0)


def test_irecall_monotone_under_added_objects():
    scene = SceneLayout("bedroom", [obj("chair", 2, 0), obj("desk", 0, 0)])
    t1 = RelationTriplet("chair", RelationPredicate.RIGHT_OF, "desk")
    t2 = RelationTriplet("lamp", RelationPredicate.BEHIND, "desk")
    base, _ = irecall([make_instruction([t1, t2])], [scene])
    richer = SceneLayout("bedroom", scene.objects + [obj("lamp", 0, -1.5)])
    more, _ = irecall([make_instruction([t1, t2])], [richer])
    assert more >= base


def test_attribute_accuracy_counts_only_scored_non_pad():
    codec = SceneCodec(["bed", "chair"], DiscretizationSpec(), max_objects=2)
    scene = SceneLayout("bedroom", [SceneObject("bed", (1, 2, 3, 4), (0, 0, 0.5), (1, 1, 1), 0.0)])
    target = codec.tokenize(scene)
    generated = target.copy()
    generated.tokens[0, 5] += 1  # one wrong position token
    scored = np.ones((2, 12), dtype=bool)
    acc = attribute_accuracy([target], [generated], [scored], codec)
    assert acc["category"]["exact"] == 1.0
    assert acc["category"]["count"] == 2  # EMPTY is a real category target
    assert acc["position"]["count"] == 3  # PAD targets on the empty row skipped
    assert acc["position"]["exact"] == pytest.approx(2 / 3)
    assert acc["position"]["within_one_bin"] == 1.0
