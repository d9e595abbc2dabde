"""Closed-form geometry of standard double bubbles."""

import math

import numpy as np
import pytest

from bubbleflow import geometry
from bubbleflow.geometry import (BubbleParams, ConvergenceError, PI, SIN60,
                                 arc_lengths, arc_point, bubble_for_areas,
                                 curvature_triple, enclosed_areas,
                                 is_segment_case, junction_constants,
                                 level_set_jet, normal_at, standard_bubble,
                                 tangent_at, total_length)

from oracles import central_diff, lobe_polylines, shoelace_area

GAMMAS = np.linspace(0.05, geometry.GAMMA_MAX - 0.05, 100)

# closed forms at (r, gamma) = (1, pi/3): equal lobes of a unit-radius
# symmetric bubble whose middle interface is a straight segment
SYMMETRIC_AREA = 2 * PI / 3 + math.sqrt(3) / 4
SYMMETRIC_LENGTH = 8 * PI / 3 + math.sqrt(3)


def test_symmetric_curvatures_exact():
    k1, k2, k3 = curvature_triple(1.0, PI / 3)
    assert k1 == -1.0
    assert k2 == 0.0  # segment case snaps exactly
    assert abs(k3 - 1.0) < 1e-14
    assert is_segment_case(PI / 3)


def test_symmetric_half_lengths_exact():
    l1, l2, l3 = arc_lengths(1.0, PI / 3)
    assert abs(l1 - 2 * PI / 3) < 1e-14
    assert abs(l2 - SIN60) < 1e-14
    assert abs(l3 - 2 * PI / 3) < 1e-14


def test_curvature_sum_identity_over_sweep():
    worst = max(abs(sum(curvature_triple(1.0, g))) for g in GAMMAS)
    assert worst <= 1e-12


def test_junction_constant_sum_identity_over_sweep():
    worst = max(abs(sum(junction_constants(curvature_triple(1.0, g))))
                for g in GAMMAS)
    assert worst <= 1e-12


def test_sine_cosine_sum_identities_over_sweep():
    # the three unit tangents at a junction meet at 120 degrees, so
    # both coordinate sums of the junction direction triple vanish
    for g in GAMMAS:
        bubble = standard_bubble(BubbleParams(gamma=g))
        for x_of in (lambda b, i: b.half_len[i - 1],
                     lambda b, i: -b.half_len[i - 1]):
            tangents = [tangent_at(bubble, i, x_of(bubble, i))
                        for i in (1, 2, 3)]
            s = np.sum(tangents, axis=0)
            assert np.max(np.abs(s)) <= 1e-12


def test_junctions_lie_on_all_three_circles():
    for g in GAMMAS:
        bubble = standard_bubble(BubbleParams(r=1.3, gamma=g))
        for pt in (bubble.junction_plus, bubble.junction_minus):
            for center, radius in zip(bubble.centers, bubble.radii):
                if center is None:
                    continue
                d = abs(np.hypot(*(np.asarray(pt) - center)) - radius)
                assert d <= 1e-12 * radius


def test_arc_endpoints_meet_junctions():
    bubble = standard_bubble(BubbleParams(a1=0.4, a2=-0.2, r=1.1,
                                          gamma=0.9, theta=0.3))
    for i in (1, 2, 3):
        li = bubble.half_len[i - 1]
        assert np.max(np.abs(arc_point(bubble, i, li)
                             - bubble.junction_plus)) < 1e-12
        assert np.max(np.abs(arc_point(bubble, i, -li)
                             - bubble.junction_minus)) < 1e-12


def test_arc_point_unit_speed():
    bubble = standard_bubble(BubbleParams(gamma=1.2))
    for i in (1, 2, 3):
        li = bubble.half_len[i - 1]
        x = np.linspace(-0.95 * li, 0.95 * li, 7)
        eps = 1e-6
        vel = (arc_point(bubble, i, x + eps)
               - arc_point(bubble, i, x - eps)) / (2 * eps)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        assert np.max(np.abs(speed - 1.0)) < 1e-9


def test_frames_match_arc_point_derivatives():
    bubble = standard_bubble(BubbleParams(r=0.8, gamma=1.4, theta=-0.25))
    for i in (1, 2, 3):
        li = bubble.half_len[i - 1]
        x = np.linspace(-0.95 * li, 0.95 * li, 5)
        eps = 1e-6
        vel = (arc_point(bubble, i, x + eps)
               - arc_point(bubble, i, x - eps)) / (2 * eps)
        t = tangent_at(bubble, i, x)
        n = normal_at(bubble, i, x)
        assert np.max(np.abs(vel - t)) < 1e-9
        # right-handed frame: n is t rotated by +90 degrees
        assert np.max(np.abs(n[:, 0] + t[:, 1])) < 1e-14
        assert np.max(np.abs(n[:, 1] - t[:, 0])) < 1e-14


def test_rigid_motion_equivariance():
    base = standard_bubble(BubbleParams(r=1.2, gamma=0.7))
    moved = standard_bubble(BubbleParams(a1=0.5, a2=-1.5, r=1.2, gamma=0.7,
                                         theta=0.6))
    rot = geometry.rotation(0.6)
    shift = np.array([0.5, -1.5])
    for i in (1, 2, 3):
        li = base.half_len[i - 1]
        x = np.linspace(-li, li, 9)
        expected = arc_point(base, i, x) @ rot.T + shift
        assert np.max(np.abs(arc_point(moved, i, x) - expected)) < 1e-12


def test_level_set_vanishes_on_arcs():
    for g in (0.4, PI / 3, 1.1, 1.9):
        bubble = standard_bubble(BubbleParams(gamma=g))
        for i in (1, 2, 3):
            li = bubble.half_len[i - 1]
            sigma = arc_point(bubble, i, np.linspace(-li, li, 200))
            gval = level_set_jet(1.0, g, i, sigma)[0]
            assert np.max(np.abs(gval)) <= 1e-12


def test_level_set_gradient_is_unit_normal_on_arc():
    bubble = standard_bubble(BubbleParams(gamma=1.2))
    for i in (1, 2, 3):
        li = bubble.half_len[i - 1]
        x = np.linspace(-li, li, 50)
        sigma = arc_point(bubble, i, x)
        grad = level_set_jet(1.0, 1.2, i, sigma)[1]
        assert np.max(np.abs(grad - normal_at(bubble, i, x))) < 1e-12


def test_level_set_partials_match_central_differences():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.5, 1.5, size=(40, 2))
    eps = 1e-6
    for i in (1, 2, 3):
        g, grad, dgdr, dgdg = level_set_jet(1.1, 0.9, i, pts)
        for k, p in enumerate(pts):
            fdx = central_diff(
                lambda s: level_set_jet(1.1, 0.9, i, [s, p[1]])[0], p[0], eps)
            fdy = central_diff(
                lambda s: level_set_jet(1.1, 0.9, i, [p[0], s])[0], p[1], eps)
            fdr = central_diff(
                lambda r: level_set_jet(r, 0.9, i, p)[0], 1.1, eps)
            fdg = central_diff(
                lambda gm: level_set_jet(1.1, gm, i, p)[0], 0.9, eps)
            assert abs(grad[k, 0] - fdx) < 1e-6
            assert abs(grad[k, 1] - fdy) < 1e-6
            assert abs(dgdr[k] - fdr) < 1e-6
            assert abs(dgdg[k] - fdg) < 1e-6


def test_level_set_triple_sums_to_zero():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-2.0, 2.0, size=(200, 2))
    for r, g in ((1.0, PI / 3), (0.7, 0.5), (1.4, 1.8)):
        total = sum(level_set_jet(r, g, i, pts)[0] for i in (1, 2, 3))
        assert np.max(np.abs(total)) <= 1e-13


def test_symmetric_areas_against_shoelace():
    bubble = standard_bubble(BubbleParams())
    a1, a2 = enclosed_areas(bubble)
    lobe1, lobe2 = lobe_polylines(bubble, arc_point, 100_000)
    s1, s2 = shoelace_area(lobe1), shoelace_area(lobe2)
    assert abs(a1 - SYMMETRIC_AREA) < 1e-12
    assert abs(a2 - SYMMETRIC_AREA) < 1e-12
    assert abs(s1 - SYMMETRIC_AREA) <= 1e-8
    assert abs(s2 - SYMMETRIC_AREA) <= 1e-8


def test_asymmetric_areas_against_shoelace():
    for g in (0.6, 1.3):
        bubble = standard_bubble(BubbleParams(gamma=g))
        a1, a2 = enclosed_areas(bubble)
        lobe1, lobe2 = lobe_polylines(bubble, arc_point, 100_000)
        assert abs(a1 - shoelace_area(lobe1)) <= 1e-8
        assert abs(a2 - shoelace_area(lobe2)) <= 1e-8
        assert (a1 > a2) == (g > PI / 3)


def test_total_length_closed_form():
    assert abs(total_length(standard_bubble(BubbleParams()))
               - SYMMETRIC_LENGTH) < 1e-12


def test_areas_scale_quadratically():
    a1, a2 = enclosed_areas(standard_bubble(BubbleParams(r=1.0, gamma=0.8)))
    b1, b2 = enclosed_areas(standard_bubble(BubbleParams(r=2.5, gamma=0.8)))
    assert abs(b1 - 2.5 ** 2 * a1) < 1e-12 * b1
    assert abs(b2 - 2.5 ** 2 * a2) < 1e-12 * b2


def test_bubble_for_areas_round_trip():
    for g in (0.5, 0.9, PI / 3, 1.5):
        a1, a2 = enclosed_areas(standard_bubble(BubbleParams(r=1.2, gamma=g)))
        r, gamma = bubble_for_areas(a1, a2)
        assert abs(r - 1.2) <= 1e-9
        assert abs(gamma - g) <= 1e-9


def test_bubble_for_areas_symmetric_closed_form():
    r, gamma = bubble_for_areas(4 * SYMMETRIC_AREA, 4 * SYMMETRIC_AREA)
    assert abs(r - 2.0) < 1e-13
    assert abs(gamma - PI / 3) < 1e-13


def test_bubble_for_areas_rejects_nonpositive():
    with pytest.raises(ValueError):
        bubble_for_areas(1.0, -1.0)


def test_bubble_for_areas_extreme_ratio_raises():
    # far outside the family's range the damped Newton gives up cleanly
    with pytest.raises((ConvergenceError, ValueError)):
        bubble_for_areas(1.0, 1e-12)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        standard_bubble(BubbleParams(r=-1.0))
    with pytest.raises(ValueError):
        standard_bubble(BubbleParams(gamma=geometry.GAMMA_MAX))
    with pytest.raises(ValueError):
        arc_point(standard_bubble(BubbleParams()), 4, 0.0)


def test_arc_range_guard():
    bubble = standard_bubble(BubbleParams())
    with pytest.raises(ValueError):
        arc_point(bubble, 1, bubble.half_len[0] * 1.01)
