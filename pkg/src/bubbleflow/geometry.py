"""Exact geometry of standard planar double bubbles.

A standard double bubble is three circular arcs meeting at two triple
junctions at 120 degrees.  Up to rigid motion it is fixed by a radius
r Ω (0, inf) of the left outer arc and an angle gamma in (0, 2*pi/3)
that controls the curvature ratios; gamma = pi/3 is the symmetric
bubble whose middle arc is a straight segment.  The full parameter set
is (a1, a2, r, gamma, theta): translation, shape, rotation.

All quantities here are closed-form.  The only iteration lives in
bubble_for_areas, a damped 2x2 Newton solve for (r, gamma) from the
two enclosed areas.

Conventions (canonical frame, before the rigid motion is applied):
the left outer arc lies on the circle of radius r about the origin,
the junctions sit at (-r*cos(gamma+pi/3), +-r*sin(gamma+pi/3)), and
each arc is parameterized by arc length x in [-l_i, +l_i] with x=+l_i
landing on the upper junction.  Curvature signs follow the law of
sines: kappa_1 < 0, kappa_3 > 0, sign(kappa_2) = sign(pi/3 - gamma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PI = math.pi
SIN60 = math.sin(PI / 3)
COS120 = -0.5  # cosine of the 120 degree junction angle

GAMMA_MAX = 2 * PI / 3

# Below this distance from gamma = pi/3 the middle arc is treated as a
# straight segment: kappa_2 is snapped to exactly zero and the limit
# formulas are used wherever sin(gamma - pi/3) would appear in a
# denominator.  Keeps every downstream branch consistent.
SEGMENT_EPS = 1e-8

# Area of the symmetric unit bubble (r=1, gamma=pi/3): each lobe is a
# 240 degree circular sector plus the triangle over the chord.
SYMMETRIC_LOBE_AREA = 2 * PI / 3 + math.sqrt(3) / 4


class ConvergenceError(RuntimeError):
    """An iterative solve ran out of iterations."""


def _check_shape(r: float, gamma: float) -> None:
    if not (r > 0) or not math.isfinite(r):
        raise ValueError(f"r must be a positive finite number, got r={r}")
    if not (0 < gamma < GAMMA_MAX) or not math.isfinite(gamma):
        raise ValueError(f"gamma must lie in (0, 2*pi/3), got gamma={gamma}")


def is_segment_case(gamma: float) -> bool:
    """True when arc 2 is treated as a straight segment (gamma ~ pi/3)."""
    return abs(gamma - PI / 3) < SEGMENT_EPS


@dataclass(frozen=True)
class BubbleParams:
    """Five-parameter description of a standard double bubble.

    (a1, a2) translate, r and gamma set the shape, theta rotates
    clockwise.  Serialization order is (a1, a2, r, gamma, theta).
    """

    a1: float = 0.0
    a2: float = 0.0
    r: float = 1.0
    gamma: float = PI / 3
    theta: float = 0.0

    def __post_init__(self):
        _check_shape(self.r, self.gamma)
        for name in ("a1", "a2", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def as_tuple(self) -> tuple:
        return (self.a1, self.a2, self.r, self.gamma, self.theta)


@dataclass(frozen=True)
class StandardBubble:
    """Derived geometric data of a standard bubble, all closed-form.

    centers/radii describe the world-frame circles carrying the arcs;
    the middle entries are None in the segment case.  junction_plus is
    the image of x=+l_i for every arc, junction_minus of x=-l_i.
    """

    params: BubbleParams
    kappa: tuple           # signed curvatures (k1, k2, k3)
    half_len: tuple        # arc half-lengths (l1, l2, l3)
    q: tuple               # junction constants (q1, q2, q3)
    centers: tuple         # world circle centers, centers[1] None if k2 == 0
    radii: tuple           # circle radii, radii[1] None if k2 == 0
    junction_plus: tuple   # world coordinates of the upper junction
    junction_minus: tuple  # world coordinates of the lower junction


def rotation(theta: float) -> np.ndarray:
    """Frame rotation matrix; positive theta turns clockwise."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def to_world(params: BubbleParams, pts: np.ndarray) -> np.ndarray:
    """Map canonical-frame points (..., 2) through the rigid motion."""
    pts = np.asarray(pts, dtype=float)
    a = np.array([params.a1, params.a2])
    return pts @ rotation(params.theta).T + a


def to_canonical(params: BubbleParams, pts: np.ndarray) -> np.ndarray:
    """Inverse of to_world."""
    pts = np.asarray(pts, dtype=float)
    a = np.array([params.a1, params.a2])
    return (pts - a) @ rotation(params.theta)


def curvature_triple(r: float, gamma: float) -> tuple:
    """Signed curvatures of the three arcs by the law of sines.

    kappa_1 = -1/r; the others follow from
    kappa_i * sin(gamma + pi/3) = kappa_1 * sin(gamma - (i-1)*pi/3 ... )
    i.e. kappa_2 = kappa_1 sin(gamma - pi/3)/sin(gamma + pi/3) and
    kappa_3 = kappa_1 sin(gamma - pi)/sin(gamma + pi/3).  The sum is
    zero.  Continuous at gamma = pi/3 where kappa_2 = 0 exactly.
    """
    _check_shape(r, gamma)
    sp = math.sin(gamma + PI / 3)
    k1 = -1.0 / r
    if is_segment_case(gamma):
        k2 = 0.0
    else:
        k2 = k1 * math.sin(gamma - PI / 3) / sp
    k3 = k1 * math.sin(gamma - PI) / sp
    return (k1, k2, k3)


def arc_lengths(r: float, gamma: float) -> tuple:
    """Half-lengths (l1, l2, l3); arc i covers x in [-l_i, +l_i].

    l1 = r*(gamma + pi/3),
    l2 = r*sin(gamma + pi/3)*(gamma - pi/3)/sin(gamma - pi/3),
    l3 = r*sin(gamma + pi/3)*(pi - gamma)/sin(pi - gamma).
    The l2 formula has a removable singularity at gamma = pi/3 with
    limit r*sin(gamma + pi/3).
    """
    _check_shape(r, gamma)
    sp = math.sin(gamma + PI / 3)
    l1 = r * (gamma + PI / 3)
    if is_segment_case(gamma):
        l2 = r * sp
    else:
        l2 = r * sp * (gamma - PI / 3) / math.sin(gamma - PI / 3)
    l3 = r * sp * (PI - gamma) / math.sin(PI - gamma)
    return (l1, l2, l3)


def junction_constants(kappa: tuple) -> tuple:
    """q_i = -(kappa_j - kappa_k)/sqrt(3), (i, j, k) cyclic.

    These are the coefficients in the linearized 120-degree angle
    conditions; branch-free in gamma (equivalent to the cotangent
    closed forms wherever those are defined).
    """
    k1, k2, k3 = kappa
    s3 = math.sqrt(3.0)
    return (-(k2 - k3) / s3, -(k3 - k1) / s3, -(k1 - k2) / s3)


def standard_bubble(params: BubbleParams) -> StandardBubble:
    """Assemble the closed-form geometry for the given parameters."""
    r, gamma = params.r, params.gamma
    kappa = curvature_triple(r, gamma)
    half = arc_lengths(r, gamma)
    q = junction_constants(kappa)

    sp = math.sin(gamma + PI / 3)
    # canonical circle centers on the x-axis
    c1 = np.array([0.0, 0.0])
    c3 = np.array([r * SIN60 / math.sin(gamma), 0.0])
    if is_segment_case(gamma):
        c2 = None
        r2 = None
    else:
        c2 = np.array([r * SIN60 / math.sin(gamma - PI / 3), 0.0])
        r2 = abs(1.0 / kappa[1])
    pj = np.array([-r * math.cos(gamma + PI / 3), r * sp])
    pm = np.array([pj[0], -pj[1]])

    centers = tuple(
        None if c is None else tuple(to_world(params, c)) for c in (c1, c2, c3)
    )
    radii = (r, r2, 1.0 / kappa[2])
    return StandardBubble(
        params=params,
        kappa=kappa,
        half_len=half,
        q=q,
        centers=centers,
        radii=radii,
        junction_plus=tuple(to_world(params, pj)),
        junction_minus=tuple(to_world(params, pm)),
    )


def _check_arc_range(bubble: StandardBubble, i: int, x) -> np.ndarray:
    if i not in (1, 2, 3):
        raise ValueError(f"arc index must be 1, 2 or 3, got {i}")
    x = np.asarray(x, dtype=float)
    li = bubble.half_len[i - 1]
    if np.any(np.abs(x) > li * (1 + 1e-12) + 1e-300):
        raise ValueError(f"arc length parameter out of [-l_{i}, l_{i}]")
    return x


def arc_point(bubble: StandardBubble, i: int, x) -> np.ndarray:
    """World-frame point of arc i at arc length x (scalar or array).

    Arc-length parameterization around the canonical circle centers;
    x = +l_i lands on junction_plus for every arc.
    """
    x = _check_arc_range(bubble, i, x)
    r = bubble.params.r
    k = bubble.kappa[i - 1]
    if i == 1:
        pt = np.stack([np.cos(k * x) / k, np.sin(k * x) / k], axis=-1)
    elif i == 2 and k == 0.0:
        pt = np.stack([np.full_like(x, r / 2), x], axis=-1)
    else:
        gamma = bubble.params.gamma
        ang = gamma - PI / 3 if i == 2 else gamma
        ox = r * SIN60 / math.sin(ang)
        pt = np.stack([ox + np.cos(k * x) / k, np.sin(k * x) / k], axis=-1)
    return to_world(bubble.params, pt)


def normal_at(bubble: StandardBubble, i: int, x) -> np.ndarray:
    """Unit normal n_i*(x) = -(cos(k_i x), sin(k_i x)) in world frame.

    Points from the arc toward the canonical circle center scaled by
    the curvature sign; the three normals sum to zero at junctions.
    """
    x = _check_arc_range(bubble, i, x)
    k = bubble.kappa[i - 1]
    n = np.stack([-np.cos(k * x), -np.sin(k * x)], axis=-1)
    return n @ rotation(bubble.params.theta).T


def tangent_at(bubble: StandardBubble, i: int, x) -> np.ndarray:
    """Unit tangent T_i(x) = (-sin(k_i x), cos(k_i x)) in world frame.

    Frenet pair with normal_at: T' = kappa n, n' = -kappa T, and
    n = R T with R the counterclockwise quarter turn.
    """
    x = _check_arc_range(bubble, i, x)
    k = bubble.kappa[i - 1]
    t = np.stack([-np.sin(k * x), np.cos(k * x)], axis=-1)
    return t @ rotation(bubble.params.theta).T


def level_set_jet(r: float, gamma: float, i: int, sigma):
    """Defining function G_i of arc i's circle and its first partials.

    sigma is a canonical-frame point (2,) or batch (..., 2).  Returns
    (G, grad_sigma G, dG/dr, dG/dgamma) with matching batch shape.
    The three G_i sum to zero identically, G_i vanishes on the circle
    carrying arc i, and grad G_i restricted to the arc is the unit
    normal.  The partials are exact derivatives of the closed form,
    valid off the curve as well.
    """
    _check_shape(r, gamma)
    if i not in (1, 2, 3):
        raise ValueError(f"arc index must be 1, 2 or 3, got {i}")
    sigma = np.asarray(sigma, dtype=float)
    s1 = sigma[..., 0]
    rho2 = sigma[..., 0] ** 2 + sigma[..., 1] ** 2

    if i == 1:
        g = (rho2 - r * r) / (2 * r)
        grad = sigma / r
        dgdr = -(rho2 + r * r) / (2 * r * r)
        dgdg = np.zeros_like(g)
        return g, grad, dgdr, dgdg

    sp = math.sin(gamma + PI / 3)
    cp = math.cos(gamma + PI / 3)
    sm = math.sin(gamma - PI / 3)
    cm = math.cos(gamma - PI / 3)
    spi = math.sin(gamma - PI)
    cpi = math.cos(gamma - PI)
    if i == 2:
        g = (sm * rho2 - 2 * r * SIN60 * s1 - r * r * spi) / (2 * r * sp)
        grad = (sm * sigma - np.array([r * SIN60, 0.0])) / (r * sp)
        dgdr = (-SIN60 * s1 - r * spi) / (r * sp) - g / r
        dgdg = (cm * rho2 - r * r * cpi) / (2 * r * sp) - g * cp / sp
    else:
        g = (spi * rho2 + 2 * r * SIN60 * s1 - r * r * sm) / (2 * r * sp)
        grad = (spi * sigma + np.array([r * SIN60, 0.0])) / (r * sp)
        dgdr = (SIN60 * s1 - r * sm) / (r * sp) - g / r
        dgdg = (cpi * rho2 - r * r * cm) / (2 * r * sp) - g * cp / sp
    return g, grad, dgdr, dgdg


def _cross(p, q) -> float:
    return p[0] * q[1] - p[1] * q[0]


def _areas_canonical(r: float, gamma: float) -> tuple:
    """Exact enclosed areas (A1, A2) via Green's theorem arc pieces.

    Each boundary piece from P to Q on a circle about O with radius R
    and signed sweep contributes cross(O, Q-P)/2 + R^2*sweep/2; a
    straight chord contributes cross(P, Q)/2.
    """
    k1, k2, k3 = curvature_triple(r, gamma)
    l1, l2, l3 = arc_lengths(r, gamma)
    sp = math.sin(gamma + PI / 3)
    pj = (-r * math.cos(gamma + PI / 3), r * sp)
    pm = (pj[0], -pj[1])

    def arc_piece(center, radius, p, q, sweep):
        return 0.5 * _cross(center, (q[0] - p[0], q[1] - p[1])) \
            + 0.5 * radius * radius * sweep

    o1 = (0.0, 0.0)
    o3 = (r * SIN60 / math.sin(gamma), 0.0)
    piece1_fwd = arc_piece(o1, r, pm, pj, k1 * 2 * l1)
    piece3_rev = arc_piece(o3, 1.0 / k3, pj, pm, -k3 * 2 * l3)
    if k2 == 0.0:
        piece2_fwd = 0.5 * _cross(pm, pj)
        piece2_rev = 0.5 * _cross(pj, pm)
    else:
        o2 = (r * SIN60 / math.sin(gamma - PI / 3), 0.0)
        r2 = abs(1.0 / k2)
        piece2_fwd = arc_piece(o2, r2, pm, pj, k2 * 2 * l2)
        piece2_rev = arc_piece(o2, r2, pj, pm, -k2 * 2 * l2)
    return (abs(piece1_fwd + piece2_rev), abs(piece2_fwd + piece3_rev))


def enclosed_areas(bubble: StandardBubble) -> tuple:
    """Exact areas (A1, A2) of the two lobes (rigid-motion invariant)."""
    return _areas_canonical(bubble.params.r, bubble.params.gamma)


def total_length(bubble: StandardBubble) -> float:
    return 2.0 * sum(bubble.half_len)


def bubble_for_areas(area1: float, area2: float,
                     tol: float = 1e-13, max_iter: int = 80) -> tuple:
    """Invert (r, gamma) -> (A1, A2).  Returns (r, gamma).

    Equal targets reduce to gamma = pi/3 and a closed-form r.  The
    general case runs a damped Newton iteration with a finite
    difference Jacobian from the scaled symmetric initial guess.
    Raises ConvergenceError (with the last iterate) on failure.
    """
    if not (area1 > 0 and area2 > 0):
        raise ValueError(f"areas must be positive, got ({area1}, {area2})")
    total = area1 + area2
    if abs(area1 - area2) <= 1e-14 * total:
        return (math.sqrt(area1 / SYMMETRIC_LOBE_AREA), PI / 3)

    r = math.sqrt(total / (2 * SYMMETRIC_LOBE_AREA))
    gamma = PI / 3
    lo, hi = 1e-3, GAMMA_MAX - 1e-3
    target = np.array([area1, area2])

    def resid(rv, gv):
        return np.array(_areas_canonical(rv, gv)) - target

    f = resid(r, gamma)
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol * total:
            return (r, gamma)
        dr = 1e-6 * r
        dg = 1e-6
        jac = np.empty((2, 2))
        jac[:, 0] = (resid(r + dr, gamma) - resid(r - dr, gamma)) / (2 * dr)
        jac[:, 1] = (resid(r, gamma + dg) - resid(r, gamma - dg)) / (2 * dg)
        step = np.linalg.solve(jac, -f)
        lam = 1.0
        for _ in range(40):
            r_new = max(r + lam * step[0], 1e-8 * r)
            g_new = min(max(gamma + lam * step[1], lo), hi)
            f_new = resid(r_new, g_new)
            if np.max(np.abs(f_new)) < np.max(np.abs(f)):
                break
            lam *= 0.5
        else:
            raise ConvergenceError(
                f"area inversion stalled at r={r!r}, gamma={gamma!r}")
        r, gamma, f = r_new, g_new, f_new
    if np.max(np.abs(f)) <= tol * total:
        return (r, gamma)
    raise ConvergenceError(
        f"area inversion did not converge: last iterate r={r!r}, "
        f"gamma={gamma!r}, residual={np.max(np.abs(f))!r}")
