"""Linearized stability operator of the standard double bubble.

The linearization of the flow about a standard bubble acts per arc as

    A0 u_i = u_i'''' + kappa_i^2 u_i''      on (-l_i, l_i)

with twelve coupling conditions at the junction values x = +-l_i:
the graphs close up (sum u_i = 0), the linearized angle conditions
(q_i u_i +- u_i' matched pairwise), the curvature sum
(sum u_i'' + kappa_i^2 u_i = 0), and matched linearized curvature
fluxes (d/dx (u_i'' + kappa_i^2 u_i) equal across arcs).

The discrete eigenproblem is a matrix pencil A_h v = lambda M_h v:
interior rows carry the 4th order operator (2nd order stencils),
twelve boundary rows carry the junction conditions with M_h zero, so
the twelve constraint eigenvalues sit at infinity and the physical
spectrum stays finite.  The operator has a five dimensional null
space with closed-form basis fields (translations, rotation, and two
fields moving along the equilibrium family), all reproduced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geometry
from .geometry import BubbleParams, StandardBubble, PI, SIN60
from .perturbation import ArcGrid, fd_d1, fd_d2, make_grid, simpson

# one-sided 2nd order boundary stencils (left end; mirror for right)
_BD1 = np.array([-1.5, 2.0, -0.5])
_BD2 = np.array([2.0, -5.0, 4.0, -1.0])
_BD3 = np.array([-2.5, 9.0, -12.0, 7.0, -1.5])

_CALIBRATION_N = 64  # reference resolution for the null cluster tolerance


@dataclass(frozen=True)
class DiscretePencil:
    """Dense pencil (A, M) with the dof layout of a stacked grid.

    offsets[i] is the first dof of arc i+1; boundary_rows lists the
    twelve constraint rows in the order of BoundaryResiduals.g.  grid
    and bubble are carried for downstream consumers (tolerances,
    quadrature); synthetic pencils may leave them None.
    """

    A: np.ndarray
    M: np.ndarray
    offsets: tuple | None = None
    boundary_rows: tuple | None = None
    bubble: StandardBubble | None = None
    grid: ArcGrid | None = None


def stack_field(u) -> np.ndarray:
    return np.concatenate([np.asarray(c, dtype=float) for c in u])


def unstack_field(grid: ArcGrid, v: np.ndarray):
    out = []
    k = 0
    for ni in grid.n:
        out.append(np.asarray(v[k:k + ni]))
        k += ni
    return tuple(out)


def assemble_pencil(bubble: StandardBubble, grid: ArcGrid) -> DiscretePencil:
    """Build the dense eigenvalue pencil for the linearized operator."""
    n = grid.n
    offs = (0, n[0], n[0] + n[1])
    total = sum(n)
    A = np.zeros((total, total))
    M = np.eye(total)

    for i in range(3):
        h = grid.h[i]
        k2 = bubble.kappa[i] ** 2
        d4 = np.array([1.0, -4.0, 6.0, -4.0, 1.0]) / h**4
        d2 = np.array([1.0, -2.0, 1.0]) / h**2
        for j in range(2, n[i] - 2):
            row = offs[i] + j
            A[row, row - 2:row + 3] += d4
            A[row, row - 1:row + 2] += k2 * d2

    ends = [offs[i] + n[i] - 1 for i in range(3)]
    starts = [offs[i] for i in range(3)]
    slots = [ends[0], ends[1], ends[2],
             ends[0] - 1, ends[1] - 1, ends[2] - 1,
             starts[0], starts[1], starts[2],
             starts[0] + 1, starts[1] + 1, starts[2] + 1]

    def d_stencil(i, order, upper):
        """(dof indices, coefficients) of a one-sided derivative."""
        h = grid.h[i]
        coeffs = {1: _BD1, 2: _BD2, 3: _BD3}[order] / h**order
        m = coeffs.shape[0]
        if upper:
            idx = np.arange(ends[i], ends[i] - m, -1)
            sign = -1.0 if order % 2 == 1 else 1.0
            return idx, sign * coeffs
        return np.arange(starts[i], starts[i] + m), coeffs

    def end_dof(i, upper):
        return ends[i] if upper else starts[i]

    for jj, upper in enumerate((True, False)):
        base = 6 * jj
        # closure: sum of endpoint values
        for i in range(3):
            A[slots[base + 0], end_dof(i, upper)] += 1.0
        # angle conditions: q_i u_i +- u_i' matched, pairs (1,2), (2,3)
        sgn = 1.0 if upper else -1.0
        for row, (ia, ib) in ((base + 1, (0, 1)), (base + 2, (1, 2))):
            for i, fac in ((ia, 1.0), (ib, -1.0)):
                A[slots[row], end_dof(i, upper)] += fac * bubble.q[i]
                idx, co = d_stencil(i, 1, upper)
                A[slots[row], idx] += fac * sgn * co
        # curvature sum: sum of u_i'' + kappa_i^2 u_i
        for i in range(3):
            idx, co = d_stencil(i, 2, upper)
            A[slots[base + 3], idx] += co
            A[slots[base + 3], end_dof(i, upper)] += bubble.kappa[i] ** 2
        # flux matching: u_i''' + kappa_i^2 u_i' matched, same pairs
        for row, (ia, ib) in ((base + 4, (0, 1)), (base + 5, (1, 2))):
            for i, fac in ((ia, 1.0), (ib, -1.0)):
                idx, co = d_stencil(i, 3, upper)
                A[slots[row], idx] += fac * co
                idx, co = d_stencil(i, 1, upper)
                A[slots[row], idx] += fac * bubble.kappa[i] ** 2 * co

    for s in slots:
        M[s, s] = 0.0
    return DiscretePencil(A=A, M=M, offsets=offs, boundary_rows=tuple(slots),
                          bubble=bubble, grid=grid)


def pencil_residual(pencil: DiscretePencil, u) -> float:
    """Sup norm of A_h applied to a sampled field (triple or vector)."""
    if isinstance(u, (list, tuple)):
        u = stack_field(u)
    return float(np.max(np.abs(pencil.A @ u)))


def null_cluster_tolerance(pencil: DiscretePencil, lambda6: float) -> float:
    """Threshold separating the near-null cluster from lambda6.

    The cluster radius shrinks like h^2; the quadratic model
    10*(lambda6/4)*(h/h0)^2 is calibrated at n=64 and capped at
    lambda6/2 so the threshold always separates at coarse resolution.
    """
    h1 = pencil.grid.h[0]
    h0 = 2 * pencil.grid.half_len[0] / (_CALIBRATION_N - 1)
    quad = 10.0 * (lambda6 / 4.0) * (h1 / h0) ** 2
    return min(quad, lambda6 / 2.0)


@dataclass(frozen=True)
class ModeReport:
    """k smallest-magnitude finite eigenpairs of the pencil."""

    eigenvalues: np.ndarray
    vectors: np.ndarray      # columns, dof order of the pencil
    is_null: np.ndarray
    null_count: int
    lambda6: float
    null_tol: float


def spectrum(pencil: DiscretePencil, k: int = 20) -> ModeReport:
    """Solve the dense generalized eigenproblem, sorted by |lambda|.

    The twelve constraint rows put their eigenvalues at infinity; only
    finite eigenvalues (|lambda| < 1e12) are reported.  Each vector is
    scaled so its largest-magnitude entry equals one; vectors with
    negligible imaginary part are returned real.
    """
    lam, vec = scipy.linalg.eig(pencil.A, pencil.M)
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(lam) & (np.abs(lam) < 1e12)
    lam, vec = lam[finite], vec[:, finite]
    order = np.argsort(np.abs(lam), kind="stable")
    lam, vec = lam[order], vec[:, order]
    if lam.shape[0] < 6:
        raise RuntimeError("pencil has fewer than 6 finite eigenvalues")
    lambda6 = float(np.abs(lam[5]))
    tol = null_cluster_tolerance(pencil, lambda6)
    null_count = int(np.sum(np.abs(lam) <= tol))

    k = min(k, lam.shape[0])
    lam, vec = lam[:k], vec[:, :k].copy()
    for j in range(k):
        pivot = np.argmax(np.abs(vec[:, j]))
        vec[:, j] = vec[:, j] / vec[pivot, j]
    if np.max(np.abs(vec.imag)) <= 1e-9:
        vec = vec.real.copy()
    return ModeReport(eigenvalues=lam, vectors=vec,
                      is_null=np.abs(lam) <= tol, null_count=null_count,
                      lambda6=lambda6, null_tol=tol)


def null_basis(bubble: StandardBubble, grid: ArcGrid):
    """The five analytic null fields sampled on the grid.

    v1, v2: unit translations; v3: rotation (normalized so the third
    component is sin(kappa_3 x)); v4, v5: motion along the equilibrium
    family in r and gamma, realized as -dG/dr and -dG/dgamma of the
    circle defining functions along the reference arcs.  At the
    symmetric bubble the middle component of v3 degenerates to the
    straight-segment limit kappa_1 x.
    """
    r, gamma = bubble.params.r, bubble.params.gamma
    k1, k2, k3 = bubble.kappa
    canon = geometry.standard_bubble(BubbleParams(r=r, gamma=gamma))
    x1, x2, x3 = grid.x

    v1 = (np.cos(k1 * x1), np.cos(k2 * x2), np.cos(k3 * x3))
    v2 = (np.sin(k1 * x1), np.sin(k2 * x2), np.sin(k3 * x3))
    if k2 == 0.0:
        mid = k1 * x2
    else:
        mid = math.sin(gamma) / math.sin(gamma - PI / 3) * np.sin(k2 * x2)
    v3 = (np.zeros_like(x1), mid, np.sin(k3 * x3))

    v4, v5 = [], []
    for i in range(1, 4):
        pts = geometry.arc_point(canon, i, grid.x[i - 1])
        _, _, dgdr, dgdg = geometry.level_set_jet(r, gamma, i, pts)
        v4.append(-dgdr)
        v5.append(-dgdg)
    return [v1, v2, v3, tuple(v4), tuple(v5)]


def c_of(bubble: StandardBubble, grid: ArcGrid, u):
    """Per-arc constants c_i = u_i'' + kappa_i^2 u_i for a null field.

    Returns ((c1, c2, c3), deviation): the mean over interior nodes
    and the largest pointwise departure from it.  Null fields have
    constant c_i summing to zero; the deviation measures how far u is
    from that structure.
    """
    cs = []
    dev = 0.0
    for i in range(3):
        ui = np.asarray(u[i], dtype=float)
        w = fd_d2(ui, grid.h[i]) + bubble.kappa[i] ** 2 * ui
        interior = w[2:-2]
        ci = float(np.mean(interior))
        cs.append(ci)
        dev = max(dev, float(np.max(np.abs(interior - ci))))
    return tuple(cs), dev


def bilinear_I(bubble: StandardBubble, grid: ArcGrid, u, v) -> float:
    """Second variation form I(u, v) of the length functional.

    Sum over arcs of int(u' v' - kappa^2 u v) plus the junction terms
    sum_i q_i u_i v_i at both endpoints.  Simpson quadrature on the
    grid; derivatives by 4th order finite differences.
    """
    acc = 0.0
    for i in range(3):
        ui = np.asarray(u[i], dtype=float)
        vi = np.asarray(v[i], dtype=float)
        du = fd_d1(ui, grid.h[i])
        dv = fd_d1(vi, grid.h[i])
        integrand = du * dv - bubble.kappa[i] ** 2 * ui * vi
        acc += simpson(integrand, grid.h[i])
        acc += bubble.q[i] * (ui[-1] * vi[-1] + ui[0] * vi[0])
    return float(acc)


def matrix_D(bubble: StandardBubble, grid: ArcGrid):
    """Area-derivative matrix of the equilibrium family and its det.

    D[0] = (int v4_1 - int v4_2, int v5_1 - int v5_2),
    D[1] = (int v4_2 - int v4_3, int v5_2 - int v5_3).
    Its determinant is negative across the whole gamma range, which is
    what makes the family a graph over the two enclosed areas.
    """
    basis = null_basis(bubble, grid)
    ints = []
    for w in (basis[3], basis[4]):
        ints.append([simpson(np.asarray(w[i]), grid.h[i]) for i in range(3)])
    d = np.array([[ints[0][0] - ints[0][1], ints[1][0] - ints[1][1]],
                  [ints[0][1] - ints[0][2], ints[1][1] - ints[1][2]]])
    return d, float(np.linalg.det(d))


_SIGN_ASSERTIONS = (
    ("v4_int_1_pos", lambda s: s["i4"][0], lambda v: v > 0),
    ("v4_int_2_neg", lambda s: s["i4"][1], lambda v: v < 0),
    ("v4_int_3_neg", lambda s: s["i4"][2], lambda v: v < 0),
    ("v4_diff_12_pos", lambda s: s["i4"][0] - s["i4"][1], lambda v: v > 0),
    ("v4_diff_23_pos", lambda s: s["i4"][1] - s["i4"][2], lambda v: v > 0),
    ("v4_csum_pos", lambda s: s["c4"] @ s["i4"], lambda v: v > 0),
    ("v4_energy_neg", lambda s: s["e4"], lambda v: v < 0),
    ("v5_int_1_zero", lambda s: s["i5"][0],
     lambda v: abs(v) <= 1e-12),
    ("v5_int_2_neg", lambda s: s["i5"][1], lambda v: v < 0),
    ("v5_int_3_pos", lambda s: s["i5"][2], lambda v: v > 0),
    ("v5_diff_12_pos", lambda s: s["i5"][0] - s["i5"][1], lambda v: v > 0),
    ("v5_diff_23_neg", lambda s: s["i5"][1] - s["i5"][2], lambda v: v < 0),
    ("v5_csum_pos", lambda s: s["c5"] @ s["i5"], lambda v: v > 0),
    ("v5_energy_neg", lambda s: s["e5"], lambda v: v < 0),
    ("det_D_neg", lambda s: s["detD"], lambda v: v < 0),
)


def sign_suite(gamma_values, r: float = 1.0, n: int = 512):
    """Evaluate the sign assertions behind the stability argument.

    For each gamma: signs of the per-arc integrals of v4 and v5, their
    pairwise differences, the weighted sums c(v) . int(v), the form
    values I(v4, v4), I(v5, v5), and det D.  Returns a list of rows
    (gamma, assertion_id, value, passed).
    """
    rows = []
    for gamma in gamma_values:
        bubble = geometry.standard_bubble(BubbleParams(r=r, gamma=gamma))
        grid = make_grid(bubble, n)
        basis = null_basis(bubble, grid)
        v4, v5 = basis[3], basis[4]
        state = {
            "i4": np.array([simpson(np.asarray(v4[i]), grid.h[i])
                            for i in range(3)]),
            "i5": np.array([simpson(np.asarray(v5[i]), grid.h[i])
                            for i in range(3)]),
            "c4": np.array(c_of(bubble, grid, v4)[0]),
            "c5": np.array(c_of(bubble, grid, v5)[0]),
            "e4": bilinear_I(bubble, grid, v4, v4),
            "e5": bilinear_I(bubble, grid, v5, v5),
            "detD": matrix_D(bubble, grid)[1],
        }
        for name, value_of, ok in _SIGN_ASSERTIONS:
            value = float(value_of(state))
            rows.append((float(gamma), name, value, bool(ok(value))))
    return rows


@dataclass(frozen=True)
class SemisimplicityReport:
    """Outcome of the Jordan-block test on the near-null cluster."""

    null_count: int
    max_angle: float
    gram_smin: float
    verdict: str  # "semisimple" | "jordan_block" | "inconclusive"


def semisimplicity_check(pencil: DiscretePencil, null_vectors,
                         null_tol: float | None = None) -> SemisimplicityReport:
    """Test that the zero eigenvalue of the pencil is semisimple.

    Gathers the near-null right and left eigenvector clusters and
    forms the M-weighted Gram matrix between them (orthonormalized);
    a Jordan block at zero makes that Gram singular.  Also reports the
    largest principal angle between the right cluster and the span of
    null_vectors (a matrix of columns or a list of sampled fields).
    Thresholds leave an explicit inconclusive band, which is reported
    rather than silently passed.
    """
    if isinstance(null_vectors, (list, tuple)):
        null_vectors = np.column_stack([
            stack_field(v) if isinstance(v, (list, tuple)) else np.asarray(v)
            for v in null_vectors])
    lam, vl, vr = scipy.linalg.eig(pencil.A, pencil.M, left=True, right=True)
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(lam) & (np.abs(lam) < 1e12)
    if null_tol is None:
        mags = np.sort(np.abs(lam[finite]))
        if mags.shape[0] < 6:
            raise ValueError("provide null_tol for pencils this small")
        null_tol = null_cluster_tolerance(pencil, float(mags[5]))
    cluster = finite & (np.abs(lam) <= null_tol)
    m = int(np.sum(cluster))
    if m == 0:
        raise ValueError("no eigenvalues inside the null tolerance")
    zr = vr[:, cluster]
    zl = vl[:, cluster]
    qr_r, _ = np.linalg.qr(zr)
    qr_l, _ = np.linalg.qr(zl)
    gram = qr_l.conj().T @ pencil.M @ qr_r
    smin = float(np.min(scipy.linalg.svdvals(gram)))

    # realify the right cluster for the angle computation
    zr_real = np.column_stack([_realify(zr[:, j]) for j in range(m)])
    angles = scipy.linalg.subspace_angles(zr_real, null_vectors)
    max_angle = float(np.max(angles)) if angles.size else 0.0

    if smin >= 0.05:
        verdict = "semisimple"
    elif smin <= 1e-6:
        verdict = "jordan_block"
    else:
        verdict = "inconclusive"
    return SemisimplicityReport(null_count=m, max_angle=max_angle,
                                gram_smin=smin, verdict=verdict)


def _realify(v: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(v))
    w = v / v[pivot]
    return w.real


def ls_determinant(lam: complex, l_ratios) -> complex:
    """Normalized Lopatinskii-Shapiro determinant at spectral value lam.

    Frozen-coefficient half-line problem at a junction: on each arc
    lam v + (l1/l_i)^4 v'''' = 0 for y > 0 with decaying solutions,
    coupled by the principal junction conditions.  Exactly two of the
    four characteristic roots decay for lam in the closed right half
    plane away from zero; the determinant of the resulting 6x6 system
    (rows scaled to unit max modulus) is bounded away from zero there,
    which is the well-posedness condition for the linearized flow.
    """
    lam = complex(lam)
    if lam == 0:
        raise ValueError("lambda = 0 is excluded")
    ell = np.asarray(l_ratios, dtype=float)
    if ell.shape != (3,) or np.any(ell <= 0):
        raise ValueError("l_ratios must be three positive numbers")
    w0 = (-lam) ** 0.25
    roots = np.array([w0 * 1j**k for k in range(4)])
    dec = roots[roots.real < 0]
    if dec.shape[0] != 2:
        raise ValueError(
            f"expected 2 decaying roots, found {dec.shape[0]} "
            f"(lambda outside the closed right half plane?)")
    wa, wb = dec
    za = wa / ell
    zb = wb / ell

    mat = np.zeros((6, 6), dtype=complex)
    mat[0, :] = [1, 1, 1, 1, 1, 1]
    for row, (ia, ib) in ((1, (0, 1)), (2, (1, 2))):
        mat[row, 2 * ia] = ell[ia] * za[ia]
        mat[row, 2 * ia + 1] = ell[ia] * zb[ia]
        mat[row, 2 * ib] = -ell[ib] * za[ib]
        mat[row, 2 * ib + 1] = -ell[ib] * zb[ib]
    for i in range(3):
        mat[3, 2 * i] = ell[i] ** 2 * za[i] ** 2
        mat[3, 2 * i + 1] = ell[i] ** 2 * zb[i] ** 2
    for row, (ia, ib) in ((4, (0, 1)), (5, (1, 2))):
        mat[row, 2 * ia] = ell[ia] ** 3 * za[ia] ** 3
        mat[row, 2 * ia + 1] = ell[ia] ** 3 * zb[ia] ** 3
        mat[row, 2 * ib] = -ell[ib] ** 3 * za[ib] ** 3
        mat[row, 2 * ib + 1] = -ell[ib] ** 3 * zb[ib] ** 3
    scale = np.max(np.abs(mat), axis=1)
    mat = mat / scale[:, None]
    return complex(np.linalg.det(mat))
