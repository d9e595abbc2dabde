"""Surface diffusion flow of perturbed double bubbles.

Each arc of the perturbed configuration moves with normal velocity
equal to minus the surface Laplacian of its curvature.  In the graph
representation (rho, mu) over a fixed standard bubble this becomes a
coupled system: away from the junctions

    d rho_i / dt = -(J_i / a_i) lap_i kappa_i + B_i d mu_i / dt

where a, b, J are the metric factors of the graph map, lap_i is the
Laplace-Beltrami operator of the perturbed arc, B_i = c_i b_i / a_i,
and the junction shift rates d mu/dt are slaved to the endpoint values
of d rho/dt through the contact matrix JAY (a 3x3 solve per junction).

Six geometric boundary conditions hold at each junction at all times:
the three graphs close up, the two angle conditions, the curvature sum,
and the two matched curvature fluxes.  Time stepping is backward Euler
on the resulting differential-algebraic system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg

from . import geometry, perturbation
from .geometry import StandardBubble, ConvergenceError
from .perturbation import (ArcGrid, PerturbationField, TangentialProfile,
                           FoldOverError, JAY, fd_d1, fd_d2, simpson,
                           field_from_rho, slaved_shift, tangential_profile)

COS120 = -0.5

# condition number guard for the junction rate solve (I - B JAY)
JUNCTION_COND_LIMIT = 1e8


class RegimeError(RuntimeError):
    """The configuration left the regime where the flow system is valid."""


@dataclass(frozen=True)
class BoundaryResiduals:
    """Values of the six junction operators at each junction.

    g holds (closure, angle12, angle23, curvature sum, flux12, flux23)
    first at the upper junction then at the lower one.  compat is the
    sum of the curvature Laplacians at (upper, lower); it vanishes on
    solutions but is a derived quantity, not an imposed condition.
    """

    g: np.ndarray
    compat: np.ndarray

    def max_g(self) -> float:
        return float(np.max(np.abs(self.g)))

    def max_compat(self) -> float:
        return float(np.max(np.abs(self.compat)))


@dataclass
class _Arc:
    """Per-arc work arrays of the graph representation."""

    a: np.ndarray
    b: np.ndarray
    J: np.ndarray
    kappa: np.ndarray
    lap_kappa: np.ndarray
    big_a: np.ndarray    # J/a = 1/<n*, n>
    bp: np.ndarray       # c^+ b/a, upper-junction mu-rate coupling
    bm: np.ndarray       # c^- b/a, lower-junction mu-rate coupling
    normal: np.ndarray   # unit normal of the perturbed arc, canonical frame


def _arc_quantities(bubble, grid, field, profile):
    """Metric, curvature and coupling arrays for all three arcs."""
    arcs = []
    for i in range(1, 4):
        k = bubble.kappa[i - 1]
        h = grid.h[i - 1]
        x = grid.x[i - 1]
        rho = field.rho[i - 1]
        mc, mdc, md2c = slaved_shift(grid, field, i, profile)

        drho = fd_d1(rho, h)
        d2rho = fd_d2(rho, h)
        a = 1.0 - rho * k + mdc
        b = drho + mc * k
        jsq = a * a + b * b
        if np.any(a <= 0.0) or np.any(jsq <= 0.0):
            raise FoldOverError(
                f"graph regime lost on arc {i} (min a = {a.min():.3e})")
        jac = np.sqrt(jsq)
        da = -drho * k + md2c
        db = d2rho + mdc * k
        kap = (a * db - da * b + k * jsq) / (jac * jsq)
        # difference kappa - k, not kappa: the constant part otherwise
        # dominates the rounding error of the one-sided end rows
        lap = fd_d1(fd_d1(kap - k, h) / jac, h) / jac

        # unit tangent/normal of the reference arc in canonical frame
        tx, ty = -np.sin(k * x), np.cos(k * x)
        nx, ny = -np.cos(k * x), -np.sin(k * x)
        new_nx = (a * nx - b * tx) / jac
        new_ny = (a * ny - b * ty) / jac
        arcs.append(_Arc(a=a, b=b, J=jac, kappa=kap, lap_kappa=lap,
                         big_a=jac / a, bp=profile.cp[i - 1] * b / a,
                         bm=profile.cm[i - 1] * b / a,
                         normal=np.stack([new_nx, new_ny], axis=-1)))
    return arcs


def graph_metric(bubble, grid, field, profile=None):
    """Arc length elements J_i = |dPhi_i/dx| sampled on the grid."""
    if profile is None:
        profile = tangential_profile(bubble, grid)
    return [arc.J for arc in _arc_quantities(bubble, grid, field, profile)]


def graph_curvature(bubble, grid, field, profile=None):
    """Signed curvature of each perturbed arc sampled on the grid."""
    if profile is None:
        profile = tangential_profile(bubble, grid)
    return [arc.kappa for arc in _arc_quantities(bubble, grid, field, profile)]


def _end_d1(v: np.ndarray, h: float, idx: int) -> float:
    """One-sided first derivative at an endpoint for the flux conditions.

    Same closure row as the interior operator, so the flux conditions
    see exactly the derivative the evolution uses at the junction.
    """
    return float(fd_d1(v, h)[idx])


def _boundary_from(arcs, grid) -> BoundaryResiduals:
    g = np.empty(12)
    compat = np.empty(2)
    for jj, idx in enumerate((-1, 0)):  # upper junction first
        rho_end = [None, None, None]
        n_end = []
        kap_end = []
        flux = []
        lap_end = []
        for i in range(3):
            arc = arcs[i]
            h = grid.h[i]
            n_end.append(arc.normal[idx])
            kap_end.append(arc.kappa[idx])
            flux.append(_end_d1(arc.kappa - arc.kappa[idx], h, idx)
                        / arc.J[idx])
            lap_end.append(arc.lap_kappa[idx])
        base = 6 * jj
        g[base + 0] = 0.0  # filled by caller (needs rho)
        g[base + 1] = float(n_end[0] @ n_end[1]) - COS120
        g[base + 2] = float(n_end[1] @ n_end[2]) - COS120
        g[base + 3] = kap_end[0] + kap_end[1] + kap_end[2]
        g[base + 4] = flux[0] - flux[1]
        g[base + 5] = flux[1] - flux[2]
        compat[jj] = lap_end[0] + lap_end[1] + lap_end[2]
    return BoundaryResiduals(g=g, compat=compat)


def boundary_residuals(bubble, grid, field, profile=None) -> BoundaryResiduals:
    """Evaluate the six junction operators and the flux compatibility sum.

    All entries vanish (to discretization error) exactly when the
    perturbed configuration is an admissible network for the flow; on
    the unperturbed bubble they vanish to rounding.
    """
    if profile is None:
        profile = tangential_profile(bubble, grid)
    arcs = _arc_quantities(bubble, grid, field, profile)
    out = _boundary_from(arcs, grid)
    for jj, idx in enumerate((-1, 0)):
        out.g[6 * jj] = sum(field.rho[i][idx] for i in range(3))
    return out


def _rhs_from(arcs, grid):
    """Interior forcing, junction rate solve, and assembled d rho/dt."""
    force = [-arc.big_a * arc.lap_kappa for arc in arcs]
    dmu = []
    # at each junction the opposite cutoff vanishes through two
    # derivatives, so the 3x3 rate solves stay decoupled
    for idx, coup in ((-1, "bp"), (0, "bm")):  # upper, lower
        bhat = np.diag([getattr(arc, coup)[idx] for arc in arcs])
        fhat = np.array([f[idx] for f in force])
        mat = np.eye(3) - bhat @ JAY
        if np.linalg.cond(mat) > JUNCTION_COND_LIMIT:
            raise RegimeError("junction rate system is ill conditioned")
        y = np.linalg.solve(mat, fhat)
        dmu.append(JAY @ y)
    dmu_plus, dmu_minus = dmu
    drho = []
    for i, arc in enumerate(arcs):
        drho.append(force[i] + arc.bp * dmu_plus[i] + arc.bm * dmu_minus[i])
    return drho, dmu_plus, dmu_minus


def nonlinear_rhs(bubble, grid, field, profile=None):
    """Time derivative (d rho_i/dt, d mu_plus/dt, d mu_minus/dt).

    The junction rates solve (I - B JAY) y = F at each junction, where
    F is the interior forcing -(J/a) lap kappa evaluated at the
    endpoint; away from the cutoff windows d rho/dt = F.
    """
    if profile is None:
        profile = tangential_profile(bubble, grid)
    arcs = _arc_quantities(bubble, grid, field, profile)
    return _rhs_from(arcs, grid)


def diagnostics(bubble, grid, field, profile=None):
    """(total length, area1, area2) of the perturbed configuration.

    Length integrates the metric J; areas use the Green line integral
    cross(Phi, dPhi/dx) with the exact tangent a T + b n*, so both
    inherit the 4th order accuracy of the samples.
    """
    if profile is None:
        profile = tangential_profile(bubble, grid)
    arcs = _arc_quantities(bubble, grid, field, profile)
    length = sum(simpson(arc.J, grid.h[i]) for i, arc in enumerate(arcs))
    greens = []
    for i, arc in enumerate(arcs):
        x = grid.x[i]
        phi = _push_points(bubble, grid, field, profile, i + 1)
        t = geometry.tangent_at(bubble, i + 1, x)
        n = geometry.normal_at(bubble, i + 1, x)
        dphi = arc.a[:, None] * t + arc.b[:, None] * n
        integrand = phi[:, 0] * dphi[:, 1] - phi[:, 1] * dphi[:, 0]
        greens.append(simpson(integrand, grid.h[i]))
    area1 = 0.5 * abs(greens[0] - greens[1])
    area2 = 0.5 * abs(greens[1] - greens[2])
    return float(length), float(area1), float(area2)


def _push_points(bubble, grid, field, profile, i):
    x = grid.x[i - 1]
    base = geometry.arc_point(bubble, i, x)
    n = geometry.normal_at(bubble, i, x)
    t = geometry.tangent_at(bubble, i, x)
    mc = slaved_shift(grid, field, i, profile)[0]
    return base + field.rho[i - 1][:, None] * n + mc[:, None] * t


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class FlowState:
    """Evolving flow state; metric and curvature are cached samples."""

    bubble: StandardBubble
    grid: ArcGrid
    profile: TangentialProfile
    field: PerturbationField
    t: float = 0.0
    metric: tuple = ()
    curvature: tuple = ()
    _newton: dict = dc_field(default_factory=dict, repr=False)


def make_state(bubble, grid, field, profile=None, t=0.0) -> FlowState:
    if profile is None:
        profile = tangential_profile(bubble, grid)
    arcs = _arc_quantities(bubble, grid, field, profile)
    return FlowState(bubble=bubble, grid=grid, profile=profile, field=field,
                     t=t, metric=tuple(a.J for a in arcs),
                     curvature=tuple(a.kappa for a in arcs))


def _split(grid, u):
    out = []
    k = 0
    for ni in grid.n:
        out.append(u[k:k + ni])
        k += ni
    return tuple(out)


def _bc_slots(grid):
    """Dof indices whose evolution rows are replaced by the 12 junction
    conditions, ordered to match BoundaryResiduals.g."""
    offs = np.cumsum((0,) + grid.n)
    last = [offs[i] + grid.n[i] - 1 for i in range(3)]
    first = [offs[i] for i in range(3)]
    slots = [last[0], last[1], last[2],
             last[0] - 1, last[1] - 1, last[2] - 1,
             first[0], first[1], first[2],
             first[0] + 1, first[1] + 1, first[2] + 1]
    return np.array(slots), offs


def _step_residual(u, rho_old, dt, bubble, grid, profile, slots):
    rho = _split(grid, u)
    fld = field_from_rho(grid, rho)
    arcs = _arc_quantities(bubble, grid, fld, profile)
    drho, _, _ = _rhs_from(arcs, grid)
    res = np.concatenate([rho[i] - rho_old[i] - dt * drho[i]
                          for i in range(3)])
    br = _boundary_from(arcs, grid)
    for jj, idx in enumerate((-1, 0)):
        br.g[6 * jj] = sum(rho[i][idx] for i in range(3))
    res[slots] = br.g
    return res


def _newton_solve(state: FlowState, dt: float) -> np.ndarray:
    grid = state.grid
    slots, _ = _bc_slots(grid)
    rho_old = state.field.rho
    u = np.concatenate(rho_old)
    n_dof = u.shape[0]
    cache = state._newton

    def resid(v):
        return _step_residual(v, rho_old, dt, state.bubble, grid,
                              state.profile, slots)

    def build_jacobian(v, r0):
        jac = np.empty((n_dof, n_dof))
        for j in range(n_dof):
            dv = 1e-7 * max(1.0, abs(v[j]))
            vp = v.copy()
            vp[j] += dv
            jac[:, j] = (resid(vp) - r0) / dv
        cache["lu"] = scipy.linalg.lu_factor(jac)
        cache["dt"] = dt
        cache["age"] = 0

    res = resid(u)
    rebuilt = False
    for _ in range(30):
        nrm = np.max(np.abs(res))
        if nrm <= 1e-11:
            cache["age"] = cache.get("age", 0) + 1
            return u
        if ("lu" not in cache or cache.get("dt") != dt
                or cache.get("age", 0) >= 25):
            build_jacobian(u, res)
            rebuilt = True
        step = scipy.linalg.lu_solve(cache["lu"], -res)
        lam = 1.0
        accepted = False
        for _ in range(12):
            u_try = u + lam * step
            try:
                res_try = resid(u_try)
            except (FoldOverError, RegimeError):
                lam *= 0.5
                continue
            if np.max(np.abs(res_try)) < nrm:
                u, res = u_try, res_try
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if rebuilt:
                raise ConvergenceError(
                    f"implicit step stalled at residual {nrm:.3e}")
            build_jacobian(u, res)
            rebuilt = True
    raise ConvergenceError("implicit step: Newton iteration cap reached")


def _advance(state: FlowState, dt: float, halvings: int) -> FlowState:
    try:
        u = _newton_solve(state, dt)
    except (ConvergenceError, FoldOverError, RegimeError):
        if halvings == 0:
            raise
        mid = _advance(state, dt / 2, halvings - 1)
        return _advance(mid, dt / 2, halvings - 1)
    fld = field_from_rho(state.grid, _split(state.grid, u))
    arcs = _arc_quantities(state.bubble, state.grid, fld, state.profile)
    out = FlowState(bubble=state.bubble, grid=state.grid,
                    profile=state.profile, field=fld, t=state.t + dt,
                    metric=tuple(a.J for a in arcs),
                    curvature=tuple(a.kappa for a in arcs),
                    _newton=state._newton)
    return out


def step_implicit(state: FlowState, dt: float) -> FlowState:
    """Advance the flow by dt with backward Euler on the DAE system.

    Interior rows are backward Euler for d rho/dt; the twelve junction
    rows impose the geometric boundary conditions on the new state.
    A step whose Newton solve fails is retried as two half steps, at
    most 8 halvings deep, then the failure propagates.
    """
    if not (dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    return _advance(state, dt, 8)


# ---------------------------------------------------------------------------
# projection onto the admissible set


class AdmissibilityError(RuntimeError):
    """project_admissible could not reach the constraint tolerance."""


def _bump_columns(grid):
    """Endpoint-localized correction shapes near each junction.

    Per junction: clipped monomial ramps u^(3+m) with staggered
    widths, three on the first arc and two each on the others.  The
    cubic-and-up powers leave the interior evolution mild (their low
    derivatives vanish at the window edge), while their endpoint jets
    span value, slope, and the higher derivatives entering the
    curvature-sum, flux, and compatibility conditions.  The widths
    stay a few nodes apart so the shapes remain distinguishable on
    coarse grids.

    Each junction-side group on one arc is orthonormalized: the raw
    nested ramps are collinear enough that a small correction needs
    cancelling O(100x) coefficients, and the rounding of that
    cancellation, amplified by the fourth-derivative compatibility
    rows, floors the projection residual near 1e-10 on fine grids.
    """
    cols = []
    plan = [(0, (0.05, 0.075, 0.1)), (1, (0.05, 0.075)), (2, (0.05, 0.075))]
    for side in (+1, -1):
        for i, fracs in plan:
            li = grid.half_len[i]
            hi = grid.h[i]
            x = grid.x[i]
            group = []
            for m, frac in enumerate(fracs):
                w = min(max(frac * li, (8 + 2 * m) * hi), 0.45 * li)
                if side > 0:
                    u = np.clip((x - (li - w)) / w, 0.0, None)
                else:
                    u = np.clip(((-li + w) - x) / w, 0.0, None)
                group.append(u ** (3 + m))
            q, _ = np.linalg.qr(np.stack(group, axis=1))
            cols.extend((i, q[:, k]) for k in range(q.shape[1]))
    return cols


def project_admissible(rho_raw, bubble, grid, profile=None,
                       tol=1e-10, max_iter=100) -> PerturbationField:
    """Correct a raw normal field so all junction conditions hold.

    Adds a combination of 14 localized bump shapes (7 per junction) to
    rho_raw and solves for the coefficients by damped Newton until the
    twelve junction residuals and the two flux compatibility sums are
    below tol.  The interior of each arc outside the bump windows is
    returned unchanged.
    """
    if profile is None:
        profile = tangential_profile(bubble, grid)
    rho_raw = tuple(np.asarray(c, dtype=float) for c in rho_raw)
    cols = _bump_columns(grid)
    n_cols = len(cols)

    def assemble(xi):
        rho = [c.copy() for c in rho_raw]
        for w, (i, col) in zip(xi, cols):
            rho[i] = rho[i] + w * col
        return field_from_rho(grid, rho)

    def residual(xi):
        fld = assemble(xi)
        br = boundary_residuals(bubble, grid, fld, profile)
        return np.concatenate([br.g, br.compat])

    xi = np.zeros(n_cols)
    res = residual(xi)
    scale = None
    for _ in range(max_iter):
        nrm = np.max(np.abs(res))
        if nrm <= tol:
            return assemble(xi)
        jac = np.empty((res.shape[0], n_cols))
        try:
            for j in range(n_cols):
                dv = 1e-6 * max(1.0, abs(xi[j]))
                xp = xi.copy()
                xp[j] += dv
                xm = xi.copy()
                xm[j] -= dv
                jac[:, j] = (residual(xp) - residual(xm)) / (2 * dv)
        except (FoldOverError, RegimeError) as exc:
            raise AdmissibilityError(
                "correction left the graph regime; the raw field needs "
                "junction corrections beyond the perturbative range "
                f"({exc})") from exc
        # equilibrate: the flux compatibility rows carry much larger
        # entries than the closure rows, and an unscaled least squares
        # step zeroes them at the expense of everything else
        scale = 1.0 / np.maximum(np.max(np.abs(jac), axis=1), 1e-30)
        step, *_ = np.linalg.lstsq(scale[:, None] * jac, -scale * res,
                                   rcond=None)
        lam = 1.0
        for _ in range(25):
            xi_try = xi + lam * step
            try:
                res_try = residual(xi_try)
            except (FoldOverError, RegimeError):
                lam *= 0.5
                continue
            # near the solution the max-norm check gets stuck on single
            # rows crossing their evaluation noise; the scaled 2-norm
            # still contracts there
            if np.max(np.abs(res_try)) < nrm or (
                    nrm < 1e-6
                    and np.linalg.norm(scale * res_try)
                    < 0.999 * np.linalg.norm(scale * res)):
                xi, res = xi_try, res_try
                break
            lam *= 0.5
        else:
            raise AdmissibilityError(
                f"projection stalled at residual {nrm:.3e}")
    nrm = np.max(np.abs(res))
    if nrm <= tol:
        return assemble(xi)
    raise AdmissibilityError(
        f"projection did not reach tolerance: residual {nrm:.3e}")
