"""Equilibrium chart and end-to-end relaxation experiments.

The standard bubbles near a reference one form a five parameter
family: translations (a1, a2), radius r, curvature angle gamma, and
clockwise rotation theta.  equilibrium_chart writes a nearby family
member as a normal graph over the reference: node by node, the ray
through sigma(x) + mu*c*tau in direction n* is intersected with the
defining conic of the target arc (nearest root), and the junction
data mu = JAY rho is re-slaved until the coupled solve settles.
Differentiating the chart in the five parameters reproduces the
analytic null fields of the linearized operator, which is the
numerical counterpart of the tangent-space identification behind the
stability theorem.  (The chart derivative along +a1 is -cos(kappa x):
pushing the target right moves the graph against the normal
n* = -(cos kappa x, sin kappa x).)

stability_run drives the headline experiment: project a perturbation
onto the admissible set, evolve the flow, fit the limit equilibrium
by least squares on the level-set residuals of the final curves, and
fit the exponential decay rate of the sup-norm distance to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import flow, geometry, linops, perturbation
from .geometry import BubbleParams, StandardBubble, PI, SIN60
from .perturbation import ArcGrid, PerturbationField, TangentialProfile


class ChartDomainError(RuntimeError):
    """Target bubble has no graph representation over the reference."""


@dataclass(frozen=True)
class ChartPoint:
    """A nearby equilibrium written as a graph over the reference."""

    params: BubbleParams
    field: PerturbationField
    level_residual: float  # max |G_i| at the final node positions


def _conic_coeffs(r: float, gamma: float, i: int):
    """(alpha, beta, c0) with G_i(p) = alpha|p|^2 + beta.p + c0.

    Same normalization as the level-set jets, so gradients on the
    curve are unit normals.  alpha is exactly zero for the straight
    middle arc at gamma = pi/3.
    """
    if i == 1:
        return 1.0 / (2 * r), np.zeros(2), -r / 2
    sp = math.sin(gamma + PI / 3)
    sm = 0.0 if geometry.is_segment_case(gamma) else math.sin(gamma - PI / 3)
    spi = math.sin(gamma - PI)
    if i == 2:
        return sm / (2 * r * sp), np.array([-SIN60 / sp, 0.0]), \
            -r * spi / (2 * sp)
    if i == 3:
        return spi / (2 * r * sp), np.array([SIN60 / sp, 0.0]), \
            -r * sm / (2 * sp)
    raise ValueError(f"arc index must be 1, 2 or 3, got {i}")


def _nearest_root(alpha, bb, cc):
    """Smallest-magnitude t with alpha t^2 + bb t + cc = 0, elementwise."""
    if alpha == 0.0:
        if np.any(np.abs(bb) == 0.0):
            raise ChartDomainError("ray parallel to the target line")
        return -cc / bb
    disc = bb * bb - 4.0 * alpha * cc
    if np.any(disc < 0.0):
        raise ChartDomainError("ray misses the target circle")
    q = -0.5 * (bb + np.copysign(np.sqrt(disc), bb))
    r1 = q / alpha
    safe = np.where(q == 0.0, 1.0, q)
    r2 = np.where(q == 0.0, 0.0, cc / safe)
    return np.where(np.abs(r1) <= np.abs(r2), r1, r2)


def equilibrium_chart(ref: StandardBubble, grid: ArcGrid,
                      params: BubbleParams,
                      profile: TangentialProfile | None = None,
                      tol: float | None = None,
                      max_iter: int = 80) -> ChartPoint:
    """Graph field rho(params) of a nearby standard bubble.

    Interior nodes are exact ray-conic intersections; the junction
    shifts mu = JAY rho couple the arcs, so the solve is iterated
    (the coupling enters only through the curvature of the target
    arcs times mu, hence contracts fast near the reference).
    """
    if profile is None:
        profile = perturbation.tangential_profile(ref, grid)
    if tol is None:
        tol = 1e-12 * ref.params.r
    rot = geometry.rotation(params.theta)
    coeffs = [_conic_coeffs(params.r, params.gamma, i) for i in (1, 2, 3)]

    base_w, dir_c = [], []
    for i in (1, 2, 3):
        x = grid.x[i - 1]
        base_w.append(geometry.arc_point(ref, i, x))
        dir_c.append(geometry.normal_at(ref, i, x) @ rot)
    rho = tuple(np.zeros(ni) for ni in grid.n)
    field = perturbation.field_from_rho(grid, rho)
    for _ in range(max_iter):
        new_rho = []
        for i in (1, 2, 3):
            alpha, beta, c0 = coeffs[i - 1]
            mc = perturbation.slaved_shift(grid, field, i, profile)[0]
            shift = mc[:, None] * geometry.tangent_at(ref, i, grid.x[i - 1])
            b_c = geometry.to_canonical(params, base_w[i - 1] + shift)
            d_c = dir_c[i - 1]
            bb = 2.0 * alpha * np.einsum("ij,ij->i", b_c, d_c) + d_c @ beta
            cc = alpha * np.einsum("ij,ij->i", b_c, b_c) + b_c @ beta + c0
            new_rho.append(_nearest_root(alpha, bb, cc))
        delta = max(float(np.max(np.abs(a - b)))
                    for a, b in zip(new_rho, rho))
        rho = tuple(new_rho)
        field = perturbation.field_from_rho(grid, rho)
        if delta <= tol:
            break
    else:
        raise geometry.ConvergenceError(
            f"junction slaving did not settle to {tol:.1e}")
    if max(float(np.max(np.abs(c))) for c in rho) > 0.45 * ref.params.r:
        raise ChartDomainError("target leaves the graph window")

    resid = 0.0
    for i in (1, 2, 3):
        mc = perturbation.slaved_shift(grid, field, i, profile)[0]
        pts = base_w[i - 1] + rho[i - 1][:, None] * \
            geometry.normal_at(ref, i, grid.x[i - 1]) + \
            mc[:, None] * geometry.tangent_at(ref, i, grid.x[i - 1])
        g = geometry.level_set_jet(params.r, params.gamma, i,
                                   geometry.to_canonical(params, pts))[0]
        resid = max(resid, float(np.max(np.abs(g))))
    return ChartPoint(params=params, field=field, level_residual=resid)


_PARAM_NAMES = ("a1", "a2", "r", "gamma", "theta")


@dataclass(frozen=True)
class ChartDerivativeReport:
    """Finite-difference chart derivatives vs the analytic null fields."""

    max_error: float
    errors: dict
    derivative_matrix: np.ndarray  # stacked nodes x 5, parameter order
    rank: int


def chart_derivative_check(ref: StandardBubble, grid: ArcGrid,
                           eps: float = 1e-5,
                           profile: TangentialProfile | None = None
                           ) -> ChartDerivativeReport:
    """Compare central differences of the chart with the null basis.

    Targets per parameter: -v1, -v2 for the translations (the graph
    value is the displacement against n*), v4 for r, v5 for gamma,
    and (r* sin(pi/3)/sin(gamma*)) v3 for the clockwise rotation.
    Returns the worst nodewise discrepancy, the per-parameter errors,
    and the rank of the sampled derivative matrix (five when the
    tangent space has full dimension).
    """
    if profile is None:
        profile = perturbation.tangential_profile(ref, grid)
    basis = linops.null_basis(ref, grid)
    fac = ref.params.r * SIN60 / math.sin(ref.params.gamma)
    targets = {
        "a1": tuple(-np.asarray(c) for c in basis[0]),
        "a2": tuple(-np.asarray(c) for c in basis[1]),
        "r": basis[3],
        "gamma": basis[4],
        "theta": tuple(fac * np.asarray(c) for c in basis[2]),
    }
    base = np.array(ref.params.as_tuple())
    errors = {}
    columns = []
    for k, name in enumerate(_PARAM_NAMES):
        step = np.zeros(5)
        step[k] = eps
        hi = equilibrium_chart(ref, grid, BubbleParams(*(base + step)),
                               profile)
        lo = equilibrium_chart(ref, grid, BubbleParams(*(base - step)),
                               profile)
        fd = tuple((a - b) / (2 * eps)
                   for a, b in zip(hi.field.rho, lo.field.rho))
        err = max(float(np.max(np.abs(f - t)))
                  for f, t in zip(fd, targets[name]))
        errors[name] = err
        columns.append(linops.stack_field(fd))
    mat = np.column_stack(columns)
    return ChartDerivativeReport(max_error=max(errors.values()),
                                 errors=errors, derivative_matrix=mat,
                                 rank=int(np.linalg.matrix_rank(mat)))


@dataclass(frozen=True)
class RunConfig:
    """Inputs of a stability experiment."""

    bubble: BubbleParams = BubbleParams()
    n: int = 64
    dt: float = 1e-3
    t_end: float = 5.0
    kind: str = "random"     # random | null1..null5 | bump
    amplitude: float = 1e-2
    seed: int = 0
    width_fraction: float = 1.0
    snapshot_every: int = 0


@dataclass(frozen=True)
class FlowTrace:
    """Diagnostics per accepted step (arrays indexed by time)."""

    t: np.ndarray
    length: np.ndarray
    area1: np.ndarray
    area2: np.ndarray
    max_g: np.ndarray
    compat: np.ndarray
    dist_to_eq: np.ndarray


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of a stability experiment."""

    config: RunConfig
    trace: FlowTrace
    lambda6: float
    fitted_rate: float
    limit_params: BubbleParams
    area_error: float        # worst relative drift of either area
    length_violation: float  # largest single-step length increase
    flagged: bool            # length violated monotonicity beyond 1e-10


def _initial_rho(bubble: StandardBubble, grid: ArcGrid, config: RunConfig):
    """Raw (pre-projection) perturbation samples for a recipe."""
    kind = config.kind
    if kind.startswith("null") and len(kind) == 5 and kind[4] in "12345":
        basis = linops.null_basis(bubble, grid)
        v = basis[int(kind[4]) - 1]
        scale = max(float(np.max(np.abs(c))) for c in v)
        return tuple(config.amplitude / scale * np.asarray(c) for c in v)
    if kind == "random":
        rng = np.random.default_rng(config.seed)
        rho = []
        for x, li in zip(grid.x, grid.half_len):
            y = np.zeros_like(x)
            for m in range(1, 5):
                am, bm = rng.standard_normal(2)
                y += 2.0**-m * (am * np.cos(m * PI * x / (2 * li))
                                + bm * np.sin(m * PI * x / (2 * li)))
            rho.append(y)
        scale = max(float(np.max(np.abs(y))) for y in rho)
        return tuple(config.amplitude / scale * y for y in rho)
    if kind == "bump":
        rho = []
        for j, (x, li) in enumerate(zip(grid.x, grid.half_len)):
            g = np.exp(-(((x - li) / (0.25 * li)) ** 2))
            sign = (1.0, 0.0, -1.0)[j]
            rho.append(config.amplitude * sign * g)
        return tuple(rho)
    raise ValueError(f"unknown perturbation kind {kind!r}")


def fit_limit_bubble(curves, p0: BubbleParams, tol: float = 1e-13,
                     max_iter: int = 60) -> BubbleParams:
    """Least-squares standard bubble through the given world polylines.

    Minimizes the summed squared level-set values of all points over
    the five parameters by damped Gauss-Newton; the Jacobian comes
    from the analytic level-set jets (translation and rotation
    columns via the frame map, r and gamma columns directly).
    """
    pts = [np.asarray(c, dtype=float) for c in curves]
    x = np.array(p0.as_tuple())

    def residual_jac(xv):
        p = BubbleParams(*xv)
        rot = geometry.rotation(p.theta)
        c, s = math.cos(p.theta), math.sin(p.theta)
        drot = np.array([[-s, c], [-c, -s]])  # d(rotation)/d(theta)
        res, jac = [], []
        for i in (1, 2, 3):
            w = pts[i - 1]
            rel = w - np.array([p.a1, p.a2])
            sig = rel @ rot
            g, grad, dgdr, dgdgam = geometry.level_set_jet(
                p.r, p.gamma, i, sig)
            res.append(g)
            cols = np.empty((w.shape[0], 5))
            cols[:, 0] = -grad @ rot[0]
            cols[:, 1] = -grad @ rot[1]
            cols[:, 2] = dgdr
            cols[:, 3] = dgdgam
            cols[:, 4] = np.einsum("ij,ij->i", grad, rel @ drot)
            jac.append(cols)
        return np.concatenate(res), np.vstack(jac)

    def clamp(xv):
        out = xv.copy()
        out[2] = max(out[2], 1e-8 * p0.r)
        out[3] = min(max(out[3], 1e-3), geometry.GAMMA_MAX - 1e-3)
        return out

    res, jac = residual_jac(x)
    cost = float(res @ res)
    for _ in range(max_iter):
        step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            trial = clamp(x + t * step)
            tres, tjac = residual_jac(trial)
            tcost = float(tres @ tres)
            if tcost <= cost * (1 + 1e-14) or tcost < 1e-30:
                break
            t *= 0.5
        else:
            break
        x, res, jac, cost = trial, tres, tjac, tcost
        if float(np.max(np.abs(t * step))) <= tol * max(1.0, float(
                np.max(np.abs(x)))):
            break
    theta = math.remainder(float(x[4]), 2 * PI)
    return BubbleParams(float(x[0]), float(x[1]), float(x[2]),
                        float(x[3]), theta)


def _initial_limit_guess(bubble, a1, a2, curves) -> BubbleParams:
    """Seed the limit fit from the final areas and junction axis."""
    try:
        r0, g0 = geometry.bubble_for_areas(a1, a2)
    except geometry.ConvergenceError:
        r0, g0 = bubble.params.r, bubble.params.gamma
    jp = np.mean([c[-1] for c in curves], axis=0)
    jm = np.mean([c[0] for c in curves], axis=0)
    axis = jp - jm
    theta0 = math.atan2(axis[0], axis[1])  # canonical axis (0,1) -> (s, c)
    mid_c = np.array([-r0 * math.cos(g0 + PI / 3), 0.0])
    mid_w = 0.5 * (jp + jm)
    a0 = mid_w - mid_c @ geometry.rotation(theta0).T
    return BubbleParams(float(a0[0]), float(a0[1]), r0, g0, theta0)


def stability_run(config: RunConfig, on_snapshot=None) -> StabilityReport:
    """Perturb, evolve, and fit the relaxation back to equilibrium.

    on_snapshot(step, t, curves), when given, receives the pushed
    world polylines every config.snapshot_every accepted steps (and
    at t = 0).
    """
    bubble = geometry.standard_bubble(config.bubble)
    grid = perturbation.make_grid(bubble, config.n)
    profile = perturbation.tangential_profile(bubble, grid,
                                              config.width_fraction)
    pencil = linops.assemble_pencil(bubble, grid)
    lambda6 = linops.spectrum(pencil, k=8).lambda6

    field = flow.project_admissible(_initial_rho(bubble, grid, config),
                                    bubble, grid, profile)
    state = flow.make_state(bubble, grid, field, profile)
    nsteps = int(round(config.t_end / config.dt))
    if nsteps < 1:
        raise ValueError("t_end must cover at least one step")

    nhist = np.empty((nsteps + 1, sum(grid.n)))
    length = np.empty(nsteps + 1)
    area1 = np.empty(nsteps + 1)
    area2 = np.empty(nsteps + 1)
    max_g = np.empty(nsteps + 1)
    compat = np.empty(nsteps + 1)

    def record(k, st):
        nhist[k] = linops.stack_field(st.field.rho)
        length[k], area1[k], area2[k] = flow.diagnostics(
            bubble, grid, st.field, profile)
        bres = flow.boundary_residuals(bubble, grid, st.field, profile)
        max_g[k] = bres.max_g()
        compat[k] = bres.max_compat()

    record(0, state)
    if on_snapshot is not None:
        on_snapshot(0, 0.0, perturbation.push_forward(
            bubble, grid, state.field, profile))
    for k in range(1, nsteps + 1):
        state = flow.step_implicit(state, config.dt)
        record(k, state)
        if on_snapshot is not None and config.snapshot_every > 0 \
                and k % config.snapshot_every == 0:
            on_snapshot(k, state.t, perturbation.push_forward(
                bubble, grid, state.field, profile))

    diffs = np.diff(length)
    length_violation = float(max(0.0, np.max(diffs)))
    area_error = float(max(np.max(np.abs(area1 - area1[0])) / area1[0],
                           np.max(np.abs(area2 - area2[0])) / area2[0]))

    final_curves = perturbation.push_forward(bubble, grid, state.field,
                                             profile)
    guess = _initial_limit_guess(bubble, area1[-1], area2[-1], final_curves)
    limit_params = fit_limit_bubble(final_curves, guess)
    rho_inf = linops.stack_field(
        equilibrium_chart(bubble, grid, limit_params, profile).field.rho)
    dist = np.max(np.abs(nhist - rho_inf), axis=1)

    t = config.dt * np.arange(nsteps + 1)
    # fit the decay on the clean segment: after the fast initial
    # transient (first decade of decay) and before the distance
    # saturates at the resolution floor of the chart and the fit
    floor = float(np.min(dist))
    flat = np.maximum.accumulate(dist[::-1])[::-1] <= 3.0 * floor
    k_sat = int(np.argmax(flat)) if flat.any() else dist.size
    started = dist <= dist[0] / 10.0
    k_start = int(np.argmax(started)) if started.any() else 0
    window = np.zeros(dist.size, dtype=bool)
    window[k_start:k_sat] = True
    if int(window.sum()) < 10:
        window = t >= config.t_end / 2
    y = np.log(np.maximum(dist[window], 1e-300))
    slope = np.polyfit(t[window], y, 1)[0]
    fitted_rate = float(-slope)

    trace = FlowTrace(t=t, length=length, area1=area1, area2=area2,
                      max_g=max_g, compat=compat, dist_to_eq=dist)
    return StabilityReport(config=config, trace=trace, lambda6=lambda6,
                           fitted_rate=fitted_rate,
                           limit_params=limit_params,
                           area_error=area_error,
                           length_violation=length_violation,
                           flagged=length_violation > 1e-10)
