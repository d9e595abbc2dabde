"""Graphs over a standard bubble: grids, normal fields, push-forward.

A nearby curve configuration is written per arc as

    Phi_i(x) = sigma_i(x) + rho_i(x) n_i*(x) + mu_i(pr(x)) tau_i*(x)

with rho_i the normal graph function on [-l_i, l_i], tau_i* a fixed
tangential cutoff field equal to the outer conormal at the endpoints,
and mu_i constants (one per junction) that slide the attachment points
along the reference arcs.  The junction values of mu are not free:
third-order contact of the three circles at each junction forces
mu = J rho|_junction with the skew matrix J below (kernel (1,1,1)).

This module owns the sampled representation (ArcGrid, finite
difference stencils, PerturbationField, TangentialProfile) and the
push-forward to explicit polylines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import StandardBubble

# mu = JAY @ rho at each junction; skew, rank 2, kernel span{(1,1,1)}
JAY = -(1.0 / math.sqrt(3.0)) * np.array([
    [0.0, 1.0, -1.0],
    [-1.0, 0.0, 1.0],
    [1.0, -1.0, 0.0],
])


class FoldOverError(RuntimeError):
    """The perturbed configuration stopped being an embedded graph."""


@dataclass(frozen=True)
class ArcGrid:
    """Per-arc uniform nodes x_i on [-l_i, l_i], endpoints included.

    Node counts are chosen per arc so the spacings h_i agree within a
    factor of two; n is the count on the longest arc.
    """

    n: tuple
    x: tuple
    h: tuple
    half_len: tuple


def make_grid(bubble: StandardBubble, n: int) -> ArcGrid:
    if n < 16:
        raise ValueError(f"need at least 16 points per arc, got n={n}")
    half = bubble.half_len
    h_ref = 2 * max(half) / (n - 1)
    counts = []
    for li in half:
        ni = max(16, math.ceil(2 * li / h_ref - 1e-12) + 1)
        counts.append(ni)
    xs = tuple(np.linspace(-li, li, ni) for li, ni in zip(half, counts))
    hs = tuple(2 * li / (ni - 1) for li, ni in zip(half, counts))
    return ArcGrid(n=tuple(counts), x=xs, h=hs, half_len=tuple(half))


# ---------------------------------------------------------------------------
# finite difference stencils on uniform grids (4th order interior,
# matching-order one-sided rows at the two nodes nearest each end;
# wider one-sided closures destabilize the composed fourth-order
# operator at the junctions, so the order is deliberately capped here)


def _fd_row(offsets, m: int, moments=()) -> np.ndarray:
    """Weights for the m-th derivative at offset 0, unit spacing.

    moments lists (degree, response) pairs that replace polynomial
    exactness at the top degrees with a prescribed response on x^degree.
    """
    s = np.asarray(offsets, dtype=float)
    powers = np.arange(s.shape[0])
    vand = s[None, :] ** powers[:, None]
    rhs = np.zeros(s.shape[0])
    rhs[m] = math.factorial(m)
    for p, val in moments:
        rhs[p] = val
    return np.linalg.solve(vand, rhs)


_D1_C = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_C = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
# One-sided end rows: 4th order like the interior, with the next two
# truncation responses (on x^5, x^6 for d1 and x^6, x^7 for d2) pinned
# to the interior stencil's values.  Unmatched closures leave an O(h^4)
# seam in the truncation error two nodes from each end, and the second
# pass of the composed fourth-order flow operator turns that seam into
# an O(h^2) artifact pinned at the junctions; matching the responses
# removes the seam without raising the formal order (genuinely
# higher-order one-sided rows destabilize the composed operator).
_D1_E = [_fd_row(np.arange(7) - j, 1, ((5, -4.0),)) for j in range(2)]
_D2_E = [_fd_row(np.arange(8) - j, 2, ((6, -8.0),)) for j in range(2)]


def fd_d1(v: np.ndarray, h: float) -> np.ndarray:
    """First derivative of uniformly sampled v, 4th order."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if n < 8:
        raise ValueError("need at least 8 samples")
    out = np.empty_like(v)
    out[2:-2] = np.convolve(v, _D1_C[::-1], mode="valid")
    for j, row in enumerate(_D1_E):
        out[j] = row @ v[:7]
        out[-1 - j] = -(row @ v[-7:][::-1])
    return out / h


def fd_d2(v: np.ndarray, h: float) -> np.ndarray:
    """Second derivative of uniformly sampled v, 4th order."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if n < 8:
        raise ValueError("need at least 8 samples")
    out = np.empty_like(v)
    out[2:-2] = np.convolve(v, _D2_C[::-1], mode="valid")
    for j, row in enumerate(_D2_E):
        out[j] = row @ v[:8]
        out[-1 - j] = row @ v[-8:][::-1]
    return out / (h * h)


def simpson(v: np.ndarray, h: float) -> float:
    """Composite Simpson rule on uniform samples.

    Falls back to a 3/8 block for the last three intervals when the
    interval count is odd, keeping 4th order throughout.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples")
    if n % 2 == 1:
        core, tail = v, None
    else:
        core, tail = v[: n - 3], v[n - 4:]
    acc = (h / 3.0) * (core[0] + core[-1]
                       + 4.0 * core[1:-1:2].sum() + 2.0 * core[2:-2:2].sum())
    if tail is not None:
        acc += (3.0 * h / 8.0) * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2]
                                  + tail[3])
    return float(acc)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationField:
    """Sampled normal graph rho plus the induced junction shifts mu.

    rho is a triple of node arrays; mu_plus and mu_minus are the
    length-3 tangential shift vectors at the upper and lower junction,
    always equal to JAY @ rho(+-l).
    """

    rho: tuple
    mu_plus: np.ndarray
    mu_minus: np.ndarray


def jay_apply(rho_ends) -> np.ndarray:
    """Junction shifts mu for endpoint values rho_ends = (r1, r2, r3)."""
    return JAY @ np.asarray(rho_ends, dtype=float)


def field_from_rho(grid: ArcGrid, rho) -> PerturbationField:
    """Wrap per-arc samples, computing mu from the endpoint values."""
    rho = tuple(np.asarray(c, dtype=float) for c in rho)
    for c, ni in zip(rho, grid.n):
        if c.shape != (ni,):
            raise ValueError(
                f"rho component shape {c.shape} does not match grid {ni}")
        if not np.all(np.isfinite(c)):
            raise ValueError("rho contains non-finite values")
    mu_p = jay_apply([c[-1] for c in rho])
    mu_m = jay_apply([c[0] for c in rho])
    return PerturbationField(rho=rho, mu_plus=mu_p, mu_minus=mu_m)


def zero_field(grid: ArcGrid) -> PerturbationField:
    return field_from_rho(grid, tuple(np.zeros(ni) for ni in grid.n))


@dataclass(frozen=True)
class TangentialProfile:
    """Per-junction cutoff tangential fields c_i^+-(x) T_i(x) per arc.

    c^+ ramps from 0 up to +1 at the upper junction, c^- from -1 at
    the lower junction up to 0, so mu^+ c^+ T + mu^- c^- T equals mu
    times the outer conormal at each endpoint while the opposite
    junction sees value, slope and second derivative all vanish.  At
    the default full width each cutoff is a single polynomial on the
    whole arc, which keeps slaved fields (graphs of exact equilibria
    in particular) as smooth as the perturbation itself; narrower
    windows clip the ramp and the leftover interior kink, invisible
    to the linearized operators, dominates the discrete flow residual
    of exact equilibria at any affordable resolution.
    """

    width_fraction: float
    cp: tuple
    dcp: tuple
    d2cp: tuple
    cm: tuple
    dcm: tuple
    d2cm: tuple
    tau: tuple  # combined (c^+ + c^-) T_i world vectors, shape (n_i, 2)


def _smoothstep(u):
    """Quintic smoothstep: value 0 to 1 with two flat derivatives at
    each end, mild slopes in between.

    The flat ends make the opposite junction blind to a cutoff (value,
    slope and curvature terms all vanish there), and the mild interior
    bounds matter for long time integrations: steeper ramps (higher
    polynomial degree, or exponential bumps) concentrate curvature
    near the junctions and destabilize the flow.
    """
    s = u**3 * (10.0 + u * (-15.0 + 6.0 * u))
    ds = 30.0 * u**2 * (1.0 - u) ** 2
    d2s = 60.0 * u * (1.0 - 3.0 * u + 2.0 * u**2)
    return s, ds, d2s


def tangential_profile(bubble: StandardBubble, grid: ArcGrid,
                       width_fraction: float = 1.0) -> TangentialProfile:
    if not (0 < width_fraction <= 1.0):
        raise ValueError(
            f"width_fraction must be in (0, 1], got {width_fraction}")
    cps, dcps, d2cps = [], [], []
    cms, dcms, d2cms = [], [], []
    taus = []
    for i, (x, li) in enumerate(zip(grid.x, grid.half_len), start=1):
        w = width_fraction * 2 * li
        u = np.clip((x - (li - w)) / w, 0.0, 1.0)
        s, ds, d2s = _smoothstep(u)
        cps.append(s)
        dcps.append(ds / w)
        d2cps.append(d2s / (w * w))
        v = np.clip(((-li + w) - x) / w, 0.0, 1.0)
        s, ds, d2s = _smoothstep(v)
        cms.append(-s)
        dcms.append(ds / w)
        d2cms.append(-d2s / (w * w))
        t = geometry.tangent_at(bubble, i, x)
        taus.append((cps[-1] + cms[-1])[:, None] * t)
    return TangentialProfile(width_fraction=width_fraction,
                             cp=tuple(cps), dcp=tuple(dcps),
                             d2cp=tuple(d2cps), cm=tuple(cms),
                             dcm=tuple(dcms), d2cm=tuple(d2cms),
                             tau=tuple(taus))


def slaved_shift(grid: ArcGrid, field: PerturbationField, i: int,
                 profile: TangentialProfile):
    """Tangential shift mu^+ c^+ + mu^- c^- on arc i with derivatives.

    Returns (mc, mdc, md2c) node arrays with mc(+l_i) = mu^+_i and
    mc(-l_i) = -mu^-_i (the junction map's sign convention flips with
    the cyclic orientation at the lower junction, and the lower cutoff
    carries that sign).  The derivative arrays vanish at both ends, so
    junction conditions see exactly the slaved endpoint shifts.
    """
    j = i - 1
    mp = field.mu_plus[j]
    mm = field.mu_minus[j]
    mc = mp * profile.cp[j] + mm * profile.cm[j]
    mdc = mp * profile.dcp[j] + mm * profile.dcm[j]
    md2c = mp * profile.d2cp[j] + mm * profile.d2cm[j]
    return mc, mdc, md2c


def metric_samples(bubble: StandardBubble, grid: ArcGrid,
                   field: PerturbationField, profile: TangentialProfile):
    """Per-arc (a, b, J) with dPhi/dx = a T + b n* and J = |dPhi/dx|.

    a = 1 - rho*kappa + mu*c', b = rho' + mu*c*kappa.  Raises
    FoldOverError when the graph regime is lost (a <= 0 or J == 0).
    """
    out = []
    for i in range(1, 4):
        k = bubble.kappa[i - 1]
        rho = field.rho[i - 1]
        mc, mdc, _ = slaved_shift(grid, field, i, profile)
        drho = fd_d1(rho, grid.h[i - 1])
        a = 1.0 - rho * k + mdc
        b = drho + mc * k
        jsq = a * a + b * b
        if np.any(a <= 0.0) or np.any(jsq <= 0.0):
            raise FoldOverError(
                f"perturbation folds over on arc {i} "
                f"(min a = {a.min():.3e})")
        out.append((a, b, np.sqrt(jsq)))
    return out


def push_forward(bubble: StandardBubble, grid: ArcGrid,
                 field: PerturbationField,
                 profile: TangentialProfile | None = None):
    """Explicit world-frame polylines of the perturbed configuration.

    Returns three (n_i, 2) arrays.  The graph condition J > 0 is
    checked via metric_samples before any points are produced.
    """
    if profile is None:
        profile = tangential_profile(bubble, grid)
    metric_samples(bubble, grid, field, profile)  # fold-over check
    curves = []
    for i in range(1, 4):
        x = grid.x[i - 1]
        base = geometry.arc_point(bubble, i, x)
        n = geometry.normal_at(bubble, i, x)
        mc = slaved_shift(grid, field, i, profile)[0]
        pts = base + field.rho[i - 1][:, None] * n \
            + mc[:, None] * geometry.tangent_at(bubble, i, x)
        curves.append(pts)
    return curves


def junction_mismatch(curves) -> float:
    """Largest pairwise endpoint gap over the two junctions.

    curves are the three push-forward polylines; first points meet at
    the lower junction, last points at the upper one.
    """
    worst = 0.0
    for idx in (0, -1):
        pts = [np.asarray(c[idx], dtype=float) for c in curves]
        for a in range(3):
            for b in range(a + 1, 3):
                worst = max(worst, float(np.linalg.norm(pts[a] - pts[b])))
    return worst
