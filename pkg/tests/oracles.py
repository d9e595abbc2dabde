"""Independent cross-checks used by the test suite.

Everything here deliberately avoids the package's own quadrature and
differentiation helpers: areas come from the shoelace formula on dense
polylines, derivatives from plain central differences, and integrals
from scipy.  Frozen reference values in the test modules were produced
with these routines.
"""

import numpy as np
from scipy.integrate import simpson as scipy_simpson


def shoelace_area(points) -> float:
    """Unsigned polygon area of a closed polyline (last edge implicit)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return abs(0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def lobe_polylines(bubble, arc_point, n: int):
    """Boundary polylines of the two lobes, positively oriented.

    Lobe 1 is bounded by arc 1 (x from -l to +l) and arc 2 reversed;
    lobe 2 by arc 2 and arc 3 reversed.  Uses only arc_point sampling.
    """
    xs = [np.linspace(-l, l, n) for l in bubble.half_len]
    a1, a2, a3 = (arc_point(bubble, i, xs[i - 1]) for i in (1, 2, 3))
    lobe1 = np.vstack([a1, a2[::-1][1:-1]])
    lobe2 = np.vstack([a2, a3[::-1][1:-1]])
    return lobe1, lobe2


def central_diff(f, x: float, eps: float) -> float:
    """Plain second-order central difference of a scalar function."""
    return (f(x + eps) - f(x - eps)) / (2 * eps)


def integrate_samples(values, h: float) -> float:
    """Composite integral of uniform samples via scipy's Simpson rule."""
    return float(scipy_simpson(np.asarray(values, dtype=float), dx=h))


def fourth_derivative_samples(f, x, eps: float):
    """Five-point central fourth derivative of a callable, vectorized."""
    x = np.asarray(x, dtype=float)
    return (f(x - 2 * eps) - 4 * f(x - eps) + 6 * f(x)
            - 4 * f(x + eps) + f(x + 2 * eps)) / eps ** 4
