"""Grids, finite differences, graph fields and junction coupling."""

import math

import numpy as np
import pytest

from bubbleflow import geometry, perturbation
from bubbleflow.geometry import BubbleParams, standard_bubble
from bubbleflow.perturbation import (JAY, FoldOverError, fd_d1, fd_d2,
                                     field_from_rho, jay_apply,
                                     junction_mismatch, make_grid,
                                     metric_samples, push_forward, simpson,
                                     slaved_shift, tangential_profile,
                                     zero_field)

from oracles import integrate_samples

REF = standard_bubble(BubbleParams())


def test_grid_node_counts_and_spacing():
    grid = make_grid(REF, 64)
    assert grid.n == (64, 28, 64)  # middle arc scales with its length
    for x, h, li, n in zip(grid.x, grid.h, grid.half_len, grid.n):
        assert x[0] == -li and x[-1] == li
        assert abs(h - 2 * li / (n - 1)) < 1e-15
        assert np.max(np.abs(np.diff(x) - h)) < 1e-13


def test_grid_minimum_nodes():
    grid = make_grid(standard_bubble(BubbleParams(gamma=0.05)), 64)
    assert min(grid.n) >= 16


def test_simpson_exact_on_cubics():
    h = 0.1
    x = np.arange(21) * h
    vals = x ** 3 - 2 * x ** 2 + 5
    exact = x[-1] ** 4 / 4 - 2 * x[-1] ** 3 / 3 + 5 * x[-1]
    assert abs(simpson(vals, h) - exact) < 1e-13


def test_simpson_matches_scipy_and_exact():
    h = 0.07
    for n in (17, 18):
        x = np.arange(n) * h
        vals = np.cos(x)
        exact = math.sin(x[-1])
        # composite Simpson truncation (b-a) h^4 |f''''| / 180 ~ 1.5e-7
        assert abs(simpson(vals, h) - exact) < 1e-6
        if n % 2 == 1:
            # identical composite rule on odd sample counts
            assert abs(simpson(vals, h)
                       - integrate_samples(vals, h)) < 1e-13
        else:
            # different even-count tail corrections, both O(h^4) exact
            assert abs(simpson(vals, h)
                       - integrate_samples(vals, h)) < 2e-6


def test_fd_convolution_fourth_order_convergence():
    errs = []
    for n in (33, 65):
        x = np.linspace(-1.0, 1.0, n)
        h = x[1] - x[0]
        d1 = fd_d1(np.sin(3 * x), h) - 3 * np.cos(3 * x)
        d2 = fd_d2(np.sin(3 * x), h) + 9 * np.sin(3 * x)
        errs.append(max(np.max(np.abs(d1)), np.max(np.abs(d2))))
    assert errs[0] / errs[1] > 12  # ~16 for genuine 4th order


def test_fd_end_rows_match_interior_truncation_response():
    # [DERIVED] the one-sided end rows are built so the composed error
    # on x^5 (d1) and x^6 (d2) equals the interior stencil's response:
    # -4 h^4 and -8 h^4 uniformly at every node, interior and ends
    n, h = 16, 0.37
    x = (np.arange(n) - 5) * h
    e1 = fd_d1(x ** 5, h) - 5 * x ** 4
    e2 = fd_d2(x ** 6, h) - 30 * x ** 4
    assert np.max(np.abs(e1 / h ** 4 + 4.0)) < 1e-7
    assert np.max(np.abs(e2 / h ** 4 + 8.0)) < 1e-6


def test_fd_exact_on_quartics_everywhere():
    n, h = 14, 0.21
    x = (np.arange(n) - 6) * h
    p = 0.3 * x ** 4 - x ** 3 + 2 * x - 7
    dp = 1.2 * x ** 3 - 3 * x ** 2 + 2
    d2p = 3.6 * x ** 2 - 6 * x
    assert np.max(np.abs(fd_d1(p, h) - dp)) < 1e-11
    assert np.max(np.abs(fd_d2(p, h) - d2p)) < 1e-10


def test_jay_structure():
    # [TRIVIAL] antisymmetric, zero diagonal, rows sum to zero
    assert np.max(np.abs(JAY + JAY.T)) == 0.0
    assert np.max(np.abs(JAY @ np.ones(3))) < 1e-16
    assert abs(JAY[0, 1] + 1 / math.sqrt(3)) < 1e-16


def test_jay_apply_matches_matrix():
    rho_ends = np.array([0.3, -0.1, 0.25])
    assert np.max(np.abs(jay_apply(rho_ends) - JAY @ rho_ends)) < 1e-16


def test_zero_field_push_forward_is_reference():
    grid = make_grid(REF, 48)
    curves = push_forward(REF, grid, zero_field(grid))
    for i, curve in enumerate(curves, start=1):
        exact = geometry.arc_point(REF, i, grid.x[i - 1])
        assert np.max(np.abs(curve - exact)) < 1e-14


def test_field_from_rho_slaves_junction_shifts():
    grid = make_grid(REF, 48)
    rng = np.random.default_rng(5)
    rho = tuple(1e-2 * rng.standard_normal(m) for m in grid.n)
    field = field_from_rho(grid, rho)
    plus = np.array([c[-1] for c in rho])
    minus = np.array([c[0] for c in rho])
    assert np.max(np.abs(field.mu_plus - JAY @ plus)) < 1e-15
    assert np.max(np.abs(field.mu_minus - JAY @ minus)) < 1e-15


def test_admissible_displacement_closes_junctions():
    # displace the upper junction by a single world vector v: the three
    # graph values rho_i = v . n_i close the triple point exactly
    grid = make_grid(REF, 64)
    v = np.array([3e-3, -2e-3])
    rho = []
    for i in (1, 2, 3):
        li = grid.half_len[i - 1]
        np_ = geometry.normal_at(REF, i, li)
        nm = geometry.normal_at(REF, i, -li)
        x = grid.x[i - 1]
        rho.append((v @ np_) * (x + li) / (2 * li)
                   + 0.0 * (v @ nm) * (li - x) / (2 * li))
    field = field_from_rho(grid, tuple(rho))
    curves = push_forward(REF, grid, field)
    assert junction_mismatch(curves) < 1e-14


def test_junction_mismatch_measures_pure_normal_gap():
    # [DERIVED] rho endpoint values (1, 0, -1)*eps with mu = 0 leave a
    # largest pairwise endpoint gap of exactly eps at the junctions
    grid = make_grid(REF, 64)
    eps = 1e-3
    rho = []
    for i, wt in zip((1, 2, 3), (1.0, 0.0, -1.0)):
        x = grid.x[i - 1]
        li = grid.half_len[i - 1]
        rho.append(eps * wt * np.ones_like(x))
    field = perturbation.PerturbationField(rho=tuple(rho),
                                           mu_plus=np.zeros(3),
                                           mu_minus=np.zeros(3))
    gap = junction_mismatch(push_forward(REF, grid, field))
    assert abs(gap - eps) < 1e-9


def test_tangential_profile_endpoint_jets():
    grid = make_grid(REF, 64)
    profile = tangential_profile(REF, grid)
    for j in range(3):
        # c+ carries the upper junction: value 1 there, dead at lower
        assert abs(profile.cp[j][-1] - 1.0) < 1e-15
        assert abs(profile.cp[j][0]) < 1e-15
        # c- carries the lower junction with the opposite sign
        assert abs(profile.cm[j][0] + 1.0) < 1e-15
        assert abs(profile.cm[j][-1]) < 1e-15
        # both cutoffs are flat through two derivatives at both ends
        for arr in (profile.dcp[j], profile.d2cp[j],
                    profile.dcm[j], profile.d2cm[j]):
            assert abs(arr[0]) < 1e-14 and abs(arr[-1]) < 1e-14


def test_tangential_profile_rejects_bad_width():
    with pytest.raises(ValueError):
        tangential_profile(REF, make_grid(REF, 32), width_fraction=0.0)
    with pytest.raises(ValueError):
        tangential_profile(REF, make_grid(REF, 32), width_fraction=1.5)


def test_slaved_shift_endpoint_values_and_flat_derivatives():
    grid = make_grid(REF, 48)
    profile = tangential_profile(REF, grid)
    rng = np.random.default_rng(9)
    rho = tuple(1e-2 * rng.standard_normal(m) for m in grid.n)
    field = field_from_rho(grid, rho)
    for i in (1, 2, 3):
        mc, mdc, md2c = slaved_shift(grid, field, i, profile)
        # the junction map's sign flips with the cyclic orientation at
        # the lower junction; the lower cutoff carries that sign
        assert abs(mc[-1] - field.mu_plus[i - 1]) < 1e-15
        assert abs(mc[0] + field.mu_minus[i - 1]) < 1e-15
        assert abs(mdc[0]) < 1e-14 and abs(mdc[-1]) < 1e-14
        assert abs(md2c[0]) < 1e-14 and abs(md2c[-1]) < 1e-14


def test_metric_samples_identity_at_zero_field():
    grid = make_grid(REF, 48)
    profile = tangential_profile(REF, grid)
    for a, b, jac in metric_samples(REF, grid, zero_field(grid), profile):
        assert np.max(np.abs(a - 1.0)) < 1e-15
        assert np.max(np.abs(b)) < 1e-15
        assert np.max(np.abs(jac - 1.0)) < 1e-15


def test_fold_over_detection():
    grid = make_grid(REF, 48)
    profile = tangential_profile(REF, grid)
    # rho ~ 1/kappa turns the metric degenerate on the curved arcs
    rho = tuple(1.05 * np.ones(m) for m in grid.n)
    with pytest.raises(FoldOverError):
        metric_samples(REF, grid, field_from_rho(grid, rho), profile)
