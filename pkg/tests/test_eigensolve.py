"""Eigensolver tests against dense references.

Everything here is checked twice over: once through the matvec-only
Lanczos/bisection paths under test, once through numpy's eigh on the
assembled matrix.
"""

import json

import numpy as np
import pytest

from ballwalk.densities import make_density
from ballwalk.eigensolve import (
    CLUSTER_RTOL,
    MAX_K,
    EigenResult,
    bottom_k,
    count_in_interval,
    dense_reference,
    top_k,
)
from ballwalk.errors import ConfigError, NoConvergence
from ballwalk.operators import (
    BANDED,
    MULTIPLIER,
    DiscreteOperator,
    Grid,
    build_conjugated,
    build_schrodinger,
)


@pytest.fixture(scope="module")
def gauss_half():
    return make_density("gaussian", 1, 0.5)


@pytest.fixture(scope="module")
def banded_op(gauss_half):
    return build_conjugated(Grid(1, 9.0, 720), gauss_half, 0.25, scheme=BANDED)


# --- Lanczos vs dense ---------------------------------------------------------

def test_top_k_matches_dense(banded_op):
    r = top_k(banded_op, 6)
    lam = np.linalg.eigvalsh(banded_op.to_dense())[::-1][:6]
    np.testing.assert_allclose(r.eigenvalues, lam, atol=1e-9)
    assert r.method == "LanczosFull"
    assert np.all(r.residuals <= 1e-9)


def test_top_k_multiplier_matches_dense(gauss_half):
    T = build_conjugated(Grid(1, 12.0, 1600), gauss_half, 0.25, scheme=MULTIPLIER)
    r = top_k(T, 4)
    lam = np.linalg.eigvalsh(T.to_dense())[::-1][:4]
    np.testing.assert_allclose(r.eigenvalues, lam, atol=1e-9)


def test_dense_reference_agrees(banded_op):
    r = dense_reference(banded_op, k=6)
    s = top_k(banded_op, 6)
    np.testing.assert_allclose(r.eigenvalues, s.eigenvalues, atol=1e-9)
    assert r.method == "DenseReference"


def test_top_k_deterministic(banded_op):
    a = top_k(banded_op, 5)
    b = top_k(banded_op, 5)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)


def test_eigenvectors_orthonormal(banded_op):
    r = top_k(banded_op, 6)
    V = r.eigenvectors * np.sqrt(banded_op.grid.delta)  # undo L^2(dx) scale
    G = V.T @ V
    np.testing.assert_allclose(G, np.eye(6), atol=1e-8)


def test_eigenvector_equation(banded_op):
    r = top_k(banded_op, 3)
    for j in range(3):
        v = r.eigenvectors[:, j]
        resid = np.linalg.norm(banded_op.matvec(v) - r.eigenvalues[j] * v)
        assert resid <= 1e-9 * np.linalg.norm(v)


def test_identity_operator_multiplicity():
    # pure breakdown path: every start vector is an eigenvector
    g = Grid(1, 4.0, 64)
    T = DiscreteOperator(MULTIPLIER, "ball_average", g, 0.5, True,
                         symbol=np.ones(g.N // 2 + 1))
    r = top_k(T, 3)
    np.testing.assert_allclose(r.eigenvalues, 1.0, atol=1e-12)
    assert r.clusters == [(pytest.approx(1.0), 3)]


def test_degenerate_levels_d2():
    # radial harmonic well: levels 0, 2, 2, 4, 4, 4; the grid keeps the
    # (2,0)/(0,2) pair exactly degenerate while (1,1) splits at O(delta^2)
    g = Grid(2, 7.0, 70)
    dens = make_density("gaussian", 2, 0.5)
    r = bottom_k(build_schrodinger(g, dens), 6)
    mu = r.eigenvalues
    assert abs(mu[0]) < 0.01
    np.testing.assert_allclose(mu[1:3], 2.0, atol=0.04)
    np.testing.assert_allclose(mu[3:6], 4.0, atol=0.05)
    assert abs(mu[1] - mu[2]) < 1e-7
    assert abs(mu[3] - mu[4]) < 1e-7
    sizes = [s for _, s in r.clusters]
    assert sizes[0] == 1 and 2 in sizes
    assert sum(sizes) == 6


def test_bottom_k_d1_is_sturm(gauss_half):
    g = Grid(1, 6.0, 1200)
    r = bottom_k(build_schrodinger(g, gauss_half), 4)
    assert r.method == "SturmBisection"
    target = np.array([0.0, 2.0, 4.0, 6.0])
    for k in range(4):
        assert abs(r.eigenvalues[k] - target[k]) <= 2e-4 * (1 + k)


def test_sigma_monotone(banded_op):
    r = top_k(banded_op, 6)
    sigma = (1.0 - r.eigenvalues) / banded_op.h**2
    assert np.all(np.diff(sigma) >= -1e-12)


def test_lambda_one_stable_under_n_doubling(gauss_half):
    lam = [
        top_k(build_conjugated(Grid(1, 12.0, n), gauss_half, 0.25, scheme=MULTIPLIER), 2).eigenvalues
        for n in (800, 1600)
    ]
    assert abs(lam[0][1] - lam[1][1]) < 1e-8


def test_eigenvector_mass_localized(gauss_half):
    g = Grid(1, 12.0, 1920)
    r = top_k(build_conjugated(g, gauss_half, 0.25, scheme=MULTIPLIER), 4)
    outside = np.abs(g.axis_nodes()) > 8.0
    for j in range(4):
        v = r.eigenvectors[:, j]
        assert np.sum(v[outside] ** 2) / np.sum(v**2) < 1e-6


# --- failure modes ------------------------------------------------------------

def test_k_validation(banded_op):
    with pytest.raises(ConfigError):
        top_k(banded_op, 0)
    with pytest.raises(ConfigError):
        top_k(banded_op, MAX_K + 1)


def test_no_convergence_on_tiny_budget(banded_op):
    with pytest.raises(NoConvergence):
        top_k(banded_op, 5, max_iter=4)


# --- inertia counts -----------------------------------------------------------

def test_count_matches_dense(gauss_half):
    g = Grid(1, 6.0, 600)
    L = build_schrodinger(g, gauss_half)
    lam = np.linalg.eigvalsh(L.to_dense())
    r = count_in_interval(L, 1.0, 5.0)
    assert r.count == int(np.sum((lam > 1.0) & (lam <= 5.0)))


def test_count_half_open_at_exact_hits(gauss_half):
    # a computed eigenvalue placed on a bound must resolve as (a, b]
    g = Grid(1, 6.0, 600)
    L = build_schrodinger(g, gauss_half)
    lam = np.linalg.eigvalsh(L.to_dense())
    assert count_in_interval(L, lam[2], 7.0).count == int(
        np.sum((lam > lam[2]) & (lam <= 7.0))
    )
    assert count_in_interval(L, -1.0, lam[2]).count == int(
        np.sum((lam > -1.0) & (lam <= lam[2]))
    )


def test_count_catches_top_eigenvalue_at_one(banded_op):
    # lam_0 = 1 up to last-bit rounding on either side; an interval ending
    # at 1.0 must still contain it
    r = top_k(banded_op, 2)
    mid = 0.5 * (1.0 + r.eigenvalues[1])
    assert count_in_interval(banded_op, mid, 1.0).count == 1


def test_count_densified_multiplier(gauss_half):
    g = Grid(1, 9.0, 1200)
    T = build_conjugated(g, gauss_half, 0.25, scheme=MULTIPLIER)
    lam = np.linalg.eigvalsh(T.to_dense())
    r = count_in_interval(T, 0.9, 1.0)
    assert r.count == int(np.sum((lam > 0.9) & (lam <= 1.0)))


def test_count_densified_size_cap(gauss_half):
    T = build_conjugated(Grid(1, 9.0, 2400), gauss_half, 0.25, scheme=MULTIPLIER)
    with pytest.raises(ConfigError):
        count_in_interval(T, 0.9, 1.0)


def test_count_interval_validation(banded_op):
    with pytest.raises(ConfigError):
        count_in_interval(banded_op, 1.0, 1.0)


# --- serialization --------------------------------------------------------------

def test_eigen_result_json(banded_op):
    r = top_k(banded_op, 3)
    blob = json.loads(r.to_json())
    assert blob["method"] == "LanczosFull"
    np.testing.assert_allclose(blob["eigenvalues"], r.eigenvalues)
    assert len(blob["residuals"]) == 3
    assert blob["grid"]["N"] == 720
    assert [tuple(c) for c in blob["clusters"]] == [
        (pytest.approx(v), s) for v, s in r.clusters
    ]


def test_count_result_json(banded_op):
    r = count_in_interval(banded_op, 0.9, 1.0)
    blob = json.loads(r.to_json())
    assert blob["count"] == r.count
    assert blob["interval"] == [0.9, 1.0]
