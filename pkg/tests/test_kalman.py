import numpy as np
import pytest
from numpy.polynomial import chebyshev as C

from nullctrl import (InvalidKernelError, ValidationError, build_system,
                      dirichlet_interval_model, invisible_adjoint_solution,
                      kalman_certificate)
from nullctrl.kalman import (bad_set, build_Kp, kernel_vector,
                             minor_polynomials, rank_at)


@pytest.fixture(scope="module")
def diag_pair():
    # two heat equations with distinct diffusivities, one control each
    return build_system(D=np.diag([1.0, 2.0]), Q=np.zeros((2, 2)), R=np.eye(2))


@pytest.fixture(scope="module")
def rank_one_pair():
    # equal diffusivities driven through a single shared channel:
    # the Kalman matrix is rank one at every gamma
    return build_system(D=np.eye(2), Q=np.zeros((2, 2)), R=[[1.0], [1.0]])


@pytest.fixture(scope="module")
def bad_root_system():
    # cascade whose single Kalman minor is gamma - 1: the rank drops
    # exactly at gamma = 1
    return build_system(D=np.diag([1.0, 2.0]), Q=[[0.0, 1.0], [0.0, 0.0]],
                        R=[[1.0], [1.0]])


def test_build_Kp_diagonal_pair(diag_pair):
    K = build_Kp(diag_pair, 3.0)
    np.testing.assert_allclose(K, [[1, 0, 3, 0], [0, 1, 0, 6]])


def test_build_Kp_cascade(case3_system):
    K = build_Kp(case3_system, 2.0)
    np.testing.assert_allclose(K, [[1, 2], [0, 1]])


def test_build_Kp_single_equation(scalar_system):
    K = build_Kp(scalar_system, 7.0)
    np.testing.assert_allclose(K, [[1.0]])


def test_rank_at(diag_pair, rank_one_pair, bad_root_system):
    assert rank_at(diag_pair, 3.0) == 2
    assert rank_at(rank_one_pair, 5.0) == 1
    assert rank_at(bad_root_system, 1.0) == 1
    assert rank_at(bad_root_system, 2.0) == 2


def test_rank_at_zero_input():
    s = build_system(D=np.eye(2), Q=np.zeros((2, 2)), R=np.zeros((2, 1)))
    assert rank_at(s, 1.0) == 0


def test_kernel_vector_sign_and_residual(rank_one_pair):
    z = kernel_vector(rank_one_pair, 1.0)
    np.testing.assert_allclose(z, [1, -1] / np.sqrt(2), atol=1e-12)
    assert np.linalg.norm(build_Kp(rank_one_pair, 1.0).T @ z) <= 1e-12


def test_minor_polynomial_degree_bound(diag_pair, bad_root_system):
    for s in (diag_pair, bad_root_system):
        deg = s.n * (s.n - 1)
        samples, coeffs = minor_polynomials(s, 1.0)
        assert samples.shape == (deg + 1,)
        assert coeffs.shape[1] == deg + 1


def test_minor_polynomials_reproduce_held_out_points(diag_pair):
    """Fitted minors must match direct evaluation at fresh gamma points."""
    from itertools import combinations

    rng = np.random.default_rng(42)
    for s in (diag_pair,
              build_system(D=np.diag([1.0, 2.0, 3.0]),
                           Q=[[0.0, 5.0, 0.0], [0.0, 0.0, -3.0],
                              [0.0, 0.0, 0.0]],
                           R=np.column_stack([np.ones(3), [0, 1, 0]]))):
        deg = s.n * (s.n - 1)
        lo = 1.0
        hi = lo + deg + 1.0
        _, coeffs = minor_polynomials(s, lo)
        cols = list(combinations(range(s.n * s.m), s.n))
        held_out = rng.uniform(lo, hi, size=10)
        for g in held_out:
            K = build_Kp(s, g)
            u = 2.0 * (g - lo) / (hi - lo) - 1.0
            for j, sel in enumerate(cols):
                direct = np.linalg.det(K[:, sel])
                fitted = C.chebval(u, coeffs[j])
                assert abs(fitted - direct) <= 1e-9 * (1.0 + abs(direct))


def test_minor_polynomials_reject_bad_gamma_lo(diag_pair):
    with pytest.raises(ValidationError):
        minor_polynomials(diag_pair, 0.0)


def test_bad_set_single_root(bad_root_system):
    bad, degenerate = bad_set(bad_root_system, 1.0)
    assert not degenerate
    assert len(bad) == 1
    assert bad[0] == pytest.approx(1.0, abs=1e-10)


def test_bad_set_roots_far_from_sampling_window():
    # the fitted minors are exact polynomials, so roots well outside the
    # sampled interval are still located
    for a in (2.5, 7.0, 123.75):
        s = build_system(D=np.diag([1.0, 2.0]), Q=[[0.0, a], [0.0, 0.0]],
                         R=[[1.0], [1.0]])
        bad, degenerate = bad_set(s, 1.0)
        assert not degenerate
        assert len(bad) == 1
        assert bad[0] == pytest.approx(a, rel=1e-10)


def test_bad_set_three_equation_cascade_against_polyfit_oracle():
    s = build_system(D=np.diag([1.0, 2.0, 3.0]),
                     Q=[[0.0, 5.0, 0.0], [0.0, 0.0, -3.0], [0.0, 0.0, 0.0]],
                     R=[[1.0], [1.0], [1.0]])
    # independent oracle: the lone minor is a cubic in gamma, recovered
    # here by least squares on a dense grid and solved with np.roots
    gs = np.linspace(0.2, 30.0, 41)
    dets = [np.linalg.det(build_Kp(s, g)) for g in gs]
    roots = np.roots(np.polyfit(gs, dets, 3))
    expected = sorted(r.real for r in roots
                      if abs(r.imag) < 1e-8 and r.real > 0)
    bad, degenerate = bad_set(s, 1.0)
    assert not degenerate
    np.testing.assert_allclose(bad, expected, rtol=1e-9)


def test_bad_set_degenerate(rank_one_pair):
    bad, degenerate = bad_set(rank_one_pair, 1.0)
    assert degenerate and bad == []


def test_bad_set_empty_for_controllable(diag_pair):
    assert bad_set(diag_pair, 1.0) == ([], False)


def test_certificate_controllable(diag_pair, interval10, case3_system):
    for s in (diag_pair, case3_system,
              build_system(D=np.eye(2), Q=[[0.0, 1.0], [0.0, 0.0]],
                           R=[[0.0], [1.0]])):
        v = kalman_certificate(s, interval10)
        assert v.controllable
        assert not v.degenerate
        assert v.p0 is None and v.z0 is None
        assert v.bad_gammas == ()


def test_certificate_fails_when_root_hits_spectrum(bad_root_system, interval10):
    v = kalman_certificate(bad_root_system, interval10)
    assert not v.controllable
    assert not v.degenerate
    assert v.p0 == 0
    assert v.gamma_p0 == pytest.approx(1.0)
    assert v.bad_gammas[0] == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.norm(build_Kp(bad_root_system, 1.0).T @ v.z0) <= 1e-10


def test_certificate_controllable_when_root_misses_spectrum(bad_root_system):
    # same system, but on a unit interval the spectrum starts at pi^2
    # and never meets the bad root at 1
    model = dirichlet_interval_model(10, 1.0)
    v = kalman_certificate(bad_root_system, model)
    assert v.controllable
    assert v.bad_gammas[0] == pytest.approx(1.0, abs=1e-8)


def test_certificate_degenerate(rank_one_pair, interval10):
    v = kalman_certificate(rank_one_pair, interval10)
    assert not v.controllable
    assert v.degenerate
    assert v.p0 == 0
    assert v.gamma_p0 == pytest.approx(1.0)
    np.testing.assert_allclose(np.abs(v.z0), [1, -1] / np.sqrt(2) * [1, -1],
                               atol=1e-12)


def test_certificate_agrees_with_brute_force(diag_pair, rank_one_pair,
                                             bad_root_system, case3_system):
    """Verdicts must match a direct rank scan over 500 eigenvalues."""
    model = dirichlet_interval_model(500, np.pi)
    for s in (diag_pair, rank_one_pair, bad_root_system, case3_system):
        v = kalman_certificate(s, model)
        ranks = [rank_at(s, float(g)) for g in model.eigenvalues]
        full = [r == s.n for r in ranks]
        assert v.controllable == all(full)
        if not v.controllable:
            assert v.p0 == full.index(False)


def test_invisible_solution_unseen_but_nonzero(rank_one_pair, interval10):
    v = kalman_certificate(rank_one_pair, interval10)
    sol = invisible_adjoint_solution(rank_one_pair, interval10, v.p0, v.z0,
                                     horizon=1.0)
    times = np.linspace(0.0, 1.0, 100)
    obs = sol.observation(times)
    assert np.abs(obs).max() <= 1e-10
    assert np.linalg.norm(sol.coefficient(0.0)) > 1e-3
    np.testing.assert_allclose(sol.coefficient(1.0), v.z0, atol=1e-14)


def test_invisible_solution_coefficient_closed_form(rank_one_pair, interval10):
    # equal unit diffusivities at gamma = 1: z(t) = e^{-(1-t)} z0
    z0 = np.array([1.0, -1.0]) / np.sqrt(2)
    sol = invisible_adjoint_solution(rank_one_pair, interval10, 0, z0, 1.0)
    for t in (0.0, 0.3, 0.9):
        np.testing.assert_allclose(sol.coefficient(t),
                                   np.exp(-(1.0 - t)) * z0, rtol=1e-12)


def test_invisible_solution_field_shape(rank_one_pair, interval10):
    z0 = np.array([1.0, -1.0]) / np.sqrt(2)
    sol = invisible_adjoint_solution(rank_one_pair, interval10, 0, z0, 1.0)
    pts = np.linspace(0.1, 3.0, 7)[:, None]
    field = sol.field(0.5, pts)
    assert field.shape == (7, 2, 1)
    phi = interval10.eigenfunctions(pts)[0, :, 0]
    np.testing.assert_allclose(field[:, 0, 0],
                               sol.coefficient(0.5)[0] * phi, rtol=1e-12)


def test_invisible_solution_rejections(rank_one_pair, diag_pair, interval10):
    good = np.array([1.0, -1.0]) / np.sqrt(2)
    with pytest.raises(InvalidKernelError):
        invisible_adjoint_solution(rank_one_pair, interval10, 0,
                                   [1.0, -1.0], 1.0)  # not unit length
    with pytest.raises(InvalidKernelError):
        invisible_adjoint_solution(diag_pair, interval10, 0, good, 1.0)
    with pytest.raises(ValidationError):
        invisible_adjoint_solution(rank_one_pair, interval10, 99, good, 1.0)
    with pytest.raises(ValidationError):
        invisible_adjoint_solution(rank_one_pair, interval10, 0, good, 0.0)
    sol = invisible_adjoint_solution(rank_one_pair, interval10, 0, good, 1.0)
    with pytest.raises(ValidationError):
        sol.coefficient(1.5)
