import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aris.channel import compose_effective_channels
from aris.errors import InvalidParameterError, RetractionSingularityError
from aris.metrics import PrecoderSet, weighted_mse
from aris.rcg import (assemble_quadratic, quad_value, rcg_minimize, retract, retract_and_transport,
                      riemannian_gradient, tier_weighted_mse)
from aris.wmmse import update_auxiliaries

from helpers import cn, random_channel_set, random_phase_vector, random_precoders

NOISE = 0.5


def random_hermitian_psd(rng, n, rank=None):
    a = cn(rng, n, rank or n)
    return a @ a.conj().T


def instance(rng, **kw):
    cs = random_channel_set(rng, **kw)
    s = cs.n_slots
    v_u = random_phase_vector(rng, s, cs.tbs_u.shape[1])
    v_h = random_phase_vector(rng, s, cs.sat_h.shape[1])
    eff = compose_effective_channels(cs, v_u, v_h)
    prec = random_precoders(rng, eff)
    aux = update_auxiliaries(eff, prec, NOISE, NOISE)
    return cs, prec, aux, v_u, v_h


# --- assembly ------------------------------------------------------------------------

@pytest.mark.parametrize("tier", ["uav", "hap"])
def test_zero_precoders_give_zero_form(rng, tier):
    cs, prec, aux, v_u, v_h = instance(rng)
    zero = PrecoderSet(np.zeros_like(prec.w_b), np.zeros_like(prec.w_s))
    quad = assemble_quadratic(tier, cs, zero, aux, v_h if tier == "uav" else v_u, NOISE, NOISE)
    assert np.all(quad.Q == 0)
    assert np.all(quad.q == 0)


def test_single_user_form_matches_weighted_mse(rng):
    cs, prec, aux, v_u, v_h = instance(rng, s=1, k=1, l=0)
    quad = assemble_quadratic("uav", cs, prec, aux, v_h, NOISE, NOISE)
    for _ in range(20):
        v = random_phase_vector(rng, 1, cs.tbs_u.shape[1])
        eff = compose_effective_channels(cs, v, v_h)
        rep = weighted_mse(eff, prec, aux.u_k, aux.u_l, aux.omega_k, aux.omega_l, NOISE, NOISE)
        expected = rep.weighted_k[0, 0]
        got = quad.value(v)[0] + quad.const[0]
        assert got == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("tier", ["uav", "hap"])
def test_form_is_hermitian_psd(rng, tier):
    for _ in range(10):
        cs, prec, aux, v_u, v_h = instance(rng)
        quad = assemble_quadratic(tier, cs, prec, aux, v_h if tier == "uav" else v_u, NOISE, NOISE)
        assert np.max(np.abs(quad.Q - np.conj(np.swapaxes(quad.Q, 1, 2)))) <= 1e-10
        assert np.min(np.linalg.eigvalsh(quad.Q)) >= -1e-9


@pytest.mark.parametrize("tier", ["uav", "hap"])
def test_form_differences_match_weighted_mse_changes(rng, tier):
    """f(v) - f(v') equals the change of the tier's weighted MSE slice."""
    for _ in range(50):
        cs, prec, aux, v_u, v_h = instance(rng)
        other = v_h if tier == "uav" else v_u
        quad = assemble_quadratic(tier, cs, prec, aux, other, NOISE, NOISE)
        n = quad.q.shape[1]
        v1 = random_phase_vector(rng, cs.n_slots, n)
        v2 = random_phase_vector(rng, cs.n_slots, n)

        def oracle(v):
            pair = (v, v_h) if tier == "uav" else (v_u, v)
            eff = compose_effective_channels(cs, *pair)
            return tier_weighted_mse(tier, eff, prec, aux, NOISE, NOISE)

        diff_form = quad.value(v1) - quad.value(v2)
        diff_mse = oracle(v1) - oracle(v2)
        np.testing.assert_allclose(diff_form, diff_mse, rtol=1e-7, atol=1e-12 * np.max(np.abs(diff_mse)))


def test_tier_slice_differences_match_full_weighted_mse_changes(rng):
    """The tier slice captures every v-dependent term of the total weighted MSE."""
    for tier in ("uav", "hap"):
        cs, prec, aux, v_u, v_h = instance(rng)
        n = v_u.shape[1] if tier == "uav" else v_h.shape[1]
        v1 = random_phase_vector(rng, cs.n_slots, n)
        v2 = random_phase_vector(rng, cs.n_slots, n)

        def total(v):
            pair = (v, v_h) if tier == "uav" else (v_u, v)
            eff = compose_effective_channels(cs, *pair)
            return weighted_mse(eff, prec, aux.u_k, aux.u_l, aux.omega_k, aux.omega_l, NOISE, NOISE).objective

        def sliced(v):
            pair = (v, v_h) if tier == "uav" else (v_u, v)
            return tier_weighted_mse(tier, compose_effective_channels(cs, *pair), prec, aux, NOISE, NOISE)

        np.testing.assert_allclose(sliced(v1) - sliced(v2), total(v1) - total(v2), rtol=1e-9)


def test_form_not_invariant_under_common_rotation(rng):
    cs, prec, aux, v_u, v_h = instance(rng)
    quad = assemble_quadratic("uav", cs, prec, aux, v_h, NOISE, NOISE)
    rotated = v_u * np.exp(0.7j)
    assert np.all(np.abs(quad.value(v_u) - quad.value(rotated)) > 1e-12)


def test_unknown_tier_and_mismatch_rejected(rng):
    cs, prec, aux, v_u, v_h = instance(rng)
    with pytest.raises(InvalidParameterError):
        assemble_quadratic("ground", cs, prec, aux, v_h, NOISE, NOISE)
    _, _, aux_small, _, _ = instance(rng, k=2)
    with pytest.raises(InvalidParameterError):
        assemble_quadratic("uav", cs, prec, aux_small, v_h, NOISE, NOISE)


# --- manifold primitives ---------------------------------------------------------------

def test_gradient_vanishes_at_unconstrained_minimizer_on_manifold(rng):
    n = 5
    Q = random_hermitian_psd(rng, n)
    v = random_phase_vector(rng, n)
    q = Q @ v  # stationary point of the unconstrained quadratic
    assert np.max(np.abs(riemannian_gradient(Q, q, v))) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8))
def test_gradient_is_tangent(seed, n):
    r = np.random.default_rng(seed)
    Q, q, v = random_hermitian_psd(r, n), cn(r, n), random_phase_vector(r, n)
    g = riemannian_gradient(Q, q, v)
    assert np.max(np.abs(np.real(g * np.conj(v)))) <= 1e-12 * max(1.0, np.max(np.abs(g)))


def test_gradient_matches_finite_difference(rng):
    for _ in range(20):
        n = 6
        Q, q, v = random_hermitian_psd(rng, n), cn(rng, n), random_phase_vector(rng, n)
        g = riemannian_gradient(Q, q, v)
        eps = 1e-6
        fd = (quad_value(Q[None], q[None], retract(v, eps, g)[None])[0] - quad_value(Q[None], q[None], v[None])[0]) / eps
        assert fd == pytest.approx(np.sum(np.abs(g) ** 2), rel=1e-4)


def test_zero_step_retraction_is_identity(rng):
    v = random_phase_vector(rng, 8)
    d = cn(rng, 8)
    v_new, _ = retract_and_transport(v, 0.0, d, d)
    assert np.array_equal(v_new, v)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3))
def test_retraction_and_transport_properties(seed, step):
    r = np.random.default_rng(seed)
    v = random_phase_vector(r, 6)
    d, prev = cn(r, 6), cn(r, 6)
    v_new, moved = retract_and_transport(v, step, d, prev)
    assert np.max(np.abs(np.abs(v_new) - 1)) <= 1e-12
    assert np.max(np.abs(np.real(moved * np.conj(v_new)))) <= 1e-12 * max(1.0, np.max(np.abs(moved)))


def test_retraction_through_origin_signalled():
    v = np.array([1.0 + 0j, 1j])
    with pytest.raises(RetractionSingularityError):
        retract(v, 1.0, np.array([-1.0 + 0j, 0.5]))


# --- solver -------------------------------------------------------------------------

def test_diagonal_form_reaches_separable_optimum(rng):
    for _ in range(20):
        n = 8
        Q = np.diag(rng.uniform(0.1, 3.0, n)).astype(complex)
        q = cn(rng, n)
        res = rcg_minimize(Q, q, np.ones(n, complex))
        f_star = np.sum(np.diag(Q).real) - 2 * np.sum(np.abs(q))
        assert quad_value(Q[None], q[None], res.v[None])[0] == pytest.approx(f_star, abs=1e-6)


def test_two_element_problem_matches_grid_oracle(rng):
    grid = np.exp(1j * np.deg2rad(np.arange(360)))
    v1, v2 = np.meshgrid(grid, grid, indexing="ij")
    for _ in range(50):
        Q, q = random_hermitian_psd(rng, 2), cn(rng, 2)
        f_grid = (np.abs(v1) ** 2 * Q[0, 0].real + np.abs(v2) ** 2 * Q[1, 1].real
                  + 2 * np.real(np.conj(v1) * Q[0, 1] * v2)
                  - 2 * np.real(np.conj(q[0]) * v1 + np.conj(q[1]) * v2))
        res = rcg_minimize(Q, q, random_phase_vector(rng, 2))
        assert quad_value(Q[None], q[None], res.v[None])[0] <= f_grid.min() + 1e-3


def test_start_at_optimum_stays_put(rng):
    n = 6
    Q = np.diag(rng.uniform(0.5, 2.0, n)).astype(complex)
    q = cn(rng, n)
    res = rcg_minimize(Q, q, q / np.abs(q))
    assert res.iterations <= 1
    assert np.max(np.abs(res.v - q / np.abs(q))) <= 1e-6


def test_objective_monotone_and_iterates_on_manifold(rng):
    Q = random_hermitian_psd(rng, 16, rank=4)[None].repeat(3, axis=0)
    q = cn(rng, 3, 16)
    v0 = random_phase_vector(rng, 3, 16)
    res = rcg_minimize(Q, q, v0, t_max_m=200)
    vals = np.array(res.values)
    assert np.all(np.diff(vals, axis=0) <= 1e-10 * np.maximum(1.0, np.abs(vals[:-1])))
    assert np.max(np.abs(np.abs(res.v) - 1)) <= 1e-10
    assert np.all(quad_value(Q, q, res.v) <= quad_value(Q, q, v0) + 1e-10)


def test_stops_on_gradient_tolerance(rng):
    Q = random_hermitian_psd(rng, 6)
    q = cn(rng, 6)
    res = rcg_minimize(Q, q, random_phase_vector(rng, 6), eps_m=1e-6, t_max_m=500)
    # the tolerance applies to the internally normalized problem
    scale = max(np.linalg.norm(Q), np.linalg.norm(q))
    assert np.linalg.norm(riemannian_gradient(Q, q, res.v)) / scale <= 1e-6 or res.iterations == 500


def test_empty_phase_vector_is_noop():
    res = rcg_minimize(np.zeros((2, 0, 0), complex), np.zeros((2, 0), complex), np.zeros((2, 0), complex))
    assert res.v.shape == (2, 0)
    assert np.all(res.iterations == 0)
