import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilot_selflearn.channel import DespreadObservation, despread, generate_channel, received_pilot_signal
from pilot_selflearn.estimator import (
    ChannelEstimate,
    LikelihoodSurface,
    SearchGrid,
    de_rotate,
    default_grid,
    likelihood_surface,
    mean_square_quality,
    ml_grid_search,
    ml_grid_search_many,
    mmse_channel_estimate,
    rotate,
)
from pilot_selflearn.likelihood import LikelihoodParams, build_quadrature, log_likelihood
from pilot_selflearn.pilots import build_pilot_book, canonical_phases, co_pilot_assignments, make_schedule, structured_phases


def simulate(snr1, snr2, scheme="structured", blocks=10, seed=0, noise=True, rho_p=1.0, tau_p=1):
    ch_seed, noise_seed, sched_seed = np.random.SeedSequence(seed).spawn(3)
    book = build_pilot_book(tau_p)
    sched = make_schedule(scheme, blocks, sched_seed)
    b1, b2 = 10 ** (snr1 / 10) / rho_p, 10 ** (snr2 / 10) / rho_p
    ch = generate_channel(b1, b2, blocks, "los", ch_seed)
    y = received_pilot_signal(ch, book, co_pilot_assignments(sched), rho_p, noise_seed, noise=noise)
    return despread(y, book, 0, rho_p)


def brute_force_argmax(obs, axis_db, quad_nodes=64):
    """Exhaustive scan with the reference likelihood and explicit lexicographic ties."""
    betas = 10 ** (np.asarray(axis_db) / 10) / obs.rho_p
    t = obs.normalized_power()
    rules = [build_quadrature(b, quad_nodes, obs.noise_var) for b in betas]
    best, arg = -np.inf, None
    for i, b1 in enumerate(betas):
        for j, b2 in enumerate(betas):
            params = LikelihoodParams(b1, b2)
            p = 0.5 * (
                _density(t, params, rules[i]) + _density(t, params.swapped(), rules[j])
            )
            ll = float(np.sum(np.log(np.maximum(p, 1e-300))))
            if ll > best:
                best, arg = ll, (axis_db[i], axis_db[j])
    return arg


def _density(t, params, rule):
    from pilot_selflearn.likelihood import marginal_pdf

    return np.atleast_1d(marginal_pdf(t, params, rule))


def test_singleton_grid_returns_it():
    obs = simulate(20, 20, seed=3)
    est = ml_grid_search(obs, SearchGrid(np.array([20.0])))
    assert (est.snr1_db, est.snr2_db) == (20.0, 20.0)
    assert est.beta1_hat == pytest.approx(100.0) and est.beta2_hat == pytest.approx(100.0)


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        SearchGrid(np.array([]))


def test_grid_must_increase():
    with pytest.raises(ValueError):
        SearchGrid(np.array([1.0, 1.0]))


def test_default_grid():
    g = default_grid()
    assert g.beta_values_db[0] == -20 and g.beta_values_db[-1] == 40 and g.beta_values_db.size == 61
    np.testing.assert_allclose(g.refine_axis(5.0), np.round(np.arange(4.0, 6.05, 0.1), 10))
    assert g.refine_axis(40.0).max() == 40.0


@pytest.mark.parametrize("seed", range(10))
def test_coarse_pass_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    snr1, snr2 = rng.uniform(0, 30, 2)
    scheme = ["structured", "pseudorandom", "canonical"][seed % 3]
    obs = simulate(snr1, snr2, scheme, seed=seed)
    axis = np.arange(-10.0, 41.0, 2.0)
    est = ml_grid_search(obs, SearchGrid(axis), refine=False)
    assert (est.snr1_db, est.snr2_db) == brute_force_argmax(obs, axis)


def test_loglik_reported_at_estimate():
    obs = simulate(15, 18, seed=2)
    est = ml_grid_search(obs)
    ref = log_likelihood(obs, LikelihoodParams(est.beta1_hat, est.beta2_hat), symmetric=True)
    assert est.loglik == pytest.approx(ref, rel=1e-12)
    assert est.snr1_db in np.round(np.arange(-20, 40.05, 0.1), 10)


def test_smaller_estimate_goes_to_ue1():
    for seed in range(10):
        est = ml_grid_search(simulate(20, 26, seed=seed))
        assert est.beta1_hat <= est.beta2_hat


def test_rho_tau_scaling():
    # same underlying draws at rho_p = 4 land on the same SNR estimate when noise is off
    a = ml_grid_search(simulate(12, 16, seed=5, noise=False, rho_p=1.0))
    b = ml_grid_search(simulate(12, 16, seed=5, noise=False, rho_p=4.0, tau_p=1))
    assert (a.snr1_db, a.snr2_db) == pytest.approx((b.snr1_db, b.snr2_db), abs=0.15)
    assert b.beta1_hat == pytest.approx(10 ** (b.snr1_db / 10) / 4.0)


def _noiseless_trials(n=200):
    book = build_pilot_book(1)
    s = structured_phases(10)
    for ss in np.random.SeedSequence(42).spawn(n):
        ch = generate_channel(100.0, 100.0, 10, "los", ss)
        y = received_pilot_signal(ch, book, co_pilot_assignments(s), 1.0, noise=False)
        yield ml_grid_search(despread(y, book, 0))


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="|y|^2 pins a+b but only loosely a-b at I=10; about 40% of trials land within 0.5 dB, not 90%",
)
def test_noiseless_structured_within_half_db():
    hits = sum(max(abs(e.snr1_db - 20), abs(e.snr2_db - 20)) <= 0.5 + 1e-9 for e in _noiseless_trials())
    assert hits >= 180


@pytest.mark.slow
def test_noiseless_structured_recovers_total_power():
    hits = sum(abs(e.beta1_hat + e.beta2_hat - 200) <= 20 for e in _noiseless_trials())
    assert hits >= 180


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e6, 1e6))
def test_argmax_shift_invariant(c):
    rng = np.random.default_rng(7)
    ll = rng.normal(size=(9, 9)).round(1)  # rounding creates ties
    axis = np.arange(9.0)
    a = LikelihoodSurface(axis, axis, ll).argmax()
    b = LikelihoodSurface(axis, axis, ll + c).argmax()
    assert a == b


def test_argmax_ties_lexicographic():
    ll = np.zeros((3, 3))
    ll[2, 0] = ll[0, 2] = ll[1, 1] = 1.0
    assert LikelihoodSurface(np.arange(3.0), np.arange(3.0), ll).argmax() == (0, 2)


def test_estimation_decouples():
    batch = [simulate(10 + k, 14 + k, seed=k) for k in range(4)]
    joined = ml_grid_search_many(batch)
    for obs, est in zip(batch, joined):
        assert est == ml_grid_search(obs)


def test_surface_csv():
    obs = simulate(10, 10, seed=1)
    surf = likelihood_surface(obs, [0.0, 10.0], [5.0, 10.0, 15.0])
    rows = surf.to_csv().strip().split("\n")
    assert rows[0] == "beta1_db,beta2_db,loglik" and len(rows) == 7


# --- MMSE -------------------------------------------------------------------


def test_single_user_shrinkage():
    obs = DespreadObservation.from_values([1 + 1j, 2 - 1j])
    est = mmse_channel_estimate(obs, 3.0, 0.0, 1.0, 1, canonical_phases(2))
    np.testing.assert_allclose(est.values[0], 3.0 / 4.0 * obs.values)
    np.testing.assert_allclose(est.values[1], 0)


def test_gain_matches_linear_mmse_from_moments():
    # E[g1 y*] / E|y|^2 for y = sqrt(rho) (g1 + g2) + w / sqrt(tau)
    rho, tau, b1, b2 = 2.5, 4, 0.7, 1.9
    expected = np.sqrt(rho) * b1 / (rho * (b1 + b2) + 1 / tau)
    obs = DespreadObservation.from_values([1.0], rho, tau)
    est = mmse_channel_estimate(obs, b1, b2, rho, tau, canonical_phases(1))
    assert est.values[0, 0] == pytest.approx(expected)
    # E|g_hat|^2 = |c|^2 E|y|^2
    assert est.gamma[0] == pytest.approx(expected**2 * (rho * (b1 + b2) + 1 / tau))


def test_symmetric_quality():
    rt, beta = 3.0, 5.0
    g = mean_square_quality(beta, 2 * beta, rt, 1)
    assert g == pytest.approx(rt * beta**2 / (2 * rt * beta + 1))


def test_quality_bound_random_triples():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        b1, b2 = 10 ** rng.uniform(-3, 3, 2)
        rt = 10 ** rng.uniform(-3, 3)
        assert mean_square_quality(b1, b1 + b2, rt, 1) <= b1
        assert mean_square_quality(b2, b1 + b2, rt, 1) <= b2


def test_quality_bound_tight_at_extremes():
    assert mean_square_quality(2.0, 2.0, 1e12, 1) == pytest.approx(2.0, rel=1e-9)
    assert mean_square_quality(2.0, 2.0 + 1e-9, 1e12, 1) == pytest.approx(2.0, rel=1e-6)
    assert mean_square_quality(2.0, 4.0, 1e12, 1) == pytest.approx(1.0, rel=1e-9)


def test_de_rotate_canonical_identity():
    v = np.array([[1 + 2j, 3.0], [-1j, 0.5]])
    out = de_rotate(ChannelEstimate(v), canonical_phases(2))
    np.testing.assert_array_equal(out.values, v)


@settings(max_examples=25)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_de_rotate_inverts_rotate(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    s = make_schedule("pseudorandom", n, seed)
    np.testing.assert_allclose(de_rotate(rotate(ChannelEstimate(v), s), s).values, v, atol=1e-12)


def test_de_rotate_structured_two_blocks():
    v = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)
    out = de_rotate(ChannelEstimate(v), structured_phases(2)).values
    assert out[1, 1] == pytest.approx(-1j)
    assert out[1, 0] == pytest.approx(1j)
    np.testing.assert_array_equal(out[0], v[0])


def test_de_rotate_length_mismatch():
    with pytest.raises(ValueError):
        de_rotate(ChannelEstimate(np.ones((2, 3), complex)), structured_phases(4))


def test_mmse_de_rotates_ue2():
    obs = DespreadObservation.from_values(np.ones(4))
    s = structured_phases(4)
    est = mmse_channel_estimate(obs, 1.0, 1.0, 1.0, 1, s)
    np.testing.assert_allclose(est.values[1], (1 / 3) * np.exp(-1j * s.phases))
    np.testing.assert_allclose(est.values[0], 1 / 3)
