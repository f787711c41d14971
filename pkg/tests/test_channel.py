import numpy as np
import pytest

from pilot_selflearn.channel import (
    ChannelModel,
    ChannelRealization,
    DespreadObservation,
    despread,
    generate_channel,
    received_pilot_signal,
    trace_csv,
)
from pilot_selflearn.pilots import (
    PhaseSchedule,
    Scheme,
    build_pilot_book,
    canonical_phases,
    co_pilot_assignments,
    structured_phases,
)


def fixed_channel(g1, g2):
    gains = np.vstack([np.atleast_1d(g1), np.atleast_1d(g2)]).astype(complex)
    return ChannelRealization(beta=np.abs(gains[:, 0]) ** 2, gains=gains, model=ChannelModel.LOS)


@pytest.mark.parametrize("n", [1, 7, 50])
def test_los_unit_magnitude(n):
    ch = generate_channel(1.0, 1.0, n, "los", seed=3)
    np.testing.assert_allclose(np.abs(ch.gains), 1.0, rtol=0, atol=1e-15)


def test_los_phase_constant_over_blocks():
    ch = generate_channel(4.0, 9.0, 20, "los", seed=4)
    np.testing.assert_allclose(ch.gains, ch.gains[:, :1] * np.ones((1, 20)))
    np.testing.assert_allclose(np.abs(ch.gains[1]), 3.0)


def test_los_linear_phase_variant():
    ch = generate_channel(1.0, 1.0, 10, "los", seed=4, los_phase="linear")
    steps = np.angle(ch.gains[:, 1:] / ch.gains[:, :-1])
    np.testing.assert_allclose(steps, steps[:, :1] * np.ones((1, 9)), atol=1e-12)
    np.testing.assert_allclose(np.abs(ch.gains), 1.0)


def test_zero_path_loss_gives_zero_gains():
    ch = generate_channel(0.0, 0.0, 5, "los", seed=1)
    assert np.all(ch.gains == 0)


def test_rayleigh_second_moment():
    ch = generate_channel(2.0, 2.0, 100_000, "rayleigh", seed=5)
    m = np.mean(np.abs(ch.gains) ** 2, axis=1)
    np.testing.assert_allclose(m, 2.0, rtol=0.02)


def test_channel_reproducible():
    a = generate_channel(1.0, 3.0, 4, "los", seed=11)
    b = generate_channel(1.0, 3.0, 4, "los", seed=11)
    np.testing.assert_array_equal(a.gains, b.gains)


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        generate_channel(-1.0, 1.0, 3)


def test_single_ue_noiseless_signal_is_the_pilot():
    book = build_pilot_book(1)
    ch = fixed_channel([1.0], [0.0])
    y = received_pilot_signal(ch, book, co_pilot_assignments(canonical_phases(1)), 1.0, noise=False)
    np.testing.assert_allclose(y[0], book.sequence(0))


def test_pure_noise_variance():
    book = build_pilot_book(4)
    ch = generate_channel(0.0, 0.0, 25_000, "los", seed=1)
    y = received_pilot_signal(ch, book, co_pilot_assignments(canonical_phases(25_000)), 1.0, seed=2)
    assert y.size == 100_000
    assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, rel=0.02)


def test_rotation_enters_linearly():
    book = build_pilot_book(3)
    ch = fixed_channel(np.ones(6), np.ones(6))
    s = structured_phases(6)
    rho = 2.0
    y_c = received_pilot_signal(ch, book, co_pilot_assignments(canonical_phases(6), 1), rho, noise=False)
    y_s = received_pilot_signal(ch, book, co_pilot_assignments(s, 1), rho, noise=False)
    expected = np.sqrt(rho * 3) * np.outer(np.exp(1j * s.phases) - 1, book.sequence(1))
    np.testing.assert_allclose(y_s - y_c, expected, atol=1e-12)


def test_schedule_length_mismatch():
    book = build_pilot_book(2)
    ch = generate_channel(1.0, 1.0, 5, seed=0)
    with pytest.raises(ValueError):
        received_pilot_signal(ch, book, co_pilot_assignments(structured_phases(4)), 1.0, seed=0)


@pytest.mark.parametrize("tau_p", [1, 2, 8])
def test_despread_own_pilot(tau_p):
    book = build_pilot_book(tau_p)
    obs = despread(book.sequence(0)[None, :], book, 0)
    assert obs.values[0] == pytest.approx(1 / np.sqrt(tau_p))


def test_despread_other_pilot_is_zero():
    book = build_pilot_book(4)
    obs = despread(book.sequence(2)[None, :], book, 1)
    assert abs(obs.values[0]) < 1e-15


def test_destructive_collision():
    book = build_pilot_book(1)
    ch = fixed_channel([1.0], [1.0])
    s = PhaseSchedule(Scheme.PSEUDO_RANDOM, np.array([np.pi]))
    y = received_pilot_signal(ch, book, co_pilot_assignments(s), 1.0, noise=False)
    assert abs(despread(y, book, 0).values[0]) < 1e-15


def test_despread_respread_roundtrip():
    book = build_pilot_book(5)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    received = np.outer(c, book.sequence(3))
    v = despread(received, book, 3).values
    np.testing.assert_allclose(np.sqrt(5) * np.outer(v, book.sequence(3)), received, atol=1e-12)


def test_despread_matches_collision_model():
    # y_iq = sqrt(rho) (g1 + e^{j phi} g2) + w / sqrt(tau)
    book = build_pilot_book(4)
    ch = generate_channel(3.0, 5.0, 10, seed=1)
    s = structured_phases(10)
    y = received_pilot_signal(ch, book, co_pilot_assignments(s, 2), 2.5, noise=False)
    obs = despread(y, book, 2, rho_p=2.5)
    expected = np.sqrt(2.5) * (ch.gains[0] + np.exp(1j * s.phases) * ch.gains[1])
    np.testing.assert_allclose(obs.values, expected, atol=1e-12)


def test_despread_noise_variance():
    tau_p = 4
    book = build_pilot_book(tau_p)
    n = 100_000
    ch = generate_channel(0.0, 0.0, n, seed=0)
    y = received_pilot_signal(ch, book, co_pilot_assignments(canonical_phases(n)), 1.0, seed=9)
    w = np.sqrt(tau_p) * despread(y, book, 1).values
    assert np.var(w) == pytest.approx(1.0, rel=0.02)


def test_structured_sweep_covers_support():
    n = 1000
    book = build_pilot_book(1)
    ch = generate_channel(1.0, 1.0, n, seed=6)
    y = received_pilot_signal(ch, book, co_pilot_assignments(structured_phases(n)), 1.0, noise=False)
    p = despread(y, book, 0).squared_magnitudes
    assert p.min() < 4e-3 and p.max() > 4 * (1 - 1e-3)


def test_squared_magnitudes_and_normalization():
    obs = DespreadObservation.from_values([3 + 4j, 1j], rho_p=4.0, tau_p=2)
    np.testing.assert_array_equal(obs.squared_magnitudes, [25.0, 1.0])
    np.testing.assert_allclose(obs.normalized_power(), [6.25, 0.25])
    assert obs.noise_var == 1 / 8


def test_trace_csv():
    obs = DespreadObservation.from_values([1 + 2j, -1j])
    lines = trace_csv([obs, obs]).strip().split("\n")
    assert lines[0] == "drop,block,re(y),im(y),|y|2"
    assert len(lines) == 5
    assert lines[1] == "0,0,1.0,2.0,5.000000000000001" or lines[1].startswith("0,0,1.0,2.0,5.0")
