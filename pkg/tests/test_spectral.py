import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaserecon import spectral as sp
from phaserecon.errors import DegenerateWindowSum, ShapeMismatch, SignalTooShort
from phaserecon.spectral import StftConfig, TimeSignal, WindowKind

from oracles import dense_projection, naive_stft, rel_err, window_points

SMALL = StftConfig(sample_rate=8000, win_len=8, hop=4, window_kind="hann", fft_size=8)


def random_spec(rng, cfg, n_frames):
    return rng.standard_normal((cfg.n_bins, n_frames)) + 1j * rng.standard_normal((cfg.n_bins, n_frames))


def test_default_config_framing():
    cfg = StftConfig()
    assert (cfg.sample_rate, cfg.win_len, cfg.hop, cfg.fft_size) == (16000, 1024, 512, 1024)
    assert cfg.window_kind is WindowKind.BLACKMAN
    assert cfg.n_bins == 513


@pytest.mark.parametrize("kwargs", [
    dict(win_len=7), dict(hop=0), dict(hop=2048), dict(fft_size=512), dict(sample_rate=0),
])
def test_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        StftConfig(**kwargs)


def test_rectangular_window():
    cfg = StftConfig(win_len=4, hop=2, window_kind="rectangular", fft_size=4)
    np.testing.assert_array_equal(sp.make_window(cfg), [1, 1, 1, 1])


def test_blackman_endpoint_and_midpoints():
    cfg = StftConfig()
    w = sp.make_window(cfg)
    assert abs(w[0]) < 1e-12
    ref = window_points("blackman", 1024)
    for i in (0, 511, 512, 1023):
        assert w[i] == pytest.approx(ref[i], abs=1e-12)
    # symmetric form
    np.testing.assert_allclose(w, w[::-1], atol=1e-12)


def test_stft_zero_signal_shape():
    cfg = StftConfig()
    c = sp.stft(TimeSignal(np.zeros(4000)), cfg)
    assert c.shape == (513, (4000 - 1024) // 512 + 1)
    assert not np.any(c.values)


def test_stft_bin_centered_cosine_is_concentrated():
    cfg = StftConfig(win_len=64, hop=32, window_kind="rectangular", fft_size=64)
    k = 5
    t = np.arange(64)
    x = np.cos(2 * np.pi * k * t / 64)
    c = np.abs(sp.stft(TimeSignal(x, cfg.sample_rate), cfg).values[:, 0])
    peak = c[k]
    others = np.delete(c, k)
    assert np.argmax(c) == k
    assert np.all(others <= 1e-9 * peak)


@pytest.mark.parametrize("kind", ["blackman", "hann", "rectangular"])
def test_stft_matches_naive_summation(kind):
    rng = np.random.default_rng(3)
    cfg = StftConfig(sample_rate=8000, win_len=16, hop=8, window_kind=kind, fft_size=16)
    x = rng.standard_normal(cfg.signal_length(3))
    ref = naive_stft(x, window_points(kind, 16), 8, 16)
    got = sp.stft(TimeSignal(x, 8000), cfg).values
    assert rel_err(got, ref) < 1e-9


def test_stft_zero_padded_fft_matches_naive():
    rng = np.random.default_rng(4)
    cfg = StftConfig(sample_rate=8000, win_len=8, hop=4, window_kind="blackman", fft_size=16)
    x = rng.standard_normal(cfg.signal_length(3))
    ref = naive_stft(x, window_points("blackman", 8), 4, 16)
    assert rel_err(sp.stft(TimeSignal(x, 8000), cfg).values, ref) < 1e-9


def test_stft_rejects_short_signal():
    with pytest.raises(SignalTooShort):
        sp.stft(TimeSignal(np.zeros(100)))


def test_stft_rejects_rate_mismatch():
    with pytest.raises(ShapeMismatch):
        sp.stft(TimeSignal(np.zeros(2048), 8000))


def test_istft_zero():
    x = sp.istft(sp.ComplexSpectrogram(np.zeros((513, 4)), StftConfig()))
    assert len(x) == 3 * 512 + 1024
    assert not np.any(x.samples)


def test_istft_inverts_stft_on_interior():
    rng = np.random.default_rng(0)
    cfg = StftConfig()
    x = rng.standard_normal(16000)
    y = sp.istft(sp.stft(TimeSignal(x), cfg)).samples
    inner = sp.interior_slice(cfg, len(y))
    assert rel_err(y[inner], x[:len(y)][inner]) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_istft_matches_dense_pseudo_inverse(seed):
    rng = np.random.default_rng(seed)
    c = random_spec(rng, SMALL, 3)
    x_ref, _, _ = dense_projection(window_points("hann", 8), 4, 8, c)
    got = sp.istft(sp.ComplexSpectrogram(c, SMALL)).samples
    assert rel_err(got, x_ref) < 1e-9


def test_istft_degenerate_window_sum():
    cfg = StftConfig(sample_rate=8000, win_len=8, hop=8, window_kind="hann", fft_size=8)
    with pytest.raises(DegenerateWindowSum):
        sp.istft(sp.ComplexSpectrogram(np.zeros((5, 3)), cfg))


def test_istft_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        sp.istft_array(np.zeros((10, 3)), StftConfig())


def test_project_fixes_consistent_spectrogram():
    rng = np.random.default_rng(1)
    c = sp.stft(TimeSignal(rng.standard_normal(8192)))
    p = sp.project_consistent(c)
    assert p.shape == c.shape
    assert rel_err(p.values, c.values) < 1e-6


def test_project_matches_dense_oracle():
    rng = np.random.default_rng(11)
    c = random_spec(rng, SMALL, 4)
    _, p_full, _ = dense_projection(window_points("hann", 8), 4, 8, c)
    p = sp.project_consistent(sp.ComplexSpectrogram(c, SMALL)).values
    # dense vector is ordered (frame, bin): take the stored half of each frame
    ref = p_full.reshape(4, 8)[:, :SMALL.n_bins].T
    assert rel_err(p, ref) < 1e-9


def test_polar_examples():
    c = sp.ComplexSpectrogram(np.full((5, 1), 3 + 4j), SMALL)
    assert sp.magnitude(c).values[0, 0] == 5
    assert sp.phase(c).values[0, 0] == pytest.approx(0.6 + 0.8j, abs=1e-15)
    z = sp.ComplexSpectrogram(np.zeros((5, 1)), SMALL)
    assert np.all(sp.phase(z).values == 1 + 0j)


def test_combine_shape_mismatch():
    a = sp.MagnitudeSpectrogram(np.ones((5, 2)), SMALL)
    phi = sp.PhaseSpectrogram(np.ones((5, 3)), SMALL)
    with pytest.raises(ShapeMismatch):
        sp.combine(a, phi)


def test_residual_zero_for_consistent():
    rng = np.random.default_rng(2)
    c = sp.stft(TimeSignal(rng.standard_normal(6000)))
    assert sp.consistency_residual(c) <= 1e-9 * sp.weighted_sqnorm(c.values, c.config)


def test_residual_pythagoras():
    rng = np.random.default_rng(5)
    cfg = StftConfig()
    c = sp.ComplexSpectrogram(random_spec(rng, cfg, 6), cfg)
    p = sp.project_consistent(c)
    lhs = sp.consistency_residual(c)
    rhs = sp.weighted_sqnorm(c.values, cfg) - sp.weighted_sqnorm(p.values, cfg)
    assert lhs == pytest.approx(rhs, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_residual_matches_dense_full_spectrum(seed):
    rng = np.random.default_rng(100 + seed)
    c = random_spec(rng, SMALL, 3)
    _, _, ref = dense_projection(window_points("hann", 8), 4, 8, c)
    assert sp.consistency_residual(sp.ComplexSpectrogram(c, SMALL)) == pytest.approx(ref, rel=1e-9)


# -- properties --------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_frames=st.integers(1, 8))
def test_projection_idempotent_and_nonexpansive(seed, n_frames):
    rng = np.random.default_rng(seed)
    cfg = StftConfig(sample_rate=8000, win_len=32, hop=16, window_kind="blackman", fft_size=32)
    c = sp.ComplexSpectrogram(random_spec(rng, cfg, n_frames), cfg)
    p = sp.project_consistent(c)
    pp = sp.project_consistent(p)
    norm = lambda v: np.sqrt(sp.weighted_sqnorm(v, cfg))
    assert norm(pp.values - p.values) <= 1e-6 * norm(p.values)
    assert norm(p.values) <= norm(c.values) + 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_phase_unit_modulus(seed):
    rng = np.random.default_rng(seed)
    c = random_spec(rng, SMALL, 3)
    c[rng.random(c.shape) < 0.2] = 0
    phi = sp.phase(sp.ComplexSpectrogram(c, SMALL)).values
    assert np.all(np.abs(np.abs(phi) - 1) <= 1e-12)
    a = sp.magnitude(sp.ComplexSpectrogram(c, SMALL))
    np.testing.assert_allclose(sp.combine(a, sp.PhaseSpectrogram(phi, SMALL)).values, c, atol=1e-12, rtol=0)
