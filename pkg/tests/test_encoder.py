import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memsnn.device import RejectedInput
from memsnn.encoder import (GrfConfig, SpikeShape, SpikeTrain, encode_pattern, encode_temporal,
                            fit_minmax, flip_noise, grf_centers, grf_expand, minmax_scale,
                            read_dataset_csv, read_patterns, triangle, waveform_at,
                            write_dataset_csv, write_patterns)

T = 1e-3
SHAPE = SpikeShape()


def test_minmax_maps_to_window():
    X = np.array([[1.0, 10.0], [3.0, 30.0], [2.0, 20.0]])
    lo, hi = fit_minmax(X)
    out = minmax_scale(X, lo, hi, T)
    np.testing.assert_allclose(out, [[0, 0], [T, T], [T / 2, T / 2]])


def test_minmax_clamps_unseen_values():
    out = minmax_scale(np.array([-5.0, 5.0]), np.array([0.0, 0.0]), np.array([1.0, 1.0]), T)
    assert out.tolist() == [0.0, T]


def test_degenerate_feature_goes_to_middle():
    with pytest.warns(UserWarning):
        out = minmax_scale(np.array([[4.0, 1.0]]), np.array([4.0, 0.0]), np.array([4.0, 2.0]), T)
    assert out[0].tolist() == [T / 2, T / 2]


def test_grf_centres_and_width():
    mu, sigma = grf_centers(GrfConfig(3, 1.5), T)
    np.testing.assert_allclose(mu, [0, T / 2, T])
    assert sigma == pytest.approx(T / 3)


@pytest.mark.parametrize("x, expected", [
    (0.0, [1.0, np.exp(-1.125), np.exp(-4.5)]),
    (0.5, [np.exp(-1.125), 1.0, np.exp(-1.125)]),
])
def test_grf_values(x, expected):
    # beta = 1.5, n2 = 3: sigma = T/3, so (x - mu)^2 / 2 sigma^2 = 4.5 (x - mu)^2 / T^2
    out = grf_expand(np.array([x * T]), GrfConfig(3, 1.5), T)
    np.testing.assert_allclose(out / T, expected, rtol=1e-12)


def test_grf_feature_major_order():
    out = grf_expand(np.array([[0.0, T]]), GrfConfig(2, 1.0), T)
    assert out.shape == (1, 4)
    assert out[0, 0] == pytest.approx(T) and out[0, 3] == pytest.approx(T)


@given(arrays(float, 4, elements=st.floats(0, T)))
def test_grf_in_window(x):
    out = grf_expand(x, GrfConfig(3, 3.0), T)
    assert np.all((out >= 0) & (out <= T))


@pytest.mark.parametrize("bad", [dict(n2=1), dict(beta=0.0)])
def test_grf_config_rejects(bad):
    with pytest.raises(RejectedInput):
        GrfConfig(**bad)


def test_temporal_code_is_reversed():
    tr = encode_temporal([0.0, T, 0.25 * T], SHAPE, T)
    np.testing.assert_allclose(tr.onsets, [T, 0.0, 0.75 * T])
    assert tr.times[1] == (1, 0.0)


def test_spike_train_bounds():
    with pytest.raises(RejectedInput):
        SpikeTrain(np.array([2 * T]), SHAPE, T)
    SpikeTrain(np.array([np.nan, 0.0]), SHAPE, T)


def test_pattern_code():
    tr = encode_pattern(np.array([[1, 0], [0, 1]]), SHAPE, T, lead=0.4e-3)
    np.testing.assert_allclose(tr.onsets, [0, 0.4e-3, 0.4e-3, 0])
    with pytest.raises(RejectedInput):
        encode_pattern(np.array([2, 0]), SHAPE, T)


@pytest.mark.parametrize("s, v", [(-1e-7, 0.0), (0.0, 0.0), (0.5e-6, 0.55), (1e-6, 1.1),
                                  (1.5e-6, 0.55), (2e-6, 0.0), (np.nan, 0.0)])
def test_triangle_shape(s, v):
    assert triangle(s, SHAPE) == pytest.approx(v)


def test_waveform_of_silent_row_is_flat():
    tr = SpikeTrain(np.array([np.nan, 1e-4]), SHAPE, T)
    assert waveform_at(tr, 0, 1e-4) == 0.0
    assert waveform_at(tr, 1, 1e-4 + 1e-6) == pytest.approx(1.1)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0, 1 / 15, 2 / 15, 3 / 15, 1.0]))
def test_flip_noise_flips_exact_count(seed, frac):
    bits = np.random.default_rng(seed).integers(0, 2, (5, 3))
    out = flip_noise(bits, frac, np.random.default_rng(seed))
    assert (out != bits).sum() == round(frac * 15)
    assert out.shape == bits.shape


def test_flip_noise_rejects_bad_fraction():
    with pytest.raises(RejectedInput):
        flip_noise(np.zeros(3, dtype=int), 1.5, np.random.default_rng(0))


def test_dataset_csv_round_trip(tmp_path):
    X = np.array([[0.1, 1e-17], [2.0, -3.5]])
    y = np.array([1, 0])
    p = tmp_path / "d.csv"
    write_dataset_csv(p, X, y)
    X2, y2 = read_dataset_csv(p)
    assert X2.tobytes() == X.tobytes() and y2.tolist() == [1, 0]


@pytest.mark.parametrize("text, where", [
    ("", "empty"),
    ("a,b\n1,2\n", "label"),
    ("a,label\n1,2\n3\n", ":3:"),
    ("a,label\nx,1\n", ":2:"),
    ("a,label\n1,0.5\n", ":2:"),
])
def test_dataset_csv_errors(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(RejectedInput, match=where):
        read_dataset_csv(p)


def test_pattern_file_round_trip(tmp_path):
    pats = np.array([[[1, 0, 1], [0, 1, 0]], [[0, 0, 1], [1, 1, 1]]])
    p = tmp_path / "p.txt"
    write_patterns(p, pats, [3, 7])
    back, labels = read_patterns(p)
    assert np.array_equal(back, pats) and labels.tolist() == [3, 7]


@pytest.mark.parametrize("text", ["101\n010\n", "label: 1\n102\n", "label: 1\n101\n01\n",
                                  "label: x\n101\n", "label: 0\n11\n\nlabel: 1\n111\n"])
def test_pattern_file_errors(tmp_path, text):
    p = tmp_path / "p.txt"
    p.write_text(text)
    with pytest.raises(RejectedInput):
        read_patterns(p)
