import numpy as np
import pytest

from memsnn import engine, experiments as ex
from memsnn.circuit import Crossbar
from memsnn.device import MemristorParams, RejectedInput
from memsnn.encoder import SpikeShape
from memsnn.metrics import rng_for

P = MemristorParams()


@pytest.fixture(scope="module")
def trained5x3():
    X, y = ex.load_patterns("5x3")
    return ex.train_patterns(engine.preset("pattern5x3"), X, y, presentations=5), X, y


def test_builtin_pattern_sets():
    X, y = ex.load_patterns("5x3")
    assert X.shape == (4, 5, 3) and y.tolist() == [0, 1, 2, 3]
    D, d = ex.load_patterns("7x3")
    assert D.shape == (10, 7, 3) and d.tolist() == list(range(10))


@pytest.mark.parametrize("name", ["5x3", "7x3"])
def test_no_glyph_contains_another(name):
    # a glyph whose black pixels are a subset of another's would be unlearnable here
    X, _ = ex.load_patterns(name)
    B = X.reshape(len(X), -1).astype(bool)
    for a in range(len(B)):
        for b in range(len(B)):
            if a != b:
                assert (B[a] & ~B[b]).any()


@pytest.mark.parametrize("name, n, m", [("iris", 4, 3), ("bcw", 30, 2)])
def test_builtin_datasets(name, n, m):
    X, y = ex._load_dataset(name)
    assert X.shape[1] == n and sorted(set(y.tolist())) == list(range(m))


def test_stratified_split_keeps_class_ratio():
    y = np.repeat([0, 1, 2], [50, 50, 50])
    tr, te = ex.stratified_split(y, 0.7, rng_for(0, "split"))
    assert len(tr) == 105 and len(te) == 45
    assert np.bincount(y[tr]).tolist() == [35, 35, 35]
    assert not set(tr) & set(te)
    tr2, _ = ex.stratified_split(y, 0.7, rng_for(0, "split"))
    assert np.array_equal(tr, tr2)


def test_feature_encoder_round_trip():
    X = np.random.default_rng(0).normal(size=(20, 4))
    enc = ex.FeatureEncoder(1e-3).fit(X)
    back = ex.FeatureEncoder.from_dict(enc.to_dict())
    assert np.array_equal(back.values(X), enc.values(X))
    assert enc.n_features == 4
    trains = enc.transform(X[:2], SpikeShape())
    assert len(trains) == 2 and trains[0].n == 12


def test_rescaled_rows_span_window():
    X = np.random.default_rng(1).uniform(size=(30, 3))
    E = ex.FeatureEncoder(1e-3, beta=3.0, rescale=True).fit(X).values(X)
    np.testing.assert_allclose(E.min(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(E.max(axis=0), 1e-3)


def test_encoder_needs_fit():
    with pytest.raises(RejectedInput):
        ex.FeatureEncoder(1e-3).values(np.zeros((1, 2)))


@pytest.mark.parametrize("frac", [0.0, 0.1, 0.2, 0.5, 1.0])
def test_inject_stuck_count_and_range(frac):
    xb = Crossbar(12, 3, P)
    ex.inject_stuck(xb, frac, np.random.default_rng(0))
    assert xb.stuck.sum() == round(frac * 36)
    assert np.all((xb.w >= P.w_min) & (xb.w <= P.w_max))


@pytest.mark.parametrize("bad", [dict(stuck_fraction=1.5), dict(dispersion_R=-0.1)])
def test_fault_spec_validation(bad):
    with pytest.raises(RejectedInput):
        ex.FaultSpec(**bad)


def test_classification_rejects_shape_mismatch():
    X, y = ex._load_dataset("iris")
    with pytest.raises(RejectedInput):
        ex.run_classification((X, y), engine.preset("iris", n=9), 0)
    with pytest.raises(RejectedInput):
        ex.run_classification((X, y), engine.preset("iris", m=2), 0)


def test_small_classification_run_is_reproducible():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(0, 0.3, (10, 2)), rng.normal(3, 0.3, (10, 2))])
    y = np.repeat([0, 1], 10)
    cfg = engine.preset("iris", n=6, m=2, epochs=2)
    setup = ex.ClassificationSetup(select_gain=False)
    a = ex.run_classification((X, y), cfg, 1, setup)
    b = ex.run_classification((X, y), cfg, 1, setup)
    assert a.net.xb.w.tobytes() == b.net.xb.w.tobytes()
    assert a.metrics == b.metrics
    assert len(a.split[0]) == 14 and len(a.net.log) == 2


def test_noise_sweep_is_seeded(trained5x3):
    net, X, y = trained5x3
    a = ex.run_noise_sweep(net, X, y, [0.0, 2 / 15], trials=4, seed=1)
    b = ex.run_noise_sweep(net, X, y, [0.0, 2 / 15], trials=4, seed=1)
    assert a == b
    assert a[0].mean == 1.0 and a[0].std == 0.0


def test_noise_sweep_rejects_bad_level(trained5x3):
    net, X, y = trained5x3
    with pytest.raises(RejectedInput):
        ex.run_noise_sweep(net, X, y, [1.2], trials=1)


def test_sweep_csv(tmp_path):
    p = tmp_path / "sweep.csv"
    ex.write_sweep_csv([ex.SweepRow(0.1, 0.9, 0.05, 50)], p)
    assert p.read_text().splitlines() == ["level,mean,std,trials", "0.1,0.9,0.05,50"]


def test_heatmap_files(tmp_path, trained5x3):
    net, X, _ = trained5x3
    files = ex.export_heatmap(net, tmp_path, grid=(5, 3))
    assert len(files) == 8
    pgm = (tmp_path / "column0.pgm").read_text().split()
    assert pgm[:4] == ["P2", "3", "5", "255"]
    px = np.array(pgm[4:], dtype=int).reshape(5, 3)
    G = net.G[0].reshape(5, 3)
    expected = np.rint(255 * (G - P.G_min) / (P.G_max - P.G_min)).astype(int)
    assert np.array_equal(px, expected)
    csv_vals = np.loadtxt(tmp_path / "column0.csv", delimiter=",")
    np.testing.assert_allclose(csv_vals, G * 1e6, rtol=1e-15)


def test_heatmap_grid_must_cover_rows(tmp_path, trained5x3):
    net, _, _ = trained5x3
    with pytest.raises(RejectedInput):
        ex.export_heatmap(net, tmp_path, grid=(4, 3))


def test_heatmap_binarises_to_glyph(trained5x3):
    net, X, y = trained5x3
    for j, lab in enumerate(y):
        G = net.G[j]
        on = G > 0.5 * (P.G_min + P.G_max)
        assert np.array_equal(on, X[lab].reshape(-1).astype(bool))
