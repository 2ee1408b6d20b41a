import json
import math

import numpy as np
import pytest

from memsnn import engine, experiments as ex, kernel
from memsnn.device import MemristorParams, RejectedInput
from memsnn.encoder import SpikeShape, SpikeTrain
from memsnn.engine import Network, SimulationFailure

P = MemristorParams()
T_POST = 1.2e-3
# pre-before-post (positive) and post-before-pre (negative) offsets spanning [-T, T]
DT_GRID = [k * 1e-4 for k in range(1, 11)]


def rc_first_spike(I, cfg):
    R, C = cfg.R_leak, cfg.C_m
    return -R * C * math.log(1 - (cfg.v_th - cfg.v_rest) / (I * R))


def bias_for_spike_at(t, cfg):
    R, C = cfg.R_leak, cfg.C_m
    return (cfg.v_th - cfg.v_rest) / (R * (1 - math.exp(-t / (R * C))))


def probe_net(n=3, m=3, **kw):
    cfg = engine.preset("iris", n=n, m=m, sample_duration=5e-3, **kw)
    net = Network.build(cfg)
    net.xb.w[...] = 0.5 * P.D
    return net


def stdp_probe(delta_t, backend=None):
    """dG matrix after one presentation: row 0 spikes ``delta_t`` before column 1 is forced."""
    net = probe_net()
    onsets = np.array([T_POST - delta_t, np.nan, np.nan])
    train = SpikeTrain(onsets, SpikeShape(), 3e-3)
    bias = np.array([0.0, bias_for_spike_at(T_POST, net.config), 0.0])
    res = engine.present_sample(net, train, learning=True, bias=bias, backend=backend)
    assert res.winner == 1
    return res.delta_G


# -- STDP ------------------------------------------------------------------

@pytest.mark.parametrize("delta_t", DT_GRID + [-d for d in DT_GRID])
def test_stdp_sign_rule(delta_t):
    dG = stdp_probe(delta_t)[1, 0]
    assert np.sign(dG) == np.sign(delta_t)


@pytest.mark.parametrize("sign", [1, -1])
def test_stdp_magnitude_non_increasing(sign):
    mags = [abs(stdp_probe(sign * d)[1, 0]) for d in DT_GRID]
    assert all(b <= a for a, b in zip(mags, mags[1:]))
    assert mags[0] > 0


def test_stdp_locality():
    for delta_t in (3e-4, -3e-4):
        dG = stdp_probe(delta_t)
        mask = np.zeros_like(dG, dtype=bool)
        mask[1, 0] = True
        assert np.all(dG[~mask] == 0.0)


def test_no_update_for_distant_pre_spike():
    # pre spike long after the inhibition pulse has ended
    net = probe_net()
    train = SpikeTrain(np.array([np.nan, np.nan, 2.9e-3]), SpikeShape(), 3e-3)
    bias = np.array([bias_for_spike_at(0.5e-3, net.config), 0.0, 0.0])
    res = engine.present_sample(net, train, learning=True, bias=bias)
    assert np.all(res.delta_G == 0.0)


def test_stuck_devices_do_not_learn():
    net = probe_net()
    net.xb.stuck[1, 0] = True
    train = SpikeTrain(np.array([T_POST - 3e-4, np.nan, np.nan]), SpikeShape(), 3e-3)
    bias = np.array([0.0, bias_for_spike_at(T_POST, net.config), 0.0])
    res = engine.present_sample(net, train, learning=True, bias=bias)
    assert np.all(res.delta_G == 0.0)


# -- WTA and refractory ------------------------------------------------------

def wta_run(backend=None):
    # every input spike is strong enough to fire all columns at once
    net = Network.build(engine.preset("iris", n=4, m=3, col_gain=1e4))
    onsets = np.array([0.1e-3, 0.5e-3, 0.9e-3, 1.4e-3])
    train = SpikeTrain(onsets, SpikeShape(), 1.5e-3)
    return net, engine.present_sample(net, train, learning=False, backend=backend)


def test_wta_one_spike_before_inhibition():
    _, res = wta_run()
    t_rise = res.inh_edges[0]
    before = [t for _, t in res.spikes if t < t_rise]
    assert len(before) == 1
    assert res.winner == 0 and res.tie_flag


def test_no_spikes_during_inhibition_pulse():
    _, res = wta_run()
    t_rise, t_fall = res.inh_edges[:2]
    assert not [t for _, t in res.spikes if t_rise <= t < t_fall]
    # the input at 1.4 ms arrives after the pulse and fires again
    assert len(res.spikes) == 2 and res.spikes[1][1] > t_fall


def test_refractory_width_matches_rc():
    net, res = wta_run()
    c = net.config
    width = c.R_inh * c.C_inh * math.log(c.v_l / (c.v_l - c.v_switch))
    assert abs((res.inh_edges[1] - res.inh_edges[0]) - width) <= c.dt


def test_bias_race_goes_to_strongest_neuron():
    net = probe_net()
    c = net.config
    bias = np.array([bias_for_spike_at(0.3e-3, c), bias_for_spike_at(0.2e-3, c),
                     bias_for_spike_at(0.25e-3, c)])
    train = SpikeTrain(np.full(3, np.nan), SpikeShape(), 1e-3)
    res = engine.present_sample(net, train, bias=bias)
    assert res.winner == 1 and len(res.spikes) == 1


# -- LIF through the engine --------------------------------------------------

@pytest.mark.parametrize("task", ["iris", "bcw", "pattern5x3"])
def test_forced_spike_time_matches_rc_charging(task):
    cfg = engine.preset(task)
    net = Network.build(cfg)
    train = SpikeTrain(np.full(cfg.n, np.nan), cfg.spike_shape, cfg.T)
    bias = np.zeros(cfg.m)
    bias[cfg.m - 1] = cfg.I_b
    res = engine.present_sample(net, train, bias=bias)
    assert res.winner == cfg.m - 1
    assert res.spike_time == pytest.approx(rc_first_spike(cfg.I_b, cfg), rel=0.02)


def test_supervised_training_forces_label():
    cfg = engine.preset("iris", n=3)
    net = Network.build(cfg)
    engine.init_weights(net)
    train = SpikeTrain(np.array([0.0, 0.2e-3, 0.9e-3]), cfg.spike_shape, cfg.T)
    res = engine.present_sample(net, train, label=2, learning=True)
    assert res.winner == 2
    assert np.all(res.delta_G[:2] == 0.0)
    # the late row is depressed, the early ones stay saturated
    assert res.delta_G[2, 2] < 0 and res.delta_G[2, 0] == 0.0


def test_supervised_needs_label():
    cfg = engine.preset("iris", n=3)
    net = Network.build(cfg)
    train = SpikeTrain(np.zeros(3), cfg.spike_shape, cfg.T)
    with pytest.raises(RejectedInput):
        engine.present_sample(net, train, learning=True)


def test_row_count_checked():
    net = probe_net()
    with pytest.raises(RejectedInput):
        engine.present_sample(net, SpikeTrain(np.zeros(5), SpikeShape(), 1e-3))


# -- backends --------------------------------------------------------------

needs_cython = pytest.mark.skipif(kernel._ckernel is None, reason="compiled kernel not built")


@needs_cython
@pytest.mark.parametrize("delta_t", [4e-4, -2e-4])
def test_backends_agree_on_learning(delta_t):
    a = stdp_probe(delta_t, backend="python")
    b = stdp_probe(delta_t, backend="cython")
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-18)


@needs_cython
def test_backends_agree_on_events():
    _, a = wta_run("python")
    _, b = wta_run("cython")
    assert a.spikes == pytest.approx(b.spikes)
    assert a.inh_edges == pytest.approx(b.inh_edges)


@needs_cython
def test_backends_agree_on_trace():
    net = probe_net()
    train = SpikeTrain(np.array([0.1e-3, 0.3e-3, np.nan]), SpikeShape(), 1e-3)
    ca, ra = engine.trace_sample(net, train, label=0, learning=True, every=50, backend="python")
    cb, rb = engine.trace_sample(net, train, label=0, learning=True, every=50, backend="cython")
    assert ca == cb
    np.testing.assert_allclose(ra, rb, rtol=1e-9, atol=1e-15)


def test_unknown_backend():
    net = probe_net()
    with pytest.raises(ValueError):
        engine.present_sample(net, SpikeTrain(np.zeros(3), SpikeShape(), 1e-3), backend="fortran")


# -- determinism and persistence ----------------------------------------------

@pytest.fixture(scope="module")
def patterns():
    return ex.load_patterns("5x3")


def test_training_is_bitwise_reproducible(patterns):
    X, y = patterns
    cfg = engine.preset("pattern5x3")
    a = ex.train_patterns(cfg, X, y, presentations=3)
    b = ex.train_patterns(cfg, X, y, presentations=3)
    assert a.xb.w.tobytes() == b.xb.w.tobytes()


def test_unsupervised_init_is_seeded(patterns):
    X, y = patterns
    cfg = engine.preset("pattern5x3", mode=engine.UNSUPERVISED, seed=4)
    a = ex.train_patterns(cfg, X, y, presentations=2)
    b = ex.train_patterns(cfg, X, y, presentations=2)
    c = ex.train_patterns(engine.preset("pattern5x3", mode=engine.UNSUPERVISED, seed=5),
                          X, y, presentations=2)
    assert a.xb.w.tobytes() == b.xb.w.tobytes()
    assert a.xb.w.tobytes() != c.xb.w.tobytes()


def test_fault_draws_are_seeded():
    cfg = engine.preset("iris")
    spec = ex.FaultSpec(0.2, 0.1, 0.05, seed=11)
    a = ex.apply_faults(cfg, P, spec, repeat=2)
    b = ex.apply_faults(cfg, P, spec, repeat=2)
    c = ex.apply_faults(cfg, P, spec, repeat=3)
    assert a.xb.w.tobytes() == b.xb.w.tobytes()
    assert np.array_equal(a.xb.stuck, b.xb.stuck)
    assert a.xb.devices.R_on.tobytes() == b.xb.devices.R_on.tobytes()
    assert a.xb.devices.R_on.tobytes() != c.xb.devices.R_on.tobytes()
    assert a.xb.stuck.sum() == round(0.2 * 36)


def test_test_is_idempotent(patterns):
    X, y = patterns
    net = ex.train_patterns(engine.preset("pattern5x3"), X, y, presentations=2)
    trains = ex.pattern_trains(X, net.config)
    w0 = net.xb.w.copy()
    m1 = engine.test(net, trains, y)
    m2 = engine.test(net, trains, y)
    assert m1 == m2
    assert net.xb.w.tobytes() == w0.tobytes()


def test_model_round_trip_is_bit_exact(tmp_path, patterns):
    X, y = patterns
    net = ex.apply_faults(engine.preset("iris", infer_gain=123.25), P,
                          ex.FaultSpec(0.1, 0.05, 0.05, seed=3))
    net.xb.w[0, 0] = 1.2345678901234567e-9
    net.log.append({"epoch": 1, "train_accuracy": 0.5})
    path = tmp_path / "model.json"
    engine.save_model(net, path, extra={"task": "iris"})
    back, extra = engine.load_model(path)
    assert extra == {"task": "iris"}
    assert back.config == net.config and back.params == net.params
    assert back.xb.w.tobytes() == net.xb.w.tobytes()
    assert np.array_equal(back.xb.stuck, net.xb.stuck)
    for k in ("R_on", "R_off", "V_T_pos", "V_T_neg"):
        assert getattr(back.xb.devices, k).tobytes() == getattr(net.xb.devices, k).tobytes()
    assert back.log == net.log
    engine.save_model(back, tmp_path / "again.json", extra={"task": "iris"})
    assert (tmp_path / "again.json").read_text() == path.read_text()


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(schema=99),
    lambda d: d.pop("w"),
    lambda d: d.update(w=[[0.0]]),
    lambda d: d["config"].update(bogus=1),
])
def test_malformed_models_rejected(mutate):
    doc = json.loads(json.dumps(engine.to_json(Network.build(engine.preset("iris")))))
    mutate(doc)
    with pytest.raises(RejectedInput):
        engine.from_json(doc)


def test_load_rejects_non_json(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(RejectedInput):
        engine.load_model(p)


# -- configuration and gains --------------------------------------------------

@pytest.mark.parametrize("bad", [dict(dt=2e-6), dict(dt=0.0), dict(n=0), dict(mode="hebb"),
                                 dict(col_gain=0.0), dict(infer_gain=-1.0), dict(T=0.0),
                                 dict(sample_duration=1e-3), dict(epochs=-1)])
def test_network_config_validation(bad):
    with pytest.raises(RejectedInput):
        engine.preset("iris", **bad)


def test_unknown_preset():
    with pytest.raises(RejectedInput):
        engine.preset("mnist")


def test_default_duration_covers_window_and_refractory():
    c = engine.preset("iris")
    assert c.duration == pytest.approx(c.T + 2 * c.refractory)
    assert c.refractory == pytest.approx(1.5e-3 * math.log(2))


def test_test_gain_falls_back_to_col_gain():
    assert engine.preset("pattern5x3").test_gain == 50.0
    assert engine.preset("iris", infer_gain=7.0).test_gain == 7.0


def test_unit_gain_value():
    net = Network.build(engine.preset("iris"))
    # C_m v_th / (G_max * 1.1 V * 1 us)
    assert engine.unit_gain(net) == pytest.approx(5e-6 * 1e-3 / (1e-6 * 1.1e-6), rel=1e-12)


def test_calibration_lands_in_window(patterns):
    X, y = patterns
    net = ex.train_patterns(engine.preset("pattern5x3"), X, y, presentations=2)
    trains = ex.pattern_trains(X, net.config)
    g = engine.calibrate_col_gain(net, trains, lo=0.25, hi=0.9, bounds=(1e-3, 1e3))
    _, _, times = engine.predict(net.with_infer_gain(g), trains)
    T = net.config.T
    assert 0.25 * T <= float(np.median(times)) <= 0.9 * T


def test_calibration_fails_when_nothing_can_fire():
    net = Network.build(engine.preset("iris"))
    trains = [SpikeTrain(np.full(12, np.nan), SpikeShape(), 1e-3)]
    with pytest.raises(SimulationFailure):
        engine.calibrate_col_gain(net, trains, bounds=(1.0, 10.0))


def test_select_infer_gain_picks_middle_of_tie(patterns):
    X, y = patterns
    net = ex.train_patterns(engine.preset("pattern5x3"), X, y, presentations=2)
    trains = ex.pattern_trains(X, net.config)
    grid = [10.0, 20.0, 50.0, 100.0, 200.0]
    g, acc = engine.select_infer_gain(net, trains, y, grid=grid)
    accs = [engine.test(net.with_infer_gain(x), trains, y).accuracy for x in grid]
    best = [x for x, a in zip(grid, accs) if a == max(accs)]
    assert acc == max(accs)
    assert g == best[len(best) // 2]
