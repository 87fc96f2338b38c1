import math

import numpy as np
import pytest

import mmelm


def test_dac_and_frequency():
    assert mmelm.dac_current(512, 1e-9) == pytest.approx(0.5e-9)
    cfg = mmelm.ChipConfig()
    cfg.i_rst = 100e-9
    cfg.c_b = 50e-15
    assert mmelm.neuron_frequency(50e-9, cfg) == pytest.approx(100e-9 / (4 * 50e-15))
    with pytest.raises(mmelm.DomainError):
        mmelm.dac_current(1024, 1e-9)


def test_mismatch_is_lognormal_and_seeded():
    cfg = mmelm.ChipConfig.nominal(64, 64)
    a = mmelm.sample_mismatch(cfg).entries
    b = mmelm.sample_mismatch(cfg).entries
    assert a.shape == (64, 64)
    np.testing.assert_array_equal(a, b)
    assert np.std(np.log(a)) == pytest.approx(cfg.sigma_vt / cfg.u_t, rel=0.1)


def test_train_predict_sinc():
    cfg = mmelm.default_sinc_chip(64)
    w = mmelm.sample_mismatch(cfg)
    x, t, clean = mmelm.generate_sinc(2000, 0.2, 3)
    h = mmelm.build_hidden_matrix(x.reshape(-1, 1), w, cfg)
    beta = mmelm.train(h, t, 2.0**8, 1.0 / cfg.count_limit())
    rms = math.sqrt(np.mean((mmelm.predict(h, beta) - clean) ** 2))
    assert rms < 0.1


def test_forward_matches_hidden_matrix():
    cfg = mmelm.default_chip(4, 8)
    w = mmelm.sample_mismatch(cfg)
    x = [0.1, -0.3, 0.7, 0.0]
    h = mmelm.build_hidden_matrix(np.array([x]), w, cfg)
    assert list(h[0]) == mmelm.forward(x, w, cfg)


def test_virtual_matrix_layout():
    w = mmelm.WeightMatrix.from_entries(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    v = mmelm.build_virtual_matrix(w, 6, 6)
    assert v.shape == (6, 6)
    assert v[0, 3] == 4.0  # hidden block 1 starts from the rotated second row


def test_energy_and_reports():
    assert mmelm.energy_per_mac(188.8e-6, 31.6e3, 128, 100) * 1e12 == pytest.approx(0.4668, abs=1e-4)
    rep = mmelm.run_regression(mmelm.default_sinc_chip(32), trials=1, train_n=500, test_n=100)
    assert rep["kind"]
    assert rep["summary"]["rms_mean"] < 0.2
    assert set(mmelm.speed_report(mmelm.ChipConfig())) >= {"t_neu", "t_cm_avg"}


def test_config_errors():
    cfg = mmelm.ChipConfig()
    cfg.b = 0
    with pytest.raises(mmelm.ConfigError):
        cfg.validate()
