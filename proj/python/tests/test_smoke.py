import math

import numpy as np
import pytest

import qflow


def test_standard_packet_density_at_origin():
    wp = qflow.Wavepacket(qflow.standard_packet())
    phi100 = 1.0 / math.sqrt(math.pi)
    phi200 = 1.0 / math.sqrt(8.0 * math.pi)
    assert wp.density([0.0, 0.0, 0.0], 0.0) == pytest.approx((phi100 + phi200) ** 2 / 3.0, rel=1e-9)


def test_phi211_velocity_and_period():
    spec = qflow.eigenstate_packet(qflow.QuantumNumbers(2, 1, 1))
    wp = qflow.Wavepacket(spec)
    v = wp.velocity([1.0, 0.0, 0.5], 0.0)
    np.testing.assert_allclose(v, [0.0, 1.0, 0.0], atol=1e-12)
    r = qflow.flow_map(spec, [1.0, 0.0, 0.5], 2.0 * math.pi)
    np.testing.assert_allclose(r, [1.0, 0.0, 0.5], atol=1e-7)


def test_node_raises():
    wp = qflow.Wavepacket(qflow.eigenstate_packet(qflow.QuantumNumbers(2, 1, 1)))
    with pytest.raises(qflow.NodeProximity):
        wp.velocity([0.0, 0.0, 1.0], 0.0)


def test_custom_spec_and_norm():
    spec = qflow.WavepacketSpec([(1.0, qflow.QuantumNumbers(1, 0, 0)), (1j, qflow.QuantumNumbers(2, 1, 0))])
    assert spec.norm_squared() == pytest.approx(2.0)
    assert spec.spin is None
    with pytest.raises(ValueError):
        qflow.WavepacketSpec([(1.0, qflow.QuantumNumbers(2, 2, 0))])


def test_bggs_sum_matches_density_relation():
    spec = qflow.standard_packet()
    s = qflow.bggs_spectrum(spec, [-0.59, -2.69, 0.80], 100.0)
    assert s["lambda"].shape == (100, 3)
    assert np.all(np.diff(s["lambda"], axis=1) <= 0.0)
    check = qflow.density_relation_check(spec, [-0.59, -2.69, 0.80], 100.0)
    assert check["pass"]
    assert check["statistic"] < 1e-6


def test_stationary_state_is_regular():
    lyap = qflow.LyapunovConfig()
    r = qflow.estimate_lambda1(qflow.eigenstate_packet(qflow.QuantumNumbers(1, 0, 0)), [1.0, 0.5, 0.2], lyap)
    assert r["verdict"] == "regular"
    assert r["lambda1"] == 0.0


def test_small_qle_run_is_deterministic():
    cfg = qflow.IntegratorConfig()
    cfg.max_time = 400.0
    lyap = qflow.LyapunovConfig()
    lyap.t_first = 100.0
    a = qflow.estimate_qle(qflow.standard_packet(), 4, seed=3, jobs=1, lyap=lyap, cfg=cfg)
    b = qflow.estimate_qle(qflow.standard_packet(), 4, seed=3, jobs=2, lyap=lyap, cfg=cfg)
    assert a["lambda_big"] == b["lambda_big"]
    assert [r["lambda1"] for r in a["records"]] == [r["lambda1"] for r in b["records"]]


def test_sampler_shape():
    pts = qflow.sample_initial_conditions(qflow.standard_packet(), 50, seed=2)
    assert pts.shape == (50, 3)
    assert np.all(np.abs(pts[:, 1]) <= 6.0)


def test_config_digest_ignores_run_section():
    base = qflow.canonical_config("")
    moved = qflow.canonical_config("run:\n  jobs: 4\n  out: elsewhere\n")
    assert qflow.config_digest(base) == qflow.config_digest(moved)
    assert qflow.config_digest(base) != qflow.config_digest("qle:\n  seed: 9\n")
