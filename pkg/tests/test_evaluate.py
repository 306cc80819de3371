"""NMSE metric, complexity counters and sweep harness tests."""

import numpy as np
import pytest

from planarce import baselines, channel, evaluate, frame, network, planar
from planarce.errors import DimensionMismatch, NumericalFailure, ZeroTruth


def sweep_fixture():
    cfg = frame.make_config(N=8, T=8, T_P=4, U=2, V=2, K=1, M=2, seed=3)
    profile = channel.cdlb_profile()
    pilots = frame.make_pilot_book(cfg)
    return cfg, profile, pilots


# -- NMSE ------------------------------------------------------------------

def test_nmse_values():
    truth = np.array([1.0 + 0j, 2.0, -1.0])
    lin, db = evaluate.nmse(truth, truth)
    assert lin == 0.0 and db == evaluate.NMSE_DB_FLOOR
    lin, db = evaluate.nmse(2 * truth, truth)
    np.testing.assert_allclose(lin, 1.0)
    np.testing.assert_allclose(db, 0.0, atol=1e-12)
    lin, db = evaluate.nmse(np.zeros(3, complex), truth)
    np.testing.assert_allclose(lin, 1.0)


def test_nmse_scale_invariant():
    rng = np.random.default_rng(60)
    t = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    e = t + 0.1 * rng.standard_normal((2, 3))
    base = evaluate.nmse(e, t)
    for a in (0.5, 7.0, 1e6):
        scaled = evaluate.nmse(a * e, a * t)
        np.testing.assert_allclose(scaled[0], base[0], rtol=1e-12)


def test_nmse_errors():
    with pytest.raises(DimensionMismatch):
        evaluate.nmse(np.zeros(3), np.zeros(4))
    with pytest.raises(ZeroTruth):
        evaluate.nmse(np.ones(3), np.zeros(3))


# -- complexity counters ---------------------------------------------------

def test_complexity_standard_dims_frozen():
    cfg = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=24, M=64)
    assert evaluate.complexity_module_a(cfg) == 3_981_312
    assert evaluate.complexity_module_b(cfg) == 1_918_402_560
    assert evaluate.complexity_total(cfg) == 1_922_383_872


def test_complexity_formula_cross_check():
    # independent recomputation of both closed forms
    rng = np.random.default_rng(61)
    for _ in range(5):
        K = int(rng.integers(1, 6))
        cfg = frame.make_config(
            N=12, T=8, T_P=4, U=2, V=2, K=K, M=int(rng.integers(1, 9))
        )
        r = cfg.N * cfg.T_P // (cfg.V * cfg.U)
        a = r**3 + 6 * K * r**2 + 3 * K * cfg.U * cfg.V * cfg.M * r
        assert evaluate.complexity_module_a(cfg) == a
        b = (12170 + 30 * cfg.T) * cfg.T_P * cfg.N * cfg.M * K / 4
        assert evaluate.complexity_module_b(cfg) == b


def test_complexity_module_b_linear_in_users():
    base = frame.make_config(N=12, T=8, T_P=4, U=2, V=2, K=1, M=4)
    b1 = evaluate.complexity_module_b(base)
    for K in (2, 3, 4):
        cfg = frame.make_config(N=12, T=8, T_P=4, U=2, V=2, K=K, M=4)
        assert evaluate.complexity_module_b(cfg) == K * b1


# -- seed derivation -------------------------------------------------------

def test_derive_seed_deterministic_and_distinct():
    a = evaluate.derive_seed(7, 3, 1)
    assert a == evaluate.derive_seed(7, 3, 1)
    others = {
        evaluate.derive_seed(7, 3, 2),
        evaluate.derive_seed(7, 4, 1),
        evaluate.derive_seed(8, 3, 1),
    }
    assert a not in others
    assert len(others) == 3
    assert 0 <= a < 2**64


# -- estimator factory -----------------------------------------------------

def test_interp_users_matches_per_user():
    rng = np.random.default_rng(62)
    est = rng.standard_normal((2, 3, 4, 2)) + 1j * rng.standard_normal((2, 3, 4, 2))
    got = evaluate.interp_users(est, (1, 4, 7), 8)
    for k in range(2):
        np.testing.assert_allclose(
            got[k], baselines.interp_time_linear(est[k], (1, 4, 7), 8),
            rtol=1e-14,
        )


def test_make_estimators_keys_follow_inputs():
    cfg, profile, pilots = sweep_fixture()
    assert set(evaluate.make_estimators(cfg, pilots)) == {"ls", "genie"}
    priors = planar.default_priors(cfg, 0.1)
    assert set(evaluate.make_estimators(cfg, pilots, priors=priors)) == {
        "ls", "bpcm", "genie"
    }
    bank = baselines.CovarianceBank(
        R_f=np.eye(cfg.N), R_t=np.eye(cfg.T_P), estimated_from=1
    )
    spec = network.network_spec(cfg)
    bundle = network.zero_bundle(spec)
    full = evaluate.make_estimators(cfg, pilots, priors=priors, bank=bank,
                                    bundle=bundle, net_spec=spec)
    assert set(full) == {"ls", "bpcm", "net", "lmmse1d", "lmmse2x1d", "genie"}


def test_estimators_output_shapes_and_genie():
    cfg, profile, pilots = sweep_fixture()
    real = channel.simulate_channel(cfg, profile, 80)
    from planarce import rxmodel

    rx = rxmodel.synthesize_rx(cfg, real, pilots, 10.0, 5)
    priors = planar.default_priors(cfg, rx.noise_var)
    ests = evaluate.make_estimators(cfg, pilots, priors=priors)
    for name, fn in ests.items():
        out = fn(rx)
        assert out.shape == (cfg.K, cfg.T, cfg.N, cfg.M), name
    np.testing.assert_array_equal(ests["genie"](rx), real.H)


# -- sweeps ----------------------------------------------------------------

def test_sweep_rows_and_genie_floor():
    cfg, profile, pilots = sweep_fixture()
    ests = evaluate.make_estimators(cfg, pilots)
    report = evaluate.run_sweep(cfg, profile, pilots, ests,
                                snr_list=[0.0, 10.0], frames=3, master_seed=11)
    assert len(report.rows) == 4
    for snr in (0.0, 10.0):
        assert report.row("genie", snr).nmse_db == evaluate.NMSE_DB_FLOOR
        ls = report.row("ls", snr)
        assert ls.error is None and np.isfinite(ls.nmse_db)
    # more noise, worse LS error
    assert report.row("ls", 0.0).nmse_db > report.row("ls", 10.0).nmse_db


def test_sweep_deterministic_and_common_randomness():
    cfg, profile, pilots = sweep_fixture()
    ests = evaluate.make_estimators(cfg, pilots)
    r1 = evaluate.run_sweep(cfg, profile, pilots, ests, [5.0], 3, 21)
    r2 = evaluate.run_sweep(cfg, profile, pilots, ests, [5.0], 3, 21)
    for a, b in zip(r1.rows, r2.rows):
        assert a.estimator == b.estimator and a.nmse_db == b.nmse_db
    # dropping an estimator must not change the streams seen by the rest
    only_ls = {"ls": ests["ls"]}
    r3 = evaluate.run_sweep(cfg, profile, pilots, only_ls, [5.0], 3, 21)
    assert r3.row("ls", 5.0).nmse_db == r1.row("ls", 5.0).nmse_db


def test_sweep_failure_marks_row(tmp_path):
    cfg, profile, pilots = sweep_fixture()

    def boom(rx):
        raise NumericalFailure("synthetic failure")

    ests = {"ls": evaluate.make_estimators(cfg, pilots)["ls"], "bad": boom}
    report = evaluate.run_sweep(cfg, profile, pilots, ests, [5.0], 2, 31)
    bad = report.row("bad", 5.0)
    assert bad.error == "NumericalFailure" and bad.nmse_db is None
    assert report.row("ls", 5.0).error is None
    path = tmp_path / "s.csv"
    evaluate.write_sweep_csv(report, path)
    text = path.read_text()
    assert "bad,5,failed:NumericalFailure,2," in text


def test_sweep_csv_layout_and_determinism(tmp_path):
    cfg, profile, pilots = sweep_fixture()
    ests = evaluate.make_estimators(cfg, pilots)
    report = evaluate.run_sweep(cfg, profile, pilots, ests, [0.0, 10.0], 2, 41)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    evaluate.write_sweep_csv(report, p1)
    report2 = evaluate.run_sweep(cfg, profile, pilots, ests, [0.0, 10.0], 2, 41)
    evaluate.write_sweep_csv(report2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "estimator,snr_db,nmse_db,frames,wall_ms"
    assert len(lines) == 1 + 4
    # default output carries no timings; the flag adds them
    assert all(line.endswith(",") for line in lines[1:])
    evaluate.write_sweep_csv(report, p1, include_timing=True)
    assert not any(
        line.endswith(",") for line in p1.read_text().splitlines()[1:]
    )


def test_flops_csv(tmp_path):
    cfg = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=24, M=64)
    path = tmp_path / "f.csv"
    evaluate.write_flops_csv(cfg, (8, 24), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "estimator,K,multiplications"
    assert len(lines) == 1 + 3 * 17
    assert "bpcm,24,3981312" in lines
    assert "net,24,1918402560" in lines
    assert "bpcm+net,24,1922383872" in lines
