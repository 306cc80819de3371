"""Top-level acceptance suite.

Each test prints exactly one ``[criterion N] PASS|FAIL`` line (evaluated
before the assertion fires, so the verdict is visible either way) and then
asserts.  Tolerances and runtime budgets are fixed here on purpose; they
are contract values, not tuning knobs.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from planarce import (
    baselines,
    channel,
    evaluate,
    frame,
    network,
    planar,
    rxmodel,
)
from planarce.cli import main as cli_main
from planarce.errors import ConfigError


def report(n: int, name: str, ok: bool, detail: str) -> None:
    print(f"[criterion {n}] {'PASS' if ok else 'FAIL'} {name}: {detail}")


def random_instance(rng):
    """Random small config + pilots + sub-block + observation (rows <= 24)."""
    K = int(rng.integers(1, 5))
    M = int(rng.integers(1, 5))
    U = int(rng.integers(1, 3))
    V = int(rng.integers(1, 3))
    tu = int(rng.integers(2, 5))
    ppb = int(rng.integers(1, tu + 1))
    nv_min = -(-3 * K // ppb)
    nv_max = max(nv_min, 24 // ppb)
    nv = int(rng.integers(nv_min, nv_max + 1))
    pilot_symbols = tuple(
        int(u * tu + p + 1)
        for u in range(U)
        for p in sorted(rng.choice(tu, size=ppb, replace=False))
    )
    cfg = frame.make_config(N=nv * V, T=tu * U, T_P=ppb * U, U=U, V=V,
                            K=K, M=M, pilot_symbols=pilot_symbols,
                            seed=int(rng.integers(1 << 16)))
    pilots = frame.make_pilot_book(cfg)
    b = frame.SubBlockIndex(int(rng.integers(1, U + 1)),
                            int(rng.integers(1, V + 1)))
    Y = rng.standard_normal((cfg.pilot_rows, M)) \
        + 1j * rng.standard_normal((cfg.pilot_rows, M))
    return cfg, pilots, b, Y


def test_criterion_1_lmmse_joint_oracle():
    rng = np.random.default_rng(101)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(50):
        cfg, pilots, b, Y = random_instance(rng)
        A, B, F = planar.build_regressors(cfg, pilots, b)
        prior = planar.PriorSpec(
            v_C=float(rng.uniform(0.01, 1.0)),
            v_D=float(rng.uniform(0.01, 1.0)),
            v_Q=float(rng.uniform(0.5, 2.0)),
            sigma2_Z=float(rng.uniform(0.01, 1.0)),
        )
        got = planar.lmmse_posteriors(Y, A, B, F, prior)
        # brute-force stacked joint posterior, explicit inverse
        G = np.concatenate([A, B, F], axis=1)
        V = np.diag(np.concatenate([
            np.full(cfg.K, prior.v_C), np.full(cfg.K, prior.v_D),
            np.full(cfg.K, prior.v_Q),
        ]))
        Sigma = G @ V @ G.conj().T + prior.sigma2_Z * np.eye(cfg.pilot_rows)
        post = V @ G.conj().T @ np.linalg.inv(Sigma) @ Y
        expect = np.concatenate([got.C, got.D, got.Q]) * 0
        expect[: cfg.K] = post[: cfg.K]
        expect[cfg.K: 2 * cfg.K] = post[cfg.K: 2 * cfg.K]
        expect[2 * cfg.K:] = post[2 * cfg.K:]
        stacked = np.concatenate([got.C, got.D, got.Q])
        rel = np.abs(stacked - expect).max() / max(np.abs(expect).max(), 1e-30)
        worst = max(worst, rel)
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    report(1, "per-family posteriors match joint LMMSE solve", ok,
           f"50 instances, worst rel err {worst:.3e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_criterion_2_planar_exact_recovery():
    rng = np.random.default_rng(102)
    t0 = time.monotonic()
    worst_db = -np.inf
    prior = planar.PriorSpec(v_C=1e6, v_D=1e6, v_Q=1e6, sigma2_Z=1e-6)
    for _ in range(20):
        cfg, pilots, b, _ = random_instance(rng)
        A, B, F = planar.build_regressors(cfg, pilots, b)
        sh = (cfg.K, cfg.M)
        C = rng.standard_normal(sh) + 1j * rng.standard_normal(sh)
        D = rng.standard_normal(sh) + 1j * rng.standard_normal(sh)
        Q = rng.standard_normal(sh) + 1j * rng.standard_normal(sh)
        Y = A @ C + B @ D + F @ Q
        out = planar.lmmse_posteriors(Y, A, B, F, prior)
        rec = planar.reconstruct_pilot_channel(cfg, out, b)
        bias = planar.bias_vectors(cfg)
        pat = frame.selection_pattern(cfg, b)
        truth = (
            bias.e1[pat][None, :, None] * C[:, None, :]
            + bias.e2[pat][None, :, None] * D[:, None, :]
            + Q[:, None, :]
        )
        lin, db = evaluate.nmse(rec, truth)
        worst_db = max(worst_db, db)
    elapsed = time.monotonic() - t0
    ok = worst_db <= -80.0 and elapsed < 5.0
    report(2, "noiseless planar channels recovered with wide priors", ok,
           f"20 instances, worst NMSE {worst_db:.1f} dB, {elapsed:.2f} s")
    assert worst_db <= -80.0
    assert elapsed < 5.0


def test_criterion_3_selection_equivalence():
    rng = np.random.default_rng(103)
    exact = True
    for _ in range(20):
        cfg, pilots, b, _ = random_instance(rng)
        for bb in frame.iter_subblocks(cfg):
            pat = frame.selection_pattern(cfg, bb)
            S = np.zeros((cfg.pilot_rows, cfg.block_len))
            for i, row in enumerate(pat):
                S[i, row] = 1.0
            x = rng.standard_normal((cfg.block_len, cfg.M)) \
                + 1j * rng.standard_normal((cfg.block_len, cfg.M))
            if not np.array_equal(x[pat], S @ x):
                exact = False
            # each pilot row selected exactly once, in stacking order
            if not (S.sum(axis=1) == 1.0).all():
                exact = False
    report(3, "gather pattern equals explicit selection matrix", exact,
           "20 random configs, all sub-blocks, exact equality")
    assert exact


def test_criterion_4_convolution_oracles():
    rng = np.random.default_rng(104)

    def conv_naive(x, layer, weight, bias):
        spatial = x.shape[1:]
        pad = layer.padding
        out = np.zeros((layer.out_channels,) + spatial)
        for o in range(layer.out_channels):
            for pos in np.ndindex(*spatial):
                acc = bias[o]
                for i in range(layer.in_channels):
                    for tap in np.ndindex(*layer.kernel):
                        src = tuple(
                            p - pd + d * t for p, pd, d, t in
                            zip(pos, pad, layer.dilation, tap)
                        )
                        if all(0 <= s < n for s, n in zip(src, spatial)):
                            acc += weight[(o, i) + tap] * x[(i,) + src]
                out[(o,) + pos] = acc
        return out

    worst = 0.0
    for _ in range(20):
        rank = int(rng.integers(2, 4))
        layer = network.ConvLayerSpec(
            name="acc", rank=rank,
            in_channels=int(rng.integers(1, 4)),
            out_channels=int(rng.integers(1, 4)),
            kernel=tuple(int(2 * rng.integers(1, 3) + 1) for _ in range(rank)),
            dilation=tuple(int(rng.integers(1, 4)) for _ in range(rank)),
            prelu=False,
        )
        spatial = tuple(int(rng.integers(3, 7)) for _ in range(rank))
        x = rng.standard_normal((layer.in_channels,) + spatial)
        w = rng.standard_normal(layer.weight_shape)
        b = rng.standard_normal(layer.out_channels)
        got = network.conv_nd(x, layer, w, b)
        oracle = conv_naive(x, layer, w, b)
        rel = np.abs(got - oracle).max() / max(np.abs(oracle).max(), 1e-30)
        worst = max(worst, rel)

    # dilation as a zero-inflated kernel
    dil = network.ConvLayerSpec(name="d", rank=2, in_channels=2,
                                out_channels=2, kernel=(3, 3),
                                dilation=(3, 2), prelu=False)
    big = network.ConvLayerSpec(name="b", rank=2, in_channels=2,
                                out_channels=2, kernel=(7, 5),
                                dilation=(1, 1), prelu=False)
    w = rng.standard_normal(dil.weight_shape)
    w_big = np.zeros(big.weight_shape)
    w_big[:, :, ::3, ::2] = w
    bb = rng.standard_normal(2)
    x = rng.standard_normal((2, 9, 8))
    a = network.conv_nd(x, dil, w, bb)
    c = network.conv_nd(x, big, w_big, bb)
    infl = np.abs(a - c).max() / max(np.abs(c).max(), 1e-30)

    ok = worst <= 1e-5 and infl <= 1e-6
    report(4, "dilated convolutions match nested-loop oracle", ok,
           f"20 instances worst rel {worst:.3e}; inflation rel {infl:.3e}")
    assert worst <= 1e-5
    assert infl <= 1e-6


def test_criterion_5_complexity_closed_form():
    cfg = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=24, M=64)
    a = evaluate.complexity_module_a(cfg)
    b = evaluate.complexity_module_b(cfg)
    ok = (a == 3_981_312) and (b == 1_918_402_560)
    report(5, "multiplication counts at the reference configuration", ok,
           f"planar stage {a}, network stage {b}")
    assert a == 3_981_312
    assert b == 1_918_402_560


def test_criterion_6_desk_scale_ordering():
    t0 = time.monotonic()
    cfg = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=4, M=8, seed=7)
    profile = channel.cdlb_profile()  # 100 km/h default
    pilots = frame.make_pilot_book(cfg)
    reals = [
        channel.simulate_channel(cfg, profile, evaluate.derive_seed(7, 91, i))
        for i in range(30)
    ]
    priors = planar.calibrate_priors(cfg, pilots, reals)
    ests = evaluate.make_estimators(cfg, pilots, priors=priors)
    sweep = evaluate.run_sweep(
        cfg, profile, pilots,
        {"ls": ests["ls"], "bpcm": ests["bpcm"]},
        snr_list=[10.0], frames=100, master_seed=1234,
    )
    ls_db = sweep.row("ls", 10.0).nmse_db
    bpcm_db = sweep.row("bpcm", 10.0).nmse_db
    elapsed = time.monotonic() - t0
    margin = ls_db - bpcm_db
    ok = bpcm_db < ls_db and elapsed < 120.0
    report(6, "planar estimator beats block LS at SNR 10 dB", ok,
           f"LS {ls_db:.2f} dB, planar {bpcm_db:.2f} dB, margin "
           f"{margin:.2f} dB (>= 1 dB expected), {elapsed:.1f} s / 100 frames")
    assert bpcm_db < ls_db
    assert elapsed < 120.0


def test_criterion_7_solvability_gate(tmp_path, capsys):
    # 96 pilot rows per sub-block support at most 32 users
    ok = True
    with pytest.raises(ConfigError) as exc1:
        frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=33, M=64)
    ok &= exc1.value.code == "SOLVABILITY"
    # boundary case passes
    frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=32, M=64)
    # a forged config object is caught by the validator directly
    good = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=24, M=64)
    with pytest.raises(ConfigError):
        frame.validate_config(replace(good, K=40))
    # the CLI rejects the config file before doing any work
    bad_path = tmp_path / "bad.cfg"
    frame.write_config(good, bad_path)
    bad_path.write_text(bad_path.read_text().replace("K = 24", "K = 33"))
    out_path = tmp_path / "frames.bin"
    rc = cli_main(["simulate", "--config", str(bad_path), "--profile", "cdlb",
                   "--frames", "1", "--out", str(out_path)])
    err = capsys.readouterr().err
    ok &= rc == 1 and "SOLVABILITY" in err and not out_path.exists()
    report(7, "under-determined configs rejected before computation", ok,
           "K=33 at 96 pilot rows refused in library and CLI; K=32 accepted")
    assert ok


def test_criterion_8_sweep_determinism(tmp_path, capsys):
    cfg = frame.make_config(N=8, T=8, T_P=4, U=2, V=2, K=1, M=2, seed=5)
    cfg_path = tmp_path / "frame.cfg"
    frame.write_config(cfg, cfg_path)
    args = ["sweep", "--config", str(cfg_path), "--estimators",
            "ls,bpcm,genie", "--snr", "0:5:10", "--frames", "3",
            "--seed", "17", "--calib-frames", "30"]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rc1 = cli_main(args + ["--out", str(p1)])
    rc2 = cli_main(args + ["--out", str(p2)])
    capsys.readouterr()
    identical = p1.read_bytes() == p2.read_bytes()
    ok = rc1 == 0 and rc2 == 0 and identical
    report(8, "repeated sweeps are byte-identical", ok,
           f"{len(p1.read_bytes())} bytes, 3 estimators x 3 SNRs")
    assert ok
