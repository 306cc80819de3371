"""Multipath channel simulation tests."""

import numpy as np
import pytest

from planarce import channel, frame
from planarce.errors import CpExceeded, EmptyProfile, FormatError


def cfg_small(**over):
    base = dict(N=12, T=8, T_P=4, U=2, V=2, K=2, M=4)
    base.update(over)
    return frame.make_config(**base)


def flat_profile(nu_free=True):
    return channel.ProfileSpec(
        name="flat", taps=((0.0, 0.0),), rms_delay_spread=0.0,
        speed=0.0 if nu_free else 0.0, carrier_freq=3.5e9,
    )


# -- profile handling ------------------------------------------------------

def test_empty_profile_rejected():
    prof = channel.ProfileSpec(name="empty", taps=(), rms_delay_spread=1e-7,
                               speed=1.0, carrier_freq=3.5e9)
    with pytest.raises(EmptyProfile):
        prof.linear_powers()
    with pytest.raises(EmptyProfile):
        channel.draw_paths(cfg_small(), prof, 0)


def test_powers_normalised():
    prof = channel.cdlb_profile()
    p = prof.linear_powers()
    assert p.shape == (23,)
    np.testing.assert_allclose(p.sum(), 1.0, rtol=1e-12)
    assert (p > 0).all()


def test_cdlb_delays_fit_inside_cp():
    prof = channel.cdlb_profile(rms_delay_spread=129e-9)
    cp = channel.cp_duration(30e3)
    np.testing.assert_allclose(cp, 2.345e-6, rtol=1e-3)
    assert prof.delays().max() < cp
    # the largest normalised delay scaled by 129 ns
    np.testing.assert_allclose(prof.delays().max(), 4.7834 * 129e-9, rtol=1e-12)


def test_excessive_delay_spread_rejected():
    prof = channel.cdlb_profile(rms_delay_spread=1e-6)  # 4.78 us > CP
    with pytest.raises(CpExceeded):
        channel.draw_paths(cfg_small(), prof, 0)


# -- path drawing ----------------------------------------------------------

def test_draw_paths_shapes_and_determinism():
    cfg = cfg_small()
    prof = channel.cdlb_profile()
    a = channel.draw_paths(cfg, prof, 42)
    b = channel.draw_paths(cfg, prof, 42)
    assert a.K == cfg.K
    for ua, ub in zip(a.users, b.users):
        assert ua.beta.shape == (23, cfg.M)
        np.testing.assert_array_equal(ua.beta, ub.beta)
        np.testing.assert_array_equal(ua.nu, ub.nu)
    c = channel.draw_paths(cfg, prof, 43)
    assert not np.array_equal(a.users[0].beta, c.users[0].beta)


def test_doppler_bounded_by_max():
    cfg = cfg_small()
    prof = channel.cdlb_profile(speed_kmh=100.0, carrier_ghz=3.5)
    nu_max = prof.max_doppler_hz * cfg.symbol_duration
    # 100 km/h at 3.5 GHz, 30 kHz spacing: about 0.0108 cycles/symbol
    np.testing.assert_allclose(nu_max, 0.0108, rtol=0.01)
    paths = channel.draw_paths(cfg, prof, 3)
    for up in paths.users:
        assert (np.abs(up.nu) <= nu_max + 1e-15).all()


# -- grid evaluation -------------------------------------------------------

def test_single_static_path_gives_constant_grid():
    cfg = cfg_small()
    paths = channel.PathParams(users=tuple(
        channel.UserPaths(
            beta=np.full((1, cfg.M), 0.5 + 0.5j),
            tau=np.zeros(1), nu=np.zeros(1),
        )
        for _ in range(cfg.K)
    ))
    real = channel.evaluate_channel(cfg, paths)
    assert real.H.shape == (cfg.K, cfg.T, cfg.N, cfg.M)
    np.testing.assert_allclose(real.H, 0.5 + 0.5j, rtol=1e-14)


def test_grid_matches_scalar_formula():
    cfg = cfg_small()
    prof = channel.cdlb_profile()
    paths = channel.draw_paths(cfg, prof, 11)
    real = channel.evaluate_channel(cfg, paths)
    rng = np.random.default_rng(0)
    for _ in range(10):
        k = int(rng.integers(cfg.K))
        t = int(rng.integers(1, cfg.T + 1))
        n = int(rng.integers(1, cfg.N + 1))
        m = int(rng.integers(cfg.M))
        up = paths.users[k]
        expect = 0.0 + 0.0j
        for l in range(up.L):
            expect += up.beta[l, m] * np.exp(
                -2j * np.pi * (cfg.delta_f * up.tau[l] * n + up.nu[l] * t)
            )
        np.testing.assert_allclose(real.H[k, t - 1, n - 1, m], expect,
                                   rtol=1e-12)


def test_reevaluation_is_bit_identical():
    cfg = cfg_small()
    paths = channel.draw_paths(cfg, channel.cdlb_profile(), 21)
    a = channel.evaluate_channel(cfg, paths).H
    b = channel.evaluate_channel(cfg, paths).H
    assert (a == b).all()


def test_flat_profile_constant_over_frequency():
    # single tap at zero delay: no frequency selectivity, only Doppler
    cfg = cfg_small()
    prof = channel.ProfileSpec(name="flat", taps=((0.0, 0.0),),
                               rms_delay_spread=0.0, speed=30.0,
                               carrier_freq=3.5e9)
    real = channel.simulate_channel(cfg, prof, 5)
    ref = real.H[:, :, :1, :]
    np.testing.assert_allclose(real.H, np.broadcast_to(ref, real.H.shape),
                               rtol=1e-12)


def test_zero_speed_constant_over_time():
    cfg = cfg_small()
    prof = channel.cdlb_profile(speed_kmh=0.0)
    real = channel.simulate_channel(cfg, prof, 5)
    ref = real.H[:, :1, :, :]
    np.testing.assert_allclose(real.H, np.broadcast_to(ref, real.H.shape),
                               rtol=1e-12)


def test_unit_average_power():
    # the frame spans about one coherence cell, so per-realization grid
    # power fluctuates with std ~ 1/sqrt(M); M=16 keeps the 100-realization
    # mean well inside the band
    cfg = cfg_small(N=24, K=2, M=16)
    prof = channel.cdlb_profile()
    acc = np.zeros(cfg.K)
    n_real = 100
    for i in range(n_real):
        real = channel.simulate_channel(cfg, prof, 1000 + i)
        acc += np.mean(np.abs(real.H) ** 2, axis=(1, 2, 3))
    acc /= n_real
    assert (acc > 0.9).all() and (acc < 1.1).all()


def test_standard_scale_grid_shape():
    cfg = frame.make_config(N=48, T=28, T_P=8, U=2, V=2, K=24, M=64)
    real = channel.simulate_channel(cfg, channel.cdlb_profile(), 1)
    assert real.H.shape == (24, 28, 48, 64)


# -- sub-block extraction --------------------------------------------------

def test_subblock_stacking_order():
    cfg = cfg_small()
    real = channel.simulate_channel(cfg, channel.cdlb_profile(), 9)
    tu, nv = cfg.symbols_per_block, cfg.carriers_per_block
    for b in frame.iter_subblocks(cfg):
        sub = channel.subblock_channel(cfg, real, 1, b)
        assert sub.shape == (cfg.block_len, cfg.M)
        for t in range(1, tu + 1):
            for n in range(1, nv + 1):
                tg = (b.u - 1) * tu + t - 1
                ng = (b.v - 1) * nv + n - 1
                np.testing.assert_array_equal(
                    sub[(t - 1) * nv + n - 1], real.H[1, tg, ng, :]
                )


def test_subblocks_cover_grid():
    cfg = cfg_small()
    real = channel.simulate_channel(cfg, channel.cdlb_profile(), 9)
    rebuilt = np.zeros_like(real.H[0])
    tu, nv = cfg.symbols_per_block, cfg.carriers_per_block
    for b in frame.iter_subblocks(cfg):
        sub = channel.subblock_channel(cfg, real, 0, b).reshape(tu, nv, cfg.M)
        rebuilt[frame.time_slice(cfg, b.u), frame.carrier_slice(cfg, b.v)] = sub
    np.testing.assert_array_equal(rebuilt, real.H[0])


# -- profile files ---------------------------------------------------------

def test_profile_round_trip(tmp_path):
    prof = channel.cdlb_profile(rms_delay_spread=200e-9, speed_kmh=80.0)
    path = tmp_path / "prof.txt"
    channel.write_profile(prof, path)
    back = channel.read_profile(path)
    assert back.name == prof.name
    np.testing.assert_allclose(back.rms_delay_spread, prof.rms_delay_spread,
                               rtol=1e-12)
    np.testing.assert_allclose(back.speed, prof.speed, rtol=1e-12)
    np.testing.assert_allclose(back.delays(), prof.delays(), rtol=1e-12)
    np.testing.assert_allclose(back.linear_powers(), prof.linear_powers(),
                               rtol=1e-12)


def test_profile_missing_header_rejected(tmp_path):
    path = tmp_path / "prof.txt"
    path.write_text("speed_kmh = 100\n0.0 0.0\n")
    with pytest.raises(FormatError):
        channel.read_profile(path)


def test_profile_bad_tap_rejected(tmp_path):
    path = tmp_path / "prof.txt"
    path.write_text(
        "rms_delay_spread_ns = 100\nspeed_kmh = 100\ncarrier_ghz = 3.5\n"
        "0.0 0.0 junk\n"
    )
    with pytest.raises(FormatError):
        channel.read_profile(path)
