"""NMSE scoring, multiplication counts and Monte-Carlo SNR sweeps.

NMSE is the global energy ratio ``||est - truth||^2 / ||truth||^2`` over
whatever tensor is scored; the dB value is ``10*log10`` of that, with an
exact estimate reported as the floor sentinel :data:`NMSE_DB_FLOOR`.

Sweeps use common random numbers: per frame index a channel seed and a
noise seed are derived from the master seed, and every estimator sees the
same realization and noise.  Per (estimator, SNR) the NMSE is a single
global ratio accumulated over all frames.  Estimators that only produce
pilot-grid estimates are extended to the full frame by linear time
interpolation so that all schemes are scored on the same (K, T, N, M)
grid.

The multiplication counts follow the closed forms

    module A: r^3 + 6K r^2 + 3KUVM r,   r = N*T_P/(V*U)
    module B: (12170 + 30T) * T_P*N*M*K / 4

(complex multiplications; module B counts real multiplications of the
convolution stack divided by four).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import baselines, planar
from .channel import ProfileSpec, simulate_channel
from .errors import DimensionMismatch, PlanarceError, ZeroTruth
from .frame import FrameConfig, PilotBook, validate_config
from .network import NetworkSpec, WeightBundle, forward
from .rxmodel import RxFrame, synthesize_rx

__all__ = [
    "NMSE_DB_FLOOR",
    "nmse",
    "complexity_module_a",
    "complexity_module_b",
    "complexity_total",
    "SweepRow",
    "SweepReport",
    "run_sweep",
    "write_sweep_csv",
    "write_flops_csv",
    "make_estimators",
    "derive_seed",
    "interp_users",
]

NMSE_DB_FLOOR = -300.0

# effective Wiener noise floor when a frame carries no thermal noise
_NOISE_EPS = 1e-12


def nmse(est: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Global error-to-signal energy ratio, linear and in dB.

    Raises ZeroTruth for an all-zero reference; an exact estimate maps to
    (0.0, NMSE_DB_FLOOR).
    """
    if est.shape != truth.shape:
        raise DimensionMismatch(
            f"estimate shape {est.shape} != truth shape {truth.shape}"
        )
    den = float(np.sum(np.abs(truth) ** 2))
    if den == 0.0:
        raise ZeroTruth("reference tensor has zero energy")
    num = float(np.sum(np.abs(est - truth) ** 2))
    linear = num / den
    db = NMSE_DB_FLOOR if linear == 0.0 else 10.0 * np.log10(linear)
    return linear, float(db)


def complexity_module_a(cfg: FrameConfig) -> int:
    """Per-frame complex multiplications of the planar LMMSE stage."""
    r = cfg.N * cfg.T_P // (cfg.V * cfg.U)
    return r**3 + 6 * cfg.K * r**2 + 3 * cfg.K * cfg.U * cfg.V * cfg.M * r


def complexity_module_b(cfg: FrameConfig) -> int | float:
    """Per-frame complex multiplications of the convolutional stage."""
    num = (12170 + 30 * cfg.T) * cfg.T_P * cfg.N * cfg.M * cfg.K
    q, rem = divmod(num, 4)
    return q if rem == 0 else num / 4.0


def complexity_total(cfg: FrameConfig) -> int | float:
    return complexity_module_a(cfg) + complexity_module_b(cfg)


def derive_seed(master: int, *stream: int) -> int:
    """Deterministic child seed from a master seed and stream indices."""
    ss = np.random.SeedSequence([int(master), *map(int, stream)])
    return int(ss.generate_state(1)[0])


def interp_users(
    est: np.ndarray, pilot_symbols: tuple[int, ...], T: int
) -> np.ndarray:
    """Linear time interpolation of a (K, T_P, N, M) tensor to (K, T, N, M)."""
    W = baselines.linear_interp_matrix(pilot_symbols, T)
    return np.einsum("tp,kpnm->ktnm", W, est)


Estimator = Callable[[RxFrame], np.ndarray]


def make_estimators(
    cfg: FrameConfig,
    pilots: PilotBook,
    priors: dict[tuple[int, int], planar.PriorSpec] | None = None,
    bank: baselines.CovarianceBank | None = None,
    bundle: WeightBundle | None = None,
    net_spec: NetworkSpec | None = None,
) -> dict[str, Estimator]:
    """Standard estimator closures, each mapping RxFrame -> (K, T, N, M).

    Always includes ``genie`` (returns the truth).  ``bpcm`` needs priors,
    ``lmmse1d``/``lmmse2x1d`` need a covariance bank, ``net`` needs priors
    plus a weight bundle; missing prerequisites simply omit the entry.
    """
    out: dict[str, Estimator] = {}

    def _ls_pilot(rx: RxFrame) -> np.ndarray:
        return baselines.ls_estimate_frame(cfg, rx, pilots)

    out["ls"] = lambda rx: interp_users(
        _ls_pilot(rx), cfg.pilot_symbols, cfg.T
    )

    if priors is not None:
        def _bpcm_pilot(rx: RxFrame) -> np.ndarray:
            return planar.estimate_frame(cfg, rx, pilots, priors)

        out["bpcm"] = lambda rx: interp_users(
            _bpcm_pilot(rx), cfg.pilot_symbols, cfg.T
        )

        if bundle is not None:
            spec = net_spec
            if spec is None:
                from .network import network_spec

                spec = network_spec(cfg)

            def _net(rx: RxFrame) -> np.ndarray:
                pil = _bpcm_pilot(rx)
                return np.stack(
                    [forward(pil[k], bundle, spec) for k in range(cfg.K)]
                )

            out["net"] = _net

    if bank is not None:
        def _noise_eff(rx: RxFrame) -> float:
            return max(
                rx.noise_var * baselines.ls_noise_scale(cfg), _NOISE_EPS
            )

        def _lmmse1d(rx: RxFrame) -> np.ndarray:
            pil = _ls_pilot(rx)
            sm = np.stack(
                [baselines.lmmse_1d_freq(pil[k], bank, _noise_eff(rx))
                 for k in range(cfg.K)]
            )
            return interp_users(sm, cfg.pilot_symbols, cfg.T)

        def _lmmse2x1d(rx: RxFrame) -> np.ndarray:
            pil = _ls_pilot(rx)
            sm = np.stack(
                [baselines.lmmse_2x1d(pil[k], bank, _noise_eff(rx))
                 for k in range(cfg.K)]
            )
            return interp_users(sm, cfg.pilot_symbols, cfg.T)

        out["lmmse1d"] = _lmmse1d
        out["lmmse2x1d"] = _lmmse2x1d

    out["genie"] = lambda rx: rx.truth.H
    return out


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    snr_db: float
    nmse_db: float | None
    frames: int
    wall_ms: float
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    def row(self, estimator: str, snr_db: float) -> SweepRow:
        for r in self.rows:
            if r.estimator == estimator and r.snr_db == snr_db:
                return r
        raise KeyError((estimator, snr_db))


def run_sweep(
    cfg: FrameConfig,
    profile: ProfileSpec,
    pilots: PilotBook,
    estimators: dict[str, Estimator],
    snr_list: list[float],
    frames: int,
    master_seed: int,
) -> SweepReport:
    """Monte-Carlo NMSE sweep with common random numbers.

    For frame i the channel seed is derive_seed(master, i, 1) and the noise
    seed derive_seed(master, i, 2); both are shared by every estimator.  An
    estimator failure marks its (estimator, snr) row with the error type
    instead of aborting the sweep.
    """
    validate_config(cfg)
    names = list(estimators)
    rows: list[SweepRow] = []
    for snr in snr_list:
        num = {n: 0.0 for n in names}
        den = {n: 0.0 for n in names}
        wall = {n: 0.0 for n in names}
        failed: dict[str, str] = {}
        for i in range(frames):
            real = simulate_channel(cfg, profile, derive_seed(master_seed, i, 1))
            rx = synthesize_rx(cfg, real, pilots, snr,
                               derive_seed(master_seed, i, 2))
            truth_energy = float(np.sum(np.abs(real.H) ** 2))
            for n in names:
                if n in failed:
                    continue
                t0 = time.perf_counter()
                try:
                    est = estimators[n](rx)
                except PlanarceError as exc:
                    failed[n] = type(exc).__name__
                    continue
                wall[n] += (time.perf_counter() - t0) * 1e3
                num[n] += float(np.sum(np.abs(est - real.H) ** 2))
                den[n] += truth_energy
        for n in names:
            if n in failed:
                rows.append(SweepRow(n, snr, None, frames, wall[n], failed[n]))
                continue
            linear = num[n] / den[n]
            db = NMSE_DB_FLOOR if linear == 0.0 else 10.0 * np.log10(linear)
            rows.append(SweepRow(n, snr, float(db), frames, wall[n]))
    return SweepReport(rows=tuple(rows))


def write_sweep_csv(
    report: SweepReport, path: str | Path, include_timing: bool = False
) -> None:
    """Write sweep rows as CSV.

    The wall_ms column is left empty unless ``include_timing`` is set, so
    that default output is byte-identical across runs with the same seeds.
    Failed rows carry ``failed:<ErrorType>`` in the nmse_db column.
    """
    lines = ["estimator,snr_db,nmse_db,frames,wall_ms"]
    for r in report.rows:
        nm = f"{r.nmse_db:.6f}" if r.error is None else f"failed:{r.error}"
        wall = f"{r.wall_ms:.1f}" if include_timing else ""
        lines.append(f"{r.estimator},{r.snr_db:g},{nm},{r.frames},{wall}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_flops_csv(
    cfg: FrameConfig, k_range: tuple[int, int], path: str | Path
) -> None:
    """Multiplication counts per user count K in [k_range], inclusive.

    Rows cover the planar stage, the convolutional stage and their sum.
    """
    from dataclasses import replace

    lines = ["estimator,K,multiplications"]
    for K in range(k_range[0], k_range[1] + 1):
        c = replace(cfg, K=K)
        a = complexity_module_a(c)
        b = complexity_module_b(c)
        lines.append(f"bpcm,{K},{a}")
        lines.append(f"net,{K},{b}")
        lines.append(f"bpcm+net,{K},{a + b}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
