"""Block-wise planar channel estimation.

Within one sub-block the channel of user k is approximated by a plane over
the stacked (time, frequency) grid:

    H_k ~= e1 c_k^T + e2 d_k^T + 1 q_k^T

where ``e1`` ramps linearly with the symbol index, ``e2`` with the
subcarrier index and ``1`` is the all-ones column; ``c_k, d_k, q_k`` (each
length M) are per-antenna time slope, frequency slope and mean.  Stacking
follows the frequency-fastest convention of :mod:`planarce.frame`.

On the pilot rows the superimposed observation becomes the linear model

    Y_P = A_P C + B_P D + F_P Q + Z

with regressor columns ``A_P[:, k] = x_k^P * S e1`` (elementwise), and
likewise ``B_P`` with e2 and ``F_P`` with ones, where S gathers pilot rows.
With independent zero-mean Gaussian priors of variances v_C, v_D, v_Q on
the coefficients and white residual Z of variance sigma2_Z, the posterior
means are

    C_post = v_C A_P^H Sigma^-1 Y_P      (B, F analogous)
    Sigma  = v_C A_P A_P^H + v_D B_P B_P^H + v_Q F_P F_P^H + sigma2_Z I.

One Hermitian Cholesky factorisation of Sigma serves all three posteriors.

``sigma2_Z`` lumps thermal noise together with the planar-model residual;
:func:`calibrate_priors` estimates the coefficient variances and the
residual part from noise-free training realizations, and the frame-level
pipeline adds the per-frame thermal noise variance on top.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .channel import ChannelRealization, subblock_channel
from .errors import (
    DimensionMismatch,
    FormatError,
    InsufficientData,
    MissingBlock,
    NumericalFailure,
)
from .frame import (
    FrameConfig,
    PilotBook,
    SubBlockIndex,
    block_pilot_symbols,
    carrier_slice,
    iter_subblocks,
    parse_keyvalues,
    selection_pattern,
    subblock_pilot_sequences,
    validate_config,
)
from .rxmodel import RxFrame

__all__ = [
    "BiasVectors",
    "PlanarCoefficients",
    "PriorSpec",
    "bias_vectors",
    "build_regressors",
    "covariance",
    "lmmse_posteriors",
    "reconstruct_pilot_channel",
    "rearrange",
    "calibrate_priors",
    "default_priors",
    "with_noise",
    "estimate_frame",
    "read_priors",
    "write_priors",
]


@dataclass(frozen=True)
class BiasVectors:
    """Planar basis over one stacked sub-block.

    ``e1[(t-1)*N/V + n - 1] = -T/(2U) + t`` (time ramp, constant across the
    block's subcarriers) and ``e2[...] = -N/(2V) + n`` (frequency ramp,
    repeating every N/V entries).
    """

    e1: np.ndarray
    e2: np.ndarray


def bias_vectors(cfg: FrameConfig) -> BiasVectors:
    tu, nv = cfg.symbols_per_block, cfg.carriers_per_block
    gamma = np.arange(1, tu + 1, dtype=float) - tu / 2.0   # -T/(2U)+t
    lam = np.arange(1, nv + 1, dtype=float) - nv / 2.0     # -N/(2V)+n
    e1 = np.repeat(gamma, nv)
    e2 = np.tile(lam, tu)
    return BiasVectors(e1=e1, e2=e2)


@dataclass(frozen=True)
class PriorSpec:
    """Zero-mean prior variances for one sub-block's planar coefficients."""

    v_C: float
    v_D: float
    v_Q: float
    sigma2_Z: float

    def check(self) -> None:
        if min(self.v_C, self.v_D, self.v_Q) < 0:
            raise ValueError("prior variances must be >= 0")
        if self.sigma2_Z <= 0:
            raise ValueError("sigma2_Z must be > 0")


def with_noise(prior: PriorSpec, noise_var: float) -> PriorSpec:
    """Fold a thermal-noise variance into the residual variance."""
    return replace(prior, sigma2_Z=prior.sigma2_Z + noise_var)


@dataclass(frozen=True)
class PlanarCoefficients:
    """Posterior coefficient means for one sub-block; each (K, M)."""

    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray


def build_regressors(
    cfg: FrameConfig, pilots: PilotBook, b: SubBlockIndex
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pilot-row regressors (A_P, B_P, F_P), each (pilot_rows, K).

    Column k multiplies user k's pilot symbols elementwise with the
    pilot-row gather of e1 / e2 / the all-ones vector.
    """
    bias = bias_vectors(cfg)
    pat = selection_pattern(cfg, b)
    x = subblock_pilot_sequences(cfg, pilots, b)  # (K, P)
    s1 = bias.e1[pat]
    s2 = bias.e2[pat]
    A = (x * s1).T
    B = (x * s2).T
    F = x.T.copy()
    return A, B, F


def covariance(
    A_P: np.ndarray, B_P: np.ndarray, F_P: np.ndarray, prior: PriorSpec
) -> np.ndarray:
    """Observation covariance Sigma, Hermitian positive definite."""
    prior.check()
    P = A_P.shape[0]
    sig = (
        prior.v_C * A_P @ A_P.conj().T
        + prior.v_D * B_P @ B_P.conj().T
        + prior.v_Q * F_P @ F_P.conj().T
        + prior.sigma2_Z * np.eye(P)
    )
    # enforce exact Hermitian symmetry against rounding
    return 0.5 * (sig + sig.conj().T)


def lmmse_posteriors(
    Y_P: np.ndarray,
    A_P: np.ndarray,
    B_P: np.ndarray,
    F_P: np.ndarray,
    prior: PriorSpec,
) -> PlanarCoefficients:
    """Posterior means of (C, D, Q) given the pilot observation Y_P.

    A single Cholesky factorisation of Sigma is reused for all three
    coefficient families.  Raises NumericalFailure on non-finite input or
    a failed factorisation.
    """
    if Y_P.shape[0] != A_P.shape[0]:
        raise DimensionMismatch(
            f"Y_P has {Y_P.shape[0]} rows, regressors {A_P.shape[0]}"
        )
    if not (np.isfinite(Y_P).all() and np.isfinite(A_P).all()
            and np.isfinite(B_P).all() and np.isfinite(F_P).all()):
        raise NumericalFailure("non-finite entries in LMMSE input")
    sigma = covariance(A_P, B_P, F_P, prior)
    try:
        cho = scipy.linalg.cho_factor(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalFailure(f"covariance factorisation failed: {exc}") from exc
    X = scipy.linalg.cho_solve(cho, Y_P)
    return PlanarCoefficients(
        C=prior.v_C * (A_P.conj().T @ X),
        D=prior.v_D * (B_P.conj().T @ X),
        Q=prior.v_Q * (F_P.conj().T @ X),
    )


def reconstruct_pilot_channel(
    cfg: FrameConfig, coeffs: PlanarCoefficients, b: SubBlockIndex
) -> np.ndarray:
    """Planar channel estimates on the pilot rows, per user: (K, pilot_rows, M).

    User k's block is (S e1) c_k^T + (S e2) d_k^T + (S 1) q_k^T.
    """
    bias = bias_vectors(cfg)
    pat = selection_pattern(cfg, b)
    s1, s2 = bias.e1[pat], bias.e2[pat]
    C, D, Q = coeffs.C, coeffs.D, coeffs.Q
    if C.shape != (cfg.K, cfg.M):
        raise DimensionMismatch(f"coefficients {C.shape} != {(cfg.K, cfg.M)}")
    out = (
        s1[None, :, None] * C[:, None, :]
        + s2[None, :, None] * D[:, None, :]
        + np.ones_like(s1)[None, :, None] * Q[:, None, :]
    )
    return out


def rearrange(
    cfg: FrameConfig, blocks: dict[tuple[int, int], np.ndarray]
) -> np.ndarray:
    """Assemble per-block pilot estimates into (K, T_P, N, M) tensors.

    ``blocks[(u, v)]`` must be the (K, pilot_rows, M) output of
    :func:`reconstruct_pilot_channel`.  Raises MissingBlock when any of the
    U*V sub-blocks is absent.
    """
    out = np.zeros((cfg.K, cfg.T_P, cfg.N, cfg.M), dtype=np.complex128)
    for b in iter_subblocks(cfg):
        key = (b.u, b.v)
        if key not in blocks:
            raise MissingBlock(f"sub-block {key} missing from rearrangement")
        blk = blocks[key]
        if blk.shape != (cfg.K, cfg.pilot_rows, cfg.M):
            raise DimensionMismatch(
                f"block {key} shape {blk.shape} != "
                f"{(cfg.K, cfg.pilot_rows, cfg.M)}"
            )
        tile = blk.reshape(cfg.K, cfg.pilots_per_block, cfg.carriers_per_block,
                           cfg.M)
        p0 = (b.u - 1) * cfg.pilots_per_block
        out[:, p0:p0 + cfg.pilots_per_block, carrier_slice(cfg, b.v), :] = tile
    return out


# -- prior calibration -----------------------------------------------------

MIN_CALIBRATION_REALIZATIONS = 30


def calibrate_priors(
    cfg: FrameConfig,
    pilots: PilotBook,
    realizations: list[ChannelRealization],
    noise_var: float = 0.0,
) -> dict[tuple[int, int], PriorSpec]:
    """Estimate per-sub-block prior variances from true channel realizations.

    For every realization, user, antenna and sub-block the full (noise-free)
    sub-block channel column is least-squares fitted against [e1, e2, 1];
    v_C, v_D, v_Q are the second moments of the fitted coefficients about
    the zero prior mean.  sigma2_Z is ``noise_var`` plus the pilot-row
    residual power of those fits summed over users and scaled by the mean
    squared pilot magnitude, matching the composition of the effective
    disturbance Z = sum_k diag(x_k) Delta_k + W.

    Requires at least MIN_CALIBRATION_REALIZATIONS realizations.
    """
    validate_config(cfg)
    if len(realizations) < MIN_CALIBRATION_REALIZATIONS:
        raise InsufficientData(
            f"{len(realizations)} realizations < "
            f"{MIN_CALIBRATION_REALIZATIONS} required"
        )
    bias = bias_vectors(cfg)
    G = np.stack([bias.e1, bias.e2, np.ones(cfg.block_len)], axis=1)
    # (G^H G)^-1 G^H, computed once; G is real with full column rank 3.
    G_pinv = np.linalg.pinv(G)
    priors: dict[tuple[int, int], PriorSpec] = {}
    for b in iter_subblocks(cfg):
        pat = selection_pattern(cfg, b)
        x = subblock_pilot_sequences(cfg, pilots, b)
        mean_x2 = float(np.mean(np.abs(x) ** 2))
        c2, d2, q2, resid2 = [], [], [], []
        for real in realizations:
            for k in range(cfg.K):
                h = subblock_channel(cfg, real, k, b)      # (block_len, M)
                coef = G_pinv @ h                           # (3, M)
                delta_p = h[pat] - G[pat] @ coef            # pilot-row residual
                c2.append(np.abs(coef[0]) ** 2)
                d2.append(np.abs(coef[1]) ** 2)
                q2.append(np.abs(coef[2]) ** 2)
                resid2.append(np.mean(np.abs(delta_p) ** 2))
        mismatch = cfg.K * float(np.mean(resid2)) * mean_x2
        priors[(b.u, b.v)] = PriorSpec(
            v_C=float(np.mean(c2)),
            v_D=float(np.mean(d2)),
            v_Q=float(np.mean(q2)),
            sigma2_Z=noise_var + mismatch,
        )
    return priors


def default_priors(
    cfg: FrameConfig, noise_var: float, inflation: float = 1.0
) -> dict[tuple[int, int], PriorSpec]:
    """Fallback priors when no calibration data exists.

    Unit mean-coefficient variance (channels are power-normalised), small
    slope variances, and sigma2_Z set to the thermal noise variance times a
    configurable inflation factor.
    """
    spec = PriorSpec(v_C=0.1, v_D=0.1, v_Q=1.0, sigma2_Z=noise_var * inflation)
    return {(b.u, b.v): spec for b in iter_subblocks(cfg)}


def estimate_frame(
    cfg: FrameConfig,
    rx: RxFrame,
    pilots: PilotBook,
    priors: dict[tuple[int, int], PriorSpec],
) -> np.ndarray:
    """Full planar pipeline for one frame: posterior fit, rebuild, rearrange.

    The frame's thermal noise variance is folded into each sub-block's
    sigma2_Z on top of the calibrated planar-residual part.  Returns the
    (K, T_P, N, M) pilot-grid estimate tensor.
    """
    blocks: dict[tuple[int, int], np.ndarray] = {}
    for b in iter_subblocks(cfg):
        key = (b.u, b.v)
        if key not in priors:
            raise MissingBlock(f"no priors for sub-block {key}")
        prior = with_noise(priors[key], rx.noise_var)
        A, B, F = build_regressors(cfg, pilots, b)
        coeffs = lmmse_posteriors(rx.block(b).Y_P, A, B, F, prior)
        blocks[key] = reconstruct_pilot_channel(cfg, coeffs, b)
    return rearrange(cfg, blocks)


# -- priors text files -----------------------------------------------------

def write_priors(
    priors: dict[tuple[int, int], PriorSpec], path: str | Path
) -> None:
    """Write per-sub-block priors in the flat key-value text format.

    Keys are ``<field>_<u>_<v>`` with fields v_C, v_D, v_Q, sigma2_Z, plus
    U and V headers.
    """
    keys = sorted(priors)
    U = max(u for u, _ in keys)
    V = max(v for _, v in keys)
    lines = [f"U = {U}", f"V = {V}"]
    for (u, v) in keys:
        p = priors[(u, v)]
        lines += [
            f"v_C_{u}_{v} = {p.v_C!r}",
            f"v_D_{u}_{v} = {p.v_D!r}",
            f"v_Q_{u}_{v} = {p.v_Q!r}",
            f"sigma2_Z_{u}_{v} = {p.sigma2_Z!r}",
        ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_priors(path: str | Path) -> dict[tuple[int, int], PriorSpec]:
    """Load per-sub-block priors written by :func:`write_priors`."""
    kv = parse_keyvalues(Path(path).read_text())
    try:
        U, V = int(kv["U"]), int(kv["V"])
    except KeyError as exc:
        raise FormatError(f"priors file missing header key {exc}") from exc
    priors: dict[tuple[int, int], PriorSpec] = {}
    try:
        for u in range(1, U + 1):
            for v in range(1, V + 1):
                priors[(u, v)] = PriorSpec(
                    v_C=float(kv[f"v_C_{u}_{v}"]),
                    v_D=float(kv[f"v_D_{u}_{v}"]),
                    v_Q=float(kv[f"v_Q_{u}_{v}"]),
                    sigma2_Z=float(kv[f"sigma2_Z_{u}_{v}"]),
                )
    except KeyError as exc:
        raise FormatError(f"priors file missing key {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"priors value: {exc}") from exc
    return priors
