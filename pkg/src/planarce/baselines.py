"""Classical reference estimators.

* Block-wise least squares: per sub-block, a mean-only (flat) channel model
  fitted by LS on the pilot rows — the planar estimator with both slope
  columns removed and no prior shrinkage.
* 1D frequency Wiener smoothing of pilot-grid estimates with a calibrated
  subcarrier covariance R_f.
* 2x1D Wiener smoothing: frequency pass followed by a time pass with the
  pilot-symbol covariance R_t (a separable stand-in for the full 2D filter).
* Linear time interpolation from the pilot symbols to the full frame, with
  constant extrapolation outside the pilot span.

Effective noise levels for the Wiener filters follow a documented
convention: the per-entry estimation noise after block-LS is approximately
``sigma^2 / pilot_rows`` (unit-modulus pilots spread the thermal noise over
the block's pilot observations), and the time pass reuses the frequency
pass's level unless told otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelRealization
from .errors import (
    DimensionMismatch,
    InsufficientData,
    NumericalFailure,
    RankDeficient,
)
from .frame import (
    FrameConfig,
    PilotBook,
    SubBlockIndex,
    iter_subblocks,
    subblock_pilot_sequences,
    validate_config,
)
from .rxmodel import RxFrame

__all__ = [
    "CovarianceBank",
    "ls_subblock",
    "ls_estimate_frame",
    "lmmse_1d_freq",
    "lmmse_2x1d",
    "linear_interp_matrix",
    "interp_time_linear",
    "estimate_covariances",
    "ls_noise_scale",
]


def ls_subblock(Y_P: np.ndarray, F_P: np.ndarray) -> np.ndarray:
    """Least-squares flat-channel coefficients: (K, M).

    Solves min ||Y_P - F_P Q||_F for Q.  Raises RankDeficient when F_P has
    fewer rows than columns or rank below K.
    """
    P, K = F_P.shape
    if Y_P.shape[0] != P:
        raise DimensionMismatch(f"Y_P rows {Y_P.shape[0]} != F_P rows {P}")
    if P < K:
        raise RankDeficient(f"{P} pilot rows < {K} users")
    if not (np.isfinite(Y_P).all() and np.isfinite(F_P).all()):
        raise NumericalFailure("non-finite entries in LS input")
    Q, _, rank, _ = np.linalg.lstsq(F_P, Y_P, rcond=None)
    if rank < K:
        raise RankDeficient(f"pilot regressor rank {rank} < {K}")
    return Q


def ls_estimate_frame(
    cfg: FrameConfig, rx: RxFrame, pilots: PilotBook
) -> np.ndarray:
    """Block-wise LS pipeline: (K, T_P, N, M) pilot-grid estimates.

    Each sub-block's estimate is the constant q_k per user/antenna repeated
    over the block's pilot rows.
    """
    from .planar import rearrange  # local import to avoid a cycle

    blocks: dict[tuple[int, int], np.ndarray] = {}
    for b in iter_subblocks(cfg):
        F = subblock_pilot_sequences(cfg, pilots, b).T
        Q = ls_subblock(rx.block(b).Y_P, F)
        blocks[(b.u, b.v)] = np.broadcast_to(
            Q[:, None, :], (cfg.K, cfg.pilot_rows, cfg.M)
        ).copy()
    return rearrange(cfg, blocks)


@dataclass(frozen=True)
class CovarianceBank:
    """Sample channel covariances for the Wiener baselines.

    ``R_f`` is (N, N) across subcarriers, ``R_t`` (T_P, T_P) across pilot
    symbols; both Hermitian PSD by construction.  ``estimated_from`` counts
    the vector samples that went into each.
    """

    R_f: np.ndarray
    R_t: np.ndarray
    estimated_from: int


def estimate_covariances(
    cfg: FrameConfig, realizations: list[ChannelRealization]
) -> CovarianceBank:
    """Sample covariances across subcarriers and pilot symbols.

    Frequency vectors are the length-N channel rows collected over (user,
    symbol, antenna, realization); time vectors are the length-T_P channel
    columns at the pilot symbols over (user, subcarrier, antenna,
    realization).
    """
    validate_config(cfg)
    if not realizations:
        raise InsufficientData("no realizations for covariance estimation")
    p_idx = [p - 1 for p in cfg.pilot_symbols]
    Rf = np.zeros((cfg.N, cfg.N), dtype=np.complex128)
    Rt = np.zeros((cfg.T_P, cfg.T_P), dtype=np.complex128)
    n_f = 0
    for real in realizations:
        H = real.H  # (K, T, N, M)
        vf = H.transpose(0, 1, 3, 2).reshape(-1, cfg.N)
        # accumulate sum_s v_s v_s^H (E[v v^H] convention, not its transpose)
        Rf += vf.T @ vf.conj()
        n_f += vf.shape[0]
        vt = H[:, p_idx, :, :].transpose(0, 2, 3, 1).reshape(-1, cfg.T_P)
        Rt += vt.T @ vt.conj()
    Rf /= n_f
    Rt /= len(realizations) * cfg.K * cfg.N * cfg.M
    Rf = 0.5 * (Rf + Rf.conj().T)
    Rt = 0.5 * (Rt + Rt.conj().T)
    return CovarianceBank(R_f=Rf, R_t=Rt, estimated_from=n_f)


def _wiener(R: np.ndarray, noise_var: float) -> np.ndarray:
    """W = R (R + noise_var I)^-1 via a Hermitian solve."""
    n = R.shape[0]
    A = R + noise_var * np.eye(n)
    try:
        return scipy.linalg.solve(A.T, R.T, assume_a="her").T
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Wiener solve failed: {exc}") from exc


def ls_noise_scale(cfg: FrameConfig) -> float:
    """Per-entry noise scale of block-LS estimates: 1 / pilot_rows."""
    return 1.0 / cfg.pilot_rows


def lmmse_1d_freq(
    est: np.ndarray, bank: CovarianceBank, noise_eff: float
) -> np.ndarray:
    """Wiener-filter pilot-grid estimates across the subcarrier axis.

    ``est`` is one user's (T_P, N, M) tensor; the filter
    ``W = R_f (R_f + noise_eff I)^-1`` acts on axis 1 independently per
    pilot symbol and antenna.
    """
    N = bank.R_f.shape[0]
    if est.ndim != 3 or est.shape[1] != N:
        raise DimensionMismatch(
            f"estimate shape {est.shape} incompatible with R_f ({N}x{N})"
        )
    W = _wiener(bank.R_f, noise_eff)
    return np.einsum("ij,tjm->tim", W, est)


def lmmse_2x1d(
    est: np.ndarray,
    bank: CovarianceBank,
    noise_eff: float,
    noise_eff_t: float | None = None,
) -> np.ndarray:
    """Separable Wiener smoothing: frequency pass then time pass.

    The time pass applies ``R_t (R_t + noise_eff_t I)^-1`` across the
    pilot-symbol axis; ``noise_eff_t`` defaults to ``noise_eff``.
    """
    out = lmmse_1d_freq(est, bank, noise_eff)
    T_P = bank.R_t.shape[0]
    if out.shape[0] != T_P:
        raise DimensionMismatch(
            f"estimate shape {out.shape} incompatible with R_t ({T_P}x{T_P})"
        )
    Wt = _wiener(bank.R_t, noise_eff if noise_eff_t is None else noise_eff_t)
    return np.einsum("ij,jnm->inm", Wt, out)


def linear_interp_matrix(pilot_symbols: tuple[int, ...], T: int) -> np.ndarray:
    """(T, T_P) linear interpolation weights from pilot symbols to all symbols.

    Piecewise linear between adjacent pilots; symbols before the first and
    after the last pilot hold the boundary value.  Rows sum to one.
    """
    T_P = len(pilot_symbols)
    if T_P == 0:
        raise DimensionMismatch("no pilot symbols to interpolate from")
    W = np.zeros((T, T_P))
    pos = np.asarray(pilot_symbols, dtype=float)
    for t in range(1, T + 1):
        if t <= pos[0]:
            W[t - 1, 0] = 1.0
        elif t >= pos[-1]:
            W[t - 1, T_P - 1] = 1.0
        else:
            j = int(np.searchsorted(pos, t, side="right")) - 1
            frac = (t - pos[j]) / (pos[j + 1] - pos[j])
            W[t - 1, j] = 1.0 - frac
            W[t - 1, j + 1] = frac
    return W


def interp_time_linear(
    est: np.ndarray, pilot_symbols: tuple[int, ...], T: int
) -> np.ndarray:
    """Interpolate a (T_P, N, M) pilot-grid tensor to the full (T, N, M) grid."""
    if est.shape[0] != len(pilot_symbols):
        raise DimensionMismatch(
            f"{est.shape[0]} pilot rows vs {len(pilot_symbols)} pilot symbols"
        )
    W = linear_interp_matrix(pilot_symbols, T)
    return np.einsum("tp,pnm->tnm", W, est)
