"""Uplink received-signal synthesis on the pilot grid.

For every sub-block the receiver observes, on the pilot rows,

    Y_P = sum_k diag(x_k^P) H_k^P + W

where ``x_k^P`` stacks user k's pilot symbols for the sub-block
(frequency-fastest), ``H_k^P`` is the true sub-block channel gathered at
the pilot rows and ``W`` is i.i.d. circular complex Gaussian noise.

SNR is defined per receive antenna against the summed unit-power user
signals: with unit-modulus pilots and unit-power channels the received
signal power per entry is K, so ``sigma^2 = K / 10^(snr_db/10)``.
``snr_db = inf`` disables noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import DimensionMismatch
from .frame import (
    FrameConfig,
    PilotBook,
    SubBlockIndex,
    carrier_slice,
    block_pilot_symbols,
    iter_subblocks,
    subblock_pilot_sequences,
    validate_config,
)

__all__ = [
    "RxSubBlock",
    "RxFrame",
    "noise_variance",
    "pilot_subblock_channel",
    "synthesize_rx",
]


def noise_variance(cfg: FrameConfig, snr_db: float) -> float:
    """Complex noise variance sigma^2 = K*E_s/10^(snr_db/10) with E_s = 1."""
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return cfg.K / 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class RxSubBlock:
    """Received pilot rows of one sub-block.

    ``Y_P`` has shape (pilot_rows, M); ``b`` names the sub-block.
    """

    b: SubBlockIndex
    Y_P: np.ndarray
    snr_db: float
    noise_var: float


@dataclass(frozen=True)
class RxFrame:
    """All U*V received sub-blocks plus the generating truth."""

    blocks: dict[tuple[int, int], RxSubBlock]
    truth: ChannelRealization
    snr_db: float
    noise_var: float

    def block(self, b: SubBlockIndex) -> RxSubBlock:
        return self.blocks[(b.u, b.v)]


def pilot_subblock_channel(
    cfg: FrameConfig, real: ChannelRealization, k: int, b: SubBlockIndex
) -> np.ndarray:
    """True channel of user k on the pilot rows of sub-block b: (pilot_rows, M)."""
    b.check(cfg)
    _, order = block_pilot_symbols(cfg, b.u)
    t_global = [cfg.pilot_symbols[i] - 1 for i in order]
    tile = real.H[k][t_global, carrier_slice(cfg, b.v), :]
    return tile.reshape(cfg.pilot_rows, cfg.M)


def synthesize_rx(
    cfg: FrameConfig,
    real: ChannelRealization,
    pilots: PilotBook,
    snr_db: float,
    noise_seed: int,
) -> RxFrame:
    """Superimpose all users on the pilot grid and add noise.

    Noise is drawn sub-block by sub-block in (u-major, v-minor) order from a
    generator seeded with ``noise_seed``, so identical seeds reproduce the
    noise exactly.
    """
    validate_config(cfg)
    if real.H.shape != (cfg.K, cfg.T, cfg.N, cfg.M):
        raise DimensionMismatch(
            f"channel grid {real.H.shape} != {(cfg.K, cfg.T, cfg.N, cfg.M)}"
        )
    sigma2 = noise_variance(cfg, snr_db)
    rng = np.random.default_rng(noise_seed)
    blocks: dict[tuple[int, int], RxSubBlock] = {}
    for b in iter_subblocks(cfg):
        x = subblock_pilot_sequences(cfg, pilots, b)  # (K, P)
        Y = np.zeros((cfg.pilot_rows, cfg.M), dtype=np.complex128)
        for k in range(cfg.K):
            Y += x[k][:, None] * pilot_subblock_channel(cfg, real, k, b)
        if sigma2 > 0.0:
            w = rng.standard_normal((cfg.pilot_rows, cfg.M))
            w = w + 1j * rng.standard_normal((cfg.pilot_rows, cfg.M))
            Y += np.sqrt(sigma2 / 2.0) * w
        blocks[(b.u, b.v)] = RxSubBlock(
            b=b, Y_P=Y, snr_db=snr_db, noise_var=sigma2
        )
    return RxFrame(blocks=blocks, truth=real, snr_db=snr_db, noise_var=sigma2)
