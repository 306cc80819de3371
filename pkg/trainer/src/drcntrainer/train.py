"""Training loop, metrics and weight export.

Minimises mean absolute error between refined and true channel grids
with Adam, tracks a held-out validation split, and exports the weights
of the best validation epoch. A deterministic mode pins torch's seeds,
algorithms and thread count so identical runs produce identical weight
files.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .model import ChannelDenoiser, linear_interp_matrix

__all__ = [
    "TrainSettings",
    "TrainingDiverged",
    "EpochStats",
    "TrainResult",
    "train_model",
    "evaluate_model",
    "baseline_nmse_db",
    "nmse_db",
]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite or exploded past the divergence guard."""


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    val_frac: float = 0.1
    seed: int = 0
    deterministic: bool = True
    divergence_factor: float = 10.0
    pilot_symbols: tuple[int, ...] | None = None
    log_path: str | Path | None = None


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_l1: float
    val_l1: float


@dataclass(frozen=True)
class TrainResult:
    model: ChannelDenoiser
    history: tuple[EpochStats, ...]
    best_epoch: int
    best_val_l1: float
    settings: TrainSettings = field(repr=False, default=TrainSettings())


def _apply_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def _epoch_l1(model, inputs, labels, batch_size) -> float:
    """Mean absolute error over a dataset, without gradients."""
    total = 0.0
    count = 0
    with torch.no_grad():
        for s in range(0, inputs.shape[0], batch_size):
            xb = inputs[s: s + batch_size]
            yb = labels[s: s + batch_size]
            total += torch.abs(model(xb) - yb).sum().item()
            count += yb.numel()
    return total / count


def train_model(
    inputs: np.ndarray,
    labels: np.ndarray,
    T: int,
    T_P: int,
    settings: TrainSettings = TrainSettings(),
) -> TrainResult:
    """Train on (count, 2, T_P, N, M) inputs against (count, 2, T, N, M) labels.

    The model starts at the linear-interpolation baseline (see
    ``ChannelDenoiser.init_baseline``), so epoch zero already matches the
    classical pipeline and training refines from there. Divergence (NaN
    loss or a training loss above ``divergence_factor`` times the first
    epoch's) aborts with :class:`TrainingDiverged`.
    """
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError("inputs and labels disagree on record count")
    if inputs.shape[0] < 2:
        raise ValueError("need at least two records to form a split")
    if settings.deterministic:
        _apply_determinism(settings.seed)
    else:
        torch.manual_seed(settings.seed)

    model = ChannelDenoiser(T, T_P)
    model.init_baseline(settings.pilot_symbols)

    n = inputs.shape[0]
    order = np.random.default_rng(settings.seed).permutation(n)
    n_val = max(1, int(round(settings.val_frac * n)))
    n_val = min(n_val, n - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_train = torch.from_numpy(inputs[train_idx])
    y_train = torch.from_numpy(labels[train_idx])
    x_val = torch.from_numpy(inputs[val_idx])
    y_val = torch.from_numpy(labels[val_idx])

    opt = torch.optim.Adam(model.parameters(), lr=settings.lr)
    loss_fn = torch.nn.L1Loss()
    shuffler = torch.Generator().manual_seed(settings.seed)

    history: list[EpochStats] = []
    best_val = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    first_train = None
    log_lines = ["epoch,train_l1,val_l1"]

    for epoch in range(1, settings.epochs + 1):
        model.train()
        perm = torch.randperm(x_train.shape[0], generator=shuffler)
        running = 0.0
        seen = 0
        for s in range(0, x_train.shape[0], settings.batch_size):
            idx = perm[s: s + settings.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            opt.zero_grad()
            loss = loss_fn(model(xb), yb)
            loss.backward()
            opt.step()
            running += loss.item() * xb.shape[0]
            seen += xb.shape[0]
        train_l1 = running / seen
        model.eval()
        val_l1 = _epoch_l1(model, x_val, y_val, settings.batch_size)
        history.append(EpochStats(epoch, train_l1, val_l1))
        log_lines.append(f"{epoch},{train_l1:.6e},{val_l1:.6e}")

        if not np.isfinite(train_l1) or not np.isfinite(val_l1):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        if first_train is None:
            first_train = train_l1
        elif train_l1 > settings.divergence_factor * first_train:
            raise TrainingDiverged(
                f"train L1 {train_l1:.3e} exceeded "
                f"{settings.divergence_factor}x the first epoch at epoch {epoch}"
            )
        if val_l1 < best_val:
            best_val = val_l1
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    if settings.log_path is not None:
        Path(settings.log_path).write_text("\n".join(log_lines) + "\n")
    return TrainResult(
        model=model, history=tuple(history), best_epoch=best_epoch,
        best_val_l1=best_val, settings=settings,
    )


def nmse_db(est: np.ndarray, truth: np.ndarray) -> float:
    """Global energy-ratio NMSE in dB over any matching real arrays."""
    err = float(np.sum((est - truth) ** 2))
    ref = float(np.sum(truth**2))
    if ref == 0.0:
        raise ValueError("zero reference energy")
    if err == 0.0:
        return -300.0
    return 10.0 * float(np.log10(err / ref))


def evaluate_model(
    model: ChannelDenoiser,
    inputs: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 16,
) -> tuple[float, float]:
    """(mean L1, NMSE dB) of the model over a dataset."""
    model.eval()
    outs = []
    with torch.no_grad():
        for s in range(0, inputs.shape[0], batch_size):
            outs.append(model(torch.from_numpy(inputs[s: s + batch_size])))
    est = torch.cat(outs).numpy()
    l1 = float(np.mean(np.abs(est - labels)))
    return l1, nmse_db(est, labels)


def baseline_nmse_db(
    inputs: np.ndarray,
    labels: np.ndarray,
    pilot_symbols: tuple[int, ...],
) -> float:
    """NMSE of plain linear time interpolation of the pilot-grid inputs.

    This is exactly what the untrained (baseline-initialised) network
    computes, so it is the reference the trained network must beat.
    """
    T = labels.shape[2]
    W = linear_interp_matrix(pilot_symbols, T).astype(np.float32)
    est = np.einsum("tp,bcpnm->bctnm", W, inputs)
    return nmse_db(est, labels)
