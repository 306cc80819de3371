"""Binary file formats: training datasets, estimate tensors, frame dumps.

All formats are little-endian with no alignment padding.  Integers are
unsigned 32-bit unless stated otherwise; complex tensors are stored as
interleaved (re, im) float32 pairs in row-major (C) order.

``DRCND1`` training dataset::

    magic "DRCND1"
    u32 x 7: N, T, T_P, U, V, K, M
    u32: record count
    records, each:
        input  (T_P, N, M) complex
        label  (T,   N, M) complex
        f32:   snr_db
        u32 + bytes: profile name (UTF-8)
        u64:   generator seed
        u32:   user index (0-based)

``DRCNE1`` estimate container (CLI output)::

    magic "DRCNE1"
    u32 x 5: K, T_dim, N, M, count      # T_dim = T_P (pilot grid) or T
    count tensors, each (K, T_dim, N, M) complex

``DRCNR1`` simulated frame dump (CLI internal)::

    magic "DRCNR1"
    u32 x 7: N, T, T_P, U, V, K, M
    u32: frame count
    frames, each:
        f64: snr_db,  f64: noise variance
        truth (K, T, N, M) complex
        U*V sub-blocks in (u-major, v-minor) order, each
            (pilot_rows, M) complex

A generic named-tensor container (shared with the ``DRCNW1`` weight format
in :mod:`planarce.network`) stores a u32 tensor count then, per tensor, a
u32 name length, the UTF-8 name, u32 rank, u32 dims and raw float32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .channel import ChannelRealization, PathParams
from .errors import DimensionMismatch, FormatError, TruncatedFile
from .frame import FrameConfig, iter_subblocks, validate_config
from .rxmodel import RxFrame, RxSubBlock

__all__ = [
    "DatasetRecord",
    "write_dataset",
    "iter_dataset",
    "read_dataset",
    "write_estimates",
    "read_estimates",
    "write_frames",
    "read_frames",
    "write_named_tensors",
    "read_named_tensors",
]

MAGIC_DATASET = b"DRCND1"
MAGIC_ESTIMATES = b"DRCNE1"
MAGIC_FRAMES = b"DRCNR1"

_HEADER_FIELDS = ("N", "T", "T_P", "U", "V", "K", "M")


def read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"unexpected end of file reading {what}")
    return buf


def _check_magic(fh: BinaryIO, magic: bytes) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")


def _write_u32(fh: BinaryIO, *vals: int) -> None:
    fh.write(struct.pack(f"<{len(vals)}I", *vals))


def _read_u32(fh: BinaryIO, n: int, what: str) -> tuple[int, ...]:
    return struct.unpack(f"<{n}I", read_exact(fh, 4 * n, what))


def _write_complex(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<c8").tobytes())


def _read_complex(fh: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape))
    raw = read_exact(fh, 8 * count, what)
    return np.frombuffer(raw, dtype="<c8").reshape(shape).copy()


def _write_str(fh: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    _write_u32(fh, len(raw))
    fh.write(raw)


def _read_str(fh: BinaryIO, what: str) -> str:
    (n,) = _read_u32(fh, 1, f"{what} length")
    try:
        return read_exact(fh, n, what).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"undecodable {what}: {exc}") from exc


def _write_header(fh: BinaryIO, cfg: FrameConfig, count: int) -> None:
    _write_u32(fh, cfg.N, cfg.T, cfg.T_P, cfg.U, cfg.V, cfg.K, cfg.M, count)


def _read_header(fh: BinaryIO) -> tuple[dict[str, int], int]:
    vals = _read_u32(fh, 8, "header")
    return dict(zip(_HEADER_FIELDS, vals[:7])), vals[7]


def check_header(cfg: FrameConfig, dims: dict[str, int]) -> None:
    """Compare file header dimensions against a FrameConfig."""
    for name, val in dims.items():
        if getattr(cfg, name) != val:
            raise DimensionMismatch(
                f"file header {name}={val} != config {name}={getattr(cfg, name)}"
            )


# -- training datasets (DRCND1) -------------------------------------------

@dataclass(frozen=True)
class DatasetRecord:
    """One training pair: pilot-grid estimate in, true full grid out."""

    input: np.ndarray   # (T_P, N, M) complex
    label: np.ndarray   # (T, N, M) complex
    snr_db: float
    profile_name: str
    seed: int
    user_index: int


def write_dataset(
    cfg: FrameConfig,
    records: Iterable[DatasetRecord],
    path: str | Path,
    count: int | None = None,
) -> int:
    """Write records to a DRCND1 file; returns the number written.

    ``count`` must be supplied when ``records`` is a generator without
    ``len``; a mismatch between the declared and actual number is an error.
    """
    validate_config(cfg)
    if count is None:
        try:
            count = len(records)  # type: ignore[arg-type]
        except TypeError:
            raise ValueError("count required for unsized record iterables")
    in_shape = (cfg.T_P, cfg.N, cfg.M)
    lab_shape = (cfg.T, cfg.N, cfg.M)
    written = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC_DATASET)
        _write_header(fh, cfg, count)
        for rec in records:
            if rec.input.shape != in_shape or rec.label.shape != lab_shape:
                raise DimensionMismatch(
                    f"record {written}: input {rec.input.shape} / label "
                    f"{rec.label.shape}, expected {in_shape} / {lab_shape}"
                )
            _write_complex(fh, rec.input)
            _write_complex(fh, rec.label)
            fh.write(struct.pack("<f", rec.snr_db))
            _write_str(fh, rec.profile_name)
            fh.write(struct.pack("<Q", rec.seed))
            _write_u32(fh, rec.user_index)
            written += 1
    if written != count:
        raise ValueError(f"declared {count} records but wrote {written}")
    return written


def _read_record(fh: BinaryIO, dims: dict[str, int], idx: int) -> DatasetRecord:
    in_shape = (dims["T_P"], dims["N"], dims["M"])
    lab_shape = (dims["T"], dims["N"], dims["M"])
    inp = _read_complex(fh, in_shape, f"record {idx} input")
    lab = _read_complex(fh, lab_shape, f"record {idx} label")
    (snr,) = struct.unpack("<f", read_exact(fh, 4, f"record {idx} snr"))
    name = _read_str(fh, f"record {idx} profile name")
    (seed,) = struct.unpack("<Q", read_exact(fh, 8, f"record {idx} seed"))
    (user,) = _read_u32(fh, 1, f"record {idx} user index")
    return DatasetRecord(
        input=inp, label=lab, snr_db=float(snr),
        profile_name=name, seed=seed, user_index=user,
    )


def iter_dataset(
    path: str | Path,
) -> tuple[dict[str, int], int, Iterator[DatasetRecord]]:
    """Open a DRCND1 file for streaming.

    Returns (header dims, record count, record iterator).  The iterator
    reads lazily and raises TruncatedFile when the file ends early.
    """
    fh = open(path, "rb")
    try:
        _check_magic(fh, MAGIC_DATASET)
        dims, count = _read_header(fh)
    except Exception:
        fh.close()
        raise

    def gen() -> Iterator[DatasetRecord]:
        try:
            for i in range(count):
                yield _read_record(fh, dims, i)
        finally:
            fh.close()

    return dims, count, gen()


def read_dataset(path: str | Path) -> tuple[dict[str, int], list[DatasetRecord]]:
    """Read a whole DRCND1 file into memory."""
    dims, _, it = iter_dataset(path)
    return dims, list(it)


# -- estimate containers (DRCNE1) ------------------------------------------

def write_estimates(tensors: list[np.ndarray], path: str | Path) -> None:
    """Write (K, T_dim, N, M) complex tensors; all must share one shape."""
    if not tensors:
        raise ValueError("no tensors to write")
    shape = tensors[0].shape
    if len(shape) != 4:
        raise DimensionMismatch(f"estimate tensors must be rank 4, got {shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC_ESTIMATES)
        _write_u32(fh, *shape, len(tensors))
        for i, t in enumerate(tensors):
            if t.shape != shape:
                raise DimensionMismatch(
                    f"tensor {i} shape {t.shape} != {shape}"
                )
            _write_complex(fh, t)


def read_estimates(path: str | Path) -> tuple[tuple[int, ...], list[np.ndarray]]:
    """Read a DRCNE1 file: returns ((K, T_dim, N, M), tensors)."""
    with open(path, "rb") as fh:
        _check_magic(fh, MAGIC_ESTIMATES)
        K, T_dim, N, M, count = _read_u32(fh, 5, "estimate header")
        shape = (K, T_dim, N, M)
        out = [_read_complex(fh, shape, f"estimate {i}") for i in range(count)]
        if fh.read(1):
            raise FormatError("trailing bytes after declared estimates")
    return shape, out


# -- simulated frame dumps (DRCNR1) ----------------------------------------

def write_frames(
    cfg: FrameConfig, frames: list[RxFrame], path: str | Path
) -> None:
    """Persist simulated frames (truth + received pilot blocks)."""
    validate_config(cfg)
    with open(path, "wb") as fh:
        fh.write(MAGIC_FRAMES)
        _write_header(fh, cfg, len(frames))
        for fr in frames:
            fh.write(struct.pack("<dd", fr.snr_db, fr.noise_var))
            _write_complex(fh, fr.truth.H)
            for b in iter_subblocks(cfg):
                _write_complex(fh, fr.block(b).Y_P)


def read_frames(cfg: FrameConfig, path: str | Path) -> list[RxFrame]:
    """Load frames written by :func:`write_frames`.

    The reconstructed truth carries the channel grid only (no path
    parameters).
    """
    validate_config(cfg)
    frames: list[RxFrame] = []
    with open(path, "rb") as fh:
        _check_magic(fh, MAGIC_FRAMES)
        dims, count = _read_header(fh)
        check_header(cfg, dims)
        for i in range(count):
            snr, nv = struct.unpack("<dd", read_exact(fh, 16, f"frame {i} header"))
            H = _read_complex(
                fh, (cfg.K, cfg.T, cfg.N, cfg.M), f"frame {i} truth"
            ).astype(np.complex128)
            blocks: dict[tuple[int, int], RxSubBlock] = {}
            for b in iter_subblocks(cfg):
                Y = _read_complex(
                    fh, (cfg.pilot_rows, cfg.M), f"frame {i} block {(b.u, b.v)}"
                ).astype(np.complex128)
                blocks[(b.u, b.v)] = RxSubBlock(
                    b=b, Y_P=Y, snr_db=snr, noise_var=nv
                )
            truth = ChannelRealization(paths=PathParams(users=()), H=H)
            frames.append(
                RxFrame(blocks=blocks, truth=truth, snr_db=snr, noise_var=nv)
            )
        if fh.read(1):
            raise FormatError("trailing bytes after declared frames")
    return frames


# -- generic named-tensor containers ---------------------------------------

def write_named_tensors(
    tensors: dict[str, np.ndarray], path: str | Path, magic: bytes
) -> None:
    """Write float32 tensors with names; order is preserved."""
    with open(path, "wb") as fh:
        fh.write(magic)
        _write_u32(fh, len(tensors))
        for name, arr in tensors.items():
            _write_str(fh, name)
            arr = np.asarray(arr)
            _write_u32(fh, arr.ndim)
            if arr.ndim:
                _write_u32(fh, *arr.shape)
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_named_tensors(path: str | Path, magic: bytes) -> dict[str, np.ndarray]:
    """Read a named-tensor container written with ``magic``."""
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        _check_magic(fh, magic)
        (count,) = _read_u32(fh, 1, "tensor count")
        for _ in range(count):
            name = _read_str(fh, "tensor name")
            if name in tensors:
                raise FormatError(f"duplicate tensor {name}")
            (rank,) = _read_u32(fh, 1, f"rank of {name}")
            if rank > 8:
                raise FormatError(f"tensor {name}: implausible rank {rank}")
            dims = _read_u32(fh, rank, f"dims of {name}") if rank else ()
            n = int(np.prod(dims)) if rank else 1
            raw = read_exact(fh, 4 * n, f"data of {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise FormatError("trailing bytes after declared tensors")
    return tensors
