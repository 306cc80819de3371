"""Binary dataset and weight containers.

Implemented from the byte-layout contract, independently of the
estimation toolkit, so that the two packages genuinely interoperate
through files:

``DRCND1`` training datasets: 6-byte magic, eight little-endian u32
(N, T, T_P, U, V, K, M, record count), then per record an interleaved
complex64 input tensor (T_P, N, M), a complex64 label tensor (T, N, M),
a float32 SNR, a u32-length-prefixed UTF-8 profile name, a u64 seed and
a u32 user index.

``DRCNW1`` weight files: 6-byte magic, u32 tensor count, then per tensor
a u32-length-prefixed UTF-8 name, u32 rank, u32 dims and float32
row-major data. Insertion order is preserved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

__all__ = [
    "FormatError",
    "DATASET_MAGIC",
    "WEIGHTS_MAGIC",
    "DatasetHeader",
    "DatasetRecord",
    "iter_dataset",
    "load_dataset_arrays",
    "write_weights",
    "read_weights",
]

DATASET_MAGIC = b"DRCND1"
WEIGHTS_MAGIC = b"DRCNW1"

_HEADER_FIELDS = ("N", "T", "T_P", "U", "V", "K", "M")


class FormatError(ValueError):
    """Malformed or truncated container file."""


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"unexpected end of file reading {what}")
    return buf


def _read_str(fh: BinaryIO, what: str) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4, f"{what} length"))
    try:
        return _read_exact(fh, n, what).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"undecodable {what}: {exc}") from exc


@dataclass(frozen=True)
class DatasetHeader:
    N: int
    T: int
    T_P: int
    U: int
    V: int
    K: int
    M: int
    count: int


@dataclass(frozen=True)
class DatasetRecord:
    input: np.ndarray   # (T_P, N, M) complex64
    label: np.ndarray   # (T, N, M) complex64
    snr_db: float
    profile_name: str
    seed: int
    user_index: int


def _read_complex(fh: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    n = int(np.prod(shape))
    raw = _read_exact(fh, 8 * n, what)
    return np.frombuffer(raw, dtype="<c8").reshape(shape).copy()


def iter_dataset(path: str | Path) -> tuple[DatasetHeader, Iterator[DatasetRecord]]:
    """Open a dataset for streaming; the iterator owns the file handle."""
    fh = open(path, "rb")
    try:
        if fh.read(6) != DATASET_MAGIC:
            raise FormatError(f"{path}: not a DRCND1 dataset")
        vals = struct.unpack("<8I", _read_exact(fh, 32, "dataset header"))
        header = DatasetHeader(*vals[:7], count=vals[7])
    except Exception:
        fh.close()
        raise

    def gen() -> Iterator[DatasetRecord]:
        try:
            for i in range(header.count):
                inp = _read_complex(
                    fh, (header.T_P, header.N, header.M), f"record {i} input"
                )
                lab = _read_complex(
                    fh, (header.T, header.N, header.M), f"record {i} label"
                )
                (snr,) = struct.unpack(
                    "<f", _read_exact(fh, 4, f"record {i} snr")
                )
                name = _read_str(fh, f"record {i} profile name")
                (seed,) = struct.unpack(
                    "<Q", _read_exact(fh, 8, f"record {i} seed")
                )
                (user,) = struct.unpack(
                    "<I", _read_exact(fh, 4, f"record {i} user index")
                )
                yield DatasetRecord(
                    input=inp, label=lab, snr_db=float(snr),
                    profile_name=name, seed=seed, user_index=user,
                )
        finally:
            fh.close()

    return header, gen()


def load_dataset_arrays(
    path: str | Path,
) -> tuple[DatasetHeader, np.ndarray, np.ndarray, np.ndarray]:
    """Load a whole dataset as real-channel training arrays.

    Returns (header, inputs, labels, snrs) with inputs shaped
    (count, 2, T_P, N, M) float32 (real/imaginary channels), labels
    (count, 2, T, N, M) float32 and snrs (count,) float32.
    """
    header, records = iter_dataset(path)
    inputs = np.empty((header.count, 2, header.T_P, header.N, header.M),
                      np.float32)
    labels = np.empty((header.count, 2, header.T, header.N, header.M),
                      np.float32)
    snrs = np.empty(header.count, np.float32)
    for i, rec in enumerate(records):
        inputs[i, 0] = rec.input.real
        inputs[i, 1] = rec.input.imag
        labels[i, 0] = rec.label.real
        labels[i, 1] = rec.label.imag
        snrs[i] = rec.snr_db
    return header, inputs, labels, snrs


def write_weights(tensors: dict[str, np.ndarray], path: str | Path) -> None:
    """Write named float32 tensors; dict order becomes file order."""
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            arr = np.asarray(arr)
            fh.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_weights(path: str | Path) -> dict[str, np.ndarray]:
    """Read a weight file back into an ordered name -> float32 dict."""
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(6) != WEIGHTS_MAGIC:
            raise FormatError(f"{path}: not a DRCNW1 weight file")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        for _ in range(count):
            name = _read_str(fh, "tensor name")
            if name in tensors:
                raise FormatError(f"duplicate tensor {name}")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"{name} rank"))
            if rank > 8:
                raise FormatError(f"tensor {name}: implausible rank {rank}")
            dims = struct.unpack(
                f"<{rank}I", _read_exact(fh, 4 * rank, f"{name} dims")
            ) if rank else ()
            n = int(np.prod(dims)) if rank else 1
            raw = _read_exact(fh, 4 * n, f"{name} data")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise FormatError("trailing bytes after declared tensors")
    return tensors
