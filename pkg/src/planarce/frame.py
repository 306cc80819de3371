"""Frame geometry, sub-block partitioning and pilot bookkeeping.

A frame spans ``T`` OFDM symbols by ``N`` subcarriers and is shared by ``K``
single-antenna users transmitting to an ``M``-antenna receiver.  The grid is
partitioned into ``U`` time sub-blocks by ``V`` frequency sub-blocks; all
per-sub-block processing stacks the (T/U x N/V) tile into a vector in
frequency-fastest order, i.e. grid point ``(t, n)`` (both 1-based within the
sub-block) lands at vector position ``(t-1)*N/V + n``.

``T_P`` of the T symbols carry pilots, with exactly ``T_P/U`` pilot symbols
inside every time sub-block.  Pilot sequences are unit-modulus random phases
drawn deterministically from a seed.

All stored indices (pilot symbol positions, sub-block coordinates u/v) are
1-based to match the on-disk text formats; helper functions convert to
0-based numpy indexing internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatch, FormatError

__all__ = [
    "FrameConfig",
    "PilotBook",
    "SubBlockIndex",
    "default_pilot_symbols",
    "make_config",
    "validate_config",
    "make_pilot_book",
    "selection_pattern",
    "iter_subblocks",
    "read_config",
    "write_config",
]


def default_pilot_symbols(T: int, T_P: int, U: int) -> tuple[int, ...]:
    """Evenly spread pilot symbol positions, ``T_P/U`` per time sub-block.

    Within each sub-block of ``T/U`` symbols the j-th pilot (1-based) sits at
    local position ``floor((j - 0.5) * (T/U)/(T_P/U)) + 1``, which keeps the
    pilots uniformly spaced and strictly increasing whenever T_P <= T.
    """
    if U <= 0 or T % U or T_P % U:
        raise ConfigError("PARTITION", f"U={U} must divide T={T} and T_P={T_P}")
    per_block = T_P // U
    span = T // U
    if per_block > span:
        raise ConfigError("PILOTS", f"T_P={T_P} exceeds T={T}")
    step = span / per_block
    local = [int(np.floor((j - 0.5) * step)) + 1 for j in range(1, per_block + 1)]
    out = []
    for u in range(U):
        out.extend(u * span + p for p in local)
    return tuple(out)


@dataclass(frozen=True)
class FrameConfig:
    """Static description of one uplink frame.

    Attributes:
        N: subcarriers per frame.
        T: OFDM symbols per frame.
        T_P: pilot symbols per frame.
        U: time sub-blocks (U divides T and T_P).
        V: frequency sub-blocks (V divides N).
        K: single-antenna users.
        M: receive antennas.
        delta_f: subcarrier spacing in Hz.
        pilot_symbols: 1-based global pilot symbol positions, ascending.
        seed: master seed for pilot sequence generation.
    """

    N: int
    T: int
    T_P: int
    U: int
    V: int
    K: int
    M: int
    delta_f: float = 30e3
    pilot_symbols: tuple[int, ...] = field(default=())
    seed: int = 0

    # -- derived sizes -----------------------------------------------------
    @property
    def symbols_per_block(self) -> int:
        return self.T // self.U

    @property
    def carriers_per_block(self) -> int:
        return self.N // self.V

    @property
    def pilots_per_block(self) -> int:
        return self.T_P // self.U

    @property
    def block_len(self) -> int:
        """Rows in a stacked sub-block: (T/U)*(N/V)."""
        return self.symbols_per_block * self.carriers_per_block

    @property
    def pilot_rows(self) -> int:
        """Pilot rows in a stacked sub-block: (T_P/U)*(N/V)."""
        return self.pilots_per_block * self.carriers_per_block

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.delta_f


def make_config(**kwargs) -> FrameConfig:
    """Build a validated FrameConfig, filling default pilot positions."""
    cfg = FrameConfig(**kwargs)
    if not cfg.pilot_symbols:
        cfg = replace(
            cfg, pilot_symbols=default_pilot_symbols(cfg.T, cfg.T_P, cfg.U)
        )
    validate_config(cfg)
    return cfg


def validate_config(cfg: FrameConfig) -> None:
    """Check partition, pilot and solvability constraints.

    Raises ConfigError with a machine-readable code; see
    :class:`planarce.errors.ConfigError` for the code list.
    """
    for name in ("N", "T", "T_P", "U", "V", "K", "M"):
        if getattr(cfg, name) < 1:
            raise ConfigError("DIMENSION", f"{name} must be >= 1")
    if cfg.delta_f <= 0:
        raise ConfigError("DIMENSION", "delta_f must be positive")
    if cfg.T % cfg.U:
        raise ConfigError("PARTITION", f"U={cfg.U} does not divide T={cfg.T}")
    if cfg.N % cfg.V:
        raise ConfigError("PARTITION", f"V={cfg.V} does not divide N={cfg.N}")
    if cfg.T_P % cfg.U:
        raise ConfigError("PARTITION", f"U={cfg.U} does not divide T_P={cfg.T_P}")
    if cfg.T_P > cfg.T:
        raise ConfigError("PILOTS", f"T_P={cfg.T_P} exceeds T={cfg.T}")

    ps = cfg.pilot_symbols
    if len(ps) != cfg.T_P:
        raise ConfigError(
            "PILOTS", f"expected {cfg.T_P} pilot symbols, got {len(ps)}"
        )
    if any(p < 1 or p > cfg.T for p in ps):
        raise ConfigError("PILOTS", f"pilot symbols out of range [1, {cfg.T}]")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ConfigError("PILOTS", "pilot symbols must be strictly increasing")
    span = cfg.symbols_per_block
    for u in range(1, cfg.U + 1):
        lo, hi = (u - 1) * span + 1, u * span
        count = sum(1 for p in ps if lo <= p <= hi)
        if count != cfg.pilots_per_block:
            raise ConfigError(
                "PILOTS",
                f"time sub-block u={u} holds {count} pilots, "
                f"needs exactly {cfg.pilots_per_block}",
            )

    # Per sub-block the planar model has 3K unknowns per antenna and
    # N*T_P/(V*U) pilot observations; require at least as many observations.
    if cfg.pilot_rows < 3 * cfg.K:
        raise ConfigError(
            "SOLVABILITY",
            f"N*T_P/(V*U) = {cfg.pilot_rows} < 3K = {3 * cfg.K}; "
            "not enough pilot rows per sub-block",
        )


@dataclass(frozen=True)
class SubBlockIndex:
    """1-based sub-block coordinate: u in [1, U] (time), v in [1, V] (freq)."""

    u: int
    v: int

    def check(self, cfg: FrameConfig) -> None:
        if not (1 <= self.u <= cfg.U and 1 <= self.v <= cfg.V):
            raise DimensionMismatch(
                f"sub-block ({self.u},{self.v}) outside [1,{cfg.U}]x[1,{cfg.V}]"
            )


def iter_subblocks(cfg: FrameConfig):
    """All U*V sub-block indices in (u-major, v-minor) order."""
    for u in range(1, cfg.U + 1):
        for v in range(1, cfg.V + 1):
            yield SubBlockIndex(u, v)


def time_slice(cfg: FrameConfig, u: int) -> slice:
    """0-based symbol slice covered by time sub-block u."""
    span = cfg.symbols_per_block
    return slice((u - 1) * span, u * span)


def carrier_slice(cfg: FrameConfig, v: int) -> slice:
    """0-based subcarrier slice covered by frequency sub-block v."""
    span = cfg.carriers_per_block
    return slice((v - 1) * span, v * span)


def block_pilot_symbols(cfg: FrameConfig, u: int) -> tuple[list[int], list[int]]:
    """Pilot symbols of time sub-block u.

    Returns (local, order): ``local`` are 1-based positions within the
    sub-block, ``order`` the 0-based indices of those pilots in the global
    pilot ordering (used to index PilotBook arrays).
    """
    span = cfg.symbols_per_block
    lo, hi = (u - 1) * span + 1, u * span
    local, order = [], []
    for i, p in enumerate(cfg.pilot_symbols):
        if lo <= p <= hi:
            local.append(p - (u - 1) * span)
            order.append(i)
    return local, order


def selection_pattern(cfg: FrameConfig, b: SubBlockIndex) -> np.ndarray:
    """0-based stacked-row indices of the pilot rows of sub-block ``b``.

    Row ``(i_t - 1)*N/V + n`` (1-based) of the stacked sub-block is a pilot
    row for each local pilot symbol position i_t, ordered by ascending t then
    ascending n.  Gathering these rows is equivalent to multiplying by the
    0/1 selection matrix with a single unit entry per row at that column.
    """
    b.check(cfg)
    local, _ = block_pilot_symbols(cfg, b.u)
    if not local:
        raise ConfigError("PILOTS", f"time sub-block u={b.u} has no pilots")
    nv = cfg.carriers_per_block
    return np.concatenate([(i - 1) * nv + np.arange(nv) for i in local])


@dataclass(frozen=True)
class PilotBook:
    """Unit-modulus pilot sequences for every user.

    ``sequences[k, p, n]`` is the symbol transmitted by user k (0-based) on
    the p-th pilot symbol (global pilot order) and subcarrier n.
    """

    sequences: np.ndarray  # complex, (K, T_P, N)
    seed: int

    def __post_init__(self):
        if self.sequences.ndim != 3:
            raise DimensionMismatch("pilot sequences must be (K, T_P, N)")


def make_pilot_book(cfg: FrameConfig, seed: int | None = None) -> PilotBook:
    """Draw deterministic unit-modulus random-phase pilot sequences."""
    validate_config(cfg)
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.K, cfg.T_P, cfg.N))
    return PilotBook(sequences=np.exp(1j * phases), seed=seed)


def subblock_pilot_sequences(
    cfg: FrameConfig, pilots: PilotBook, b: SubBlockIndex
) -> np.ndarray:
    """Stacked pilot-row transmit vectors for sub-block ``b``: (K, pilot_rows).

    Entry ``(k, (t-1)*N/V + n)`` is user k's symbol on the t-th pilot symbol
    of the block and the n-th subcarrier of the block (frequency-fastest).
    """
    b.check(cfg)
    if pilots.sequences.shape != (cfg.K, cfg.T_P, cfg.N):
        raise DimensionMismatch(
            f"pilot book shape {pilots.sequences.shape} != "
            f"{(cfg.K, cfg.T_P, cfg.N)}"
        )
    _, order = block_pilot_symbols(cfg, b.u)
    sl = carrier_slice(cfg, b.v)
    sub = pilots.sequences[:, order, sl]  # (K, T_P/U, N/V)
    return sub.reshape(cfg.K, cfg.pilot_rows)


# -- flat key-value config files ------------------------------------------

_CONFIG_KEYS = ("N", "T", "T_P", "U", "V", "K", "M", "delta_f_hz",
                "pilot_symbols", "seed")


def parse_keyvalues(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment; blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        out[key] = val
    return out


def read_config(path: str | Path) -> FrameConfig:
    """Load a FrameConfig from a flat key-value text file."""
    kv = parse_keyvalues(Path(path).read_text())
    missing = [k for k in _CONFIG_KEYS if k not in kv and k != "pilot_symbols"]
    if missing:
        raise FormatError(f"config missing keys: {', '.join(missing)}")
    try:
        ints = {k: int(kv[k]) for k in ("N", "T", "T_P", "U", "V", "K", "M")}
        delta_f = float(kv["delta_f_hz"])
        seed = int(kv["seed"])
        pilots: tuple[int, ...] = ()
        if kv.get("pilot_symbols", "").strip():
            pilots = tuple(int(s) for s in kv["pilot_symbols"].split(","))
    except ValueError as exc:
        raise FormatError(f"config value: {exc}") from exc
    cfg = FrameConfig(delta_f=delta_f, pilot_symbols=pilots, seed=seed, **ints)
    if not cfg.pilot_symbols:
        cfg = replace(cfg, pilot_symbols=default_pilot_symbols(cfg.T, cfg.T_P, cfg.U))
    validate_config(cfg)
    return cfg


def write_config(cfg: FrameConfig, path: str | Path) -> None:
    """Write a FrameConfig as a flat key-value text file."""
    lines = [
        f"N = {cfg.N}",
        f"T = {cfg.T}",
        f"T_P = {cfg.T_P}",
        f"U = {cfg.U}",
        f"V = {cfg.V}",
        f"K = {cfg.K}",
        f"M = {cfg.M}",
        f"delta_f_hz = {cfg.delta_f!r}",
        f"pilot_symbols = {','.join(str(p) for p in cfg.pilot_symbols)}",
        f"seed = {cfg.seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")
