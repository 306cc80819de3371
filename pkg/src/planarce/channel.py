"""Doubly-selective multipath channel simulation.

Each user sees a sum of L discrete paths.  Path l of user k carries an
i.i.d. complex Gaussian gain per receive antenna, a delay ``tau`` (seconds)
and a Doppler ``nu`` expressed in cycles per OFDM symbol.  The frequency
response on symbol t and subcarrier n (both 1-based, global) is

    H[k, t, n, m] = sum_l beta[k, m, l]
                    * exp(-j*2*pi*(delta_f*tau[k,l]*n + nu[k,l]*t))

so delay induces a linear phase across subcarriers and Doppler a linear
phase across symbols.  Symbol indices run globally over the frame, keeping
the channel continuous across time sub-blocks.

Per-user tap powers are normalised to sum to one, which makes the expected
grid power E[|H|^2] equal to one for every user.

Profiles list tap delays in units of the rms delay spread (equivalently, in
ns for a profile with a 1 ns spread) together with relative powers in dB.
Scaled delays must stay inside the cyclic prefix of the numerology.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CpExceeded, DimensionMismatch, EmptyProfile, FormatError
from .frame import (
    FrameConfig,
    SubBlockIndex,
    carrier_slice,
    parse_keyvalues,
    time_slice,
    validate_config,
)

__all__ = [
    "ProfileSpec",
    "UserPaths",
    "PathParams",
    "ChannelRealization",
    "cdlb_profile",
    "cp_duration",
    "draw_paths",
    "evaluate_channel",
    "simulate_channel",
    "subblock_channel",
    "read_profile",
    "write_profile",
]

SPEED_OF_LIGHT = 299792458.0

# Normal cyclic prefix scales inversely with subcarrier spacing; 4.69 us at
# 15 kHz, hence 2.34 us at 30 kHz.
_CP_AT_15KHZ = 4.69e-6


def cp_duration(delta_f: float) -> float:
    """Cyclic prefix duration (seconds) for a subcarrier spacing in Hz."""
    return _CP_AT_15KHZ * 15e3 / delta_f


@dataclass(frozen=True)
class ProfileSpec:
    """Power-delay profile plus mobility parameters.

    Attributes:
        name: short identifier, used in dataset record metadata.
        taps: (delay, power_db) pairs; delay in units of the rms delay
            spread, power relative in dB (normalised to unit sum at use).
        rms_delay_spread: seconds.
        speed: user speed in m/s.
        carrier_freq: carrier frequency in Hz.
    """

    name: str
    taps: tuple[tuple[float, float], ...]
    rms_delay_spread: float
    speed: float
    carrier_freq: float

    def linear_powers(self) -> np.ndarray:
        """Tap powers converted from dB and normalised to unit sum."""
        if not self.taps:
            raise EmptyProfile(f"profile '{self.name}' has no taps")
        p = 10.0 ** (np.array([t[1] for t in self.taps]) / 10.0)
        return p / p.sum()

    def delays(self) -> np.ndarray:
        """Tap delays scaled to the requested rms delay spread (seconds)."""
        if not self.taps:
            raise EmptyProfile(f"profile '{self.name}' has no taps")
        return np.array([t[0] for t in self.taps]) * self.rms_delay_spread

    @property
    def max_doppler_hz(self) -> float:
        return self.speed * self.carrier_freq / SPEED_OF_LIGHT


# 23-tap urban macro profile (normalised delay, relative power in dB).
_CDLB_TAPS = (
    (0.0000, 0.0), (0.1072, -2.2), (0.2155, -4.0), (0.2095, -3.2),
    (0.2870, -9.8), (0.2986, -1.2), (0.3752, -3.4), (0.5055, -5.2),
    (0.3681, -7.6), (0.3697, -3.0), (0.5700, -8.9), (0.5283, -9.0),
    (1.1021, -4.8), (1.2756, -5.7), (1.5474, -7.5), (1.7842, -1.9),
    (2.0169, -7.6), (2.8294, -12.2), (3.0219, -9.8), (3.6187, -11.4),
    (4.1067, -14.9), (4.2790, -9.2), (4.7834, -11.3),
)


def cdlb_profile(
    rms_delay_spread: float = 129e-9,
    speed_kmh: float = 100.0,
    carrier_ghz: float = 3.5,
) -> ProfileSpec:
    """Built-in CDL-B-like 23-tap profile."""
    return ProfileSpec(
        name="cdlb",
        taps=_CDLB_TAPS,
        rms_delay_spread=rms_delay_spread,
        speed=speed_kmh / 3.6,
        carrier_freq=carrier_ghz * 1e9,
    )


@dataclass(frozen=True)
class UserPaths:
    """Per-user path parameters; arrays are treated as immutable.

    Attributes:
        beta: complex per-antenna gains, shape (L, M).
        tau: delays in seconds, shape (L,).
        nu: Doppler in cycles per OFDM symbol, shape (L,).
    """

    beta: np.ndarray
    tau: np.ndarray
    nu: np.ndarray

    @property
    def L(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class PathParams:
    """Path parameters for all K users."""

    users: tuple[UserPaths, ...]

    @property
    def K(self) -> int:
        return len(self.users)


@dataclass(frozen=True)
class ChannelRealization:
    """Evaluated channel grid plus the paths that generated it.

    ``H`` has shape (K, T, N, M) with 0-based axes (user, symbol,
    subcarrier, antenna).
    """

    paths: PathParams
    H: np.ndarray


def draw_paths(
    cfg: FrameConfig, profile: ProfileSpec, seed: int
) -> PathParams:
    """Draw random path parameters for all users.

    Per user and path: gains i.i.d. CN(0, p_l) across antennas, delay from
    the scaled profile, Doppler ``(speed*f_c/c)*T_sym*cos(phi)`` with phi
    uniform on [0, 2*pi).  Raises CpExceeded when a scaled delay falls
    outside the cyclic prefix of cfg's numerology.
    """
    validate_config(cfg)
    powers = profile.linear_powers()
    delays = profile.delays()
    cp = cp_duration(cfg.delta_f)
    worst = float(delays.max())
    if worst >= cp:
        raise CpExceeded(
            f"max scaled delay {worst * 1e9:.1f} ns >= cyclic prefix "
            f"{cp * 1e9:.1f} ns"
        )
    nu_max = profile.max_doppler_hz * cfg.symbol_duration
    L = len(powers)
    rng = np.random.default_rng(seed)
    users = []
    for _ in range(cfg.K):
        scale = np.sqrt(powers / 2.0)
        beta = scale[:, None] * (
            rng.standard_normal((L, cfg.M)) + 1j * rng.standard_normal((L, cfg.M))
        )
        phi = rng.uniform(0.0, 2.0 * np.pi, size=L)
        users.append(
            UserPaths(beta=beta, tau=delays.copy(), nu=nu_max * np.cos(phi))
        )
    return PathParams(users=tuple(users))


def evaluate_channel(cfg: FrameConfig, paths: PathParams) -> ChannelRealization:
    """Evaluate the path sum on the full (K, T, N, M) grid.

    Deterministic in the paths: re-evaluating stored PathParams reproduces
    the grid to exact floating-point equality.
    """
    if paths.K != cfg.K:
        raise DimensionMismatch(f"paths carry {paths.K} users, cfg.K={cfg.K}")
    H = np.empty((cfg.K, cfg.T, cfg.N, cfg.M), dtype=np.complex128)
    t_idx = np.arange(1, cfg.T + 1)
    n_idx = np.arange(1, cfg.N + 1)
    for k, up in enumerate(paths.users):
        if up.beta.shape[1] != cfg.M:
            raise DimensionMismatch(
                f"user {k}: beta has {up.beta.shape[1]} antennas, cfg.M={cfg.M}"
            )
        # exp(-j*2*pi*nu*t) outer exp(-j*2*pi*delta_f*tau*n), summed over
        # paths against the per-antenna gains.
        ph_t = np.exp(-2j * np.pi * np.outer(up.nu, t_idx))          # (L, T)
        ph_n = np.exp(-2j * np.pi * np.outer(cfg.delta_f * up.tau, n_idx))
        H[k] = np.einsum("lt,ln,lm->tnm", ph_t, ph_n, up.beta)
    return ChannelRealization(paths=paths, H=H)


def simulate_channel(
    cfg: FrameConfig, profile: ProfileSpec, seed: int
) -> ChannelRealization:
    """draw_paths followed by evaluate_channel."""
    return evaluate_channel(cfg, draw_paths(cfg, profile, seed))


def subblock_channel(
    cfg: FrameConfig, real: ChannelRealization, k: int, b: SubBlockIndex
) -> np.ndarray:
    """Stacked sub-block channel of user k: (block_len, M), frequency-fastest."""
    b.check(cfg)
    if not 0 <= k < cfg.K:
        raise DimensionMismatch(f"user index {k} outside [0, {cfg.K})")
    tile = real.H[k, time_slice(cfg, b.u), carrier_slice(cfg, b.v), :]
    return tile.reshape(cfg.block_len, cfg.M)


# -- profile text files ----------------------------------------------------

def read_profile(path: str | Path) -> ProfileSpec:
    """Load a profile from a tap-table text file.

    Header lines are ``key = value`` with keys rms_delay_spread_ns,
    speed_kmh, carrier_ghz and optionally name; remaining non-comment lines
    are ``delay power_db`` pairs (delay in units of the rms delay spread).
    """
    path = Path(path)
    header_lines, tap_lines = [], []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        (header_lines if "=" in line else tap_lines).append(line)
    kv = parse_keyvalues("\n".join(header_lines))
    missing = [k for k in ("rms_delay_spread_ns", "speed_kmh", "carrier_ghz")
               if k not in kv]
    if missing:
        raise FormatError(f"profile missing keys: {', '.join(missing)}")
    taps = []
    for line in tap_lines:
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"bad tap line: {line!r}")
        try:
            taps.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise FormatError(f"bad tap line: {line!r}") from exc
    if not taps:
        raise EmptyProfile(f"profile file {path} lists no taps")
    try:
        return ProfileSpec(
            name=kv.get("name", path.stem),
            taps=tuple(taps),
            rms_delay_spread=float(kv["rms_delay_spread_ns"]) * 1e-9,
            speed=float(kv["speed_kmh"]) / 3.6,
            carrier_freq=float(kv["carrier_ghz"]) * 1e9,
        )
    except ValueError as exc:
        raise FormatError(f"profile value: {exc}") from exc


def write_profile(profile: ProfileSpec, path: str | Path) -> None:
    """Write a profile as a tap-table text file."""
    lines = [
        f"name = {profile.name}",
        f"rms_delay_spread_ns = {profile.rms_delay_spread * 1e9!r}",
        f"speed_kmh = {profile.speed * 3.6!r}",
        f"carrier_ghz = {profile.carrier_freq / 1e9!r}",
    ]
    lines += [f"{d!r} {p!r}" for d, p in profile.taps]
    Path(path).write_text("\n".join(lines) + "\n")
