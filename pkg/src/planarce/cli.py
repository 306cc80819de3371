"""Command-line interface.

Subcommands::

    simulate        generate received frames from a config + profile
    calibrate       estimate planar priors (and covariances) from channels
    estimate        run an estimator over simulated frames
    infer           apply network refinement to pilot-grid estimates
    export-dataset  build a training dataset of (module-A input, truth) pairs
    sweep           NMSE-versus-SNR Monte-Carlo comparison, CSV output
    count-flops     multiplication counts versus user count, CSV output

Every subcommand is deterministic given its flags and seeds.  Errors exit
nonzero after printing a single line ``error: <Type>: <message>`` to
stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import baselines, datafiles, evaluate, planar
from .channel import (
    ProfileSpec,
    cdlb_profile,
    draw_paths,
    evaluate_channel,
    read_profile,
)
from .errors import FormatError, PlanarceError, ShapeMismatch
from .frame import FrameConfig, make_pilot_book, read_config
from .network import forward, load_weights, network_spec
from .rxmodel import synthesize_rx

__all__ = ["main", "build_parser"]


def _load_profile(arg: str) -> ProfileSpec:
    if arg == "cdlb":
        return cdlb_profile()
    return read_profile(arg)


def _parse_span(arg: str, what: str) -> tuple[float, float]:
    parts = arg.split(":")
    if len(parts) != 2:
        raise FormatError(f"{what} must be 'start:stop', got {arg!r}")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise FormatError(f"{what}: {exc}") from exc
    if b < a:
        raise FormatError(f"{what}: stop {b} below start {a}")
    return a, b


def _parse_grid(arg: str) -> list[float]:
    """start:step:stop (inclusive) or a single value."""
    parts = arg.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) != 3:
            raise ValueError("expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("step must be positive")
        out = []
        v = start
        while v <= stop + 1e-9:
            out.append(round(v, 9))
            v += step
        return out
    except ValueError as exc:
        raise FormatError(f"snr grid {arg!r}: {exc}") from exc


def _parse_krange(arg: str) -> tuple[int, int]:
    parts = arg.split(":")
    if len(parts) != 2:
        raise FormatError(f"k-range must be 'a:b', got {arg!r}")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise FormatError(f"k-range: {exc}") from exc
    if a < 0 or b < a:
        raise FormatError(f"k-range {arg!r} is not a valid inclusive range")
    return a, b


def _randomized_profile(
    base: ProfileSpec,
    rng: np.random.Generator,
    ds_span: tuple[float, float],
    speed_span: tuple[float, float],
) -> ProfileSpec:
    """Draw per-frame delay spread (ns) and speed (km/h) from spans."""
    ds_ns = rng.uniform(*ds_span)
    speed_kmh = rng.uniform(*speed_span)
    return replace(
        base, rms_delay_spread=ds_ns * 1e-9, speed=speed_kmh / 3.6
    )


def _calibrate(
    cfg: FrameConfig,
    profile: ProfileSpec,
    pilots,
    frames: int,
    seed: int,
    randomize: tuple[tuple[float, float], tuple[float, float]] | None = None,
):
    """Generate training realizations and calibrate priors + covariances."""
    rng = np.random.default_rng(evaluate.derive_seed(seed, 90))
    reals = []
    for i in range(frames):
        prof = profile
        if randomize is not None:
            prof = _randomized_profile(profile, rng, *randomize)
        reals.append(
            evaluate_channel(
                cfg, draw_paths(cfg, prof, evaluate.derive_seed(seed, 91, i))
            )
        )
    priors = planar.calibrate_priors(cfg, pilots, reals)
    bank = baselines.estimate_covariances(cfg, reals)
    return priors, bank


# -- subcommand implementations --------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    profile = _load_profile(args.profile)
    pilots = make_pilot_book(cfg)
    frames = []
    for i in range(args.frames):
        real = evaluate_channel(
            cfg, draw_paths(cfg, profile, evaluate.derive_seed(args.seed, i, 1))
        )
        frames.append(
            synthesize_rx(cfg, real, pilots, args.snr,
                          evaluate.derive_seed(args.seed, i, 2))
        )
    datafiles.write_frames(cfg, frames, args.out)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = read_config(args.config)
    profile = _load_profile(args.profile)
    pilots = make_pilot_book(cfg)
    priors, bank = _calibrate(cfg, profile, pilots, args.frames, args.seed)
    planar.write_priors(priors, args.out)
    print(f"wrote priors for {len(priors)} sub-blocks to {args.out}")
    if args.cov_out:
        datafiles.write_named_tensors(
            {
                "R_f": np.stack([bank.R_f.real, bank.R_f.imag], axis=-1),
                "R_t": np.stack([bank.R_t.real, bank.R_t.imag], axis=-1),
                "estimated_from": np.array([bank.estimated_from], np.float32),
            },
            args.cov_out,
            b"DRCNC1",
        )
        print(f"wrote covariance bank to {args.cov_out}")
    return 0


def _load_bank(path: str) -> baselines.CovarianceBank:
    t = datafiles.read_named_tensors(path, b"DRCNC1")
    try:
        Rf = t["R_f"][..., 0].astype(np.float64) + 1j * t["R_f"][..., 1]
        Rt = t["R_t"][..., 0].astype(np.float64) + 1j * t["R_t"][..., 1]
        n = int(t["estimated_from"].ravel()[0])
    except KeyError as exc:
        raise FormatError(f"covariance bank missing tensor {exc}") from exc
    return baselines.CovarianceBank(R_f=Rf, R_t=Rt, estimated_from=n)


def _cmd_estimate(args) -> int:
    cfg = read_config(args.config)
    pilots = make_pilot_book(cfg)
    frames = datafiles.read_frames(cfg, args.input)
    bundle = spec = None
    if args.weights:
        bundle = load_weights(args.weights)
        spec = network_spec(cfg)
        bt, btp, _, _ = bundle.meta_dims()
        if (bt, btp) != (cfg.T, cfg.T_P):
            raise ShapeMismatch(
                f"layer {spec.head.name}: weights trained for "
                f"(T={bt}, T_P={btp}), config has (T={cfg.T}, T_P={cfg.T_P})"
            )
    priors = planar.read_priors(args.priors) if args.priors else None
    bank = _load_bank(args.cov) if args.cov else None

    outputs = []
    for rx in frames:
        if args.estimator == "bpcm":
            pr = priors or planar.default_priors(cfg, rx.noise_var)
            pil = planar.estimate_frame(cfg, rx, pilots, pr)
        elif args.estimator == "ls":
            pil = baselines.ls_estimate_frame(cfg, rx, pilots)
        elif args.estimator in ("lmmse1d", "lmmse2x1d"):
            if bank is None:
                raise FormatError(
                    f"estimator {args.estimator} requires --cov"
                )
            pil = baselines.ls_estimate_frame(cfg, rx, pilots)
            eff = max(rx.noise_var * baselines.ls_noise_scale(cfg), 1e-12)
            fn = (baselines.lmmse_1d_freq if args.estimator == "lmmse1d"
                  else baselines.lmmse_2x1d)
            pil = np.stack([fn(pil[k], bank, eff) for k in range(cfg.K)])
        else:  # pragma: no cover - argparse restricts choices
            raise FormatError(f"unknown estimator {args.estimator}")

        if bundle is not None:
            full = np.stack(
                [forward(pil[k], bundle, spec) for k in range(cfg.K)]
            )
            outputs.append(full)
        elif args.interp:
            outputs.append(evaluate.interp_users(pil, cfg.pilot_symbols, cfg.T))
        else:
            outputs.append(pil)
    datafiles.write_estimates(outputs, args.out)
    grid = "full" if (bundle is not None or args.interp) else "pilot"
    print(f"wrote {len(outputs)} {grid}-grid estimates to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    bundle = load_weights(args.weights)
    bt, btp, _, _ = bundle.meta_dims()
    spec = network_spec(bt, btp)
    with open(args.input, "rb") as fh:
        magic = fh.read(6)
    outputs = []
    if magic == datafiles.MAGIC_DATASET:
        dims, _, records = datafiles.iter_dataset(args.input)
        if dims["T_P"] != btp or dims["T"] != bt:
            raise ShapeMismatch(
                f"layer {spec.head.name}: weights trained for "
                f"(T={bt}, T_P={btp}), dataset has "
                f"(T={dims['T']}, T_P={dims['T_P']})"
            )
        for rec in records:
            outputs.append(forward(rec.input, bundle, spec)[None])
    elif magic == datafiles.MAGIC_ESTIMATES:
        shape, tensors = datafiles.read_estimates(args.input)
        if shape[1] != btp:
            raise ShapeMismatch(
                f"layer {spec.head.name}: weights expect {btp} pilot "
                f"symbols, input carries {shape[1]}"
            )
        for t in tensors:
            outputs.append(
                np.stack([forward(t[k], bundle, spec) for k in range(shape[0])])
            )
    else:
        raise FormatError(f"unrecognised input magic {magic!r}")
    datafiles.write_estimates(outputs, args.out)
    print(f"wrote {len(outputs)} refined estimates to {args.out}")
    return 0


def _cmd_export_dataset(args) -> int:
    cfg = read_config(args.config)
    profile = _load_profile(args.profile)
    pilots = make_pilot_book(cfg)
    ds_span = _parse_span(args.ds_range, "ds-range")
    speed_span = _parse_span(args.speed_range, "speed-range")
    snr_span = _parse_span(args.snr_range, "snr-range")
    randomize = (ds_span, speed_span)
    priors, _ = _calibrate(
        cfg, profile, pilots, args.calib_frames, args.seed, randomize
    )
    rng = np.random.default_rng(evaluate.derive_seed(args.seed, 80))

    def gen():
        for i in range(args.frames):
            prof = _randomized_profile(profile, rng, ds_span, speed_span)
            snr = float(rng.uniform(*snr_span))
            chan_seed = evaluate.derive_seed(args.seed, 81, i)
            real = evaluate_channel(cfg, draw_paths(cfg, prof, chan_seed))
            rx = synthesize_rx(cfg, real, pilots, snr,
                               evaluate.derive_seed(args.seed, 82, i))
            pil = planar.estimate_frame(cfg, rx, pilots, priors)
            for k in range(cfg.K):
                yield datafiles.DatasetRecord(
                    input=pil[k].astype(np.complex64),
                    label=real.H[k].astype(np.complex64),
                    snr_db=snr,
                    profile_name=prof.name,
                    seed=chan_seed,
                    user_index=k,
                )

    n = datafiles.write_dataset(cfg, gen(), args.out,
                                count=args.frames * cfg.K)
    print(f"wrote {n} records to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = read_config(args.config)
    profile = _load_profile(args.profile)
    pilots = make_pilot_book(cfg)
    wanted = [s.strip() for s in args.estimators.split(",") if s.strip()]
    if not wanted:
        raise FormatError("no estimators requested")
    priors, bank = _calibrate(cfg, profile, pilots, args.calib_frames,
                              args.seed)
    bundle = load_weights(args.weights) if args.weights else None
    if bundle is not None:
        bt, btp, _, _ = bundle.meta_dims()
        if (bt, btp) != (cfg.T, cfg.T_P):
            raise ShapeMismatch(
                f"weights trained for (T={bt}, T_P={btp}), config has "
                f"(T={cfg.T}, T_P={cfg.T_P})"
            )
    available = evaluate.make_estimators(
        cfg, pilots, priors=priors, bank=bank, bundle=bundle
    )
    unknown = [w for w in wanted if w not in available]
    if unknown:
        raise FormatError(
            f"unknown or unavailable estimators: {', '.join(unknown)} "
            f"(available: {', '.join(sorted(available))})"
        )
    report = evaluate.run_sweep(
        cfg, profile, pilots, {w: available[w] for w in wanted},
        _parse_grid(args.snr), args.frames, args.seed,
    )
    evaluate.write_sweep_csv(report, args.out, include_timing=args.timing)
    print(f"wrote {len(report.rows)} rows to {args.out}")
    return 0


def _cmd_count_flops(args) -> int:
    cfg = read_config(args.config)
    k_range = _parse_krange(args.k_range) if args.k_range else (cfg.K, cfg.K)
    evaluate.write_flops_csv(cfg, k_range, args.out)
    print(f"wrote multiplication counts to {args.out}")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="planarce",
        description="Block-wise planar channel estimation toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate received frames")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", required=True,
                   help="profile file path or built-in name 'cdlb'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate priors and covariances")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--cov-out", default=None)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("estimate", help="estimate channels from frames")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--estimator", required=True,
                   choices=["bpcm", "ls", "lmmse1d", "lmmse2x1d"])
    p.add_argument("--weights", default=None)
    p.add_argument("--priors", default=None)
    p.add_argument("--cov", default=None)
    p.add_argument("--interp", action="store_true",
                   help="linearly interpolate pilot-grid output to all symbols")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("infer", help="apply network refinement")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="DRCNE1 pilot-grid estimates or DRCND1 dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("export-dataset", help="export training records")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-range", default="4:14")
    p.add_argument("--ds-range", default="100:300",
                   help="rms delay spread span in ns")
    p.add_argument("--speed-range", default="80:120",
                   help="speed span in km/h")
    p.add_argument("--calib-frames", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_export_dataset)

    p = sub.add_parser("sweep", help="NMSE-versus-SNR comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", default="cdlb")
    p.add_argument("--estimators", required=True,
                   help="comma list: bpcm,ls,lmmse1d,lmmse2x1d,net,genie")
    p.add_argument("--snr", required=True, help="start:step:stop inclusive")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calib-frames", type=int, default=50)
    p.add_argument("--weights", default=None)
    p.add_argument("--timing", action="store_true",
                   help="fill wall_ms (breaks byte determinism)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("count-flops", help="multiplication counts CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--k-range", default=None, help="inclusive 'a:b'")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_count_flops)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PlanarceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
