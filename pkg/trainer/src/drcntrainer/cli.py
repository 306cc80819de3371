"""Command-line interface: ``train`` and ``eval``.

``train`` reads a DRCND1 dataset, fits the denoiser and writes a DRCNW1
weight file loadable by the estimation toolkit. ``eval`` reports NMSE of
a weight file against a dataset, next to the linear-interpolation
baseline.
"""

from __future__ import annotations

import argparse
import sys

from . import formats, model as model_mod, train as train_mod

__all__ = ["main", "build_parser"]


def _parse_pilots(arg: str | None) -> tuple[int, ...] | None:
    if arg is None:
        return None
    try:
        return tuple(int(p) for p in arg.split(","))
    except ValueError as exc:
        raise formats.FormatError(f"pilot list {arg!r}: {exc}") from exc


def _cmd_train(args) -> int:
    header, inputs, labels, _ = formats.load_dataset_arrays(args.data)
    pilots = _parse_pilots(args.pilots)
    settings = train_mod.TrainSettings(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        val_frac=args.val_frac,
        seed=args.seed,
        deterministic=not args.no_deterministic,
        pilot_symbols=pilots,
        log_path=args.log,
    )
    result = train_mod.train_model(
        inputs, labels, header.T, header.T_P, settings
    )
    tensors = model_mod.export_weights(
        result.model, N=header.N, M=header.M
    )
    formats.write_weights(tensors, args.out)
    last = result.history[-1]
    print(
        f"trained {len(result.history)} epochs on {inputs.shape[0]} records; "
        f"best val L1 {result.best_val_l1:.6e} at epoch {result.best_epoch}; "
        f"final train L1 {last.train_l1:.6e}"
    )
    print(f"wrote weights to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    header, inputs, labels, _ = formats.load_dataset_arrays(args.data)
    tensors = formats.read_weights(args.weights)
    net = model_mod.import_weights(tensors)
    if (net.T, net.T_P) != (header.T, header.T_P):
        raise formats.FormatError(
            f"weights trained for (T={net.T}, T_P={net.T_P}), dataset has "
            f"(T={header.T}, T_P={header.T_P})"
        )
    pilots = _parse_pilots(args.pilots) or model_mod.default_pilot_symbols(
        header.T, header.T_P, header.U
    )
    l1, net_db = train_mod.evaluate_model(net, inputs, labels)
    base_db = train_mod.baseline_nmse_db(inputs, labels, pilots)
    print(f"records: {inputs.shape[0]}")
    print(f"network  L1 {l1:.6e}  NMSE {net_db:.2f} dB")
    print(f"baseline linear interp NMSE {base_db:.2f} dB")
    print(f"improvement {base_db - net_db:.2f} dB")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="drcn-trainer",
        description="Train the dilated residual channel-estimate denoiser",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit weights on a dataset")
    p.add_argument("--data", required=True, help="DRCND1 dataset path")
    p.add_argument("--out", required=True, help="DRCNW1 weight output path")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pilots", default=None,
                   help="comma-separated 1-based pilot symbol positions "
                        "(default: evenly spread)")
    p.add_argument("--log", default=None, help="training-curve CSV path")
    p.add_argument("--no-deterministic", action="store_true",
                   help="allow nondeterministic kernels and threading")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score weights against a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--pilots", default=None)
    p.set_defaults(fn=_cmd_eval)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (formats.FormatError, train_mod.TrainingDiverged, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
