"""``panlut`` command-line tool.

Exit codes: 0 success, 1 usage, 2 I/O, 3 shape/domain, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bench import DEFAULT_SIZES, LARGE_SIZE, format_table, run_bench
from .errors import DomainError, FormatError, MetricError, NumericError, ShapeError
from .formats import (
    PLUT_KINDS,
    decode_plut,
    load_model,
    read_msr,
    read_pnm,
    save_model,
    write_msr,
    write_pnm,
)
from .metrics import evaluate_full, evaluate_reduced
from .pipeline import PanLutModel, default_threads, resolution_ratio, sharpen
from .raster import degrade, wald_degrade
from .stages import SD_MODES
from .synth import synth_scene
from .training import TrainConfig, format_log_line, train

log = logging.getLogger("panlut")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SHAPE, EXIT_NUMERIC = 0, 1, 2, 3, 4

DEFAULTS = {
    "n_points": 9,
    "ratio": 4,
    "lambda_s": 1e-4,
    "lambda_m": 10.0,
    "epochs": 1000,
    "lr": 5e-4,
    "sd_mode": "chained",
    "seed": 0,
    "threads": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_image(path):
    p = Path(path)
    if p.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return read_pnm(p)
    return read_msr(p)


def _threads(args) -> int:
    return default_threads() if args.threads is None else max(1, args.threads)


def cmd_train(args):
    if args.gt is None and not args.wald:
        raise UsageError("train needs --gt for every pair, or --wald to build pairs by degradation")
    if not args.pan or not args.ms or len(args.pan) != len(args.ms):
        raise UsageError("give one --ms per --pan")
    pairs = []
    if args.wald:
        for p, m in zip(args.pan, args.ms):
            pan, ms = read_image(p), read_image(m)
            # the MS sits on the PAN grid divided by r; degrade both by r, keep MS as reference
            pan_low = degrade(pan, args.ratio)
            ms_low = degrade(ms, args.ratio)
            pairs.append((pan_low, ms_low, ms))
    else:
        if len(args.gt) != len(args.pan):
            raise UsageError("give one --gt per --pan")
        for p, m, g in zip(args.pan, args.ms, args.gt):
            pairs.append((read_image(p), read_image(m), read_image(g)))
    cfg = TrainConfig(
        n_points=args.n_points,
        epochs=args.epochs,
        lr=args.lr,
        lambda_s=args.lambda_s,
        lambda_m=args.lambda_m,
        sd_mode=args.sd_mode,
    )
    log_file = open(args.log, "a") if args.log else None
    try:

        def on_epoch(rec):
            line = format_log_line(rec)
            if log_file:
                log_file.write(line + "\n")
            log.info(line)

        model, history = train(pairs, cfg, on_epoch=on_epoch)
    finally:
        if log_file:
            log_file.close()
    save_model(args.out, model)
    if history:
        print(f"trained {cfg.epochs} epochs, final loss {history[-1].loss:.6g}, psnr {history[-1].psnr:.4f} dB")
    else:
        print("0 epochs: wrote identity model")
    return EXIT_OK


def cmd_sharpen(args):
    model = load_model(args.model)
    pan, ms = read_image(args.pan), read_image(args.ms)
    r = resolution_ratio(pan, ms)
    if r != args.ratio:
        raise ShapeError(f"PAN is {r}x the MS size, expected --ratio {args.ratio}")
    out = sharpen(model, pan, ms, threads=_threads(args), strip_rows=args.strip_rows or None)
    write_msr(args.out, out, dtype=args.dtype)
    if args.preview:
        write_pnm(args.preview, out, bands=[0, 1, 2])
    return EXIT_OK


def cmd_eval(args):
    if args.mode == "reduced":
        if not (args.pred and args.gt):
            raise UsageError("reduced mode needs --pred and --gt")
        report = evaluate_reduced(read_image(args.pred), read_image(args.gt), args.ratio)
    else:
        if not (args.fused and args.ms and args.pan):
            raise UsageError("full mode needs --fused, --ms and --pan")
        report = evaluate_full(read_image(args.fused), read_image(args.ms), read_image(args.pan), args.ratio, args.block)
    text = report.to_tsv() if args.tsv else report.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_wald(args):
    hrms, pan = read_image(args.hrms), read_image(args.pan)
    ms_low, pan_low = wald_degrade(hrms, pan, args.ratio)
    write_msr(args.out_ms, ms_low, dtype=args.dtype)
    write_msr(args.out_pan, pan_low, dtype=args.dtype)
    return EXIT_OK


def cmd_synth(args):
    hrms, pan = synth_scene(args.size, args.seed)
    write_msr(args.out_hrms, hrms, dtype=args.dtype, vmax=args.vmax)
    write_msr(args.out_pan, pan, dtype=args.dtype, vmax=args.vmax)
    return EXIT_OK


def cmd_bench(args):
    model = load_model(args.model) if args.model else PanLutModel.identity(args.n_points, args.sd_mode)
    sizes = list(args.sizes or DEFAULT_SIZES)
    if args.large:
        sizes.append(LARGE_SIZE)
    table = format_table(run_bench(model, sizes, args.seed, args.repeats, _threads(args)))
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return EXIT_OK


def cmd_lut_inspect(args):
    buf = Path(args.path).read_bytes()
    if buf[:7] == b"PANLUTM":
        model = load_model(args.path)
        print(f"PANLUTM model: N={model.n_points} sd_mode={model.sd_mode} params={model.n_params}")
        tables = zip(PLUT_KINDS, model.tables())
    else:
        table, kind, _ = decode_plut(buf)
        tables = [(kind, table)]
    for kind, t in tables:
        e = t.entries
        print(
            f"{kind}\tD={t.dims}\tN={t.points}\tE={t.out_channels}\tparams={t.n_params}"
            f"\tmin={e.min():.6g}\tmax={e.max():.6g}\tmean={e.mean():.6g}"
        )
    return EXIT_OK


def cmd_lut_init(args):
    save_model(args.out, PanLutModel.identity(args.n_points, args.sd_mode))
    return EXIT_OK


def _add_model_opts(p):
    p.add_argument("--n-points", type=int, default=DEFAULTS["n_points"])
    p.add_argument("--sd-mode", choices=SD_MODES, default=DEFAULTS["sd_mode"])


def _add_common(p):
    p.add_argument("--threads", type=int, default=DEFAULTS["threads"], help="default: $PANLUT_THREADS or all cores")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--ratio", type=int, default=DEFAULTS["ratio"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panlut", description="LUT-based pan-sharpening")
    parser.add_argument("--print-config", action="store_true", help="print default configuration as JSON and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and write a PANLUTM file")
    p.add_argument("--pan", action="append", required=True)
    p.add_argument("--ms", action="append", required=True)
    p.add_argument("--gt", action="append")
    p.add_argument("--wald", action="store_true", help="build (input, reference) pairs by degrading --pan/--ms")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--epochs", type=int, default=DEFAULTS["epochs"])
    p.add_argument("--lr", type=float, default=DEFAULTS["lr"])
    p.add_argument("--lambda-s", type=float, default=DEFAULTS["lambda_s"])
    p.add_argument("--lambda-m", type=float, default=DEFAULTS["lambda_m"])
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sharpen", help="fuse PAN + MS into HRMS")
    p.add_argument("--model", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ms", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="optional 8-bit PPM of bands 0-2")
    p.add_argument("--dtype", choices=("u8", "u16", "f32"), help="default: dtype of the MS input")
    p.add_argument("--strip-rows", type=int, default=256, help="0 processes the image in one pass")
    _add_common(p)
    p.set_defaults(func=cmd_sharpen)

    p = sub.add_parser("eval", help="quality metrics")
    p.add_argument("--mode", choices=("reduced", "full"), required=True)
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--fused")
    p.add_argument("--ms")
    p.add_argument("--pan")
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--tsv", action="store_true")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("wald", help="degrade a scene by the resolution ratio")
    p.add_argument("--hrms", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--out-ms", required=True)
    p.add_argument("--out-pan", required=True)
    p.add_argument("--dtype", choices=("u8", "u16", "f32"))
    _add_common(p)
    p.set_defaults(func=cmd_wald)

    p = sub.add_parser("synth", help="write a procedural scene")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out-hrms", required=True)
    p.add_argument("--out-pan", required=True)
    p.add_argument("--dtype", choices=("u8", "u16", "f32"), default="f32")
    p.add_argument("--vmax", type=int, help="sample scale; default 1 for f32, the integer maximum otherwise")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time sharpen at several sizes")
    p.add_argument("--model")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--large", action="store_true", help=f"also run {LARGE_SIZE}x{LARGE_SIZE}")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out")
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("lut", help="table utilities")
    lut_sub = p.add_subparsers(dest="lut_command", parser_class=_Parser)
    q = lut_sub.add_parser("inspect", help="describe a PANLUTM or PLUT file")
    q.add_argument("path")
    q.set_defaults(func=cmd_lut_inspect)
    q = lut_sub.add_parser("init", help="write an identity model")
    q.add_argument("--out", required=True)
    _add_model_opts(q)
    q.set_defaults(func=cmd_lut_init)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.print_config:
            print(json.dumps({**DEFAULTS, **{k: v for k, v in asdict(TrainConfig()).items() if k not in DEFAULTS}}, sort_keys=True))
            return EXIT_OK
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        func = getattr(args, "func", None)
        if func is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return func(args)
    except UsageError as exc:
        print(f"panlut: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"panlut: bad file: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, DomainError, MetricError) as exc:
        print(f"panlut: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericError as exc:
        print(f"panlut: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"panlut: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
