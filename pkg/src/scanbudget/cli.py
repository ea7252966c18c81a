"""Command-line interface.

Subcommands: phantom, simulate, reconstruct, evaluate, bench, sweep,
train-dict. Exit codes: 0 success, 2 configuration/input errors,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysisop, bpfa, ebi, interpolation, superres
from .acquisition import SeededRng
from .errors import CodecError, ConfigError, NumericalError
from .harness import (
    METHOD_ORDER, beam_current_sweep, config_from_dict, default_config_dict,
    dictionary_study, load_config, run_benchmark,
)
from .image import (
    Image, Rect, extract_patches, load_image, load_sparse, save_image,
    save_sparse,
)
from .metrics import METRIC_NAMES, evaluate_rois
from .phantom import PhantomSpec, generate_phantom


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(width=args.width, height=args.height,
                       droplets=args.droplets, curves=args.curves,
                       density=args.density, seed=args.seed)
    img = generate_phantom(spec)
    if args.smooth > 0:
        from .image import gaussian_smooth
        img = gaussian_smooth(img, args.smooth)
    save_image(img, args.out)
    print(f"wrote {args.out} ({img.width}x{img.height})")
    return 0


def _cmd_simulate(args) -> int:
    from .acquisition import (BeamModel, ScanBudget, downscale_by_two,
                              simulate_frame, sparse_scan)
    gt = load_image(args.gt)
    presets = {"raster": (10.0, 1.0), "lowres": (40.0, 0.25),
               "sparse": (40.0, 0.25)}
    dwell, fraction = presets[args.strategy]
    if args.dwell is not None:
        dwell = args.dwell
    if args.fraction is not None:
        fraction = args.fraction
    budget = ScanBudget(dwell, fraction, args.current)
    beam = BeamModel(sigma_ref=args.beam_sigma_ref,
                     current_ref=args.beam_current_ref,
                     exponent=args.beam_exponent)
    rng = SeededRng(args.seed)
    frame = simulate_frame(gt, budget, beam, rng)
    if args.strategy == "raster":
        save_image(frame, args.out)
        print(f"wrote {args.out}")
    elif args.strategy == "lowres":
        low = downscale_by_two(frame)
        save_image(low, args.out)
        print(f"wrote {args.out} ({low.width}x{low.height})")
    else:
        sparse = sparse_scan(frame, fraction, rng)
        base = Path(args.out)
        values = base.with_name(base.stem + "_values.pgm")
        mask = base.with_name(base.stem + "_mask.pgm")
        save_sparse(sparse, values, mask)
        print(f"wrote {values} and {mask} "
              f"({sparse.sampled_count} sampled pixels)")
    return 0


def _cmd_reconstruct(args) -> int:
    method = args.method
    if method in ("nn_interpolation", "nearest", "bilinear", "bicubic",
                  "goal_inpaint", "ebi", "bpfa"):
        if not args.values or not args.mask:
            raise ConfigError(f"{method} needs --values and --mask")
        sparse = load_sparse(args.values, args.mask)
        if method in ("nn_interpolation", "nearest", "bilinear", "bicubic"):
            name = "nn" if method == "nn_interpolation" else method
            out = interpolation.interpolate(sparse, name)
        elif method == "goal_inpaint":
            op = _operator_from_args(args, sparse=sparse)
            out = analysisop.operator_inpaint(sparse, op,
                                              analysisop.GoalParams())
        elif method == "ebi":
            if not args.dictionary:
                raise ConfigError("ebi needs --dictionary")
            d = ebi.load_dictionary(args.dictionary)
            out = ebi.ebi_inpaint(sparse, d,
                                  ebi.EbiParams(patch_size=d.patch_size))
        else:
            out = bpfa.bpfa_inpaint(sparse, bpfa.BpfaParams(),
                                    SeededRng(args.seed))
    elif method == "goal_denoise":
        if not args.input:
            raise ConfigError("goal_denoise needs --in")
        img = load_image(args.input)
        op = _operator_from_args(args)
        out = analysisop.operator_denoise(img, op, analysisop.GoalParams())
    elif method == "super_resolution":
        if not args.input:
            raise ConfigError("super_resolution needs --in")
        img = load_image(args.input)
        out = superres.btv_superresolve(img, superres.SrParams())
    elif method == "original_raster":
        if not args.input:
            raise ConfigError("original_raster needs --in")
        out = load_image(args.input)
    else:
        raise ConfigError(f"unknown method {method!r}")
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _operator_from_args(args, sparse=None):
    if args.operator:
        return analysisop.load_operator(args.operator)
    # no trained operator given: fall back to the hand-built difference
    # operator, which needs no training data
    return analysisop.difference_operator(8)


def _load_rois(path) -> list[Rect]:
    try:
        with open(path) as f:
            raw = json.load(f)
        return [Rect(int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"]))
                for r in raw]
    except FileNotFoundError:
        raise ConfigError(f"ROI file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed ROI file: {exc}") from None


def _cmd_evaluate(args) -> int:
    gt = load_image(args.gt)
    recon = load_image(args.recon)
    rois = _load_rois(args.rois)
    report = evaluate_rois(gt, recon, rois)
    lines = ["method,metric,mean,sigma,winner"]
    for metric in METRIC_NAMES:
        lines.append(f"{args.name},{metric},{report.means[metric]:.6f},"
                     f"{report.sigmas[metric]:.6f},0")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _config_from_args(args):
    if args.config:
        config = load_config(args.config)
    else:
        config = config_from_dict(default_config_dict())
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.master_seed is not None:
        config.master_seed = args.master_seed
    return config


def _cmd_bench(args) -> int:
    config = _config_from_args(args)
    report = run_benchmark(config, keep_reconstructions=not args.no_montages)
    _print_summary(report)
    print(f"reports written to {config.output_dir}")
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    report = beam_current_sweep(config,
                                keep_reconstructions=not args.no_montages)
    _print_summary(report)
    print(f"reports written to {config.output_dir}")
    return 0


def _print_summary(report) -> None:
    for e in report.entries:
        if e.report is None:
            print(f"{e.current:g} nA  {e.method:>16s}: ERROR {e.error}")
        else:
            cells = "  ".join(
                f"{m}={e.report.means[m]:.3f}±{e.report.sigmas[m]:.3f}"
                for m in METRIC_NAMES)
            print(f"{e.current:g} nA  {e.method:>16s}: {cells}")


def _cmd_train_dict(args) -> int:
    images = [load_image(p) for p in args.inputs]
    rng = SeededRng(args.seed)
    if args.format == "pdc":
        d = ebi.build_dictionary(images, args.patch, args.stride,
                                 args.max_atoms, rng)
        ebi.save_dictionary(d, args.out)
        print(f"wrote {args.out} ({len(d)} atoms, patch {d.patch_size})")
    else:
        chunks = [extract_patches(img, args.patch, args.stride).patches
                  for img in images]
        patches = np.concatenate(chunks, axis=0)
        patches -= patches.mean(axis=1, keepdims=True)
        if len(patches) > args.max_atoms:
            keep = np.sort(rng.generator.permutation(len(patches))
                           [:args.max_atoms])
            patches = patches[keep]
        from .image import PatchSet
        ps = PatchSet(args.patch,
                      np.zeros((len(patches), 2), dtype=np.int64), patches)
        k = 2 * args.patch * args.patch
        op = analysisop.learn_operator(ps, k, analysisop.GoalParams(), rng)
        analysisop.save_operator(op, args.out)
        print(f"wrote {args.out} ({op.n_filters}x{op.patch_dim} operator)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanbudget",
        description="Dwell-time budget strategies for scanning electron "
                    "microscopy: acquisition simulation, reconstruction, "
                    "and quality benchmarking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a synthetic ground-truth frame")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--droplets", type=int, default=10)
    p.add_argument("--curves", type=int, default=5)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smooth", type=float, default=0.0,
                   help="optional Gaussian sigma applied after rendering")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="simulate one acquisition strategy")
    p.add_argument("--gt", required=True)
    p.add_argument("--strategy", choices=("raster", "lowres", "sparse"),
                   required=True)
    p.add_argument("--current", type=float, default=0.1)
    p.add_argument("--dwell", type=float, default=None,
                   help="dwell per sampled pixel in us (preset default)")
    p.add_argument("--fraction", type=float, default=None,
                   help="sampled pixel fraction (preset default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam-sigma-ref", type=float, default=0.4)
    p.add_argument("--beam-current-ref", type=float, default=0.1)
    p.add_argument("--beam-exponent", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct one acquisition")
    p.add_argument("--method", required=True,
                   choices=METHOD_ORDER + ("nearest", "bilinear", "bicubic"))
    p.add_argument("--in", dest="input", help="input frame PGM")
    p.add_argument("--values", help="sparse values PGM")
    p.add_argument("--mask", help="sparse mask PGM")
    p.add_argument("--dictionary", help="PDC dictionary (ebi)")
    p.add_argument("--operator", help="AOP operator (goal methods)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score a reconstruction over ROIs")
    p.add_argument("--gt", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--rois", required=True, help="JSON list of rects")
    p.add_argument("--name", default="recon")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=_cmd_evaluate)

    for name, fn, help_text in (
            ("bench", _cmd_bench, "run the full equal-budget benchmark"),
            ("sweep", _cmd_sweep, "run the beam-current sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config (built-in default if "
                                        "omitted)")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--master-seed", type=int, default=None)
        p.add_argument("--no-montages", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("train-dict", help="build a patch dictionary or "
                                          "analysis operator from images")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--max-atoms", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("pdc", "aop"), default="pdc")
    p.set_defaults(func=_cmd_train_dict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
