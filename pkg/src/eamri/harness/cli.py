"""Command line entry point: ``eamri <command> [options]``.

Exit codes: 0 success, 1 usage or input error, 2 a check failed.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from ..config import VARIANTS, ConfigError, ReconConfig
from ..edge import edge_operator
from ..mri import KSpaceSample
from ..recon import build_variant, model_forward
from ..training import evaluate, image_metrics, split_dataset, train_loop, zero_filled_report
from .images import write_pgm16, write_ppm_heatmap
from .io import FormatError, load_checkpoint, load_dataset, save_dataset
from .phantom import PhantomSpec, build_dataset

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args, required: bool = True) -> ReconConfig:
    if args.config is None:
        if required:
            raise UsageError("--config is required for this command")
        config = ReconConfig()
    else:
        config = ReconConfig.load(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        overrides["variant"] = args.variant
    if getattr(args, "edge_op", None) is not None:
        overrides["edge_op"] = args.edge_op
    if getattr(args, "af", None) is not None:
        overrides["af"] = args.af
    return config.replace(**overrides) if overrides else config


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for this command")


def _fmt(v: float) -> str:
    return "inf" if np.isinf(v) else f"{v:.4f}"


def _table(header: list, rows: list) -> str:
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    _need(args, "out")
    config = _load_config(args, required=False)
    spec = PhantomSpec(size=config.image_size, seed=config.seed)
    t0 = time.perf_counter()
    samples = build_dataset(args.n, spec, config.n_coils, config.af, seed=config.seed,
                            center_fraction=config.center_fraction, edge_op=config.edge_op,
                            sigma=config.noise_sigma)
    meta = {"n": args.n, "size": config.image_size, "n_coils": config.n_coils,
            "af": config.af, "seed": config.seed, "edge_op": config.edge_op}
    save_dataset(args.out, samples, meta)
    print(f"wrote {len(samples)} samples to {args.out} ({time.perf_counter() - t0:.2f} s)")
    return EXIT_OK


def cmd_train(args) -> int:
    _need(args, "dataset", "out")
    config = _load_config(args)
    config.validate()
    samples, _ = load_dataset(args.dataset)
    model = state = None
    if args.checkpoint is not None:
        model, state = load_checkpoint(args.checkpoint)
        config = config.replace(variant=model.variant)
    result = train_loop(samples, config, Path(args.out), model=model, state=state)
    (Path(args.out) / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    r = result.final.report
    print(f"trained {config.variant} for {config.steps} steps: "
          f"psnr {_fmt(r.psnr)} ssim {_fmt(r.ssim)} nmse {_fmt(r.nmse)} "
          f"edge loss {result.initial.edge_loss:.4f} -> {result.final.edge_loss:.4f}")
    return EXIT_OK


def cmd_recon(args) -> int:
    _need(args, "checkpoint", "dataset", "out")
    model, _ = load_checkpoint(args.checkpoint)
    samples, _ = load_dataset(args.dataset)
    indices = range(len(samples)) if args.index is None else [args.index]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in indices:
        if not 0 <= i < len(samples):
            raise UsageError(f"--index {i} out of range for {len(samples)} samples")
        s = samples[i]
        x, edges = model_forward(s.y[None], [s.mask], model)
        pred = np.abs(x.data[0])
        gt = np.abs(s.x_gt)
        peak = float(gt.max()) or 1.0
        write_pgm16(out / f"recon_{i:03d}.pgm", pred, vmax=peak)
        write_ppm_heatmap(out / f"error_{i:03d}.ppm", np.abs(pred - gt), vmax=peak)
        for t, e in enumerate(edges):
            write_pgm16(out / f"edges_{i:03d}_c{t}.pgm", e.data[0, 0], vmax=1.0)
        r = image_metrics(pred, gt)
        rows.append([i, _fmt(r.psnr), _fmt(r.ssim), _fmt(r.nmse)])
    print(_table(["sample", "psnr", "ssim", "nmse"], rows))
    return EXIT_OK


def cmd_eval(args) -> int:
    _need(args, "checkpoint", "dataset")
    model, _ = load_checkpoint(args.checkpoint)
    samples, _ = load_dataset(args.dataset)
    if args.split == "val":
        samples = split_dataset(samples, model.config.val_fraction)[1] or samples
    ev = evaluate(model, samples)
    rows = [[f"model ({model.variant})", _fmt(ev.report.psnr), _fmt(ev.report.ssim),
             _fmt(ev.report.nmse)]]
    if all(s.coil_maps is not None for s in samples):
        zf = zero_filled_report(samples)
        rows.insert(0, ["zero-filled", _fmt(zf.psnr), _fmt(zf.ssim), _fmt(zf.nmse)])
    print(f"{len(samples)} samples")
    print(_table(["method", "psnr", "ssim", "nmse"], rows))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import MODEL_TOL, OP_TOL, run_suite

    t0 = time.perf_counter()
    report = run_suite(args.seed or 0)
    elapsed = time.perf_counter() - t0
    print(f"op checks:    {len(report.ops):4d}  max rel err {report.op_max:.2e}  (tol {OP_TOL:g})")
    print(f"model checks: {len(report.model):4d}  max rel err {report.model_max:.2e}  "
          f"(tol {MODEL_TOL:g})")
    for r in report.failures():
        print(f"FAIL {r.name}: analytic {r.analytic:.6e} numeric {r.numeric:.6e} "
              f"rel err {r.rel_err:.2e}")
    print(f"{'PASS' if report.passed else 'FAIL'} in {elapsed:.1f} s")
    return EXIT_OK if report.passed else EXIT_CHECK


def _with_edges(samples: list[KSpaceSample], op: str) -> list[KSpaceSample]:
    fn = edge_operator(op)
    return [KSpaceSample(s.y, s.mask, s.x_gt, fn(np.abs(s.x_gt)), s.coil_maps) for s in samples]


def run_ablation(samples: list[KSpaceSample], config: ReconConfig,
                 variants=VARIANTS, edge_ops=("sobel", "canny")) -> list[dict]:
    """Train each variant on Sobel targets, and FULL on every other edge target."""
    runs = [(v, "sobel") for v in variants]
    runs += [("full", op) for op in edge_ops if op != "sobel"]
    rows = []
    for variant, op in runs:
        data = samples if op == config.edge_op else _with_edges(samples, op)
        cfg = config.replace(variant=variant, edge_op=op)
        result = train_loop(data, cfg)
        r = result.final.report
        rows.append({"variant": variant, "edge_op": op,
                     "params": build_variant(variant, cfg).num_parameters(),
                     "psnr": r.psnr, "ssim": r.ssim, "nmse": r.nmse,
                     "edge_loss": result.final.edge_loss})
    return rows


def cmd_ablate(args) -> int:
    config = _load_config(args, required=False)
    if args.dataset is not None:
        samples, _ = load_dataset(args.dataset)
    else:
        samples = build_dataset(args.n, PhantomSpec(size=config.image_size, seed=config.seed),
                                config.n_coils, config.af, seed=config.seed,
                                center_fraction=config.center_fraction, edge_op="sobel",
                                sigma=config.noise_sigma)
    config = config.replace(edge_op="sobel")
    rows = run_ablation(samples, config)
    val = split_dataset(samples, config.val_fraction)[1] or samples
    zf = zero_filled_report(val)
    table = [["zero-filled", "-", "-", _fmt(zf.psnr), _fmt(zf.ssim), _fmt(zf.nmse)]]
    table += [[r["variant"].upper(), r["edge_op"], r["params"], _fmt(r["psnr"]),
               _fmt(r["ssim"]), _fmt(r["nmse"])] for r in rows]
    print(_table(["variant", "edge gt", "params", "psnr", "ssim", "nmse"], table))
    counts = {r["variant"]: r["params"] for r in rows if r["edge_op"] == "sobel"}
    ordered = counts["m1"] < counts["m2"] < counts["m3"] < counts["full"]
    print(f"parameter ordering M1 < M2 < M3 < FULL: {'holds' if ordered else 'VIOLATED'}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(
            {"seed": config.seed, "zero_filled": zf.psnr, "runs": rows}, indent=2) + "\n")
    return EXIT_OK if ordered else EXIT_CHECK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eamri", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p, *flags):
        if "config" in flags:
            p.add_argument("--config", help="JSON file with ReconConfig fields")
        if "dataset" in flags:
            p.add_argument("--dataset", help="dataset container written by 'simulate'")
        if "checkpoint" in flags:
            p.add_argument("--checkpoint", help="checkpoint container")
        if "out" in flags:
            p.add_argument("--out", help="output file or directory")
        if "seed" in flags:
            p.add_argument("--seed", type=int, help="overrides the config seed")
        if "variant" in flags:
            p.add_argument("--variant", choices=VARIANTS)
        if "edge_op" in flags:
            p.add_argument("--edge-op", dest="edge_op", choices=("sobel", "canny"))
        if "af" in flags:
            p.add_argument("--af", type=float, help="acceleration factor (4 or 6; 1 = full)")

    p = sub.add_parser("simulate", help="build a synthetic multi-coil dataset")
    common(p, "config", "out", "seed", "edge_op", "af")
    p.add_argument("--n", type=int, default=100, help="number of samples")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model from a config file")
    common(p, "config", "dataset", "checkpoint", "out", "seed", "variant")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recon", help="reconstruct samples and write images")
    common(p, "checkpoint", "dataset", "out")
    p.add_argument("--index", type=int, help="only this sample")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("eval", help="print PSNR/SSIM/NMSE for a checkpoint")
    common(p, "checkpoint", "dataset")
    p.add_argument("--split", choices=("all", "val"), default="all")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    common(p, "seed")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train FULL/M1/M2/M3 and Sobel/Canny targets, compare")
    common(p, "config", "dataset", "out", "seed", "af")
    p.add_argument("--n", type=int, default=100, help="samples to simulate without --dataset")
    p.set_defaults(func=cmd_ablate)
    return parser


def _thread_limit():
    raw = os.environ.get("EAMRI_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"EAMRI_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"EAMRI_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (UsageError, ConfigError, FormatError, OSError, ValueError) as err:
        print(f"eamri {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
