"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import bayesopt, harness, metrics
from .imagecore import BinaryImage, ImageFormatError, load_image, save_image, to_gray
from .pipeline import BOUNDS, ParamVector, binarize

log = logging.getLogger("bayesbin")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "budget": bayesopt.DEFAULT_BUDGET,
    "beta": bayesopt.DEFAULT_BETA,
    "seed": 0,
    "workers": 1,
    "out": ".",
    "dump_stages": False,
    "invert": False,
    "candidates": bayesopt.DEFAULT_CANDIDATES,
}


class UsageError(Exception):
    pass


def parse_budget(text: str):
    try:
        n_init, n_iter = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"budget must be 'N_INIT,N_ITER', got {text!r}") from None
    if n_init < 2 or n_iter < 0:
        raise UsageError("budget needs N_INIT >= 2 and N_ITER >= 0")
    return n_init, n_iter


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Parse a ``key = value`` file. Parameter names set search bounds: ``tau1 = 0.05,0.15``."""
    cfg, bounds = {}, {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in BOUNDS:
                lo, hi = (float(v) for v in value.split(","))
                bounds[key] = (lo, hi)
            elif key == "budget":
                cfg[key] = parse_budget(value)
            elif key == "beta":
                cfg[key] = float(value)
            elif key in ("seed", "workers", "candidates"):
                cfg[key] = int(value)
            elif key == "out":
                cfg[key] = value
            elif key in ("dump_stages", "invert"):
                cfg[key] = _parse_bool(value)
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from None
    if bounds:
        cfg["bounds"] = bounds
    return cfg


def resolve(args) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    cfg = dict(DEFAULTS)
    cfg["bounds"] = {}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = parse_budget(val) if key == "budget" else val
    if cfg["beta"] < 0:
        raise UsageError("beta must be >= 0")
    if cfg["workers"] < 1:
        raise UsageError("workers must be >= 1")
    return cfg


def _add_common(p, benchmark=False):
    p.add_argument("--budget", metavar="I,N", help="initial design size and BO iterations (default 10,30)")
    p.add_argument("--beta", type=float, help="UCB exploration weight (default 2)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--invert", action="store_true", default=None, help="document has light text on dark ground")
    p.add_argument("--config", metavar="PATH", help="key = value config file")
    p.add_argument("--candidates", type=int, help="random candidates per acquisition step (default 2000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesbin", description="Document binarization tuned by Bayesian optimization.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("binarize", help="binarize one image")
    b.add_argument("image")
    b.add_argument("-o", "--output", help="output P5 path (default OUT/<stem>_bin.pgm)")
    mode = b.add_mutually_exclusive_group(required=True)
    mode.add_argument("--params", metavar="t1,ws,t2,ms,wsh,wsl", help="explicit parameter values")
    mode.add_argument("--auto", action="store_true", help="tune parameters against --truth")
    b.add_argument("--truth", help="ground-truth image for --auto")
    b.add_argument("--dump-stages", dest="dump_stages", action="store_true", default=None,
                   help="also write every intermediate stage")
    _add_common(b)

    e = sub.add_parser("evaluate", help="compare a binarized image with ground truth")
    e.add_argument("output")
    e.add_argument("truth")

    m = sub.add_parser("benchmark", help="tune and evaluate every entry of a manifest")
    m.add_argument("manifest")
    _add_common(m)

    s = sub.add_parser("synth", help="write synthetic degraded pages, truths and a manifest")
    s.add_argument("directory")
    s.add_argument("--count", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    return parser


def cmd_binarize(args, parser) -> int:
    if args.auto and not args.truth:
        parser.error("--auto requires --truth")
    cfg = resolve(args)
    image = harness.prepare(load_image(args.image), cfg["invert"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    output = Path(args.output) if args.output else out_dir / f"{stem}_bin.pgm"

    if args.auto:
        truth = BinaryImage.from_gray(load_image(args.truth))
        space = bayesopt.default_space(cfg["bounds"])
        params, trace, _ = harness.optimize_image(image, truth, cfg["budget"], cfg["beta"], cfg["seed"],
                                                  space, cfg["workers"], cfg["candidates"])
        trace_path = out_dir / f"{stem}_trace.csv"
        trace_path.write_text(trace.to_csv(space))
        print(f"best parameters: {params}")
        print(f"best F-measure: {trace.records[trace.best_index].observed:.2f}")
        print(f"trace: {trace_path}")
    else:
        try:
            params = ParamVector.parse(args.params).validate()
        except ValueError as exc:
            parser.error(f"--params: {exc}")

    final, stages = binarize(image, params)
    save_image(final, output)
    print(f"wrote {output}")
    if cfg["dump_stages"]:
        for suffix, stage in stages.items():
            path = output.with_name(f"{stem}{suffix}.pgm")
            save_image(stage if isinstance(stage, BinaryImage) else to_gray(stage), path)
            print(f"wrote {path}")
    return EXIT_OK


def format_report(rep: metrics.MetricReport) -> str:
    def cell(v, digits):
        if v is None:
            return "N/A"
        if math.isinf(v):
            return "inf"
        return f"{v:.{digits}f}"

    lines = [
        f"F-measure (%)  {cell(rep.fmeasure, 2)}",
        f"PSNR (dB)      {cell(rep.psnr, 2)}",
        f"DRD            {cell(rep.drd, 4)}" + ("  (no non-uniform blocks)" if rep.drd_warning else ""),
        f"NRM (x1e-2)    {cell(rep.nrm_scaled, 4)}",
        f"MPM (x1e-3)    {cell(rep.mpm_scaled, 4)}",
        ",".join(harness.SUMMARY_METRICS),
        ",".join("" if v is None else bayesopt.fmt(v) for v in rep.row()),
    ]
    return "\n".join(lines)


def cmd_evaluate(args, parser) -> int:
    try:
        out = BinaryImage.from_gray(load_image(args.output))
        truth = BinaryImage.from_gray(load_image(args.truth))
        rep = metrics.evaluate_pair(out, truth)
    except (ImageFormatError, ValueError) as exc:
        print(f"bayesbin evaluate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(format_report(rep))
    return EXIT_OK


def cmd_benchmark(args, parser) -> int:
    cfg = resolve(args)
    try:
        entries = harness.load_dataset(args.manifest)
    except harness.DatasetError as exc:
        print(f"bayesbin benchmark: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not entries:
        print("bayesbin benchmark: manifest has no entries", file=sys.stderr)
        return EXIT_USAGE
    outcomes = harness.run_batch(entries, cfg["budget"], cfg["beta"], cfg["seed"], cfg["workers"],
                                 cfg["bounds"] or None, cfg["invert"], cfg["candidates"])
    otsu = harness.otsu_reports(entries, cfg["invert"])
    summary = harness.write_benchmark(cfg["out"], outcomes, otsu,
                                      bayesopt.default_space(cfg["bounds"]), cfg["invert"])
    print(summary, end="")
    for entry, res in outcomes:
        if isinstance(res, harness.RunResult):
            log.info("%s: %.1fs", entry.id, res.wall_time)
    if all(not isinstance(res, harness.RunResult) for _, res in outcomes):
        return EXIT_FAIL
    return EXIT_OK


def cmd_synth(args, parser) -> int:
    from .synthetic import make_page

    root = Path(args.directory)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(args.count):
        image, truth = make_page(args.seed + i)
        name = f"page{i:02d}"
        save_image(image, root / f"{name}.pgm")
        save_image(truth, root / f"{name}_gt.pgm")
        lines.append(f"{name}\t{name}.pgm\t{name}_gt.pgm\n")
    (root / "manifest.tsv").write_text("".join(lines))
    print(f"wrote {args.count} pages and {root / 'manifest.tsv'}")
    return EXIT_OK


COMMANDS = {"binarize": cmd_binarize, "evaluate": cmd_evaluate, "benchmark": cmd_benchmark, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except UsageError as exc:
        print(f"bayesbin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"bayesbin: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
