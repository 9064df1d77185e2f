"""Dataset manifests, per-image optimization runs and summary tables."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bayesopt, metrics
from .imagecore import BinaryImage, GrayImage, clamp_window, load_image, median_filter, save_image
from .pipeline import ParamVector, binarize, otsu_binarize

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    image_path: Path
    truth_path: Optional[Path] = None


@dataclass
class RunResult:
    entry_id: str
    best_params: ParamVector
    report: metrics.MetricReport
    trace: bayesopt.OptimizationTrace
    wall_time: float


def load_dataset(manifest) -> list:
    """Parse ``id<TAB>image[<TAB>truth]`` lines; paths are relative to the manifest.

    Blank lines and lines starting with ``#`` are ignored.
    """
    manifest = Path(manifest)
    try:
        text = manifest.read_text()
    except OSError as exc:
        raise DatasetError(f"{manifest}: cannot read manifest ({exc.strerror or exc})") from exc
    root = manifest.parent
    entries, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) == 3 and parts[2] == "":
            parts = parts[:2]
        if len(parts) not in (2, 3) or not all(p.strip() for p in parts):
            raise DatasetError(f"{manifest}:{lineno}: malformed line (expected id<TAB>image[<TAB>truth])")
        entry_id = parts[0].strip()
        if entry_id in seen:
            raise DatasetError(f"{manifest}:{lineno}: duplicate id {entry_id!r}")
        seen.add(entry_id)
        paths = [root / p.strip() for p in parts[1:]]
        for p in paths:
            if not p.is_file():
                raise DatasetError(f"{manifest}:{lineno}: missing file {p}")
        entries.append(DatasetEntry(entry_id, paths[0], paths[1] if len(paths) == 2 else None))
    return entries


def entry_seed(global_seed: int, entry_id: str) -> int:
    """Per-entry seed that does not depend on batch order."""
    digest = hashlib.sha256(f"{global_seed}:{entry_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def prepare(image: GrayImage, invert: bool = False) -> GrayImage:
    return GrayImage(255 - np.asarray(image)) if invert else image


class FMeasureObjective:
    """F-measure of the pipeline output against ``truth``.

    Median backgrounds are cached per window size since ``ws`` takes few values.
    """

    name = "fmeasure"

    def __init__(self, image: GrayImage, truth: BinaryImage):
        if image.shape != truth.shape:
            raise ValueError(f"image {image.shape} and truth {truth.shape} differ in size")
        if not truth.foreground.any():
            raise metrics.MetricError("empty ground truth")
        self.image = image
        self.truth = truth
        self._backgrounds = {}
        self._lock = threading.Lock()

    def background(self, ws: int) -> np.ndarray:
        w = clamp_window(ws, self.image.shape)
        with self._lock:
            bg = self._backgrounds.get(w)
        if bg is None:
            bg = median_filter(np.asarray(self.image), w)
            with self._lock:
                self._backgrounds.setdefault(w, bg)
        return bg

    def binarize(self, params: ParamVector) -> BinaryImage:
        return binarize(self.image, params, self.background(params.ws))[0]

    def __call__(self, params: ParamVector) -> float:
        return metrics.fmeasure(metrics.confusion(self.binarize(params), self.truth))


def optimize_image(image: GrayImage, truth: BinaryImage, budget=bayesopt.DEFAULT_BUDGET,
                   beta=bayesopt.DEFAULT_BETA, seed=0, space=None, workers=1,
                   n_candidates=bayesopt.DEFAULT_CANDIDATES):
    """Tune the six pipeline parameters for one image. Returns ``(params, trace, objective)``."""
    space = space or bayesopt.default_space()
    objective = FMeasureObjective(image, truth)
    params, trace = bayesopt.optimize(objective, space, budget, beta, seed,
                                      n_candidates=n_candidates, workers=workers)
    return params, trace, objective


def run_entry(entry: DatasetEntry, budget=bayesopt.DEFAULT_BUDGET, beta=bayesopt.DEFAULT_BETA,
              seed=0, space=None, invert=False, n_candidates=bayesopt.DEFAULT_CANDIDATES):
    """Optimize one labelled entry and re-evaluate the winner from scratch.

    ``seed`` is used as given; batch callers pass :func:`entry_seed`.
    """
    if entry.truth_path is None:
        raise DatasetError(f"entry {entry.id!r} has no ground truth to optimize against")
    start = time.perf_counter()
    image = prepare(load_image(entry.image_path), invert)
    truth = BinaryImage.from_gray(load_image(entry.truth_path))
    params, trace, _ = optimize_image(image, truth, budget, beta, seed, space, n_candidates=n_candidates)
    final, _ = binarize(image, params)
    report = metrics.evaluate_pair(final, truth)
    best_observed = trace.records[trace.best_index].observed
    if report.fmeasure != best_observed:
        raise RuntimeError(f"{entry.id}: recomputed F-measure {report.fmeasure!r} "
                           f"differs from in-loop value {best_observed!r}")
    return RunResult(entry.id, params, report, trace, time.perf_counter() - start)


def _run_entry_safe(args):
    entry, budget, beta, seed, space_overrides, invert, n_candidates = args
    try:
        space = bayesopt.default_space(space_overrides)
        return run_entry(entry, budget, beta, entry_seed(seed, entry.id), space, invert, n_candidates)
    except Exception as exc:
        log.error("%s failed: %s", entry.id, exc)
        return f"{type(exc).__name__}: {exc}"


def run_batch(entries, budget=bayesopt.DEFAULT_BUDGET, beta=bayesopt.DEFAULT_BETA, seed=0,
              workers=1, space_overrides=None, invert=False,
              n_candidates=bayesopt.DEFAULT_CANDIDATES) -> list:
    """Run every entry; returns ``(entry, RunResult | error message)`` pairs sorted by id."""
    jobs = [(e, tuple(budget), beta, seed, space_overrides, invert, n_candidates) for e in entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_entry_safe, jobs))
    else:
        outcomes = [_run_entry_safe(j) for j in jobs]
    return sorted(zip(entries, outcomes), key=lambda pair: pair[0].id)


def otsu_reports(entries, invert=False) -> list:
    out = []
    for e in sorted(entries, key=lambda e: e.id):
        if e.truth_path is None:
            continue
        image = prepare(load_image(e.image_path), invert)
        truth = BinaryImage.from_gray(load_image(e.truth_path))
        out.append((e, metrics.evaluate_pair(otsu_binarize(image), truth)))
    return out


# ---------------------------------------------------------------------------
# Aggregation and output
# ---------------------------------------------------------------------------

SUMMARY_METRICS = ("fmeasure", "psnr", "drd", "nrm_e2", "mpm_e3")


def aggregate(results) -> dict:
    """Mean and population std per metric over RunResults or MetricReports.

    Undefined (``None``) values are left out of their metric.
    """
    if not results:
        raise ValueError("aggregate needs at least one result")
    reports = [r.report if isinstance(r, RunResult) else r for r in results]
    summary = {}
    for i, name in enumerate(SUMMARY_METRICS):
        vals = [rep.row()[i] for rep in reports if rep.row()[i] is not None]
        if not vals:
            summary[name] = None
            continue
        arr = np.array(sorted(vals), dtype=np.float64)
        if np.isinf(arr).any():
            summary[name] = (math.inf, math.nan)
        else:
            summary[name] = (float(arr.mean()), float(arr.std()))
    return summary


def format_cell(stat) -> str:
    if stat is None:
        return "N/A"
    mean, std = stat
    if math.isinf(mean):
        return "inf"
    return f"{mean:.2f}±{std:.2f}"


def format_table(rows) -> str:
    """``rows`` is a list of ``(label, aggregate dict)``."""
    header = ["Method", "F-measure (%)", "PSNR", "DRD", "NRM (x1e-2)", "MPM (x1e-3)"]
    body = [[label, *(format_cell(agg[m]) for m in SUMMARY_METRICS)] for label, agg in rows]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


RESULT_COLUMNS = ("id", "status", "tau1", "ws", "tau2", "ms", "ws_h", "ws_l", *SUMMARY_METRICS)


def results_csv(outcomes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for entry, res in outcomes:
        if isinstance(res, RunResult):
            cells = [bayesopt.fmt(v) for v in res.best_params.as_tuple()]
            cells += ["" if v is None else bayesopt.fmt(v) for v in res.report.row()]
            w.writerow([entry.id, "ok", *cells])
        else:
            w.writerow([entry.id, "failed", *[""] * (len(RESULT_COLUMNS) - 2)])
    return buf.getvalue()


def report_csv(rows) -> str:
    """CSV of ``(id, MetricReport)`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id", *SUMMARY_METRICS))
    for key, rep in rows:
        w.writerow([key, *("" if v is None else bayesopt.fmt(v) for v in rep.row())])
    return buf.getvalue()


def _write_text(path: Path, text: str):
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    tmp.replace(path)


def write_benchmark(out_dir, outcomes, otsu, space=None, invert=False) -> str:
    """Write results.csv, otsu.csv, traces/, images/ and summary.txt. Returns the summary text."""
    out_dir = Path(out_dir)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    space = space or bayesopt.default_space()
    ok = []
    for entry, res in outcomes:
        if not isinstance(res, RunResult):
            continue
        ok.append(res)
        _write_text(out_dir / "traces" / f"{entry.id}.csv", res.trace.to_csv(space))
        image = prepare(load_image(entry.image_path), invert)
        save_image(binarize(image, res.best_params)[0], out_dir / "images" / f"{entry.id}.pgm")
    _write_text(out_dir / "results.csv", results_csv(outcomes))
    _write_text(out_dir / "otsu.csv", report_csv([(e.id, rep) for e, rep in otsu]))

    rows = []
    if ok:
        rows.append(("Proposed (BO-tuned)", aggregate(ok)))
    if otsu:
        rows.append(("Otsu", aggregate([rep for _, rep in otsu])))
    summary = f"entries: {len(outcomes)}  succeeded: {len(ok)}  failed: {len(outcomes) - len(ok)}\n\n"
    summary += format_table(rows) if rows else "no successful entries\n"
    failures = [(e.id, r) for e, r in outcomes if not isinstance(r, RunResult)]
    if failures:
        summary += "\nfailures:\n" + "".join(f"  {i}: {msg}\n" for i, msg in failures)
    _write_text(out_dir / "summary.txt", summary)
    return summary
