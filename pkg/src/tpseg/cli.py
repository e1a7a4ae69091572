"""Command-line interface: ``tpseg segment | eval | bench | video``."""
from __future__ import annotations

import argparse
import csv
import os
import re
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cca import segment, warmup
from .image import (
    ImageFormatError,
    ensure_parent,
    load_labels,
    load_ppm,
    render_mean_colors,
    save_labels,
    save_ppm,
)
from .measures import MEASURES, MeasureSpec
from .metrics import evaluate, read_bsds_seg
from .synth import random_image
from .video import FrameError, FrameSequence, segment_sequence, temporal_drift

SWEEP = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
BENCH_SIZES = ((128, 128), (256, 256), (512, 512), (1024, 1024), (2048, 2048))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfiguration:
    command: str
    input: str | None = None
    output: str | None = None
    truths: str | None = None
    measure: str = "euclid"
    th: list[float] = field(default_factory=list)
    th2: float | None = None
    target: tuple[float, ...] | None = None
    channels: tuple[int, ...] | None = None
    polarity: str | None = None
    render: bool = False
    seed: int = 42
    sizes: list[tuple[int, int]] = field(default_factory=list)
    reps: int = 5
    jobs: int = 1
    pattern: str | None = None
    start: int = 0
    end: int = 0
    step: int = 1

    def validate(self) -> None:
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown measure {self.measure!r}; choose from {sorted(MEASURES)}")
        if any(t < 0 for t in self.th):
            raise ConfigError("--th must be >= 0")
        if self.measure.startswith("saliency") and self.th2 is not None:
            if any(self.th2 > t for t in self.th) or self.th2 < 0:
                raise ConfigError("--th2 must satisfy 0 <= th2 <= th")
        pixels = [r * c for r, c in self.sizes]
        if any(b <= a for a, b in zip(pixels, pixels[1:])):
            raise ConfigError("--sizes must be strictly increasing")
        if self.reps < 1 or self.jobs < 1:
            raise ConfigError("--reps and --jobs must be positive")

    def spec(self, th: float | None = None) -> MeasureSpec:
        params = {
            "th": th if th is not None else (self.th[0] if self.th else None),
            "th2": self.th2,
            "target": self.target,
            "channels": self.channels,
            "polarity": self.polarity,
        }
        return MeasureSpec(self.measure, {k: v for k, v in params.items() if v is not None})


# ---------------------------------------------------------------------------
# argument parsing

def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        m = re.fullmatch(r"\s*(\d+)(?:x(\d+))?\s*", item)
        if not m:
            raise argparse.ArgumentTypeError(f"bad size {item!r}; use N or ROWSxCOLS")
        r = int(m.group(1))
        c = int(m.group(2)) if m.group(2) else r
        out.append((r, c))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def measure_flags(sp, default_measure="euclid"):
        sp.add_argument("--measure", default=default_measure, choices=sorted(MEASURES))
        sp.add_argument("--th", type=_floats, default=None, help="threshold (eval: comma list)")
        sp.add_argument("--th2", type=float, default=None, help="tight saliency threshold")
        sp.add_argument("--target", type=_floats, default=None, help="target colour R,G,B")
        sp.add_argument("--channels", type=_ints, default=None, help="channel subset, e.g. 2")
        sp.add_argument("--polarity", choices=["below", "above"], default=None)

    s = sub.add_parser("segment", help="segment one image")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True, help="label-map file to write")
    s.add_argument("--render", action="store_true", help="also write <output>.seg.ppm")
    measure_flags(s)

    e = sub.add_parser("eval", help="PRI/VoI/GCE over a directory of images")
    e.add_argument("--input", required=True, help="directory of .ppm images")
    e.add_argument("--truths", default=None, help="ground-truth directory (default: --input)")
    e.add_argument("--output", required=True, help="CSV file to write")
    e.add_argument("--jobs", type=int, default=1)
    measure_flags(e)

    b = sub.add_parser("bench", help="time segmentation against image size")
    b.add_argument("--sizes", type=_sizes, default=None, help="N or RxC list, e.g. 256,512,1024x2048")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--output", default=None, help="CSV file (default stdout)")
    measure_flags(b, "always-false")

    v = sub.add_parser("video", help="segment a numbered frame sequence")
    v.add_argument("--pattern", required=True, help="e.g. frames/in%%06d.ppm")
    v.add_argument("--start", type=int, required=True)
    v.add_argument("--end", type=int, required=True)
    v.add_argument("--step", type=int, default=1)
    v.add_argument("--output", required=True, help="output directory")
    v.add_argument("--render", action="store_true")
    v.add_argument("--jobs", type=int, default=1)
    measure_flags(v)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfiguration:
    cfg = RunConfiguration(command=ns.command)
    for name in ("input", "output", "truths", "measure", "th2", "polarity", "render",
                 "seed", "reps", "jobs", "pattern", "start", "end", "step"):
        if hasattr(ns, name) and getattr(ns, name) is not None:
            setattr(cfg, name, getattr(ns, name))
    if ns.th is not None:
        cfg.th = list(ns.th)
    if ns.target is not None:
        cfg.target = ns.target
    if ns.channels is not None:
        cfg.channels = ns.channels
    if getattr(ns, "sizes", None) is not None:
        cfg.sizes = ns.sizes
    if cfg.command == "bench" and not cfg.sizes:
        cfg.sizes = list(BENCH_SIZES)
    if cfg.command == "eval" and not cfg.th:
        cfg.th = list(SWEEP)
    if cfg.command in ("segment", "video") and len(cfg.th) > 1:
        raise ConfigError("--th takes a single value for this command")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def run_segment(cfg: RunConfiguration) -> int:
    image = load_ppm(cfg.input)
    predicate = cfg.spec().build(image)
    warmup()
    t0 = time.perf_counter()
    result = segment(image, predicate, stats=False)
    t1 = time.perf_counter()
    ensure_parent(cfg.output)
    save_labels(result.label_map, cfg.output)
    print(f"segments: {result.segment_count}")
    print(f"runs: {len(result.run_table)}")
    print(f"time_segment_ms: {(t1 - t0) * 1e3:.3f}")
    if cfg.render:
        t2 = time.perf_counter()
        rendered = render_mean_colors(image, result.label_map)
        t3 = time.perf_counter()
        render_path = _render_path(cfg.output)
        save_ppm(rendered, render_path)
        print(f"time_render_ms: {(t3 - t2) * 1e3:.3f}")
        print(f"render: {render_path}")
    return 0


def _render_path(label_path: str) -> str:
    root, ext = os.path.splitext(label_path)
    return (root if ext == ".labels" else label_path) + ".seg.ppm"


_TRUTH_RE = r"{id}(?:_\d+)?\.(?:labels|seg)"


def find_truths(truth_dir: Path, image_id: str) -> list[Path]:
    pat = re.compile(_TRUTH_RE.format(id=re.escape(image_id)))
    found = [p for p in truth_dir.iterdir() if pat.fullmatch(p.name)]
    sub = truth_dir / image_id
    if sub.is_dir():
        found += [p for p in sub.iterdir() if p.suffix in (".labels", ".seg")]
    return sorted(found)


def _load_truth(path: Path):
    return read_bsds_seg(path) if path.suffix == ".seg" else load_labels(path)


def _eval_image(image_path: Path, truth_paths, cfg: RunConfiguration):
    image = load_ppm(image_path)
    truths = [_load_truth(p) for p in truth_paths]
    rows = []
    for th in cfg.th:
        result = segment(image, cfg.spec(th).build(image), stats=False)
        rows.append((th, evaluate(result.label_map, truths)))
    return rows


def run_eval(cfg: RunConfiguration) -> int:
    image_dir = Path(cfg.input)
    truth_dir = Path(cfg.truths or cfg.input)
    if not image_dir.is_dir():
        raise FileNotFoundError(f"not a directory: {image_dir}")
    images = sorted(p for p in image_dir.iterdir() if p.suffix in (".ppm", ".pgm"))
    work = []
    for path in images:
        truths = find_truths(truth_dir, path.stem)
        if not truths:
            print(f"warning: no ground truth for {path.stem}, skipping", file=sys.stderr)
            continue
        work.append((path, truths))
    if not work:
        raise FileNotFoundError(f"no images with ground truth under {image_dir}")

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda w: _eval_image(w[0], w[1], cfg), work))
    else:
        results = [_eval_image(p, t, cfg) for p, t in work]

    ensure_parent(cfg.output)
    per_th: dict[float, list] = {th: [] for th in cfg.th}
    with open(cfg.output, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["image_id", "measure", "threshold", "PRI", "VoI", "GCE"])
        for (path, _), rows in zip(work, results):
            for th, sc in rows:
                w.writerow([path.stem, cfg.measure, f"{th:g}", _fmt(sc.pri), _fmt(sc.voi), _fmt(sc.gce)])
                per_th[th].append(sc)

    print(f"images: {len(work)}")
    print("threshold,mean_PRI,mean_VoI,mean_GCE")
    means = {}
    for th, scores in per_th.items():
        m = np.mean(np.array(scores), axis=0)
        means[th] = m
        print(f"{th:g},{_fmt(m[0])},{_fmt(m[1])},{_fmt(m[2])}")
    best_pri = max(means, key=lambda t: means[t][0])
    best_voi = min(means, key=lambda t: means[t][1])
    best_gce = min(means, key=lambda t: means[t][2])
    print(f"best PRI: {_fmt(means[best_pri][0])} at th={best_pri:g}")
    print(f"best VoI: {_fmt(means[best_voi][1])} at th={best_voi:g}")
    print(f"best GCE: {_fmt(means[best_gce][2])} at th={best_gce:g}")
    return 0


def loglog_slope(pixels, seconds) -> float:
    """Least-squares slope of log(time) against log(pixel count)."""
    x = np.log(np.asarray(pixels, dtype=np.float64))
    y = np.log(np.asarray(seconds, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def bench_sizes(sizes, reps=5, seed=42, spec: MeasureSpec | None = None):
    """Time ``segment`` per size; yields dicts (``error`` set on failure)."""
    spec = spec or MeasureSpec("always-false")
    warmup()
    for rows, cols in sizes:
        row = {"rows": rows, "cols": cols, "pixels": rows * cols}
        try:
            image = random_image(rows, cols, 3, seed)
            predicate = spec.build(image)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                result = segment(image, predicate, stats=False)
                times.append(time.perf_counter() - t0)
                del result
            result = segment(image, predicate, stats=False)
            row.update(
                runs=len(result.run_table),
                segments=result.segment_count,
                median_ms=float(np.median(times)) * 1e3,
                min_ms=min(times) * 1e3,
                image_crc32=f"{zlib.crc32(image.data.tobytes()):08x}",
                error="",
            )
            del image, predicate, result
        except MemoryError as exc:
            row.update(runs="", segments="", median_ms="", min_ms="", image_crc32="",
                       error=f"MemoryError: {exc}")
        yield row


BENCH_FIELDS = ["rows", "cols", "pixels", "runs", "segments", "median_ms", "min_ms",
                "image_crc32", "error"]


def run_bench(cfg: RunConfiguration) -> int:
    spec = cfg.spec() if cfg.measure not in ("always-false", "always-true") else MeasureSpec(cfg.measure)
    out = open(cfg.output, "w", newline="") if cfg.output else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        ok = []
        for row in bench_sizes(cfg.sizes, cfg.reps, cfg.seed, spec):
            printable = dict(row)
            for k in ("median_ms", "min_ms"):
                if printable[k] != "":
                    printable[k] = f"{printable[k]:.3f}"
            w.writerow(printable)
            out.flush()
            if not row["error"]:
                ok.append(row)
    finally:
        if out is not sys.stdout:
            out.close()
    if len(ok) >= 2:
        slope = loglog_slope([r["pixels"] for r in ok], [r["median_ms"] for r in ok])
        print(f"loglog_slope: {slope:.3f}", file=sys.stderr if not cfg.output else sys.stdout)
    return 0 if len(ok) == len(cfg.sizes) else 1


def run_video(cfg: RunConfiguration) -> int:
    frames = FrameSequence(cfg.pattern, cfg.start, cfg.end, cfg.step)
    warmup()
    results = segment_sequence(frames, cfg.spec(), render=True, jobs=cfg.jobs)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = os.path.splitext(os.path.basename(cfg.pattern))[0]
    for fr in results:
        name = stem % fr.index
        save_labels(fr.result.label_map, out_dir / f"{name}.labels")
        if cfg.render:
            save_ppm(fr.render(), out_dir / f"{name}.seg.ppm")
        t = fr.timings
        print(
            f"frame {fr.index}: segments={fr.result.segment_count} "
            f"decode_ms={t['decode'] * 1e3:.3f} segment_ms={t['segment'] * 1e3:.3f} "
            f"render_ms={t['render'] * 1e3:.3f}"
        )
    if len(results) >= 2:
        with open(out_dir / "drift.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["frame_pair", "mean_abs_diff"])
            for a, b, value in temporal_drift(results):
                w.writerow([f"{a}-{b}", _fmt(value)])
    return 0


COMMANDS = {"segment": run_segment, "eval": run_eval, "bench": run_bench, "video": run_video}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, ImageFormatError, FrameError, OSError, ValueError) as exc:
        print(f"tpseg {ns.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
