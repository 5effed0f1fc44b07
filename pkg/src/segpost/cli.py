"""Command-line front end: postprocess, fuse, evaluate, transform, make-fixtures, bench.

Exit codes: 0 success, 1 internal error, 2 bad arguments or paths, 3 malformed data.

Fusion manifest format, one member per line::

    # comment
    id        pred/scale_1
    scale:1.125 pred/scale_1.125
    rot90     /abs/path/rotated

The first member is the canonical prediction and must be ``id`` (or
``scale:1``). Relative paths resolve against the manifest's directory.

Options may also come from a ``--config`` file of ``key = value`` lines using
the long option names (``kernel-radius = 3``); command-line flags win.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import fixtures
from .fusion import Kind, PredictionStack, ScaleSchedule, TtaTransform, apply_transform, invert_transform, vote_fuse
from .maskio import MaskFormatError, list_frames, list_sequences, read_mask_file, write_mask_file
from .metrics import BoundaryParams, aggregate, evaluate_sequence, scored_frame_indices
from .morphology import Shape, StructuringElement, brute_force_dilate, dilate
from .postprocess import GapFillConfig, adjacency_pairs, gap_fill
from .raster import BinaryMask, LabelMap, split_labels

log = logging.getLogger("segpost")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    input_roots: list[Path] = field(default_factory=list)
    output_root: Path | None = None
    gt_root: Path | None = None
    manifest: Path | None = None
    report: Path | None = None
    kernel_radius: int = 2
    se_shape: Shape = Shape.SQUARE
    scales: ScaleSchedule = field(default_factory=ScaleSchedule)
    boundary: BoundaryParams = field(default_factory=BoundaryParams)
    exclude_first_frame: bool = True
    exclude_last_frame: bool = False
    aggregation: str = "hierarchical"
    transform: TtaTransform | None = None
    inverse: bool = False
    reference: Path | None = None
    seed: int = 0
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        if self.kernel_radius < 0:
            raise CliError(EXIT_USAGE, "--kernel-radius must be >= 0")
        if self.workers < 1:
            raise CliError(EXIT_USAGE, "--workers must be >= 1")

    @property
    def se(self) -> StructuringElement:
        return StructuringElement(self.se_shape, self.kernel_radius)


def parse_bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read config file {path}: {exc.strerror}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_DATA, f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


# option name -> converter from its string form
_CONVERTERS: dict[str, Callable[[str], object]] = {
    "input": lambda s: [Path(p) for p in s.split(",")],
    "output": Path,
    "gt": Path,
    "manifest": Path,
    "report": Path,
    "reference": Path,
    "kernel_radius": int,
    "se_shape": Shape,
    "scales": ScaleSchedule.parse,
    "tolerance_fraction": float,
    "min_tolerance_px": int,
    "exclude_first_frame": parse_bool,
    "exclude_last_frame": parse_bool,
    "aggregation": str,
    "transform": TtaTransform.parse,
    "inverse": parse_bool,
    "seed": int,
    "workers": int,
}

_FIELD_NAMES = {"input": "input_roots", "output": "output_root", "gt": "gt_root"}


def build_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, object] = {}
    if getattr(args, "config", None):
        for key, value in read_config_file(Path(args.config)).items():
            if key not in _CONVERTERS:
                raise CliError(EXIT_USAGE, f"{args.config}: unknown key {key!r}")
            try:
                raw[key] = _CONVERTERS[key](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise CliError(EXIT_USAGE, f"{args.config}: bad value for {key}: {exc}") from exc
    for key in _CONVERTERS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value

    boundary = BoundaryParams(
        tolerance_fraction=raw.pop("tolerance_fraction", 0.008),
        min_tolerance_px=raw.pop("min_tolerance_px", 1),
    )
    kwargs = {_FIELD_NAMES.get(k, k): v for k, v in raw.items()}
    if "input_roots" in kwargs and isinstance(kwargs["input_roots"], (str, Path)):
        kwargs["input_roots"] = [Path(kwargs["input_roots"])]
    return RunConfig(boundary=boundary, **kwargs)


def _require_dir(path: Path | None, what: str) -> Path:
    if path is None:
        raise CliError(EXIT_USAGE, f"missing {what}")
    if not path.is_dir():
        raise CliError(EXIT_USAGE, f"{what} {path} does not exist or is not a directory")
    return path


def _require_output(cfg: RunConfig) -> Path:
    if cfg.output_root is None:
        raise CliError(EXIT_USAGE, "missing --output")
    return cfg.output_root


def _run_parallel(fn, jobs: Sequence, workers: int) -> list:
    """Map ``fn`` over ``jobs`` keeping job order; results are gathered by the caller's thread."""
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _mirror_frames(seq_root: Path) -> list[str]:
    frames = list_frames(seq_root)
    if not frames:
        log.warning("%s: no frames", seq_root)
    return frames


# ---------------------------------------------------------------- postprocess


def cmd_postprocess(cfg: RunConfig) -> int:
    if len(cfg.input_roots) != 1:
        raise CliError(EXIT_USAGE, "postprocess takes exactly one --input root")
    in_root = _require_dir(cfg.input_roots[0], "input root")
    out_root = _require_output(cfg)
    gap_cfg = GapFillConfig(se=cfg.se)

    def work(job):
        seq, name = job
        src = in_root / seq / name
        m = read_mask_file(src)
        filled = gap_fill(m, gap_cfg)
        write_mask_file(filled, out_root / seq / name)
        changed = int(np.count_nonzero(m.labels != filled.labels))
        pairs = adjacency_pairs(split_labels(m), gap_cfg.se) if cfg.se.radius else set()
        return changed, set(m.object_ids()), pairs

    failures = 0
    print(f"{'sequence':<24} {'frames':>6} {'changed_px':>10} {'objects':>7} {'adjacent_pairs':>14}")
    for seq in list_sequences(in_root):
        jobs = [(seq, name) for name in _mirror_frames(in_root / seq)]
        try:
            results = _run_parallel(work, jobs, cfg.workers)
        except MaskFormatError as exc:
            print(f"{seq:<24} FAILED: {exc}", file=sys.stderr)
            failures += 1
            continue
        changed = sum(r[0] for r in results)
        objects = set().union(*(r[1] for r in results)) if results else set()
        pairs = set().union(*(r[2] for r in results)) if results else set()
        print(f"{seq:<24} {len(jobs):>6} {changed:>10} {len(objects):>7} {len(pairs):>14}")
    return EXIT_DATA if failures else EXIT_OK


# ----------------------------------------------------------------------- fuse


@dataclass
class ManifestMember:
    transform: TtaTransform
    root: Path
    line: int


def parse_manifest(path: Path) -> list[ManifestMember]:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read manifest {path}: {exc.strerror}") from exc
    members = []
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise CliError(EXIT_DATA, f"{path}:{n}: expected '<transform> <path>'")
        try:
            t = TtaTransform.parse(parts[0])
        except ValueError as exc:
            raise CliError(EXIT_DATA, f"{path}:{n}: {exc}") from exc
        root = Path(parts[1].strip())
        if not root.is_absolute():
            root = path.parent / root
        members.append(ManifestMember(t, root, n))
    if not members:
        raise CliError(EXIT_DATA, f"{path}: manifest lists no members")
    first = members[0].transform
    if not (first.kind is Kind.IDENTITY or (first.kind is Kind.RESCALE and first.scale_factor == 1)):
        raise CliError(EXIT_DATA, f"{path}:{members[0].line}: first member must be the canonical 'id' prediction")
    return members


def cmd_fuse(cfg: RunConfig) -> int:
    if cfg.manifest is None:
        raise CliError(EXIT_USAGE, "missing --manifest")
    if not cfg.manifest.is_file():
        raise CliError(EXIT_USAGE, f"manifest {cfg.manifest} does not exist")
    members = parse_manifest(cfg.manifest)
    for m in members:
        _require_dir(m.root, f"member directory (manifest line {m.line})")
    out_root = _require_output(cfg)

    canon = members[0].root
    layout = {seq: list_frames(canon / seq) for seq in list_sequences(canon)}
    problems = []
    for m in members[1:]:
        for seq, frames in layout.items():
            have = set(list_frames(m.root / seq)) if (m.root / seq).is_dir() else set()
            missing = [f for f in frames if f not in have]
            if missing:
                problems.append(f"{m.root / seq}: missing {', '.join(missing)}")
    if problems:
        raise CliError(EXIT_DATA, "member frame sets differ:\n  " + "\n  ".join(problems))

    def work(job):
        seq, name = job
        base = read_mask_file(canon / seq / name)
        size = (base.width, base.height)
        maps = []
        for m in members:
            raw = base if m is members[0] else read_mask_file(m.root / seq / name)
            try:
                maps.append((m.transform.describe(), invert_transform(raw, m.transform, size)))
            except ValueError as exc:
                raise MaskFormatError(f"{m.root / seq / name}: {exc}") from exc
        fused = vote_fuse(PredictionStack(f"{seq}/{name}", tuple(maps)))
        write_mask_file(fused, out_root / seq / name)
        return int(np.count_nonzero(fused.labels != base.labels))

    jobs = [(seq, name) for seq, frames in layout.items() for name in frames]
    try:
        changed = _run_parallel(work, jobs, cfg.workers)
    except MaskFormatError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    print(f"fused {len(jobs)} frames from {len(members)} members; "
          f"{sum(changed)} pixels differ from the canonical member")
    return EXIT_OK


# ------------------------------------------------------------------- evaluate


def cmd_evaluate(cfg: RunConfig) -> int:
    if len(cfg.input_roots) != 1:
        raise CliError(EXIT_USAGE, "evaluate takes exactly one --input (prediction) root")
    pred_root = _require_dir(cfg.input_roots[0], "prediction root")
    gt_root = _require_dir(cfg.gt_root, "ground-truth root (--gt)")

    scores = {}
    excluded = {}
    flagged = []
    for seq in list_sequences(gt_root):
        names = list_frames(gt_root / seq)
        if not names:
            continue
        gt = [read_mask_file(gt_root / seq / n) for n in names]
        if (pred_root / seq).is_dir():
            have = set(list_frames(pred_root / seq))
            missing = [n for n in names if n not in have]
            if missing:
                raise CliError(EXIT_DATA, f"{pred_root / seq}: missing frames {', '.join(missing)}")
            pred = [read_mask_file(pred_root / seq / n) for n in names]
        else:
            flagged.append({"sequence": seq, "reason": "missing prediction; scored as empty"})
            pred = [LabelMap.zeros(g.width, g.height) for g in gt]
        try:
            scores[seq] = evaluate_sequence(
                pred, gt, None, cfg.boundary, cfg.exclude_first_frame, cfg.exclude_last_frame
            )
        except ValueError as exc:
            raise CliError(EXIT_DATA, f"{seq}: {exc}") from exc
        kept = set(scored_frame_indices(len(names), cfg.exclude_first_frame, cfg.exclude_last_frame))
        excluded[seq] = [names[i] for i in range(len(names)) if i not in kept]
    for seq in list_sequences(pred_root):
        if not (gt_root / seq).is_dir():
            flagged.append({"sequence": seq, "reason": "no ground truth; ignored"})

    if not any(scores.values()):
        raise CliError(EXIT_DATA, "nothing to score (no ground-truth objects on scored frames)")
    report = aggregate(scores, cfg.aggregation, excluded)
    report.flagged = flagged
    if cfg.report is not None:
        cfg.report.parent.mkdir(parents=True, exist_ok=True)
        cfg.report.write_text(report.to_json() + "\n")
    print(report.to_table())
    for f in flagged:
        print(f"flagged: {f['sequence']}: {f['reason']}")
    return EXIT_OK


# ------------------------------------------------------------------ transform


def cmd_transform(cfg: RunConfig) -> int:
    if cfg.transform is None:
        raise CliError(EXIT_USAGE, "missing --transform")
    if len(cfg.input_roots) != 1:
        raise CliError(EXIT_USAGE, "transform takes exactly one --input root")
    in_root = _require_dir(cfg.input_roots[0], "input root")
    out_root = _require_output(cfg)
    t = cfg.transform
    if cfg.inverse and t.kind is Kind.RESCALE:
        _require_dir(cfg.reference, "reference root (--reference, needed to invert a rescale)")

    def work(job):
        seq, name = job
        m = read_mask_file(in_root / seq / name)
        if not cfg.inverse:
            out = apply_transform(m, t)
        else:
            if t.kind is Kind.RESCALE:
                ref = read_mask_file(cfg.reference / seq / name)
                size = (ref.width, ref.height)
            elif t.kind in (Kind.ROT90, Kind.ROT270):
                size = (m.height, m.width)
            else:
                size = (m.width, m.height)
            try:
                out = invert_transform(m, t, size)
            except ValueError as exc:
                raise MaskFormatError(f"{in_root / seq / name}: {exc}") from exc
        write_mask_file(out, out_root / seq / name)

    jobs = [(seq, n) for seq in list_sequences(in_root) for n in list_frames(in_root / seq)]
    try:
        _run_parallel(work, jobs, cfg.workers)
    except MaskFormatError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    print(f"{'inverted' if cfg.inverse else 'applied'} {t.describe()} on {len(jobs)} frames")
    return EXIT_OK


# -------------------------------------------------------------- make-fixtures


def cmd_make_fixtures(cfg: RunConfig) -> int:
    out_root = _require_output(cfg)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
        stats = fixtures.make_fixtures(out_root, seed=cfg.seed, schedule=cfg.scales)
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot write fixtures to {out_root}: {exc}") from exc
    print(f"wrote {stats['sequences']} sequences, {stats['frames']} frames, {stats['files']} files to {out_root}")
    return EXIT_OK


# ---------------------------------------------------------------------- bench

BENCH_RADII = (1, 2, 3, 5)
BENCH_SIZE = (1920, 1080)


def bench_mask(seed: int, width: int = BENCH_SIZE[0], height: int = BENCH_SIZE[1]) -> BinaryMask:
    """Blocky random foreground, roughly a third of the frame."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((height // 8 + 1, width // 8 + 1)) < 0.3
    fine = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:height, :width]
    return BinaryMask(fine ^ (rng.random((height, width)) < 0.02))


def bench_rows(seed: int = 0, repeats: int = 5, radii: Iterable[int] = BENCH_RADII,
               samples: int = 4, crop: int = 96) -> list[dict]:
    """Time ``dilate`` on a 1920x1080 mask after checking it against the oracle on random crops."""
    mask = bench_mask(seed)
    rng = np.random.default_rng(seed + 1)
    h, w = mask.shape
    rows = []
    for shape in (Shape.SQUARE, Shape.DISK):
        for r in radii:
            se = StructuringElement(shape, r)
            for _ in range(samples):
                y, x = int(rng.integers(0, h - crop)), int(rng.integers(0, w - crop))
                sub = BinaryMask(mask.bits[y : y + crop, x : x + crop])
                got, want = dilate(sub, se).bits, brute_force_dilate(sub, se).bits
                if not np.array_equal(got, want):
                    dy, dx = np.argwhere(got != want)[0]
                    raise CliError(EXIT_INTERNAL, f"dilate {se} disagrees with oracle at (x={x + dx}, y={y + dy})")
            dilate(mask, se)
            t0 = time.perf_counter()
            for _ in range(repeats):
                dilate(mask, se)
            fast = (time.perf_counter() - t0) / repeats
            small = BinaryMask(mask.bits[:256, :256])
            brute_force_dilate(small, se)
            t0 = time.perf_counter()
            brute_force_dilate(small, se)
            slow = time.perf_counter() - t0
            rows.append({
                "shape": shape.value,
                "radius": r,
                "se_area": len(se.offsets()),
                "mpix_per_s": w * h / fast / 1e6,
                "oracle_mpix_per_s": small.width * small.height / slow / 1e6,
            })
    return rows


def cmd_bench(cfg: RunConfig, repeats: int = 5) -> int:
    rows = bench_rows(cfg.seed, repeats)
    print(f"dilate on {BENCH_SIZE[0]}x{BENCH_SIZE[1]} (oracle checked on sampled crops)")
    print(f"{'shape':<7} {'radius':>6} {'se_area':>7} {'MP/s':>10} {'oracle MP/s':>12}")
    for row in rows:
        print(f"{row['shape']:<7} {row['radius']:>6} {row['se_area']:>7} "
              f"{row['mpix_per_s']:>10.1f} {row['oracle_mpix_per_s']:>12.2f}")
    return EXIT_OK


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--workers", type=int, help="worker threads (default: CPU count)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="segpost", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    def morph_flags(p):
        p.add_argument("--kernel-radius", type=int, help="structuring element radius (default 2)")
        p.add_argument("--se-shape", type=Shape, choices=list(Shape), help="square (default) or disk")

    p = add("postprocess", "fill background gaps between adjacent objects")
    p.add_argument("--input", type=lambda s: [Path(s)])
    p.add_argument("--output", type=Path)
    morph_flags(p)

    p = add("fuse", "plurality-vote fusion of the members listed in a manifest")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--output", type=Path)

    p = add("evaluate", "J, F and J&F of a prediction tree against ground truth")
    p.add_argument("--input", type=lambda s: [Path(s)], help="prediction root")
    p.add_argument("--gt", type=Path)
    p.add_argument("--report", type=Path, help="write the JSON report here")
    p.add_argument("--exclude-first-frame", nargs="?", const=True, type=parse_bool)
    p.add_argument("--exclude-last-frame", nargs="?", const=True, type=parse_bool)
    p.add_argument("--tolerance-fraction", type=float, help="boundary band as a fraction of the diagonal")
    p.add_argument("--min-tolerance-px", type=int)
    p.add_argument("--aggregation", choices=["hierarchical", "pooled"])

    p = add("transform", "apply (or invert) a TTA transform to a mask tree")
    p.add_argument("--input", type=lambda s: [Path(s)])
    p.add_argument("--output", type=Path)
    p.add_argument("--transform", type=TtaTransform.parse, help="id, rot90, rot180, rot270, hflip or scale:<f>")
    p.add_argument("--inverse", nargs="?", const=True, type=parse_bool)
    p.add_argument("--reference", type=Path, help="original-size tree, for inverting a rescale")

    p = add("make-fixtures", "write seeded synthetic sequences, predictions and a manifest")
    p.add_argument("--output", type=Path)
    p.add_argument("--scales", type=ScaleSchedule.parse, help="comma-separated, starting at 1")

    p = add("bench", "throughput of dilate on 1920x1080 masks")
    p.add_argument("--repeats", type=int, default=5)
    return parser


COMMANDS = {
    "postprocess": cmd_postprocess,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "transform": cmd_transform,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "bench":
            return cmd_bench(cfg, args.repeats)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except MaskFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
