"""Command-line front end.

    shle estimate --manifest M [--config C] --out results.csv [--plot fig.svg]
    shle eval     --results R --manifest M --out metrics.json
    shle synth    --spec S --out DIR [--seed N]
    shle sweep    --param NAME --values V [V ...] --manifest M [--config C] --out table.csv [--plot fig.svg]
    shle plot     --results R --out fig.svg

Exit status: 0 on success, 1 on invalid input, 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import SWEEPABLE, coerce_param, load_config
from .errors import (
    ConfigurationError,
    DegenerateSpecError,
    FormatError,
    ShleError,
    UsageError,
    ValidationError,
)
from .io_formats import read_manifest, read_results, write_metrics, write_results
from .metrics import height_metrics
from .pipeline import run_scene, scene_box_metrics

log = logging.getLogger("shle")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
_INVALID = (ConfigurationError, ValidationError, FormatError, UsageError, DegenerateSpecError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"{what} {path} does not exist")
    return p


def cmd_estimate(args) -> int:
    _require_file(args.manifest, "manifest")
    config = load_config(args.config)
    manifest = read_manifest(args.manifest)
    estimate = run_scene(manifest, config, threads=args.threads)
    table = estimate.to_results_table()
    write_results(args.out, table)
    for index, reason in estimate.skipped.items():
        log.info("frame %d skipped: %s", index, reason)
    if args.plot:
        from .plotting import plot_heights

        plot_heights(table, args.plot, manifest.ground_truth_height_m)
    print(f"scene_height_m={estimate.scene_height!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require_file(args.results, "results file")
    _require_file(args.manifest, "manifest")
    table = read_results(args.results)
    manifest = read_manifest(args.manifest, check_files=False)
    if manifest.ground_truth_height_m is None:
        raise ConfigurationError("manifest carries no ground_truth_height_m to evaluate against")
    height = height_metrics(table.scene_height_m, manifest.ground_truth_height_m)
    gt_boxes = manifest.gt_boxes()
    boxes = {r.frame_index: r.box for r in table.rows}
    box = scene_box_metrics(boxes, gt_boxes)
    n_box = sum(1 for i in boxes if i in gt_boxes)
    write_metrics(
        args.out, height, box,
        n_box_frames=n_box,
        scene_height_m=table.scene_height_m,
        ground_truth_height_m=manifest.ground_truth_height_m,
    )
    print(f"he={height.he!r} her={height.her!r}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import generate_scene, scene_spec_from_dict, write_scene

    spec_path = _require_file(args.spec, "scene spec")
    try:
        doc = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{spec_path}: invalid JSON: {exc.msg}", offset=exc.pos) from None
    if args.seed is not None:
        doc["seed"] = args.seed
    scene = generate_scene(scene_spec_from_dict(doc))
    print(write_scene(scene, args.out))
    return EXIT_OK


def _split_values(raw: list[str]) -> list[str]:
    out = []
    for item in raw:
        out.extend(v for v in item.split(",") if v.strip())
    return out


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise UsageError(f"unknown parameter {args.param!r}; valid names: {', '.join(SWEEPABLE)}")
    try:
        values = [coerce_param(args.param, v) for v in _split_values(args.values)]
    except ValueError as exc:
        raise UsageError(f"bad value for {args.param}: {exc}") from None
    if not values:
        raise UsageError("--values needs at least one value")
    _require_file(args.manifest, "manifest")
    base = load_config(args.config)
    manifest = read_manifest(args.manifest)
    if manifest.ground_truth_height_m is None:
        raise ConfigurationError("sweep needs ground_truth_height_m in the manifest")

    rows = []
    for value in values:
        config = base.replace(**{args.param: value})
        estimate = run_scene(manifest, config, threads=args.threads)
        metrics = height_metrics(estimate.scene_height, manifest.ground_truth_height_m)
        rows.append((value, metrics.he, metrics.her, estimate.scene_height))

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["param", "value", "he", "her", "scene_height_m"])
        for value, he, her, h in rows:
            writer.writerow([args.param, repr(value), repr(he), repr(her), repr(h)])
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(args.param, [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], args.plot)
    best = min(rows, key=lambda r: abs(r[1]))
    print(f"best {args.param}={best[0]!r} |he|={abs(best[1])!r}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_heights

    _require_file(args.results, "results file")
    plot_heights(read_results(args.results), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shle", description="Stereo height-limit estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log skipped frames and fallbacks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate per-frame and scene heights for one sequence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON file with PipelineConfig fields (defaults otherwise)")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--plot", help="also render a height-vs-frame SVG here")
    p.add_argument("--threads", type=int, help="worker threads (default: SHLE_THREADS or all cores)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="score a results file against the manifest's ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="render a synthetic scene from a JSON scene spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scene file's seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="rerun estimate+eval over values of one hyper-parameter")
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEPABLE)}")
    p.add_argument("--values", required=True, nargs="+", help="values, space or comma separated")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="sweep table CSV path")
    p.add_argument("--plot", help="also render |HE| and HER against the value as SVG")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render raw and filtered heights from a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True, help="SVG path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ShleError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
