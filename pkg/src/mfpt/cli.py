"""``mfpt`` command line: synth, train, eval, robustness, triage, stats.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import torch

from . import synth
from .config import load_config
from .data import area_histogram, load_manifest
from .degrade import DegradationSpec
from .errors import ConfigError, ManifestError, NumericError
from .evaluation import evaluate_model, robustness_csv, robustness_sweep
from .model import MFPT, load_checkpoint, save_checkpoint
from .training import select_best_checkpoint, train, write_trace
from .triage import run_triage

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("mfpt")


class UsageError(Exception):
    pass


def _require_file(path, what):
    if path is None:
        raise UsageError(f"no {what} given")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _parse_size(text):
    parts = text.lower().replace(",", "x").split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"size must be WxH, got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_levels(text):
    levels = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            levels.append(int(tok))
        except ValueError:
            raise UsageError(f"invalid level {tok!r}") from None
    return levels


def _emit(text, out):
    sys.stdout.write(text)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def cmd_synth(args):
    out = Path(args.out or "synth")
    manifest = synth.generate(out, args.n, size=args.size, seed=args.seed, area=args.area,
                              split_cycle=tuple(args.splits.split(",")))
    print(json.dumps({"manifest": str(out / synth.MANIFEST_NAME), "samples": len(manifest)}))


def cmd_train(args):
    cfg = load_config(args.config, args.set)
    manifest_path = _require_file(args.manifest or cfg.paths.get("manifest"), "manifest")
    out = Path(args.out or cfg.paths.get("out") or "run")
    if args.iterations is not None:
        cfg.train.max_iterations = args.iterations
    cfg.train.seed = args.seed
    cfg.model.init_seed = args.seed
    cfg.train.validate()
    manifest = load_manifest(manifest_path)

    torch.manual_seed(args.seed)
    model = MFPT(cfg.model)
    result = train(model, manifest, cfg.train, workers=args.workers)
    out.mkdir(parents=True, exist_ok=True)
    best_it = select_best_checkpoint(result.val_trace) if result.val_trace else 0
    save_checkpoint(out / "best.npz", model, result.best_state)
    save_checkpoint(out / "last.npz", model)
    write_trace(out / "trace.csv", result)
    print(json.dumps({"best_iteration": best_it, "checkpoint": str(out / "best.npz"),
                      "trace": str(out / "trace.csv")}))


def cmd_eval(args):
    ckpt = _require_file(args.checkpoint, "checkpoint")
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    model = load_checkpoint(ckpt)
    _check_sizes(model, manifest)
    report = evaluate_model(model, manifest, args.subset, args.threshold, args.workers)
    _emit(report.to_json() + "\n", args.out)


def _check_sizes(model, manifest):
    W, H = model.config.input_size
    odd = [s.id for s in manifest if (s.width, s.height) != (W, H)]
    if odd:
        log.warning("%d sample(s) differ from the model input size %dx%d and will be resized",
                    len(odd), W, H)


def cmd_robustness(args):
    ckpt = _require_file(args.checkpoint, "checkpoint")
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    try:
        spec = DegradationSpec(args.kind, tuple(_parse_levels(args.levels)))
    except ValueError as e:
        raise UsageError(str(e)) from None
    model = load_checkpoint(ckpt)
    rows = robustness_sweep(model, manifest, spec, args.subset, args.threshold, args.workers)
    _emit(robustness_csv(rows), args.out)


def cmd_triage(args):
    cfg = load_config(args.config, args.set)
    manifest = load_manifest(_require_file(args.manifest or cfg.paths.get("manifest"), "manifest"))
    probmaps = _require_file(args.probmaps or cfg.paths.get("probmaps"), "probability map directory")
    out = Path(args.out or cfg.paths.get("out") or "triage")
    result = run_triage(probmaps, manifest, cfg.triage, out_dir=out)
    counts = Counter(d.decision for d in result.decisions)
    print(json.dumps({"accept": counts["accept"], "review": counts["review"],
                      "discard": counts["discard"], "out": str(out)}))


def cmd_stats(args):
    manifest = load_manifest(_require_file(args.manifest, "manifest"),
                             verify_files=not args.metadata_only)
    stats = {
        "n": len(manifest),
        "splits": dict(sorted(Counter(s.split for s in manifest).items())),
        "roles": dict(sorted(Counter(s.role for s in manifest).items())),
        "subsets": dict(sorted(Counter(manifest.subset_tags.values()).items())),
    }
    if not args.metadata_only:
        stats["histogram"] = [{"lo": lo, "hi": hi, "count": c}
                              for (lo, hi), c in area_histogram(manifest, args.bins)]
    _emit(json.dumps(stats, indent=2) + "\n", args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="mfpt", description=__doc__.splitlines()[0].replace("``", ""))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *flags):
        if "config" in flags:
            sp.add_argument("--config")
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if "manifest" in flags:
            sp.add_argument("--manifest")
        if "checkpoint" in flags:
            sp.add_argument("--checkpoint")
        if "eval" in flags:
            sp.add_argument("--subset", default="all")
            sp.add_argument("--threshold", type=float, default=0.5)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("synth", help="generate a procedural desk-scale dataset")
    common(sp)
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--size", type=_parse_size, default=(64, 64))
    sp.add_argument("--area", type=float, nargs="+", default=[0.05, 0.3])
    sp.add_argument("--splits", default=",".join(synth.DEFAULT_SPLIT_CYCLE))
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train MFPT and keep the best validation checkpoint")
    common(sp, "config", "manifest")
    sp.add_argument("--iterations", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a subset")
    common(sp, "manifest", "checkpoint", "eval")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("robustness", help="JPEG / Gaussian blur degradation sweep")
    common(sp, "manifest", "checkpoint", "eval")
    sp.add_argument("--kind", choices=("jpeg", "gaussian_blur"), required=True)
    sp.add_argument("--levels", required=True)
    sp.set_defaults(func=cmd_robustness)

    sp = sub.add_parser("triage", help="accept/review/discard probability maps")
    common(sp, "config", "manifest")
    sp.add_argument("--probmaps")
    sp.set_defaults(func=cmd_triage)

    sp = sub.add_parser("stats", help="split/role counts and edited-area histogram")
    common(sp, "manifest")
    sp.add_argument("--bins", type=int, default=10)
    sp.add_argument("--metadata-only", action="store_true",
                    help="skip file checks and the histogram")
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "area"):
        if len(args.area) == 1:
            args.area = args.area[0]
        elif len(args.area) == 2:
            args.area = tuple(args.area)
        else:
            parser.error("--area takes one value or a low/high pair")
    try:
        args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"mfpt {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"mfpt {args.command}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ManifestError, OSError, KeyError, ValueError) as e:
        print(f"mfpt {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
