"""Command-line entry point: ``ha2f {synth,train,eval,ablate}``.

Exit codes: 0 success, 2 config/IO error, 3 numeric abort, 4 checkpoint/data
incompatibility.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config, save_config
from .data import SPLITS, load_dataset, synth_split, write_pair
from .errors import CompatibilityError, ConfigError, HA2FError
from .metrics import ConfusionCounts, accumulate, report_json, report_text, save_error_map, scores
from .trainer import (ablation_table, ablation_text, fit, load_checkpoint, model_from_checkpoint,
                      predict, run_ablation, save_checkpoint)

log = logging.getLogger("ha2f")


def _experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _output_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc.strerror or exc}") from exc
    return path


def _split(data_cfg, split):
    if data_cfg.root is not None:
        return load_dataset(data_cfg.root, split)
    return synth_split(data_cfg.synth, split, data_cfg.splits.get(split, 0))


def cmd_synth(args):
    cfg = _experiment(args)
    if cfg.data.synth is None:
        raise ConfigError(f"{args.config}: 'data.synth' section is required for synth")
    counts = dict(cfg.data.splits)
    if args.counts:
        counts = dict(zip(SPLITS, args.counts))
    out = _output_dir(args.out or Path(cfg.output_dir) / "data")
    for split in SPLITS:
        n = counts.get(split, 0)
        try:
            for pair in synth_split(cfg.data.synth, split, n):
                write_pair(pair, out, split)
        except OSError as exc:
            raise ConfigError(f"cannot write corpus under {out}: {exc.strerror or exc}") from exc
        print(f"{split}: {n} pairs -> {out / split}")
    return 0


def cmd_train(args):
    cfg = _experiment(args)
    out = _output_dir(cfg.output_dir)
    save_config(cfg, out / "config.json")
    train_set, val_set = _split(cfg.data, "train"), _split(cfg.data, "val")
    result = fit(cfg.backbone, cfg.train, train_set, val_set, log_path=out / "metrics.jsonl")
    save_checkpoint(out / "best.pt", result.best, cfg)
    print(json.dumps({"best_step": result.best.step, "val": result.best.val_scores.short()}, sort_keys=True))
    return 0


def cmd_eval(args):
    payload = load_checkpoint(args.checkpoint)
    exp = payload["config"]
    model = model_from_checkpoint(payload)
    if args.data:
        pairs = load_dataset(args.data, args.split)
    else:
        pairs = _split(exp.data, args.split)
    if not pairs:
        raise ConfigError(f"split '{args.split}' is empty")
    expected = (exp.backbone.input_size, exp.backbone.input_size)
    for p in pairs:
        if tuple(p.size) != expected:
            raise CompatibilityError(
                f"checkpoint expects {expected[0]}x{expected[1]} inputs but pair '{p.id}' is {p.size[0]}x{p.size[1]}"
            )
    masks = predict(model, pairs, threshold=exp.train.threshold)
    counts = ConfusionCounts()
    for p, m in zip(pairs, masks):
        counts = accumulate(m, p.label, counts)
    s = scores(counts)
    print(report_json(counts, s))
    log.info("\n%s", report_text(counts, s))
    if args.viz:
        viz = _output_dir(args.out or Path(args.checkpoint).parent / f"errormaps_{args.split}")
        for p, m in zip(pairs, masks):
            save_error_map(m, p.label, viz / f"{p.id}.png")
    return 0


def cmd_ablate(args):
    cfg = _experiment(args)
    out = _output_dir(cfg.output_dir)
    sets = [_split(cfg.data, s) for s in SPLITS]
    rows = run_ablation(cfg.backbone, cfg.train, *sets, max_steps=args.steps)
    (out / "ablation.json").write_text(json.dumps(ablation_table(rows), indent=2) + "\n", encoding="utf-8")
    text = ablation_text(rows)
    (out / "ablation.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ha2f", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus in A/B/label layout")
    p.add_argument("--config", required=True)
    p.add_argument("--counts", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--out", help="corpus root (default: <output_dir>/data)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and keep the best validation checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="corpus root (default: the checkpoint's data config)")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--viz", action="store_true", help="write one error-map PNG per pair")
    p.add_argument("--out", help="error-map directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run all eight module-toggle combinations")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, help="override max_steps for every row")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except HA2FError as exc:
        print(f"ha2f {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
