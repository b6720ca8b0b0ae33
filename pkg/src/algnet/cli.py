"""Command-line interface: synth-data, train, evaluate, ablate, gradcheck."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, Variant
from .ehr import (CodeVocab, RecordFormatError, build_ddi_adjacency, ddi_from_pairs, load_records,
                  save_ddi, save_records)
from .synth import SynthConfig, synth_generate

log = logging.getLogger("algnet")

# CLI flag -> TrainConfig field
CONFIG_FLAGS = {
    "seed": int, "epochs": int, "lr": float, "variant": str, "alpha": float, "beta": float,
    "gamma": float, "theta0": float, "w_ddi": float,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    for name, typ in CONFIG_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)


def resolve_config(args) -> TrainConfig:
    """Defaults, then the config file, then explicit flags."""
    config = TrainConfig.load(args.config) if getattr(args, "config", None) else TrainConfig()
    overrides = {k: getattr(args, k, None) for k in CONFIG_FLAGS}
    if overrides.get("theta0") is not None:
        overrides["theta1"] = 1.0 - overrides["theta0"]
    return config.updated(**overrides)


def _load_data(args, vocab: CodeVocab | None = None):
    vocab, records = load_records(args.data, vocab)
    if args.ddi_file:
        ddi, _ = build_ddi_adjacency(args.ddi_file, vocab)
    else:
        ddi = ddi_from_pairs([], len(vocab.med))
    return vocab, records, ddi.matrix


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> int:
    cfg = SynthConfig(patients=args.patients, n_diag=args.n_diag, n_proc=args.n_proc, n_med=args.n_med,
                      max_visits=args.max_visits, noise=args.noise, n_ddi=args.n_ddi)
    try:
        corpus = synth_generate(cfg, args.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_records(out / "records.jsonl", corpus.records, corpus.vocab)
    save_ddi(out / "ddi.txt", corpus.ddi_pairs, corpus.vocab)
    corpus.vocab.save(out / "vocab.json")
    _write_json(out / "planted.json", {
        "seed": args.seed,
        "config": cfg.to_json(),
        "planted": {corpus.vocab.diag[d]: [corpus.vocab.med[m] for m in sorted(s)]
                    for d, s in enumerate(corpus.planted)},
    })
    print(f"wrote {len(corpus.records)} patients to {out}")
    return 0


def cmd_train(args) -> int:
    from .train import Dataset, train

    config = resolve_config(args)
    vocab, records, ddi = _load_data(args)
    data = Dataset.from_records(records, vocab.sizes(), ddi, config.seed, config.split)
    model, runlog = train(config, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.algn", model, vocab)
    vocab.save(out / "vocab.json")
    _write_json(out / "runlog.json", runlog.to_json())
    (out / "epochs.csv").write_text(runlog.epochs_csv())
    if runlog.test is not None:
        _write_json(out / "metrics.json", runlog.test)
    print(f"best epoch {runlog.best_epoch}, validation jaccard {runlog.best_val_jaccard:.4f}")
    if runlog.test is not None:
        t = runlog.test
        print("test " + " ".join(f"{k}={t[k]['value']:.4f}" for k in ("jaccard", "f1", "pr_auc", "ddi_rate")))
    return 0


def cmd_evaluate(args) -> int:
    from .ehr import split_dataset
    from .train import evaluate

    model, vocab = load_checkpoint(args.checkpoint)
    vocab, records = load_records(args.data, vocab)
    if args.split != "all":
        train_, val, test = split_dataset(records, model.config.seed, model.config.split)
        records = {"train": train_, "validation": val, "test": test}[args.split]
    report = evaluate(model, records)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_ablate(args) -> int:
    from .train import ablate, ablation_csv, ablation_markdown

    config = resolve_config(args)
    variants = [Variant.parse(v) for v in args.variants.split(",")] if args.variants else list(Variant)
    seeds = [int(s) for s in args.seeds.split(",")]
    vocab, records, ddi = _load_data(args)
    rows = ablate(config, records, vocab.sizes(), ddi, variants, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    md = ablation_markdown(rows)
    (out / "ablation.md").write_text(md)
    (out / "ablation.csv").write_text(ablation_csv(rows))
    _write_json(out / "ablation.json", rows)
    print(md, end="")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    report, groups = run_gradcheck(seed=args.seed, variant=args.variant, eps=args.eps, tolerance=args.tol)
    for group, err in groups.items():
        status = "ok" if err < args.tol else "FAIL"
        print(f"{group:12s} max_rel_err={err:.3e} {status}")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="algnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a planted-rule synthetic corpus")
    p.add_argument("--patients", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-diag", type=int, default=SynthConfig.n_diag)
    p.add_argument("--n-proc", type=int, default=SynthConfig.n_proc)
    p.add_argument("--n-med", type=int, default=SynthConfig.n_med)
    p.add_argument("--max-visits", type=int, default=SynthConfig.max_visits)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--n-ddi", type=int, default=SynthConfig.n_ddi)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.add_argument("--data", required=True, help="records .jsonl")
    p.add_argument("--ddi-file", help="DDI edge list")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "validation", "test", "all"), default="test")
    p.add_argument("--out", help="write the metrics report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train a grid of variants")
    _add_config_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ddi-file")
    p.add_argument("--variants", help="comma-separated variant names (default: all)")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check on a toy instance")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--variant", default="ALGNET")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RecordFormatError, ValueError, OSError) as e:
        print(f"algnet {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
