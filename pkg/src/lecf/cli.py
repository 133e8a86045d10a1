"""``lecf`` command line: preprocess, train, evaluate, probe, stats, synth.

Every command writes its outputs plus the fully-resolved ``config.json``
into ``--out-dir``. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import dataio
from .dataio import SPLIT_NAMES, TEST
from .errors import DataError, LecfError, UsageError
from .evaluation import ProbeConfig, records
from .model import TrainConfig
from .synthetic import SyntheticSpec, write_synthetic
from .train import (
    check_compatible, equivariance_probe, evaluate_model, load_checkpoint, save_checkpoint, sparsity_probe, train,
)

log = logging.getLogger("lecf")

SPLITS = {v: k for k, v in SPLIT_NAMES.items()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def _resolved(args: argparse.Namespace, **extra) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    cfg.update(extra)
    return cfg


def _require(*paths: Path) -> None:
    for p in paths:
        if not p.is_file():
            raise DataError(f"{p}: no such file")


def _load_bundle(path: Path):
    _require(path)
    return dataio.load_bundle(path)


def _load_model(ckpt: Path, bundle):
    _require(ckpt)
    model, meta = load_checkpoint(ckpt)
    check_compatible(meta, bundle)
    return model, meta


def _print_counts(counts: dict) -> None:
    width = max(len(k) for k in counts)
    for k, v in counts.items():
        print(f"  {k:<{width}}  {v}")


# -- commands ----------------------------------------------------------------


def cmd_preprocess(args) -> int:
    _require(args.interactions, args.triples, args.item_map)
    b = dataio.preprocess(args.interactions, args.triples, args.item_map, threshold=args.threshold,
                          min_count=args.min_count, k=args.hops, seed=args.seed)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_bundle(b, out / "bundle.json")
    counts = b.counts()
    report = dict(counts=counts)
    if args.reference == "book-crossing":
        ref = {k: v for k, v in dataio.BOOK_CROSSING_REFERENCE.items() if k in ("users", "items", "interactions")}
        report["reference_gaps"] = dataio.compare_to_reference(counts, ref)
    _write_json(out / "stats.json", report)
    _write_json(out / "config.json", _resolved(args))
    print("dataset statistics")
    _print_counts(counts)
    for line in report.get("reference_gaps", []):
        print(f"  diverges from reference: {line}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        dim=args.dim, L1=args.l1, L2=args.l2, lr=args.lr, euclid_lr_scale=args.euclid_lr_scale,
        margin=args.margin, lam=args.lam, weight_decay=args.weight_decay, epochs=args.epochs,
        patience=args.patience, seed=args.seed, ablation=args.ablation, t=args.t, gamma_mode=args.gamma_mode,
        omega1=args.omega1 or [], omega2=args.omega2 or [], residual=args.residual, valid_k=args.valid_k,
    )


def cmd_train(args) -> int:
    config = _train_config(args)  # rejects bad flag combinations before any work
    bundle = _load_bundle(args.bundle)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", _resolved(args, train_config=config.to_dict()))
    result = train(config, bundle)
    save_checkpoint(result.model, out / "checkpoint.npz", extra=dict(best_epoch=result.best_epoch))
    metrics = []
    for split in ("valid", "test"):
        m = evaluate_model(result.model, bundle, SPLITS[split], tuple(args.ks))
        metrics += records(m, split, config.seed)
    history = [{k: v for k, v in h.items() if k != "seconds"} for h in result.history]
    _write_json(out / "metrics.json", dict(best_epoch=result.best_epoch, metrics=metrics))
    _write_json(out / "history.json", history)
    print(f"trained {len(result.history)} epoch(s), best epoch {result.best_epoch}")
    for r in metrics:
        print(f"  {r['split']:<5} {r['metric']}@{r['K']:<3} {r['value']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    bundle = _load_bundle(args.bundle)
    model, _ = _load_model(args.checkpoint, bundle)
    m = evaluate_model(model, bundle, SPLITS[args.split], tuple(args.ks))
    out = args.out_dir
    _write_json(out / "metrics.json", dict(metrics=records(m, args.split, model.config.seed)))
    _write_json(out / "config.json", _resolved(args, train_config=model.config.to_dict()))
    for k, v in m.items():
        print(f"  {k:<10} {v}")
    return 0


def cmd_probe(args) -> int:
    bundle = _load_bundle(args.bundle)
    model, _ = _load_model(args.checkpoint, bundle)
    out = args.out_dir
    if args.pe:
        config = model.config
        if args.epochs is not None:
            config = TrainConfig(**{**config.to_dict(), "epochs": args.epochs})
        rows = sparsity_probe(config, bundle, args.pe, seed=args.seed, ks=tuple(args.ks))
        report = dict(kind="sparsity", rows=rows)
        for r in rows:
            print(f"  p_e={r['p_e']:.2f} recall@{args.ks[0]}={r[f'recall@{args.ks[0]}']:.4f}")
    else:
        probe = ProbeConfig(alpha=args.alpha, beta=args.beta, mode=args.mode)
        report = dict(kind="equivariance", **equivariance_probe(model, bundle, probe, tuple(args.ks)))
        report["metrics"] = records(report["metrics_after"], "test", model.config.seed,
                                    probe=dict(alpha=args.alpha, beta=args.beta, mode=args.mode))
        print(f"  mean |score delta| = {report['mean_abs_score_delta']:.3e}")
        for k, v in report["metric_deltas"].items():
            print(f"  delta {k:<10} {v:+.4f}")
    _write_json(out / "probe.json", report)
    _write_json(out / "config.json", _resolved(args, train_config=model.config.to_dict()))
    return 0


def cmd_stats(args) -> int:
    bundle = _load_bundle(args.bundle)
    stats = dataio.degree_stats(bundle)
    report = dict(counts=bundle.counts(), degree_histograms=stats)
    _write_json(args.out_dir / "stats.json", report)
    _write_json(args.out_dir / "config.json", _resolved(args))
    _print_counts(bundle.counts())
    for name, hist in stats.items():
        print(f"  {name} degree histogram: {hist}")
    return 0


def cmd_synth(args) -> int:
    spec_fields = {f.name for f in fields(SyntheticSpec)}
    spec = SyntheticSpec(**{k: v for k, v in vars(args).items() if k in spec_fields})
    paths = write_synthetic(args.out_dir, spec)
    _write_json(args.out_dir / "config.json", _resolved(args))
    for k, p in paths.items():
        print(f"  {k}: {p}")
    return 0


# -- parser ------------------------------------------------------------------


def _train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--l1", type=int, default=d.L1, help="IAG layers on the KG")
    p.add_argument("--l2", type=int, default=d.L2, help="LECF layers on the interaction graph")
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--euclid-lr-scale", type=float, default=d.euclid_lr_scale)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--t", type=int, default=d.t, help="neighbors kept per node by sparse attention")
    p.add_argument("--gamma-mode", choices=("unit", "time"), default=d.gamma_mode)
    p.add_argument("--ablation", choices=("none", "no_sparse_attention", "no_s1", "no_s2", "break_equivariance"),
                   default=d.ablation)
    p.add_argument("--omega1", type=float, nargs="+")
    p.add_argument("--omega2", type=float, nargs="+")
    p.add_argument("--residual", action="store_true")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--valid-k", type=int, default=d.valid_k)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lecf", description="Lorentz equivariant KG collaborative filtering")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="raw files -> bundle.json")
    p.add_argument("--interactions", type=Path, required=True)
    p.add_argument("--triples", type=Path, required=True)
    p.add_argument("--item-map", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=4)
    p.add_argument("--min-count", type=int, default=10)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--reference", choices=("none", "book-crossing"), default="none")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="bundle -> checkpoint.npz + metrics.json")
    p.add_argument("--bundle", type=Path, required=True)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Recall/NDCG of a checkpoint")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=tuple(SPLITS), default=SPLIT_NAMES[TEST])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="Lorentz-transformation or edge-sparsity probe")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--mode", choices=("joint", "test_only"), default="joint")
    p.add_argument("--pe", type=float, nargs="+", help="edge drop ratios; switches to the sparsity probe")
    p.add_argument("--epochs", type=int, help="retraining epochs for the sparsity probe")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("stats", help="degree histograms of a bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write the planted-preference toy dataset")
    s = SyntheticSpec()
    for f in fields(SyntheticSpec):
        if f.name != "seed":
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(getattr(s, f.name)),
                           default=getattr(s, f.name))
    p.set_defaults(func=cmd_synth)

    for name, p in sub.choices.items():
        p.add_argument("--out-dir", type=Path, required=True)
        p.add_argument("--seed", type=int, default=0)
        if name in ("train", "evaluate", "probe"):
            p.add_argument("--ks", type=int, nargs="+", default=[10, 20])
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LecfError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
