"""Recall and score drift as a boost of growing angle hits the embeddings.

Compares the default model (joint and test_only transforms) with the
break_equivariance variant (test_only).
"""

import argparse
import json
from pathlib import Path

from lecf.evaluation import ProbeConfig
from lecf.model import TrainConfig
from lecf.synthetic import SyntheticSpec, synthetic_bundle
from lecf.train import equivariance_probe, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5, 2.0])
    ap.add_argument("--beta", type=float, default=0.0)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    bundle = synthetic_bundle(SyntheticSpec(seed=args.seed), split_seed=args.seed)
    base = dict(dim=16, L1=2, L2=2, epochs=args.epochs, patience=args.epochs, lr=0.1, euclid_lr_scale=0.01,
                seed=args.seed)
    models = {a: train(TrainConfig(**base, ablation=a), bundle).model for a in ("none", "break_equivariance")}
    runs = [("none", "joint"), ("none", "test_only"), ("break_equivariance", "test_only")]

    rows = []
    print(f"{'variant':<20} {'mode':<10} {'alpha':>5}  {'R@10':>7}  {'mean |dy|':>10}")
    for ablation, mode in runs:
        for alpha in args.alphas:
            r = equivariance_probe(models[ablation], bundle, ProbeConfig(alpha=alpha, beta=args.beta, mode=mode))
            rows.append(dict(ablation=ablation, **r))
            print(f"{ablation:<20} {mode:<10} {alpha:5.2f}  {r['metrics_after']['recall@10']:7.4f}"
                  f"  {r['mean_abs_score_delta']:10.3e}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
