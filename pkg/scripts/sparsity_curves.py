"""Retrain on edge-dropped training graphs and report test recall per drop rate."""

import argparse
import json
from pathlib import Path

from lecf.model import TrainConfig
from lecf.synthetic import SyntheticSpec, synthetic_bundle
from lecf.train import sparsity_probe


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p-values", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4])
    ap.add_argument("--ablation", default="none")
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    bundle = synthetic_bundle(SyntheticSpec(seed=args.seed), split_seed=args.seed)
    cfg = TrainConfig(dim=16, L1=2, L2=2, epochs=args.epochs, patience=args.epochs, lr=0.1, euclid_lr_scale=0.01,
                      seed=args.seed, ablation=args.ablation)
    rows = sparsity_probe(cfg, bundle, args.p_values, seed=args.seed)
    for r in rows:
        print(f"p_e {r['p_e']:.2f}  removed {r['removed']:4d}  R@10 {r['recall@10']:.4f}  N@10 {r['ndcg@10']:.4f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
