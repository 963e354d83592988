"""Relation diagnostics and a RotH baseline on WN18RR.

Expects a directory with train/valid/test triple files (tab separated).

    python scripts/wn18rr.py --data path/to/WN18RR analyze
    python scripts/wn18rr.py --data path/to/WN18RR train --out roth32.ckpt

Training uses lr 0.0005, Adam, batch 500 and 50 negatives at d=32, and takes
hours on a CPU.
"""

import argparse
import sys

from hypkg.analyze import analyze_dataset
from hypkg.data import load_dataset
from hypkg.evaluation import evaluate
from hypkg.persist import save
from hypkg.train import TrainConfig, fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", required=True)
    ap.add_argument("action", choices=("analyze", "train"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="roth32.ckpt")
    ap.add_argument("--max-epochs", type=int, default=500)
    args = ap.parse_args()

    ds = load_dataset(args.data)
    if args.action == "analyze":
        sys.stdout.write(analyze_dataset(ds, seed=args.seed).to_tsv())
        return
    cfg = TrainConfig(model="roth", dim=32, lr=0.0005, optimizer="adam", batch_size=500, neg_samples=50,
                      max_epochs=args.max_epochs, seed=args.seed)
    res = fit(ds, cfg)
    save(args.out, res.params, ds.entities, ds.base_relations, cfg.to_dict(), res.opt_state)
    report = evaluate(res.params, ds.test, ds.filter_index, ds.n_base_relations)
    sys.stdout.write(report.to_tsv(ds.base_relations, per_relation=True))


if __name__ == "__main__":
    main()
