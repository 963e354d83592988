"""Command-line entry point: train, eval, analyze, export, gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime error. Log verbosity comes
from the HYPKG_LOG_LEVEL environment variable (default INFO, on stderr).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from hypkg.errors import CheckpointError, DomainError, NumericError, ParseError

log = logging.getLogger("hypkg")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_TOL = 1e-4
MODELS = ("refe", "rote", "atte", "refh", "roth", "atth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _neg_samples(text):
    if text.lower() == "full":
        return "full"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'full', got {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return k


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="hypkg", description="Hyperbolic knowledge-graph embeddings.", formatter_class=fmt)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train a model and write a checkpoint", formatter_class=fmt)
    t.add_argument("--data", required=True, help="directory with train/valid/test .tsv files")
    t.add_argument("--model", required=True, choices=MODELS)
    t.add_argument("--dim", type=int, required=True, help="embedding dimension (even)")
    t.add_argument("--lr", type=float, required=True, help="learning rate")
    t.add_argument("--optimizer", choices=("adam", "adagrad"), default="adam")
    t.add_argument("--batch-size", type=int, default=500)
    t.add_argument("--neg-samples", type=_neg_samples, default=50, help="negatives per triple, or 'full'")
    t.add_argument("--max-epochs", type=int, default=500)
    t.add_argument("--patience", type=int, default=100, help="epochs without validation gain before stopping")
    t.add_argument("--valid-every", type=int, default=5)
    t.add_argument("--fixed-curvature", type=float, default=None, help="constant c; trainable per relation if omitted")
    t.add_argument("--init-scale", type=float, default=1e-3, help="std of the initial tangent embeddings")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", default=None, help="optional TSV of per-epoch loss and validation MRR")

    e = sub.add_parser("eval", help="filtered MRR / Hits@K of a checkpoint", formatter_class=fmt)
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--split", choices=("valid", "test"), default="test")
    e.add_argument("--per-relation", action="store_true", help="add one row per relation")
    e.add_argument("--json", default=None, help="also write the report as JSON to this path")

    a = sub.add_parser("analyze", help="per-relation curvature and hierarchy diagnostics", formatter_class=fmt)
    a.add_argument("--data", required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--samples", type=int, default=1000, help="triangles per unit component weight")
    a.add_argument("--out", default=None, help="write the TSV here instead of stdout")

    x = sub.add_parser("export", help="write tangent embeddings and curvatures as TSV", formatter_class=fmt)
    x.add_argument("--ckpt", required=True)
    x.add_argument("--out", required=True)

    g = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients", formatter_class=fmt)
    g.add_argument("--model", required=True, choices=MODELS)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=100)
    g.add_argument("--fixed-curvature", action="store_true", help="check with a constant curvature")
    g.add_argument("--step", type=float, default=1e-6)
    return p


def _train(args):
    from hypkg.data import load_dataset
    from hypkg.evaluation import evaluate
    from hypkg.persist import save
    from hypkg.train import TrainConfig, fit

    config = TrainConfig(
        model=args.model,
        dim=args.dim,
        lr=args.lr,
        optimizer=args.optimizer,
        batch_size=args.batch_size,
        neg_samples=args.neg_samples,
        max_epochs=args.max_epochs,
        patience=args.patience,
        valid_every=args.valid_every,
        seed=args.seed,
        fixed_curvature=args.fixed_curvature,
        init_scale=args.init_scale,
    )
    ds = load_dataset(args.data)
    result = fit(ds, config)
    save(args.out, result.params, ds.entities, ds.base_relations, config.to_dict(), result.opt_state)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            fh.write("epoch\tloss\tvalid_mrr\n")
            for rec in result.history:
                fh.write(f"{rec.epoch}\t{rec.loss!r}\t{'' if rec.valid_mrr is None else repr(rec.valid_mrr)}\n")
    report = evaluate(result.params, ds.valid, ds.filter_index, ds.n_base_relations)
    print(f"best epoch {result.best_epoch}  valid MRR {report.mrr:.4f}  checkpoint {args.out}")
    return EXIT_OK


def _eval(args):
    from hypkg.data import load_dataset
    from hypkg.evaluation import evaluate
    from hypkg.persist import load

    ds = load_dataset(args.data)
    ckpt = load(args.ckpt, dataset=ds)
    report = evaluate(ckpt.params, ds.split(args.split), ds.filter_index, ds.n_base_relations)
    sys.stdout.write(report.to_tsv(ds.base_relations, per_relation=args.per_relation))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json(ds.base_relations) + "\n")
    return EXIT_OK


def _analyze(args):
    from hypkg.analyze import analyze_dataset
    from hypkg.data import load_dataset

    ds = load_dataset(args.data)
    table = analyze_dataset(ds, seed=args.seed, samples_per_unit=args.samples).to_tsv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def _export(args):
    from hypkg.persist import export_embeddings, load

    ckpt = load(args.ckpt)
    emb, side = export_embeddings(args.out, ckpt.params, ckpt.entities, ckpt.relations)
    print(f"wrote {emb} and {side}")
    return EXIT_OK


def _gradcheck(args):
    from hypkg.diff import finite_difference_check, random_instance

    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    rng = np.random.default_rng(args.seed)
    errors = [
        finite_difference_check(*random_instance(args.model, args.dim, rng, args.fixed_curvature), step=args.step)
        for _ in range(args.instances)
    ]
    errors = np.asarray(errors)
    skipped = int(np.isnan(errors).sum())
    worst = float(np.nanmax(errors)) if skipped < len(errors) else float("nan")
    print(f"max relative error {worst:.3e} over {len(errors) - skipped} instances ({skipped} near a clamp)")
    return EXIT_OK if worst <= GRADCHECK_TOL else EXIT_RUNTIME


COMMANDS = {"train": _train, "eval": _eval, "analyze": _analyze, "export": _export, "gradcheck": _gradcheck}


def _configure_logging():
    level = os.environ.get("HYPKG_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv=None):
    """Parse ``argv`` and dispatch; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    _configure_logging()
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"hypkg {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, NumericError, ParseError, CheckpointError, OSError, json.JSONDecodeError) as err:
        print(f"hypkg {args.command}: error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run())
