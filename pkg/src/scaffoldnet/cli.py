"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
Machine-readable results go to stdout as ``key=value`` lines; diagnostics
and progress go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import metrics
from .config import ConfigError, _categories, build_train_config, read_config
from .data import DEFAULT_CATEGORIES, DatasetError, ImageDecodeError, load_samples, scan_dataset
from .serialize import ModelFileError, load_network, save_network
from .synthetic import generate_synthetic
from .trainer import TrainingError, evaluate, gradient_check, predict, resolve_split, train

GRADCHECK_TOLERANCE = 1e-4

RUNTIME_ERRORS = (ModelFileError, ImageDecodeError, DatasetError, TrainingError, OSError)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--categories", type=_categories, help="comma-separated, label 0 first")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--augment", dest="augment", action="store_true", default=None)
    p.add_argument("--no-augment", dest="augment", action="store_false")


def _train_config(args, dataset_root=None):
    values = read_config(args.config) if args.config else {}
    for key in ("epochs", "batch_size", "alpha", "beta1", "beta2", "seed", "categories",
                "n_train", "n_val", "n_test", "augment"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if dataset_root is not None:
        values["dataset_root"] = str(dataset_root)
    return build_train_config(values)


def cmd_generate(args) -> int:
    manifest = generate_synthetic(args.n, args.seed, args.out)
    print(f"manifest={manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args, args.dataset_root)
    if cfg.dataset_root is None:
        raise ConfigError("no dataset_root given (config key or --dataset-root)")
    net, history = train(cfg)
    save_network(net, args.model_out)
    history.write(args.history_out)
    best = history.records[history.best_epoch - 1]
    print(f"best_epoch={history.best_epoch}")
    print(f"val_loss={best.val_loss:.6f}")
    print(f"val_accuracy={best.val_accuracy:.6f}")
    print(f"model={args.model_out}")
    return 0


def _selected_samples(args):
    cfg = _train_config(args, args.data)
    if cfg.dataset_root is None:
        raise ConfigError("no dataset given (--data or dataset_root in --config)")
    if args.split == "all":
        return load_samples(scan_dataset(cfg.dataset_root, cfg.categories))
    return resolve_split(cfg).role(args.split)


def cmd_evaluate(args) -> int:
    net = load_network(args.model)
    samples = _selected_samples(args)
    res = evaluate(net, samples)
    print(f"accuracy={res.accuracy:.6f}")
    print(f"loss={res.loss:.6f}")
    print(f"auc={res.auc:.6f}" if res.auc is not None else "auc=undefined")
    tp, fp, tn, fn = res.confusion
    print(f"tp={tp}\nfp={fp}\ntn={tn}\nfn={fn}")
    print(f"n={res.n}")
    return 0


def cmd_predict(args) -> int:
    net = load_network(args.model)
    cats = args.categories or (read_config(args.config).get("categories") if args.config else None)
    p, name = predict(net, args.image, cats or DEFAULT_CATEGORIES)
    print(f"probability={p:.6f}")
    print(f"category={name}")
    return 0


def cmd_roc(args) -> int:
    net = load_network(args.model)
    res = evaluate(net, _selected_samples(args))
    if res.auc is None:
        print(f"error: the {args.split} split holds a single category; ROC is undefined", file=sys.stderr)
        return 1
    metrics.write_roc_csv(metrics.roc_curve(res.scores, res.labels), args.out)
    print(f"auc={res.auc:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    err = gradient_check(args.seed)
    print(f"max_rel_err={err:.6e}")
    return 0 if err < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaffoldnet", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic two-category dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="images per category")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and save the best-validation model")
    _add_run_options(p)
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--model-out", default="model.scfn")
    p.add_argument("--history-out", default="history.csv")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "accuracy, loss and AUC on a split"),
                                 ("roc", cmd_roc, "export the ROC curve of a split")):
        p = sub.add_parser(name, help=helptext)
        _add_run_options(p)
        p.add_argument("--model", required=True)
        p.add_argument("--data", help="dataset root (overrides dataset_root)")
        p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
        if name == "roc":
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--config")
    p.add_argument("--categories", type=_categories)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of backpropagation")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
