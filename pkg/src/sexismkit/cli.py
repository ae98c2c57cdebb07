"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .augment import AugmentPlan, apply_augmentation, score_pool, tfidf_embeddings
from .corpus import (
    TASKS,
    LabelHierarchy,
    balance_binary,
    class_stats,
    imbalance_weight,
    load_csv,
    merge,
    stratified_split,
)
from .ensemble import EnsembleSpec, predict_ensemble_many, search_subsets
from .errors import ConfigError, ConfigInvalid, DataError, SexismKitError
from .features import fit_tfidf, load_embeddings
from .metrics import confusion, report
from .models import LossSpec, load_model, train_linear, train_nb
from .pipeline import ExperimentConfig, render_search_table, run, run_dir, write_search_table
from .textnorm import NormConfig, normalize, substitute_lexical

log = logging.getLogger("sexismkit")


def _hierarchy(path) -> LabelHierarchy:
    return LabelHierarchy.from_json(path) if path else LabelHierarchy.canonical()


def _columns(args) -> dict | None:
    if not getattr(args, "columns", None):
        return None
    try:
        cols = json.loads(args.columns)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("--columns", f"invalid JSON: {exc}") from exc
    if not isinstance(cols, dict):
        raise ConfigInvalid("--columns", "expected a JSON object")
    return cols


def _load(path, args, hierarchy=None):
    return load_csv(path, _columns(args), hierarchy or _hierarchy(getattr(args, "hierarchy", None)),
                    source=getattr(args, "source", None) or Path(path).stem)


def _read_json(path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(path), f"invalid {what} JSON: {exc}") from exc


# normalize
def cmd_normalize(args) -> None:
    cfg = NormConfig.from_dict(_read_json(args.config, "normalization")) if args.config else NormConfig()
    with open(args.input, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    if args.column not in header:
        raise DataError(f"{args.input}: header lacks column {args.column!r}")
    out_col = args.output_column or args.column
    if out_col not in header:
        header.append(out_col)
    for rowno, row in enumerate(rows, start=1):
        text = normalize(row[args.column] or "", cfg)
        if args.substitute:
            salt = row.get(args.id_column) or str(rowno)
            text = substitute_lexical(text, cfg, salt=salt)
        row[out_col] = text
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# dataset
def cmd_dataset_merge(args) -> None:
    h = _hierarchy(args.hierarchy)
    parts = [_load(p, args, h) for p in args.inputs]
    merge(parts, args.name or Path(args.output).stem).to_csv(args.output)


def cmd_dataset_balance(args) -> None:
    ds = _load(args.input, args)
    balance_binary(ds, args.task, args.protected_source, args.seed).to_csv(args.output)


def cmd_dataset_split(args) -> None:
    ds = _load(args.input, args)
    train, hold = stratified_split(ds, args.task, args.holdout, args.seed)
    train.to_csv(args.train_output)
    hold.to_csv(args.holdout_output)


def cmd_dataset_stats(args) -> None:
    ds = _load(args.input, args)
    tasks = [args.task] if args.task else [t for t in TASKS if any(ds.labels(t))]
    out = {"rows": len(ds), "tasks": {t: class_stats(ds, t).to_dict() for t in tasks}}
    print(json.dumps(out, indent=2))


# augment
def cmd_augment(args) -> None:
    h = _hierarchy(args.hierarchy)
    base = _load(args.base, args, h)
    pool = load_csv(args.pool, None, _hierarchy(args.pool_hierarchy), source=Path(args.pool).stem)
    plan = AugmentPlan.for_class(base, args.task, args.target, pool, threshold=args.threshold,
                                 source_class_filter=args.source_class_filter, filter_task=args.filter_task,
                                 max_selected=args.max_selected)
    if args.embeddings:
        table = load_embeddings(args.embeddings)
    else:
        table = tfidf_embeddings(plan, base, args.min_df, normalized=not args.raw_text)
    selection = score_pool(plan, table)
    apply_augmentation(base, plan, table, Path(args.output).stem, selection).to_csv(args.output)
    report_path = args.report or str(Path(args.output).with_suffix(".selection.csv"))
    selection.write_report(report_path)
    print(f"selected {len(selection.selected)} of {len(pool)} pool documents; report: {report_path}")


# train / evaluate / predict
def _loss(args, train, task) -> LossSpec:
    if args.loss == "weighted-bce":
        w = imbalance_weight(train, task) if args.w == "auto" else float(args.w)
        return LossSpec.weighted_bce(w)
    if args.loss == "focal":
        return LossSpec.focal(args.gamma, args.alpha)
    return LossSpec.cross_entropy()


def cmd_train(args) -> None:
    h = _hierarchy(args.hierarchy)
    train = _load(args.train, args, h)
    classes = h.children(args.classes_of) if args.classes_of else None
    if classes is None:
        train = train.labeled(args.task)
    featurizer = fit_tfidf(train.texts, min_df=args.min_df, lowercase=not args.keep_case)
    if args.family == "naive-bayes":
        model = train_nb(train, featurizer, args.task, args.smoothing, classes=classes)
    else:
        model = train_linear(train, featurizer, args.task, _loss(args, train, args.task), epochs=args.epochs,
                             batch=args.batch, lr=args.lr, seed=args.seed, weight_decay=args.weight_decay,
                             classes=classes)
    model.save(args.output)
    print(f"{args.output}: {model.fingerprint}")


def _ensemble_models(paths, strategy):
    registry = {}
    for p in paths:
        key = Path(p).stem
        if key in registry:
            raise ConfigError(f"two model files share the id {key!r}")
        registry[key] = load_model(p)
    return registry, EnsembleSpec(tuple(registry), strategy)


def cmd_evaluate(args) -> None:
    registry, spec = _ensemble_models(args.model, args.strategy)
    task = args.task or next(iter(registry.values())).task
    ds = _load(args.data, args).labeled(task)
    preds, _ = predict_ensemble_many(spec, registry, ds.texts)
    classes = next(iter(registry.values())).classes
    cm = confusion(ds.labels(task), preds, classes)
    rep = report(cm)
    print(rep.render())
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(rep.to_json() + "\n")
        (out / "report.txt").write_text(rep.render() + "\n")
        cm.to_csv(out / "confusion.csv")


def cmd_ensemble_search(args) -> None:
    registry = {}
    for p in args.model:
        registry[Path(p).stem] = load_model(p)
    task = args.task or next(iter(registry.values())).task
    val = _load(args.validation, args).labeled(task)
    best = search_subsets(list(registry), args.strategy, val, registry, task)
    table = render_search_table(best)
    print(table)
    if args.output:
        write_search_table(best, args.output)
        Path(args.output).with_suffix(".txt").write_text(table + "\n")


def cmd_predict(args) -> None:
    registry, spec = _ensemble_models(args.model, args.strategy)
    if args.text is not None:
        ids, texts = ["0"], [args.text]
    else:
        ds = load_csv(args.input, {"id": args.id_column, "text": args.text_column})
        ids, texts = ds.ids, ds.texts
    labels, probs = predict_ensemble_many(spec, registry, texts)
    classes = next(iter(registry.values())).classes
    stream = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["id", "label", *[f"p:{c}" for c in classes]])
        for i, lab, p in zip(ids, labels, probs):
            writer.writerow([i, lab, *[repr(float(x)) for x in p]])
    finally:
        if args.output:
            stream.close()


# run
def cmd_run(args) -> None:
    if not Path(args.config).is_file():
        raise ConfigInvalid(args.config, "config file not found")
    cfg = ExperimentConfig.load(args.config, args.seed)
    manifest = run(cfg, output_root=args.output_root)
    out = run_dir(cfg, args.output_root)
    print(f"{out / 'manifest.json'}")
    for key, value in manifest["scores"].items():
        if isinstance(value, dict):
            for task in TASKS:
                if task in value:
                    print(f"  {key} [{task}] macro-F1 {value[task]['macro_f1']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sexismkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--seed", type=int, default=None, help="override the config / default seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_opts(p):
        p.add_argument("--hierarchy", help="label hierarchy JSON (default: the built-in 4/11 taxonomy)")
        p.add_argument("--columns", help='JSON column map, e.g. {"id": "id", "text": "tweet", "A": "label"}')
        p.add_argument("--source", help="source tag when the CSV has no source column")

    p = sub.add_parser("normalize", help="normalize a text column of a CSV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", help="normalization config JSON")
    p.add_argument("--column", default="text")
    p.add_argument("--output-column", help="write to this column instead of overwriting")
    p.add_argument("--substitute", action="store_true", help="also apply lexical substitutions")
    p.add_argument("--id-column", default="id")
    p.set_defaults(fn=cmd_normalize)

    ds = sub.add_parser("dataset", help="merge, balance, split or summarize datasets")
    dsub = ds.add_subparsers(dest="action", required=True)
    p = dsub.add_parser("merge")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--name")
    data_opts(p)
    p.set_defaults(fn=cmd_dataset_merge)
    p = dsub.add_parser("balance")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--task", default="A")
    p.add_argument("--protected-source")
    data_opts(p)
    p.set_defaults(fn=cmd_dataset_balance)
    p = dsub.add_parser("split")
    p.add_argument("input")
    p.add_argument("--task", default="A")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--train-output", required=True)
    p.add_argument("--holdout-output", required=True)
    data_opts(p)
    p.set_defaults(fn=cmd_dataset_split)
    p = dsub.add_parser("stats")
    p.add_argument("input")
    p.add_argument("--task")
    data_opts(p)
    p.set_defaults(fn=cmd_dataset_stats)

    p = sub.add_parser("augment", help="add similar pool documents to a minority class")
    p.add_argument("base")
    p.add_argument("pool")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--task", default="B")
    p.add_argument("--target", required=True)
    p.add_argument("--threshold", type=float, default=0.45)
    p.add_argument("--source-class-filter", nargs="+")
    p.add_argument("--filter-task")
    p.add_argument("--max-selected", type=int)
    p.add_argument("--embeddings", help="CSV id,v0,v1,... (default: TF-IDF vectors)")
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--raw-text", action="store_true", help="embed texts without normalizing them first")
    p.add_argument("--pool-hierarchy")
    p.add_argument("--report", help="selection report path (default: <output>.selection.csv)")
    data_opts(p)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="fit a TF-IDF model")
    p.add_argument("train")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--task", default="A")
    p.add_argument("--family", choices=("linear", "naive-bayes"), default="linear")
    p.add_argument("--loss", choices=("cross-entropy", "weighted-bce", "focal"), default="cross-entropy")
    p.add_argument("--w", default="auto", help="weighted-bce positive weight, or 'auto'")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--classes-of", help="train a fine-stage model over this category's children")
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--keep-case", action="store_true")
    data_opts(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="classification report for a model or ensemble")
    p.add_argument("data")
    p.add_argument("-m", "--model", action="append", required=True)
    p.add_argument("--strategy", choices=("soft", "hard"), default="soft")
    p.add_argument("--task")
    p.add_argument("--output-dir")
    data_opts(p)
    p.set_defaults(fn=cmd_evaluate)

    ens = sub.add_parser("ensemble", help="ensemble utilities")
    esub = ens.add_subparsers(dest="action", required=True)
    p = esub.add_parser("search", help="best validation macro-F1 subset of each size")
    p.add_argument("validation")
    p.add_argument("-m", "--model", action="append", required=True)
    p.add_argument("--strategy", choices=("soft", "hard"), default="soft")
    p.add_argument("--task")
    p.add_argument("-o", "--output", help="ranked CSV table (a .txt rendering is written alongside)")
    data_opts(p)
    p.set_defaults(fn=cmd_ensemble_search)

    p = sub.add_parser("predict", help="label texts with a model or ensemble")
    p.add_argument("-m", "--model", action="append", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file")
    src.add_argument("--text")
    p.add_argument("--text-column", default="text")
    p.add_argument("--id-column", default="id")
    p.add_argument("--strategy", choices=("soft", "hard"), default="soft")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("run", help="execute an experiment config")
    p.add_argument("config")
    p.add_argument("--output-root", help="default: $SEXISMKIT_OUTPUT_ROOT or ./runs")
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is None and args.command != "run":
        args.seed = 0
    try:
        args.fn(args)
    except SexismKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
