"""Declarative experiment runner.

A JSON config names dataset build steps, a model roster, ensembles, subset
searches, hierarchical predictors and evaluations. :func:`run` executes them
in dependency order under one output directory keyed by the config hash and
writes a manifest whose content depends only on the config and its inputs.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from ._hashing import file_fingerprint, fingerprint
from .augment import AugmentPlan, apply_augmentation, score_pool, tfidf_embeddings
from .corpus import (
    TASKS,
    Dataset,
    LabelHierarchy,
    balance_binary,
    class_stats,
    imbalance_weight,
    load_csv,
    merge,
    stratified_split,
)
from .ensemble import (
    EnsembleSpec,
    HierarchicalSpec,
    PredictionCache,
    predict_ensemble_many,
    predict_hierarchical_many,
    search_subsets,
)
from .errors import ConfigInvalid, SexismKitError
from .features import fit_tfidf, load_embeddings
from .metrics import confusion, report
from .models import LossSpec, load_model, train_linear, train_nb
from .textnorm import NormConfig, normalize, substitute_lexical

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SEXISMKIT_OUTPUT_ROOT"
DATASET_OPS = ("load", "merge", "balance", "split", "filter", "labeled", "augment")
MODEL_FAMILIES = ("linear", "naive-bayes")


def _require(obj: Mapping, key: str, path: str):
    if key not in obj:
        raise ConfigInvalid(f"{path}.{key}", "required key missing")
    return obj[key]


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path
    seed: int
    datasets: list[dict] = field(default_factory=list)
    models: list[dict] = field(default_factory=list)
    ensembles: list[dict] = field(default_factory=list)
    searches: list[dict] = field(default_factory=list)
    hierarchical: list[dict] = field(default_factory=list)
    evaluations: list[dict] = field(default_factory=list)
    kinds: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path, seed: int | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(str(path), f"invalid JSON: {exc}") from exc
        return cls.from_dict(raw, path.parent, seed)

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir=".", seed: int | None = None) -> "ExperimentConfig":
        raw = _strip_comments(dict(raw))
        if seed is not None:
            raw["seed"] = seed
        cfg = cls(
            raw=raw,
            base_dir=Path(base_dir),
            seed=int(raw.get("seed", 0)),
            datasets=list(raw.get("datasets", [])),
            models=list(raw.get("models", [])),
            ensembles=list(raw.get("ensembles", [])),
            searches=list(raw.get("searches", [])),
            hierarchical=list(raw.get("hierarchical", [])),
            evaluations=list(raw.get("evaluations", [])),
        )
        cfg.validate()
        return cfg

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.raw)

    def dataset_outputs(self, step: Mapping) -> list[str]:
        if step.get("op") == "split":
            return list(step.get("outputs", []))
        return [step.get("name")]

    def dataset_inputs(self, step: Mapping) -> list[str]:
        op = step["op"]
        if op == "merge":
            return list(step.get("inputs", []))
        if op == "augment":
            refs = [step.get("base"), step.get("pool")]
            if step.get("anchors_from"):
                refs.append(step["anchors_from"])
            return refs
        if op == "load":
            return []
        return [step.get("input")]

    def validate(self) -> None:
        defined: dict[str, str] = {}

        def define(kind, ident, path):
            if not isinstance(ident, str) or not ident:
                raise ConfigInvalid(path, f"{kind} id must be a non-empty string")
            if ident in defined:
                raise ConfigInvalid(path, f"id {ident!r} already defined as a {defined[ident]}")
            defined[ident] = kind

        for i, step in enumerate(self.datasets):
            p = f"datasets[{i}]"
            op = _require(step, "op", p)
            if op not in DATASET_OPS:
                raise ConfigInvalid(f"{p}.op", f"unknown operation {op!r}")
            if op == "split":
                outs = _require(step, "outputs", p)
                if not isinstance(outs, list) or len(outs) != 2:
                    raise ConfigInvalid(f"{p}.outputs", "split needs [train_name, holdout_name]")
                for j, o in enumerate(outs):
                    define("dataset", o, f"{p}.outputs[{j}]")
            else:
                define("dataset", _require(step, "name", p), f"{p}.name")
            if op == "load":
                _require(step, "path", p)
            if op in ("balance", "split", "filter", "labeled", "augment"):
                _require(step, "task", p)
            if op == "augment":
                _require(step, "target", p)
        dataset_names = {k for k, v in defined.items() if v == "dataset"}
        for i, step in enumerate(self.datasets):
            for ref in self.dataset_inputs(step):
                if ref not in dataset_names:
                    raise ConfigInvalid(f"datasets[{i}]", f"references undefined dataset {ref!r}")
        self._topological_datasets()

        for i, m in enumerate(self.models):
            p = f"models[{i}]"
            define("model", _require(m, "id", p), f"{p}.id")
            fam = m.get("family", "linear")
            if fam not in MODEL_FAMILIES:
                raise ConfigInvalid(f"{p}.family", f"unknown model family {fam!r}")
            if _require(m, "task", p) not in TASKS:
                raise ConfigInvalid(f"{p}.task", f"unknown task {m['task']!r}")
            for key in ("train", "validation"):
                if key in m and m[key] not in dataset_names:
                    raise ConfigInvalid(f"{p}.{key}", f"undefined dataset {m[key]!r}")
            _require(m, "train", p)
            if "loss" in m:
                loss = dict(m["loss"])
                if loss.get("w") == "auto":
                    loss["w"] = 1.0
                try:
                    LossSpec.from_dict(loss)
                except (TypeError, SexismKitError) as exc:
                    raise ConfigInvalid(f"{p}.loss", str(exc)) from exc
        model_ids = {k for k, v in defined.items() if v == "model"}

        for i, s in enumerate(self.searches):
            p = f"searches[{i}]"
            define("search", _require(s, "id", p), f"{p}.id")
            for ref in _require(s, "candidates", p):
                if ref not in model_ids:
                    raise ConfigInvalid(f"{p}.candidates", f"undefined model {ref!r}")
            if _require(s, "validation", p) not in dataset_names:
                raise ConfigInvalid(f"{p}.validation", f"undefined dataset {s['validation']!r}")
        search_ids = {k for k, v in defined.items() if v == "search"}

        for i, e in enumerate(self.ensembles):
            p = f"ensembles[{i}]"
            define("ensemble", _require(e, "id", p), f"{p}.id")
            if "from_search" in e:
                if e["from_search"] not in search_ids:
                    raise ConfigInvalid(f"{p}.from_search", f"undefined search {e['from_search']!r}")
            else:
                for ref in _require(e, "members", p):
                    if ref not in model_ids:
                        raise ConfigInvalid(f"{p}.members", f"undefined model {ref!r}")
        ensemble_ids = {k for k, v in defined.items() if v == "ensemble"}

        for i, h in enumerate(self.hierarchical):
            p = f"hierarchical[{i}]"
            define("hierarchical", _require(h, "id", p), f"{p}.id")
            if _require(h, "category", p) not in ensemble_ids:
                raise ConfigInvalid(f"{p}.category", f"undefined ensemble {h['category']!r}")
            for cat, ref in _require(h, "fine", p).items():
                if ref not in ensemble_ids:
                    raise ConfigInvalid(f"{p}.fine.{cat}", f"undefined ensemble {ref!r}")

        for i, ev in enumerate(self.evaluations):
            p = f"evaluations[{i}]"
            define("evaluation", _require(ev, "id", p), f"{p}.id")
            target = _require(ev, "target", p)
            if defined.get(target) not in ("model", "ensemble", "hierarchical"):
                raise ConfigInvalid(f"{p}.target", f"undefined model/ensemble/hierarchical {target!r}")
            if _require(ev, "dataset", p) not in dataset_names:
                raise ConfigInvalid(f"{p}.dataset", f"undefined dataset {ev['dataset']!r}")
        self.kinds = defined

    def _topological_datasets(self) -> list[dict]:
        producers = {}
        for step in self.datasets:
            for out in self.dataset_outputs(step):
                producers[out] = step
        order, state = [], {}

        def visit(step, trail):
            key = id(step)
            if state.get(key) == "done":
                return
            if state.get(key) == "active":
                raise ConfigInvalid("datasets", f"cyclic dataset references through {' -> '.join(trail)}")
            state[key] = "active"
            for ref in self.dataset_inputs(step):
                visit(producers[ref], trail + [ref])
            state[key] = "done"
            order.append(step)

        for step in self.datasets:
            visit(step, self.dataset_outputs(step))
        return order


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, list):
        return [_strip_comments(v) for v in obj]
    return obj


def _load_hierarchy(spec, base_dir: Path) -> LabelHierarchy:
    if spec is None or spec == "canonical":
        return LabelHierarchy.canonical()
    if isinstance(spec, dict):
        return LabelHierarchy.from_dict(spec)
    return LabelHierarchy.from_json(base_dir / spec)


class Runner:
    def __init__(self, cfg: ExperimentConfig, output_root=None):
        self.cfg = cfg
        root = output_root or os.environ.get(OUTPUT_ROOT_ENV) or "runs"
        self.root = Path(root)
        self.out = self.root / cfg.fingerprint[:16]
        self.cache_dir = self.root / "cache" / "models"
        self.hierarchy = _load_hierarchy(cfg.raw.get("hierarchy"), cfg.base_dir)
        self.hierarchies = {k: _load_hierarchy(v, cfg.base_dir) for k, v in cfg.raw.get("hierarchies", {}).items()}
        self.norm = NormConfig.from_dict(cfg.raw.get("normalization"))
        self.substitute_sources = set((cfg.raw.get("normalization") or {}).get("substitute_sources", []))
        self.datasets: dict[str, Dataset] = {}
        self.models: dict[str, Any] = {}
        self.searches: dict[str, list] = {}
        self.ensembles: dict[str, EnsembleSpec] = {}
        self.hier_specs: dict[str, HierarchicalSpec] = {}
        self.steps: list[dict] = []
        self.scores: dict[str, Any] = {}
        self.timings: dict[str, float] = {}
        self.cache_hits: list[str] = []
        self.predictions = PredictionCache()

    def _rel(self, path: Path) -> str:
        return path.relative_to(self.out).as_posix()

    def _stage(self, stage: str, ident: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except SexismKitError as exc:
            exc.args = (f"[{stage} {ident}] {exc.args[0] if exc.args else ''}",)
            raise
        self.timings[f"{stage}:{ident}"] = time.perf_counter() - t0
        return result

    def run(self) -> dict:
        for sub in ("datasets", "models", "searches", "reports", "predictions"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        for step in self.cfg._topological_datasets():
            ident = "+".join(self.cfg.dataset_outputs(step))
            self._stage("dataset", ident, lambda s=step: self._build(s))
        for m in self.cfg.models:
            self._stage("train", m["id"], lambda m=m: self._train(m))
        for s in self.cfg.searches:
            self._stage("search", s["id"], lambda s=s: self._search(s))
        for e in self.cfg.ensembles:
            self._stage("ensemble", e["id"], lambda e=e: self._ensemble(e))
        for h in self.cfg.hierarchical:
            self._stage("hierarchical", h["id"], lambda h=h: self._hierarchical(h))
        for ev in self.cfg.evaluations:
            self._stage("evaluate", ev["id"], lambda ev=ev: self._evaluate(ev))
        manifest = {
            "toolkit": "sexismkit",
            "version": __version__,
            "config_fingerprint": self.cfg.fingerprint,
            "seed": self.cfg.seed,
            "steps": self.steps,
            "scores": self.scores,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (self.out / "timings.json").write_text(
            json.dumps({"seconds": self.timings, "model_cache_hits": self.cache_hits}, indent=2) + "\n")
        return manifest

    # dataset stage
    def _prepare_text(self, doc, normalize_text: bool):
        text = normalize(doc.text, self.norm) if normalize_text else doc.text
        if doc.source in self.substitute_sources:
            text = substitute_lexical(text, self.norm, salt=doc.id)
        return text

    def _record_dataset(self, name: str, ds: Dataset, step: Mapping, inputs: Mapping[str, str]):
        ds = Dataset(ds.documents, ds.hierarchy, name)
        self.datasets[name] = ds
        path = self.out / "datasets" / f"{name}.csv"
        ds.to_csv(path)
        dist = {}
        for task in TASKS:
            if any(ds.labels(task)):
                stats = class_stats(ds, task)
                dist[task] = dict(zip(stats.classes, stats.counts))
        self.steps.append({
            "stage": "dataset", "id": name, "op": step["op"], "inputs": dict(inputs),
            "output": ds.fingerprint, "rows": len(ds), "class_counts": dist, "artifact": self._rel(path),
        })
        return ds

    def _build(self, step: Mapping) -> None:
        op = step["op"]
        seed = int(step.get("seed", self.cfg.seed))
        fp = {r: self.datasets[r].fingerprint for r in self.cfg.dataset_inputs(step)}
        if op == "load":
            path = self.cfg.base_dir / step["path"]
            hier = self.hierarchies[step["hierarchy"]] if "hierarchy" in step else self.hierarchy
            ds = load_csv(path, step.get("columns"), hier, step["name"],
                          source=step.get("source", step["name"]), na_values=step.get("na_values", ("",)))
            ds = ds.map_text(lambda d: self._prepare_text(d, step.get("normalize", True)))
            self._record_dataset(step["name"], ds, step, {"file": file_fingerprint(path)})
        elif op == "merge":
            parts = [self.datasets[r] for r in step["inputs"]]
            self._record_dataset(step["name"], merge(parts, step["name"]), step, fp)
        elif op == "balance":
            ds = balance_binary(self.datasets[step["input"]], step["task"], step.get("protected_source"), seed)
            self._record_dataset(step["name"], ds, step, fp)
        elif op == "split":
            train, hold = stratified_split(self.datasets[step["input"]], step["task"],
                                           float(step.get("holdout_fraction", 0.2)), seed)
            self._record_dataset(step["outputs"][0], train, step, fp)
            self._record_dataset(step["outputs"][1], hold, step, fp)
        elif op == "filter":
            ds = self.datasets[step["input"]].where(step["task"], step["label"])
            self._record_dataset(step["name"], ds, step, fp)
        elif op == "labeled":
            self._record_dataset(step["name"], self.datasets[step["input"]].labeled(step["task"]), step, fp)
        elif op == "augment":
            self._augment(step, fp)

    def _augment(self, step: Mapping, fp: dict) -> None:
        base = self.datasets[step["base"]]
        pool = self.datasets[step["pool"]]
        anchor_src = self.datasets[step.get("anchors_from", step["base"])]
        plan = AugmentPlan.for_class(
            anchor_src, step["task"], step["target"], pool,
            threshold=float(step.get("threshold", 0.45)),
            source_class_filter=step.get("source_class_filter"),
            filter_task=step.get("filter_task"),
            max_selected=step.get("max_selected"),
        )
        if step.get("embeddings"):
            table = load_embeddings(self.cfg.base_dir / step["embeddings"])
            fp["embeddings"] = file_fingerprint(self.cfg.base_dir / step["embeddings"])
        else:
            table = tfidf_embeddings(plan, anchor_src, int(step.get("min_df", 1)),
                                     normalized=not step.get("raw_text", False))
        selection = score_pool(plan, table)
        report_path = self.out / "datasets" / f"{step['name']}.selection.csv"
        selection.write_report(report_path)
        ds = apply_augmentation(base, plan, table, step["name"], selection)
        self._record_dataset(step["name"], ds, step, fp)
        self.steps[-1]["selected"] = len(selection.selected)
        self.steps[-1]["selection_report"] = self._rel(report_path)

    # model stage
    def _train(self, m: Mapping) -> None:
        train = self.datasets[m["train"]]
        task = m["task"]
        classes = train.hierarchy.children(m["classes_of"]) if m.get("classes_of") else None
        if classes is None:
            train = train.labeled(task)
        loss_cfg = dict(m.get("loss", {"kind": "cross-entropy"}))
        if loss_cfg.get("w") == "auto":
            loss_cfg["w"] = imbalance_weight(train, task)
        validation = self.datasets[m["validation"]] if m.get("validation") else None
        resolved = {**{k: v for k, v in m.items() if k != "loss"}, "loss": loss_cfg,
                    "seed": int(m.get("seed", self.cfg.seed))}
        key = fingerprint({"model": resolved, "train": train.fingerprint,
                           "validation": validation.fingerprint if validation else None, "version": __version__})
        cached = self.cache_dir / f"{key}.json"
        if cached.exists():
            model = load_model(cached)
            self.cache_hits.append(m["id"])
        else:
            featurizer = fit_tfidf(train.texts, min_df=int(m.get("min_df", 1)),
                                   lowercase=bool(m.get("lowercase", True)))
            if m.get("family", "linear") == "linear":
                model = train_linear(
                    train, featurizer, task, LossSpec.from_dict(loss_cfg),
                    epochs=int(m.get("epochs", 10)), batch=int(m.get("batch", 8)), lr=float(m.get("lr", 1e-2)),
                    seed=resolved["seed"], weight_decay=float(m.get("weight_decay", 0.0)), classes=classes,
                    validation=validation, select_best=bool(m.get("select_best", False)),
                )
            else:
                model = train_nb(train, featurizer, task, float(m.get("smoothing", 1.0)), classes=classes)
            tmp = cached.with_suffix(".tmp")
            model.save(tmp)
            tmp.replace(cached)
            model = load_model(cached)
        path = self.out / "models" / f"{m['id']}.json"
        model.save(path)
        self.models[m["id"]] = model
        self.steps.append({"stage": "train", "id": m["id"], "inputs": {m["train"]: train.fingerprint},
                           "output": model.fingerprint, "artifact": self._rel(path)})

    # ensemble stage
    def _search(self, s: Mapping) -> None:
        val = self.datasets[s["validation"]]
        task = s.get("task") or self.models[s["candidates"][0]].task
        val = val.labeled(task)
        best = search_subsets(s["candidates"], s.get("strategy", "soft"), val, self.models, task, self.predictions)
        self.searches[s["id"]] = best
        rows = [{"size": r.size, "members": list(r.members), "macro_f1": r.score} for r in best]
        path = self.out / "searches" / f"{s['id']}.csv"
        write_search_table(best, path)
        (self.out / "searches" / f"{s['id']}.txt").write_text(render_search_table(best) + "\n")
        self.scores[s["id"]] = rows
        self.steps.append({"stage": "search", "id": s["id"], "inputs": {s["validation"]: val.fingerprint},
                           "candidates": list(s["candidates"]), "strategy": s.get("strategy", "soft"),
                           "artifact": self._rel(path)})

    def _ensemble(self, e: Mapping) -> None:
        if "from_search" in e:
            rows = self.searches[e["from_search"]]
            size = e.get("size", "best")
            if size == "best":
                pick = max(rows, key=lambda r: (r.score, -r.size))
            else:
                pick = next((r for r in rows if r.size == int(size)), None)
                if pick is None:
                    raise ConfigInvalid(f"ensembles.{e['id']}.size", f"no size-{size} result")
            strategy = next(s for s in self.cfg.searches if s["id"] == e["from_search"]).get("strategy", "soft")
            spec = EnsembleSpec(pick.members, strategy, task=e.get("task"))
        else:
            spec = EnsembleSpec(tuple(e["members"]), e.get("strategy", "soft"), e.get("weights"), e.get("task"))
        self.ensembles[e["id"]] = spec
        self.steps.append({"stage": "ensemble", "id": e["id"], "spec": spec.to_dict()})

    def _hierarchical(self, h: Mapping) -> None:
        spec = HierarchicalSpec(self.ensembles[h["category"]], {c: self.ensembles[r] for c, r in h["fine"].items()},
                                self.hierarchy)
        self.hier_specs[h["id"]] = spec
        self.steps.append({"stage": "hierarchical", "id": h["id"], "category": h["category"],
                           "fine": dict(sorted(h["fine"].items()))})

    # evaluation stage
    def _evaluate(self, ev: Mapping) -> None:
        target = ev["target"]
        kind = self.cfg.kinds[target]
        ds = self.datasets[ev["dataset"]]
        result: dict[str, Any] = {"target": target, "dataset": ev["dataset"]}
        if kind == "hierarchical":
            spec = self.hier_specs[target]
            ds = ds.labeled("C")
            pairs = predict_hierarchical_many(spec, self.models, ds.texts)
            consistent = all(self.hierarchy.parent(f) == c for c, f in pairs)
            path = self.out / "predictions" / f"{ev['id']}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("id,category,fine\n")
                for d, (c, f) in zip(ds, pairs):
                    fh.write(json.dumps(d.id) + "," + json.dumps(c) + "," + json.dumps(f) + "\n")
            for task, idx, classes in (("B", 0, self.hierarchy.task_b), ("C", 1, self.hierarchy.task_c)):
                cm = confusion(ds.labels(task), [p[idx] for p in pairs], classes)
                result[task] = self._write_report(f"{ev['id']}.{task}", report(cm), cm)
            result["hierarchy_consistent"] = consistent
        else:
            task = ev.get("task") or (self.models[target].task if kind == "model"
                                      else self.models[self.ensembles[target].members[0]].task)
            ds = ds.labeled(task)
            if kind == "model":
                model = self.models[target]
                probs = self.predictions.get(model, ds.texts, ds.fingerprint)
                preds = [model.classes[i] for i in probs.argmax(axis=1)]
                classes = model.classes
            else:
                spec = self.ensembles[target]
                preds, _ = predict_ensemble_many(spec, self.models, ds.texts, cache=self.predictions,
                                                 cache_key=ds.fingerprint)
                classes = self.models[spec.members[0]].classes
            cm = confusion(ds.labels(task), preds, classes)
            result[task] = self._write_report(ev["id"], report(cm), cm)
        self.scores[ev["id"]] = result
        self.steps.append({"stage": "evaluate", "id": ev["id"], "inputs": {ev["dataset"]: ds.fingerprint},
                           "target": target})

    def _write_report(self, name: str, rep, cm) -> dict:
        (self.out / "reports" / f"{name}.json").write_text(rep.to_json() + "\n")
        (self.out / "reports" / f"{name}.txt").write_text(rep.render() + "\n")
        cm.to_csv(self.out / "reports" / f"{name}.confusion.csv")
        return {"macro_f1": rep.macro.f1, "accuracy": rep.accuracy, "weighted_f1": rep.weighted.f1}


def write_search_table(rows, path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "size", "members", "macro_f1"])
        for rank, r in enumerate(sorted(rows, key=lambda r: (-r.score, r.size)), start=1):
            writer.writerow([rank, r.size, ";".join(r.members), repr(r.score)])


def render_search_table(rows) -> str:
    lines = [f"{'size':>4}  {'macro-F1':>8}  members"]
    top = max(r.score for r in rows) if rows else None
    for r in rows:
        mark = " *" if r.score == top else ""
        lines.append(f"{r.size:>4}  {r.score:>8.4f}  {', '.join(r.members)}{mark}")
    return "\n".join(lines)


def run(config, seed: int | None = None, output_root=None) -> dict:
    """Execute an experiment config (path or :class:`ExperimentConfig`) and return its manifest."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.load(config, seed)
    runner = Runner(config, output_root)
    manifest = runner.run()
    manifest_path = runner.out / "manifest.json"
    log.info("wrote %s", manifest_path)
    return manifest


def run_dir(config: ExperimentConfig, output_root=None) -> Path:
    root = output_root or os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return Path(root) / config.fingerprint[:16]
