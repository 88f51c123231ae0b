"""``ambiscore`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._util import atomic_write_text, dump_json
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError, FieldMapping, dataset_hash, load_dataset, serialize_dataset, summarize
from .difficulty import (
    GridSpec,
    calibrate_thresholds,
    categorize_all,
    load_thresholds,
    save_thresholds,
)
from .ensemble import (
    DEFAULT_GRIDS,
    EnsembleModel,
    FeatureMatrix,
    fit,
    grid_search,
    kfold_cv,
    learner_for,
)
from .gateway import Gateway, GatewayError, MockScript, MockServer, RetryPolicy, oracle_script
from .metrics import evaluate_run, residuals_csv
from .prompting import RunRecord, Scorer, dump_run, load_run, sense_hint
from .retrieval import EmbedTextOptions, build_index, load_indexes, save_indexes
from .sft_export import Strategy, dump_records, export_strategy

log = logging.getLogger("ambiscore")

COMMANDS = ("ingest", "calibrate", "index", "infer", "ensemble-fit", "ensemble-predict", "eval",
            "export-sft", "report", "mock-serve")


class CommandError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers


def _field_map(cfg: RunConfig) -> FieldMapping:
    fm = cfg.field_map
    if fm is None:
        return FieldMapping()
    if isinstance(fm, str):
        return FieldMapping.from_json(fm)
    return FieldMapping.from_dict(fm)


def _load_split(cfg: RunConfig, split: str, require_labels: bool = False):
    path = cfg.data.get(split)
    if not path:
        raise ConfigError(f"no data path configured for split {split!r}")
    res = load_dataset(path, split, _field_map(cfg), require_labels)
    return res


def _instances(cfg: RunConfig, split: str, require_labels: bool = False):
    res = _load_split(cfg, split, require_labels)
    if res.rejects:
        log.warning("%s: %d records rejected", split, len(res.rejects))
    return res.instances


def _gateway(cfg: RunConfig) -> Gateway:
    return Gateway(
        base_url=cfg.base_url,
        cache_dir=cfg.cache_dir,
        policy=RetryPolicy(max_attempts=cfg.max_attempts, timeout=cfg.timeout),
        max_in_flight=cfg.max_in_flight,
        seed=cfg.seed,
    )


def _out(cfg: RunConfig, *parts: str) -> Path:
    p = Path(cfg.out).joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(cfg: RunConfig, command: str, artifacts: list[Path], hashes: dict) -> None:
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "dataset_hashes": hashes,
        "artifacts": sorted(_rel(a, cfg.out) for a in artifacts),
        "version": __version__,
    }
    atomic_write_text(_out(cfg, f"manifest-{command}.json"), dump_json(doc))


def _rel(path, root) -> str:
    try:
        return str(Path(path).resolve().relative_to(Path(root).resolve()))
    except ValueError:
        return str(path)


def _thresholds_path(cfg: RunConfig) -> Path:
    return Path(cfg.thresholds) if cfg.thresholds else Path(cfg.out) / "thresholds.json"


def _index_dir(cfg: RunConfig) -> Path:
    return Path(cfg.index_dir) if cfg.index_dir else Path(cfg.out) / "index"


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", s).strip("-")


def _run_name(cfg: RunConfig) -> str:
    tag = "zero-shot" if cfg.mode == "zero-shot" else f"few-shot-k{cfg.k}"
    return f"{cfg.split}_{_slug(cfg.chat_model)}_{tag}"


def _run_path(cfg: RunConfig) -> Path:
    return Path(cfg.run) if cfg.run else Path(cfg.out) / "runs" / f"{_run_name(cfg)}.jsonl"


def _embed_options(cfg: RunConfig) -> EmbedTextOptions:
    return EmbedTextOptions(cfg.embed_include_ending, cfg.embed_include_meaning)


# --------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig, args) -> int:
    artifacts, hashes, summary = [], {}, {}
    for split in ("train", "dev", "test"):
        if not cfg.data.get(split):
            continue
        res = _load_split(cfg, split)
        p = _out(cfg, "ingest", f"{split}.jsonl")
        Path(p).write_bytes(serialize_dataset(res.instances))
        artifacts.append(p)
        hashes[split] = dataset_hash(res.instances)
        s = summarize(res, split).to_dict()
        s["rejects"] = [{"line": r.line, "message": r.message} for r in res.rejects]
        summary[split] = s
        print(f"{split}: {s['n_instances']} instances ({s['n_labeled']} labeled), "
              f"{s['n_rejected']} rejected, {s['n_unique_homonyms']} homonyms")
    if not summary:
        raise ConfigError("no data paths configured")
    p = _out(cfg, "ingest", "summary.json")
    atomic_write_text(p, dump_json(summary))
    artifacts.append(p)
    _manifest(cfg, "ingest", artifacts, hashes)
    return 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    train = _instances(cfg, "train", require_labels=True)
    grid = GridSpec.from_dict(cfg.calibration_grid) if cfg.calibration_grid else GridSpec()
    res = calibrate_thresholds(train, tuple(cfg.calibration_targets), grid)
    p = _thresholds_path(cfg)
    save_thresholds(p, res, train, grid)
    t = res.thresholds
    print(f"thresholds: std<={t.agreement_std_max} ({t.std_convention}), high>={t.high_mean_min}, "
          f"low<={t.low_mean_max}")
    print(f"counts (ambiguous, high, low) = {res.counts}; targets = {res.targets}; l1_gap = {res.l1_gap}")
    _manifest(cfg, "calibrate", [p],
              {"train": dataset_hash(train)})
    return 0


def cmd_index(cfg: RunConfig, args) -> int:
    train = _instances(cfg, "train", require_labels=True)
    thresholds = load_thresholds(_thresholds_path(cfg))
    cats = categorize_all(train, thresholds)
    with _gateway(cfg) as gw:
        indexes = build_index(train, cats, gw, cfg.embedding_model, _embed_options(cfg))
        log.info("index: %d network calls", gw.network_calls)
    d = _index_dir(cfg)
    save_indexes(indexes, d)
    for cat, idx in indexes.items():
        print(f"{cat.value}: {len(idx)} entries, dimension {idx.dimension}")
    arts = [d / f"{c.value}.idx" for c in indexes]
    _manifest(cfg, "index", arts,
              {"train": dataset_hash(train)})
    return 0


def cmd_infer(cfg: RunConfig, args) -> int:
    insts = _instances(cfg, cfg.split)
    if cfg.limit:
        insts = insts[: int(cfg.limit)]
    indexes = load_indexes(_index_dir(cfg), expect_model=cfg.embedding_model) if cfg.mode == "few-shot" else None
    with _gateway(cfg) as gw:
        scorer = Scorer(gw, cfg.chat_model, indexes, cfg.embedding_model, cfg.max_tokens,
                        cfg.use_mean_labels, _embed_options(cfg))
        records = scorer.score_batch(insts, cfg.mode, cfg.k, workers=cfg.max_in_flight)
        calls = gw.network_calls
    p = _run_path(cfg)
    p.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(p, dump_run(records))
    failed = sum(r.status == "failed" for r in records)
    print(f"{p}: {len(records)} records, {failed} failed")
    print(f"network calls: {calls}", file=sys.stderr)
    _manifest(cfg, "infer", [p],
              {cfg.split: dataset_hash(insts)})
    if records and failed == len(records):
        return 1
    return 0


def _categories_for(cfg: RunConfig, insts):
    tp = _thresholds_path(cfg)
    if not tp.exists() or not all(i.labeled for i in insts):
        return None
    return categorize_all(insts, load_thresholds(tp))


def cmd_eval(cfg: RunConfig, args) -> int:
    run_path = Path(args.run) if getattr(args, "run", None) else _run_path(cfg)
    records = load_run(run_path.read_text(encoding="utf-8"))
    if not records:
        raise CommandError(f"{run_path} is empty")
    insts = {i.id: i for i in _instances(cfg, cfg.split)}
    wanted = [insts[r.instance_id] for r in records if r.instance_id in insts]
    report = evaluate_run(records, insts, cfg.std_convention, _categories_for(cfg, wanted))
    first = records[0]
    doc = report.to_dict()
    doc["run"] = {"path": run_path.name, "model_id": first.model_id, "mode": first.mode, "k": first.k,
                  "split": cfg.split}
    stem = run_path.name[:-len(".jsonl")] if run_path.name.endswith(".jsonl") else run_path.stem
    jp = _out(cfg, "eval", f"{stem}.report.json")
    tp = _out(cfg, "eval", f"{stem}.report.txt")
    cp = _out(cfg, "eval", f"{stem}.residuals.csv")
    atomic_write_text(jp, dump_json(doc))
    atomic_write_text(tp, report.to_text())
    preds = {r.instance_id: float(r.score) for r in records if r.status != "failed" and r.score is not None}
    atomic_write_text(cp, residuals_csv(preds, insts, cfg.std_convention))
    sys.stdout.write(report.to_text())
    _manifest(cfg, "eval", [jp, tp, cp], {cfg.split: dataset_hash(wanted)})
    return 0


def _feature_matrix(cfg: RunConfig) -> FeatureMatrix:
    runs = cfg.ensemble.get("runs") or {}
    if len(runs) < 2:
        raise ConfigError("ensemble.runs must map at least two column names to run files")
    loaded = {col: load_run(Path(p).read_text(encoding="utf-8")) for col, p in runs.items()}
    return FeatureMatrix.from_runs(loaded)


def cmd_ensemble_fit(cfg: RunConfig, args) -> int:
    ens = cfg.ensemble
    kind = ens.get("kind", "linear")
    fm = _feature_matrix(cfg)
    insts = {i.id: i for i in _instances(cfg, cfg.split, require_labels=True)}
    missing = [r for r in fm.row_ids if r not in insts]
    if missing:
        raise CommandError(f"{len(missing)} feature rows have no gold instance, e.g. {missing[0]!r}")
    y = np.array([insts[r].stats().mean for r in fm.row_ids])
    sd = [insts[r].stats() for r in fm.row_ids]
    folds = int(ens.get("folds", 5))
    params = dict(ens.get("params") or {})
    if kind == "perf_weight":
        params.setdefault("metric", ens.get("weight_metric", "spearman"))
    grid_doc = None
    if kind in DEFAULT_GRIDS and not params:
        gr = grid_search(kind, fm.values, y, ens.get("grid") or DEFAULT_GRIDS[kind], folds, cfg.seed, sd,
                         cfg.std_convention)
        params = dict(gr.best_params)
        grid_doc = gr.to_dict()
    cv = kfold_cv(learner_for(kind, **params), fm.values, y, folds, cfg.seed, sd, cfg.std_convention)
    cv.params = params
    model = fit(kind, fm.values, y, sd=sd, columns=fm.column_ids, **params)
    mp = _out(cfg, "ensemble", f"{kind}.json")
    model.save(mp)
    cvp = _out(cfg, "ensemble", f"{kind}.cv.json")
    atomic_write_text(cvp, dump_json({"kind": kind, "cv": cv.to_dict(), "grid": grid_doc,
                                      "n_rows": len(fm.row_ids), "dropped": fm.dropped}))
    acc = "n/a" if cv.mean_acc is None else f"{cv.mean_acc:.4f}"
    print(f"{kind}: {folds}-fold CV spearman {cv.mean_spearman:.4f}, acc_within_sd {acc}")
    _manifest(cfg, "ensemble-fit", [mp, cvp], {cfg.split: dataset_hash(insts.values())})
    return 0


def cmd_ensemble_predict(cfg: RunConfig, args) -> int:
    mpath = getattr(args, "model", None) or cfg.ensemble.get("model")
    if not mpath:
        raise ConfigError("no ensemble model given (--model or ensemble.model)")
    model = EnsembleModel.load(mpath)
    fm = _feature_matrix(cfg)
    if model.columns and model.columns != fm.column_ids:
        raise CommandError(f"run columns {fm.column_ids} do not match model columns {model.columns}")
    preds = model.predict(fm.values)
    records = [RunRecord(iid, "ensemble", 0, f"ensemble:{model.kind}", float(p), "ok")
               for iid, p in zip(fm.row_ids, preds)]
    records += [RunRecord(iid, "ensemble", 0, f"ensemble:{model.kind}", None, "failed",
                          error=f"missing base scores: {', '.join(cols)}") for iid, cols in fm.dropped.items()]
    p = Path(cfg.run) if cfg.run else _out(cfg, "runs", f"{cfg.split}_ensemble-{model.kind}.jsonl")
    p.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(p, dump_run(records))
    print(f"{p}: {len(records)} records ({len(fm.dropped)} without full features)")
    _manifest(cfg, "ensemble-predict", [p], {})
    return 0


def cmd_export_sft(cfg: RunConfig, args) -> int:
    strategy = Strategy(getattr(args, "strategy", None) or cfg.sft.get("strategy", "single_annotator"))
    split = "train"
    insts = _instances(cfg, split, require_labels=True)
    thresholds = None
    hints = None
    artifacts = []
    if strategy is Strategy.SINGLE_WITH_DIFFICULTY:
        thresholds = load_thresholds(_thresholds_path(cfg))
    if strategy is Strategy.SINGLE_WITH_THINKING:
        hp = cfg.sft.get("sense_hints")
        if hp:
            hints = json.loads(Path(hp).read_text(encoding="utf-8"))
        else:
            model = cfg.sft.get("hint_model") or cfg.chat_model
            with _gateway(cfg) as gw:
                hints = {i.id: sense_hint(i, gw, model) for i in insts}
            hp = _out(cfg, "sft", "sense_hints.json")
            atomic_write_text(hp, dump_json(hints))
            artifacts.append(hp)
    records = export_strategy(insts, strategy, thresholds, hints)
    p = _out(cfg, "sft", f"{strategy.value}.jsonl")
    atomic_write_text(p, dump_records(records))
    artifacts.append(p)
    print(f"{p}: {len(records)} records from {len(insts)} instances")
    _manifest(cfg, "export-sft", artifacts, {split: dataset_hash(insts)})
    return 0


REPORT_COLUMNS = ("run_dir", "run", "model_id", "mode", "k", "split", "spearman", "acc_within_sd",
                  "n_evaluated", "n_failed")


def build_report(run_dirs: list[str]) -> tuple[list[dict], str, str]:
    rows = []
    for d in run_dirs:
        reports = sorted(Path(d).glob("eval/*.report.json"))
        if not reports:
            raise CommandError(f"no eval report in {d}")
        for rp in reports:
            doc = json.loads(rp.read_text(encoding="utf-8"))
            run = doc.get("run", {})
            rows.append({
                "run_dir": str(d), "run": run.get("path", rp.stem), "model_id": run.get("model_id", ""),
                "mode": run.get("mode", ""), "k": run.get("k", ""), "split": run.get("split", ""),
                "spearman": doc["spearman"], "acc_within_sd": doc["acc_within_sd"],
                "n_evaluated": doc["n_evaluated"], "n_failed": doc["n_failed"],
            })
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    head = f"{'model':<28}{'mode':<11}{'k':>3} {'split':<6}{'Sc':>8}{'Acc':>8}{'n':>6}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{str(r['model_id'])[:27]:<28}{r['mode']:<11}{str(r['k']):>3} {r['split']:<6}"
                     f"{r['spearman']:>8.3f}{r['acc_within_sd']:>8.3f}{r['n_evaluated']:>6}")
    return rows, "\n".join(lines) + "\n", buf.getvalue()


def cmd_report(cfg: RunConfig, args) -> int:
    rows, text, csv_text = build_report(args.run_dirs)
    sys.stdout.write(text)
    atomic_write_text(_out(cfg, "report.csv"), csv_text)
    atomic_write_text(_out(cfg, "report.txt"), text)
    return 0


def cmd_mock_serve(cfg: RunConfig, args) -> int:
    if args.oracle_data:
        res = load_dataset(args.oracle_data, args.oracle_split, _field_map(cfg))
        script = oracle_script(res.instances)
    elif args.script:
        script = MockScript.from_json(args.script)
    else:
        script = MockScript()
    server = MockServer(script, host=args.host, port=args.port)
    print(f"mock server listening on {server.base_url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


HANDLERS = {
    "ingest": cmd_ingest,
    "calibrate": cmd_calibrate,
    "index": cmd_index,
    "infer": cmd_infer,
    "ensemble-fit": cmd_ensemble_fit,
    "ensemble-predict": cmd_ensemble_predict,
    "eval": cmd_eval,
    "export-sft": cmd_export_sft,
    "report": cmd_report,
    "mock-serve": cmd_mock_serve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON file")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted keys, JSON values)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="ambiscore", description="Narrative word-sense plausibility scoring.")
    ap.add_argument("--version", action="version", version=f"ambiscore {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "eval":
            sp.add_argument("--run", help="run-record file (default: the configured infer output)")
        if name == "ensemble-predict":
            sp.add_argument("--model", help="fitted ensemble JSON")
        if name == "export-sft":
            sp.add_argument("--strategy", choices=[s.value for s in Strategy])
        if name == "report":
            sp.add_argument("run_dirs", nargs="+")
        if name == "mock-serve":
            sp.add_argument("--script", help="response table JSON")
            sp.add_argument("--oracle-data", help="dataset file; answer each prompt with its rounded gold mean")
            sp.add_argument("--oracle-split", default="dev")
            sp.add_argument("--host", default="127.0.0.1")
            sp.add_argument("--port", type=int, default=8765)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, cache_dir=args.cache_dir, seed=args.seed, out=args.out)
    except (ConfigError, CorpusError) as exc:
        print(f"ambiscore: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"ambiscore: config error: {exc}", file=sys.stderr)
        return 2
    except (CommandError, CorpusError, GatewayError, OSError, ValueError) as exc:
        print(f"ambiscore {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
