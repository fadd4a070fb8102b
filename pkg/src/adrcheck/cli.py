"""Pipeline orchestration: stage commands, run manifest, and report generation."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import adr, corpus, ensemble, judge, metrics, reports, retrieval
from .config import ConfigError, RunConfig, config_snapshot, load_config
from .labels import ComplianceLabel
from .providers import HttpChatProvider, RuleBasedChatProvider, make_provider_splitter

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


class Manifest:
    """Per-run bookkeeping: config snapshot, stage markers, per-item errors.

    Contains no timestamps so a rerun from the same config is byte-identical.
    """

    def __init__(self, out_dir: Path, cfg: RunConfig) -> None:
        self.path = out_dir / "manifest.json"
        snapshot = config_snapshot(cfg)
        run_id = hashlib.sha256(
            json.dumps(snapshot, sort_keys=True).encode("utf-8")
        ).hexdigest()[:12]
        if self.path.exists():
            self.data = json.loads(self.path.read_text(encoding="utf-8"))
            if self.data.get("run_id") != run_id:
                self.data = {"run_id": run_id, "config": snapshot, "stages": {}}
        else:
            self.data = {"run_id": run_id, "config": snapshot, "stages": {}}

    def set_stage(self, name: str, info: dict, complete: bool = True) -> None:
        info = dict(info)
        info["complete"] = complete
        self.data["stages"][name] = info
        self.save()

    def stage(self, name: str) -> dict:
        return self.data["stages"].get(name, {})

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(self.data, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def _make_embedder(cfg: RunConfig):
    if cfg.embedder.kind == "local":
        return retrieval.HashingEmbedder(cfg.embedder.dims)
    if cfg.embedder.kind == "http":
        if not cfg.embedder.endpoint:
            raise ConfigError("http embedder requires an endpoint")
        return retrieval.HttpEmbeddingProvider(cfg.embedder.endpoint, cfg.embedder.dims)
    raise ConfigError(f"unknown embedder kind {cfg.embedder.kind!r}")


def _make_chat_provider(cfg: RunConfig, endpoint: str, model: str):
    if cfg.mock_providers or endpoint == "mock":
        return RuleBasedChatProvider()
    return HttpChatProvider(endpoint, model)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


# --- stage commands ----------------------------------------------------------

def cmd_scan(cfg: RunConfig, out_dir: Path, manifest: Manifest) -> int:
    corpus_dir = out_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    projects = []
    for root in cfg.project_roots:
        scanned = corpus.scan_repository(root, cfg.extensions)
        chunked = corpus.chunk_corpus(scanned, cfg.chunking.max_lines, cfg.chunking.overlap)
        corpus.write_corpus(chunked, corpus_dir / f"{chunked.project_id}.json")
        projects.append(
            {
                "project_id": chunked.project_id,
                "files": len(chunked.files),
                "chunks": len(chunked.chunks),
                "total_loc": chunked.total_loc,
            }
        )
    manifest.set_stage("scan", {"projects": projects})
    return EXIT_OK


def _find_adr_files(root: Path, markers: Sequence[str]) -> list[Path]:
    hits = []
    for path in sorted(root.rglob("*.md")):
        rel = path.relative_to(root).as_posix().lower()
        if any(m in rel for m in markers):
            hits.append(path)
    return hits


def cmd_adrs(cfg: RunConfig, out_dir: Path, manifest: Manifest) -> int:
    splitter = None
    if cfg.use_provider_splitter:
        provider = _make_chat_provider(cfg, cfg.judge_slot.endpoint, cfg.judge_slot.model)
        splitter = make_provider_splitter(provider, cfg.generation)

    all_items: list[adr.DecisionItem] = []
    adr_files = parsed = unknown = 0
    for root_str in cfg.project_roots:
        root = Path(root_str)
        if not root.is_dir():
            raise FileNotFoundError(f"project root does not exist: {root}")
        pid = root.name
        for path in _find_adr_files(root, cfg.adr_path_markers):
            adr_files += 1
            rel = path.relative_to(root).as_posix()
            doc = adr.parse_adr(path.read_text(encoding="utf-8", errors="replace"), rel)
            if doc.template is adr.AdrTemplate.Unknown:
                log.warning("skipping %s/%s: no recognized ADR template", pid, rel)
                unknown += 1
                continue
            parsed += 1
            all_items.extend(
                adr.split_decisions(doc, splitter=splitter, id_prefix=f"{pid}/{rel}")
            )

    accepted = adr.gate_accepted(all_items)
    _write_text(out_dir / "decisions.jsonl", adr.decisions_to_jsonl(accepted))
    if not accepted:
        log.warning("no accepted decisions found; decisions file is empty")
    manifest.set_stage(
        "adrs",
        {
            "adr_files": adr_files,
            "parsed": parsed,
            "unknown_template": unknown,
            "decisions_total": len(all_items),
            "accepted": len(accepted),
            "gated_out": len(all_items) - len(accepted),
        },
    )
    return EXIT_OK


def cmd_index(cfg: RunConfig, out_dir: Path, manifest: Manifest) -> int:
    embedder = _make_embedder(cfg)
    index_dir = out_dir / "index"
    index_dir.mkdir(parents=True, exist_ok=True)
    built = []
    for corpus_file in sorted((out_dir / "corpus").glob("*.json")):
        project = corpus.read_corpus(corpus_file)
        if project.chunks:
            index = retrieval.build_index(project.chunks, embedder)
        else:
            index = retrieval.VectorIndex(
                dims=embedder.dims, chunk_ids=(), vectors=np.zeros((0, embedder.dims))
            )
        retrieval.write_index(index, index_dir / corpus_file.name)
        built.append({"project_id": project.project_id, "entries": len(index)})
    if not built:
        raise FileNotFoundError("no corpus files found; run the scan stage first")
    manifest.set_stage("index", {"indexes": built})
    return EXIT_OK


def _project_of(decision_id: str) -> str:
    return decision_id.split("/", 1)[0]


def _load_project_artifacts(out_dir: Path, pids: set[str]):
    indexes, texts = {}, {}
    for pid in pids:
        corpus_path = out_dir / "corpus" / f"{pid}.json"
        index_path = out_dir / "index" / f"{pid}.json"
        if not corpus_path.exists() or not index_path.exists():
            raise FileNotFoundError(f"missing corpus or index for project {pid}; run scan and index first")
        texts[pid] = corpus.read_corpus(corpus_path).chunk_texts()
        indexes[pid] = retrieval.read_index(index_path)
    return indexes, texts


def cmd_judge(cfg: RunConfig, out_dir: Path, manifest: Manifest, resume: bool) -> int:
    if resume and manifest.stage("judge").get("complete"):
        log.info("judge stage already complete; skipping")
        return EXIT_OK

    decisions_path = out_dir / "decisions.jsonl"
    if not decisions_path.exists():
        raise FileNotFoundError("decisions.jsonl not found; run the adrs stage first")
    decisions = adr.decisions_from_jsonl(decisions_path.read_text(encoding="utf-8"))

    existing: dict[str, judge.Judgement] = {}
    judgements_path = out_dir / "judgements.jsonl"
    if resume and judgements_path.exists():
        existing = {
            j.decision_id: j
            for j in judge.judgements_from_jsonl(judgements_path.read_text(encoding="utf-8"))
        }

    pending = [d for d in decisions if d.decision_id not in existing]
    indexes, texts = _load_project_artifacts(out_dir, {_project_of(d.decision_id) for d in pending})
    embedder = _make_embedder(cfg)
    provider = _make_chat_provider(cfg, cfg.judge_slot.endpoint, cfg.judge_slot.model)

    errors: list[dict] = []

    def run_one(item: adr.DecisionItem):
        pid = _project_of(item.decision_id)
        return judge.judge_decision(
            item,
            indexes[pid],
            texts[pid],
            provider,
            cfg.generation,
            cfg.k,
            embedder=embedder,
            retry_limit=cfg.retry_limit,
            model_id=cfg.judge_slot.slot_id,
        )

    results = dict(existing)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for item, outcome in zip(pending, pool.map(lambda d: _trap(run_one, d), pending)):
            if isinstance(outcome, Exception):
                errors.append({"decision_id": item.decision_id, "error": str(outcome)})
            else:
                results[item.decision_id] = outcome

    ordered = [results[did] for did in sorted(results)]
    _write_text(judgements_path, judge.judgements_to_jsonl(ordered))
    manifest.set_stage(
        "judge",
        {"judged": len(ordered), "errors": sorted(errors, key=lambda e: e["decision_id"])},
        complete=not errors,
    )
    return EXIT_PARTIAL if errors else EXIT_OK


def _trap(fn, arg):
    try:
        return fn(arg)
    except Exception as exc:  # per-item isolation; the error is reported upstream
        return exc


def cmd_validate(cfg: RunConfig, out_dir: Path, manifest: Manifest, resume: bool) -> int:
    if resume and manifest.stage("validate").get("complete"):
        log.info("validate stage already complete; skipping")
        return EXIT_OK

    judgements_path = out_dir / "judgements.jsonl"
    if not judgements_path.exists():
        raise FileNotFoundError("judgements.jsonl not found; run the judge stage first")
    judgements = {
        j.decision_id: j
        for j in judge.judgements_from_jsonl(judgements_path.read_text(encoding="utf-8"))
    }
    decisions = {
        d.decision_id: d
        for d in adr.decisions_from_jsonl((out_dir / "decisions.jsonl").read_text(encoding="utf-8"))
        if d.decision_id in judgements
    }

    verdicts_path = out_dir / "verdicts.jsonl"
    existing: dict[tuple[str, str], ensemble.ValidationVerdict] = {}
    if resume and verdicts_path.exists():
        existing = {
            (v.decision_id, v.validator_id): v
            for v in ensemble.verdicts_from_jsonl(verdicts_path.read_text(encoding="utf-8"))
        }

    indexes, texts = _load_project_artifacts(out_dir, {_project_of(d) for d in decisions})
    embedder = _make_embedder(cfg)
    providers_by_slot = {
        slot.slot_id: _make_chat_provider(cfg, slot.endpoint, slot.model)
        for slot in cfg.validator_slots
    }

    tasks = [
        (did, slot.slot_id)
        for did in sorted(decisions)
        for slot in cfg.validator_slots
        if (did, slot.slot_id) not in existing
    ]
    errors: list[dict] = []

    def run_one(task: tuple[str, str]):
        did, validator_id = task
        item = decisions[did]
        pid = _project_of(did)
        return ensemble.validate_decision(
            item,
            judgements[did],
            indexes[pid],
            texts[pid],
            providers_by_slot[validator_id],
            cfg.generation,
            cfg.k,
            embedder=embedder,
            validator_id=validator_id,
            retry_limit=cfg.retry_limit,
            blind=cfg.blind_validation,
        )

    results = dict(existing)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for task, outcome in zip(tasks, pool.map(lambda t: _trap(run_one, t), tasks)):
            if isinstance(outcome, Exception):
                errors.append({"decision_id": task[0], "validator_id": task[1], "error": str(outcome)})
            else:
                results[task] = outcome

    ordered = [results[key] for key in sorted(results)]
    _write_text(verdicts_path, ensemble.verdicts_to_jsonl(ordered))

    outcomes = []
    by_decision: dict[str, list[ensemble.ValidationVerdict]] = {}
    for v in ordered:
        by_decision.setdefault(v.decision_id, []).append(v)
    for did in sorted(by_decision):
        group = by_decision[did]
        if len(group) == 3 and did in judgements:
            outcomes.append(ensemble.aggregate(judgements[did], group))
    _write_text(out_dir / "outcomes.jsonl", ensemble.outcomes_to_jsonl(outcomes))

    manifest.set_stage(
        "validate",
        {
            "verdicts": len(ordered),
            "outcomes": len(outcomes),
            "errors": sorted(errors, key=lambda e: (e["decision_id"], e["validator_id"])),
        },
        complete=not errors,
    )
    return EXIT_PARTIAL if errors else EXIT_OK


# --- statistics commands -----------------------------------------------------

def _ratings_from_run(out_dir: Path) -> tuple[metrics.RatingsMatrix, int]:
    """Judge + three validators as the four raters; items missing any label are excluded."""
    judgements = judge.judgements_from_jsonl((out_dir / "judgements.jsonl").read_text(encoding="utf-8"))
    verdicts = ensemble.verdicts_from_jsonl((out_dir / "verdicts.jsonl").read_text(encoding="utf-8"))
    judge_ids = sorted({j.model_id for j in judgements})
    validator_ids = sorted({v.validator_id for v in verdicts})
    rater_ids = judge_ids + validator_ids

    by_item: dict[str, dict[str, ComplianceLabel]] = {}
    for j in judgements:
        by_item.setdefault(j.decision_id, {})[j.model_id] = j.label
    for v in verdicts:
        by_item.setdefault(v.decision_id, {})[v.validator_id] = v.label

    item_ids, rows, excluded = [], [], 0
    for did in sorted(by_item):
        labels = by_item[did]
        if all(r in labels for r in rater_ids):
            item_ids.append(did)
            rows.append(tuple(labels[r] for r in rater_ids))
        else:
            excluded += 1
    if not item_ids:
        raise ValueError("no items carry a label from every rater")
    matrix = metrics.RatingsMatrix(tuple(item_ids), tuple(rater_ids), tuple(rows))
    return matrix, excluded


def _ratings_from_csv(path: Path) -> tuple[metrics.RatingsMatrix, int]:
    """CSV with header item_id,<rater>,<rater>,...; one label column per rater."""
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 3:
            raise ValueError("ratings CSV needs an item_id column and at least two rater columns")
        rater_ids = tuple(header[1:])
        item_ids, rows = [], []
        excluded = 0
        for row in reader:
            if not row:
                continue
            try:
                labels = tuple(ComplianceLabel(cell.strip().upper()) for cell in row[1:])
            except ValueError:
                excluded += 1
                continue
            item_ids.append(row[0])
            rows.append(labels)
    return metrics.RatingsMatrix(tuple(item_ids), rater_ids, tuple(rows)), excluded


def cmd_agreement(out_dir: Path, ratings_csv: Path | None) -> int:
    if ratings_csv is not None:
        matrix, excluded = _ratings_from_csv(ratings_csv)
    else:
        matrix, excluded = _ratings_from_run(out_dir)
    report = metrics.fleiss_kappa(matrix)
    payload = reports.agreement_to_dict(report)
    payload["excluded_items"] = excluded
    reports.write_json(payload, _reports_dir(out_dir) / "agreement.json")
    _write_text(_reports_dir(out_dir) / "agreement.md", reports.agreement_markdown(report))
    return EXIT_OK


def _load_predictions(path: Path) -> dict[str, ComplianceLabel]:
    if path.suffix == ".jsonl":
        return {
            j.decision_id: j.label
            for j in judge.judgements_from_jsonl(path.read_text(encoding="utf-8"))
        }
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or not {"decision_id", "label"}.issubset(reader.fieldnames):
            raise ValueError("prediction CSV needs decision_id,label columns")
        return {row["decision_id"]: ComplianceLabel(row["label"].strip().upper()) for row in reader}


def cmd_evaluate(out_dir: Path, truth_path: Path, predictions_path: Path, model_id: str) -> int:
    records, row_errors = metrics.ingest_human_labels(truth_path)
    predictions = _load_predictions(predictions_path)

    truth_labels, predicted_labels = [], []
    missing = 0
    for record in records:
        label = predictions.get(record.decision_id)
        if label is None:
            missing += 1
            continue
        truth_labels.append(record.expert_label)
        predicted_labels.append(label)
    if not truth_labels:
        raise ValueError("no overlap between ground truth and predictions")

    report = metrics.performance(truth_labels, predicted_labels)
    payload = reports.performance_to_dict(report)
    payload["model_id"] = model_id
    payload["evaluated_items"] = len(truth_labels)
    payload["missing_predictions"] = missing
    payload["rejected_truth_rows"] = [
        {"line_number": e.line_number, "message": e.message} for e in row_errors
    ]
    reports.write_json(payload, _reports_dir(out_dir) / "performance.json")
    _write_text(_reports_dir(out_dir) / "performance.md", reports.performance_markdown(report, model_id))
    return EXIT_PARTIAL if row_errors else EXIT_OK


def cmd_sample(out_dir: Path, population_path: Path, confidence: float, margin: float, seed: int) -> int:
    if population_path.suffix == ".jsonl":
        text = population_path.read_text(encoding="utf-8")
        ids = [json.loads(line)["decision_id"] for line in text.splitlines() if line.strip()]
    else:
        ids = [line.strip() for line in population_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not ids:
        raise ValueError(f"population file {population_path} is empty")
    size = metrics.cochran_sample_size(len(ids), confidence, margin)
    plan = metrics.draw_sample(ids, size, seed, confidence, margin)
    reports.write_json(
        {
            "population_size": plan.population_size,
            "confidence": plan.confidence,
            "margin": plan.margin,
            "sample_size": plan.sample_size,
            "seed": plan.seed,
            "sampled_ids": list(plan.sampled_ids),
        },
        _reports_dir(out_dir) / "sample.json",
    )
    return EXIT_OK


def cmd_report(out_dir: Path) -> int:
    sections = ["# Pipeline report", ""]
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        sections += [f"Run id: `{data['run_id']}`", ""]
        adrs = data.get("stages", {}).get("adrs")
        if adrs:
            sections += [
                "## Decision bookkeeping",
                "",
                "| Stage | Count |",
                "|---|---|",
                f"| ADR files considered | {adrs.get('adr_files', 0)} |",
                f"| Parsed (template identified) | {adrs.get('parsed', 0)} |",
                f"| Decisions extracted | {adrs.get('decisions_total', 0)} |",
                f"| Accepted after status gating | {adrs.get('accepted', 0)} |",
                f"| Gated out | {adrs.get('gated_out', 0)} |",
                "",
            ]
    for name in ("agreement.md", "performance.md"):
        path = _reports_dir(out_dir) / name
        if path.exists():
            sections += [path.read_text(encoding="utf-8"), ""]
    sample_path = _reports_dir(out_dir) / "sample.json"
    if sample_path.exists():
        plan = json.loads(sample_path.read_text(encoding="utf-8"))
        sections += [
            "## Human-validation sample",
            "",
            f"Population {plan['population_size']}, confidence {plan['confidence']}, "
            f"margin {plan['margin']}: sample size {plan['sample_size']} (seed {plan['seed']}).",
            "",
        ]
    _write_text(_reports_dir(out_dir) / "report.md", "\n".join(sections))
    return EXIT_OK


def _reports_dir(out_dir: Path) -> Path:
    path = out_dir / "reports"
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adrcheck",
        description="Detect ADR violations with a retrieval-backed judge/validator model ensemble.",
    )
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--out-dir", type=Path, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--resume", action="store_true", help="skip work already persisted")
    parser.add_argument("--mock-providers", action="store_true", help="use the deterministic offline providers")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("scan", "adrs", "index", "judge", "validate"):
        sub.add_parser(name)
    p = sub.add_parser("agreement")
    p.add_argument("--ratings", type=Path, help="ratings CSV (item_id + one column per rater)")
    p = sub.add_parser("evaluate")
    p.add_argument("--truth", type=Path, required=True, help="human labels CSV")
    p.add_argument("--predictions", type=Path, help="judgements JSONL or decision_id,label CSV")
    p.add_argument("--model-id", default="judge")
    p = sub.add_parser("sample")
    p.add_argument("--population-file", type=Path, help="JSONL with decision_id fields, or plain id list")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--margin", type=float, default=0.05)
    sub.add_parser("report")
    return parser


_CONFIG_COMMANDS = {"scan", "adrs", "index", "judge", "validate"}


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command in _CONFIG_COMMANDS:
        if args.config is None:
            raise ConfigError(f"command {args.command!r} requires --config")
        cfg = load_config(
            args.config,
            out_dir=str(args.out_dir) if args.out_dir else None,
            seed=args.seed,
            mock_providers=True if args.mock_providers else None,
        )
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(out_dir, cfg)
        if args.command == "scan":
            return cmd_scan(cfg, out_dir, manifest)
        if args.command == "adrs":
            return cmd_adrs(cfg, out_dir, manifest)
        if args.command == "index":
            return cmd_index(cfg, out_dir, manifest)
        if args.command == "judge":
            return cmd_judge(cfg, out_dir, manifest, resume=args.resume)
        return cmd_validate(cfg, out_dir, manifest, resume=args.resume)

    if args.out_dir is None and args.config is not None:
        args.out_dir = Path(load_config(args.config).out_dir)
    if args.out_dir is None:
        raise ConfigError(f"command {args.command!r} requires --out-dir or --config")
    out_dir = Path(args.out_dir)

    if args.command == "agreement":
        return cmd_agreement(out_dir, args.ratings)
    if args.command == "evaluate":
        predictions = args.predictions or out_dir / "judgements.jsonl"
        return cmd_evaluate(out_dir, args.truth, predictions, args.model_id)
    if args.command == "sample":
        population = args.population_file or out_dir / "decisions.jsonl"
        seed = args.seed if args.seed is not None else 42
        return cmd_sample(out_dir, population, args.confidence, args.margin, seed)
    return cmd_report(out_dir)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
