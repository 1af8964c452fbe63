"""Stage orchestration.

Each stage reads the previous stage's outputs from the work directory and
writes its own into a directory named after it::

    ingest/    per-type CSV files, manifest.json, selected.csv
    store/     metadata.sqlite
    harvest/   pdf/*.pdf, manifest.jsonl
    extract/   tei/*.tei.xml, manifest.jsonl
    convert/   json/*.json, manifest.jsonl
    match/     results.jsonl
    export/    dataset.jsonl, stats.json, stats.txt

Stages whose inputs have not changed since their last successful run are
skipped; harvest and extract skip per item instead.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Optional

from . import corpus
from .export import compute_stats, export_jsonl
from .extraction import (
    OK as EXTRACT_OK,
    ExtractionRequest,
    ServicePolicy,
    UNPARSEABLE_PDF,
    ServiceUnavailable,
    extract_batch,
)
from .harvest import OK as HARVEST_OK
from .harvest import SKIPPED_EXISTING, HarvestPolicy, harvest, read_manifest, write_manifest
from .matcher import InvariantViolation, MatchResult, build_citation_record, check_results, match_document
from .store import MetadataStore, StoreError
from .tei import ExtractedDocument, TeiConversionError, convert, safe_key

logger = logging.getLogger(__name__)

STAGES = ("ingest", "load-store", "harvest", "extract", "convert", "match", "export")
ENV_PREFIX = "NODOIREFS_"

EXIT_OK, EXIT_FAILED, EXIT_MISSING, EXIT_INVARIANT = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class StageError(Exception):
    exit_code = EXIT_FAILED


class MissingPrerequisite(StageError):
    exit_code = EXIT_MISSING


class InvariantFailure(StageError):
    exit_code = EXIT_INVARIANT


@dataclass
class PipelineConfig:
    workdir: Path
    corpus_path: Optional[Path] = None
    extraction_endpoint: str = "http://localhost:8070"
    consolidate_citations: bool = False
    concurrency: int = 4
    strict: bool = False
    citing_types: tuple[str, ...] = ("inproceedings",)
    proxy: Optional[str] = None
    harvest_policy: HarvestPolicy = field(default_factory=HarvestPolicy)
    service_policy: ServicePolicy = field(default_factory=ServicePolicy)

    def __post_init__(self):
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    @property
    def proxies(self) -> Optional[dict]:
        return {"http": self.proxy, "https": self.proxy} if self.proxy else None

    def snapshot(self) -> dict:
        return {
            "workdir": str(self.workdir),
            "corpus_path": str(self.corpus_path) if self.corpus_path else None,
            "extraction_endpoint": self.extraction_endpoint,
            "consolidate_citations": self.consolidate_citations,
            "concurrency": self.concurrency,
            "strict": self.strict,
            "citing_types": list(self.citing_types),
            "proxy": self.proxy,
            "harvest": {f.name: getattr(self.harvest_policy, f.name) for f in fields(HarvestPolicy)},
            "service": {f.name: getattr(self.service_policy, f.name) for f in fields(ServicePolicy)},
        }


# --- configuration ------------------------------------------------------------

def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _types(value: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in value.split(",") if t.strip())


_TOP_KEYS: dict[str, Callable[[str], object]] = {
    "workdir": Path,
    "corpus_path": Path,
    "extraction_endpoint": str,
    "consolidate_citations": _bool,
    "concurrency": int,
    "strict": _bool,
    "citing_types": _types,
    "proxy": str,
}
_CONVERTERS = {int: int, float: float, str: str}


def _policy_converter(policy_cls, name: str) -> Callable[[str], object]:
    kind = type(getattr(policy_cls(), name))
    return _CONVERTERS[kind]


def read_config_file(path: os.PathLike | str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def env_overrides(environ: Mapping[str, str]) -> dict[str, str]:
    """``NODOIREFS_HARVEST__RETRIES=5`` -> ``{"harvest.retries": "5"}``."""
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            out[name[len(ENV_PREFIX):].lower().replace("__", ".")] = value
    return out


def build_config(
    file_values: Mapping[str, str] = (),
    env_values: Mapping[str, str] = (),
    flag_values: Mapping[str, object] = (),
) -> PipelineConfig:
    """Layer defaults < config file < environment < command-line flags."""
    merged: dict[str, object] = {}
    for layer in (dict(file_values), dict(env_values)):
        merged.update(layer)
    merged.update({k: v for k, v in dict(flag_values).items() if v is not None})

    top: dict[str, object] = {}
    harvest_kw: dict[str, object] = {}
    service_kw: dict[str, object] = {}
    for key, value in merged.items():
        if key.startswith("harvest."):
            name = key.split(".", 1)[1]
            if name not in {f.name for f in fields(HarvestPolicy)}:
                raise ConfigError(f"unknown setting {key!r}")
            harvest_kw[name] = _policy_converter(HarvestPolicy, name)(value) if isinstance(value, str) else value
        elif key.startswith("service."):
            name = key.split(".", 1)[1]
            if name not in {f.name for f in fields(ServicePolicy)}:
                raise ConfigError(f"unknown setting {key!r}")
            service_kw[name] = _policy_converter(ServicePolicy, name)(value) if isinstance(value, str) else value
        elif key in _TOP_KEYS:
            top[key] = _TOP_KEYS[key](value) if isinstance(value, str) else value
        else:
            raise ConfigError(f"unknown setting {key!r}")

    if "workdir" not in top:
        raise ConfigError("workdir is required")
    try:
        return PipelineConfig(
            **top,
            harvest_policy=HarvestPolicy(**harvest_kw),
            service_policy=ServicePolicy(**service_kw),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(
    path: Optional[os.PathLike | str] = None,
    flags: Mapping[str, object] = (),
    environ: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    """Read the optional config file, then apply environment and flag overrides.

    Relative paths in the file are taken relative to the file itself; those
    from the environment or flags relative to the current directory.
    """
    file_values = read_config_file(path) if path else {}
    if path:
        base = Path(path).resolve().parent
        for key in ("workdir", "corpus_path"):
            if key in file_values and not Path(file_values[key]).is_absolute():
                file_values[key] = str(base / file_values[key])
    env_values = env_overrides(os.environ if environ is None else environ)
    return build_config(file_values, env_values, flags)


# --- helpers ------------------------------------------------------------------

@dataclass
class StageReport:
    stage: str
    status: str  # "done" | "skipped"
    counts: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        detail = ", ".join(f"{k}={v}" for k, v in self.counts.items())
        return f"{self.stage:<10} {self.status:<8} {self.seconds:6.2f}s  {detail}".rstrip()


def sha256_file(path: os.PathLike | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fingerprint(paths: list[Path], extra: object = None) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(str(p.name).encode())
        h.update(sha256_file(p).encode() if p.exists() else b"-")
    h.update(json.dumps(extra, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.workdir / stage


def _marker(cfg: PipelineConfig, stage: str) -> Path:
    return _stage_dir(cfg, stage) / "stage.json"


def _is_current(cfg: PipelineConfig, stage: str, fingerprint: str, outputs: list[Path]) -> Optional[dict]:
    marker = _marker(cfg, stage)
    if not marker.exists() or not all(p.exists() for p in outputs):
        return None
    state = json.loads(marker.read_text())
    return state if state.get("fingerprint") == fingerprint else None


def _mark_done(cfg: PipelineConfig, stage: str, fingerprint: str, counts: dict) -> None:
    marker = _marker(cfg, stage)
    marker.write_text(json.dumps({"fingerprint": fingerprint, "counts": counts}, indent=2, sort_keys=True) + "\n")


def _require(path: Path, stage: str, hint: str) -> None:
    if not path.exists():
        raise MissingPrerequisite(f"{stage}: {path} not found; run the '{hint}' stage first")


def _write_jsonl(path: Path, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
    os.replace(tmp, path)


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --- stages -------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig) -> StageReport:
    if cfg.corpus_path is None or not Path(cfg.corpus_path).exists():
        raise MissingPrerequisite(f"ingest: corpus file {cfg.corpus_path} not found")
    out = _stage_dir(cfg, "ingest")
    fp = _fingerprint([Path(cfg.corpus_path)], {"citing_types": list(cfg.citing_types)})
    state = _is_current(cfg, "ingest", fp, [out / "manifest.json", out / "selected.csv"])
    if state:
        return StageReport("ingest", "skipped", state["counts"])

    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("*.csv"):
        stale.unlink()
    try:
        files = corpus.split_by_type(corpus.parse_dblp_file(cfg.corpus_path), out)
    except corpus.IngestError as exc:
        raise StageError(f"ingest: {exc}; partial files: {[str(p) for p in exc.partial_files]}") from exc
    manifest = json.loads((out / "manifest.json").read_text())

    def citing():
        for pub_type in cfg.citing_types:
            if pub_type in files:
                yield from corpus.read_split_file(files[pub_type])

    selected = corpus.write_records_csv(corpus.select_oa_nodoi(citing()), out / "selected.csv")
    counts = {"records": sum(v["rows"] for v in manifest.values()), "types": len(manifest), "selected": selected}
    _mark_done(cfg, "ingest", fp, counts)
    return StageReport("ingest", "done", counts)


def stage_load_store(cfg: PipelineConfig) -> StageReport:
    ingest = _stage_dir(cfg, "ingest")
    _require(ingest / "manifest.json", "load-store", "ingest")
    manifest = json.loads((ingest / "manifest.json").read_text())
    paths = [ingest / entry["file"] for _, entry in sorted(manifest.items())]
    db = _stage_dir(cfg, "store") / "metadata.sqlite"
    fp = _fingerprint([ingest / "manifest.json", *paths])
    state = _is_current(cfg, "store", fp, [db])
    if state:
        return StageReport("load-store", "skipped", state["counts"])

    db.parent.mkdir(parents=True, exist_ok=True)
    if db.exists():
        db.unlink()
    try:
        with MetadataStore(db) as store:
            for path in paths:
                store.upsert_many(corpus.read_split_file(path))
            counts = {"records": store.record_count}
    except StoreError as exc:
        raise StageError(f"load-store: {exc}") from exc
    _mark_done(cfg, "store", fp, counts)
    return StageReport("load-store", "done", counts)


def stage_harvest(cfg: PipelineConfig) -> StageReport:
    selected = _stage_dir(cfg, "ingest") / "selected.csv"
    _require(selected, "harvest", "ingest")
    out = _stage_dir(cfg, "harvest")
    manifest_path = out / "manifest.jsonl"
    previous = read_manifest(manifest_path) if manifest_path.exists() else []
    policy = replace(cfg.harvest_policy)
    entries = harvest(
        corpus.read_split_file(selected), out / "pdf", policy, proxies=cfg.proxies, previous=previous
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(entries, manifest_path)
    except OSError as exc:
        raise StageError(f"harvest: cannot write manifest: {exc}") from exc
    counts: dict[str, int] = {}
    for entry in entries:
        counts[entry.status] = counts.get(entry.status, 0) + 1
    return StageReport("harvest", "done", dict(sorted(counts.items())))


def stage_extract(cfg: PipelineConfig) -> StageReport:
    harvest_manifest = _stage_dir(cfg, "harvest") / "manifest.jsonl"
    _require(harvest_manifest, "extract", "harvest")
    out = _stage_dir(cfg, "extract")
    tei_dir = out / "tei"
    tei_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    prior = {row["key"]: row for row in _read_jsonl(manifest_path)} if manifest_path.exists() else {}

    pdfs = {e.key: Path(e.local_path) for e in read_manifest(harvest_manifest) if e.status in (HARVEST_OK, SKIPPED_EXISTING)}
    rows: dict[str, dict] = {}
    todo: list[ExtractionRequest] = []
    for key, pdf in sorted(pdfs.items()):
        tei_path = tei_dir / f"{safe_key(key)}.tei.xml"
        old = prior.get(key)
        # ok and unparseable are final answers; only service errors are worth resubmitting
        if (
            old is not None
            and old["consolidate_citations"] == cfg.consolidate_citations
            and old["pdf_path"] == str(pdf)
            and ((old["status"] == EXTRACT_OK and tei_path.exists()) or old["status"] == UNPARSEABLE_PDF)
        ):
            rows[key] = old
            continue
        try:
            todo.append(ExtractionRequest(key, pdf, cfg.consolidate_citations))
        except ValueError as exc:
            logger.warning("%s", exc)
            rows[key] = {"key": key, "pdf_path": str(pdf), "tei_path": None, "status": UNPARSEABLE_PDF,
                         "consolidate_citations": cfg.consolidate_citations, "duration": 0}

    if todo:
        try:
            results = extract_batch(
                cfg.extraction_endpoint,
                todo,
                cfg.service_policy,
                concurrency=cfg.concurrency,
                proxies=cfg.proxies,
            )
        except ServiceUnavailable as exc:
            raise StageError(f"extract: {exc}") from exc
        for result in results:
            tei_path = tei_dir / f"{safe_key(result.key)}.tei.xml"
            if result.service_status == EXTRACT_OK:
                tei_path.write_bytes(result.tei_xml.encode("utf-8"))
            elif tei_path.exists():
                tei_path.unlink()
            rows[result.key] = {
                "key": result.key,
                "pdf_path": str(pdfs[result.key]),
                "tei_path": str(tei_path) if result.service_status == EXTRACT_OK else None,
                "status": result.service_status,
                "consolidate_citations": cfg.consolidate_citations,
                "duration": result.duration,
            }
    ordered = [rows[k] for k in sorted(rows)]
    _write_jsonl(manifest_path, ordered)
    counts = {"submitted": len(todo), "reused": len(rows) - len(todo)}
    for row in ordered:
        counts[row["status"]] = counts.get(row["status"], 0) + 1
    return StageReport("extract", "done", counts)


def stage_convert(cfg: PipelineConfig) -> StageReport:
    extract_manifest = _stage_dir(cfg, "extract") / "manifest.jsonl"
    _require(extract_manifest, "convert", "extract")
    rows = [r for r in _read_jsonl(extract_manifest) if r["status"] == EXTRACT_OK]
    teis = [Path(r["tei_path"]) for r in rows]
    out = _stage_dir(cfg, "convert")
    manifest_path = out / "manifest.jsonl"
    fp = _fingerprint([extract_manifest, *teis])
    state = _is_current(cfg, "convert", fp, [manifest_path])
    if state:
        return StageReport("convert", "skipped", state["counts"])

    json_dir = out / "json"
    json_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for row, tei in zip(rows, teis):
        key = row["key"]
        try:
            doc = convert(key, tei.read_bytes())
        except TeiConversionError as exc:
            logger.warning("%s", exc)
            entries.append({"key": key, "json_path": None, "status": "failed", "error": str(exc)})
            continue
        path = json_dir / f"{safe_key(key)}.json"
        path.write_text(doc.to_json() + "\n", encoding="utf-8")
        entries.append({"key": key, "json_path": str(path), "status": "ok", "references": len(doc.references)})
    _write_jsonl(manifest_path, entries)
    counts = {
        "documents": sum(e["status"] == "ok" for e in entries),
        "failed": sum(e["status"] != "ok" for e in entries),
        "references": sum(e.get("references", 0) for e in entries),
    }
    _mark_done(cfg, "convert", fp, counts)
    return StageReport("convert", "done", counts)


def stage_match(cfg: PipelineConfig) -> StageReport:
    convert_manifest = _stage_dir(cfg, "convert") / "manifest.jsonl"
    _require(convert_manifest, "match", "convert")
    db = _stage_dir(cfg, "store") / "metadata.sqlite"
    _require(db, "match", "load-store")
    entries = sorted((e for e in _read_jsonl(convert_manifest) if e["status"] == "ok"), key=lambda e: e["key"])
    docs_paths = [Path(e["json_path"]) for e in entries]
    out = _stage_dir(cfg, "match")
    results_path = out / "results.jsonl"
    fp = _fingerprint([convert_manifest, db, *docs_paths], {"strict": cfg.strict})
    state = _is_current(cfg, "match", fp, [results_path])
    if state:
        return StageReport("match", "skipped", state["counts"])

    out.mkdir(parents=True, exist_ok=True)
    docs = [ExtractedDocument.from_json(p.read_text(encoding="utf-8")) for p in docs_paths]
    with MetadataStore(db, read_only=True) as store:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            matched = list(pool.map(lambda d: match_document(d, store), docs))
    problems = []
    for results in matched:
        try:
            problems += check_results(results, strict=cfg.strict)
        except InvariantViolation as exc:
            raise InvariantFailure(f"match: {exc}") from exc
    _write_jsonl(
        results_path,
        ({"key": doc.key, "results": [r.to_dict() for r in results]} for doc, results in zip(docs, matched)),
    )
    counts = {"documents": len(docs), "references": sum(len(r) for r in matched)}
    for results in matched:
        for r in results:
            counts[r.kind] = counts.get(r.kind, 0) + 1
    if problems:
        counts["invariant_warnings"] = len(problems)
    _mark_done(cfg, "match", fp, counts)
    return StageReport("match", "done", counts)


def stage_export(cfg: PipelineConfig) -> StageReport:
    results_path = _stage_dir(cfg, "match") / "results.jsonl"
    _require(results_path, "export", "match")
    out = _stage_dir(cfg, "export")
    dataset = out / "dataset.jsonl"
    fp = _fingerprint([results_path])
    state = _is_current(cfg, "export", fp, [dataset, out / "stats.json", out / "stats.txt"])
    if state:
        return StageReport("export", "skipped", state["counts"])

    out.mkdir(parents=True, exist_ok=True)
    per_doc = sorted(
        ((row["key"], [MatchResult.from_dict(r) for r in row["results"]]) for row in _read_jsonl(results_path)),
        key=lambda item: item[0],
    )
    records = [rec for key, results in per_doc if (rec := build_citation_record(key, results)) is not None]
    violations = [v for rec in records for v in rec.violations()]
    stats = compute_stats(per_doc)
    violations += stats.problems()

    tmp = dataset.with_name(dataset.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        lines = export_jsonl(records, fh)
    os.replace(tmp, dataset)
    (out / "stats.json").write_text(stats.to_json(), encoding="utf-8")
    (out / "stats.txt").write_text(stats.to_table(), encoding="utf-8")
    counts = {"lines": lines, "documents": stats.files_parsed, "references": stats.references_evaluated}
    if violations:
        if cfg.strict:
            raise InvariantFailure("export: " + "; ".join(violations))
        for v in violations:
            logger.warning("export: %s", v)
        counts["invariant_warnings"] = len(violations)
    _mark_done(cfg, "export", fp, counts)
    return StageReport("export", "done", counts)


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "load-store": stage_load_store,
    "harvest": stage_harvest,
    "extract": stage_extract,
    "convert": stage_convert,
    "match": stage_match,
    "export": stage_export,
}


def _write_run_manifest(cfg: PipelineConfig, stage: str, reports: list[StageReport], exit_code: int, error: str) -> None:
    checksums = {}
    for name in ("ingest/manifest.json", "ingest/selected.csv", "harvest/manifest.jsonl", "extract/manifest.jsonl",
                 "convert/manifest.jsonl", "match/results.jsonl", "export/dataset.jsonl", "export/stats.json"):
        path = cfg.workdir / name
        if path.exists():
            checksums[name] = sha256_file(path)
    manifest = {
        "requested_stage": stage,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "exit_code": exit_code,
        "error": error or None,
        "config": cfg.snapshot(),
        "stages": [{"stage": r.stage, "status": r.status, "counts": r.counts} for r in reports],
        "checksums": checksums,
    }
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    (cfg.workdir / "run-manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def run(stage: str, cfg: PipelineConfig) -> tuple[int, list[StageReport], str]:
    """Run one stage, or every stage in order for ``all``.

    Returns (exit code, stage reports, error message). Exit codes: 0 ok,
    1 stage failure, 2 missing prerequisite, 3 invariant violation.
    """
    if stage != "all" and stage not in _STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}")
    order = STAGES if stage == "all" else (stage,)
    reports: list[StageReport] = []
    exit_code, error = EXIT_OK, ""
    for name in order:
        started = time.monotonic()
        try:
            report = _STAGE_FUNCS[name](cfg)
        except StageError as exc:
            exit_code, error = exc.exit_code, str(exc)
            logger.error("%s", exc)
            break
        report.seconds = time.monotonic() - started
        reports.append(report)
    _write_run_manifest(cfg, stage, reports, exit_code, error)
    return exit_code, reports, error
