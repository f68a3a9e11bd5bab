"""Operator command line: build indexes, trim them, query, evaluate, compare.

One JSON config file drives every command; ``--set key.path=value`` overrides
individual entries (values parse as JSON where possible, else as strings).
Relative paths inside the config resolve against the config file's directory.

Commands
--------
build-index   embed any unembedded corpus rows, build the index, save it
trim          run a query stream through the trimmer, persist cuts/witnesses
query         print ranked contexts for one question, one per line
eval          run the QA pipeline and write a report file
report        merge eval reports: JSON object on stdout, aligned table on stderr

Exit codes: 0 success, 1 judge/generator endpoint unavailable, 2 input error,
3 corrupt index artifact. Failures print a single machine-readable JSON line
``{"error": NAME, "message": ...}`` to stderr. Index and witness-store writes
take an exclusive ``flock`` on a ``.lock`` sidecar so concurrent commands
cannot interleave writes.
"""
from __future__ import annotations

import argparse
import copy
import fcntl
import hashlib
import json
import os
import sys
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import index as index_io
from .embedding import EmbedderSpec, embed_corpus, embed_text
from .errors import (
    CditError,
    CorpusNotFound,
    CorruptIndex,
    IoError,
    JudgeUnavailable,
    MalformedRecord,
    RemoteUnavailable,
    TrimAborted,
    UnsupportedRuleSet,
)
from .harness import PipelineConfig, run_pipeline
from .index import HnswParams, IndexConfig, IvfParams
from .judge import RemoteJudge, RuleJudge
from .model import load_corpus, load_qa_dataset
from .rules import DEFAULT_LEXICON, RULES_BY_NAME, CMDRule, Lexicon, load_lexicon
from .trimmer import (
    QueryCache,
    WitnessStore,
    load_query_cache,
    load_witness_store,
    run_trim,
    save_query_cache,
    save_witness_store,
)

_DEFAULTS: dict[str, Any] = {
    "dataset": "",
    "rules": ["phi1"],
    "paths": {
        "corpus": None,
        "qa": None,
        "queries": None,
        "index": None,
        "witness_store": None,
        "query_cache": None,
        "lexicon": None,
        "report": None,
    },
    "embedder": {
        "kind": "hashed-bag",
        "dim": 64,
        "seed": 0,
        "endpoint": None,
        "parallelism": 4,
    },
    "index": {
        "kind": "flat-l2",
        "seed": 0,
        "hnsw": {"M": 16, "ef_construction": 200, "ef_search": 64},
        "ivf": {"nlist": 1, "nprobe": 1, "kmeans_iters": 10, "seed": 0},
    },
    "trim": {"threshold": 3, "sim_threshold": 0.9, "pairing": "as-written"},
    "judge": {"kind": "rule", "endpoint": None, "timeout": 30.0, "parallelism": 4},
    "pipeline": {
        "k": 10,
        "generator": "echo",
        "rewrite_enabled": False,
        "trim_enabled": False,
        "max_new_tokens": 100,
    },
}


def _merge_config(base: dict, override: dict, trail: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        full = f"{trail}{key}"
        if key not in base:
            raise MalformedRecord(f"unknown config key: {full!r}")
        if isinstance(base[key], dict) and base[key]:
            if not isinstance(value, dict):
                raise MalformedRecord(f"config key {full!r} must be an object")
            out[key] = _merge_config(base[key], value, f"{full}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_override(cfg: dict, spec: str) -> None:
    key, sep, raw = spec.partition("=")
    if not sep or not key:
        raise MalformedRecord(f"--set expects KEY=VALUE, got {spec!r}")
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise MalformedRecord(f"unknown config key: {key!r}")
        node = node[part]
    if parts[-1] not in node:
        raise MalformedRecord(f"unknown config key: {key!r}")
    node[parts[-1]] = value


@dataclass
class RunConfig:
    """Fully resolved configuration for one command invocation."""

    raw: dict
    base_dir: Path
    paths: dict[str, Path | None]
    embedder: EmbedderSpec
    index_config: IndexConfig
    trim_threshold: int
    sim_threshold: float
    pairing: str
    rules: tuple[CMDRule, ...]
    judge_spec: dict
    pipeline: dict
    dataset: str

    def lexicon(self) -> Lexicon:
        path = self.paths["lexicon"]
        if path is None:
            return DEFAULT_LEXICON
        if not path.exists():
            raise IoError(f"lexicon path does not exist: {path}")
        return load_lexicon(path)

    def make_judge(self):
        if self.judge_spec["kind"] == "rule":
            return RuleJudge(self.lexicon())
        return RemoteJudge(
            self.judge_spec["endpoint"],
            timeout=self.judge_spec["timeout"],
            parallelism=self.judge_spec["parallelism"],
        )

    def require(self, name: str) -> Path:
        path = self.paths[name]
        if path is None:
            raise MalformedRecord(f"config is missing paths.{name}")
        if not path.exists():
            if name == "corpus":
                raise CorpusNotFound(f"corpus path does not exist: {path}")
            raise IoError(f"paths.{name} does not exist: {path}")
        return path

    def out_path(self, name: str) -> Path:
        path = self.paths[name]
        if path is None:
            raise MalformedRecord(f"config is missing paths.{name}")
        return path


def load_run_config(config_path: str, overrides: Sequence[str]) -> RunConfig:
    try:
        raw_text = Path(config_path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config {config_path}: {e}") from e
    try:
        user = json.loads(raw_text)
    except ValueError as e:
        raise MalformedRecord(f"config is not valid JSON: {e}") from e
    if not isinstance(user, dict):
        raise MalformedRecord("config root must be a JSON object")
    cfg = _merge_config(_DEFAULTS, user)
    for spec in overrides:
        _apply_override(cfg, spec)

    base_dir = Path(config_path).resolve().parent
    paths: dict[str, Path | None] = {}
    for name, value in cfg["paths"].items():
        if value is None:
            paths[name] = None
        elif isinstance(value, str):
            p = Path(value)
            paths[name] = p if p.is_absolute() else base_dir / p
        else:
            raise MalformedRecord(f"paths.{name} must be a string or null")

    e = cfg["embedder"]
    i = cfg["index"]
    t = cfg["trim"]
    j = cfg["judge"]
    p = cfg["pipeline"]
    try:
        embedder = EmbedderSpec(
            kind=e["kind"],
            dim=e["dim"],
            seed=e["seed"],
            endpoint=e["endpoint"],
            parallelism=e["parallelism"],
        )
        index_config = IndexConfig(
            kind=i["kind"],
            dim=embedder.dim,
            seed=i["seed"],
            hnsw=HnswParams(
                M=i["hnsw"]["M"],
                ef_construction=i["hnsw"]["ef_construction"],
                ef_search=i["hnsw"]["ef_search"],
            ),
            ivf=IvfParams(
                nlist=i["ivf"]["nlist"],
                nprobe=i["ivf"]["nprobe"],
                kmeans_iters=i["ivf"]["kmeans_iters"],
                seed=i["ivf"]["seed"],
            ),
        )
    except TypeError as exc:
        raise MalformedRecord(f"invalid config value: {exc}") from exc
    if not isinstance(t["threshold"], int) or t["threshold"] < 1:
        raise MalformedRecord("trim.threshold must be a positive integer")
    if not isinstance(t["sim_threshold"], (int, float)) or not 0 < t["sim_threshold"] <= 1:
        raise MalformedRecord("trim.sim_threshold must be in (0, 1]")
    if j["kind"] not in ("rule", "remote"):
        raise MalformedRecord(f"unknown judge kind: {j['kind']!r}")
    if j["kind"] == "remote" and not j["endpoint"]:
        raise MalformedRecord("judge.kind \"remote\" requires judge.endpoint")
    if not isinstance(cfg["rules"], list):
        raise MalformedRecord("rules must be a list of rule names")
    rules = []
    for name in cfg["rules"]:
        if name not in RULES_BY_NAME:
            raise UnsupportedRuleSet(f"unknown rule: {name!r}")
        rules.append(RULES_BY_NAME[name])
    return RunConfig(
        raw=cfg,
        base_dir=base_dir,
        paths=paths,
        embedder=embedder,
        index_config=index_config,
        trim_threshold=t["threshold"],
        sim_threshold=float(t["sim_threshold"]),
        pairing=t["pairing"],
        rules=tuple(rules),
        judge_spec=j,
        pipeline=p,
        dataset=cfg["dataset"],
    )


@contextmanager
def _file_lock(path: Path):
    """Exclusive advisory lock on a sidecar file next to the artifact."""
    lock_path = Path(str(path) + ".lock")
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def _blob_sha1(path: Path) -> str:
    """Git-style content hash: sha1 over "blob <len>\\0" + bytes."""
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return hashlib.sha1(b"blob %d\x00" % len(data) + data).hexdigest()


def _input_hashes(cfg: RunConfig, names: Sequence[str]) -> dict[str, str]:
    out = {}
    for name in names:
        path = cfg.paths[name]
        if path is not None and path.exists():
            out[name] = _blob_sha1(path)
    return out


def _write_json(path: Path, obj: dict) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _load_stores(cfg: RunConfig) -> tuple[WitnessStore, QueryCache]:
    store_path = cfg.paths["witness_store"]
    cache_path = cfg.paths["query_cache"]
    if store_path is not None and store_path.exists():
        store = load_witness_store(store_path, cfg.trim_threshold)
    else:
        store = WitnessStore(cfg.trim_threshold)
    if cache_path is not None and cache_path.exists():
        cache = load_query_cache(cache_path, cfg.sim_threshold)
    else:
        cache = QueryCache(cfg.sim_threshold)
    return store, cache


def _save_stores(cfg: RunConfig, store: WitnessStore, cache: QueryCache) -> None:
    if cfg.paths["witness_store"] is not None:
        save_witness_store(store, cfg.paths["witness_store"])
    if cfg.paths["query_cache"] is not None:
        save_query_cache(cache, cfg.paths["query_cache"])


def _cmd_build_index(cfg: RunConfig) -> int:
    corpus = load_corpus(cfg.require("corpus"))
    corpus = embed_corpus(cfg.embedder, corpus)
    index = index_io.build(cfg.index_config, corpus)
    out = cfg.out_path("index")
    with _file_lock(out):
        index_io.save(index, out)
    print(
        json.dumps(
            {
                "command": "build-index",
                "index": str(out),
                "kind": index.kind,
                "dim": cfg.index_config.dim,
                "count": len(index.ids),
                "seeds": {"embedder": cfg.embedder.seed, "index": cfg.index_config.seed},
            }
        )
    )
    return 0


def _cmd_trim(cfg: RunConfig) -> int:
    corpus = load_corpus(cfg.require("corpus"))
    queries = load_corpus(cfg.require("queries"))
    index_path = cfg.require("index")
    hashes = _input_hashes(cfg, ("corpus", "queries", "index", "witness_store", "query_cache"))
    store_path = cfg.paths["witness_store"]
    with ExitStack() as stack:
        stack.enter_context(_file_lock(index_path))
        if store_path is not None:
            stack.enter_context(_file_lock(store_path))
        index = index_io.load(index_path)
        store, cache = _load_stores(cfg)
        queries = embed_corpus(cfg.embedder, queries)
        judge = cfg.make_judge()
        index, report = run_trim(
            index,
            corpus,
            queries,
            cfg.rules,
            judge,
            store,
            cache,
            cfg.pipeline["k"],
            cfg.pairing,
        )
        index_io.save(index, index_path)
        _save_stores(cfg, store, cache)
    payload = report.to_dict()
    payload["cuts"] = [
        {"lo": p.lo, "hi": p.hi, "count": store.counts[p]} for p in report.cut_pairs
    ]
    payload["config"] = cfg.raw
    payload["input_hashes"] = hashes
    payload["command"] = "trim"
    report_path = cfg.paths["report"]
    if report_path is not None:
        _write_json(report_path, payload)
    print(
        json.dumps(
            {
                "command": "trim",
                "judged": report.judged,
                "skipped": report.skipped,
                "cuts": len(report.cut_pairs),
                "report": str(report_path) if report_path else None,
            }
        )
    )
    return 0


def _cmd_query(cfg: RunConfig, question: str, k: int | None) -> int:
    corpus = load_corpus(cfg.require("corpus"))
    index = index_io.load(cfg.require("index"))
    by_id = {s.id: s for s in corpus}
    vec = embed_text(cfg.embedder, question)
    result = index.search(vec, k if k is not None else cfg.pipeline["k"])
    for sid, dist in result.hits:
        text = by_id[sid].text if sid in by_id else ""
        print(f"{sid}\t{dist:.6f}\t{text}")
    return 0


def _cmd_eval(cfg: RunConfig) -> int:
    corpus = load_corpus(cfg.require("corpus"))
    qa = load_qa_dataset(cfg.require("qa"))
    index_path = cfg.require("index")
    hashes = _input_hashes(cfg, ("corpus", "qa", "index", "witness_store", "query_cache"))
    pipeline = PipelineConfig(
        embedder=cfg.embedder,
        judge=cfg.make_judge(),
        rules=cfg.rules,
        k=cfg.pipeline["k"],
        generator=cfg.pipeline["generator"],
        rewrite_enabled=cfg.pipeline["rewrite_enabled"],
        trim_enabled=cfg.pipeline["trim_enabled"],
        max_new_tokens=cfg.pipeline["max_new_tokens"],
        pairing=cfg.pairing,
    )
    trimming = pipeline.trim_enabled
    store_path = cfg.paths["witness_store"]
    with ExitStack() as stack:
        if trimming:
            stack.enter_context(_file_lock(index_path))
            if store_path is not None:
                stack.enter_context(_file_lock(store_path))
        index = index_io.load(index_path)
        store, cache = _load_stores(cfg)
        report = run_pipeline(
            pipeline, index, corpus, qa, store=store, cache=cache, dataset=cfg.dataset
        )
        if trimming:
            index_io.save(index, index_path)
            _save_stores(cfg, store, cache)
    payload = report.to_dict()
    payload["config"] = cfg.raw
    payload["input_hashes"] = hashes
    payload["command"] = "eval"
    report_path = cfg.paths["report"]
    if report_path is not None:
        _write_json(report_path, payload)
    print(
        json.dumps(
            {
                "command": "eval",
                "accuracy": report.accuracy,
                "correct": report.correct,
                "total": report.total,
                "cuts": len(report.cut_pairs),
                "report": str(report_path) if report_path else None,
            }
        )
    )
    return 0


_REPORT_KEYS = ("dataset", "index_kind", "k", "trim_enabled", "accuracy")


def _cmd_report(paths: Sequence[str], out: str | None) -> int:
    reports = []
    for raw_path in paths:
        path = Path(raw_path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read {path}: {e}") from e
        except ValueError as e:
            raise MalformedRecord(f"{path}: not valid JSON: {e}") from e
        missing = [key for key in _REPORT_KEYS if key not in obj]
        if missing:
            raise MalformedRecord(f"{path}: not an eval report (missing {missing})")
        reports.append(obj)

    grouped: dict[tuple, dict] = {}
    for obj in reports:
        key = (obj["dataset"], obj["index_kind"], obj["k"])
        row = grouped.setdefault(
            key,
            {
                "dataset": obj["dataset"],
                "index_kind": obj["index_kind"],
                "k": obj["k"],
                "baseline_accuracy": None,
                "cdit_accuracy": None,
                "delta": None,
            },
        )
        side = "cdit_accuracy" if obj["trim_enabled"] else "baseline_accuracy"
        row[side] = obj["accuracy"]
    for row in grouped.values():
        if row["baseline_accuracy"] is not None and row["cdit_accuracy"] is not None:
            row["delta"] = row["cdit_accuracy"] - row["baseline_accuracy"]
    rows = [grouped[key] for key in sorted(grouped)]
    merged = {"rows": rows, "reports": reports}

    def fmt(v, sign=""):
        return "-" if v is None else f"{v:{sign}.4f}"

    headers = ("dataset", "index", "k", "baseline", "cdit", "delta")
    cells = [headers]
    for row in rows:
        cells.append(
            (
                row["dataset"] or "-",
                row["index_kind"],
                str(row["k"]),
                fmt(row["baseline_accuracy"]),
                fmt(row["cdit_accuracy"]),
                fmt(row["delta"], sign="+"),
            )
        )
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    for r in cells:
        line = "  ".join(val.ljust(widths[c]) for c, val in enumerate(r)).rstrip()
        print(line, file=sys.stderr)

    text = json.dumps(merged, indent=2)
    print(text)
    if out is not None:
        _write_json(Path(out), merged)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdit",
        description="Trimmable vector search with consistency-judged retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help_text: str):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY=VALUE",
            help="override a config entry (dotted path; value parsed as JSON)",
        )
        return sp

    with_config("build-index", "embed the corpus if needed and build the index")
    with_config("trim", "run a query stream through the trimmer and persist cuts")
    qp = with_config("query", "print ranked contexts for one question")
    qp.add_argument("question", help="question text")
    qp.add_argument("-k", "--top-k", type=int, default=None, dest="k")
    with_config("eval", "run the QA pipeline and write an eval report")
    rp = sub.add_parser("report", help="merge eval reports into a comparison table")
    rp.add_argument("paths", nargs="+", help="eval report JSON files")
    rp.add_argument("--out", default=None, help="also write the merged JSON here")
    return parser


def _exit_code(e: CditError) -> int:
    if isinstance(e, TrimAborted) and isinstance(e.cause, CditError):
        return _exit_code(e.cause)
    if isinstance(e, (RemoteUnavailable, JudgeUnavailable)):
        return 1
    if isinstance(e, CorruptIndex):
        return 3
    return 2


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(args.paths, args.out)
        cfg = load_run_config(args.config, args.overrides)
        if args.command == "build-index":
            return _cmd_build_index(cfg)
        if args.command == "trim":
            return _cmd_trim(cfg)
        if args.command == "query":
            return _cmd_query(cfg, args.question, args.k)
        return _cmd_eval(cfg)
    except CditError as e:
        print(
            json.dumps({"error": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
