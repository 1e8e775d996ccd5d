"""Experiment orchestration: configs, score caching, zero/few-shot runs, grids."""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .assets import default_catalog, default_templates, default_verbalizers
from .corpus import (
    Dataset,
    SplitAssignment,
    label_distribution,
    load_catalog,
    load_dataset,
    save_split,
    stratified_split,
)
from .embeddings import EmbeddingMatrix, fetch_embeddings, load_embeddings
from .ensembling import combine_distributions, predict_label, softmax_normalize
from .evaluation import EvaluationReport, evaluate_predictions, report_to_dict, save_report
from .prompting import Template, render_prompt
from .sampling import allocate_counts, sample_active, sample_random, save_selection
from .scoring import (
    BackendConfig,
    BackendError,
    CandidateScores,
    LogitServerBackend,
    TrainingPair,
    build_backend,
    toy_fit,
)
from .verbalizing import LabelDistribution, Verbalizer, aggregate_scores

DEFAULT_SEED = 144
DEFAULT_RATIOS = (0.50, 0.25, 0.25)
ENSEMBLE_KEY = ".*"

PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
STATUS_FILE = "status.json"
SELECTION_FILE = "selection.json"
SPLIT_FILE = "split.json"
PROMPTS_FILE = "prompts.jsonl"
GRID_RESULTS_FILE = "grid_results.json"
GRID_REPORT_FILE = "grid_report.md"
MODEL_STATE_FILE = "toy_state.json"


class ConfigError(ValueError):
    pass


class RunnerError(RuntimeError):
    pass


class LeakageError(RunnerError):
    """A validation or test record was about to enter training."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    output_dir: str
    catalog: str | None = None
    template_ids: tuple[str, ...] = ("1",)
    verbalizer_ids: tuple[str, ...] = ("1",)
    backend: BackendConfig = field(default_factory=lambda: BackendConfig(kind="mock"))
    strategy: str = "random"
    proportion: float = 0.05
    seed: int = DEFAULT_SEED
    split_ratios: tuple[float, float, float] = DEFAULT_RATIOS
    embeddings_path: str | None = None
    embeddings_endpoint: str | None = None
    max_chars: int | None = None
    workers: int = 4
    template_file: str | None = None
    verbalizer_file: str | None = None
    cache_dir: str | None = None
    active_metric: str = "euclidean"

    def __post_init__(self):
        if not self.dataset:
            raise ConfigError("config needs a dataset path")
        if not self.output_dir:
            raise ConfigError("config needs an output directory")
        if not self.template_ids:
            raise ConfigError("at least one template id required")
        if not self.verbalizer_ids:
            raise ConfigError("at least one verbalizer id required")
        if len(set(self.template_ids)) != len(self.template_ids):
            raise ConfigError("duplicate template ids")
        if len(set(self.verbalizer_ids)) != len(self.verbalizer_ids):
            raise ConfigError("duplicate verbalizer ids")
        if self.strategy not in ("random", "active"):
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}")
        if not 0 < self.proportion <= 1:
            raise ConfigError(f"sampling proportion must be in (0, 1], got {self.proportion!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_chars is not None and self.max_chars < 1:
            raise ConfigError("max_chars must be positive when set")


def config_from_dict(raw: Mapping, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from parsed JSON. Relative paths resolve against base_dir."""

    def _path(value):
        if value is None or value == "":
            return None
        p = Path(value)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return str(p)

    known = {
        "dataset", "catalog", "output_dir", "templates", "verbalizers", "backend",
        "sampling", "seed", "split_ratios", "embeddings", "max_chars", "workers",
        "template_file", "verbalizer_file", "cache_dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")

    sampling = raw.get("sampling", {})
    if not isinstance(sampling, Mapping):
        raise ConfigError("sampling must be an object")
    backend_raw = raw.get("backend", {"kind": "mock"})
    if not isinstance(backend_raw, Mapping) or "kind" not in backend_raw:
        raise ConfigError("backend must be an object with a kind field")
    try:
        backend = BackendConfig(
            kind=str(backend_raw["kind"]),
            endpoint=backend_raw.get("endpoint"),
            model=backend_raw.get("model"),
            timeout=float(backend_raw.get("timeout", 10.0)),
            max_retries=int(backend_raw.get("max_retries", 3)),
            backoff_base=float(backend_raw.get("backoff_base", 0.5)),
            max_concurrency=int(backend_raw.get("max_concurrency", 4)),
            alpha=float(backend_raw.get("alpha", 1.0)),
            state_path=_path(backend_raw.get("state_path")),
        )
    except BackendError as exc:
        raise ConfigError(str(exc)) from None

    embeddings = raw.get("embeddings")
    embeddings_path = embeddings_endpoint = None
    if isinstance(embeddings, str):
        embeddings_path = _path(embeddings)
    elif isinstance(embeddings, Mapping):
        embeddings_endpoint = embeddings.get("endpoint")
        if not embeddings_endpoint:
            raise ConfigError("embeddings object needs an endpoint field")
    elif embeddings is not None:
        raise ConfigError("embeddings must be a file path or an object with an endpoint")

    ratios = raw.get("split_ratios", list(DEFAULT_RATIOS))
    if len(ratios) != 3:
        raise ConfigError("split_ratios must have exactly three entries")

    try:
        return ExperimentConfig(
            dataset=_path(raw.get("dataset", "")) or "",
            catalog=_path(raw.get("catalog")),
            output_dir=_path(raw.get("output_dir", "")) or "",
            template_ids=tuple(str(t) for t in raw.get("templates", ["1"])),
            verbalizer_ids=tuple(str(v) for v in raw.get("verbalizers", ["1"])),
            backend=backend,
            strategy=str(sampling.get("strategy", "random")),
            proportion=float(sampling.get("proportion", 0.05)),
            seed=int(raw.get("seed", DEFAULT_SEED)),
            split_ratios=tuple(float(r) for r in ratios),
            embeddings_path=embeddings_path,
            embeddings_endpoint=embeddings_endpoint,
            max_chars=raw.get("max_chars"),
            workers=int(raw.get("workers", 4)),
            template_file=_path(raw.get("template_file")),
            verbalizer_file=_path(raw.get("verbalizer_file")),
            cache_dir=_path(raw.get("cache_dir")),
            active_metric=str(sampling.get("metric", "euclidean")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(raw, base_dir=path.parent)


@dataclass
class Workspace:
    """Config with every referenced piece loaded and validated."""

    config: ExperimentConfig
    catalog: object
    dataset: Dataset
    templates: list[Template]
    verbalizers: list[Verbalizer]
    split: SplitAssignment

    def subset_records(self, name: str):
        ids = self.split.subset(name)
        return [r for r in self.dataset.records if r.id in ids]


def load_workspace(config: ExperimentConfig) -> Workspace:
    """Load dataset and components, then compute the split. Fails before any
    backend traffic when the config is inconsistent."""
    try:
        catalog = load_catalog(config.catalog) if config.catalog else default_catalog()
    except FileNotFoundError:
        raise ConfigError(f"catalog file not found: {config.catalog}") from None
    try:
        dataset = load_dataset(config.dataset, catalog)
    except FileNotFoundError:
        raise ConfigError(f"dataset file not found: {config.dataset}") from None

    if config.template_file:
        from .prompting import load_templates

        all_templates = load_templates(config.template_file)
    else:
        all_templates = default_templates(catalog)
    if config.verbalizer_file:
        from .verbalizing import load_verbalizers

        all_verbalizers = load_verbalizers(config.verbalizer_file, len(catalog))
    else:
        all_verbalizers = default_verbalizers(catalog)

    missing_t = [t for t in config.template_ids if t not in all_templates]
    if missing_t:
        raise ConfigError(f"unknown template ids: {missing_t}")
    missing_v = [v for v in config.verbalizer_ids if v not in all_verbalizers]
    if missing_v:
        raise ConfigError(f"unknown verbalizer ids: {missing_v}")

    if config.backend.kind == "chat" and len(config.template_ids) != 1:
        raise ConfigError("chat backend runs use exactly one template")
    if config.strategy == "active" and not (config.embeddings_path or config.embeddings_endpoint):
        raise ConfigError("active sampling requires an embeddings source")

    split = stratified_split(dataset, config.split_ratios, config.seed)
    return Workspace(
        config=config,
        catalog=catalog,
        dataset=dataset,
        templates=[all_templates[t] for t in config.template_ids],
        verbalizers=[all_verbalizers[v] for v in config.verbalizer_ids],
        split=split,
    )


def candidate_union(verbalizers: Sequence[Verbalizer]) -> tuple[str, ...]:
    """Ordered distinct words across verbalizers; one scoring call covers all."""
    seen: dict[str, None] = {}
    for verbalizer in verbalizers:
        for word in verbalizer.all_words():
            seen.setdefault(word)
    return tuple(seen)


class ScoreCache:
    """Scores keyed by (backend id, template id, record id, candidate digest).

    Concurrent reads are lock-free dict lookups; writers take the lock. With a
    directory attached, entries persist as one file per (backend, template).
    """

    def __init__(self, directory=None):
        self._entries: dict[tuple[str, str, str, str], CandidateScores] = {}
        self._lock = threading.Lock()
        self._dir = Path(directory) if directory else None
        if self._dir and self._dir.is_dir():
            for path in sorted(self._dir.glob("*.json")):
                self._load_file(path)

    @staticmethod
    def digest(candidates: Sequence[str]) -> str:
        payload = "\n".join(candidates).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def get(self, backend_id, template_id, record_id, digest) -> CandidateScores | None:
        return self._entries.get((backend_id, template_id, record_id, digest))

    def put(self, backend_id, template_id, record_id, digest, scores: CandidateScores) -> None:
        with self._lock:
            self._entries[(backend_id, template_id, record_id, digest)] = scores

    def __len__(self) -> int:
        return len(self._entries)

    def _load_file(self, path: Path) -> None:
        raw = json.loads(path.read_text(encoding="utf-8"))
        backend_id, template_id = raw["backend_id"], raw["template_id"]
        for record_id, by_digest in raw["entries"].items():
            for digest, entry in by_digest.items():
                scores = CandidateScores(tuple(entry["candidates"]), tuple(entry["scores"]))
                self._entries[(backend_id, template_id, record_id, digest)] = scores

    def flush(self) -> None:
        if not self._dir:
            return
        self._dir.mkdir(parents=True, exist_ok=True)
        grouped: dict[tuple[str, str], dict] = {}
        with self._lock:
            items = list(self._entries.items())
        for (backend_id, template_id, record_id, digest), scores in items:
            bucket = grouped.setdefault((backend_id, template_id), {})
            bucket.setdefault(record_id, {})[digest] = {
                "candidates": list(scores.candidates),
                "scores": list(scores.scores),
            }
        for (backend_id, template_id), entries in grouped.items():
            tag = hashlib.sha256(f"{backend_id}\n{template_id}".encode("utf-8")).hexdigest()[:12]
            payload = {"backend_id": backend_id, "template_id": template_id, "entries": entries}
            path = self._dir / f"scores_{tag}.json"
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def score_template(
    backend,
    template: Template,
    records,
    candidates: tuple[str, ...],
    cache: ScoreCache | None,
    max_chars: int | None,
    workers: int,
) -> dict[str, CandidateScores]:
    """Score every record under one template, via cache where possible.

    Results keep record order. On backend failure the records scored so far
    are returned inside the raised error (partial_scores attribute).
    """
    digest = ScoreCache.digest(candidates)

    def task(record):
        if cache is not None:
            hit = cache.get(backend.backend_id, template.id, record.id, digest)
            if hit is not None:
                return record.id, hit
        prompt = render_prompt(template, record, max_chars)
        scores = backend.score_candidates(prompt, candidates)
        if cache is not None:
            cache.put(backend.backend_id, template.id, record.id, digest, scores)
        return record.id, scores

    out: dict[str, CandidateScores] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, record) for record in records]
        for future in futures:
            try:
                record_id, scores = future.result()
            except BackendError as exc:
                for remaining in futures:
                    remaining.cancel()
                exc.partial_scores = out  # type: ignore[attr-defined]
                raise
            out[record_id] = scores
    return out


def member_distributions(
    scores_by_record: Mapping[str, CandidateScores], verbalizer: Verbalizer
) -> dict[str, LabelDistribution]:
    """Per-record label distribution for one (template, verbalizer) member."""
    out = {}
    for record_id, scores in scores_by_record.items():
        probs = softmax_normalize(scores.scores)
        word_probs = dict(zip(scores.candidates, probs.probs))
        out[record_id] = aggregate_scores(word_probs, verbalizer)
    return out


def _ensure_out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_predictions(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_status(out: Path, complete: bool, error: str | None = None) -> None:
    payload = {"complete": complete, "error": error}
    (out / STATUS_FILE).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _prediction_rows(records, preds) -> list[dict]:
    return [
        {"id": r.id, "pred": p, "gold": r.label, "parse_failure": p is None}
        for r, p in zip(records, preds)
    ]


def _abort_run(out: Path, records, preds, exc: BackendError) -> RunnerError:
    # flush whatever finished, mark the run incomplete, then surface the error
    _write_predictions(out / PREDICTIONS_FILE, _prediction_rows(records[: len(preds)], preds))
    _write_status(out, complete=False, error=str(exc))
    return RunnerError(f"backend failure after {len(preds)} records: {exc}")


def ensemble_predictions(
    ws: Workspace, backend, records, cache: ScoreCache | None
) -> tuple[list[int], dict[tuple[str, str], dict[str, LabelDistribution]]]:
    """Predictions for the ensemble of every configured (template, verbalizer).

    Also returns each member's per-record distributions keyed by
    (template_id, verbalizer_id) so grid callers can reuse them.
    """
    candidates = candidate_union(ws.verbalizers)
    members: dict[tuple[str, str], dict[str, LabelDistribution]] = {}
    for template in ws.templates:
        scores = score_template(
            backend, template, records, candidates, cache, ws.config.max_chars, ws.config.workers
        )
        for verbalizer in ws.verbalizers:
            members[(template.id, verbalizer.id)] = member_distributions(scores, verbalizer)
    preds = []
    for record in records:
        dists = [members[key][record.id] for key in members]
        preds.append(predict_label(combine_distributions(dists)))
    return preds, members


def run_zero_shot(config: ExperimentConfig, subset: str = "test") -> EvaluationReport:
    """Classify one split subset with the configured backend; no training.

    Writes predictions.jsonl, report.json and status.json to the output
    directory. Chat backends ask for an index per record; scoring backends go
    through the verbalizer ensemble.
    """
    ws = load_workspace(config)
    records = ws.subset_records(subset)
    if not records:
        raise RunnerError(f"subset {subset!r} has no records")
    out = _ensure_out_dir(config)
    backend = build_backend(config.backend)
    if backend is None:
        raise ConfigError("toy backend needs a state_path for zero-shot classification")
    cache = ScoreCache(config.cache_dir) if config.backend.kind != "chat" else None

    if config.backend.kind == "chat":
        preds: list[int | None] = []
        template = ws.templates[0]
        try:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [
                    pool.submit(
                        lambda r: backend.classify(
                            render_prompt(template, r, config.max_chars), ws.catalog
                        ),
                        record,
                    )
                    for record in records
                ]
                for future in futures:
                    preds.append(future.result())
        except BackendError as exc:
            raise _abort_run(out, records, preds, exc) from exc
    else:
        try:
            preds, _ = ensemble_predictions(ws, backend, records, cache)
        except BackendError as exc:
            if cache is not None:
                cache.flush()  # partial scores are still worth keeping
            raise _abort_run(out, records, [], exc) from exc

    if cache is not None:
        cache.flush()
    gold = [r.label for r in records]
    report = evaluate_predictions(preds, gold, len(ws.catalog))
    _write_predictions(out / PREDICTIONS_FILE, _prediction_rows(records, preds))
    save_report(report, out / REPORT_FILE)
    _write_status(out, complete=True)
    return report


def select_few_shot(ws: Workspace) -> tuple[set[str], dict]:
    """Sample training records from train_dev per the configured strategy."""
    config = ws.config
    train_records = ws.subset_records("train_dev")
    train_ds = Dataset(ws.catalog, tuple(train_records))
    counts = {k: v for k, v in label_distribution(train_ds).items() if v > 0}
    plan = allocate_counts(counts, config.proportion)
    provenance = {
        "strategy": config.strategy,
        "proportion": config.proportion,
        "seed": config.seed,
        "metric": config.active_metric if config.strategy == "active" else None,
    }
    if config.strategy == "random":
        selected = sample_random(train_ds, plan, config.seed)
    else:
        embeddings = _load_active_embeddings(ws, train_records)
        selected = sample_active(train_ds, embeddings, plan, config.active_metric)
    return selected, provenance


def _load_active_embeddings(ws: Workspace, train_records) -> EmbeddingMatrix:
    config = ws.config
    if config.embeddings_path:
        try:
            matrix = load_embeddings(config.embeddings_path)
        except FileNotFoundError:
            raise ConfigError(f"embeddings file not found: {config.embeddings_path}") from None
        # active selection must only ever see train_dev vectors
        rows = {r.id: matrix.vector(r.id) for r in train_records}
        return EmbeddingMatrix(matrix.dim, rows)
    client = LogitServerBackend(
        replace(config.backend, kind="logit-server", endpoint=config.embeddings_endpoint)
    )
    return fetch_embeddings(client, train_records)


def build_training_pairs(ws: Workspace, selected_ids) -> list[TrainingPair]:
    """One pair per configured template per gold-label word of each sampled record.

    Refuses to build pairs for any record outside train_dev: sampling bugs
    must not silently leak evaluation data into training.
    """
    forbidden = ws.split.validation | ws.split.test
    ordered = [r for r in ws.dataset.records if r.id in set(selected_ids)]
    pairs: list[TrainingPair] = []
    for record in ordered:
        if record.id in forbidden:
            raise LeakageError(f"record {record.id!r} is not in train_dev")
        words: dict[str, None] = {}
        for verbalizer in ws.verbalizers:
            for word in verbalizer.words_for(record.label):
                words.setdefault(word)
        for template in ws.templates:
            rendered = render_prompt(template, record, ws.config.max_chars)
            for word in words:
                pairs.append(TrainingPair(rendered.text, word))
    return pairs


def run_few_shot(config: ExperimentConfig, subset: str = "test") -> EvaluationReport:
    """Sample, fit the toy backend, then evaluate on the given subset."""
    if config.backend.kind != "toy":
        raise ConfigError(f"few-shot training requires the toy backend, got {config.backend.kind!r}")
    ws = load_workspace(config)
    records = ws.subset_records(subset)
    if not records:
        raise RunnerError(f"subset {subset!r} has no records")
    out = _ensure_out_dir(config)

    selected, provenance = select_few_shot(ws)
    pairs = build_training_pairs(ws, selected)
    backend = toy_fit(pairs, config.backend.alpha)
    backend.save(out / MODEL_STATE_FILE)
    save_selection(out / SELECTION_FILE, selected, provenance)

    cache = ScoreCache(config.cache_dir)
    try:
        preds, _ = ensemble_predictions(ws, backend, records, cache)
    except BackendError as exc:
        raise _abort_run(out, records, [], exc) from exc
    cache.flush()
    gold = [r.label for r in records]
    report = evaluate_predictions(preds, gold, len(ws.catalog))
    _write_predictions(out / PREDICTIONS_FILE, _prediction_rows(records, preds))
    save_report(report, out / REPORT_FILE)
    _write_status(out, complete=True)
    return report


def run_grid(config: ExperimentConfig, subset: str = "test") -> dict[tuple[str, str], EvaluationReport]:
    """Evaluate every member, each row/column ensemble, and the full ensemble.

    Keys are (template_id, verbalizer_id) with ".*" marking ensemble rows and
    columns. Writes grid_results.json and grid_report.md.
    """
    if config.backend.kind == "chat":
        raise ConfigError("grid evaluation needs a scoring backend, not chat")
    ws = load_workspace(config)
    records = ws.subset_records(subset)
    if not records:
        raise RunnerError(f"subset {subset!r} has no records")
    out = _ensure_out_dir(config)

    if config.backend.kind == "toy" and not config.backend.state_path:
        selected, provenance = select_few_shot(ws)
        pairs = build_training_pairs(ws, selected)
        backend = toy_fit(pairs, config.backend.alpha)
        backend.save(out / MODEL_STATE_FILE)
        save_selection(out / SELECTION_FILE, selected, provenance)
    else:
        backend = build_backend(config.backend)

    cache = ScoreCache(config.cache_dir)
    try:
        _, members = ensemble_predictions(ws, backend, records, cache)
    except BackendError as exc:
        raise _abort_run(out, records, [], exc) from exc
    cache.flush()

    gold = [r.label for r in records]
    n_labels = len(ws.catalog)

    def evaluate(dist_maps: list[dict[str, LabelDistribution]]) -> EvaluationReport:
        preds = []
        for record in records:
            dists = [m[record.id] for m in dist_maps]
            preds.append(predict_label(combine_distributions(dists)))
        return evaluate_predictions(preds, gold, n_labels)

    results: dict[tuple[str, str], EvaluationReport] = {}
    for t in config.template_ids:
        for v in config.verbalizer_ids:
            results[(t, v)] = evaluate([members[(t, v)]])
    for t in config.template_ids:
        results[(t, ENSEMBLE_KEY)] = evaluate([members[(t, v)] for v in config.verbalizer_ids])
    for v in config.verbalizer_ids:
        results[(ENSEMBLE_KEY, v)] = evaluate([members[(t, v)] for t in config.template_ids])
    results[(ENSEMBLE_KEY, ENSEMBLE_KEY)] = evaluate(list(members.values()))

    payload = {f"{t}|{v}": report_to_dict(rep) for (t, v), rep in results.items()}
    (out / GRID_RESULTS_FILE).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    markdown, warnings = render_grid_report(
        results, config.template_ids, config.verbalizer_ids
    )
    (out / GRID_REPORT_FILE).write_text(markdown, encoding="utf-8")
    _write_status(out, complete=True)
    if warnings:
        raise RunnerError(f"grid evaluation left gaps: {warnings}")
    return results


def render_grid_report(
    results: Mapping[tuple[str, str], EvaluationReport],
    template_ids: Sequence[str],
    verbalizer_ids: Sequence[str],
) -> tuple[str, list[str]]:
    """Markdown grid: one row per template, one column per verbalizer, the
    ".*" ensemble row/column last. Cells show "accuracy / macro-F1" as
    percentages with two decimals; ensemble cells are emphasized. Missing
    cells render as an em-dash placeholder and produce a warning.
    """
    row_keys = list(template_ids) + [ENSEMBLE_KEY]
    col_keys = list(verbalizer_ids) + [ENSEMBLE_KEY]
    warnings: list[str] = []
    lines = [
        "| template \\ verbalizer | " + " | ".join(col_keys) + " |",
        "|" + " --- |" * (len(col_keys) + 1),
    ]
    for t in row_keys:
        cells = []
        for v in col_keys:
            report = results.get((t, v))
            if report is None:
                warnings.append(f"missing result for template {t}, verbalizer {v}")
                cells.append("—")
                continue
            text = f"{report.accuracy * 100:.2f} / {report.macro_f1 * 100:.2f}"
            if t == ENSEMBLE_KEY or v == ENSEMBLE_KEY:
                text = f"**{text}**"
            cells.append(text)
        lines.append(f"| {t} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n", warnings


def run_split(config: ExperimentConfig) -> SplitAssignment:
    """Compute and persist the stratified split."""
    ws = load_workspace(config)
    out = _ensure_out_dir(config)
    save_split(ws.split, out / SPLIT_FILE)
    return ws.split


def run_sample(config: ExperimentConfig) -> set[str]:
    """Sample few-shot training ids from train_dev and persist them."""
    ws = load_workspace(config)
    out = _ensure_out_dir(config)
    selected, provenance = select_few_shot(ws)
    save_selection(out / SELECTION_FILE, selected, provenance)
    return selected


def run_render(config: ExperimentConfig, subset: str | None = None) -> int:
    """Render prompts for a subset (or the whole dataset) through every
    configured template; returns the number of prompts written."""
    ws = load_workspace(config)
    out = _ensure_out_dir(config)
    records = ws.subset_records(subset) if subset else list(ws.dataset.records)
    count = 0
    with open(out / PROMPTS_FILE, "w", encoding="utf-8") as fh:
        for template in ws.templates:
            for record in records:
                prompt = render_prompt(template, record, config.max_chars)
                fh.write(
                    json.dumps(
                        {
                            "id": prompt.record_id,
                            "template_id": prompt.template_id,
                            "text": prompt.text,
                            "truncated": prompt.truncated,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
                count += 1
    return count
