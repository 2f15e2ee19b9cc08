"""Experiment-matrix orchestration: vocabulary -> index -> retrieval ->
prompting -> generation -> evaluation for every (encoder, generator) pair
declared in one config file.

Stage artifacts are content-addressed: each one carries a stamp recording
the digest of its inputs, and a rerun skips any stage whose stamp still
matches.  Reports and submissions contain no timestamps, so mock-provider
runs are byte-identical end to end.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .embeddings import CachingProvider, MockProvider, RemoteProvider
from .errors import ValidationError, VlcapError
from .evaluation import (
    EvalReport,
    MockJudge,
    build_report,
    load_manual_ratings_csv,
    load_references_csv,
)
from .generation import (
    CaptionGenerator,
    HttpVlmClient,
    MockVlmClient,
    VlmConfig,
    read_submission_csv,
    write_error_sidecar,
    write_submission_csv,
)
from .prompts import PromptTemplate, build_prompt, load_template
from .retrieval import (
    RetrievalConfig,
    batch_retrieve,
    build_index,
    load_index,
    read_retrieval_jsonl,
    save_index,
    write_retrieval_jsonl,
)
from .vocab import (
    build_vocabulary_from_files,
    default_stopwords_path,
    load_vocabulary,
    save_vocabulary,
)

KNOWN_ENCODERS = ("mclip", "araclip", "jina_v4")
KNOWN_GENERATORS = ("gemini_pro_vision", "qwen_vl")

_ENV_RE = re.compile(r"\$\{([A-Z0-9_]+)\}")


@dataclass
class RunConfig:
    images_manifest: Path
    captions: Path
    external_labels: Path
    encoders: list[str]
    generators: list[str]
    output_dir: Path
    cache_dir: Path
    stopwords: Path | None = None
    references: Path | None = None
    manual_ratings: Path | None = None
    template_path: Path | None = None
    k: int = 30
    mock_dim: int = 64
    vocab_params: dict = field(default_factory=lambda: {"min_len": 3, "min_freq": 2, "max_words": 2000})
    evaluation: dict = field(default_factory=lambda: {"enabled": True, "judge": False})
    generation: dict = field(default_factory=dict)

    def template(self) -> PromptTemplate:
        if self.template_path is not None:
            return load_template(self.template_path)
        return PromptTemplate()


def _interp(value):
    if isinstance(value, str):
        def sub(m):
            var = m.group(1)
            if var not in os.environ:
                raise ValidationError(f"config references unset environment variable {var}")
            return os.environ[var]
        return _ENV_RE.sub(sub, value)
    return value


def _is_mock(name: str) -> bool:
    return name.startswith("mock")


def validate_config(path: str | Path) -> RunConfig:
    """Parse and validate the run config, filling defaults."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a mapping")

    def need(key: str) -> str:
        if key not in raw:
            raise ValidationError(f"{path}: missing required field {key!r}")
        return _interp(raw[key])

    base = path.parent

    def as_path(key: str, value, must_exist: bool = True) -> Path:
        p = Path(value)
        if not p.is_absolute():
            p = base / p
        if must_exist and not p.exists():
            raise ValidationError(f"{path}: field {key!r} names a missing path {p}")
        return p

    encoders = list(raw.get("encoders") or [])
    generators = list(raw.get("generators") or [])
    if not encoders:
        raise ValidationError(f"{path}: field 'encoders' must list at least one encoder")
    if not generators:
        raise ValidationError(f"{path}: field 'generators' must list at least one generator")
    for e in encoders:
        if e not in KNOWN_ENCODERS and not _is_mock(e):
            raise ValidationError(f"{path}: field 'encoders' has unknown encoder {e!r}")
    for g in generators:
        if g not in KNOWN_GENERATORS and not _is_mock(g):
            raise ValidationError(f"{path}: field 'generators' has unknown generator {g!r}")

    k = int(raw.get("k", 30))
    if k < 1:
        raise ValidationError(f"{path}: field 'k' must be >= 1")

    vocab_params = {"min_len": 3, "min_freq": 2, "max_words": 2000}
    vocab_params.update(raw.get("vocab") or {})
    evaluation = {"enabled": True, "judge": False}
    evaluation.update(raw.get("evaluation") or {})

    cfg = RunConfig(
        images_manifest=as_path("images_manifest", need("images_manifest")),
        captions=as_path("captions", need("captions")),
        external_labels=as_path("external_labels", need("external_labels")),
        encoders=encoders,
        generators=generators,
        output_dir=as_path("output_dir", need("output_dir"), must_exist=False),
        cache_dir=as_path("cache_dir", raw.get("cache_dir", "cache"), must_exist=False),
        stopwords=as_path("stopwords", _interp(raw["stopwords"])) if raw.get("stopwords") else None,
        references=as_path("references", _interp(raw["references"])) if raw.get("references") else None,
        manual_ratings=as_path("manual_ratings", _interp(raw["manual_ratings"])) if raw.get("manual_ratings") else None,
        template_path=as_path("template", _interp(raw["template"])) if raw.get("template") else None,
        k=k,
        mock_dim=int(raw.get("mock_dim", 64)),
        vocab_params=vocab_params,
        evaluation=evaluation,
        generation=dict(raw.get("generation") or {}),
    )
    if evaluation.get("enabled") and cfg.references is None:
        cfg.evaluation["enabled"] = False
    return cfg


def config_id_for(encoder: str, generator: str, k: int, template_digest: str, metric_settings: dict) -> str:
    """Stable identifier for one configuration; a pure function of its inputs."""
    payload = json.dumps(
        {"encoder": encoder, "generator": generator, "k": k,
         "template": template_digest, "metrics": metric_settings},
        sort_keys=True,
    ).encode("utf-8")
    return f"{encoder}-{generator}-{hashlib.sha256(payload).hexdigest()[:8]}"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _digest(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()


def _stage(artifact: Path, input_digest: str, build) -> bool:
    """Run ``build`` unless the artifact exists with a matching input stamp.

    Returns True when the stage actually ran.
    """
    stamp = artifact.with_name(artifact.name + ".stamp")
    if artifact.exists() and stamp.exists() and stamp.read_text(encoding="utf-8").strip() == input_digest:
        return False
    artifact.parent.mkdir(parents=True, exist_ok=True)
    build()
    stamp.write_text(input_digest, encoding="utf-8")
    return True


def load_images_manifest(path: Path) -> list[tuple[str, Path]]:
    """CSV columns image_id,path; paths resolve relative to the manifest."""
    items = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames or "path" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected columns image_id,path, got {reader.fieldnames}")
        for row in reader:
            p = Path(row["path"])
            if not p.is_absolute():
                p = path.parent / p
            if not p.exists():
                raise ValidationError(f"{path}: image file {p} for id {row['image_id']!r} is missing")
            items.append((row["image_id"], p))
    return items


def _make_embed_provider(name: str, cfg: RunConfig):
    if _is_mock(name):
        inner = MockProvider(name=name, dim=cfg.mock_dim)
    else:
        inner = RemoteProvider(model=name)
    return CachingProvider(inner, cfg.cache_dir)


def _make_vlm(name: str, cfg: RunConfig, config_id: str) -> CaptionGenerator:
    gen_cfg = cfg.generation.get(name, {})
    if _is_mock(name):
        vlm_config = VlmConfig(provider="mock", rate_limit=int(gen_cfg.get("rate_limit", 6000)))
        client = MockVlmClient()
    else:
        vlm_config = VlmConfig(
            provider=name,
            endpoint=_interp(gen_cfg.get("endpoint", "")),
            model_name=gen_cfg.get("model_name", ""),
            api_key_ref=gen_cfg.get(
                "api_key_ref",
                "VLCAP_GEMINI_KEY" if name == "gemini_pro_vision" else "VLCAP_QWEN_KEY",
            ),
            temperature=float(gen_cfg.get("temperature", 0.0)),
            max_output_tokens=int(gen_cfg.get("max_output_tokens", 128)),
            rate_limit=int(gen_cfg.get("rate_limit", 60)),
        )
        client = HttpVlmClient(vlm_config)
    return CaptionGenerator(vlm_config, client, config_id, cache_dir=cfg.cache_dir)


def _make_judge(cfg: RunConfig):
    judge_cfg = cfg.evaluation.get("judge")
    if not judge_cfg:
        return None
    if judge_cfg is True or judge_cfg == "mock" or (isinstance(judge_cfg, dict) and judge_cfg.get("provider") == "mock"):
        responses = ["75"]
        if isinstance(judge_cfg, dict) and judge_cfg.get("responses"):
            responses = [str(r) for r in judge_cfg["responses"]]
        return MockJudge(responses)
    raise ValidationError("only the mock judge is configurable from the run config; "
                          "drive a real judge through the evaluate CLI")


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    configurations: dict[str, dict]
    errors: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_digest": self.config_digest,
                "tool_version": self.tool_version,
                "configurations": self.configurations,
                "errors": self.errors,
            },
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        ) + "\n"


def run_matrix(cfg: RunConfig) -> RunManifest:
    """Execute every (encoder, generator) configuration in the declared matrix.

    A failing configuration is recorded in the manifest and does not abort
    its siblings.
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    template = cfg.template()
    metric_settings = {"unify_ta_marbuta": True, "tfidf_ngram_range": "1-2"}

    stopwords_path = cfg.stopwords or default_stopwords_path()
    vocab_path = out / "vocab.tsv"
    vocab_digest = _digest(
        _sha256_file(cfg.captions),
        _sha256_file(cfg.external_labels),
        _sha256_file(stopwords_path),
        json.dumps(cfg.vocab_params, sort_keys=True),
    )
    _stage(vocab_path, vocab_digest, lambda: save_vocabulary(
        build_vocabulary_from_files(
            cfg.captions, cfg.external_labels, stopwords_path, **cfg.vocab_params
        ),
        vocab_path,
    ))

    images = load_images_manifest(cfg.images_manifest)
    images_digest = _digest(*[f"{i}:{_sha256_file(p)}" for i, p in images])

    manifest = RunManifest(
        config_digest=_digest(vocab_digest, images_digest, json.dumps(
            {"encoders": cfg.encoders, "generators": cfg.generators, "k": cfg.k}, sort_keys=True)),
        tool_version=__version__,
        configurations={},
    )

    retrieval_paths: dict[str, tuple[Path, str]] = {}
    for encoder in cfg.encoders:
        try:
            provider = _make_embed_provider(encoder, cfg)
            index_path = out / "indexes" / f"{encoder}.vlem"
            index_digest = _digest(vocab_digest, encoder, str(cfg.mock_dim))

            def build_index_stage():
                vocab = load_vocabulary(vocab_path)
                save_index(build_index(vocab, provider), index_path)

            _stage(index_path, index_digest, build_index_stage)

            retrieval_path = out / "retrieval" / f"{encoder}.jsonl"
            retrieval_digest = _digest(index_digest, images_digest, str(cfg.k))

            def build_retrieval_stage():
                index = load_index(index_path)
                pairs = [(i, provider.embed_image(p.read_bytes())) for i, p in images]
                results = batch_retrieve(index, pairs, RetrievalConfig(cfg.k))
                write_retrieval_jsonl(results, index.encoder, cfg.k, retrieval_path)

            _stage(retrieval_path, retrieval_digest, build_retrieval_stage)
            retrieval_paths[encoder] = (retrieval_path, retrieval_digest)
        except VlcapError as exc:
            for generator in cfg.generators:
                manifest.errors[f"{encoder}-{generator}"] = str(exc)

    references = load_references_csv(cfg.references) if cfg.references else None
    ratings = load_manual_ratings_csv(cfg.manual_ratings) if cfg.manual_ratings else None
    image_bytes = {i: p.read_bytes() for i, p in images}

    for encoder in cfg.encoders:
        if encoder not in retrieval_paths:
            continue
        retrieval_path, retrieval_digest = retrieval_paths[encoder]
        for generator in cfg.generators:
            cid = config_id_for(encoder, generator, cfg.k, template.digest(), metric_settings)
            cfg_dir = out / cid
            try:
                generator_obj = _make_vlm(generator, cfg, cid)
                submission_path = cfg_dir / "submission.csv"
                errors_path = cfg_dir / "errors.jsonl"
                submission_digest = _digest(retrieval_digest, generator, template.digest())

                def build_caption_stage():
                    retrieved = read_retrieval_jsonl(retrieval_path)
                    items = [
                        (image_id, image_bytes[image_id], build_prompt(results, template))
                        for image_id, results in retrieved.items()
                    ]
                    records, failures = generator_obj.generate_all(items)
                    write_submission_csv(records, submission_path)
                    write_error_sidecar(failures, errors_path)

                _stage(submission_path, submission_digest, build_caption_stage)

                artifacts = {
                    "index": str(out / "indexes" / f"{encoder}.vlem"),
                    "retrieval": str(retrieval_path),
                    "submission": str(submission_path),
                }

                if cfg.evaluation.get("enabled") and references is not None:
                    report_path = cfg_dir / "report.json"
                    report_digest = _digest(
                        submission_digest,
                        _sha256_file(cfg.references),
                        json.dumps(metric_settings, sort_keys=True),
                        str(bool(cfg.evaluation.get("judge"))),
                    )

                    def build_report_stage():
                        candidates = read_submission_csv(submission_path)
                        report = build_report(
                            cid,
                            candidates,
                            references,
                            judge_client=_make_judge(cfg),
                            ratings=ratings,
                            cache_dir=cfg.cache_dir,
                        )
                        report_path.write_text(report.to_json(), encoding="utf-8")

                    _stage(report_path, report_digest, build_report_stage)
                    artifacts["report"] = str(report_path)

                manifest.configurations[cid] = {
                    "encoder": encoder,
                    "generator": generator,
                    "artifacts": {
                        name: {"path": p, "sha256": _sha256_file(Path(p))}
                        for name, p in artifacts.items()
                    },
                    "timestamp": time.time(),
                }
            except VlcapError as exc:
                manifest.errors[f"{encoder}-{generator}"] = str(exc)

    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# Comparison rendering

_COLUMNS = (
    ("bleu1_mean_x100", "BLEU-1"),
    ("tfidf_cosine_mean_x100", "Cosine"),
    ("llm_judge_mean", "Judge"),
)


def render_comparison(reports: list[EvalReport]) -> str:
    """One row per configuration; the best value per column is starred.

    Ties star every report sharing the best value.  Mixed metric settings
    across reports add a warning line to the output.
    """
    if not reports:
        raise ValidationError("render_comparison needs at least one report")
    lines = []
    settings = {json.dumps(r.metadata, sort_keys=True) for r in reports}
    if len(settings) > 1:
        lines.append("WARNING: reports use mixed metric settings; values may not be comparable")
    best: dict[str, float] = {}
    for key, _ in _COLUMNS:
        values = [r.aggregates[key] for r in reports if key in r.aggregates]
        if values:
            best[key] = max(values)
    header = f"{'configuration':<40}" + "".join(f"{label:>12}" for _, label in _COLUMNS)
    lines.append(header)
    lines.append("-" * len(header))
    for r in reports:
        cells = []
        for key, _ in _COLUMNS:
            if key not in r.aggregates:
                cells.append(f"{'-':>12}")
                continue
            value = r.aggregates[key]
            mark = "*" if key in best and value == best[key] else " "
            cells.append(f"{value:>11.2f}{mark}")
        lines.append(f"{r.config_id:<40}" + "".join(cells))
    return "\n".join(lines) + "\n"


def rank_leaderboard(scores: dict[str, float]) -> list[tuple[str, float]]:
    """Sort (participant, score) descending; ties keep insertion order."""
    return sorted(scores.items(), key=lambda kv: -kv[1])
