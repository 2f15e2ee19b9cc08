"""Command-line interface.

Exit codes for ``vlcap run``: 0 success, 1 validation failure, 2 partial
configuration failure, 3 total failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .embeddings import CachingProvider, MockProvider, RemoteProvider
from .errors import ValidationError, VlcapError
from .evaluation import EvalReport, MockJudge, build_report, load_manual_ratings_csv, load_references_csv
from .generation import read_submission_csv
from .prompts import PromptTemplate, load_template
from .retrieval import RetrievalConfig, batch_retrieve, build_index, load_index, save_index, write_retrieval_jsonl
from .runner import load_images_manifest, render_comparison, run_matrix, validate_config
from .vocab import build_vocabulary_from_files, load_vocabulary, save_vocabulary


def _provider(encoder: str, dim: int, cache_dir: str | None):
    if encoder.startswith("mock"):
        inner = MockProvider(name=encoder, dim=dim)
    else:
        inner = RemoteProvider(model=encoder)
    if cache_dir:
        return CachingProvider(inner, cache_dir)
    return inner


@click.group()
def main():
    """Two-stage Arabic image captioning pipeline and evaluation harness."""


@main.command("build-vocab")
@click.option("--captions", required=True, type=click.Path(exists=True))
@click.option("--external", required=True, type=click.Path(exists=True))
@click.option("--stopwords", type=click.Path(exists=True), default=None)
@click.option("--min-len", type=int, default=3, show_default=True)
@click.option("--min-freq", type=int, default=2, show_default=True)
@click.option("--max-words", type=int, default=2000, show_default=True)
@click.option("--out", required=True, type=click.Path())
def build_vocab_cmd(captions, external, stopwords, min_len, min_freq, max_words, out):
    """Build the Arabic visual-label vocabulary file."""
    vocab = build_vocabulary_from_files(
        captions, external, stopwords, min_len=min_len, min_freq=min_freq, max_words=max_words
    )
    save_vocabulary(vocab, out)
    click.echo(f"wrote {len(vocab)} labels to {out}")


@main.command("embed-labels")
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", required=True)
@click.option("--dim", type=int, default=64, show_default=True, help="Dimension for mock encoders.")
@click.option("--cache-dir", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def embed_labels_cmd(vocab_path, encoder, dim, cache_dir, out):
    """Embed every vocabulary label and write the index file."""
    vocab = load_vocabulary(vocab_path)
    index = build_index(vocab, _provider(encoder, dim, cache_dir))
    save_index(index, out)
    click.echo(f"wrote {len(index)}-row index ({index.encoder.name}, dim {index.encoder.dim}) to {out}")


@main.command("retrieve")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--images", required=True, type=click.Path(exists=True), help="Images manifest CSV (image_id,path).")
@click.option("--k", type=int, default=30, show_default=True)
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--cache-dir", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def retrieve_cmd(index_path, images, k, dim, cache_dir, out):
    """Rank vocabulary labels for each image and write retrieval JSONL."""
    index = load_index(index_path)
    provider = _provider(index.encoder.name, dim, cache_dir)
    pairs = [(i, provider.embed_image(p.read_bytes())) for i, p in load_images_manifest(Path(images))]
    results = batch_retrieve(index, pairs, RetrievalConfig(k))
    write_retrieval_jsonl(results, index.encoder, k, out)
    click.echo(f"wrote retrieval results for {len(results)} images to {out}")


@main.command("caption")
@click.option("--retrieval", "retrieval_path", required=True, type=click.Path(exists=True))
@click.option("--images", required=True, type=click.Path(exists=True))
@click.option("--generator", default="mock", show_default=True)
@click.option("--template", "template_path", default=None, type=click.Path(exists=True))
@click.option("--cache-dir", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def caption_cmd(retrieval_path, images, generator, template_path, cache_dir, out):
    """Generate captions from retrieval results and write the submission CSV."""
    from .generation import CaptionGenerator, MockVlmClient, VlmConfig, write_error_sidecar, write_submission_csv
    from .retrieval import read_retrieval_jsonl
    from .prompts import build_prompt

    if not generator.startswith("mock"):
        raise click.ClickException("real generators run through `vlcap run` with a config file")
    template = load_template(template_path) if template_path else PromptTemplate()
    image_paths = dict(load_images_manifest(Path(images)))
    retrieved = read_retrieval_jsonl(retrieval_path)
    gen = CaptionGenerator(VlmConfig(provider="mock", rate_limit=6000), MockVlmClient(), generator, cache_dir)
    items = [(i, image_paths[i].read_bytes(), build_prompt(r, template)) for i, r in retrieved.items()]
    records, failures = gen.generate_all(items)
    write_submission_csv(records, out)
    if failures:
        write_error_sidecar(failures, Path(out).with_suffix(".errors.jsonl"))
    click.echo(f"wrote {len(records)} captions ({len(failures)} failures) to {out}")


@main.command("evaluate")
@click.option("--candidates", required=True, type=click.Path(exists=True))
@click.option("--references", required=True, type=click.Path(exists=True))
@click.option("--judge", is_flag=True, help="Score pairs with the (mock) LLM judge.")
@click.option("--manual", "manual_path", default=None, type=click.Path(exists=True))
@click.option("--config-id", default="evaluate", show_default=True)
@click.option("--out", required=True, type=click.Path())
def evaluate_cmd(candidates, references, judge, manual_path, config_id, out):
    """Score candidates against references and write the report JSON."""
    cand = read_submission_csv(candidates)
    refs = load_references_csv(references)
    ratings = load_manual_ratings_csv(manual_path) if manual_path else None
    judge_client = MockJudge(["75"]) if judge else None
    report = build_report(config_id, cand, refs, judge_client=judge_client, ratings=ratings)
    Path(out).write_text(report.to_json(), encoding="utf-8")
    click.echo(render_comparison([report]), nl=False)


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--dry-run", is_flag=True, help="Validate the config and print the plan.")
def run_cmd(config_path, dry_run):
    """Run the full experiment matrix described by a config file."""
    try:
        cfg = validate_config(config_path)
    except ValidationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    if dry_run:
        click.echo(f"plan: {len(cfg.encoders)} encoder(s) x {len(cfg.generators)} generator(s) "
                   f"= {len(cfg.encoders) * len(cfg.generators)} configuration(s), k={cfg.k}")
        for e in cfg.encoders:
            for g in cfg.generators:
                click.echo(f"  - {e} + {g}")
        sys.exit(0)
    try:
        manifest = run_matrix(cfg)
    except VlcapError as exc:
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(3)
    reports = []
    for entry in manifest.configurations.values():
        report_info = entry["artifacts"].get("report")
        if report_info:
            reports.append(EvalReport.from_json(Path(report_info["path"]).read_text(encoding="utf-8")))
    if reports:
        click.echo(render_comparison(reports), nl=False)
    if manifest.errors and not manifest.configurations:
        sys.exit(3)
    if manifest.errors:
        for cid, err in manifest.errors.items():
            click.echo(f"configuration {cid} failed: {err}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
