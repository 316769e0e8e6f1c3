"""Operator CLI: gen-regions | annotate | build | evaluate | serve-review.

Exit codes are a stable contract: 0 success, 1 infrastructure failure,
2 usage error, 3 partial success. Completed outputs are detected through
their manifests and skipped unless --force.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import dataset as ds
from .client import ChatClient
from .config import RunConfig, load_config
from .errors import (
    AuthError,
    ConfigurationError,
    FaceFocalError,
    IncompleteInputError,
    SamplingExhaustedError,
)
from .geometry import Region, sample_regions
from .imaging import MaskSpec, render_variant, variant_path
from .judge import (
    AnnotationRequest,
    CaptionSet,
    aggregate,
    annotate_regions,
    run_pairwise,
    run_panel,
    write_judge_report,
)
from .prompting import TemplateRegistry, render_annotation_prompt, render_stage_query, stable_u64
from .recognition import PredictionRecord, evaluate_predictions, write_score_report
from .records import read_manifest, read_records, write_manifest, write_records
from .review import AnnotationItem, AnnotationStore
from .taxonomy import (
    bin_age,
    load_au_templates,
    load_key_areas,
    region_au_truth,
    render_label,
)

EXIT_OK = 0
EXIT_INFRA = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


def _fail(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = EXIT_INFRA
    return exc


@click.group()
def main():
    """Benchmark factory and evaluation harness for region-focal face description."""


def _config_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path())(fn)
    fn = click.option("--seed", "seed", type=int, default=None, help="override config seed")(fn)
    fn = click.option("--force", is_flag=True, help="rebuild even if outputs exist")(fn)
    return fn


def _load(config_path: str, seed: int | None) -> RunConfig:
    try:
        return load_config(config_path, seed_override=seed)
    except ConfigurationError as exc:
        raise click.UsageError(str(exc)) from exc


def _load_corpus(cfg: RunConfig) -> list[ds.SourceSample]:
    if not cfg.images_dir.exists() or not cfg.landmarks_dir.exists():
        raise click.UsageError(
            f"input directories missing: {cfg.images_dir} / {cfg.landmarks_dir}"
        )
    if not cfg.labels_path.exists():
        raise click.UsageError(f"labels file missing: {cfg.labels_path}")
    samples = ds.load_corpus(cfg.images_dir, cfg.landmarks_dir, cfg.labels_path)
    if not samples:
        raise click.UsageError("no labeled images with landmarks found in the input dirs")
    return samples


def _read_regions(cfg: RunConfig) -> dict[str, list[Region]]:
    regions_dir = cfg.regions_dir
    if not regions_dir.exists():
        raise click.UsageError(f"regions not generated yet; run gen-regions ({regions_dir})")
    out: dict[str, list[Region]] = {}
    for path in sorted(regions_dir.glob("*.json")):
        if path.name == "manifest.json":
            continue
        with open(path) as fh:
            boxes = json.load(fh)
        out[path.stem] = [Region(*map(float, b)) for b in boxes]
    return out


def _manifest_fresh(path: Path, cfg: RunConfig, force: bool) -> bool:
    if force or not path.exists():
        return False
    try:
        return read_manifest(path).get("config_hash") == cfg.config_hash
    except (OSError, ValueError):
        return False


@main.command("gen-regions")
@_config_options
def cmd_gen_regions(config_path, seed, force):
    """Sample the per-image ROI sets from landmarks."""
    cfg = _load(config_path, seed)
    manifest_path = cfg.regions_dir / "manifest.json"
    if _manifest_fresh(manifest_path, cfg, force):
        click.echo(f"regions already generated ({manifest_path}); use --force to redo")
        return

    samples = _load_corpus(cfg)
    key_areas = load_key_areas() if cfg.key_area_min is not None else None

    total = 0
    skipped: dict[str, str] = {}
    for sample in samples:
        per_image = dataclasses.replace(
            cfg.sampler,
            seed=stable_u64(cfg.seed, sample.image_id),
            key_area_min=cfg.key_area_min,
            key_areas=key_areas,
        )
        try:
            boxes = sample_regions(sample.landmarks, per_image)
        except (SamplingExhaustedError, FaceFocalError) as exc:
            skipped[sample.image_id] = str(exc)
            continue
        rows = [[int(b.x1), int(b.y1), int(b.x2), int(b.y2)] for b in boxes]
        path = cfg.regions_dir / f"{sample.image_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(rows) + "\n")
        total += len(rows)

    ok = len(samples) - len(skipped)
    write_manifest(
        manifest_path,
        {
            "images": ok,
            "total_regions": total,
            "seed": cfg.seed,
            "config_hash": cfg.config_hash,
            "skipped": skipped,
        },
    )
    click.echo(f"generated {total} regions over {ok} images; skipped {len(skipped)}")
    if skipped and ok:
        sys.exit(EXIT_PARTIAL)
    if skipped:
        raise _fail("every image failed region sampling; see manifest skip report")


def _plan_annotations(cfg: RunConfig, samples, regions):
    """(request, store item) pairs for every (image, region, task) triple."""
    registry = TemplateRegistry.load()
    au_templates = load_au_templates()
    variants_dir = cfg.output_root / "variants"
    planned = []
    for sample in samples:
        for k, region in enumerate(regions.get(sample.image_id, ())):
            task = ds.region_task(sample, k, cfg.seed)
            if task == "AU":
                label_text = None
                region_truth = region_au_truth(
                    sample.labels["AU"], region, sample.landmarks, au_templates
                )
                stored_label = render_label(region_truth, "AU")
            else:
                label_text = render_label(sample.labels[task], task)
                stored_label = label_text
            prompt = render_annotation_prompt(registry, task, region, label_text)
            overlay = variant_path(variants_dir, sample.image_id, k, "overlay")
            if not overlay.exists():
                render_variant(sample.image, MaskSpec(region=region, mode="overlay"), overlay)
            rid = ds.annotation_key(sample.image_id, k, task)
            planned.append(
                (
                    AnnotationRequest(region_id=rid, prompt=prompt, image=str(overlay)),
                    AnnotationItem(
                        region_id=rid,
                        image_id=sample.image_id,
                        region=region.as_tuple(),
                        task=task,
                        label=stored_label,
                        description="",
                        image_path=str(sample.image.path),
                    ),
                )
            )
    return planned


@main.command("annotate")
@_config_options
def cmd_annotate(config_path, seed, force):
    """Generate region descriptions through the annotator endpoint."""
    cfg = _load(config_path, seed)
    if "annotator" not in cfg.endpoints:
        raise click.UsageError("config has no endpoints.annotator profile")
    samples = _load_corpus(cfg)
    regions = _read_regions(cfg)
    store = AnnotationStore(cfg.review_dir)

    planned = _plan_annotations(cfg, samples, regions)
    if not force:
        have = set(store.usable_descriptions())
        planned = [(req, item) for req, item in planned if req.region_id not in have]
    if not planned:
        click.echo("all regions already annotated; use --force to redo")
        return

    client = ChatClient(cfg.endpoints["annotator"], cache_dir=cfg.output_root / "cache")
    try:
        run = annotate_regions([req for req, _ in planned], client)
    except AuthError as exc:
        raise _fail(f"annotator endpoint rejected credentials: {exc}") from exc
    finally:
        client.close()

    items = []
    for req, item in planned:
        if req.region_id in run.descriptions:
            item.description = run.descriptions[req.region_id].strip()
            items.append(item)
    store.add(items, replace=force)

    click.echo(f"annotated {len(items)} regions; {len(run.failures)} failures")
    if run.failures:
        for rid, err in sorted(run.failures.items()):
            click.echo(f"  failed {rid}: {err}", err=True)
        sys.exit(EXIT_PARTIAL if items else EXIT_INFRA)


def _test_records(cfg: RunConfig, test_samples, regions, registry, annotations):
    au_templates = load_au_templates()
    variants_dir = cfg.output_root / "variants"
    rows = []
    for sample in test_samples:
        for k, region in enumerate(regions.get(sample.image_id, ())):
            task = ds.region_task(sample, k, cfg.seed)
            if task == "AU":
                label = render_label(
                    region_au_truth(sample.labels["AU"], region, sample.landmarks, au_templates),
                    "AU",
                )
            else:
                label = render_label(sample.labels[task], task)
            overlay = variant_path(variants_dir, sample.image_id, k, "overlay")
            if not overlay.exists():
                render_variant(sample.image, MaskSpec(region=region, mode="overlay"), overlay)
            query = render_stage_query(
                registry, sample.image_id, k, task, "stage23", cfg.seed, region=region
            )
            rows.append(
                {
                    "record_id": f"{sample.image_id}__test__r{k}__{task}",
                    "image_variant": str(overlay),
                    "task": task,
                    "query": query.text,
                    "label": label,
                    "region": list(region.as_tuple()),
                    "reference": annotations.get(ds.annotation_key(sample.image_id, k, task)),
                }
            )
    return rows


@main.command("build")
@_config_options
def cmd_build(config_path, seed, force):
    """Assemble the stagewise record sets and the test split."""
    cfg = _load(config_path, seed)
    manifest_path = cfg.output_root / "manifest.json"
    if _manifest_fresh(manifest_path, cfg, force):
        click.echo(f"records already built ({manifest_path}); use --force to rebuild")
        return

    samples = _load_corpus(cfg)
    regions = _read_regions(cfg)
    registry = TemplateRegistry.load()
    store = AnnotationStore(cfg.review_dir)
    annotations = store.usable_descriptions()

    train, test = ds.split_test(samples, cfg.test_split, cfg.seed)

    build_cfg = ds.BuildConfig(
        output_root=cfg.output_root,
        seed=cfg.seed,
        regions=regions,
        annotations=annotations,
        registry=registry,
        history_char_cap=cfg.history_char_cap,
        config_hash=cfg.config_hash,
    )

    manifests = []
    try:
        for stage in cfg.stages:
            records, manifest = ds.build_stage(train, stage, build_cfg)
            n = write_records(cfg.output_root / f"stage{stage}.records", [r.to_row() for r in records])
            manifests.append(manifest)
            click.echo(f"stage {stage}: {n} records")
    except IncompleteInputError as exc:
        for offender in exc.offenders[:20]:
            click.echo(f"  missing annotation: {offender}", err=True)
        if len(exc.offenders) > 20:
            click.echo(f"  ... and {len(exc.offenders) - 20} more", err=True)
        raise _fail(str(exc)) from exc

    test_rows = _test_records(cfg, test, regions, registry, annotations)
    write_records(cfg.output_root / "test.records", test_rows)
    click.echo(f"test split: {len(test)} images, {len(test_rows)} region records")

    merged = ds.merge_manifests(manifests) if manifests else {
        "stages": {}, "per_source": {}, "seed": cfg.seed, "config_hash": cfg.config_hash,
    }
    merged["test_images"] = len(test)
    merged["test_records"] = len(test_rows)
    write_manifest(manifest_path, merged)
    click.echo(f"manifest: {manifest_path}")


def _read_caption_file(path: str) -> CaptionSet:
    rows = list(read_records(path))
    if not rows:
        raise click.UsageError(f"caption file {path} is empty")
    model = rows[0].get("model") or Path(path).stem
    items = {r["sample_id"]: r["caption"] for r in rows}
    images = {r["sample_id"]: r["image"] for r in rows if r.get("image")}
    return CaptionSet(model=model, items=items, images=images)


@main.command("evaluate")
@_config_options
@click.option("--mode", type=click.Choice(["judge-pairwise", "judge-panel", "recognition"]), required=True)
@click.option("--ours", "ours_path", type=click.Path(exists=True), default=None)
@click.option("--baseline", "baseline_path", type=click.Path(exists=True), default=None)
@click.option("--candidates", "candidate_paths", type=click.Path(exists=True), multiple=True)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True), default=None)
def cmd_evaluate(config_path, seed, force, mode, ours_path, baseline_path, candidate_paths, predictions_path):
    """Run one of the evaluation protocols and write its report files."""
    cfg = _load(config_path, seed)
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)

    if mode == "recognition":
        if not predictions_path:
            raise click.UsageError("recognition mode requires --predictions")
        records = [
            PredictionRecord(
                sample_id=r["sample_id"], task=r["task"],
                condition=r.get("condition", "region_focal"), raw_text=r["raw_text"],
            )
            for r in read_records(predictions_path)
        ]
        truths = _truths_from_labels(cfg)
        tables = evaluate_predictions(records, truths)
        out = cfg.reports_dir / "recognition_report"
        write_score_report(tables, out)
        click.echo(f"wrote {out}.jsonl / .txt ({len(tables)} tables)")
        return

    if "judge" not in cfg.endpoints:
        raise click.UsageError("config has no endpoints.judge profile")
    registry = TemplateRegistry.load()
    client = ChatClient(cfg.endpoints["judge"], cache_dir=cfg.output_root / "cache")
    try:
        if mode == "judge-pairwise":
            if not (ours_path and baseline_path):
                raise click.UsageError("judge-pairwise requires --ours and --baseline")
            verdicts, audit = run_pairwise(
                _read_caption_file(ours_path), _read_caption_file(baseline_path),
                client, registry, seed=cfg.seed,
            )
        else:
            if len(candidate_paths) < 2:
                raise click.UsageError("judge-panel requires at least two --candidates files")
            sets = [_read_caption_file(p) for p in candidate_paths]
            verdicts, audit = run_panel(sets, client, registry, seed=cfg.seed)
    except AuthError as exc:
        raise _fail(f"judge endpoint rejected credentials: {exc}") from exc
    finally:
        client.close()

    if not verdicts:
        raise _fail("no verdicts produced; endpoint failed for every sample")
    reports = aggregate(verdicts, judge_model=cfg.endpoints["judge"].model)
    out = cfg.reports_dir / f"{mode.replace('-', '_')}_report"
    write_judge_report(reports, out)
    for note in audit:
        click.echo(f"  audit: {note}", err=True)
    click.echo(f"wrote {out}.jsonl / .txt over {len(verdicts)} verdicts")
    failures = [a for a in audit if "endpoint failure" in a]
    if failures:
        sys.exit(EXIT_PARTIAL)


def _truths_from_labels(cfg: RunConfig) -> dict[str, dict[str, object]]:
    rows = ds.load_labels_file(cfg.labels_path)
    truths: dict[str, dict[str, object]] = {"EMO": {}, "AGE": {}, "AU": {}}
    for image_id, row in rows.items():
        if row.get("emotion"):
            truths["EMO"][image_id] = row["emotion"]
        if row.get("age") is not None:
            truths["AGE"][image_id] = bin_age(int(row["age"]))
        if row.get("aus") is not None:
            truths["AU"][image_id] = frozenset(int(a) for a in row["aus"])
    return truths


@main.command("serve-review")
@_config_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
@click.option("--ui-dist", "ui_dist", type=click.Path(), default=None,
              help="built UI bundle to serve at /")
def cmd_serve_review(config_path, seed, force, host, port, ui_dist):
    """Serve the review API (and the UI bundle when built)."""
    import uvicorn

    from .server import create_app

    cfg = _load(config_path, seed)
    store = AnnotationStore(cfg.review_dir)
    dist = Path(ui_dist) if ui_dist else None
    if dist is None:
        default_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        dist = default_dist if default_dist.exists() else None
    app = create_app(store, ui_dist=dist)
    click.echo(f"review API on http://{host}:{port} ({store.stats()['machine_generated']} pending)")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise _fail(f"cannot bind {host}:{port}: {exc}") from exc


if __name__ == "__main__":
    main()
