from pathlib import Path
from typing import Annotated, Optional

import pydantic
import typer

from app.internal.env_settings import PipelineConfig, load_config
from app.internal.harness.bench import BenchError, bench, render_bench_table
from app.internal.harness.datasets import DatasetLayoutError, adapt_dataset, geometry_tags
from app.internal.harness.evaluate import evaluate, render_eval_table
from app.internal.harness.manifest import ManifestError, load_manifest, write_manifest
from app.internal.harness.overlay import dump_debug, write_overlay
from app.internal.harness.synthetic import SceneGenerationError, sample_scene_specs, synthesize_scene
from app.internal.models import BackgroundKind, DatasetKind, LocateResponse, ManifestEntry
from app.internal.pipeline import (
    DebugArtifacts,
    LocalizationInputError,
    LocalizationResult,
    TemplateSpec,
    localize,
)
from app.util.image_io import ImageDecodeError, load_image, save_image
from app.util.log import configure_logging, logger

cli = typer.Typer(
    name="docloc",
    help="Locate rectangular documents of known aspect ratio in camera images.",
    no_args_is_help=True,
    add_completion=False,
)

_USER_ERRORS = (
    BenchError,
    DatasetLayoutError,
    FileNotFoundError,
    ImageDecodeError,
    LocalizationInputError,
    ManifestError,
    SceneGenerationError,
    pydantic.ValidationError,
)

ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", help="Key-value settings file used instead of .env."),
]


def _config(path: Optional[Path]) -> PipelineConfig:
    cfg = load_config(path)
    configure_logging(cfg.log_level)
    return cfg


def _fail(e: Exception) -> typer.Exit:
    typer.echo(f"Error: {e}", err=True)
    return typer.Exit(code=1)


@cli.command()
def locate(
    image: Annotated[Path, typer.Argument(help="PNG, JPEG or TIFF image.")],
    aspect: Annotated[float, typer.Option(help="Document width over height.", min=0.01)],
    config: ConfigOption = None,
    overlay: Annotated[Optional[Path], typer.Option(help="Write the image with the result quad.")] = None,
    json: Annotated[bool, typer.Option("--json", help="Print the result as JSON.")] = False,
    debug_dir: Annotated[
        Optional[Path], typer.Option(help="Dump edge maps and Hough accumulators here.")
    ] = None,
    rotate: Annotated[int, typer.Option(help="Rotate the input counterclockwise by 90 degree steps.")] = 0,
):
    """Find the document quadrilateral in one image."""
    try:
        cfg = _config(config)
        img = load_image(image, rotate_quarters=rotate)
        debug: Optional[list[DebugArtifacts]] = [] if debug_dir else None
        outcome = localize(img, TemplateSpec.from_aspect(aspect), cfg, debug=debug)
    except _USER_ERRORS as e:
        raise _fail(e)

    if debug_dir and debug:
        written = dump_debug(debug[0], debug_dir, cfg.hough)
        logger.info("Wrote debug images", directory=str(debug_dir), files=len(written))

    timings = {name: float(value) for name, value in outcome.timings.items()}
    if isinstance(outcome, LocalizationResult):
        response = LocateResponse(
            image=str(image),
            detected=True,
            quad=[(p.x, p.y) for p in outcome.quad.vertices],
            provenance=outcome.provenance,
            contour=outcome.contour,
            contrast=outcome.contrast,
            combined=outcome.combined,
            timings=timings,
        )
        if overlay:
            write_overlay(img, outcome.quad, None, overlay)
    else:
        response = LocateResponse(image=str(image), detected=False, reason=outcome.reason, timings=timings)
        if overlay:
            save_image(img, overlay)

    if json:
        typer.echo(response.model_dump_json())
    elif response.quad is not None:
        vertices = " ".join(f"({x:.1f}, {y:.1f})" for x, y in response.quad)
        typer.echo(f"{response.provenance}: {vertices}")
    else:
        typer.echo(f"no document: {response.reason}")


@cli.command(name="eval")
def eval_manifest(
    manifest: Annotated[Path, typer.Argument(help="JSON-lines manifest.")],
    out: Annotated[Path, typer.Option(help="Directory for entries.csv, summary.json and overlays.")],
    jobs: Annotated[int, typer.Option(min=1, help="Worker processes.")] = 1,
    strict: Annotated[bool, typer.Option(help="Abort on the first invalid manifest line.")] = False,
    config: ConfigOption = None,
):
    """Evaluate the localizer on every manifest entry."""
    try:
        cfg = _config(config)
        entries = load_manifest(manifest, strict=strict)
        report = evaluate(entries, cfg, out, jobs=jobs, base_dir=manifest.parent)
    except _USER_ERRORS as e:
        raise _fail(e)
    typer.echo(render_eval_table(report))


@cli.command()
def synth(
    count: Annotated[int, typer.Option(min=1)],
    seed: Annotated[int, typer.Option()],
    out: Annotated[Path, typer.Option(help="Directory for images/ and manifest.jsonl.")],
    occlude_side: Annotated[
        bool, typer.Option(help="Hide one document side in every fourth scene.")
    ] = False,
    clutter: Annotated[int, typer.Option(min=0, help="Dark bars printed inside each document.")] = 0,
    background: Annotated[
        Optional[list[BackgroundKind]], typer.Option(help="Background kinds to cycle through.")
    ] = None,
):
    """Render a seeded suite of synthetic scenes with exact ground truth."""
    specs = sample_scene_specs(
        count,
        seed,
        occlude_fraction=0.25 if occlude_side else 0.0,
        backgrounds=background,
        clutter_lines=clutter,
    )
    entries: list[ManifestEntry] = []
    try:
        for i, spec in enumerate(specs):
            img, truth = synthesize_scene(spec)
            relative = Path("images") / f"scene_{i:04d}.png"
            save_image(img, out / relative)
            tags = ["synthetic", spec.background.value]
            if spec.occluded_side is not None:
                tags.append("occluded")
            entries.append(
                ManifestEntry(
                    image=relative.as_posix(),
                    gt=[(p.x, p.y) for p in truth.m.vertices],
                    aspect=spec.aspect,
                    tags=tags + geometry_tags(truth.m, *truth.image_size),
                )
            )
    except _USER_ERRORS as e:
        raise _fail(e)
    written = write_manifest(entries, out / "manifest.jsonl")
    typer.echo(f"Wrote {written} scenes to {out}")


@cli.command()
def adapt(
    kind: Annotated[DatasetKind, typer.Option()],
    root: Annotated[Path, typer.Option(help="Dataset directory as distributed.")],
    out: Annotated[Path, typer.Option(help="Manifest to write.")],
):
    """Convert a dataset's native ground truth into a manifest."""
    try:
        count = adapt_dataset(root, kind, out)
    except _USER_ERRORS as e:
        raise _fail(e)
    typer.echo(f"Wrote {count} entries to {out}")


@cli.command(name="bench")
def bench_manifests(
    manifests: Annotated[list[Path], typer.Argument(help="One or more manifests to compare.")],
    reps: Annotated[int, typer.Option(min=1)] = 3,
    config: ConfigOption = None,
):
    """Single-threaded per-stage timings (median and p95)."""
    try:
        cfg = _config(config)
        for manifest in manifests:
            entries = load_manifest(manifest)
            report = bench(entries, reps, cfg, base_dir=manifest.parent, name=str(manifest))
            typer.echo(render_bench_table(report))
    except _USER_ERRORS as e:
        raise _fail(e)


if __name__ == "__main__":
    cli()
