"""Command-line interface for the dataset toolkit."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import DualcamError
from .fusion import confidence_to_raster, fuse_pair
from .imagekit import load_png, save_png
from .pipeline import (
    PipelineConfig,
    Workspace,
    calibrate_entry,
    degrade_theoretical,
    evaluate,
    ingest,
    load_config,
    stats_and_split,
)


@click.group()
@click.option(
    "--workspace",
    "-w",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("."),
    show_default=True,
    help="Dataset workspace directory (manifest, calibrated outputs, masks).",
)
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Pipeline config file (flat key = value lines).",
)
@click.pass_context
def main(ctx: click.Context, workspace: Path, config_path: Path | None):
    ctx.ensure_object(dict)
    ctx.obj["ws"] = Workspace(workspace)
    ctx.obj["cfg"] = load_config(config_path) if config_path else PipelineConfig()


@main.command("ingest")
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.pass_context
def ingest_cmd(ctx: click.Context, session_dir: Path):
    """Register capture triples found under SESSION_DIR."""
    new_entries, diagnostics = ingest(session_dir, ctx.obj["ws"])
    for line in diagnostics:
        click.echo(f"warning: {line}", err=True)
    click.echo(f"ingested {len(new_entries)} entries ({len(diagnostics)} warnings)")


@main.command("calibrate")
@click.option("--id", "entry_id", default=None, help="Calibrate a single entry.")
@click.option("--all", "do_all", is_flag=True, help="Calibrate every ACQUIRED entry.")
@click.pass_context
def calibrate_cmd(ctx: click.Context, entry_id: str | None, do_all: bool):
    """Run the calibration chain (scale, flow, color, crop)."""
    if bool(entry_id) == do_all:
        raise click.UsageError("pass exactly one of --id or --all")
    ws: Workspace = ctx.obj["ws"]
    cfg: PipelineConfig = ctx.obj["cfg"]
    manifest = ws.load_manifest()
    if entry_id:
        entry = manifest.get(entry_id)
        if entry is None:
            raise click.ClickException(f"unknown entry {entry_id}")
        targets = [entry]
    else:
        targets = [e for e in manifest.ordered() if e.stage == "ACQUIRED"]
    ok = 0
    for entry in targets:
        updated, diagnostics = calibrate_entry(entry, cfg, ws)
        manifest.upsert(updated)
        for line in diagnostics:
            click.echo(f"note: {line}", err=True)
        if updated.stage == "CALIBRATED":
            ok += 1
            click.echo(f"{entry.id}: calibrated (occlusion {updated.occlusion_score:.4f})")
        else:
            click.echo(f"{entry.id}: failed ({updated.error})", err=True)
    click.echo(f"calibrated {ok}/{len(targets)} entries")


@main.command("stats")
@click.pass_context
def stats_cmd(ctx: click.Context):
    """Print stage counts and the current split."""
    ws: Workspace = ctx.obj["ws"]
    cfg: PipelineConfig = ctx.obj["cfg"]
    report = stats_and_split(
        ws.load_manifest(), cfg.split_seed, cfg.train_fraction, assign=False
    )
    click.echo(report.formatted())


@main.command("split")
@click.option("--seed", type=int, default=None, help="Override the config split seed.")
@click.option("--train-frac", type=float, default=None, help="Override the train fraction.")
@click.pass_context
def split_cmd(ctx: click.Context, seed: int | None, train_frac: float | None):
    """Assign a deterministic train/test split to ACCEPTED entries."""
    ws: Workspace = ctx.obj["ws"]
    cfg: PipelineConfig = ctx.obj["cfg"]
    manifest = ws.load_manifest()
    report = stats_and_split(
        manifest,
        cfg.split_seed if seed is None else seed,
        cfg.train_fraction if train_frac is None else train_frac,
        assign=True,
    )
    click.echo(report.formatted())


@main.command("degrade")
@click.argument("input_png", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("output_png", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--factor", type=int, default=None, help="Downsample factor (default from config).")
@click.pass_context
def degrade_cmd(ctx: click.Context, input_png: Path, output_png: Path, factor: int | None):
    """Generate a fixed-upscaling protocol input: down- then upsample."""
    cfg: PipelineConfig = ctx.obj["cfg"]
    img = load_png(input_png)
    out = degrade_theoretical(img, cfg.degrade_factor if factor is None else factor)
    output_png.parent.mkdir(parents=True, exist_ok=True)
    save_png(out, output_png)
    click.echo(f"wrote {output_png} ({out.width}x{out.height})")


@main.command("eval")
@click.option("--protocol", type=click.Choice(["realistic", "theoretical"]), required=True)
@click.option(
    "--outputs",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    required=True,
    help="Directory of <id>.png outputs, or one subdirectory per method.",
)
@click.pass_context
def eval_cmd(ctx: click.Context, protocol: str, outputs: Path):
    """Score method outputs against calibrated ground truth."""
    ws: Workspace = ctx.obj["ws"]
    table = evaluate(outputs, ws.load_manifest(), protocol, ws)
    for line in table.diagnostics:
        click.echo(f"warning: {line}", err=True)
    click.echo(table.formatted())


@main.command("fuse")
@click.argument("wide_png", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("tele_png", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option(
    "--confidence",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Also write the confidence map as a grayscale PNG.",
)
@click.pass_context
def fuse_cmd(ctx: click.Context, wide_png: Path, tele_png: Path, output: Path, confidence: Path | None):
    """Fuse telephoto detail into a wide frame (edge-gated baseline)."""
    cfg: PipelineConfig = ctx.obj["cfg"]
    w = load_png(wide_png)
    t = load_png(tele_png)
    res = fuse_pair(
        w,
        t,
        min_matches=cfg.min_matches,
        ratio_threshold=cfg.ratio_threshold,
        inlier_px=cfg.ransac_inlier_px,
        max_iters=cfg.ransac_max_iters,
        seed=cfg.ransac_seed,
        flow_levels=cfg.flow_levels,
        flow_window=cfg.flow_window,
        flow_iters=cfg.flow_iters,
    )
    output.parent.mkdir(parents=True, exist_ok=True)
    save_png(res.fused, output)
    click.echo(f"wrote {output}")
    if confidence is not None:
        confidence.parent.mkdir(parents=True, exist_ok=True)
        save_png(confidence_to_raster(res.confidence), confidence)
        click.echo(f"wrote {confidence}")


@main.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--ui",
    "ui_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Static UI bundle to serve at /. Defaults to ./frontend/dist if present.",
)
@click.pass_context
def serve_cmd(ctx: click.Context, port: int, host: str, ui_dir: Path | None):
    """Start the HTTP review service."""
    import uvicorn

    from .annosvc import create_app

    ws: Workspace = ctx.obj["ws"]
    if ui_dir is None:
        candidate = Path("frontend") / "dist"
        ui_dir = candidate if candidate.is_dir() else None
    app = create_app(ws.root, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


def entrypoint():  # pragma: no cover
    try:
        main(obj={})
    except DualcamError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":  # pragma: no cover
    entrypoint()
