"""Command-line front end: synth / convert / emit-fixtures."""

import click

from .convert import ConversionError
from .convert import convert as run_convert
from .fixtures import emit_fixtures as run_emit_fixtures
from .synth import DEFAULT_SEED, synthesize


@click.group()
@click.version_option(package_name="substyle-weight-converter")
def main():
    """Convert reference checkpoints to SSWT weight banks and golden fixtures."""


@main.command()
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--seed", default=DEFAULT_SEED, show_default=True,
              help="Per-layer generator seed.")
def synth(out, seed):
    """Write a surrogate reference checkpoint to OUT."""
    meta = synthesize(out, seed)
    click.echo(f"wrote surrogate checkpoint {out} (seed {meta['seed']})")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
def convert(checkpoint, out_dir):
    """Convert CHECKPOINT into enc1..5/dec1..5 SSWT files in OUT_DIR."""
    try:
        report = run_convert(checkpoint, out_dir)
    except ConversionError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"converted {report['tensor_count']} tensors into "
               f"{len(report['networks'])} networks under {out_dir}")


@main.command("emit-fixtures")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("images_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
def emit_fixtures(checkpoint, images_dir, out_dir):
    """Run the reference model on IMAGES_DIR and save per-level fixtures."""
    try:
        manifest = run_emit_fixtures(checkpoint, images_dir, out_dir)
    except ConversionError as exc:
        raise click.ClickException(str(exc))
    n = sum(len(entry["features"]) for entry in manifest["images"].values())
    click.echo(f"emitted {n} fixtures for {len(manifest['images'])} image(s) "
               f"under {out_dir}")


if __name__ == "__main__":
    main()
