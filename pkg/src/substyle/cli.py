"""Command-line surface: stylize / decompose / grid.

Exit codes: 2 for I/O failures (missing or corrupt files), 3 for bad
configuration, 4 for numerical failures.  Every output image or model is
accompanied by a JSON run manifest sufficient to reproduce it.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import __version__
from .cnn import WeightBank, encode
from .decomposition import (combined_stats, decompose_style, export_masks,
                            load_model, save_model)
from .errors import ConfigError, FormatError, NumericError
from .image import load_image, save_image
from .transfer import mst_decompose
from .wct import StylizeConfig, StyleSource, multi_level_stylize

EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

_IMAGE_EXTS = (".png", ".jpg", ".jpeg")


def _parse_levels(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad --levels value {text!r}") from None


def _parse_beta(text):
    if text is None:
        return None
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad --beta value {text!r}") from None


def _resolve_weights(weights) -> WeightBank:
    path = weights or os.environ.get("SUBSTYLE_WEIGHTS")
    if not path:
        raise ConfigError(
            "no weights directory: pass --weights or set SUBSTYLE_WEIGHTS"
        )
    if not os.path.isdir(path):
        raise FileNotFoundError(f"weights directory {path} does not exist")
    return WeightBank(path)


def _write_manifest(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_block(cfg: StylizeConfig, beta, k, decomp_level) -> dict:
    return {
        "alpha": cfg.alpha,
        "delta": cfg.delta,
        "levels": list(cfg.levels),
        "eig_cutoff": cfg.eig_cutoff,
        "seed": cfg.seed,
        "beta": list(beta) if beta is not None else None,
        "k": k,
        "decomp_level": decomp_level,
    }


def _obtain_model(bank, style_imgs, style_paths, model_path, k, decomp_level,
                  seed, timings):
    """Load a persisted sub-style model, or fit one from the style images
    (saving it when --model names a new path)."""
    if model_path and os.path.exists(model_path):
        return load_model(model_path), model_path, None
    if not style_imgs:
        raise ConfigError("need --style images or an existing --model file")
    t0 = time.perf_counter()
    if len(style_imgs) == 1:
        feat = encode(bank.encoder(decomp_level), style_imgs[0], decomp_level)
        model = decompose_style(feat.as_matrix(), k, seed, level=decomp_level,
                                provenance=(style_paths[0],),
                                preprocess=bank.preprocess)
    else:
        model = mst_decompose(style_imgs, k, decomp_level, seed,
                              bank.encoder(decomp_level), names=style_paths)
    timings["decompose"] = time.perf_counter() - t0
    saved = None
    if model_path:
        save_model(model, model_path)
        saved = model_path
    return model, None, saved


@click.group()
@click.version_option(version=__version__, prog_name="substyle")
def cli():
    """Universal style transfer with sub-style decomposition."""


@cli.command()
@click.option("--content", required=True, help="Content image, or a directory for batch runs.")
@click.option("--style", "styles", multiple=True, help="Style image (repeatable).")
@click.option("--mode", type=click.Choice(["wct", "smt", "sst", "mst"]),
              default="wct", show_default=True)
@click.option("--alpha", type=float, default=0.6, show_default=True,
              help="Style weight.")
@click.option("--delta", type=float, default=0.8, show_default=True,
              help="Content weight between original and running features.")
@click.option("--beta", default=None,
              help="Comma-separated sub-style mixture weights (smt); uniform if omitted.")
@click.option("-K", "--clusters", "k", type=int, default=3, show_default=True,
              help="Number of sub-styles / content regions.")
@click.option("--levels", default="5,4,3,2,1", show_default=True)
@click.option("--decomp-level", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--weights", default=None,
              help="Weights directory (default: $SUBSTYLE_WEIGHTS).")
@click.option("--model", "model_path", default=None,
              help="Sub-style model path: loaded if it exists, else saved after fitting.")
@click.option("--out", required=True, help="Output image path (or directory in batch mode).")
@click.option("--max-size", type=int, default=1024, show_default=True,
              help="Downscale inputs so the long side fits this; 0 disables.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker threads for batch runs.")
def stylize(content, styles, mode, alpha, delta, beta, k, levels, decomp_level,
            seed, weights, model_path, out, max_size, jobs):
    """Stylize one image (or a directory of images) with a style source."""
    timings = {}
    bank = _resolve_weights(weights)
    cfg = StylizeConfig(alpha=alpha, delta=delta, levels=_parse_levels(levels),
                        seed=seed)
    beta_t = _parse_beta(beta)

    t0 = time.perf_counter()
    style_imgs = [load_image(p, max_size) for p in styles]
    timings["load_styles"] = time.perf_counter() - t0

    model = None
    model_in = model_out = None
    if mode == "mst":
        if not style_imgs:
            raise ConfigError("mode mst needs at least one --style image")
        t0 = time.perf_counter()
        model = mst_decompose(style_imgs, k, decomp_level, seed,
                              bank.encoder(decomp_level), names=list(styles))
        timings["decompose"] = time.perf_counter() - t0
        if model_path:
            save_model(model, model_path)
            model_out = model_path
        engine_mode = "smt" if beta_t is not None else "sst"
    elif mode in ("smt", "sst"):
        model, model_in, model_out = _obtain_model(
            bank, style_imgs, list(styles), model_path, k, decomp_level, seed,
            timings)
        engine_mode = mode
    else:
        if not style_imgs and cfg.alpha > 0.0:
            raise ConfigError("mode wct needs a --style image")
        engine_mode = "wct"

    if engine_mode == "smt":
        if beta_t is None:
            beta_t = tuple(1.0 / model.k for _ in range(model.k))
        elif len(beta_t) != model.k:
            raise ConfigError(
                f"--beta has {len(beta_t)} weights for {model.k} sub-styles"
            )

    t0 = time.perf_counter()
    if style_imgs:
        source = StyleSource.from_images(bank, style_imgs, cfg.levels,
                                         model=model, beta=beta_t)
    elif model is not None and cfg.alpha > 0.0:
        extra = [lv for lv in cfg.levels if lv != model.level]
        if extra:
            raise ConfigError(
                f"a saved model provides statistics only at level {model.level}; "
                f"restrict --levels or pass --style"
            )
        source = StyleSource(stats={model.level: combined_stats(model)},
                             model=model, beta=beta_t)
    else:
        source = StyleSource(stats={}, model=model, beta=beta_t)
    timings["style_stats"] = time.perf_counter() - t0

    if os.path.isdir(content):
        names = sorted(n for n in os.listdir(content)
                       if n.lower().endswith(_IMAGE_EXTS))
        if not names:
            raise ConfigError(f"no images found in {content}")
        os.makedirs(out, exist_ok=True)
        pairs = [
            (os.path.join(content, n),
             os.path.join(out, os.path.splitext(n)[0] + "_stylized.png"))
            for n in names
        ]
    else:
        pairs = [(content, out)]

    def run_one(pair):
        cpath, opath = pair
        local = dict(timings)
        t1 = time.perf_counter()
        img = load_image(cpath, max_size)
        local["load_content"] = time.perf_counter() - t1
        t1 = time.perf_counter()
        result = multi_level_stylize(bank, img, source, cfg, engine_mode)
        local["stylize"] = time.perf_counter() - t1
        save_image(opath, result)
        _write_manifest(opath + ".json", {
            "tool": f"substyle {__version__}",
            "command": "stylize",
            "mode": mode,
            "config": _config_block(cfg, beta_t, k, decomp_level),
            "inputs": {"content": cpath, "styles": list(styles),
                       "model": model_in, "weights": bank.weights_dir,
                       "max_size": max_size},
            "outputs": {"image": opath, "model": model_out},
            "preprocess": bank.preprocess,
            "timings": local,
        })
        return opath

    if len(pairs) > 1 and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(run_one, pairs))
    else:
        outputs = [run_one(p) for p in pairs]
    for o in outputs:
        click.echo(o)


@cli.command()
@click.option("--style", "styles", multiple=True, required=True,
              help="Style image (repeat for a multi-image collection).")
@click.option("-K", "--clusters", "k", type=int, default=3, show_default=True)
@click.option("--decomp-level", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--weights", default=None)
@click.option("--out", required=True, help="Model manifest path (.json).")
@click.option("--masks-out", default=None,
              help="Directory for per-cluster mask PNGs.")
@click.option("--max-size", type=int, default=1024, show_default=True)
def decompose(styles, k, decomp_level, seed, weights, out, masks_out, max_size):
    """Fit a sub-style model from one or more style images and save it."""
    timings = {}
    bank = _resolve_weights(weights)
    t0 = time.perf_counter()
    imgs = [load_image(p, max_size) for p in styles]
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    encoder = bank.encoder(decomp_level)
    feats = [encode(encoder, img, decomp_level) for img in imgs]
    mats = [f.as_matrix() for f in feats]
    features = mats[0] if len(mats) == 1 else np.concatenate(mats, axis=1)
    model = decompose_style(features, k, seed, level=decomp_level,
                            provenance=tuple(styles),
                            preprocess=bank.preprocess)
    timings["decompose"] = time.perf_counter() - t0

    save_model(model, out)
    mask_paths = []
    if masks_out:
        labels = model._labels
        offset = 0
        for idx, feat in enumerate(feats):
            n = feat.height * feat.width
            lab2d = labels[offset:offset + n].reshape(feat.height, feat.width)
            offset += n
            prefix = "mask" if len(feats) == 1 else f"style{idx}_mask"
            mask_paths += export_masks(lab2d, masks_out, prefix=prefix,
                                       scale=2 ** decomp_level)

    _write_manifest(out + ".run.json", {
        "tool": f"substyle {__version__}",
        "command": "decompose",
        "config": {"k": k, "decomp_level": decomp_level, "seed": seed,
                   "max_size": max_size},
        "inputs": {"styles": list(styles), "weights": bank.weights_dir},
        "outputs": {"model": out, "masks": mask_paths},
        "preprocess": bank.preprocess,
        "cluster_counts": [int(c) for c in model.counts],
        "timings": timings,
    })
    click.echo(out)


@cli.command()
@click.option("--content", required=True)
@click.option("--style", "styles", multiple=True)
@click.option("--from-style", "idx_a", type=int, default=0, show_default=True,
              help="Sub-style index at the left end of the sweep.")
@click.option("--to-style", "idx_b", type=int, default=1, show_default=True,
              help="Sub-style index at the right end of the sweep.")
@click.option("--steps", type=int, default=6, show_default=True)
@click.option("--alpha", type=float, default=0.6, show_default=True)
@click.option("--delta", type=float, default=0.8, show_default=True)
@click.option("-K", "--clusters", "k", type=int, default=3, show_default=True)
@click.option("--levels", default="5,4,3,2,1", show_default=True)
@click.option("--decomp-level", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--weights", default=None)
@click.option("--model", "model_path", default=None)
@click.option("--out", required=True)
@click.option("--max-size", type=int, default=1024, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
def grid(content, styles, idx_a, idx_b, steps, alpha, delta, k, levels,
         decomp_level, seed, weights, model_path, out, max_size, jobs):
    """Render a mixture-weight sweep between two sub-styles as one image row."""
    if steps < 1:
        raise ConfigError(f"--steps must be >= 1, got {steps}")
    timings = {}
    bank = _resolve_weights(weights)
    cfg = StylizeConfig(alpha=alpha, delta=delta, levels=_parse_levels(levels),
                        seed=seed)

    t0 = time.perf_counter()
    style_imgs = [load_image(p, max_size) for p in styles]
    img = load_image(content, max_size)
    timings["load"] = time.perf_counter() - t0

    model, model_in, model_out = _obtain_model(
        bank, style_imgs, list(styles), model_path, k, decomp_level, seed,
        timings)
    for name, idx in (("--from-style", idx_a), ("--to-style", idx_b)):
        if not 0 <= idx < model.k:
            raise ConfigError(
                f"{name} index {idx} out of range for {model.k} sub-styles"
            )

    t0 = time.perf_counter()
    if style_imgs:
        base = StyleSource.from_images(bank, style_imgs, cfg.levels, model=model)
    else:
        extra = [lv for lv in cfg.levels if lv != model.level]
        if extra and cfg.alpha > 0.0:
            raise ConfigError(
                f"a saved model provides statistics only at level {model.level}; "
                f"restrict --levels or pass --style"
            )
        base = StyleSource(stats={model.level: combined_stats(model)}, model=model)
    timings["style_stats"] = time.perf_counter() - t0

    ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.array([0.0])
    betas = []
    for t in ts:
        b = np.zeros(model.k)
        b[idx_a] += 1.0 - t
        b[idx_b] += t
        betas.append(tuple(b))

    def render(bt):
        src = StyleSource(stats=base.stats, model=model, beta=bt)
        return multi_level_stylize(bank, img, src, cfg, "smt")

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            frames = list(pool.map(render, betas))
    else:
        frames = [render(bt) for bt in betas]
    timings["stylize"] = time.perf_counter() - t0

    sheet = np.concatenate(frames, axis=1)
    save_image(out, sheet)
    _write_manifest(out + ".json", {
        "tool": f"substyle {__version__}",
        "command": "grid",
        "config": _config_block(cfg, None, k, decomp_level),
        "sweep": {"from_style": idx_a, "to_style": idx_b, "steps": steps,
                  "betas": [list(b) for b in betas]},
        "inputs": {"content": content, "styles": list(styles),
                   "model": model_in, "weights": bank.weights_dir,
                   "max_size": max_size},
        "outputs": {"image": out, "model": model_out},
        "preprocess": bank.preprocess,
        "timings": timings,
    })
    click.echo(out)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="substyle", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_CONFIG
    except click.Abort:
        return 130
    except (FormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except NumericError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
