"""Headless driver: serve, train from a marks file, batch apply, bench, phantoms.

All flags can be preloaded from a TOML config file (one section per
subcommand, keys named like the long flags); explicit flags win.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io as imgio
from . import phantom as phantoms
from .dictionary import assign_image, build_tree
from .features import extract_training_set
from .graph import build_biadjacency, normalize
from .postproc import write_centres_csv
from .propagation import (UpdateOptions, UserMarking, final_label_stack,
                          segment, update)
from .transfer import StackOptions, TrainedModel, apply_to_stack, train_model


def _load_config(config_path, section: str) -> dict:
    if not config_path:
        return {}
    with open(config_path, "rb") as fh:
        data = tomllib.load(fh)
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged.update(data.get(section, {}))
    return {k.replace("-", "_"): v for k, v in merged.items()}


def _merge(ctx: click.Context, config_path, section: str) -> dict:
    """Start from defaults, overlay config-file values, keep explicit flags."""
    values = dict(ctx.params)
    overrides = _load_config(config_path, section)
    for name, value in overrides.items():
        if name not in values:
            raise click.UsageError(f"unknown config key {name!r} in [{section}]")
        source = ctx.get_parameter_source(name)
        if source is not None and source.name == "DEFAULT":
            values[name] = value
    return values


def _echo_timing(label: str, seconds: float):
    click.echo(f"  {label:<22s} {seconds * 1000.0:8.1f} ms")


def _build_pipeline(grid, patch_side, branching, layers, iterations, seed,
                    subsample, quiet=False):
    t0 = time.perf_counter()
    feats = extract_training_set(grid, patch_side, subsample, seed)
    tree = build_tree(feats, branching, layers, iterations=iterations,
                      seed=seed, patch_side=patch_side, channels=grid.channels,
                      extractor_kind="intensity-patch" if grid.channels == 1
                      else "multichannel-patch")
    t_tree = time.perf_counter() - t0

    t0 = time.perf_counter()
    assignments = assign_image(grid, tree)
    t_assign = time.perf_counter() - t0

    t0 = time.perf_counter()
    graph = build_biadjacency(assignments, patch_side, tree.n_nodes)
    transforms = normalize(graph)
    t_graph = time.perf_counter() - t0

    if not quiet:
        _echo_timing("dictionary build", t_tree)
        _echo_timing("assignment", t_assign)
        _echo_timing("graph build+normalize", t_graph)
        click.echo(f"  relations {graph.relation_count}  nnz {graph.matrix.nnz}"
                   f"  K {tree.n_nodes}")
    return tree, graph, transforms, {"tree_s": t_tree, "assign_s": t_assign,
                                     "graph_s": t_graph}


_shared_build_flags = [
    click.option("--patch-size", default=9, show_default=True,
                 help="Odd patch side M."),
    click.option("--branching", default=5, show_default=True,
                 help="Tree branching factor."),
    click.option("--layers", default=4, show_default=True,
                 help="Tree depth below the root layer."),
    click.option("--iterations", default=10, show_default=True,
                 help="K-means iterations per split."),
    click.option("--seed", default=0, show_default=True),
    click.option("--subsample", default=15000, show_default=True,
                 help="Training patches drawn for clustering."),
]

_shared_update_flags = [
    click.option("--steps", default=2, show_default=True, type=click.IntRange(1, 2)),
    click.option("--binarise/--no-binarise", default=True, show_default=True),
    click.option("--overwrite/--no-overwrite", default=True, show_default=True),
    click.option("--epsilon", default=1e-6, show_default=True,
                 help="Tie tolerance for binarisation/segmentation."),
]


def _add_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func
    return wrap


@click.group()
def main():
    """Interactive pattern segmentation toolkit."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--max-upload-mb", default=256, show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="Serve the built browser UI from this directory at /.")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def serve(ctx, host, port, max_upload_mb, ui_dir, config):
    """Start the interactive session service."""
    params = _merge(ctx, config, "serve")
    from .server import run_server
    run_server(host=params["host"], port=params["port"],
               max_upload_mb=params["max_upload_mb"], ui_dir=params["ui_dir"])


@main.command()
@click.argument("image", type=click.Path(exists=True))
@click.option("--marks", type=click.Path(exists=True), required=True,
              help="Indexed PNG, palette index = class id, 0 = unmarked.")
@click.option("--out-model", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Directory for probability/segmentation outputs.")
@click.option("--classes", default=0, show_default=True,
              help="Class count; 0 infers it from the marks file.")
@_add_options(_shared_build_flags)
@_add_options(_shared_update_flags)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def train(ctx, image, marks, out_model, out_dir, classes, patch_size, branching,
          layers, iterations, seed, subsample, steps, binarise, overwrite,
          epsilon, config):
    """Build a dictionary for IMAGE, replay a marks file, export the model."""
    p = _merge(ctx, config, "train")
    grid = imgio.load_image(image)
    marks_map = imgio.load_indexed_png(p["marks"])
    if marks_map.shape != (grid.height, grid.width):
        raise click.UsageError(
            f"marks {marks_map.shape} do not match image "
            f"{(grid.height, grid.width)}")
    n_classes = p["classes"] or max(int(marks_map.max()), 2)

    click.echo(f"training on {image} ({grid.width}x{grid.height}, "
               f"C={n_classes})")
    tree, graph, transforms, _ = _build_pipeline(
        grid, p["patch_size"], p["branching"], p["layers"], p["iterations"],
        p["seed"], p["subsample"])

    marking = UserMarking.from_label_map(marks_map, n_classes)
    options = UpdateOptions(steps=p["steps"], binarise=p["binarise"],
                            overwrite=p["overwrite"], epsilon=p["epsilon"])
    t0 = time.perf_counter()
    probs = update(marking, transforms, options)
    _echo_timing("update", time.perf_counter() - t0)

    labels = final_label_stack(marking, transforms, options)
    model = train_model(tree, transforms, labels, {
        "image": str(image), "options": {"steps": options.steps,
                                         "binarise": options.binarise,
                                         "overwrite": options.overwrite,
                                         "epsilon": options.epsilon}})
    model.save(p["out_model"])
    click.echo(f"model -> {p['out_model']}")

    if p["out_dir"]:
        out = Path(p["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(out / "probabilities.npz", probabilities=probs)
        imgio.save_probability_tiff(
            [probs[:, c].reshape(grid.height, grid.width)
             for c in range(n_classes)], out / "probabilities.tif")
        seg = segment(probs, options.epsilon).reshape(grid.height, grid.width)
        imgio.save_indexed_png(seg, out / "segmentation.png")
        click.echo(f"outputs -> {out}")


@main.command(name="apply")
@click.argument("model", type=click.Path(exists=True))
@click.argument("inputs", type=click.Path(exists=True), nargs=-1, required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--epsilon", default=1e-6, show_default=True)
@click.option("--min-component", default=0, show_default=True,
              help="Remove connected components smaller than this voxel count.")
@click.option("--centres", default=0, show_default=True,
              help="Detect blob centres on this class layer (0 = off).")
@click.option("--centre-distance", default=5.0, show_default=True)
@click.option("--centre-threshold", default=0.5, show_default=True)
@click.option("--workers", default=2, show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def apply_cmd(ctx, model, inputs, out_dir, epsilon, min_component, centres,
              centre_distance, centre_threshold, workers, config):
    """Apply a trained MODEL to unseen images or volume stacks."""
    p = _merge(ctx, config, "apply")
    trained = TrainedModel.load(model)
    slices = []
    for path in inputs:
        slices.extend(imgio.load_stack(path))
    click.echo(f"applying {model} to {len(slices)} slice(s)")

    options = StackOptions(
        epsilon=p["epsilon"], min_component=p["min_component"],
        centres_class=p["centres"] or None,
        centre_min_distance=p["centre_distance"],
        centre_threshold=p["centre_threshold"], workers=p["workers"])

    def progress(done, total):
        click.echo(f"  slice {done}/{total}", err=True)

    t0 = time.perf_counter()
    probs, labels, centre_lists = apply_to_stack(slices, trained, options,
                                                 progress=progress)
    _echo_timing("transfer", time.perf_counter() - t0)

    out = Path(p["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    height, width = slices[0].height, slices[0].width
    np.savez_compressed(out / "probabilities.npz",
                        probabilities=np.stack(probs))
    for c in range(trained.n_classes):
        imgio.save_probability_tiff(
            [pr[:, c].reshape(height, width) for pr in probs],
            out / f"probability_class{c + 1}.tif")
    imgio.save_label_tiff(list(labels), out / "labels.tif")
    if len(slices) == 1:
        imgio.save_indexed_png(labels[0], out / "segmentation.png")
    if centre_lists is not None:
        write_centres_csv(out / "centres.csv", centre_lists)
        click.echo(f"  centres: {sum(len(c) for c in centre_lists)}")
    click.echo(f"outputs -> {out}")


@main.command()
@click.option("--sizes", default="256,512", show_default=True,
              help="Comma-separated square image sizes.")
@_add_options(_shared_build_flags)
@click.option("--repeats", default=15, show_default=True,
              help="Timed update runs per configuration.")
@click.option("--json-out", type=click.Path(), default=None)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def bench(ctx, sizes, patch_size, branching, layers, iterations, seed,
          subsample, repeats, json_out, config):
    """Measure graph construction and update latency on disk phantoms."""
    p = _merge(ctx, config, "bench")
    results = []
    for size in [int(s) for s in str(p["sizes"]).split(",")]:
        click.echo(f"== {size}x{size}, M={p['patch_size']}, "
                   f"b={p['branching']}, t={p['layers']}")
        n_disks = max(4, int(300 * (size / 512) ** 2))
        radius = (5.0, 8.0) if size >= 128 else (3.0, 4.0)
        ph = phantoms.disks(width=size, height=size, n_disks=n_disks,
                            radius_range=radius, seed=p["seed"])
        tree, graph, transforms, timings = _build_pipeline(
            ph.image, p["patch_size"], p["branching"], p["layers"],
            p["iterations"], p["seed"], p["subsample"])

        marks_map = phantoms.scripted_marks(ph, fraction=0.5, seed=p["seed"])
        marking = UserMarking.from_label_map(marks_map, 2)
        latencies = {}
        for steps in (1, 2):
            options = UpdateOptions(steps=steps, binarise=steps == 2,
                                    overwrite=steps == 2)
            update(marking, transforms, options)  # warm-up (JIT, caches)
            times = []
            for _ in range(p["repeats"]):
                t0 = time.perf_counter()
                update(marking, transforms, options)
                times.append(time.perf_counter() - t0)
            latencies[steps] = {
                "median_ms": float(np.median(times) * 1000.0),
                "p90_ms": float(np.percentile(times, 90) * 1000.0),
            }
            click.echo(f"  update steps={steps}: median "
                       f"{latencies[steps]['median_ms']:.1f} ms, p90 "
                       f"{latencies[steps]['p90_ms']:.1f} ms")
        results.append({
            "size": size, "patch_size": p["patch_size"],
            "branching": p["branching"], "layers": p["layers"],
            "K": tree.n_nodes, "nnz": int(graph.matrix.nnz),
            "build": {k: round(v * 1000.0, 1) for k, v in timings.items()},
            "update": latencies,
        })
    if p["json_out"]:
        Path(p["json_out"]).write_text(json.dumps(results, indent=2))
        click.echo(f"wrote {p['json_out']}")


@main.command(name="phantom")
@click.argument("kind", type=click.Choice(["disks", "two-texture", "cells"]))
@click.option("--out", type=click.Path(), required=True)
@click.option("--width", default=512, show_default=True)
@click.option("--height", default=512, show_default=True)
@click.option("--count", default=300, show_default=True,
              help="Disk/cell count (ignored for two-texture).")
@click.option("--radius", default="", show_default=False,
              help="min,max object radius; empty picks the kind's default.")
@click.option("--noise", default=0.04, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--marks-fraction", default=0.5, show_default=True,
              help="Fraction of true centres dotted in the scripted marks.")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def phantom_cmd(ctx, kind, out, width, height, count, radius, noise, seed,
                marks_fraction, config):
    """Generate a synthetic test image with exact ground truth."""
    p = _merge(ctx, config, "phantom")
    radius_range = None
    if p["radius"]:
        lo, hi = (float(v) for v in str(p["radius"]).split(","))
        radius_range = (lo, hi)
    if kind == "disks":
        ph = phantoms.disks(width=p["width"], height=p["height"],
                            n_disks=p["count"],
                            radius_range=radius_range or (5.0, 8.0),
                            noise=p["noise"], seed=p["seed"])
    elif kind == "two-texture":
        ph = phantoms.two_texture(width=p["width"], height=p["height"],
                                  noise=p["noise"], seed=p["seed"])
    else:
        ph = phantoms.cells(width=p["width"], height=p["height"],
                            n_cells=p["count"],
                            radius_range=radius_range or (12.0, 18.0),
                            noise=p["noise"], seed=p["seed"])
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    imgio.save_image_png(ph.image, out_dir / "image.png")
    imgio.save_indexed_png(ph.truth, out_dir / "truth.png")
    if len(ph.centres):
        marks_map = phantoms.scripted_marks(ph, fraction=p["marks_fraction"],
                                            seed=p["seed"])
        imgio.save_indexed_png(marks_map, out_dir / "marks.png")
        write_centres_csv(out_dir / "centres.csv",
                          [[(int(x), int(y), 1.0) for x, y in ph.centres]])
    click.echo(f"{kind} phantom -> {out_dir}")


if __name__ == "__main__":
    main()
