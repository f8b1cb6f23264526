"""Command-line entry point.

Subcommands: synth render, features extract, ratings aggregate,
mds fit|scree, analyze correlate|dendrogram, simulate ratings,
run (full pipeline), serve (experiment service).

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import click
import numpy as np

from . import bank as bank_mod
from . import pipeline as pipeline_mod
from . import ratings as ratings_mod
from .descriptors import extract
from .errors import ConfigurationError, StageError
from .nmds import MdsConfig, nmds_fit, scree
from .simulate import (SimulatedRaterSpec, feature_space_distances,
                       latent_distances, simulate_ratings)
from .stats import collinearity_filter, correlation_table, feature_agglomeration
from .wavio import read_wav


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(2)
        except StageError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
    return wrapper


def _load_patches(bank_path: str | None):
    return bank_mod.load_bank(bank_path) if bank_path else bank_mod.default_bank()


@click.group()
def main():
    """Timbre-space laboratory for a subtractive synthesizer."""


@main.group()
def synth():
    """Stimulus rendering."""


@synth.command("render")
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None,
              help="Bank JSON (defaults to the packaged 15-stimulus bank).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@handles_errors
def synth_render(bank_path, out_dir):
    """Render every bank patch to WAV plus a manifest."""
    manifest = bank_mod.render_bank(_load_patches(bank_path), out_dir)
    for entry in manifest["stimuli"]:
        click.echo(f"{entry['id']}: {entry['a_weighted_rms_db']:.2f} dB A-rms")


@main.group()
def features():
    """Acoustic descriptor extraction."""


@features.command("extract")
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None,
              help="Bank JSON, or a directory rendered by 'synth render'.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def features_extract(bank_path, out_path):
    """One descriptor row per stimulus, canonical column names."""
    if bank_path and Path(bank_path).is_dir():
        rendered = bank_mod.load_rendered_bank(bank_path)
        ids = [sid for sid, _ in rendered]
        vectors = [extract(buffer) for _, buffer in rendered]
        columns = {name: np.array([getattr(v, name) for v in vectors])
                   for name in pipeline_mod.DESCRIPTOR_NAMES}
    else:
        ids, columns = pipeline_mod.extract_bank_features(_load_patches(bank_path))
    pipeline_mod.write_features_csv(ids, columns, out_path)
    click.echo(f"wrote {out_path} ({len(ids)} stimuli)")


@main.group("ratings")
def ratings_group():
    """Rating ingestion and aggregation."""


@ratings_group.command("aggregate")
@click.option("--ratings", "ratings_path", type=click.Path(exists=True), required=True)
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def ratings_aggregate(ratings_path, bank_path, out_path):
    """Mean dissimilarity matrix across included participants."""
    ids = [p.id for p in _load_patches(bank_path)]
    records = ratings_mod.load_records_jsonl(ratings_path)
    matrix = ratings_mod.mean_matrix(records, ids)
    ratings_mod.write_matrix_csv(matrix, out_path)
    click.echo(f"wrote {out_path} ({matrix.n}x{matrix.n})")


@main.group()
def mds():
    """Non-metric multidimensional scaling."""


@mds.command("fit")
@click.option("--matrix", "matrix_path", type=click.Path(exists=True), required=True)
@click.option("--dims", type=int, default=4, show_default=True)
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def mds_fit(matrix_path, dims, restarts, seed, out_path):
    matrix = ratings_mod.read_matrix_csv(matrix_path)
    cfg = MdsConfig(dims=dims, restarts=restarts, seed=seed)
    solution = nmds_fit(matrix.values, cfg)
    doc = pipeline_mod.solution_to_dict(solution, matrix.ids)
    doc["config"] = {"dims": dims, "restarts": restarts, "seed": seed}
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    click.echo(f"stress1={solution.stress1:.4f} r_squared={solution.r_squared:.4f}")


@mds.command("scree")
@click.option("--matrix", "matrix_path", type=click.Path(exists=True), required=True)
@click.option("--max-dims", type=int, default=6, show_default=True)
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def mds_scree(matrix_path, max_dims, restarts, seed, out_path):
    matrix = ratings_mod.read_matrix_csv(matrix_path)
    cfg = MdsConfig(dims=1, restarts=restarts, seed=seed)
    points = scree(matrix.values, max_dims, cfg)
    pipeline_mod.write_scree_csv(points, out_path)
    for pt in points:
        click.echo(f"dims={pt.dims} stress1={pt.stress1:.4f} r_squared={pt.r_squared:.4f}")


@main.group()
def analyze():
    """Dimension interpretation."""


@analyze.command("correlate")
@click.option("--coords", "solution_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", type=float, default=0.8, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def analyze_correlate(solution_path, features_path, threshold, out_path):
    """Collinearity-filtered Pearson table with significance marks."""
    ids, columns = pipeline_mod.read_features_csv(features_path)
    solution_ids, coords = pipeline_mod.load_solution(solution_path)
    if ids != solution_ids:
        raise ConfigurationError("features and solution list different stimuli")
    retained = collinearity_filter(columns, threshold, list(columns))
    report = correlation_table(coords, {name: columns[name] for name in retained})
    pipeline_mod.write_table_csv(report, out_path)
    click.echo(f"wrote {out_path} ({len(report.rows)} descriptors x {len(report.dims)} dims)")


@analyze.command("dendrogram")
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def analyze_dendrogram(features_path, out_path):
    """Average-linkage feature agglomeration under 1 - |Spearman r|."""
    _, columns = pipeline_mod.read_features_csv(features_path)
    tree = feature_agglomeration(columns)
    Path(out_path).write_text(
        json.dumps({"tree": tree.to_dict()}, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out_path}")


@main.group()
def simulate():
    """Synthetic data generation."""


@simulate.command("ratings")
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
@click.option("--participants", type=int, default=35, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--latent", type=click.Choice(["features", "coords"]), default="features",
              show_default=True, help="Latent distance source.")
@click.option("--coords-dims", type=int, default=4, show_default=True,
              help="Dimensionality of planted coordinates (latent=coords).")
@click.option("--out", "out_path", type=click.Path(), required=True)
@handles_errors
def simulate_ratings_cmd(bank_path, participants, sigma, seed, latent, coords_dims, out_path):
    """Simulated participants rating the bank."""
    patches = _load_patches(bank_path)
    ids = [p.id for p in patches]
    if latent == "coords":
        rng = np.random.default_rng(seed)
        distances = latent_distances(rng.standard_normal((len(ids), coords_dims)))
    else:
        _, columns = pipeline_mod.extract_bank_features(patches)
        distances = feature_space_distances(columns)
    records = simulate_ratings(SimulatedRaterSpec(participants, sigma), distances, ids, seed)
    ratings_mod.write_records_jsonl(records, out_path)
    click.echo(f"wrote {out_path} ({participants} participants, {len(records)} records)")


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file of PipelineConfig fields; flags override it.")
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
@click.option("--ratings", "ratings_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--dims", type=int, default=None)
@handles_errors
def run(config_path, bank_path, ratings_path, out_dir, seed, dims):
    """Full pipeline: render, extract, aggregate, scale, report."""
    settings: dict = {}
    if config_path:
        settings.update(json.loads(Path(config_path).read_text()))
    overrides = {"bank_path": bank_path, "ratings_path": ratings_path,
                 "out_dir": out_dir, "seed": seed, "dims": dims}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclass_fields(pipeline_mod.PipelineConfig)}
    unknown = set(settings) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    for required in ("ratings_path", "out_dir", "seed"):
        if settings.get(required) is None:
            raise ConfigurationError(f"missing required setting {required!r}")
    config = pipeline_mod.PipelineConfig(**settings)
    paths = pipeline_mod.run_full(config)
    for name in sorted(paths):
        click.echo(f"wrote {paths[name]}")


@main.command("serve")
@click.option("--bank", "bank_path", type=click.Path(exists=True), default=None)
@click.option("--log", "log_path", type=click.Path(), required=True,
              help="Append-only JSONL event log (created if missing).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Directory of built UI assets to serve at /.")
@handles_errors
def serve(bank_path, log_path, host, port, static_dir):
    """Run the experiment HTTP service."""
    import uvicorn

    from .service import create_app
    app = create_app(bank_path, log_path, static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
