"""Full-pipeline orchestration and artifact formats.

Stages: render bank -> extract features -> aggregate ratings -> scree ->
fit at the configured dimensionality -> collinearity filter ->
correlation table + dendrogram. Every artifact is stamped with the
config hash and seed; wall-clock timestamps live only in the bundle
manifest, so a rerun with the same inputs and seed is byte-identical
everywhere else.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import bank as bank_mod
from . import ratings as ratings_mod
from .descriptors import DESCRIPTOR_NAMES, extract
from .errors import ConfigurationError, StageError
from .nmds import MdsConfig, MdsSolution, nmds_fit, scree
from .stats import (CorrelationReport, collinearity_filter, correlation_table,
                    feature_agglomeration)

ARTIFACTS = ("manifest.json", "matrix.csv", "features.csv", "scree.csv",
             "solution.json", "table.csv", "tree.json")
FAILED_MARKER = "FAILED"


@dataclass
class PipelineConfig:
    ratings_path: str
    out_dir: str
    seed: int
    bank_path: str | None = None      # None -> packaged default bank
    dims: int = 4
    scree_max_dims: int = 6
    restarts: int = 20
    max_iters: int = 500
    stress_tol: float = 1e-7
    collinearity_threshold: float = 0.8
    priority: list[str] = field(default_factory=lambda: list(DESCRIPTOR_NAMES))
    control_rating_min: float = ratings_mod.CONTROL_RATING_MIN
    max_control_violations: int = ratings_mod.MAX_CONTROL_VIOLATIONS

    def mds_config(self, dims: int | None = None) -> MdsConfig:
        return MdsConfig(dims=dims if dims is not None else self.dims,
                         max_iters=self.max_iters, stress_tol=self.stress_tol,
                         restarts=self.restarts, seed=self.seed)


def config_hash(config: PipelineConfig) -> str:
    """Content-addressed stamp: configuration plus input-file digests.

    The output directory and raw input paths are excluded so a rerun on
    the same inputs stamps identically wherever it writes.
    """
    payload = asdict(config)
    payload.pop("out_dir")
    for key in ("ratings_path", "bank_path"):
        path = payload.pop(key)
        if path and Path(path).exists():
            digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        else:
            digest = "default" if path is None else f"missing:{path}"
        payload[f"{key}_digest"] = digest
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _stamp(config: PipelineConfig) -> str:
    return f"config_hash={config_hash(config)} seed={config.seed}"


def write_features_csv(ids: list[str], columns: dict[str, np.ndarray],
                       path: str | Path, stamp: str | None = None) -> None:
    buf = io.StringIO()
    if stamp:
        buf.write(f"# {stamp}\n")
    names = list(columns)
    buf.write(",".join(["stimulus_id"] + names) + "\n")
    for row, sid in enumerate(ids):
        values = [repr(float(columns[name][row])) for name in names]
        buf.write(",".join([sid] + values) + "\n")
    Path(path).write_text(buf.getvalue())


def read_features_csv(path: str | Path) -> tuple[list[str], dict[str, np.ndarray]]:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2:
        raise ConfigurationError(f"{path} has no feature rows")
    header = [c.strip() for c in lines[0].split(",")]
    if header[0] != "stimulus_id":
        raise ConfigurationError(f"{path}: first column must be stimulus_id")
    ids = []
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        ids.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    data = np.array(rows)
    return ids, {name: data[:, k] for k, name in enumerate(header[1:])}


def write_scree_csv(points, path: str | Path, stamp: str | None = None) -> None:
    buf = io.StringIO()
    if stamp:
        buf.write(f"# {stamp}\n")
    buf.write("dims,stress1,r_squared\n")
    for pt in points:
        buf.write(f"{pt.dims},{pt.stress1!r},{pt.r_squared!r}\n")
    Path(path).write_text(buf.getvalue())


def solution_to_dict(solution: MdsSolution, ids: list[str]) -> dict:
    return {
        "stimulus_ids": ids,
        "dims": solution.coords.shape[1],
        "coords": [[float(v) for v in row] for row in solution.coords],
        "stress1": solution.stress1,
        "r_squared": solution.r_squared,
        "disparities": [float(v) for v in solution.disparities],
        "pair_order": "upper-triangle, row-major",
        "iterations_used": solution.iterations_used,
        "restart_index": solution.restart_index,
    }


def load_solution(path: str | Path) -> tuple[list[str], np.ndarray]:
    doc = json.loads(Path(path).read_text())
    return list(doc["stimulus_ids"]), np.array(doc["coords"], dtype=np.float64)


def write_table_csv(report: CorrelationReport, path: str | Path,
                    stamp: str | None = None) -> None:
    buf = io.StringIO()
    if stamp:
        buf.write(f"# {stamp}\n")
    cols = ["descriptor"]
    for d in report.dims:
        cols += [f"dim{d}_r", f"dim{d}_p", f"dim{d}_stars"]
    buf.write(",".join(cols) + "\n")
    for i, name in enumerate(report.rows):
        cells = [name]
        for j in range(len(report.dims)):
            cells += [repr(float(report.r[i, j])), repr(float(report.p[i, j])),
                      report.stars[i][j]]
        buf.write(",".join(cells) + "\n")
    Path(path).write_text(buf.getvalue())


def _json_artifact(payload: dict, config: PipelineConfig, path: Path) -> None:
    payload = {"config_hash": config_hash(config), "seed": config.seed, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def extract_bank_features(patches) -> tuple[list[str], dict[str, np.ndarray]]:
    """Render the bank in memory and extract one descriptor row per stimulus."""
    ids = [p.id for p in patches]
    vectors = [extract(bank_mod.render_patch(patch)) for patch in patches]
    columns = {name: np.array([getattr(v, name) for v in vectors])
               for name in DESCRIPTOR_NAMES}
    return ids, columns


def run_full(config: PipelineConfig) -> dict[str, Path]:
    """Run every stage; on failure, write a FAILED marker naming the stage."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(config)
    paths = {name: out / name for name in ARTIFACTS}
    stage = "config"
    try:
        patches = (bank_mod.load_bank(config.bank_path) if config.bank_path
                   else bank_mod.default_bank())
        ids = [p.id for p in patches]

        stage = "render"
        render_manifest = bank_mod.render_bank(patches, out / "stimuli")

        stage = "features"
        _, columns = extract_bank_features(patches)
        write_features_csv(ids, columns, paths["features.csv"], stamp)

        stage = "ratings"
        if not Path(config.ratings_path).exists():
            raise ConfigurationError(f"ratings file {config.ratings_path} does not exist")
        records = ratings_mod.load_records_jsonl(config.ratings_path)
        matrix = ratings_mod.mean_matrix(
            records, ids,
            control_rating_min=config.control_rating_min,
            max_control_violations=config.max_control_violations)
        ratings_mod.write_matrix_csv(matrix, paths["matrix.csv"], stamp)

        stage = "scree"
        max_dims = min(config.scree_max_dims, matrix.n - 1)
        scree_points = scree(matrix.values, max_dims, config.mds_config())
        write_scree_csv(scree_points, paths["scree.csv"], stamp)

        stage = "mds"
        mds_cfg = config.mds_config()
        solution = nmds_fit(matrix.values, mds_cfg)
        solution_doc = solution_to_dict(solution, ids)
        solution_doc["config"] = asdict(mds_cfg)
        _json_artifact(solution_doc, config, paths["solution.json"])

        stage = "analysis"
        retained = collinearity_filter(columns, config.collinearity_threshold,
                                       config.priority)
        report = correlation_table(solution.coords,
                                   {name: columns[name] for name in retained})
        write_table_csv(report, paths["table.csv"], stamp)
        tree = feature_agglomeration(columns)
        _json_artifact({"tree": tree.to_dict()}, config, paths["tree.json"])

        stage = "manifest"
        _json_artifact({
            "created_at": datetime.now(timezone.utc).isoformat(),
            "config": asdict(config),
            "artifacts": sorted(name for name in ARTIFACTS if name != "manifest.json"),
            "stimuli": render_manifest["stimuli"],
            "retained_descriptors": retained,
        }, config, paths["manifest.json"])
    except Exception as exc:
        (out / FAILED_MARKER).write_text(f"stage={stage}\n{exc}\n")
        raise StageError(stage, exc) from exc
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    return paths
