"""Stimulus bank: JSON schema, default bank, batch rendering.

A bank file lists the full parameterization of every stimulus. The
default bank ships 15 patches spanning the synthesizer's design space
(two oscillators, optional harmonic FM, static vs enveloped cutoff);
analyses are parameterized over the bank file, so it can be replaced.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .synth import (AdsrEnvelope, AudioBuffer, FilterSettings, FmSettings,
                    Patch, TARGET_LEVEL_DB, a_weighted_rms, render_patch)
from .wavio import read_wav, write_wav

BANK_RESOURCE = "bank.json"
RENDER_MANIFEST = "manifest.json"


def _env_to_dict(env: AdsrEnvelope) -> dict:
    return {"attack_s": env.attack_s, "decay_s": env.decay_s,
            "sustain_level": env.sustain_level, "release_s": env.release_s}


def _env_from_dict(d: dict) -> AdsrEnvelope:
    return AdsrEnvelope(d["attack_s"], d["decay_s"], d["sustain_level"], d["release_s"])


def patch_to_dict(patch: Patch) -> dict:
    return {
        "id": patch.id,
        "oscillator": patch.oscillator,
        "duty": patch.pulse_duty if patch.oscillator == "pulse" else None,
        "f0_hz": patch.f0_hz,
        "fm": None if patch.fm is None else {"ratio_k": patch.fm.ratio_k,
                                             "index_i": patch.fm.index_i},
        "filter": {
            "cutoff_floor_hz": patch.filter.cutoff_floor_hz,
            "cutoff_peak_hz": patch.filter.cutoff_peak_hz,
            "resonance_q": patch.filter.resonance_q,
            "cutoff_env": _env_to_dict(patch.filter.cutoff_env),
        },
        "gain_env": _env_to_dict(patch.gain_env),
        "duration_ms": patch.duration_ms,
    }


def patch_from_dict(d: dict) -> Patch:
    try:
        fm = d.get("fm")
        patch = Patch(
            id=str(d["id"]),
            oscillator=d["oscillator"],
            pulse_duty=d.get("duty") if d.get("duty") is not None else 0.5,
            f0_hz=d.get("f0_hz", 440.0),
            fm=None if fm is None else FmSettings(int(fm["ratio_k"]), float(fm["index_i"])),
            filter=FilterSettings(
                cutoff_floor_hz=float(d["filter"]["cutoff_floor_hz"]),
                cutoff_peak_hz=float(d["filter"]["cutoff_peak_hz"]),
                resonance_q=float(d["filter"]["resonance_q"]),
                cutoff_env=_env_from_dict(d["filter"]["cutoff_env"]),
            ),
            gain_env=_env_from_dict(d["gain_env"]),
            duration_ms=int(d.get("duration_ms", 1000)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed patch record: {exc}") from exc
    patch.validate()
    return patch


def load_bank(path: str | Path) -> list[Patch]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"bank file {path} is not valid JSON: {exc}") from exc
    records = doc.get("patches")
    if not isinstance(records, list) or not records:
        raise ConfigurationError(f"bank file {path} has no 'patches' list")
    patches = [patch_from_dict(r) for r in records]
    ids = [p.id for p in patches]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("bank contains duplicate stimulus ids")
    return patches


def save_bank(patches: list[Patch], path: str | Path, name: str = "custom") -> None:
    doc = {"version": 1, "name": name, "patches": [patch_to_dict(p) for p in patches]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def default_bank_text() -> str:
    return resources.files("timbrelab.resources").joinpath(BANK_RESOURCE).read_text()


def default_bank() -> list[Patch]:
    doc = json.loads(default_bank_text())
    return [patch_from_dict(r) for r in doc["patches"]]


def render_bank(patches: list[Patch], out_dir: str | Path) -> dict:
    """Render every patch to <id>.wav plus a manifest JSON.

    The manifest records each patch's parameters, the achieved A-weighted
    RMS in dBFS, and whether clip protection forced the level below the
    normalization target.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for patch in patches:
        buffer = render_patch(patch)
        write_wav(buffer, out / f"{patch.id}.wav")
        achieved = a_weighted_rms(buffer)
        achieved_db = 20.0 * np.log10(achieved)
        entries.append({
            "id": patch.id,
            "file": f"{patch.id}.wav",
            "parameters": patch_to_dict(patch),
            "a_weighted_rms_db": achieved_db,
            "clipped": bool(achieved_db < TARGET_LEVEL_DB - 1e-6),
        })
    manifest = {"target_level_db": TARGET_LEVEL_DB, "stimuli": entries}
    (out / RENDER_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_rendered_bank(render_dir: str | Path) -> list[tuple[str, AudioBuffer]]:
    """Read back a rendered bank directory in manifest order."""
    render_dir = Path(render_dir)
    manifest_path = render_dir / RENDER_MANIFEST
    if not manifest_path.exists():
        raise ConfigurationError(f"{render_dir} has no {RENDER_MANIFEST}")
    manifest = json.loads(manifest_path.read_text())
    return [(e["id"], read_wav(render_dir / e["file"])) for e in manifest["stimuli"]]
