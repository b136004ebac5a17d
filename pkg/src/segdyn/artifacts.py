"""Pipeline artifacts on disk: file layout, digests, manifest, validation.

Artifacts are deterministic for a fixed config and seed, so their SHA-256
digests double as a reproducibility check. The manifest records per-stage
wall time and output digests; wall times live only in the manifest, never
in digested artifacts.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .cover import cover_from_json
from .errors import MissingArtifactError
from .segments import load_library
from .transitions import tensor_from_json, transitions_from_json

__all__ = [
    "COVER_JSON", "LIBRARY_DIR", "MAX_DIFFERENCE_CSV", "TRANSITIONS_JSON",
    "TENSORS_JSON", "WORDS_JSON", "SHADOW_REPORT_JSON", "ENUMERATION_JSON",
    "ENTROPY_JSON", "BOUNDS_JSON", "REPORT_JSON", "MANIFEST_JSON",
    "write_json", "read_json", "file_digest", "require",
    "load_manifest", "record_stage", "check_artifacts",
]

COVER_JSON = "cover.json"
LIBRARY_DIR = "library"
MAX_DIFFERENCE_CSV = "max_difference.csv"
TRANSITIONS_JSON = "transitions.json"
TENSORS_JSON = "tensors.json"
WORDS_JSON = "words.json"
SHADOW_REPORT_JSON = "shadow_report.json"
ENUMERATION_JSON = "enumeration.json"
ENTROPY_JSON = "entropy.json"
BOUNDS_JSON = "bounds.json"
REPORT_JSON = "report.json"
MANIFEST_JSON = "manifest.json"


def write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def require(outdir: Path, relpath: str, needed_by: str) -> Path:
    """Path of a prerequisite artifact, or a MissingArtifactError naming it."""
    path = outdir / relpath
    if not path.exists():
        raise MissingArtifactError(
            f"stage '{needed_by}' needs artifact '{relpath}' "
            f"(not found in {outdir}); run the producing stage first")
    return path


def load_manifest(outdir: Path) -> dict:
    path = outdir / MANIFEST_JSON
    if path.exists():
        return read_json(path)
    return {"tool_version": None, "rng_seed": None, "config_echo": None, "stages": {}}


def record_stage(outdir: Path, stage: str, wall_time_s: float, outputs: list,
                 *, tool_version: str, rng_seed: int, config_echo: dict,
                 extra: dict | None = None) -> None:
    """Append one stage record with digests of everything it wrote."""
    manifest = load_manifest(outdir)
    manifest["tool_version"] = tool_version
    manifest["rng_seed"] = rng_seed
    manifest["config_echo"] = config_echo
    digests = {}
    for rel in outputs:
        path = outdir / rel
        if path.is_dir():
            for sub in sorted(path.rglob("*")):
                if sub.is_file():
                    digests[str(sub.relative_to(outdir))] = file_digest(sub)
        else:
            digests[rel] = file_digest(path)
    entry = {"wall_time_s": round(wall_time_s, 6), "outputs": digests}
    if extra:
        entry.update(extra)
    manifest["stages"][stage] = entry
    write_json(outdir / MANIFEST_JSON, manifest)


def _check_words_doc(doc: dict) -> None:
    for w in doc["words"]:
        if not isinstance(w["word"], list) or not all(isinstance(s, int) for s in w["word"]):
            raise ValueError(f"malformed word entry: {w}")


_VALIDATORS = {
    COVER_JSON: lambda p: cover_from_json(read_json(p)),
    TRANSITIONS_JSON: lambda p: transitions_from_json(read_json(p)),
    TENSORS_JSON: lambda p: [tensor_from_json(t) for t in read_json(p)["tensors"]],
    WORDS_JSON: lambda p: _check_words_doc(read_json(p)),
    SHADOW_REPORT_JSON: lambda p: read_json(p)["per_orbit"],
    ENUMERATION_JSON: lambda p: read_json(p)["reachable"],
    ENTROPY_JSON: lambda p: read_json(p)["metric_entropy"],
    BOUNDS_JSON: lambda p: read_json(p)["quantities"],
    REPORT_JSON: lambda p: read_json(p)["stages"],
    MAX_DIFFERENCE_CSV: lambda p: np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2),
}


def check_artifacts(outdir: Path) -> list:
    """Re-validate artifacts against the manifest without recomputation.

    Returns a list of problems: missing files, digest mismatches, or files
    that no longer parse under their schema.
    """
    outdir = Path(outdir)
    problems: list[str] = []
    manifest_path = outdir / MANIFEST_JSON
    if not manifest_path.exists():
        return [f"no manifest at {manifest_path}"]
    manifest = load_manifest(outdir)
    seen: set[str] = set()
    for stage, entry in sorted(manifest.get("stages", {}).items()):
        for rel, digest in sorted(entry.get("outputs", {}).items()):
            path = outdir / rel
            if not path.exists():
                problems.append(f"{stage}: {rel} is missing")
                continue
            if file_digest(path) != digest:
                problems.append(f"{stage}: {rel} does not match its recorded digest")
            if rel in seen:
                continue
            seen.add(rel)
            name = Path(rel).name
            validator = _VALIDATORS.get(name)
            if validator is None and rel.startswith(LIBRARY_DIR):
                continue
            if validator is not None:
                try:
                    validator(path)
                except Exception as err:
                    problems.append(f"{stage}: {rel} fails schema validation: {err}")
    if (outdir / LIBRARY_DIR / "library.json").exists():
        try:
            load_library(outdir / LIBRARY_DIR)
        except Exception as err:
            problems.append(f"library: fails schema validation: {err}")
    return problems
