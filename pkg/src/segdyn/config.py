"""Pipeline configuration: a single JSON document, validated up front.

Every numeric field is checked before any computation starts, and all
offending fields are reported together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cover import BoxDomain
from .errors import ConfigError
from .flow import FlowModel, IntegratorConfig, model_from_json
from .quantities import quantity_from_json

Array = np.ndarray

__all__ = ["PipelineConfig", "load_config", "parse_config"]

_DEFAULTS = {
    "segment_samples": 11,
    "samples_per_cell": 100,
    "tensor_order": 3,
    "word_length": 10,
    "rng_seed": 0,
    "integrator_step": 1e-3,
    "boundary_samples": 32,
    "collocation_cap": 2_000_000,
    "delta_cap_fraction": 0.25,
    "delta_floor": 1e-9,
    "calibration_time_samples": 17,
    "expansion_m_max": 2,
    "encode_points": 100,
    "encode_draw_budget": 200_000,
    "enumerate_from": 1,
    "enumerate_mode": "markov",
    "enumeration_cap": 100_000,
    "bounds_from": 1,
    "measure_samples": 20_000,
    "jobs": 1,
}


@dataclass(eq=False)
class PipelineConfig:
    model: FlowModel
    domain: BoxDomain
    epsilon: float
    horizon: float
    resolution: list
    segment_samples: int
    samples_per_cell: int
    tensor_order: int
    word_length: int
    quantities: list
    rng_seed: int
    output_dir: str
    integrator_step: float
    boundary_samples: int
    collocation_cap: int
    delta_cap_fraction: float
    delta_floor: float
    calibration_time_samples: int
    expansion_m_max: int
    encode_points: int
    encode_draw_budget: int
    initial_points: Array | None
    enumerate_from: int
    enumerate_mode: str
    enumeration_cap: int
    bounds_from: int
    measure_samples: int
    jobs: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(step=self.integrator_step)

    def delta_max(self) -> float:
        return self.delta_cap_fraction * float(self.domain.widths.min())


def _get_number(doc: dict, key: str, problems: list, *, minimum=None,
                strict: bool = False, integer: bool = False, default=None):
    value = doc.get(key, default)
    if value is None:
        problems.append(f"{key}: missing")
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{key}: expected a number, got {value!r}")
        return None
    if integer and int(value) != value:
        problems.append(f"{key}: expected an integer, got {value!r}")
        return None
    value = int(value) if integer else float(value)
    if minimum is not None:
        if strict and value <= minimum:
            problems.append(f"{key}: must be > {minimum}, got {value}")
            return None
        if not strict and value < minimum:
            problems.append(f"{key}: must be >= {minimum}, got {value}")
            return None
    return value


def parse_config(doc: dict) -> PipelineConfig:
    """Validate a configuration document, reporting every problem at once."""
    problems: list[str] = []

    model = None
    try:
        model = model_from_json(doc.get("model") or {})
    except (ValueError, KeyError, TypeError) as err:
        problems.append(f"model: {err}")

    domain = None
    try:
        dom = doc.get("domain") or {}
        domain = BoxDomain(lower=np.asarray(dom["lower"], dtype=float),
                           upper=np.asarray(dom["upper"], dtype=float))
    except (ValueError, KeyError, TypeError) as err:
        problems.append(f"domain: {err}")
    if model is not None and domain is not None and domain.dimension != model.dimension:
        problems.append(
            f"domain: dimension {domain.dimension} does not match model ({model.dimension})")

    epsilon = _get_number(doc, "epsilon", problems, minimum=0, strict=True)
    horizon = _get_number(doc, "horizon", problems, minimum=0, strict=True)

    resolution = doc.get("resolution")
    if resolution is None:
        problems.append("resolution: missing")
    else:
        try:
            resolution = [int(r) for r in resolution]
            if any(r < 1 for r in resolution):
                problems.append(f"resolution: entries must be >= 1, got {resolution}")
            if model is not None and len(resolution) != model.dimension:
                problems.append(
                    f"resolution: needs {model.dimension} entries, got {len(resolution)}")
        except (TypeError, ValueError):
            problems.append(f"resolution: expected a list of integers, got {resolution!r}")

    d = _DEFAULTS
    segment_samples = _get_number(doc, "segment_samples", problems, minimum=2,
                                  integer=True, default=d["segment_samples"])
    samples_per_cell = _get_number(doc, "samples_per_cell", problems, minimum=1,
                                   integer=True, default=d["samples_per_cell"])
    tensor_order = _get_number(doc, "tensor_order", problems, minimum=2,
                               integer=True, default=d["tensor_order"])
    word_length = _get_number(doc, "word_length", problems, minimum=1,
                              integer=True, default=d["word_length"])
    rng_seed = _get_number(doc, "rng_seed", problems, minimum=0, integer=True,
                           default=d["rng_seed"])
    integrator_step = _get_number(doc, "integrator_step", problems, minimum=0,
                                  strict=True, default=d["integrator_step"])
    boundary_samples = _get_number(doc, "boundary_samples", problems, minimum=0,
                                   integer=True, default=d["boundary_samples"])
    collocation_cap = _get_number(doc, "collocation_cap", problems, minimum=1,
                                  integer=True, default=d["collocation_cap"])
    delta_cap_fraction = _get_number(doc, "delta_cap_fraction", problems, minimum=0,
                                     strict=True, default=d["delta_cap_fraction"])
    delta_floor = _get_number(doc, "delta_floor", problems, minimum=0, strict=True,
                              default=d["delta_floor"])
    calibration_time_samples = _get_number(doc, "calibration_time_samples", problems,
                                           minimum=2, integer=True,
                                           default=d["calibration_time_samples"])
    expansion_m_max = _get_number(doc, "expansion_m_max", problems, minimum=1,
                                  integer=True, default=d["expansion_m_max"])
    encode_points = _get_number(doc, "encode_points", problems, minimum=1,
                                integer=True, default=d["encode_points"])
    encode_draw_budget = _get_number(doc, "encode_draw_budget", problems, minimum=1,
                                     integer=True, default=d["encode_draw_budget"])
    enumerate_from = _get_number(doc, "enumerate_from", problems, minimum=1,
                                 integer=True, default=d["enumerate_from"])
    enumeration_cap = _get_number(doc, "enumeration_cap", problems, minimum=1,
                                  integer=True, default=d["enumeration_cap"])
    bounds_from = _get_number(doc, "bounds_from", problems, minimum=1,
                              integer=True, default=d["bounds_from"])
    measure_samples = _get_number(doc, "measure_samples", problems, minimum=1,
                                  integer=True, default=d["measure_samples"])
    jobs = _get_number(doc, "jobs", problems, minimum=1, integer=True,
                       default=d["jobs"])

    enumerate_mode = doc.get("enumerate_mode", d["enumerate_mode"])
    if enumerate_mode not in ("markov", "tensor"):
        problems.append(f"enumerate_mode: must be 'markov' or 'tensor', got {enumerate_mode!r}")

    output_dir = doc.get("output_dir")
    if not output_dir or not isinstance(output_dir, str):
        problems.append(f"output_dir: expected a nonempty string, got {output_dir!r}")

    quantities = []
    for i, qdoc in enumerate(doc.get("quantities", [{"kind": "energy"}])):
        try:
            quantities.append(quantity_from_json(qdoc))
        except (ValueError, KeyError, TypeError) as err:
            problems.append(f"quantities[{i}]: {err}")

    initial_points = None
    if doc.get("initial_points") is not None:
        try:
            initial_points = np.asarray(doc["initial_points"], dtype=float)
            if initial_points.ndim != 2 or (
                    model is not None and initial_points.shape[1] != model.dimension):
                problems.append(
                    f"initial_points: expected shape (k, {getattr(model, 'dimension', '?')})")
        except (ValueError, TypeError) as err:
            problems.append(f"initial_points: {err}")

    if problems:
        raise ConfigError(problems)
    return PipelineConfig(
        model=model, domain=domain, epsilon=epsilon, horizon=horizon,
        resolution=resolution, segment_samples=segment_samples,
        samples_per_cell=samples_per_cell, tensor_order=tensor_order,
        word_length=word_length, quantities=quantities, rng_seed=rng_seed,
        output_dir=output_dir, integrator_step=integrator_step,
        boundary_samples=boundary_samples, collocation_cap=collocation_cap,
        delta_cap_fraction=delta_cap_fraction, delta_floor=delta_floor,
        calibration_time_samples=calibration_time_samples,
        expansion_m_max=expansion_m_max, encode_points=encode_points,
        encode_draw_budget=encode_draw_budget, initial_points=initial_points,
        enumerate_from=enumerate_from, enumerate_mode=enumerate_mode,
        enumeration_cap=enumeration_cap, bounds_from=bounds_from,
        measure_samples=measure_samples, jobs=jobs, raw=dict(doc),
    )


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Read, override (seed/out/jobs from the command line), and validate."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as err:
        raise ConfigError([f"config is not valid JSON: {err}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a JSON object"])
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return parse_config(doc)
