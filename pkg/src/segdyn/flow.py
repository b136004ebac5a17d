"""ODE models and the time-t flow map via fixed-step RK4 integration.

All models expose a vectorized right-hand side: ``rhs`` accepts arrays of
shape (..., d) and returns the same shape, so whole batches of points are
advanced in lockstep. Fixed time steps make every result bit-reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np

from .errors import BlowupError

Array = np.ndarray

__all__ = [
    "IntegratorConfig",
    "LinearDiagonal",
    "Lorenz",
    "QuadraticGeneric",
    "FlowModel",
    "TrajectorySample",
    "advance",
    "advance_many",
    "sample_trajectory",
    "sample_path",
    "jacobian_norm",
    "jacobian_norms",
    "model_from_json",
    "model_to_json",
    "load_model",
]


def _as_vector(x, name: str = "state") -> Array:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings. ``step`` is the maximum step size."""

    step: float = 1e-3
    scheme: str = "rk4"

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if self.scheme.lower() != "rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}; only 'rk4' is available")


@dataclass(frozen=True, eq=False)
class LinearDiagonal:
    """Decoupled linear decay, dx_i/dt = -rates_i * x_i."""

    rates: Array
    model_id: ClassVar[str] = "LinearDiagonal"

    def __post_init__(self):
        object.__setattr__(self, "rates", _as_vector(self.rates, "rates"))

    @property
    def dimension(self) -> int:
        return self.rates.shape[0]

    def rhs(self, x: Array) -> Array:
        return -self.rates * x

    def parameters(self) -> dict:
        return {"rates": self.rates.tolist()}


@dataclass(frozen=True, eq=False)
class Lorenz:
    """The Lorenz system; defaults are the canonical chaotic parameters."""

    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    model_id: ClassVar[str] = "Lorenz"

    @property
    def dimension(self) -> int:
        return 3

    def rhs(self, x: Array) -> Array:
        out = np.empty_like(x)
        out[..., 0] = self.sigma * (x[..., 1] - x[..., 0])
        out[..., 1] = x[..., 0] * (self.rho - x[..., 2]) - x[..., 1]
        out[..., 2] = x[..., 0] * x[..., 1] - self.beta * x[..., 2]
        return out

    def parameters(self) -> dict:
        return {"sigma": self.sigma, "rho": self.rho, "beta": self.beta}


@dataclass(frozen=True, eq=False)
class QuadraticGeneric:
    """Generic quadratic vector field dx/dt = L x + Q(x, x) + f.

    Subsumes low-mode Galerkin truncations of fluid models: supply the linear
    matrix, the quadratic interaction tensor (Q[i, j, k] multiplies x_j x_k),
    and a constant forcing vector.
    """

    linear: Array
    quadratic: Array
    forcing: Array
    model_id: ClassVar[str] = "QuadraticGeneric"

    def __post_init__(self):
        L = np.asarray(self.linear, dtype=float)
        Q = np.asarray(self.quadratic, dtype=float)
        f = np.asarray(self.forcing, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError(f"linear part must be square, got shape {L.shape}")
        d = L.shape[0]
        if Q.shape != (d, d, d):
            raise ValueError(f"quadratic tensor must have shape ({d},{d},{d}), got {Q.shape}")
        if f.shape != (d,):
            raise ValueError(f"forcing must have shape ({d},), got {f.shape}")
        for name, arr in (("linear", L), ("quadratic", Q), ("forcing", f)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "linear", L)
        object.__setattr__(self, "quadratic", Q)
        object.__setattr__(self, "forcing", f)

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    def rhs(self, x: Array) -> Array:
        lin = x @ self.linear.T
        quad = np.einsum("ijk,...j,...k->...i", self.quadratic, x, x)
        return lin + quad + self.forcing

    def parameters(self) -> dict:
        return {
            "linear": self.linear.tolist(),
            "quadratic": self.quadratic.tolist(),
            "forcing": self.forcing.tolist(),
        }


FlowModel = Union[LinearDiagonal, Lorenz, QuadraticGeneric]

_MODEL_IDS = {
    "LinearDiagonal": LinearDiagonal,
    "Lorenz": Lorenz,
    "QuadraticGeneric": QuadraticGeneric,
}


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """States of one orbit on a uniform time grid starting at t=0."""

    times: Array
    states: Array

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or s.ndim != 2 or s.shape[0] != t.shape[0]:
            raise ValueError(f"inconsistent trajectory shapes {t.shape} vs {s.shape}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def _substep_count(duration: float, max_step: float) -> int:
    # Equal substeps no longer than max_step; the 1e-9 slack keeps an exact
    # multiple of the step from picking up a spurious extra substep.
    return max(1, math.ceil(duration / max_step - 1e-9))


def _rk4(model: FlowModel, states: Array, dt: float, n_steps: int, t_start: float = 0.0) -> Array:
    f = model.rhs
    y = states
    # overflow surfaces as a non-finite state, caught below; silence the
    # intermediate warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            k1 = f(y)
            k2 = f(y + (0.5 * dt) * k1)
            k3 = f(y + (0.5 * dt) * k2)
            k4 = f(y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                bad = int(np.flatnonzero(~np.all(np.isfinite(y), axis=-1))[0]) \
                    if y.ndim > 1 else None
                raise BlowupError(time=t_start + (i + 1) * dt, batch_index=bad)
    return y


def advance_many(model: FlowModel, states: Array, t: float, cfg: IntegratorConfig,
                 t_start: float = 0.0) -> Array:
    """Numerical F^t applied to a batch of points, shape (M, d) -> (M, d)."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    states = np.asarray(states, dtype=float)
    if t == 0:
        return states.copy()
    n = _substep_count(t, cfg.step)
    return _rk4(model, states, t / n, n, t_start=t_start)


def advance(model: FlowModel, x, t: float, cfg: IntegratorConfig) -> Array:
    """Numerical F^t(x) for a single point; t=0 returns x unchanged."""
    x = _as_vector(x)
    if x.shape[0] != model.dimension:
        raise ValueError(f"state has dimension {x.shape[0]}, model expects {model.dimension}")
    return advance_many(model, x[None, :], t, cfg)[0]


def sample_path(model: FlowModel, states: Array, horizon: float, n_samples: int,
                cfg: IntegratorConfig) -> tuple[Array, Array]:
    """Advance a batch along a uniform grid over [0, horizon] in one pass.

    Returns (times of shape (K,), states of shape (M, K, d)). Each grid
    interval continues from the previous grid state, so the whole path is a
    single continuous integration.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n_samples < 2:
        raise ValueError(f"n_samples must be at least 2, got {n_samples}")
    states = np.asarray(states, dtype=float)
    times = np.linspace(0.0, horizon, n_samples)
    dt_grid = horizon / (n_samples - 1)
    n_sub = _substep_count(dt_grid, cfg.step)
    out = np.empty((states.shape[0], n_samples, states.shape[1]))
    out[:, 0] = states
    y = states
    for k in range(1, n_samples):
        y = _rk4(model, y, dt_grid / n_sub, n_sub, t_start=times[k - 1])
        out[:, k] = y
    return times, out


def sample_trajectory(model: FlowModel, x, horizon: float, n_samples: int,
                      cfg: IntegratorConfig) -> TrajectorySample:
    """Sampled orbit of a single point on a uniform grid over [0, horizon]."""
    x = _as_vector(x)
    times, states = sample_path(model, x[None, :], horizon, n_samples, cfg)
    return TrajectorySample(times=times, states=states[0])


def jacobian_norms(model: FlowModel, points: Array, t: float, cfg: IntegratorConfig,
                   fd_step: float = 1e-5) -> Array:
    """Operator 2-norm of the finite-difference Jacobian of F^t at each point.

    Central differences: column j of the Jacobian comes from perturbing
    coordinate j by +-fd_step and advancing both copies.
    """
    if fd_step <= 0:
        raise ValueError(f"fd_step must be positive, got {fd_step}")
    points = np.asarray(points, dtype=float)
    m, d = points.shape
    eye = np.eye(d) * fd_step
    # Layout: [p0+e0, p0-e0, p0+e1, ...] for each point, one batched advance.
    perturbed = np.empty((m, d, 2, d))
    perturbed[:, :, 0, :] = points[:, None, :] + eye[None, :, :]
    perturbed[:, :, 1, :] = points[:, None, :] - eye[None, :, :]
    images = advance_many(model, perturbed.reshape(-1, d), t, cfg).reshape(m, d, 2, d)
    jac = (images[:, :, 0, :] - images[:, :, 1, :]) / (2.0 * fd_step)
    # jac[m, j, :] is dF/dx_j, i.e. the transpose of the Jacobian matrix.
    return np.linalg.svd(np.swapaxes(jac, 1, 2), compute_uv=False)[:, 0]


def jacobian_norm(model: FlowModel, x, t: float, cfg: IntegratorConfig,
                  fd_step: float = 1e-5) -> float:
    """Operator 2-norm of the finite-difference Jacobian of y -> F^t(y) at x."""
    x = _as_vector(x)
    return float(jacobian_norms(model, x[None, :], t, cfg, fd_step=fd_step)[0])


def model_from_json(doc: dict) -> FlowModel:
    """Build a model from {"model_id": ..., "dimension": ..., "parameters": {...}}."""
    if "model_id" not in doc:
        raise ValueError("model document missing 'model_id'")
    model_id = doc["model_id"]
    if model_id not in _MODEL_IDS:
        raise ValueError(f"unknown model_id {model_id!r}; expected one of {sorted(_MODEL_IDS)}")
    params = doc.get("parameters", {})
    if model_id == "LinearDiagonal":
        model: FlowModel = LinearDiagonal(rates=np.asarray(params["rates"], dtype=float))
    elif model_id == "Lorenz":
        model = Lorenz(
            sigma=float(params.get("sigma", 10.0)),
            rho=float(params.get("rho", 28.0)),
            beta=float(params.get("beta", 8.0 / 3.0)),
        )
    else:
        model = QuadraticGeneric(
            linear=np.asarray(params["linear"], dtype=float),
            quadratic=np.asarray(params["quadratic"], dtype=float),
            forcing=np.asarray(params["forcing"], dtype=float),
        )
    declared = doc.get("dimension")
    if declared is not None and int(declared) != model.dimension:
        raise ValueError(
            f"declared dimension {declared} does not match parameters ({model.dimension})")
    return model


def model_to_json(model: FlowModel) -> dict:
    return {
        "model_id": model.model_id,
        "dimension": model.dimension,
        "parameters": model.parameters(),
    }


def load_model(path) -> FlowModel:
    """Read a model definition from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
