"""Forward integration of the causal interaction dynamics.

The rate of change of response j under constant drug input u = d @ B.T is

    dx_j/dt = eps_j * phi( sum_{i != j} x_i * w_ij + u_j ) + w_jj * x_j

where phi is a saturating envelope (identity, clipped linear, or tanh
sigmoid) and the diagonal of W carries the (negative) self-decay.  With the
identity envelope and eps = 1 this is the linear system dx/dt = x @ W + u
whose steady state matches the closed form in :mod:`perturbpred.linear`.

Integration is fixed-step RK4: the systems of interest are small and
non-stiff, and a deterministic step sequence keeps tests reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DivergenceError
from .types import InteractionMatrix, TargetMap, W_FORM

DEFAULT_DT = 0.01
DEFAULT_T_MAX = 200.0
DEFAULT_TOL = 1e-8

ENVELOPES = ("identity", "clipped-linear", "sigmoid")


@dataclass(frozen=True)
class OdeModel:
    """Interaction matrix, saturation rates, envelope choice, and target map."""

    W: InteractionMatrix
    B: TargetMap
    epsilon: np.ndarray
    envelope: str = "identity"
    clip_bound: float = 10.0

    def __post_init__(self):
        if self.W.form != W_FORM:
            raise ValueError("OdeModel requires a W-form interaction matrix")
        eps = np.array(self.epsilon, dtype=float)
        if eps.ndim == 0:
            eps = np.full(self.W.size, float(eps))
        if eps.shape != (self.W.size,):
            raise DimensionError(
                f"epsilon must have length {self.W.size}, got shape {eps.shape}"
            )
        if np.any(eps <= 0):
            raise ValueError("epsilon entries must be positive")
        eps.setflags(write=False)
        object.__setattr__(self, "epsilon", eps)
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}; choose from {ENVELOPES}")
        if self.envelope == "clipped-linear" and self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive")
        if self.B.n_responses != self.W.size:
            raise DimensionError(
                f"target map has {self.B.n_responses} responses, W is {self.W.size}x{self.W.size}"
            )

    @property
    def size(self):
        return self.W.size


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one integration: times (hours) and m x p states."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("trajectory states must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def final_state(self):
        return self.states[-1]


def _apply_envelope(v, envelope, bound):
    if envelope == "identity":
        return v
    if envelope == "clipped-linear":
        return np.clip(v, -bound, bound)
    return np.tanh(v)


def make_rhs(model: OdeModel, d):
    """Right-hand side closure for a fixed dose vector d."""
    W = model.W.values
    d = np.asarray(d, dtype=float)
    if d.shape != (model.B.n_drugs,):
        raise DimensionError(
            f"dose vector must have length {model.B.n_drugs}, got shape {d.shape}"
        )
    u = model.B.values @ d
    diag = np.diag(W)
    W_off = W - np.diag(diag)
    eps = model.epsilon

    def rhs(x):
        drive = x @ W_off + u
        return eps * _apply_envelope(drive, model.envelope, model.clip_bound) + diag * x

    return rhs


def integrate(model: OdeModel, d, x0=None, t_end=50.0, dt=DEFAULT_DT) -> Trajectory:
    """Fixed-step RK4 integration from x0 (default 0) to t_end.

    Raises DivergenceError with the offending time if the state leaves the
    finite range (blow-up under an unstable W).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    rhs = make_rhs(model, d)
    p = model.size
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (p,):
        raise DimensionError(f"x0 must have length {p}, got shape {x.shape}")

    n_steps = int(np.ceil(t_end / dt))
    times = [0.0]
    states = [x.copy()]
    t = 0.0
    for _ in range(n_steps):
        h = min(dt, t_end - t)
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"trajectory diverged at t = {t:g}", time=t)
        times.append(t)
        states.append(x.copy())
    return Trajectory(np.array(times), np.array(states))


@dataclass(frozen=True)
class SteadyStateResult:
    """Final state of a run-to-equilibrium integration."""

    state: np.ndarray
    converged: bool
    t_reached: float
    rate_norm: float


def steady_state(
    model: OdeModel,
    d,
    tol: float = DEFAULT_TOL,
    t_max: float = DEFAULT_T_MAX,
    dt: float = DEFAULT_DT,
    x0=None,
) -> SteadyStateResult:
    """Integrate until the max-norm of dx/dt drops below tol or t_max is hit.

    Non-convergence is reported in the result rather than raised: callers
    fitting parameters want the partial state to decide how to backtrack.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = make_rhs(model, d)
    p = model.size
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (p,):
        raise DimensionError(f"x0 must have length {p}, got shape {x.shape}")

    t = 0.0
    rate = rhs(x)  # doubles as k1 of the next step
    while t < t_max:
        if np.max(np.abs(rate)) < tol:
            return SteadyStateResult(x, True, t, float(np.max(np.abs(rate))))
        h = min(dt, t_max - t)
        k1 = rate
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"trajectory diverged at t = {t:g}", time=t)
        rate = rhs(x)
    rate_norm = float(np.max(np.abs(rate)))
    return SteadyStateResult(x, rate_norm < tol, t, rate_norm)
