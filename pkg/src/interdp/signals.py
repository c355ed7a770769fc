"""Input generators and plain LTI stepping shared by the simulator and
the offline signature computation."""

from __future__ import annotations

import numpy as np

from .model import LinearDynamics


def prbs(n_steps: int, n_u: int, seed: int, amplitude: float = 1.0, period: int = 1) -> np.ndarray:
    """Pseudo-random binary sequence of shape ``(n_steps, n_u)``.

    Each channel takes values in ``{-amplitude, +amplitude}`` and holds
    each value for ``period`` steps.
    """
    rng = np.random.default_rng(seed)
    n_bits = -(-n_steps // period) if n_steps else 0
    bits = rng.integers(0, 2, size=(n_bits, n_u))
    levels = amplitude * (2.0 * bits - 1.0)
    return np.repeat(levels, period, axis=0)[:n_steps]


def simulate_lti(dyn: LinearDynamics, x0, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free run of one mode. Returns ``(Y, X)`` with one row per input row."""
    x = np.array(x0, dtype=float)
    U = np.asarray(inputs, dtype=float).reshape(len(inputs), dyn.n_u)
    Y = np.empty((len(U), dyn.n_y))
    X = np.empty((len(U), dyn.n_x))
    for k, u in enumerate(U):
        X[k] = x
        Y[k] = dyn.C @ x + dyn.D @ u
        x = dyn.A @ x + dyn.B @ u
    return Y, X
