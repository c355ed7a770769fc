"""Parity-space residual generation and mode signatures.

For a mode with dynamics (A, B, C, D) and a window of s+1 samples, the
stacked measurements satisfy

    Y = O x_k + H U,    O = [C; CA; ...; CA^s]

where H is the block-Toeplitz input-effect matrix. Any W whose rows span
the left null space of O cancels the unknown state, so r = W (Y - H U)
is zero whenever the window was produced by this mode.

Residuals of every mode are evaluated on every mode's behavior to build
mirror signatures; their concatenation is the mode signature, and modes
with equal signatures are merged into one diagnosability group.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import HybridModel, LinearDynamics
from .signals import prbs, simulate_lti

__all__ = [
    "NoRedundancyError",
    "WindowUnderfullError",
    "ResidualGenerator",
    "FilterConfig",
    "Group",
    "ResidualBank",
    "ResidualMonitor",
    "observability_matrix",
    "input_effect_matrix",
    "build_generator",
    "eval_residuals",
    "filter_residuals",
    "mirror_signature",
    "mode_signature",
    "diagnosability_partition",
    "build_residual_bank",
    "DEFAULT_SIGNATURE_SEED",
]

DEFAULT_SIGNATURE_SEED = 1234
RANK_RTOL = 1e-10


class NoRedundancyError(ValueError):
    """The observability matrix has no left null space: no ARR exists."""


class WindowUnderfullError(ValueError):
    """Fewer than s+1 samples were supplied to a generator."""


def observability_matrix(dyn: LinearDynamics, s: int) -> np.ndarray:
    blocks, CA = [], dyn.C
    for _ in range(s + 1):
        blocks.append(CA)
        CA = CA @ dyn.A
    return np.vstack(blocks)


def input_effect_matrix(dyn: LinearDynamics, s: int) -> np.ndarray:
    """Block lower-triangular Toeplitz matrix mapping stacked inputs to outputs."""
    n_y, n_u = dyn.n_y, dyn.n_u
    markov = [dyn.D]
    AkB = dyn.B
    for _ in range(s):
        markov.append(dyn.C @ AkB)
        AkB = dyn.A @ AkB
    H = np.zeros(((s + 1) * n_y, (s + 1) * n_u))
    for i in range(s + 1):
        for j in range(i + 1):
            H[i * n_y:(i + 1) * n_y, j * n_u:(j + 1) * n_u] = markov[i - j]
    return H


@dataclass(frozen=True, eq=False)
class ResidualGenerator:
    mode: str | None
    s: int
    W: np.ndarray
    H: np.ndarray
    n_y: int
    n_u: int

    @property
    def n_residuals(self) -> int:
        return self.W.shape[0]


def _left_null_space(O: np.ndarray) -> np.ndarray:
    U, sv, _ = np.linalg.svd(O, full_matrices=True)
    tol = RANK_RTOL * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol)) if sv.size and sv[0] > 0 else 0
    N = U[:, rank:].T
    # Scale each row so that its largest entry is +1: residuals then read
    # as plain linear forms (e.g. y1 - y2) and the sign is deterministic.
    for i, row in enumerate(N):
        mags = np.abs(row)
        j = int(np.flatnonzero(mags >= mags.max() * (1 - 1e-9))[0])
        N[i] = row / row[j]
    return N


def build_generator(dynamics: LinearDynamics, s: int, mode: str | None = None) -> ResidualGenerator:
    """Parity-space residual generator over a window of ``s + 1`` samples."""
    if s < 0:
        raise ValueError(f"window length must be >= 0, got {s}")
    O = observability_matrix(dynamics, s)
    W = _left_null_space(O)
    if W.shape[0] == 0:
        raise NoRedundancyError(
            f"mode {mode!r}: observability matrix of order {s} has full row rank, no ARR"
        )
    W.setflags(write=False)
    H = input_effect_matrix(dynamics, s)
    H.setflags(write=False)
    return ResidualGenerator(mode, s, W, H, dynamics.n_y, dynamics.n_u)


def eval_residuals(gen: ResidualGenerator, y_window, u_window=None) -> np.ndarray:
    """Residual vector for the last ``s + 1`` samples (oldest first)."""
    Y = np.asarray(y_window, dtype=float).reshape(-1, gen.n_y)
    if u_window is None or gen.n_u == 0:
        U = np.zeros((len(Y), gen.n_u))
    else:
        U = np.asarray(u_window, dtype=float).reshape(-1, gen.n_u)
    if len(Y) < gen.s + 1 or len(U) < gen.s + 1:
        raise WindowUnderfullError(
            f"generator needs {gen.s + 1} samples, got {min(len(Y), len(U))}"
        )
    Y, U = Y[-(gen.s + 1):], U[-(gen.s + 1):]
    return gen.W @ (Y.ravel() - gen.H @ U.ravel())


@dataclass(frozen=True)
class FilterConfig:
    """Residual filter: a bit is set once ``|r| > epsilon`` held for ``debounce`` samples.

    ``settle`` is how many consecutive ticks an observed signature tuple
    must stay unchanged before it is acted upon online; ``None`` picks
    ``s_max + debounce``, which outlasts the transient of a mode switch.
    """

    epsilon: float = 1e-6
    debounce: int = 1
    settle: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.debounce < 1:
            raise ValueError("debounce must be >= 1")
        if self.settle is not None and self.settle < 1:
            raise ValueError("settle must be >= 1")


def filter_residuals(history, cfg: FilterConfig) -> tuple[bool, ...]:
    """Boolean indicators from a residual history (most recent row last)."""
    H = np.asarray(history, dtype=float)
    if H.size == 0:
        return tuple(False for _ in range(H.shape[1] if H.ndim == 2 else 0))
    H = H.reshape(len(H), -1)
    if len(H) < cfg.debounce:
        return tuple(False for _ in range(H.shape[1]))
    recent = np.abs(H[-cfg.debounce:]) > cfg.epsilon
    return tuple(bool(b) for b in recent.all(axis=0))


@dataclass(frozen=True)
class Group:
    id: str
    modes: tuple[str, ...]
    bits: tuple[bool, ...]


@dataclass(eq=False)
class ResidualBank:
    """Residual generators of every mode plus signatures and partition.

    Treat as immutable once built. ``horizon`` and ``seed`` define the
    canonical stimulus used to compute signatures offline.
    """

    model: HybridModel
    generators: dict[str, ResidualGenerator]
    filter_config: FilterConfig
    seed: int
    horizon: int
    signatures: dict[str, tuple[bool, ...]] = field(default_factory=dict)
    groups: tuple[Group, ...] = ()
    _trajectories: dict = field(default_factory=dict, repr=False)

    @property
    def fingerprint(self) -> str:
        return self.model.fingerprint

    @property
    def mode_order(self) -> tuple[str, ...]:
        return self.model.mode_ids

    @property
    def s_max(self) -> int:
        return max(g.s for g in self.generators.values())

    @property
    def settle(self) -> int:
        cfg = self.filter_config
        return cfg.settle if cfg.settle is not None else self.s_max + cfg.debounce

    @property
    def mode_group(self) -> dict[str, str]:
        return {m: g.id for g in self.groups for m in g.modes}

    def group_of(self, mode: str) -> Group:
        gid = self.mode_group[mode]
        return next(g for g in self.groups if g.id == gid)

    def slices(self) -> dict[str, slice]:
        """Position of each generator's bits inside a mode signature."""
        out, pos = {}, 0
        for m in self.mode_order:
            n = self.generators[m].n_residuals
            out[m] = slice(pos, pos + n)
            pos += n
        return out

    def canonical_trajectory(self, mode: str) -> tuple[np.ndarray, np.ndarray]:
        if mode not in self._trajectories:
            U = prbs(self.horizon, self.model.n_u, self.seed)
            Y, _ = simulate_lti(self.model.mode[mode].dynamics, self.model.initial_state, U)
            self._trajectories[mode] = (Y, U)
        return self._trajectories[mode]


def mirror_signature(bank: ResidualBank, observed_mode: str, eval_mode: str) -> tuple[bool, ...]:
    """Filtered residuals of ``eval_mode``'s generator on ``observed_mode``'s behavior.

    Bits are read at the last step of the canonical stimulus.
    """
    gen = bank.generators[eval_mode]
    Y, U = bank.canonical_trajectory(observed_mode)
    w = gen.s + 1
    history = [eval_residuals(gen, Y[k - w + 1:k + 1], U[k - w + 1:k + 1]) for k in range(w - 1, len(Y))]
    return filter_residuals(np.array(history).reshape(len(history), gen.n_residuals), bank.filter_config)


def mode_signature(bank: ResidualBank, mode: str) -> tuple[bool, ...]:
    bits: list[bool] = []
    for k in bank.mode_order:
        bits.extend(mirror_signature(bank, mode, k))
    return tuple(bits)


def diagnosability_partition(bank: ResidualBank) -> tuple[Group, ...]:
    """Group modes by equal signature, groups numbered in mode order."""
    by_bits: dict[tuple, list[str]] = {}
    for m in bank.mode_order:
        by_bits.setdefault(bank.signatures[m], []).append(m)
    return tuple(
        Group(f"G{i}", tuple(modes), bits)
        for i, (bits, modes) in enumerate(by_bits.items(), start=1)
    )


def build_residual_bank(
    model: HybridModel,
    filter_config: FilterConfig | None = None,
    seed: int | None = None,
) -> ResidualBank:
    """Generators for every mode, then signatures and the partition.

    A mode's window length is its ``window`` field, or ``n_x`` by default.
    """
    generators = {}
    for m in model.modes:
        s = m.window if m.window is not None else m.dynamics.n_x
        generators[m.id] = build_generator(m.dynamics, s, m.id)
    if seed is None:
        seed = model.signature_seed if model.signature_seed is not None else DEFAULT_SIGNATURE_SEED
    s_max = max(g.s for g in generators.values())
    bank = ResidualBank(
        model=model,
        generators=generators,
        filter_config=filter_config or FilterConfig(),
        seed=seed,
        horizon=10 * (s_max + 1),
    )
    bank.signatures = {m: mode_signature(bank, m) for m in model.mode_ids}
    bank.groups = diagnosability_partition(bank)
    return bank


class ResidualMonitor:
    """On-line residual evaluation for every generator of a bank.

    ``push`` returns the concatenated filtered tuple once every generator
    has a full window and a full debounce history, ``None`` before.
    """

    def __init__(self, bank: ResidualBank):
        self.bank = bank
        self._window = deque(maxlen=bank.s_max + 1)
        m = bank.filter_config.debounce
        self._hist = {k: deque(maxlen=m) for k in bank.mode_order}
        self.last_residuals: dict[str, np.ndarray] = {}

    def push(self, y: Sequence[float], u: Sequence[float]) -> tuple[bool, ...] | None:
        self._window.append((np.asarray(y, float), np.asarray(u, float)))
        n = len(self._window)
        for k in self.bank.mode_order:
            gen = self.bank.generators[k]
            if n < gen.s + 1:
                continue
            recent = list(self._window)[-(gen.s + 1):]
            r = eval_residuals(gen, [p[0] for p in recent], [p[1] for p in recent])
            self._hist[k].append(r)
            self.last_residuals[k] = r
        if any(len(h) < self.bank.filter_config.debounce for h in self._hist.values()):
            return None
        bits: list[bool] = []
        for k in self.bank.mode_order:
            bits.extend(filter_residuals(list(self._hist[k]), self.bank.filter_config))
        return tuple(bits)
