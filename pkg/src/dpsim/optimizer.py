"""Layer-by-layer gradient descent that shapes the end-to-end channel.

The objective is the squared Frobenius distance between the scaled composite
channel and the diagonal matrix of leading singular values. Each layer's
phase gradient is analytic and read from cumulative forward/backward products
of the chain, so a full layer refresh costs a handful of thin matrix products
instead of per-unit chain re-multiplication. After every layer step the
complex output scale is reset to its closed-form least-squares optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .config import AlgoConfig, SystemConfig
from .propagation import PropagationSet
from .stack import PhaseStack, TWO_PI, assemble_rx, assemble_tx

CACHE_REL_TOL = 1e-10


class StaleCacheError(RuntimeError):
    """Gradient requested against caches built for an older phase revision."""


def _blk_left(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    # blockdiag(v, v) @ x for pol-stacked x
    half = x.shape[0] // 2
    return np.vstack([v @ x[:half], v @ x[half:]])


def _blk_right(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # x @ blockdiag(v, v) for pol-stacked columns
    half = x.shape[1] // 2
    return np.hstack([x[:, :half] @ v, x[:, half:] @ v])


class ObjectiveContext:
    """Frozen problem data plus forward/backward partial-product caches.

    ``tx_fwd[l]`` is the chain up to and including the l-th hop matrix but
    before that layer's phases; ``tx_bwd[l]`` is everything after them, so
    tx_bwd[l] @ diag(phases_l) @ tx_fwd[l] reproduces the composite channel
    for every l (likewise rx_fwd/rx_bwd on the receive side).
    """

    def __init__(self, prop: PropagationSet, chan: ChannelRealization):
        self.prop = prop
        self.chan = chan
        self.target = chan.target
        self.target_norm_sq = chan.target_norm_sq
        self.cache_revision: int | None = None
        self.tx_fwd: list[np.ndarray] = []
        self.tx_bwd: list[np.ndarray] = []
        self.rx_fwd: list[np.ndarray] = []
        self.rx_bwd: list[np.ndarray] = []
        self.t_mat: np.ndarray | None = None
        self.r_mat: np.ndarray | None = None
        self.h_mat: np.ndarray | None = None

    def refresh(self, stack: PhaseStack) -> None:
        """Rebuild every partial product for the stack's current phases."""
        prop = self.prop
        t_mat = assemble_tx(stack, prop)
        r_mat = assemble_rx(stack, prop)
        rg = r_mat @ self.chan.g
        gt = self.chan.g @ t_mat

        n_tx = prop.tx_layer_count
        tx_fwd = [_blk_left(prop.tx_matrices[0], np.eye(2 * prop.streams_per_pol, dtype=complex))]
        for l in range(1, n_tx):
            scaled = stack.tx_phase_vector(l - 1)[:, None] * tx_fwd[l - 1]
            tx_fwd.append(_blk_left(prop.tx_matrices[l], scaled))
        tx_bwd = [None] * n_tx
        tx_bwd[n_tx - 1] = rg
        for l in range(n_tx - 2, -1, -1):
            scaled = tx_bwd[l + 1] * stack.tx_phase_vector(l + 1)[None, :]
            tx_bwd[l] = _blk_right(scaled, prop.tx_matrices[l + 1])

        n_rx = prop.rx_layer_count
        rx_fwd = [_blk_right(np.eye(2 * prop.streams_per_pol, dtype=complex), prop.rx_matrices[0])]
        for k in range(1, n_rx):
            scaled = rx_fwd[k - 1] * stack.rx_phase_vector(k - 1)[None, :]
            rx_fwd.append(_blk_right(scaled, prop.rx_matrices[k]))
        rx_bwd = [None] * n_rx
        rx_bwd[n_rx - 1] = gt
        for k in range(n_rx - 2, -1, -1):
            scaled = stack.rx_phase_vector(k + 1)[:, None] * rx_bwd[k + 1]
            rx_bwd[k] = _blk_left(prop.rx_matrices[k + 1], scaled)

        self.t_mat, self.r_mat = t_mat, r_mat
        self.h_mat = rg @ t_mat
        self.tx_fwd, self.tx_bwd = tx_fwd, tx_bwd
        self.rx_fwd, self.rx_bwd = rx_fwd, rx_bwd
        self.cache_revision = stack.revision

    def require_fresh(self, stack: PhaseStack) -> None:
        if self.cache_revision != stack.revision:
            raise StaleCacheError(
                f"caches built for revision {self.cache_revision}, stack at {stack.revision}")

    def cached_h(self, stack: PhaseStack) -> np.ndarray:
        self.require_fresh(stack)
        return self.h_mat


def objective(stack: PhaseStack, ctx: ObjectiveContext) -> float:
    """Squared Frobenius distance of the scaled composite channel to the target.

    Assembles the chains from scratch, so it stays valid for perturbed stacks
    without a cache refresh (finite-difference probes rely on this).
    """
    t_mat = assemble_tx(stack, ctx.prop)
    r_mat = assemble_rx(stack, ctx.prop)
    h = r_mat @ ctx.chan.g @ t_mat
    diff = stack.alpha * h - ctx.target
    return float(np.sum(np.abs(diff) ** 2))


def _layer_gradient(phases: np.ndarray, before: np.ndarray, after: np.ndarray,
                    alpha: complex, residual: np.ndarray, tied: bool,
                    units: int) -> np.ndarray:
    # d Gamma / d angle for H = after @ diag(phases) @ before, Gamma = |alpha H - target|_F^2
    inner = (after.conj().T @ residual * before.conj()).sum(axis=1)
    grad = 2.0 * np.imag(np.conj(alpha * phases) * inner)
    grad = grad.reshape(2, units)
    if tied:
        grad = np.broadcast_to(grad.sum(axis=0), (2, units)).copy()
    return grad


def grad_tx_layer(stack: PhaseStack, ctx: ObjectiveContext, layer: int) -> np.ndarray:
    """Analytic objective gradient w.r.t. one transmit layer's angles, shape (2, M).

    In tied mode the chain rule through the shared angle sums both
    polarization partials; the summed value is returned for both rows.
    """
    ctx.require_fresh(stack)
    residual = stack.alpha * ctx.h_mat - ctx.target
    return _layer_gradient(stack.tx_phase_vector(layer), ctx.tx_fwd[layer],
                           ctx.tx_bwd[layer], stack.alpha, residual,
                           stack.tied, ctx.prop.tx_units)


def grad_rx_layer(stack: PhaseStack, ctx: ObjectiveContext, layer: int) -> np.ndarray:
    """Receive-side counterpart of :func:`grad_tx_layer`, shape (2, N)."""
    ctx.require_fresh(stack)
    residual = stack.alpha * ctx.h_mat - ctx.target
    return _layer_gradient(stack.rx_phase_vector(layer), ctx.rx_bwd[layer],
                           ctx.rx_fwd[layer], stack.alpha, residual,
                           stack.tied, ctx.prop.rx_units)


def normalize_gradient(grad: np.ndarray) -> np.ndarray:
    """Rescale so the largest magnitude over the layer equals pi; zero stays zero."""
    peak = np.max(np.abs(grad))
    if peak == 0.0:
        return grad.copy()
    return np.pi * grad / peak


def apply_update(stack: PhaseStack, side: str, layer: int, grad: np.ndarray,
                 lr: float) -> PhaseStack:
    """Gradient step on one layer's angles, wrapped back into [0, 2*pi)."""
    angles = stack.theta if side == "tx" else stack.xi
    updated = np.mod(angles[layer] - lr * grad, TWO_PI)
    if stack.tied:
        updated[1, :] = updated[0, :]
    angles[layer] = updated
    stack.revision += 1
    return stack


def update_alpha(stack: PhaseStack, ctx: ObjectiveContext) -> complex:
    """Closed-form least-squares optimum of the complex output scale."""
    h = ctx.cached_h(stack)
    denom = float(np.sum(np.abs(h) ** 2))
    if denom == 0.0:
        return 0j
    numer = np.sum(np.conj(np.diag(h)) * np.diag(ctx.target))
    return complex(numer / denom)


def decay_lr(lr: float, decay: float) -> float:
    return lr * decay


def init_multistart(rng: np.random.Generator, count: int, ctx: ObjectiveContext,
                    sys_cfg: SystemConfig, alpha0: complex = 1 + 0j) -> PhaseStack:
    """Best of ``count`` uniform random phase sets, all scored at the initial scale."""
    if count < 1:
        raise ValueError("need at least one initialization candidate")
    best_stack = None
    best_gamma = np.inf
    for _ in range(count):
        candidate = PhaseStack.random(rng, sys_cfg, alpha=alpha0)
        gamma = objective(candidate, ctx)
        if gamma < best_gamma:
            best_gamma = gamma
            best_stack = candidate
    return best_stack


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    step: str
    gamma: float
    alpha: complex
    lr: float


@dataclass
class OptTrace:
    """Per-step objective history plus the best objective seen."""

    records: list[TraceRecord] = field(default_factory=list)
    best_gamma: float = np.inf

    def append(self, epoch: int, step: str, gamma: float, alpha: complex, lr: float) -> None:
        self.records.append(TraceRecord(epoch, step, gamma, alpha, lr))
        if gamma < self.best_gamma:
            self.best_gamma = gamma

    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.gammas())

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,step,gamma,alpha_re,alpha_im,eta\n")
            for r in self.records:
                fh.write(f"{r.epoch},{r.step},{r.gamma!r},"
                         f"{r.alpha.real!r},{r.alpha.imag!r},{r.lr!r}\n")


def run_lgd(rng: np.random.Generator, sys_cfg: SystemConfig, algo_cfg: AlgoConfig,
            ctx: ObjectiveContext) -> tuple[PhaseStack, OptTrace]:
    """Multistart initialization followed by epochwise layer sweeps.

    Every epoch walks the transmit layers then the receive layers; each layer
    step computes the analytic gradient, normalizes it, takes the step,
    refreshes the caches, and re-optimizes the output scale. The learning rate
    decays once per epoch. Returns the best stack seen (objective argmin over
    the trace, not the last iterate) together with the full trace.
    """
    stack = init_multistart(rng, algo_cfg.init_candidates, ctx, sys_cfg,
                            alpha0=algo_cfg.initial_alpha)
    ctx.refresh(stack)
    lr = algo_cfg.initial_lr
    trace = OptTrace()

    def gamma_now() -> float:
        diff = stack.alpha * ctx.h_mat - ctx.target
        return float(np.sum(np.abs(diff) ** 2))

    gamma = gamma_now()
    trace.append(0, "init", gamma, stack.alpha, lr)
    best_stack = stack.copy()
    best_gamma = gamma

    for epoch in range(1, algo_cfg.max_epochs + 1):
        for layer in range(ctx.prop.tx_layer_count):
            grad = normalize_gradient(grad_tx_layer(stack, ctx, layer))
            apply_update(stack, "tx", layer, grad, lr)
            ctx.refresh(stack)
            stack.alpha = update_alpha(stack, ctx)
            gamma = gamma_now()
            trace.append(epoch, f"tx:{layer + 1}", gamma, stack.alpha, lr)
            if gamma < best_gamma:
                best_gamma = gamma
                best_stack = stack.copy()
        for layer in range(ctx.prop.rx_layer_count):
            grad = normalize_gradient(grad_rx_layer(stack, ctx, layer))
            apply_update(stack, "rx", layer, grad, lr)
            ctx.refresh(stack)
            stack.alpha = update_alpha(stack, ctx)
            gamma = gamma_now()
            trace.append(epoch, f"rx:{layer + 1}", gamma, stack.alpha, lr)
            if gamma < best_gamma:
                best_gamma = gamma
                best_stack = stack.copy()
        lr = decay_lr(lr, algo_cfg.decay)

    return best_stack, trace
