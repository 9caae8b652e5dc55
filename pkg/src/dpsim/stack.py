"""Trainable phase state and end-to-end transfer matrix assembly.

Phases are stored as raw angles in [0, 2*pi) so the unit-modulus constraint
can never drift; the per-polarization transfer chains are materialized on
demand. Transmit and receive transfer matrices are block-diagonal across
polarizations by construction.
"""

from __future__ import annotations

import math

import numpy as np

from .config import SystemConfig
from .propagation import PropagationSet

TWO_PI = 2.0 * math.pi


class StackShapeError(ValueError):
    pass


class PhaseStack:
    """Per-layer, per-polarization phase angles plus the complex output scale.

    theta has shape (tx_layers, 2, tx_units); xi has shape
    (rx_layers, 2, rx_units). In tied mode both polarization rows of every
    layer are kept identical, emulating a single-polarization stack.
    ``revision`` counts phase mutations so downstream caches can detect
    staleness; changing ``alpha`` does not touch it.
    """

    def __init__(self, theta: np.ndarray, xi: np.ndarray,
                 alpha: complex = 1 + 0j, tied: bool = False):
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        xi = np.mod(np.asarray(xi, dtype=float), TWO_PI)
        if theta.ndim != 3 or theta.shape[1] != 2:
            raise StackShapeError(f"theta must be (layers, 2, units), got {theta.shape}")
        if xi.ndim != 3 or xi.shape[1] != 2:
            raise StackShapeError(f"xi must be (layers, 2, units), got {xi.shape}")
        if tied:
            theta[:, 1, :] = theta[:, 0, :]
            xi[:, 1, :] = xi[:, 0, :]
        self.theta = theta
        self.xi = xi
        self.alpha = complex(alpha)
        self.tied = tied
        self.revision = 0

    @classmethod
    def random(cls, rng: np.random.Generator, sys_cfg: SystemConfig,
               alpha: complex = 1 + 0j) -> "PhaseStack":
        """Uniform phases; in tied mode a single draw is shared by both polarizations."""
        tied = sys_cfg.stack_mode == "tied_sim_baseline"
        l, k = sys_cfg.tx_layers, sys_cfg.rx_layers
        m, n = sys_cfg.tx_units_per_layer, sys_cfg.rx_units_per_layer
        if tied:
            theta = np.repeat(rng.uniform(0.0, TWO_PI, (l, 1, m)), 2, axis=1)
            xi = np.repeat(rng.uniform(0.0, TWO_PI, (k, 1, n)), 2, axis=1)
        else:
            theta = rng.uniform(0.0, TWO_PI, (l, 2, m))
            xi = rng.uniform(0.0, TWO_PI, (k, 2, n))
        return cls(theta, xi, alpha=alpha, tied=tied)

    def copy(self) -> "PhaseStack":
        dup = PhaseStack(self.theta.copy(), self.xi.copy(),
                         alpha=self.alpha, tied=self.tied)
        dup.revision = self.revision
        return dup

    def tx_phase_vector(self, layer: int) -> np.ndarray:
        """exp(j theta) for one layer, flattened pol0 units then pol1 units."""
        return np.exp(1j * self.theta[layer]).ravel()

    def rx_phase_vector(self, layer: int) -> np.ndarray:
        return np.exp(1j * self.xi[layer]).ravel()

    def save_text(self, path) -> None:
        """Checkpoint as one (kind, pol, layer, unit, angle) line per phase."""
        with open(path, "w") as fh:
            fh.write(f"alpha,{self.alpha.real!r},{self.alpha.imag!r}\n")
            fh.write(f"tied,{int(self.tied)}\n")
            for name, arr in (("theta", self.theta), ("xi", self.xi)):
                layers, _, units = arr.shape
                for layer in range(layers):
                    for pol in range(2):
                        for unit in range(units):
                            fh.write(f"{name},{pol},{layer},{unit},{arr[layer, pol, unit]!r}\n")

    @classmethod
    def load_text(cls, path) -> "PhaseStack":
        alpha = 1 + 0j
        tied = False
        angles: dict[str, dict[tuple[int, int, int], float]] = {"theta": {}, "xi": {}}
        with open(path) as fh:
            for line in fh:
                parts = line.strip().split(",")
                if parts[0] == "alpha":
                    alpha = complex(float(parts[1]), float(parts[2]))
                elif parts[0] == "tied":
                    tied = bool(int(parts[1]))
                else:
                    name, pol, layer, unit, angle = parts
                    angles[name][(int(layer), int(pol), int(unit))] = float(angle)

        def assemble(entries):
            layers = max(k[0] for k in entries) + 1
            units = max(k[2] for k in entries) + 1
            arr = np.zeros((layers, 2, units))
            for (layer, pol, unit), angle in entries.items():
                arr[layer, pol, unit] = angle
            return arr

        return cls(assemble(angles["theta"]), assemble(angles["xi"]),
                   alpha=alpha, tied=tied)


def blockdiag2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[[a, 0], [0, b]] with exact zero off-blocks."""
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]), dtype=complex)
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def _tx_chain(stack: PhaseStack, prop: PropagationSet, pol: int) -> np.ndarray:
    # Phi^L V^L ... Phi^1 V^1, evaluated right to left.
    acc = prop.tx_matrices[0].copy()
    for layer in range(prop.tx_layer_count):
        if layer > 0:
            acc = prop.tx_matrices[layer] @ acc
        acc = np.exp(1j * stack.theta[layer, pol])[:, None] * acc
    return acc


def _rx_chain(stack: PhaseStack, prop: PropagationSet, pol: int) -> np.ndarray:
    # U^1 Psi^1 U^2 Psi^2 ... U^K Psi^K, evaluated left to right.
    acc = prop.rx_matrices[0].copy()
    for layer in range(prop.rx_layer_count):
        if layer > 0:
            acc = acc @ prop.rx_matrices[layer]
        acc = acc * np.exp(1j * stack.xi[layer, pol])[None, :]
    return acc


def assemble_tx(stack: PhaseStack, prop: PropagationSet) -> np.ndarray:
    """Transmit transfer matrix (2M x 2S), block-diagonal across polarizations."""
    _check_tx_shapes(stack, prop)
    return blockdiag2(_tx_chain(stack, prop, 0), _tx_chain(stack, prop, 1))


def assemble_rx(stack: PhaseStack, prop: PropagationSet) -> np.ndarray:
    """Receive transfer matrix (2S x 2N), block-diagonal across polarizations."""
    _check_rx_shapes(stack, prop)
    return blockdiag2(_rx_chain(stack, prop, 0), _rx_chain(stack, prop, 1))


def end_to_end(t_mat: np.ndarray, g: np.ndarray, r_mat: np.ndarray) -> np.ndarray:
    """Composite channel seen by the streams: receive chain * fading * transmit chain."""
    if r_mat.shape[1] != g.shape[0] or g.shape[1] != t_mat.shape[0]:
        raise StackShapeError(
            f"non-conformable shapes R{r_mat.shape} G{g.shape} T{t_mat.shape}")
    return r_mat @ g @ t_mat


def simulate_reception(rng: np.random.Generator, h: np.ndarray, powers: np.ndarray,
                       symbols: np.ndarray, noise_power: float,
                       alpha: complex | None = None) -> np.ndarray:
    """One shot of the linear reception model y = H diag(sqrt(p)) x + n.

    ``alpha`` scales the channel when given; None leaves the raw model.
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ValueError("power entries must be nonnegative")
    h_eff = h if alpha is None else alpha * h
    noise = math.sqrt(noise_power / 2.0) * (
        rng.standard_normal(h.shape[0]) + 1j * rng.standard_normal(h.shape[0]))
    return h_eff @ (np.sqrt(powers) * symbols) + noise


def _check_tx_shapes(stack: PhaseStack, prop: PropagationSet) -> None:
    if stack.theta.shape[0] != prop.tx_layer_count:
        raise StackShapeError(
            f"{stack.theta.shape[0]} phase layers vs {prop.tx_layer_count} propagation hops")
    if stack.theta.shape[2] != prop.tx_units:
        raise StackShapeError(
            f"{stack.theta.shape[2]} phase units vs {prop.tx_units} grid units")


def _check_rx_shapes(stack: PhaseStack, prop: PropagationSet) -> None:
    if stack.xi.shape[0] != prop.rx_layer_count:
        raise StackShapeError(
            f"{stack.xi.shape[0]} phase layers vs {prop.rx_layer_count} propagation hops")
    if stack.xi.shape[2] != prop.rx_units:
        raise StackShapeError(
            f"{stack.xi.shape[2]} phase units vs {prop.rx_units} grid units")
