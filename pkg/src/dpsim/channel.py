"""Dual-polarized spatially correlated Rayleigh channel between the two stacks.

The co- and cross-polar blocks are i.i.d. complex Gaussian with variances
split by the polarization conversion ratio and scaled by the linear path
gain; spatial correlation from isotropic scattering (sinc profile) is applied
through the PSD square roots of the per-side correlation matrices. Log-distance
path loss with lognormal shadowing sets the link budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .propagation import LayerGeometry, build_layer_grid, dump_matrix_csv, load_matrix_csv

# Correlation matrices are PSD up to roundoff; anything below this is a bug.
_PSD_EIG_TOL = -1e-10
_SQRT_REL_TOL = 1e-8


class ChannelModelError(ValueError):
    pass


@dataclass(frozen=True)
class CorrelationPair:
    """Per-side spatial correlation matrices and their PSD square roots."""

    r_tx: np.ndarray
    r_rx: np.ndarray
    r_tx_sqrt: np.ndarray
    r_rx_sqrt: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """One fading draw: channel matrix, its singular values, and the diagonal target.

    ``g`` is (2N x 2M) with polarization-major blocks; ``singular_values`` is
    the full nonincreasing spectrum and ``target`` the square diagonal matrix
    of the leading ``2S`` values.
    """

    g: np.ndarray
    pathloss_linear: float
    singular_values: np.ndarray
    target: np.ndarray

    @property
    def streams_total(self) -> int:
        return self.target.shape[0]

    @property
    def target_norm_sq(self) -> float:
        return float(np.sum(np.diag(self.target) ** 2))


def correlation_matrix(geom: LayerGeometry, wavelength: float) -> np.ndarray:
    """sinc(2 r / wavelength) correlation for all element pairs of one layer."""
    delta = geom.positions[:, None, :] - geom.positions[None, :, :]
    r = np.linalg.norm(delta, axis=2)
    return np.sinc(2.0 * r / wavelength)


def psd_sqrt(r: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues are clamped to zero."""
    if not np.allclose(r, r.T, rtol=0.0, atol=1e-12):
        raise ChannelModelError("correlation matrix not symmetric")
    eigvals, eigvecs = np.linalg.eigh(r)
    if eigvals.min() < _PSD_EIG_TOL:
        raise ChannelModelError("correlation matrix not PSD")
    clamped = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(clamped)) @ eigvecs.T
    root = 0.5 * (root + root.T)
    err = np.linalg.norm(root @ root - r) / max(np.linalg.norm(r), np.finfo(float).tiny)
    if err > _SQRT_REL_TOL:
        raise ChannelModelError(f"square root residual {err:.2e} exceeds tolerance")
    return root


def correlation_for_config(sys_cfg: SystemConfig) -> CorrelationPair:
    """Correlation pair for the configured unit grids (geometry only, no fading)."""
    lam = sys_cfg.resolved_wavelength
    pitch = sys_cfg.resolved_unit_spacing
    tx_geom = build_layer_grid(sys_cfg.tx_units_per_layer, pitch, 0.0)
    rx_geom = build_layer_grid(sys_cfg.rx_units_per_layer, pitch, 0.0)
    r_tx = correlation_matrix(tx_geom, lam)
    r_rx = correlation_matrix(rx_geom, lam)
    return CorrelationPair(r_tx=r_tx, r_rx=r_rx,
                           r_tx_sqrt=psd_sqrt(r_tx), r_rx_sqrt=psd_sqrt(r_rx))


def path_loss_db(distance: float, sys_cfg: SystemConfig, shadowing_db: float = 0.0) -> float:
    """Log-distance path loss in dB with a caller-supplied shadowing draw."""
    d0 = sys_cfg.pathloss_ref_distance
    if distance < d0:
        raise ChannelModelError(f"distance {distance} m below reference distance {d0} m")
    lam = sys_cfg.resolved_wavelength
    pl0 = 20.0 * math.log10(4.0 * math.pi * d0 / lam)
    return pl0 + 10.0 * sys_cfg.pathloss_exponent * math.log10(distance / d0) + shadowing_db


def svd_target(g: np.ndarray, streams_total: int) -> tuple[np.ndarray, np.ndarray]:
    """Nonincreasing singular values of g and the diagonal matrix of the top ones."""
    if streams_total > min(g.shape):
        raise ChannelModelError(
            f"{streams_total} streams exceed min channel dimension {min(g.shape)}")
    singular_values = np.linalg.svd(g, compute_uv=False)
    return singular_values, np.diag(singular_values[:streams_total])


def draw_channel(rng: np.random.Generator, sys_cfg: SystemConfig,
                 corr: CorrelationPair, pathloss_linear: float) -> ChannelRealization:
    """Draw one correlated dual-polarized Rayleigh realization.

    Per-entry variances are (1 - ratio) * gain for the co-polar blocks and
    ratio * gain for the cross-polar blocks. Correlation is applied
    per polarization (block-diagonal) by default; the ``replicated`` placement
    instead repeats the same square root across all four blocks, which
    collapses the polarization blocks and is kept only for audit.
    """
    m = sys_cfg.tx_units_per_layer
    n = sys_cfg.rx_units_per_layer
    eps = sys_cfg.pol_conversion_ratio
    var_co = (1.0 - eps) * pathloss_linear
    var_cross = eps * pathloss_linear

    def block(variance: float) -> np.ndarray:
        z = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        return z * math.sqrt(variance / 2.0)

    g00 = block(var_co)
    g01 = block(var_cross)
    g10 = block(var_cross)
    g11 = block(var_co)
    g_iid = np.block([[g00, g01], [g10, g11]])

    if sys_cfg.correlation_placement == "block_diagonal":
        rx_op = np.kron(np.eye(2), corr.r_rx_sqrt)
        tx_op = np.kron(np.eye(2), corr.r_tx_sqrt)
    else:
        rx_op = np.kron(np.ones((2, 2)), corr.r_rx_sqrt)
        tx_op = np.kron(np.ones((2, 2)), corr.r_tx_sqrt)
    g = rx_op @ g_iid @ tx_op

    singular_values, target = svd_target(g, sys_cfg.streams_total)
    return ChannelRealization(g=g, pathloss_linear=pathloss_linear,
                              singular_values=singular_values, target=target)


def export_channel_csv(chan: ChannelRealization, path) -> None:
    dump_matrix_csv(chan.g, path)


def import_channel_csv(path, streams_total: int,
                       pathloss_linear: float = 1.0) -> ChannelRealization:
    """Rebuild a realization from a matrix dump; the spectrum is recomputed."""
    g = load_matrix_csv(path)
    singular_values, target = svd_target(g, streams_total)
    return ChannelRealization(g=g, pathloss_linear=pathloss_linear,
                              singular_values=singular_values, target=target)
