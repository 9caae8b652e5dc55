"""Metasurface geometry and inter-layer diffraction matrices.

Each stack layer is a centered square grid of units; the feed and receive
ports are centered half-wavelength linear arrays placed one layer spacing
away from the adjacent metasurface layer. Scalar Rayleigh-Sommerfeld
diffraction gives the unit-to-unit transmission coefficients; propagation
between layers preserves polarization, so one matrix per hop serves both
polarizations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, is_perfect_square


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class LayerGeometry:
    """Element positions (count x 3, meters), plane normal, per-element area."""

    positions: np.ndarray
    normal: np.ndarray
    element_area: float

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class PropagationSet:
    """Frozen diffraction matrices for one geometry.

    tx_matrices: [feed->layer1 (M x S), layer1->layer2 (M x M), ...]
    rx_matrices: [layer1->ports (S x N), layer2->layer1 (N x N), ...]
    """

    tx_matrices: list[np.ndarray]
    rx_matrices: list[np.ndarray]

    @property
    def tx_units(self) -> int:
        return self.tx_matrices[0].shape[0]

    @property
    def rx_units(self) -> int:
        return self.rx_matrices[0].shape[1]

    @property
    def streams_per_pol(self) -> int:
        return self.tx_matrices[0].shape[1]

    @property
    def tx_layer_count(self) -> int:
        return len(self.tx_matrices)

    @property
    def rx_layer_count(self) -> int:
        return len(self.rx_matrices)


def build_layer_grid(count: int, pitch: float, plane_offset: float) -> LayerGeometry:
    """Centered sqrt(count) x sqrt(count) grid in the z = plane_offset plane."""
    if not is_perfect_square(count):
        raise GeometryError(f"layer unit count {count} is not a perfect square")
    side = math.isqrt(count)
    coords = (np.arange(side) - (side - 1) / 2.0) * pitch
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    positions = np.column_stack([
        xx.ravel(), yy.ravel(), np.full(count, float(plane_offset)),
    ])
    return LayerGeometry(positions=positions, normal=np.array([0.0, 0.0, 1.0]),
                         element_area=pitch * pitch)


def build_port_line(count: int, pitch: float, plane_offset: float,
                    element_area: float) -> LayerGeometry:
    """Centered uniform linear array along x for feed / receive ports."""
    xs = (np.arange(count) - (count - 1) / 2.0) * pitch
    positions = np.column_stack([
        xs, np.zeros(count), np.full(count, float(plane_offset)),
    ])
    return LayerGeometry(positions=positions, normal=np.array([0.0, 0.0, 1.0]),
                         element_area=element_area)


def diffraction_matrix(src: LayerGeometry, dst: LayerGeometry,
                       wavelength: float) -> np.ndarray:
    """Rayleigh-Sommerfeld coefficients from every src element to every dst element.

    Entry (i, j) = (A cos(chi) / r) * (1/(2 pi r) - j/wavelength) * exp(j 2 pi r / wavelength)
    with r the element pair distance, chi the angle to the layer normal, and A
    the source element area. Source and destination planes must be distinct.
    """
    delta = dst.positions[:, None, :] - src.positions[None, :, :]
    r = np.linalg.norm(delta, axis=2)
    axial = np.abs(delta @ src.normal)
    if np.any(r <= 0.0) or np.any(axial <= 0.0):
        raise GeometryError("source and destination planes must have positive axial separation")
    cos_chi = axial / r
    amplitude = src.element_area * cos_chi / r
    return amplitude * (1.0 / (2.0 * np.pi * r) - 1j / wavelength) \
        * np.exp(2j * np.pi * r / wavelength)


def build_propagation(sys_cfg: SystemConfig) -> PropagationSet:
    """All inter-layer matrices for the configured transmit and receive stacks."""
    lam = sys_cfg.resolved_wavelength
    pitch = sys_cfg.resolved_unit_spacing
    area = pitch * pitch
    s = sys_cfg.streams_per_pol

    d_tx = sys_cfg.tx_layer_spacing
    feed = build_port_line(s, lam / 2.0, 0.0, area)
    tx_layers = [build_layer_grid(sys_cfg.tx_units_per_layer, pitch, (l + 1) * d_tx)
                 for l in range(sys_cfg.tx_layers)]
    tx_matrices = [diffraction_matrix(feed, tx_layers[0], lam)]
    for l in range(1, sys_cfg.tx_layers):
        tx_matrices.append(diffraction_matrix(tx_layers[l - 1], tx_layers[l], lam))

    d_rx = sys_cfg.rx_layer_spacing
    ports = build_port_line(s, lam / 2.0, 0.0, area)
    rx_layers = [build_layer_grid(sys_cfg.rx_units_per_layer, pitch, (k + 1) * d_rx)
                 for k in range(sys_cfg.rx_layers)]
    rx_matrices = [diffraction_matrix(rx_layers[0], ports, lam)]
    for k in range(1, sys_cfg.rx_layers):
        rx_matrices.append(diffraction_matrix(rx_layers[k], rx_layers[k - 1], lam))

    return PropagationSet(tx_matrices=tx_matrices, rx_matrices=rx_matrices)


def dump_matrix_csv(matrix: np.ndarray, path) -> None:
    """Write a complex matrix as (row, col, re, im) rows."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                v = complex(matrix[i, j])
                writer.writerow([i, j, repr(v.real), repr(v.imag)])


def load_matrix_csv(path) -> np.ndarray:
    """Read a matrix written by :func:`dump_matrix_csv`."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["row", "col", "re", "im"]:
            raise ValueError(f"unexpected matrix dump header: {header}")
        for row, col, re_s, im_s in reader:
            entries.append((int(row), int(col), float(re_s), float(im_s)))
    n_rows = max(e[0] for e in entries) + 1
    n_cols = max(e[1] for e in entries) + 1
    out = np.zeros((n_rows, n_cols), dtype=complex)
    for row, col, re_v, im_v in entries:
        out[row, col] = re_v + 1j * im_v
    return out
