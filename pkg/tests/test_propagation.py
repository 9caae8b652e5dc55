import math

import numpy as np
import pytest

from dpsim.config import SystemConfig
from dpsim.propagation import (GeometryError, build_layer_grid, build_port_line,
                               build_propagation, diffraction_matrix,
                               dump_matrix_csv, load_matrix_csv)

LAM = 10.7e-3


def test_grid_of_four():
    geom = build_layer_grid(4, LAM / 2, 0.0)
    assert geom.positions.shape == (4, 3)
    assert np.allclose(geom.positions.mean(axis=0), [0, 0, 0])
    dists = np.linalg.norm(geom.positions[:, None] - geom.positions[None, :], axis=2)
    nn = dists[dists > 0].min()
    assert nn == pytest.approx(LAM / 2)
    assert geom.element_area == pytest.approx((LAM / 2) ** 2)


def test_grid_of_hundred_span():
    geom = build_layer_grid(100, 5.35e-3, 0.0)
    xs = np.unique(geom.positions[:, 0])
    assert len(xs) == 10
    assert xs.max() - xs.min() == pytest.approx(48.15e-3)


def test_single_unit_grid():
    geom = build_layer_grid(1, LAM / 2, 0.25)
    assert np.allclose(geom.positions, [[0.0, 0.0, 0.25]])


def test_non_square_count_rejected():
    with pytest.raises(GeometryError, match="perfect square"):
        build_layer_grid(5, LAM / 2, 0.0)


def test_on_axis_entry_magnitude():
    # single facing elements: |entry| = (A/d) * sqrt((1/(2 pi d))^2 + 1/lam^2)
    d = 0.05 / 3
    area = (LAM / 2) ** 2
    src = build_layer_grid(1, LAM / 2, 0.0)
    dst = build_layer_grid(1, LAM / 2, d)
    entry = diffraction_matrix(src, dst, LAM)[0, 0]
    expected = (area / d) * math.sqrt((1 / (2 * math.pi * d)) ** 2 + 1 / LAM ** 2)
    assert abs(entry) == pytest.approx(expected, rel=1e-12)
    assert abs(entry) == pytest.approx(0.1613356535, rel=1e-9)


def test_mirror_symmetric_pairs_have_equal_magnitude():
    src = build_layer_grid(9, LAM / 2, 0.0)
    dst = build_layer_grid(9, LAM / 2, 0.01)
    mat = np.abs(diffraction_matrix(src, dst, LAM))
    # the 3x3 grid is symmetric under x -> -x: columns 0 and 6 swap etc.
    flip = [6, 7, 8, 3, 4, 5, 0, 1, 2]
    assert np.allclose(mat, mat[np.ix_(flip, flip)])


def test_phase_factor_periodic_in_wavelength():
    area = (LAM / 2) ** 2
    d = 7.3e-3

    def phase_factor(dist):
        src = build_layer_grid(1, LAM / 2, 0.0)
        dst = build_layer_grid(1, LAM / 2, dist)
        entry = diffraction_matrix(src, dst, LAM)[0, 0]
        prefactor = (area / dist) * (1 / (2 * math.pi * dist) - 1j / LAM)
        return entry / prefactor

    assert phase_factor(d + LAM) == pytest.approx(phase_factor(d), rel=1e-9)


def test_reciprocity_gives_transpose():
    a = build_layer_grid(9, LAM / 2, 0.0)
    b = build_layer_grid(4, LAM / 2, 0.012)
    assert np.allclose(diffraction_matrix(a, b, LAM),
                       diffraction_matrix(b, a, LAM).T)


def test_deterministic_bitwise():
    a = build_layer_grid(16, LAM / 2, 0.0)
    b = build_layer_grid(16, LAM / 2, 0.008)
    m1 = diffraction_matrix(a, b, LAM)
    m2 = diffraction_matrix(a, b, LAM)
    assert np.array_equal(m1, m2)


def test_magnitude_decreases_with_lateral_offset():
    src = build_port_line(1, LAM / 2, 0.0, (LAM / 2) ** 2)
    dst = build_layer_grid(100, LAM / 2, 0.05 / 3)
    mat = np.abs(diffraction_matrix(src, dst, LAM))[:, 0]
    lateral = np.linalg.norm(dst.positions[:, :2], axis=1)
    order = np.argsort(lateral)
    lat_sorted, mag_sorted = lateral[order], mat[order]
    strictly_larger = lat_sorted[1:] > lat_sorted[:-1] + 1e-12
    assert np.all(mag_sorted[1:][strictly_larger] < mag_sorted[:-1][strictly_larger])
    assert np.all(np.isfinite(mat)) and np.all(mat > 0)


def test_coincident_planes_rejected():
    a = build_layer_grid(4, LAM / 2, 0.0)
    b = build_layer_grid(4, LAM / 2, 0.0)
    with pytest.raises(GeometryError, match="axial separation"):
        diffraction_matrix(a, b, LAM)


def test_build_propagation_reference_shapes():
    prop = build_propagation(SystemConfig())
    assert [m.shape for m in prop.tx_matrices] == [(100, 3), (100, 100), (100, 100)]
    assert [m.shape for m in prop.rx_matrices] == [(3, 100), (100, 100), (100, 100)]
    for mat in prop.tx_matrices + prop.rx_matrices:
        assert np.all(np.isfinite(mat))
        assert np.all(np.abs(mat) > 0)


def test_build_propagation_single_layer():
    sys_cfg = SystemConfig(tx_layers=1, rx_layers=1,
                           tx_units_per_layer=16, rx_units_per_layer=16)
    prop = build_propagation(sys_cfg)
    assert len(prop.tx_matrices) == 1
    assert len(prop.rx_matrices) == 1
    assert prop.tx_matrices[0].shape == (16, 3)
    assert prop.rx_matrices[0].shape == (3, 16)


def test_matrix_dump_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    mat = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    path = tmp_path / "mat.csv"
    dump_matrix_csv(mat, path)
    assert np.array_equal(load_matrix_csv(path), mat)
