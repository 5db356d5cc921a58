"""Smoke tests for the python bindings: each main operation runs end to end."""

import math

import numpy as np
import pytest

import hardylab as hl


@pytest.fixture(scope="module")
def grid():
    return hl.make_grid(1, 8.0, 256)


def test_grid_and_quadrature(grid):
    assert grid.size == 256
    assert grid.spacing == pytest.approx(1.0 / 16.0)
    ones = hl.SampledField(grid, np.ones(256, dtype=complex))
    assert hl.quadrature(ones).real == pytest.approx(16.0)
    assert hl.lq_norm(ones, 2.0) == pytest.approx(4.0)


def test_convolution_identity(grid):
    x = hl.np_points = np.array([grid.point(i)[0] for i in range(grid.size)])
    f = hl.SampledField(grid, np.exp(np.sin(x)).astype(complex))
    delta = hl.discrete_delta(grid)
    out = hl.convolve(f, delta)
    np.testing.assert_allclose(out.values, f.values, rtol=0, atol=1e-12)


def test_heat_maximal_hp(grid):
    times = hl.TimeGrid.standard()
    assert len(times.values) == 25
    f = hl.discrete_delta(grid)
    m = hl.maximal(f, times)
    assert np.all(np.asarray(m.values).real >= -1e-15)
    v = hl.hp_quasinorm(f, 1.0, times)
    assert math.isfinite(v) and v > 0


def test_atom_roundtrip(grid):
    spec = hl.AtomSpec(p=0.8, q=2.0, moments=1, ball=hl.Ball([0.0], 0.5))
    atom = hl.generate_atom(spec, grid, 7)
    cert = hl.validate_atom(atom, spec)
    assert cert["pass"]
    assert cert["lq_margin"] == pytest.approx(1.0, abs=1e-9)


def test_molecule_decomposition(grid):
    spec = hl.MoleculeSpec(p=0.8, q=2.0, delta=1.0, s=1.2, ball=hl.Ball([0.0], 0.25))
    field, heads = hl.generate_molecule(spec, grid, 3)
    cert = hl.validate_molecule(field, spec)
    assert cert["pass"]
    assert cert["worst_margin"] <= 0.9 + 1e-9
    dec = hl.decompose_molecule(field, spec)
    assert dec["reconstruction_residual"] <= 1e-8
    assert dec["max_piece_moment_residual"] <= 1e-10


def test_riesz_operators(grid):
    r = hl.local_riesz(0, grid)
    f = hl.discrete_delta(grid)
    rf = hl.op_apply(r, f)
    assert hl.lq_norm(rf, 2.0) <= hl.lq_norm(f, 2.0) * (1 + 1e-12)

    R = hl.truncated_riesz(0, grid)
    ones = hl.SampledField(grid, np.ones(grid.size, dtype=complex))
    assert hl.lq_norm(hl.op_apply(R, ones), math.inf) <= 1e-10


def test_condition_17_smoke():
    g = hl.make_grid(1, 16.0, 512)
    bank = hl.build_filter_bank(g, hl.FilterBank.max_band_for(g))
    T = hl.truncated_riesz(0, g)
    rep = hl.condition_1_7(T, 1.5, [[0.0], [1.0]], bank)
    assert all(math.isfinite(v) for v in rep["norms"])


def test_theorem_config_arithmetic():
    tc = hl.TheoremConfig(n=1, p=0.8, s=1.5, eps=1.0)
    assert tc.floor_s == 1
    assert tc.mu == pytest.approx(0.5)
    assert tc.delta == pytest.approx(1.75)
