from __future__ import annotations

import numpy as np
import pytest

from cdinterp.errors import FormatError, GridTooCoarse, InvalidField, OutOfDomain, ZeroReference
from cdinterp.fields import (
    Extension,
    FieldFunction,
    Grid,
    StructuredField,
    gradient_fd,
    l2_error,
    l2_norm,
    load_snapshot,
    sample,
    save_snapshot,
)

UNIT = Grid(((0.0, 1.0), (0.0, 1.0)), (2, 2))


def linear_field(grid):
    return StructuredField.from_function(lambda x: 3 * x[..., 0] + 2 * x[..., 1], grid)


def test_nodes_reproduced_exactly(rng):
    g = Grid(((-1.0, 2.0), (0.5, 3.0)), (7, 5))
    f = StructuredField(g, rng.normal(size=(7, 5, 2)))
    assert np.array_equal(sample(f, g.nodes()), f.values)


def test_bilinear_cell_midpoint():
    f = StructuredField(UNIT, [[0.0, 0.0], [0.0, 4.0]])
    assert sample(f, [0.5, 0.5])[0] == 1.0


def test_affine_reproduced(rng):
    g = Grid(((-2.0, 3.0), (0.0, 1.5)), (13, 9))
    f = linear_field(g)
    x = np.column_stack([rng.uniform(-2, 3, 500), rng.uniform(0, 1.5, 500)])
    assert np.max(np.abs(sample(f, x)[:, 0] - (3 * x[:, 0] + 2 * x[:, 1]))) <= 1e-12


def test_1d_linear_sampling():
    g = Grid(((0.0, 2.0),), (3,))
    f = StructuredField(g, [0.0, 1.0, 4.0])
    assert np.allclose(sample(f, [0.5, 1.5])[:, 0], [0.5, 2.5])


def test_extension_policies():
    g = Grid(((0.0, 1.0),), (11,))
    f = StructuredField.from_function(lambda x: x[..., 0], g)
    assert sample(f, [2.0])[0] == 1.0
    assert sample(f, [-3.0])[0] == 0.0
    eps = 1e-9
    assert abs(sample(f, [1.0 + eps])[0] - sample(f, [1.0 - eps])[0]) < 1e-8
    err = StructuredField(g, f.values, Extension.ERROR)
    with pytest.raises(OutOfDomain):
        sample(err, [1.5])
    cb = StructuredField(g, f.values, Extension.ANALYTIC_CALLBACK, callback=lambda x: 10 * x[..., 0])
    assert np.allclose(sample(cb, [0.5, 2.0])[:, 0], [0.5, 20.0])
    with pytest.raises(InvalidField):
        StructuredField(g, f.values, Extension.ANALYTIC_CALLBACK)


def test_non_finite_sample_point():
    with pytest.raises(InvalidField):
        sample(StructuredField(UNIT, np.zeros((2, 2))), [np.nan, 0.0])


def test_gradient_examples():
    g = Grid(((0.0, 1.0), (0.0, 2.0)), (11, 21))
    c = StructuredField(g, np.full((11, 21), 2.5))
    assert np.all(gradient_fd(c).values == 0)
    x1 = StructuredField.from_function(lambda x: x[..., 0], g)
    gx = gradient_fd(x1).values
    assert np.max(np.abs(gx[..., 0] - 1)) <= 1e-12
    assert np.max(np.abs(gx[..., 1])) <= 1e-12


def test_gradient_sine_1d():
    g = Grid(((0.0, 2 * np.pi),), (1001,))
    f = StructuredField.from_function(lambda x: np.sin(x[..., 0]), g)
    d = gradient_fd(f).values[:, 0]
    assert np.max(np.abs(d - np.cos(g.axes[0]))) <= 1e-4


def test_gradient_too_coarse():
    with pytest.raises(GridTooCoarse):
        gradient_fd(StructuredField(UNIT, np.zeros((2, 2))))


def test_l2_examples():
    g = Grid(((0.0, 1.0),), (1001,))
    f = StructuredField.from_function(lambda x: x[..., 0], g)
    assert l2_error(f, f, g) == (0.0, 0.0)
    one = FieldFunction(lambda x: np.ones(x.shape[:-1]))
    zero = FieldFunction(lambda x: np.zeros(x.shape[:-1]))
    a, r = l2_error(zero, one, g)
    assert np.isclose(a, 1.0) and np.isclose(r, 1.0)
    assert np.isclose(l2_norm(f, g), 1 / np.sqrt(3), atol=1e-6)
    with pytest.raises(ZeroReference):
        l2_error(f, zero, g)


def test_l2_triangle_inequality(rng):
    g = Grid(((0.0, 1.0), (0.0, 1.0)), (9, 7))
    for _ in range(50):
        a, b, c = (rng.normal(size=(9, 7)) for _ in range(3))
        ab = l2_error(a, b, g)[0]
        bc = l2_error(b, c, g)[0]
        ac = l2_error(a, c, g)[0]
        assert ac <= ab + bc + 1e-12


def test_mask_weights():
    g = Grid(((0.0, 1.0), (0.0, 1.0)), (3, 3))
    mask = np.ones((3, 3), bool)
    assert np.allclose(g.trapezoid_weights(mask), g.trapezoid_weights())
    mask[2, 2] = False
    w = g.trapezoid_weights(mask)
    # one of four cells dropped
    assert np.isclose(w.sum(), 0.75)
    assert w[2, 2] == 0.0


def test_invalid_grids():
    with pytest.raises(InvalidField):
        Grid(((1.0, 0.0),), (4,))
    with pytest.raises(InvalidField):
        Grid(((0.0, 1.0),), (1,))
    with pytest.raises(InvalidField):
        StructuredField(UNIT, [[0.0, np.inf], [0.0, 0.0]])


def test_snapshot_roundtrip_minimal(tmp_path):
    f = StructuredField(UNIT, [[0.1, 0.2], [1 / 3, np.pi]])
    save_snapshot(f, tmp_path / "a.snap")
    h = load_snapshot(tmp_path / "a.snap")
    assert np.array_equal(h.values, f.values)
    assert h.grid == f.grid


def test_snapshot_roundtrip_wedge_size(tmp_path, rng):
    g = Grid(((-0.5, 1.0), (0.0, 1.0)), (151, 101))
    f = StructuredField(g, rng.normal(size=(151, 101)) * 10.0 ** rng.integers(-8, 8, size=(151, 101)))
    save_snapshot(f, tmp_path / "w.snap")
    h = load_snapshot(tmp_path / "w.snap")
    assert np.array_equal(h.values, f.values)
    assert h.grid == g


def test_snapshot_roundtrip_1d_vector(tmp_path, rng):
    g = Grid(((0.0, 1.0),), (5,))
    f = StructuredField(g, rng.normal(size=(5, 3)))
    save_snapshot(f, tmp_path / "v.snap")
    h = load_snapshot(tmp_path / "v.snap")
    assert h.dim == 1 and h.components == 3
    assert np.array_equal(h.values, f.values)


def test_snapshot_format_errors(tmp_path):
    f = StructuredField(UNIT, [[0.0, 1.0], [2.0, 3.0]])
    p = tmp_path / "a.snap"
    save_snapshot(f, p)
    lines = p.read_text().splitlines()

    (tmp_path / "t.snap").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError) as e:
        load_snapshot(tmp_path / "t.snap")
    assert e.value.line is not None

    (tmp_path / "h.snap").write_text("# wrong\n" + "\n".join(lines[1:]))
    with pytest.raises(FormatError) as e:
        load_snapshot(tmp_path / "h.snap")
    assert e.value.line == 1

    bad = lines[:]
    bad[4] = "1.0 oops"
    (tmp_path / "r.snap").write_text("\n".join(bad) + "\n")
    with pytest.raises(FormatError) as e:
        load_snapshot(tmp_path / "r.snap")
    assert e.value.line == 5
    assert "line 5" in str(e.value)
