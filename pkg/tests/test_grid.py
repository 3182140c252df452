import json

import numpy as np
import pytest

from tensor_split import (GridError, MismatchError, OneFormField, ScalarField, SymTensorField,
                          TwoFormField, make_grid, read_field, write_field)
from tensor_split.grid import field_from_dict, field_to_dict, sym_pairs


@pytest.mark.parametrize("n, dims, lengths", [
    (4, [8] * 4, [1.0] * 4),
    (1, [8], [1.0]),
    (2, [9, 8], [1.0, 1.0]),
    (2, [6, 8], [1.0, 1.0]),
    (2, [8, 8], [1.0, 0.0]),
    (2, [8, 8], [1.0, -2.0]),
])
def test_make_grid_rejects_bad_input(n, dims, lengths):
    with pytest.raises(GridError):
        make_grid(n, dims, lengths)


def test_grid_geometry():
    g = make_grid(2, [8, 16], [1.0, 2.0])
    assert g.spacing == (0.125, 0.125)
    assert g.size == 128
    assert g.volume == 2.0
    x = g.coords()
    assert x.shape == (2, 8, 16)
    assert x[1, 0, 3] == 3 * 0.125


def test_symtensor_order_matches_documented_layout():
    assert sym_pairs(3) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    g = make_grid(3, [8] * 3, [1.0] * 3)
    full = np.random.default_rng(0).normal(size=(3, 3, 8, 8, 8))
    full = full + full.transpose(1, 0, 2, 3, 4)
    phi = SymTensorField.from_full(g, full)
    assert np.array_equal(phi.full(), full)
    assert np.array_equal(phi[1, 2], full[2, 1])


def test_twoform_is_antisymmetric_by_construction():
    g = make_grid(3, [8] * 3, [1.0] * 3)
    om = TwoFormField(g, np.arange(3 * 512, dtype=float))
    F = om.full()
    assert np.array_equal(F, -F.transpose(1, 0, 2, 3, 4))


def test_fields_are_immutable_and_checked():
    g = make_grid(2, [8, 8], [1.0, 1.0])
    f = ScalarField.zeros(g)
    with pytest.raises(ValueError):
        f.data[0, 0, 0] = 1.0
    with pytest.raises(MismatchError):
        ScalarField(g, np.zeros(10))
    h = make_grid(2, [8, 10], [1.0, 1.0])
    with pytest.raises(MismatchError):
        f + ScalarField.zeros(h)
    with pytest.raises(MismatchError):
        OneFormField.zeros(g) + ScalarField.zeros(g)


def test_field_file_roundtrip_is_exact(tmp_path):
    g = make_grid(2, [8, 8], [1.0, 3.0])
    phi = SymTensorField(g, np.random.default_rng(1).normal(size=(3, 8, 8)) * 1e-7)
    p = tmp_path / "phi.json"
    write_field(p, phi)
    back = read_field(p)
    assert type(back) is SymTensorField and back.grid == g
    assert np.array_equal(back.data, phi.data)
    doc = json.loads(p.read_text())
    assert doc["version"] == 1 and doc["kind"] == "symtensor"
    assert doc["layout"] == "component-major;row-major;last-fastest"
    assert len(doc["data"]) == 3 * 64


def test_field_file_rejects_unknown_kind():
    g = make_grid(2, [8, 8], [1.0, 1.0])
    doc = field_to_dict(ScalarField.zeros(g))
    doc["kind"] = "spinor"
    with pytest.raises(ValueError):
        field_from_dict(doc)
