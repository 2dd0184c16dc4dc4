import numpy as np
import pytest

from halluc.errors import ShapeError
from halluc.synth import face_parameters, synth_face, variation_parameters


def test_same_seeds_bit_identical():
    a = synth_face(11, 4, 32)
    b = synth_face(11, 4, 32)
    np.testing.assert_array_equal(a, b)


def test_output_contract():
    img = synth_face(0, 0, 48)
    assert img.shape == (3, 48, 48)
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_variation_changes_pixels_not_identity():
    a = synth_face(5, 1, 32)
    b = synth_face(5, 2, 32)
    assert np.abs(a - b).mean() > 0
    pa, pb = face_parameters(5), face_parameters(5)
    assert pa.keys() == pb.keys()
    for key in pa:
        np.testing.assert_array_equal(np.asarray(pa[key]), np.asarray(pb[key]))
    va = variation_parameters(5, 1)
    vb = variation_parameters(5, 2)
    assert va != vb


def test_variation_bounds():
    for ident in range(4):
        for var in range(6):
            v = variation_parameters(ident, var)
            assert abs(v["dx"]) <= 0.05 and abs(v["dy"]) <= 0.05
            assert 0.9 <= v["brightness"] <= 1.1


def test_size_error():
    with pytest.raises(ShapeError):
        synth_face(0, 0, 15)


def test_within_identity_distance_below_between():
    n_ids, n_vars, size = 8, 4, 32
    faces = {
        (i, v): synth_face(1000 + i, v, size).ravel()
        for i in range(n_ids)
        for v in range(n_vars)
    }
    within = []
    between = []
    keys = sorted(faces)
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            d = np.linalg.norm(faces[keys[a]] - faces[keys[b]])
            (within if keys[a][0] == keys[b][0] else between).append(d)
    assert np.mean(within) < np.mean(between)
