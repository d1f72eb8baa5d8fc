import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwre.errors import NonUnitDirection
from rwre.geometry import (BoundaryClass, BoxTriple, Direction, Frame, HyperplaneFamily, Variant, box_sites_and_boundary,
                           build_rotation, grid_sites, hyperplane_membership, level_index, unit_steps)


def test_rotation_identity_for_e1():
    for d in (1, 2, 3, 4):
        np.testing.assert_array_equal(build_rotation(Direction.axis(d)), np.eye(d))


def test_rotation_example_06_08():
    R = build_rotation(Direction((0.6, 0.8)))
    np.testing.assert_allclose(R.T @ R, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(R[:, 0], [0.6, 0.8], atol=1e-15)
    assert np.allclose(R[:, 1], [-0.8, 0.6]) or np.allclose(R[:, 1], [0.8, -0.6])


def test_non_unit_direction_rejected():
    with pytest.raises(NonUnitDirection):
        Direction((0.9, 0.0))


unit_vectors = st.integers(2, 4).flatmap(
    lambda d: st.lists(st.floats(-1, 1, allow_nan=False), min_size=d, max_size=d)
    .filter(lambda v: np.linalg.norm(v) > 0.1))


@given(unit_vectors)
def test_rotation_is_orthogonal_with_first_column_ell(v):
    v = np.asarray(v) / np.linalg.norm(v)
    R = build_rotation(Direction(tuple(v)))
    np.testing.assert_allclose(R.T @ R, np.eye(len(v)), atol=1e-10)
    np.testing.assert_allclose(R[:, 0], v, atol=1e-12)
    assert np.linalg.det(R) > 0


@given(unit_vectors, st.integers(0, 2 ** 16))
def test_rotation_preserves_distances(v, seed):
    v = np.asarray(v) / np.linalg.norm(v)
    f = Frame(Direction(tuple(v)))
    pts = np.random.default_rng(seed).integers(-20, 20, size=(6, len(v)))
    proj = pts @ f.R
    for a, b in itertools.combinations(range(6), 2):
        assert abs(np.linalg.norm(proj[a] - proj[b]) - np.linalg.norm(pts[a] - pts[b])) <= 1e-9


def test_box_example_L2():
    bs = box_sites_and_boundary(BoxTriple.from_direction(Direction.axis(2), 2.0, 2.0))
    interior = {tuple(x) for x in bs.interior.tolist()}
    assert interior == set(itertools.product((-1, 0, 1), repeat=2))
    pos = {tuple(x) for x in bs.of_class(BoundaryClass.POSITIVE).tolist()}
    assert {(2, -1), (2, 0), (2, 1)} <= pos


def test_box_example_half_width():
    # the only candidate site 0 satisfies the open bounds, so the box is not empty
    bs = box_sites_and_boundary(BoxTriple.from_direction(Direction.axis(2), 0.5, 0.5))
    assert bs.interior.tolist() == [[0, 0]]
    lab = {tuple(x): BoundaryClass(c) for x, c in zip(bs.boundary.tolist(), bs.labels)}
    assert lab == {(1, 0): BoundaryClass.POSITIVE, (-1, 0): BoundaryClass.NEGATIVE,
                   (0, 1): BoundaryClass.LATERAL, (0, -1): BoundaryClass.LATERAL}


@given(unit_vectors, st.floats(0.5, 6), st.floats(0.5, 6))
def test_box_closure_and_partition(v, L, Lt):
    v = np.asarray(v) / np.linalg.norm(v)
    bs = box_sites_and_boundary(BoxTriple.from_direction(Direction(tuple(v)), L, Lt))
    inner = {tuple(x) for x in bs.interior.tolist()}
    bnd = [tuple(x) for x in bs.boundary.tolist()]
    assert len(bnd) == len(set(bnd)) == len(bs.labels)
    assert not inner & set(bnd)
    assert set(bs.labels.tolist()) <= {0, 1, 2}
    allowed = inner | set(bnd)
    for x in bs.interior:
        for e in unit_steps(len(v)):
            assert tuple(x + e) in allowed


@pytest.mark.parametrize("u, expected", [(5, 1), (-2, 0), (2, 1)])
def test_level_index_examples(u, expected):
    assert level_index(np.array([u, 0]), Direction.axis(2), 4.0) == expected


@given(st.lists(st.sampled_from([0, 1, 2]), min_size=1, max_size=40), st.floats(1.0, 9.0))
def test_level_index_monotone_along_paths(moves, L0):
    # steps +e1, +e2, -e2 never decrease the e1 projection
    ell = Direction.axis(2)
    steps = {0: (1, 0), 1: (0, 1), 2: (0, -1)}
    x = np.zeros(2, dtype=np.int64)
    prev = level_index(x, ell, L0)
    for m in moves:
        x = x + steps[m]
        cur = level_index(x, ell, L0)
        assert cur >= prev
        prev = cur


def test_full_hyperplane_example():
    fam = HyperplaneFamily(Frame(Direction.axis(2)), 4.0)
    sites = grid_sites((-2, -3), (10, 3))
    mem = fam.contains(sites, 1)
    assert set(sites[mem][:, 0].tolist()) == {3, 4, 5}
    assert hyperplane_membership((0, 0), fam, 0)


@pytest.mark.parametrize("L0", [2, 3, 4, 7])
def test_full_hyperplane_three_planes(L0):
    fam = HyperplaneFamily(Frame(Direction.axis(3)), float(L0))
    sites = grid_sites((-3 * L0, -2, -2), (3 * L0, 2, 2))
    for i in (-2, -1, 0, 1, 2):
        got = set(sites[fam.contains(sites, i)][:, 0].tolist())
        assert got == {i * L0 - 1, i * L0, i * L0 + 1}


def test_truncated_hyperplane_example():
    fam = HyperplaneFamily(Frame(Direction.axis(2)), 4.0, Variant.TRUNCATED, 2.0)
    assert not hyperplane_membership((3, 5), fam, 1)
    assert hyperplane_membership((3, 1), fam, 1)


def test_shifted_levels():
    f = Frame(Direction.axis(2))
    b = HyperplaneFamily(f, 4.0, Variant.SHIFTED_BETA, 3.0, 0.5)
    t = HyperplaneFamily(f, 4.0, Variant.SHIFTED_3, 3.0)
    assert b.level(2) == pytest.approx(2 * (4 + 1 + 2))
    assert t.level(2) == 11.0
    assert set(t.sites(2)[:, 0].tolist()) == {10, 11, 12}
    assert np.all(np.abs(t.sites(2)[:, 1]) < 3)


def test_frontal_boundary_is_next_plane():
    fam = HyperplaneFamily(Frame(Direction.axis(2)), 4.0)
    sites = grid_sites((-2, -2), (10, 2))
    fb = fam.frontal_boundary(sites, 1)
    assert set(sites[fb][:, 0].tolist()) == {6}


def test_rotated_hyperplane_separates_levels():
    f = Frame(Direction.from_angle(0.3))
    fam = HyperplaneFamily(f, 5.0)
    sites = grid_sites((-20, -20), (20, 20))
    # members lie within one projected lattice step of their level
    for i in (-1, 0, 1):
        mem = fam.contains(sites, i)
        assert mem.any()
        u = f.u(sites[mem])
        assert np.all(np.abs(u - 5.0 * i) <= f.max_step + 1e-12)
    assert math.isclose(f.max_step, max(abs(math.cos(0.3)), abs(math.sin(0.3))))
