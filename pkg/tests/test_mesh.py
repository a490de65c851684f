import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robinrobin.mesh import (
    FacetTag,
    Horizontal,
    Slanted,
    Subdomain,
    build_mesh,
    interface_arclength,
    parse_interface,
)


def test_quarter_interface_counts():
    mesh = build_mesh(4, Horizontal(0.75))
    assert mesh.vertices.shape == (25, 2)
    assert mesh.triangles.shape == (32, 3)
    assert np.sum(mesh.subdomain == Subdomain.SOLID) == 8
    assert np.sum(mesh.subdomain == Subdomain.FLUID) == 24
    assert len(mesh.interface_edges) == 4
    assert mesh.h == 0.25
    # lattice vertices: every coordinate a multiple of 1/4
    assert np.allclose(mesh.vertices * 4, np.round(mesh.vertices * 4), atol=1e-14)


def test_midline_interface_edges():
    mesh = build_mesh(2, Horizontal(0.5))
    edges = {tuple(map(tuple, mesh.vertices[e])) for e in mesh.interface_edges}
    assert edges == {((0.0, 0.5), (0.5, 0.5)), ((0.5, 0.5), (1.0, 0.5))}


def test_slanted_shear_formula():
    n = 4
    mesh = build_mesh(n, Slanted(0.25, 0.75))
    r_sigma = 2  # round(4 * 0.5)
    for col, row in [(0, 1), (2, 3), (4, 2)]:
        x = col / n
        ys = 0.25 + 0.5 * x
        expect = row / r_sigma * ys if row <= r_sigma else \
            ys + (row - r_sigma) / (n - r_sigma) * (1 - ys)
        v = mesh.vertices[row * (n + 1) + col]
        assert v[0] == pytest.approx(x, abs=1e-15)
        assert v[1] == pytest.approx(expect, abs=1e-15)
    iface_pts = mesh.vertices[np.unique(mesh.interface_edges)]
    assert np.allclose(iface_pts[:, 1], 0.25 + 0.5 * iface_pts[:, 0], atol=1e-15)


def test_graded_rows_for_off_lattice_interface():
    mesh = build_mesh(5, Horizontal(0.3))
    ys = np.unique(np.round(mesh.vertices[:, 1], 14))
    assert 0.3 in set(np.round(ys, 14))
    iface = mesh.vertices[np.unique(mesh.interface_edges)]
    assert np.allclose(iface[:, 1], 0.3)


@pytest.mark.parametrize("spec,length", [
    (Horizontal(0.75), 1.0),
    (Slanted(0.25, 0.75), math.sqrt(1 + 0.5**2)),
    (Horizontal(0.5), 1.0),
])
@pytest.mark.parametrize("n", [2, 4, 16])
def test_interface_arclength(spec, length, n):
    assert interface_arclength(build_mesh(n, spec)) == pytest.approx(length, rel=1e-14)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_mesh(1, Horizontal(0.5))
    with pytest.raises(ValueError):
        Horizontal(1.0)
    with pytest.raises(ValueError):
        Slanted(0.2, 0.0)


def test_parse_interface():
    assert parse_interface("horizontal:0.75") == Horizontal(0.75)
    assert parse_interface("slanted:0.25,0.75") == Slanted(0.25, 0.75)
    with pytest.raises(ValueError):
        parse_interface("diagonal:0.3")


specs = st.one_of(
    st.builds(Horizontal, st.floats(0.05, 0.95)),
    st.builds(Slanted, st.floats(0.05, 0.95), st.floats(0.05, 0.95)),
)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 24), spec=specs)
def test_mesh_invariants(n, spec):
    mesh = build_mesh(n, spec)
    areas = mesh.triangle_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(1.0, abs=1e-12)
    fluid = mesh.subdomain == Subdomain.FLUID
    assert areas[fluid].sum() == pytest.approx(spec.fluid_area, abs=1e-12)

    # no triangle straddles the interface
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    below = cent[:, 1] < spec.height(cent[:, 0])
    assert np.array_equal(below, fluid)

    # every interface vertex touches both subdomains
    for v in np.unique(mesh.interface_edges):
        touching = mesh.subdomain[np.any(mesh.triangles == v, axis=1)]
        assert {Subdomain.FLUID, Subdomain.SOLID} <= set(touching.tolist())

    # facet tags partition the boundary plus interface
    p = mesh.vertices[mesh.facets]
    tags = mesh.facet_tags
    assert np.all(p[tags == FacetTag.DIRICHLET_FLUID][..., 1] == 0.0)
    assert np.all(p[tags == FacetTag.DIRICHLET_SOLID][..., 1] == 1.0)
    side = (tags == FacetTag.NEUMANN_FLUID) | (tags == FacetTag.NEUMANN_SOLID)
    xs = p[side][..., 0]
    assert np.all((xs == 0.0) | (xs == 1.0))
    keys = {tuple(sorted(f)) for f in mesh.facets.tolist()}
    assert len(keys) == len(mesh.facets)
    boundary_len = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)[tags != FacetTag.INTERFACE].sum()
    assert boundary_len == pytest.approx(4.0, abs=1e-12)

    # conforming: every interior edge is shared by exactly two triangles
    edges = np.sort(mesh.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    assert np.sum(counts == 1) == 4 * n


def test_dump(tmp_path):
    mesh = build_mesh(2, Horizontal(0.5))
    path = tmp_path / "mesh.txt"
    mesh.dump(path)
    lines = path.read_text().splitlines()
    assert sum(l.startswith("vertex ") for l in lines) == 9
    assert sum(l.startswith("tri ") for l in lines) == 8
    assert any(l.endswith("interface") for l in lines if l.startswith("facet "))


def test_mesh_is_read_only():
    mesh = build_mesh(2, Horizontal(0.5))
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 3.0
