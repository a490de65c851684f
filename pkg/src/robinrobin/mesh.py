"""Structured interface-conforming triangulations of the unit square.

The square is split by a straight interface into a lower (fluid) part and an
upper (solid) part. Dirichlet edges are y=0 and y=1, Neumann edges are the
vertical sides x=0 and x=1.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Subdomain(IntEnum):
    FLUID = 0
    SOLID = 1


class FacetTag(IntEnum):
    DIRICHLET_FLUID = 0
    DIRICHLET_SOLID = 1
    NEUMANN_FLUID = 2
    NEUMANN_SOLID = 3
    INTERFACE = 4


@dataclass(frozen=True)
class Horizontal:
    y0: float

    def __post_init__(self):
        if not 0.0 < self.y0 < 1.0:
            raise ValueError(f"horizontal interface y0={self.y0} must lie in (0, 1)")

    def height(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.y0)

    @property
    def fluid_area(self) -> float:
        return self.y0


@dataclass(frozen=True)
class Slanted:
    y_left: float
    y_right: float

    def __post_init__(self):
        for y in (self.y_left, self.y_right):
            if not 0.0 < y < 1.0:
                raise ValueError(f"slanted interface endpoint {y} must lie in (0, 1)")

    def height(self, x):
        x = np.asarray(x, dtype=float)
        return self.y_left + (self.y_right - self.y_left) * x

    @property
    def fluid_area(self) -> float:
        return 0.5 * (self.y_left + self.y_right)


InterfaceSpec = Horizontal | Slanted


def parse_interface(text: str) -> InterfaceSpec:
    """Parse ``horizontal:<y0>`` or ``slanted:<yL>,<yR>``."""
    kind, _, args = text.strip().partition(":")
    kind = kind.strip().lower()
    try:
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError as exc:
        raise ValueError(f"bad interface spec {text!r}") from exc
    if kind == "horizontal" and len(values) == 1:
        return Horizontal(values[0])
    if kind == "slanted" and len(values) == 2:
        return Slanted(values[0], values[1])
    raise ValueError(f"bad interface spec {text!r}")


def format_interface(spec: InterfaceSpec) -> str:
    if isinstance(spec, Horizontal):
        return f"horizontal:{spec.y0:g}"
    return f"slanted:{spec.y_left:g},{spec.y_right:g}"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with subdomain and facet tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    subdomain : (nt,) int array of :class:`Subdomain` values
    facets : (nf, 2) int array of boundary and interface edges
    facet_tags : (nf,) int array of :class:`FacetTag` values
    interface_edges : (ni, 2) int array ordered left to right along the interface
    h : nominal mesh size 1/n
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    interface_edges: np.ndarray
    h: float
    n: int
    interface: InterfaceSpec

    def __post_init__(self):
        for name in ("vertices", "triangles", "subdomain", "facets", "facet_tags",
                     "interface_edges"):
            getattr(self, name).setflags(write=False)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def dump(self, path) -> None:
        """Write a plain-text dump with ``vertex``/``tri``/``facet`` records."""
        with open(path, "w") as fh:
            for x, y in self.vertices:
                fh.write(f"vertex {x!r} {y!r}\n")
            for (i, j, k), tag in zip(self.triangles, self.subdomain):
                fh.write(f"tri {i} {j} {k} {Subdomain(tag).name.lower()}\n")
            for (i, j), tag in zip(self.facets, self.facet_tags):
                fh.write(f"facet {i} {j} {FacetTag(tag).name.lower()}\n")


def _row_heights(n: int, spec: InterfaceSpec, x: np.ndarray) -> tuple[np.ndarray, int]:
    """Return y-coordinates of shape (n+1 rows, len(x)) and the interface row."""
    r_sigma = int(round(n * spec.fluid_area))
    r_sigma = min(max(r_sigma, 1), n - 1)
    ys = spec.height(x)
    rows = np.arange(n + 1, dtype=float)[:, None]
    below = rows / r_sigma * ys[None, :]
    above = ys[None, :] + (rows - r_sigma) / (n - r_sigma) * (1.0 - ys[None, :])
    y = np.where(rows <= r_sigma, below, above)
    y[r_sigma] = ys
    y[0] = 0.0
    y[n] = 1.0
    return y, r_sigma


def build_mesh(n: int, spec: InterfaceSpec) -> Mesh:
    """Build an n-by-n structured right-triangle mesh conforming to ``spec``.

    Columns are uniform in x. Each column is graded piecewise-uniformly in y so
    that row ``r_sigma = round(n * fluid_area)`` lies on the interface. For a
    horizontal interface on the uniform lattice this reproduces the lattice.
    """
    if n < 2:
        raise ValueError(f"need at least 2 subdivisions, got {n}")
    if not isinstance(spec, (Horizontal, Slanted)):
        raise TypeError(f"unknown interface spec {spec!r}")

    x = np.linspace(0.0, 1.0, n + 1)
    y, r_sigma = _row_heights(n, spec, x)
    # vertex (column i, row j) -> j*(n+1) + i
    xx = np.broadcast_to(x[None, :], y.shape)
    vertices = np.column_stack([xx.ravel(), y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    v00, v10 = vid(ii, jj), vid(ii + 1, jj)
    v01, v11 = vid(ii, jj + 1), vid(ii + 1, jj + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # interleave so each quad's pair stays adjacent
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    row = np.repeat(jj, 2)
    subdomain = np.where(row < r_sigma, Subdomain.FLUID, Subdomain.SOLID).astype(np.int64)

    facets = []
    tags = []
    cols = np.arange(n)
    for a, b in zip(vid(cols, 0), vid(cols + 1, 0)):
        facets.append((a, b))
        tags.append(FacetTag.DIRICHLET_FLUID)
    for a, b in zip(vid(cols, n), vid(cols + 1, n)):
        facets.append((a, b))
        tags.append(FacetTag.DIRICHLET_SOLID)
    for j in range(n):
        side = FacetTag.NEUMANN_FLUID if j < r_sigma else FacetTag.NEUMANN_SOLID
        facets.append((vid(0, j), vid(0, j + 1)))
        tags.append(side)
        facets.append((vid(n, j), vid(n, j + 1)))
        tags.append(side)
    interface_edges = np.column_stack([vid(cols, r_sigma), vid(cols + 1, r_sigma)])
    for a, b in interface_edges:
        facets.append((a, b))
        tags.append(FacetTag.INTERFACE)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        subdomain=subdomain,
        facets=np.asarray(facets, dtype=np.int64),
        facet_tags=np.asarray(tags, dtype=np.int64),
        interface_edges=interface_edges.astype(np.int64),
        h=1.0 / n,
        n=n,
        interface=spec,
    )


def interface_arclength(mesh: Mesh) -> float:
    p = mesh.vertices[mesh.interface_edges]
    return float(np.sum(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))
