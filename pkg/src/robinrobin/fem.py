"""Lagrange P1/P2 spaces on one subdomain and the forms the schemes need.

Every element is affine, so all reference quantities are computed once in
barycentric coordinates and mapped with constant barycentric gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr, cg_solve
from .mesh import FacetTag, Mesh, Subdomain

# Strang-Fix / Dunavant degree-4 rule, weights normalised to sum to one.
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.091576213509770743460, 0.10995174365532186764
TRI_DEG4_POINTS = np.array([
    [_A1, _A1, 1 - 2 * _A1],
    [_A1, 1 - 2 * _A1, _A1],
    [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2],
    [_A2, 1 - 2 * _A2, _A2],
    [1 - 2 * _A2, _A2, _A2],
])
TRI_DEG4_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)

_G3, _G3W = np.polynomial.legendre.leggauss(3)
EDGE_POINTS = 0.5 * (_G3 + 1.0)
EDGE_WEIGHTS = 0.5 * _G3W


def collapsed_triangle_rule(npts):
    """Conical-product (Duffy) rule with ``npts**2`` points.

    Exact for polynomials of total degree ``2 * npts - 2``. Returns barycentric
    points and weights summing to one.
    """
    g, w = np.polynomial.legendre.leggauss(npts)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel() * 2.0
    points = np.column_stack([1.0 - x - y, x, y])
    return points, weights


NORM_POINTS, NORM_WEIGHTS = collapsed_triangle_rule(5)

# local P2 edge nodes as pairs of local vertices
P2_EDGES = ((0, 1), (1, 2), (2, 0))


def shape_functions(degree, bary):
    """Values and barycentric derivatives of the Lagrange basis.

    Parameters
    ----------
    degree : 1 or 2
    bary : (nq, 3) barycentric coordinates

    Returns
    -------
    phi : (nq, nb)
    dphi : (nq, nb, 3) derivatives with respect to each barycentric coordinate
    """
    bary = np.atleast_2d(bary)
    nq = bary.shape[0]
    if degree == 1:
        dphi = np.broadcast_to(np.eye(3), (nq, 3, 3)).copy()
        return bary.copy(), dphi
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    phi = np.empty((nq, 6))
    dphi = np.zeros((nq, 6, 3))
    for i in range(3):
        phi[:, i] = bary[:, i] * (2 * bary[:, i] - 1)
        dphi[:, i, i] = 4 * bary[:, i] - 1
    for m, (i, j) in enumerate(P2_EDGES):
        phi[:, 3 + m] = 4 * bary[:, i] * bary[:, j]
        dphi[:, 3 + m, i] = 4 * bary[:, j]
        dphi[:, 3 + m, j] = 4 * bary[:, i]
    return phi, dphi


def shape_hessians(degree):
    """Constant second barycentric derivatives, shape (nb, 3, 3)."""
    if degree == 1:
        return np.zeros((3, 3, 3))
    H = np.zeros((6, 3, 3))
    for i in range(3):
        H[i, i, i] = 4.0
    for m, (i, j) in enumerate(P2_EDGES):
        H[3 + m, i, j] = H[3 + m, j, i] = 4.0
    return H


def edge_shape_functions(degree, s):
    """Trace basis on an edge parametrised by s in [0, 1]: (start, end[, mid])."""
    s = np.asarray(s, dtype=float)
    if degree == 1:
        return np.column_stack([1 - s, s])
    return np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])


@dataclass(frozen=True, eq=False)
class Space:
    """Continuous Lagrange space on one subdomain of a mesh.

    ``interface_dofs`` is ordered along the interface from x=0 to x=1, so the
    fluid and solid spaces of one mesh list physically identical nodes in the
    same order.
    """

    mesh: Mesh
    subdomain: Subdomain
    degree: int
    elements: np.ndarray        # (ne, 3) mesh triangle indices
    element_dofs: np.ndarray    # (ne, 3 or 6)
    dof_coords: np.ndarray      # (ndofs, 2)
    dirichlet_dofs: np.ndarray
    interface_dofs: np.ndarray
    interface_edge_dofs: np.ndarray  # (ni, 2 or 3) as (start, end[, mid])
    areas: np.ndarray           # (ne,)
    bary_grads: np.ndarray      # (ne, 3, 2)

    @property
    def dim(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def quadrature_points(self, bary):
        p = self.mesh.vertices[self.mesh.triangles[self.elements]]   # (ne, 3, 2)
        return np.einsum("qk,ekd->eqd", bary, p)

    def interface_geometry(self):
        """Edge start points, end points and lengths along the interface."""
        p = self.mesh.vertices[self.mesh.interface_edges]
        lengths = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        return p[:, 0], p[:, 1], lengths


def _element_geometry(vertices, tris):
    p = vertices[tris]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    grads = np.empty((len(tris), 3, 2))
    grads[:, 1] = inv[:, 0]
    grads[:, 2] = inv[:, 1]
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return 0.5 * det, grads


def build_space(mesh: Mesh, subdomain, degree: int) -> Space:
    subdomain = Subdomain(subdomain)
    if degree not in (1, 2):
        raise ValueError(f"unsupported degree {degree}")
    elements = np.flatnonzero(mesh.subdomain == subdomain)
    tris = mesh.triangles[elements]
    nv = mesh.vertices.shape[0]

    used = np.unique(tris)
    vmap = np.full(nv, -1, dtype=np.int64)
    vmap[used] = np.arange(used.size)
    element_dofs = vmap[tris]
    dof_coords = mesh.vertices[used]

    if degree == 2:
        pairs = np.stack([tris[:, list(e)] for e in P2_EDGES], axis=1)  # (ne, 3, 2)
        lo = pairs.min(axis=2)
        hi = pairs.max(axis=2)
        keys = lo * nv + hi
        ukeys, inverse = np.unique(keys.ravel(), return_inverse=True)
        mid_dofs = used.size + inverse.reshape(keys.shape)
        element_dofs = np.hstack([element_dofs, mid_dofs])
        a, b = ukeys // nv, ukeys % nv
        mids = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        dof_coords = np.vstack([dof_coords, mids])

        def edge_dof(facets):
            k = np.minimum(facets[:, 0], facets[:, 1]) * nv + np.maximum(facets[:, 0], facets[:, 1])
            pos = np.searchsorted(ukeys, k)
            if np.any(ukeys[np.minimum(pos, ukeys.size - 1)] != k):
                raise ValueError("facet is not an edge of this subdomain")
            return used.size + pos

    dir_tag = FacetTag.DIRICHLET_FLUID if subdomain == Subdomain.FLUID else FacetTag.DIRICHLET_SOLID
    dir_facets = mesh.facets[mesh.facet_tags == dir_tag]
    dirichlet = [vmap[dir_facets.ravel()]]
    iface = mesh.interface_edges
    iface_edge_dofs = vmap[iface]
    if degree == 2:
        dirichlet.append(edge_dof(dir_facets))
        iface_edge_dofs = np.column_stack([iface_edge_dofs, edge_dof(iface)])
    dirichlet_dofs = np.unique(np.concatenate(dirichlet))
    if np.any(dirichlet_dofs < 0) or np.any(iface_edge_dofs < 0):
        raise ValueError("boundary facet does not belong to this subdomain")

    ordered = [iface_edge_dofs[0, 0]]
    for row in iface_edge_dofs:
        if degree == 2:
            ordered.append(row[2])
        ordered.append(row[1])
    interface_dofs = np.asarray(ordered, dtype=np.int64)

    areas, grads = _element_geometry(mesh.vertices, tris)
    for arr in (elements, element_dofs, dof_coords, dirichlet_dofs, interface_dofs,
                iface_edge_dofs, areas, grads):
        arr.setflags(write=False)
    return Space(
        mesh=mesh,
        subdomain=subdomain,
        degree=degree,
        elements=elements,
        element_dofs=element_dofs,
        dof_coords=dof_coords,
        dirichlet_dofs=dirichlet_dofs,
        interface_dofs=interface_dofs,
        interface_edge_dofs=iface_edge_dofs,
        areas=areas,
        bary_grads=grads,
    )


def _scatter(space_rows, space_cols, rows, cols, vals):
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(space_rows.dim, space_cols.dim))
    return as_csr(A)


def _physical_grads(space, dphi):
    # (ne, nq, nb, 2)
    return np.einsum("qbk,ekd->eqbd", dphi, space.bary_grads)


def assemble_mass(space: Space) -> sp.csr_matrix:
    phi, _ = shape_functions(space.degree, TRI_DEG4_POINTS)
    ref = np.einsum("q,qa,qb->ab", TRI_DEG4_WEIGHTS, phi, phi)
    local = space.areas[:, None, None] * ref[None]
    d = space.element_dofs
    return _scatter(space, space, np.broadcast_to(d[:, :, None], local.shape),
                    np.broadcast_to(d[:, None, :], local.shape), local)


def assemble_stiffness(space: Space) -> sp.csr_matrix:
    _, dphi = shape_functions(space.degree, TRI_DEG4_POINTS)
    g = _physical_grads(space, dphi)
    local = np.einsum("q,e,eqad,eqbd->eab", TRI_DEG4_WEIGHTS, space.areas, g, g)
    d = space.element_dofs
    return _scatter(space, space, np.broadcast_to(d[:, :, None], local.shape),
                    np.broadcast_to(d[:, None, :], local.shape), local)


def assemble_interface_mass(space_rows: Space, space_cols: Space) -> sp.csr_matrix:
    """Interface mass ``int_Sigma phi_i psi_j ds`` between two spaces' traces."""
    if space_rows.mesh is not space_cols.mesh or \
            space_rows.interface_dofs.size != space_cols.interface_dofs.size:
        raise ValueError("spaces do not share a matching interface")
    _, _, lengths = space_rows.interface_geometry()
    pr = edge_shape_functions(space_rows.degree, EDGE_POINTS)
    pc = edge_shape_functions(space_cols.degree, EDGE_POINTS)
    ref = np.einsum("q,qa,qb->ab", EDGE_WEIGHTS, pr, pc)
    local = lengths[:, None, None] * ref[None]
    dr = space_rows.interface_edge_dofs
    dc = space_cols.interface_edge_dofs
    return _scatter(space_rows, space_cols, np.broadcast_to(dr[:, :, None], local.shape),
                    np.broadcast_to(dc[:, None, :], local.shape), local)


def _call(f, x, y, t):
    out = f(x, y) if t is None else f(x, y, t)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x))


def interpolate(space: Space, f, t=None) -> np.ndarray:
    """Nodal interpolant coefficients of ``f(x, y[, t])``."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    return np.array(_call(f, x, y, t), dtype=float)


def domain_load(space: Space, f, t=None) -> np.ndarray:
    """Load vector ``int f phi_i dx`` over the subdomain."""
    phi, _ = shape_functions(space.degree, TRI_DEG4_POINTS)
    pts = space.quadrature_points(TRI_DEG4_POINTS)
    vals = _call(f, pts[..., 0], pts[..., 1], t)                # (ne, nq)
    local = np.einsum("q,e,eq,qb->eb", TRI_DEG4_WEIGHTS, space.areas, vals, phi)
    return np.bincount(space.element_dofs.ravel(), weights=local.ravel(), minlength=space.dim)


def _interface_points(space, s):
    a, b, lengths = space.interface_geometry()
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    return pts, lengths


def interface_load(space: Space, g, t=None) -> np.ndarray:
    """Load vector ``int_Sigma g phi_i ds`` on the full space."""
    pts, lengths = _interface_points(space, EDGE_POINTS)
    vals = _call(g, pts[..., 0], pts[..., 1], t)
    phi = edge_shape_functions(space.degree, EDGE_POINTS)
    local = np.einsum("q,e,eq,qb->eb", EDGE_WEIGHTS, lengths, vals, phi)
    return np.bincount(space.interface_edge_dofs.ravel(), weights=local.ravel(),
                       minlength=space.dim)


def interface_mass_matrix(space: Space) -> sp.csr_matrix:
    """Interface mass restricted to ``interface_dofs`` (in that order)."""
    B = assemble_interface_mass(space, space)
    idx = space.interface_dofs
    return as_csr(B[idx][:, idx])


def l2_project_interface(space: Space, g, t=None, tol=1e-14) -> np.ndarray:
    """L2(Sigma) projection of ``g`` onto the trace space, in interface order."""
    B = interface_mass_matrix(space)
    rhs = interface_load(space, g, t)[space.interface_dofs]
    c, _ = cg_solve(B, rhs, tol=tol)
    return c


def _eval_fe(space, coeffs, bary):
    phi, dphi = shape_functions(space.degree, bary)
    c = np.asarray(coeffs)[space.element_dofs]                # (ne, nb)
    vals = c @ phi.T                                           # (ne, nq)
    g = _physical_grads(space, dphi)
    grads = np.einsum("eb,eqbd->eqd", c, g)
    return vals, grads


def fe_hessians(space: Space, coeffs) -> np.ndarray:
    """Elementwise constant Hessians (ne, 2, 2) of a P2 function."""
    H = shape_hessians(space.degree)
    c = np.asarray(coeffs)[space.element_dofs]
    G = space.bary_grads
    return np.einsum("eb,bkl,ekd,elf->edf", c, H, G, G)


def error_norms(space: Space, coeffs, exact, exact_grad=None, exact_hess=None, t=None,
                h2=False):
    """Norms of ``exact - u_h`` over the subdomain.

    ``exact``, ``exact_grad`` and ``exact_hess`` are callables of ``(x, y)`` or
    ``(x, y, t)`` when ``t`` is given, returning arrays with trailing shapes
    (), (2,) and (2, 2). Returns a dict with ``L2``, ``H1semi`` and, when
    ``h2`` is requested, ``H2broken`` (full broken H2 norm).
    """
    if h2 and space.degree < 2:
        raise ValueError("broken H2 norm needs degree >= 2; P1 second derivatives vanish")
    pts = space.quadrature_points(NORM_POINTS)
    x, y = pts[..., 0], pts[..., 1]
    vals, grads = _eval_fe(space, coeffs, NORM_POINTS)
    w = space.areas[:, None] * NORM_WEIGHTS[None, :]
    ev = _call(exact, x, y, t) - vals
    out = {"L2": float(np.sqrt(np.sum(w * ev**2)))}
    if exact_grad is not None:
        g = np.asarray(exact_grad(x, y) if t is None else exact_grad(x, y, t))
        eg = g - grads
        out["H1semi"] = float(np.sqrt(np.sum(w[..., None] * eg**2)))
    if h2:
        if exact_grad is None or exact_hess is None:
            raise ValueError("H2 norm needs exact gradient and Hessian")
        Hx = np.asarray(exact_hess(x, y) if t is None else exact_hess(x, y, t))
        eh = Hx - fe_hessians(space, coeffs)[:, None]
        h2semi = np.sum(w[..., None, None] * eh**2)
        out["H2broken"] = float(np.sqrt(out["L2"]**2 + out["H1semi"]**2 + h2semi))
    return out


def interface_error_norm(space: Space, coeffs_sigma, exact) -> float:
    """L2(Sigma) norm of ``exact - sum c_i phi_i`` with coefficients in interface order."""
    pts, lengths = _interface_points(space, EDGE_POINTS)
    vals = _call(exact, pts[..., 0], pts[..., 1], None)
    pos = np.empty(space.dim, dtype=np.int64)
    pos[space.interface_dofs] = np.arange(space.interface_dofs.size)
    c = np.asarray(coeffs_sigma)[pos[space.interface_edge_dofs]]   # (ni, nb)
    phi = edge_shape_functions(space.degree, EDGE_POINTS)
    diff = vals - c @ phi.T
    return float(np.sqrt(np.sum(lengths[:, None] * EDGE_WEIGHTS[None, :] * diff**2)))
