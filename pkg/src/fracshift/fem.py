"""P1 finite elements on the uniformly triangulated unit square.

Meshes split each grid cell along the same diagonal, so dyadic
refinements nest exactly and coarse functions transfer to fine meshes by
nodal interpolation without quadrature. Sesquilinear forms

    A(w, v) = int_Omega  grad(w) C(x) conj(grad(v))^T
              + (a(x) . grad(w)) conj(v) + r(x) w conj(v)  dx

are assembled with the coefficients frozen at triangle barycenters and
the remaining polynomial factors integrated exactly; the mass matrix is
exact. Homogeneous Dirichlet conditions are imposed by restriction to
interior nodes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as _sp

from .sparse import ArgumentError, SparseComplex, factorize


class Mesh:
    """Uniform right-triangle mesh of the unit square.

    Attributes:
        n_div: subdivisions per side.
        h: mesh size 1/n_div.
        nodes: (N, 2) vertex coordinates, N = (n_div+1)^2.
        triangles: (T, 3) vertex indices, T = 2 n_div^2, positively
            oriented, cell by cell with the lower triangle first.
        boundary: (N,) bool mask of boundary vertices.
        interior: indices of interior vertices in ascending order.
    """

    def __init__(self, n_div):
        if n_div < 1:
            raise ArgumentError("n_div must be at least 1")
        n = int(n_div)
        self.n_div = n
        self.h = 1.0 / n
        ix, iy = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
        ix = ix.ravel()
        iy = iy.ravel()
        self.grid_index = np.column_stack([ix, iy])
        self.nodes = self.grid_index / float(n)
        self.boundary = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)
        self.interior = np.flatnonzero(~self.boundary)

        cx, cy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        cx = cx.ravel()
        cy = cy.ravel()
        v00 = cy * (n + 1) + cx
        v10 = v00 + 1
        v01 = v00 + (n + 1)
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        tris = np.empty((2 * n * n, 3), dtype=np.int64)
        tris[0::2] = lower
        tris[1::2] = upper
        self.triangles = tris

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_interior(self):
        return self.interior.size

    def __repr__(self):
        return f"Mesh(n_div={self.n_div}, nodes={self.n_nodes})"


def build_mesh(n_div):
    """Construct the uniform triangulation with n_div cells per side."""
    return Mesh(n_div)


@dataclass(frozen=True)
class CoefficientField:
    """Vectorized coefficients (C, a, r) of the sesquilinear form.

    Each callable takes coordinate arrays x, y of shape (k,) and returns
    arrays of shape (k, 2, 2), (k, 2) and (k,) respectively.
    """

    c: callable
    a: callable
    r: callable
    name: str = ""


def _const_c(val):
    val = np.asarray(val)

    def c(x, y):
        out = np.empty((x.size, 2, 2), dtype=val.dtype)
        out[:] = val
        return out

    return c


def _zero_a(x, y):
    return np.zeros((x.size, 2))


def _zero_r(x, y):
    return np.zeros(x.size)


def preset(name):
    """The three test operators: a1 Laplace, a2 real elliptic, a3 complex."""
    key = name.lower()
    if key == "a1":
        return CoefficientField(_const_c(np.eye(2)), _zero_a, _zero_r, "a1")
    if key == "a2":

        def c2(x, y):
            out = np.empty((x.size, 2, 2))
            out[:, 0, 0] = 1.0 + 0.5 * np.sin(np.pi * x)
            out[:, 0, 1] = 0.5 * np.cos(np.pi * x)
            out[:, 1, 0] = 0.5 * np.sin(np.pi * y)
            out[:, 1, 1] = 1.0 + 0.5 * np.cos(np.pi * y)
            return out

        def a2(x, y):
            return np.column_stack([0.5 + y, 0.5 + x])

        return CoefficientField(c2, a2, _zero_r, "a2")
    if key == "a3":

        def c3(x, y):
            out = np.empty((x.size, 2, 2), dtype=np.complex128)
            out[:, 0, 0] = 0.5 + y + 5j * x
            out[:, 0, 1] = x - y
            out[:, 1, 0] = -1j * x * y
            out[:, 1, 1] = 0.5 + x + 5j * y
            return out

        return CoefficientField(c3, _zero_a, _zero_r, "a3")
    raise ArgumentError(f"unknown operator preset {name!r}")


class SourceTerm:
    """Named source with its smoothness index delta."""

    def __init__(self, name, fn, delta):
        self.name = name
        self.fn = fn
        self.delta = delta

    def __call__(self, x, y):
        return self.fn(x, y)


def source(name):
    key = name.lower()
    if key == "f1":
        return SourceTerm("f1", lambda x, y: x * y * (1.0 - x) * (1.0 - y), 2.0)
    if key == "f2":
        return SourceTerm(
            "f2",
            lambda x, y: (x * y) ** 0.51 * ((1.0 - x) * (1.0 - y)) ** 0.51,
            1.0,
        )
    if key == "f3":
        return SourceTerm("f3", lambda x, y: np.ones_like(x), 0.5)
    if key == "zero":
        # diagnostic source: exercises the linearity of the whole chain
        return SourceTerm("zero", lambda x, y: np.zeros_like(x), 2.0)
    raise ArgumentError(f"unknown source {name!r}")


@dataclass(frozen=True)
class DiscreteOperator:
    """Assembled matrices of one form on one mesh.

    mass and stiff are restricted to interior nodes; full_mass covers
    all nodes and is kept for quadrature and norm checks.
    """

    mesh: Mesh
    mass: SparseComplex
    stiff: SparseComplex
    full_mass: SparseComplex


@dataclass
class GridFunction:
    """P1 function given by its interior nodal values (zero on boundary)."""

    mesh: Mesh
    values: np.ndarray

    def full_values(self):
        out = np.zeros(self.mesh.n_nodes, dtype=self.values.dtype)
        out[self.mesh.interior] = self.values
        return out


def _geometry(mesh):
    """Per-triangle areas, P1 gradients and barycenters."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # grad phi_i = (y_j - y_k, x_k - x_j) / det, indices cyclic
    g = np.empty_like(p)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    g /= det[:, None, None]
    bary = p.mean(axis=1)
    return area, g, bary, p


def _element_mass(area):
    base = np.full((3, 3), 1.0 / 12.0)
    np.fill_diagonal(base, 1.0 / 6.0)
    return area[:, None, None] * base


def _scatter(mesh, elem):
    tri = mesh.triangles
    rows = np.broadcast_to(tri[:, :, None], elem.shape)
    cols = np.broadcast_to(tri[:, None, :], elem.shape)
    n = mesh.n_nodes
    coo = _sp.coo_matrix(
        (elem.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    )
    return coo.tocsr()


def assemble(mesh, coeffs, adjoint=False):
    """Assemble mass and stiffness of the form on interior nodes.

    With adjoint=True the element matrices are conjugate transposed,
    which assembles A*(w, v) = conj(A(v, w)).
    """
    area, g, bary, _ = _geometry(mesh)
    cmat = np.asarray(coeffs.c(bary[:, 0], bary[:, 1]))
    avec = np.asarray(coeffs.a(bary[:, 0], bary[:, 1]))
    rval = np.asarray(coeffs.r(bary[:, 0], bary[:, 1]))
    for label, arr in (("C", cmat), ("a", avec), ("r", rval)):
        flat = arr.reshape(arr.shape[0], -1)
        bad = ~np.all(np.isfinite(flat), axis=1)
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            raise ArgumentError(
                f"coefficient {label} is not finite on triangle {t} "
                f"(barycenter {tuple(bary[t])})"
            )

    # K_ij = (C grad phi_j) . grad phi_i: rows of C pair with the test gradient
    elem = np.einsum("tid,tde,tje,t->tij", g, cmat, g, area)
    conv = np.einsum("td,tjd->tj", avec, g) * (area / 3.0)[:, None]
    elem = elem + conv[:, None, :]
    m_elem = _element_mass(area)
    if rval.dtype.kind == "c" or np.any(rval):
        elem = elem + rval[:, None, None] * m_elem
    if adjoint:
        elem = np.conj(np.swapaxes(elem, 1, 2))

    k_full = _scatter(mesh, elem)
    m_full = _scatter(mesh, m_elem)
    idx = mesh.interior
    return DiscreteOperator(
        mesh=mesh,
        mass=SparseComplex(m_full[idx][:, idx]),
        stiff=SparseComplex(k_full[idx][:, idx]),
        full_mass=SparseComplex(m_full),
    )


def load_vector(mesh, f):
    """Interior load (f, phi_i) by the edge-midpoint rule.

    The rule is exact for quadratic integrands, matching the element
    quadrature used in assemble.
    """
    area, _, _, p = _geometry(mesh)
    mids = np.empty_like(p)
    mids[:, 0] = 0.5 * (p[:, 1] + p[:, 2])
    mids[:, 1] = 0.5 * (p[:, 0] + p[:, 2])
    mids[:, 2] = 0.5 * (p[:, 0] + p[:, 1])
    fm = np.asarray(f(mids[..., 0].ravel(), mids[..., 1].ravel()))
    fm = fm.reshape(len(area), 3)
    bad = ~np.all(np.isfinite(fm), axis=1)
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise ArgumentError(f"source is not finite on triangle {t}")
    # vertex i sees the two midpoints of its incident edges with phi = 1/2
    total = fm.sum(axis=1)
    contrib = (area / 6.0)[:, None] * (total[:, None] - fm)
    out = np.zeros(mesh.n_nodes, dtype=contrib.dtype)
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out[mesh.interior]


def project(op, f):
    """L2 projection of f onto the interior P1 space."""
    rhs = load_vector(op.mesh, f)
    coeff = factorize(op.mass).solve(rhs)
    return GridFunction(op.mesh, coeff)


def l2_norm(gf, mass):
    """Norm induced by a mass matrix on the function's dof vector."""
    v = gf.values
    return float(np.sqrt(np.real(np.vdot(v, mass.matvec(v)))))


def interpolate_to(coarse, fine_mesh):
    """Exact nodal transfer of a coarse GridFunction to a nested mesh.

    Returns full nodal values on the fine mesh. The fine mesh must
    subdivide the coarse one by an integer factor.
    """
    nc = coarse.mesh.n_div
    nf = fine_mesh.n_div
    if nf % nc != 0:
        raise ArgumentError(f"meshes do not nest: {nc} into {nf}")
    r = nf // nc
    vals = np.zeros((nc + 1, nc + 1), dtype=complex)
    full = coarse.full_values()
    vals[coarse.mesh.grid_index[:, 1], coarse.mesh.grid_index[:, 0]] = full

    ix = fine_mesh.grid_index[:, 0]
    iy = fine_mesh.grid_index[:, 1]
    icx = np.minimum(ix // r, nc - 1)
    icy = np.minimum(iy // r, nc - 1)
    an = ix - icx * r
    bn = iy - icy * r
    a = an / r
    b = bn / r
    v00 = vals[icy, icx]
    v10 = vals[icy, icx + 1]
    v01 = vals[icy + 1, icx]
    v11 = vals[icy + 1, icx + 1]
    lower = bn <= an
    out = np.where(
        lower,
        v00 * (1.0 - a) + v10 * (a - b) + v11 * b,
        v00 * (1.0 - b) + v01 * (b - a) + v11 * a,
    )
    if not np.iscomplexobj(full):
        out = out.real
    return out


def mass_matrix(mesh):
    """Interior mass matrix alone (no coefficients needed)."""
    area, _, _, _ = _geometry(mesh)
    m_full = _scatter(mesh, _element_mass(area))
    idx = mesh.interior
    return SparseComplex(m_full[idx][:, idx])


def l2_error(coarse, fine, fine_mass=None):
    """L2 distance between nested-grid functions, measured on the fine mesh."""
    if fine.mesh.n_div % coarse.mesh.n_div != 0:
        raise ArgumentError("coarse mesh does not divide the fine one")
    if fine_mass is None:
        fine_mass = mass_matrix(fine.mesh)
    lifted = interpolate_to(coarse, fine.mesh)[fine.mesh.interior]
    diff = lifted - fine.values
    return l2_norm(GridFunction(fine.mesh, diff), fine_mass)
