"""Structured P1 Lagrange finite elements on rectangles.

Assembles the sesquilinear form

    a(u, v) = int_Q  A (grad u + i k w u) . conj(grad v + i k w v)
                    - rho omega^2 u conj(v)

on a regular triangular mesh (each grid square split in two), with optional
periodic identification per axis.  The shift vector ``w`` carries the Floquet
phase of the lifted waveguide problems; ``w = (0, theta1)`` for the slice
problems and ``w = (0, 1/tau)`` for interface-periodic references.

Fluxes are always extracted weakly: the Dirichlet-to-Neumann data on an edge
is the residual ``K u - b`` paired against that edge's nodal basis, never a
pointwise derivative of the solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

EDGE_TAGS = ("X0", "X1", "Z0", "Z1")

# degree-2 Gauss rule on the reference triangle
_QP = np.array([[2 / 3, 1 / 6], [1 / 6, 2 / 3], [1 / 6, 1 / 6]])
_QW = np.array([1 / 3, 1 / 3, 1 / 3])


@dataclass
class StructuredMesh2D:
    """Regular triangulation of (0,Lx) x (0,Lz) with optional periodic axes."""

    Lx: float
    Lz: float
    nx: int
    nz: int
    periodic_x: bool
    periodic_z: bool
    ndofs: int = 0
    dof_of_node: np.ndarray = None  # (nx+1)*(nz+1) grid -> dof id
    coords: np.ndarray = None  # representative coordinates per dof
    triangles: np.ndarray = None  # (ntri, 3) dof ids
    tri_coords: np.ndarray = None  # (ntri, 3, 2) unfolded vertex coordinates
    _edge_cache: dict = dataclass_field(default_factory=dict)

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hz(self) -> float:
        return self.Lz / self.nz

    @property
    def h(self) -> float:
        return max(self.hx, self.hz)

    def node_index(self, ix, iz):
        return np.asarray(ix) * (self.nz + 1) + np.asarray(iz)

    def edge_dofs(self, tag: str) -> np.ndarray:
        """Dof ids along a tagged edge, in geometric order, one per node.

        On a periodic axis the closing node is the wrapped first one and is
        omitted; otherwise both endpoints are included.
        """
        if tag in self._edge_cache:
            return self._edge_cache[tag]
        if tag == "X0":
            ix, iz = 0, np.arange(self.nz + 1)
        elif tag == "X1":
            ix, iz = self.nx, np.arange(self.nz + 1)
        elif tag == "Z0":
            ix, iz = np.arange(self.nx + 1), 0
        elif tag == "Z1":
            ix, iz = np.arange(self.nx + 1), self.nz
        else:
            raise KeyError(f"unknown edge tag {tag!r}")
        dofs = self.dof_of_node[self.node_index(ix, iz)]
        along_z = tag in ("X0", "X1")
        if (along_z and self.periodic_z) or (not along_z and self.periodic_x):
            dofs = dofs[:-1]
        self._edge_cache[tag] = dofs
        return dofs

    def edge_step(self, tag: str) -> float:
        return self.hz if tag in ("X0", "X1") else self.hx


def build_mesh(Lx, Lz, nx, nz, periodic_x=False, periodic_z=False) -> StructuredMesh2D:
    """Regular mesh with each grid square split along its SW-NE diagonal."""
    if Lx <= 0 or Lz <= 0:
        raise ValueError("mesh extents must be positive")
    if nx < 2 or nz < 2:
        raise ValueError("need at least 2 subdivisions per axis")
    mesh = StructuredMesh2D(Lx, Lz, nx, nz, periodic_x, periodic_z)

    gx, gz = np.meshgrid(np.arange(nx + 1), np.arange(nz + 1), indexing="ij")
    ox = np.where(periodic_x & (gx == nx), 0, gx)
    oz = np.where(periodic_z & (gz == nz), 0, gz)
    owner = ox * (nz + 1) + oz
    unique, dof = np.unique(owner.ravel(), return_inverse=True)
    mesh.dof_of_node = dof
    mesh.ndofs = unique.size
    ux, uz = unique // (nz + 1), unique % (nz + 1)
    mesh.coords = np.column_stack([ux * mesh.hx, uz * mesh.hz])

    ix, iz = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    ix, iz = ix.ravel(), iz.ravel()
    n00 = mesh.node_index(ix, iz)
    n10 = mesh.node_index(ix + 1, iz)
    n01 = mesh.node_index(ix, iz + 1)
    n11 = mesh.node_index(ix + 1, iz + 1)
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    nodes = np.vstack([lower, upper])
    mesh.triangles = mesh.dof_of_node[nodes]
    vx = (nodes // (nz + 1)) * mesh.hx
    vz = (nodes % (nz + 1)) * mesh.hz
    mesh.tri_coords = np.stack([vx, vz], axis=-1)
    return mesh


@dataclass
class AssembledForm:
    """Sparse matrix of the sesquilinear form plus its solve machinery."""

    mesh: StructuredMesh2D
    K: sp.csr_matrix
    omega: complex
    k: float
    w: tuple[float, float]
    _solvers: dict = dataclass_field(default_factory=dict)

    def factorize(self, dirichlet_tags: tuple[str, ...]):
        """Cache an interior factorization for a given set of Dirichlet tags."""
        key = tuple(sorted(dirichlet_tags))
        if key not in self._solvers:
            self._solvers[key] = _DirichletSolver(self, key)
        return self._solvers[key]


class _DirichletSolver:
    def __init__(self, form: AssembledForm, tags: tuple[str, ...]):
        mesh = form.mesh
        bdofs = np.unique(np.concatenate([mesh.edge_dofs(t) for t in tags])) if tags else np.array([], dtype=int)
        mask = np.ones(mesh.ndofs, dtype=bool)
        mask[bdofs] = False
        self.form = form
        self.bdofs = bdofs
        self.interior = np.where(mask)[0]
        K = form.K
        Kii = K[self.interior][:, self.interior].tocsc()
        self.Kib = K[self.interior][:, self.bdofs].tocsc()
        try:
            self.lu = spla.splu(Kii)
        except RuntimeError as exc:  # pragma: no cover - absorption prevents this
            raise RuntimeError(f"singular interior factorization: {exc}") from exc

    def solve(self, boundary_values=None, load=None):
        """Solve with Dirichlet data per tag and an optional load vector.

        ``boundary_values`` maps edge tags to nodal arrays matching
        ``mesh.edge_dofs(tag)``; later tags override shared corner nodes.
        Returns the full nodal coefficient vector.
        """
        mesh = self.form.mesh
        u = np.zeros(mesh.ndofs, dtype=complex)
        if boundary_values:
            for tag, vals in boundary_values.items():
                dofs = mesh.edge_dofs(tag)
                vals = np.asarray(vals, dtype=complex)
                if vals.shape != dofs.shape:
                    raise ValueError(
                        f"edge {tag}: expected {dofs.shape[0]} values, got {vals.shape}"
                    )
                u[dofs] = vals
        rhs = -self.Kib @ u[self.bdofs]
        if load is not None:
            rhs = rhs + load[self.interior]
        u[self.interior] = self.lu.solve(rhs)
        return u

    def solve_many(self, boundary_blocks, load_block=None):
        """Batched variant: Dirichlet data given as (ndofs, m) column block."""
        rhs = -self.Kib @ boundary_blocks[self.bdofs]
        if load_block is not None:
            rhs = rhs + load_block[self.interior]
        out = boundary_blocks.astype(complex, copy=True)
        out[self.interior] = self.lu.solve(np.ascontiguousarray(rhs))
        return out


def assemble(mesh: StructuredMesh2D, a_fn, rho_fn, omega, k=0.0, w=(0.0, 0.0)) -> AssembledForm:
    """Assemble the Floquet-shifted anisotropic Helmholtz form.

    ``a_fn(x, z) -> (a11, a12, a22)`` and ``rho_fn(x, z) -> rho`` are sampled
    at the 3-point Gauss nodes of every triangle.
    """
    if np.imag(omega) <= 0:
        raise ValueError("assemble requires Im(omega) > 0")
    tc = mesh.tri_coords  # (ntri, 3, 2)
    v0, v1, v2 = tc[:, 0], tc[:, 1], tc[:, 2]
    J = np.stack([v1 - v0, v2 - v0], axis=-1)  # (ntri, 2, 2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    area = 0.5 * np.abs(detJ)
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1]
    invJT[:, 0, 1] = -J[:, 1, 0]
    invJT[:, 1, 0] = -J[:, 0, 1]
    invJT[:, 1, 1] = J[:, 0, 0]
    invJT /= detJ[:, None, None]
    gref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # d lambda / d ref
    grads = np.einsum("tad,nd->tna", invJT, gref)  # (ntri, 3, 2)

    qpts = np.einsum("qn,tnd->tqd", np.column_stack([1 - _QP.sum(1), _QP[:, 0], _QP[:, 1]]), tc)
    xq, zq = qpts[..., 0], qpts[..., 1]
    a11, a12, a22 = a_fn(xq, zq)
    rho = rho_fn(xq, zq)
    for arr in (a11, a12, a22, rho):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite coefficient sample")
    shape = np.array([1 - _QP.sum(1), _QP[:, 0], _QP[:, 1]]).T  # (q, n)

    ikw = 1j * k * np.asarray(w, dtype=float)
    # d_n(q) = grad phi_n + i k w phi_n(q), per element and quad point
    d = grads[:, None, :, :].astype(complex) + ikw[None, None, None, :] * shape[None, :, :, None]
    aq = np.empty(xq.shape + (2, 2))
    aq[..., 0, 0] = a11
    aq[..., 0, 1] = a12
    aq[..., 1, 0] = a12
    aq[..., 1, 1] = a22
    Ad = np.einsum("tqab,tqnb->tqna", aq, d)
    stiff = np.einsum("q,tqna,tqma->tnm", _QW, Ad, d.conj())
    massq = np.einsum("q,tq,qn,qm->tnm", _QW, rho, shape, shape)
    elem = (stiff - omega**2 * massq) * area[:, None, None]
    # K[i, j] = a(phi_j, phi_i): the antilinear (conjugated) slot indexes rows
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    vals = np.transpose(elem, (0, 2, 1)).ravel()
    K = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.ndofs, mesh.ndofs)).tocsr()
    return AssembledForm(mesh=mesh, K=K, omega=omega, k=k, w=tuple(w))


def load_vector(mesh: StructuredMesh2D, f_fn) -> np.ndarray:
    """Weak load b_i = int f conj(phi_i) by the same 3-point rule."""
    tc = mesh.tri_coords
    v0, v1, v2 = tc[:, 0], tc[:, 1], tc[:, 2]
    J = np.stack([v1 - v0, v2 - v0], axis=-1)
    area = 0.5 * np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
    shape = np.array([1 - _QP.sum(1), _QP[:, 0], _QP[:, 1]]).T
    qpts = np.einsum("qn,tnd->tqd", shape, tc)
    fq = np.asarray(f_fn(qpts[..., 0], qpts[..., 1]), dtype=complex)
    contrib = np.einsum("q,tq,qn->tn", _QW, fq, shape) * area[:, None]
    b = np.zeros(mesh.ndofs, dtype=complex)
    np.add.at(b, mesh.triangles.ravel(), contrib.ravel())
    return b


def solve_dirichlet(form: AssembledForm, boundary_values, load=None) -> np.ndarray:
    """One-shot Dirichlet solve; see ``_DirichletSolver.solve``."""
    solver = form.factorize(tuple(boundary_values.keys()))
    return solver.solve(boundary_values, load=load)


def weak_flux(form: AssembledForm, solution, edge_tag, load=None) -> np.ndarray:
    """Weak conormal flux <A grad u . n, phi_i> on an edge, via the residual."""
    r = form.K @ solution
    if load is not None:
        r = r - load
    return r[form.mesh.edge_dofs(edge_tag)]


def edge_mass(mesh: StructuredMesh2D, edge_tag: str) -> sp.csr_matrix:
    """1D P1 mass matrix on a tagged edge (circulant when the axis is periodic)."""
    dofs = mesh.edge_dofs(edge_tag)
    n = dofs.size
    step = mesh.edge_step(edge_tag)
    along_z = edge_tag in ("X0", "X1")
    periodic = mesh.periodic_z if along_z else mesh.periodic_x
    nseg = n if periodic else n - 1
    i0 = np.arange(nseg)
    i1 = (i0 + 1) % n
    rows = np.concatenate([i0, i0, i1, i1])
    cols = np.concatenate([i0, i1, i0, i1])
    vals = np.concatenate(
        [np.full(nseg, step / 3), np.full(nseg, step / 6), np.full(nseg, step / 6), np.full(nseg, step / 3)]
    )
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def interp(mesh: StructuredMesh2D, u, xs, zs) -> np.ndarray:
    """P1 interpolation at points; periodic axes fold, others must be inside."""
    xs = np.asarray(xs, dtype=float)
    zs = np.asarray(zs, dtype=float)
    x = np.mod(xs, mesh.Lx) if mesh.periodic_x else xs
    z = np.mod(zs, mesh.Lz) if mesh.periodic_z else zs
    eps = 1e-12 * max(mesh.Lx, mesh.Lz)
    if not mesh.periodic_x and np.any((x < -eps) | (x > mesh.Lx + eps)):
        raise ValueError("interpolation point outside mesh rectangle (x)")
    if not mesh.periodic_z and np.any((z < -eps) | (z > mesh.Lz + eps)):
        raise ValueError("interpolation point outside mesh rectangle (z)")
    ix = np.clip(np.floor(x / mesh.hx).astype(int), 0, mesh.nx - 1)
    iz = np.clip(np.floor(z / mesh.hz).astype(int), 0, mesh.nz - 1)
    xi = x / mesh.hx - ix
    eta = z / mesh.hz - iz
    d00 = mesh.dof_of_node[mesh.node_index(ix, iz)]
    d10 = mesh.dof_of_node[mesh.node_index(ix + 1, iz)]
    d01 = mesh.dof_of_node[mesh.node_index(ix, iz + 1)]
    d11 = mesh.dof_of_node[mesh.node_index(ix + 1, iz + 1)]
    u = np.asarray(u)
    lower = xi >= eta  # lower triangle (n00, n10, n11), barycentric in (xi, eta)
    vals = np.where(
        lower,
        u[d00] * (1 - xi) + u[d10] * (xi - eta) + u[d11] * eta,
        u[d00] * (1 - eta) + u[d11] * xi + u[d01] * (eta - xi),
    )
    return vals
