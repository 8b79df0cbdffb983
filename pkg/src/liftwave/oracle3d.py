"""Direct 3D finite-element solver for the degenerate local cell problems.

A small tetrahedral P1 solver on (0,1)^3 (six tetrahedra per cube, periodic
identification in z1 and z2, Dirichlet x-faces) for the form

    int  A ( C^T grad U + i k w U ) . conj( C^T grad V + i k w V )
         - rho omega^2 U conj(V),            w = (0, theta1).

Used exclusively to cross-check the quasi-2D construction of the local DtN
blocks: both discretizations converge to the same face operators, so their
pairings against smooth face modes must approach each other under
refinement.  The production pipeline never calls into this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .media import AugmentedSide
from . import quasi2d

# degree-2 tetrahedral rule
_TA = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_TB = (5.0 - np.sqrt(5.0)) / 20.0
_QP3 = np.array(
    [
        [_TA, _TB, _TB],
        [_TB, _TA, _TB],
        [_TB, _TB, _TA],
        [_TB, _TB, _TB],
    ]
)
_QW3 = np.full(4, 0.25)

# Kuhn split: the six tetrahedra of the unit cube around its main diagonal,
# as offset vertices (each row: 4 corners of one tet).
_KUHN = np.array(
    [
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]],
        [[0, 0, 0], [1, 0, 0], [1, 0, 1], [1, 1, 1]],
        [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 1, 1]],
        [[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1]],
        [[0, 0, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1]],
        [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]],
    ]
)


@dataclass
class StructuredMesh3D:
    """n^3 cube grid split into tetrahedra; z-axes optionally identified."""

    n: int
    periodic_z: bool
    ndofs: int
    dof_of_node: np.ndarray
    coords: np.ndarray
    tets: np.ndarray  # (ntet, 4) dof ids
    tet_coords: np.ndarray  # (ntet, 4, 3)

    def node_index(self, ix, i1, i2):
        np1 = self.n + 1
        return (np.asarray(ix) * np1 + np.asarray(i1)) * np1 + np.asarray(i2)

    def face_dofs(self, face: int) -> np.ndarray:
        """Dofs of the face x = face (0 or 1), ordered as i1 * n + i2."""
        n = self.n
        ix = 0 if face == 0 else n
        top = n if not self.periodic_z else n - 1
        i1, i2 = np.meshgrid(np.arange(top + 1), np.arange(top + 1), indexing="ij")
        return self.dof_of_node[self.node_index(ix, i1, i2)].ravel()

    def face_coords(self, face: int):
        n = self.n
        top = n if not self.periodic_z else n - 1
        i1, i2 = np.meshgrid(np.arange(top + 1), np.arange(top + 1), indexing="ij")
        return i1.ravel() / n, i2.ravel() / n


def build_mesh_3d(n: int, periodic_z: bool = True) -> StructuredMesh3D:
    if n < 2:
        raise ValueError("need n >= 2")
    np1 = n + 1
    gx, g1, g2 = np.meshgrid(np.arange(np1), np.arange(np1), np.arange(np1), indexing="ij")
    if periodic_z:
        o1 = np.where(g1 == n, 0, g1)
        o2 = np.where(g2 == n, 0, g2)
    else:
        o1, o2 = g1, g2
    owner = (gx * np1 + o1) * np1 + o2
    unique, dof = np.unique(owner.ravel(), return_inverse=True)
    mesh = StructuredMesh3D(
        n=n,
        periodic_z=periodic_z,
        ndofs=unique.size,
        dof_of_node=dof,
        coords=None,
        tets=None,
        tet_coords=None,
    )
    ux = unique // (np1 * np1)
    u1 = (unique // np1) % np1
    u2 = unique % np1
    mesh.coords = np.column_stack([ux, u1, u2]) / n

    cx, c1, c2 = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    corners = np.stack([cx.ravel(), c1.ravel(), c2.ravel()], axis=-1)  # (ncube, 3)
    verts = corners[:, None, None, :] + _KUHN[None, :, :, :]  # (ncube, 6, 4, 3)
    verts = verts.reshape(-1, 4, 3)
    nodes = (verts[..., 0] * np1 + verts[..., 1]) * np1 + verts[..., 2]
    mesh.tets = mesh.dof_of_node[nodes]
    mesh.tet_coords = verts / n
    return mesh


def assemble_3d(mesh: StructuredMesh3D, side: AugmentedSide, omega, k=0.0):
    """Sparse matrix of the degenerate lifted form on the cell mesh."""
    th = side.cut
    C_T = np.array([[1.0, 0.0, 0.0], [0.0, th.theta1, th.theta2]])  # 2x3
    w = np.array([0.0, th.theta1])

    tc = mesh.tet_coords
    E = np.stack([tc[:, 1] - tc[:, 0], tc[:, 2] - tc[:, 0], tc[:, 3] - tc[:, 0]], axis=-1)
    detE = np.linalg.det(E)
    vol = np.abs(detE) / 6.0
    invET = np.linalg.inv(np.transpose(E, (0, 2, 1)))  # rows: grad lambda_1..3
    grads = np.empty(tc.shape[:1] + (4, 3))
    grads[:, 1:] = np.transpose(invET, (0, 2, 1))
    grads[:, 0] = -grads[:, 1:].sum(axis=1)

    shape = np.column_stack([1 - _QP3.sum(1), _QP3])  # (q, 4)
    qpts = np.einsum("qn,tnd->tqd", shape, tc)
    a11, a12, a22, rho = side.eval_lifted(qpts[..., 0], qpts[..., 1], qpts[..., 2])
    aq = np.empty(a11.shape + (2, 2))
    aq[..., 0, 0] = a11
    aq[..., 0, 1] = a12
    aq[..., 1, 0] = a12
    aq[..., 1, 1] = a22

    Dg = np.einsum("ad,tnd->tna", C_T, grads)  # (ntet, 4, 2)
    d = Dg[:, None, :, :].astype(complex) + (1j * k) * w[None, None, None, :] * shape[None, :, :, None]
    Ad = np.einsum("tqab,tqnb->tqna", aq, d)
    stiff = np.einsum("q,tqna,tqma->tnm", _QW3, Ad, d.conj())
    massq = np.einsum("q,tq,qn,qm->tnm", _QW3, rho, shape, shape)
    elem = (stiff - omega**2 * massq) * vol[:, None, None]
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    vals = np.transpose(elem, (0, 2, 1)).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(mesh.ndofs, mesh.ndofs)).tocsr()


@dataclass
class CellOracle3D:
    """Factorized 3D cell problem with its face DtN blocks."""

    mesh: StructuredMesh3D
    K: sp.csr_matrix
    T: dict  # (j, l) -> (nface, nface) weak flux blocks
    responses: dict  # j -> (ndofs, nface) unit-data fields


def local_dtn_3d(side: AugmentedSide, omega, k, n) -> CellOracle3D:
    """Solve all unit face-data problems and extract the four DtN blocks."""
    if n > 24:
        raise ValueError("oracle scale is limited to n <= 24")
    if np.imag(omega) <= 0:
        raise ValueError("Im(omega) > 0 required")
    mesh = build_mesh_3d(n, periodic_z=True)
    K = assemble_3d(mesh, side, omega, k)
    f0, f1 = mesh.face_dofs(0), mesh.face_dofs(1)
    bdofs = np.concatenate([f0, f1])
    mask = np.ones(mesh.ndofs, dtype=bool)
    mask[bdofs] = False
    interior = np.where(mask)[0]
    Kii = K[interior][:, interior].tocsc()
    Kib = K[interior][:, bdofs].tocsc()
    try:
        lu = spla.splu(Kii)
    except RuntimeError as exc:
        raise RuntimeError(f"singular 3D factorization: {exc}") from exc

    nface = f0.size
    responses = {}
    for j, face in enumerate((f0, f1)):
        block = np.zeros((mesh.ndofs, nface), dtype=complex)
        block[face, np.arange(nface)] = 1.0
        rhs = -Kib @ block[bdofs]
        block[interior] = lu.solve(np.ascontiguousarray(rhs))
        responses[j] = block
    T = {}
    for j in (0, 1):
        flux = K @ responses[j]
        T[(j, 0)] = flux[f0]
        T[(j, 1)] = flux[f1]
    return CellOracle3D(mesh=mesh, K=K, T=T, responses=responses)


def solve_cell_3d(side: AugmentedSide, omega, k, j, n, face_data):
    """Field and weak face fluxes for Dirichlet data on face j, zero opposite."""
    oracle = local_dtn_3d(side, omega, k, n)
    face_data = np.asarray(face_data, dtype=complex)
    field = oracle.responses[j] @ face_data
    return field, {l: oracle.T[(j, l)] @ face_data for l in (0, 1)}


def face_mode_3d(mesh: StructuredMesh3D, m1: int, m2: int) -> np.ndarray:
    z1, z2 = mesh.face_coords(0)
    return np.exp(2j * np.pi * (m1 * z1 + m2 * z2))


def face_mode_stack(mesh2d, grid: quasi2d.SliceGrid, cut, m1: int, m2: int) -> np.ndarray:
    """The same Fourier face mode in the owned slice-stack representation."""
    z = mesh2d.coords[mesh2d.edge_dofs("X0"), 1][:-1]  # owned edge nodes
    s = grid.s_values
    vals = np.exp(
        2j * np.pi * (m1 * cut.theta1 * z[None, :] + m2 * (cut.theta2 * z[None, :] + s[:, None]))
    )
    return vals.ravel()


def compare_local_dtn(side: AugmentedSide, omega, k, n, max_mode: int = 1) -> dict:
    """Relative gap between quasi-2D and 3D face-mode pairings of T^{jl}.

    Pairings are formed in the physical normalization on both sides, so the
    result is independent of the internal weak-convention scaling.
    """
    cut = side.cut
    oracle = local_dtn_3d(side, omega, k, n)
    mesh2d = quasi2d.make_slice_mesh(cut.theta1, 1.0 / n)
    grid = quasi2d.SliceGrid(n, cut.vartheta)
    _, Tq = quasi2d.cell_operators(side, omega, k, mesh2d, grid)

    modes = [(m1, m2) for m1 in range(-max_mode, max_mode + 1) for m2 in range(-max_mode, max_mode + 1)]
    stacks = [face_mode_stack(mesh2d, grid, cut, m1, m2) for m1, m2 in modes]
    nodals = [face_mode_3d(oracle.mesh, m1, m2) for m1, m2 in modes]

    # both pairing families approximate int_Sigma flux(Phi_a) conj(Phi_b);
    # the theta1^2 factor converts the weak-convention stack pairing to it
    gaps = {}
    scale = cut.theta1**2
    for key in ((0, 0), (0, 1), (1, 0), (1, 1)):
        G2 = scale * np.array([[(Tq.T[key] @ a) @ b.conj() for b in stacks] for a in stacks])
        G3 = np.array([[(oracle.T[key] @ a) @ b.conj() for b in nodals] for a in nodals])
        gaps[key] = float(np.linalg.norm(G2 - G3) / np.linalg.norm(G3))
    return gaps
