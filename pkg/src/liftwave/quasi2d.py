"""Quasi-2D decomposition of the degenerate 3D local cell problems.

A cell problem on (0,1)^3 (periodic in z1, z2, Dirichlet on the x-faces) is
solved as a family of independent 2D problems on the slice rectangle
``Q = (0,1) x (0, 1/theta1)``: slice ``s`` sees the coefficients
``A_s(x) = A_p(C x + s e_2)``.  Face functions on the x-faces are stored as
slice stacks ``Phi[m, i]`` (slice index times edge node); the irrational
coupling ``s -> s + vartheta`` between the top of one slice and the bottom of
another is realized by the unitary band-limited shift on the slice index.

Slice Dirichlet data lives on all four edges of Q.  Corner nodes belong to
the x-edges; the z-edges carry interior nodes only, which makes every face
degree of freedom appear exactly once.  Weak fluxes at the z1-cut are glued
by folding top-edge residual rows back with the adjoint shift; requiring the
glued flux to vanish at interior cut nodes is the dense system that defines
the Dirichlet-to-Dirichlet operators R^j.  The face-level Dirichlet-to-
Neumann blocks follow as T^{jl} = Ytilde^{jl} + Xtilde^l R^j, all stored in
the weak convention with the 1/theta1 duality factor and 1/N_s slice
quadrature weight folded in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import fem2d
from .media import AugmentedSide

DTD_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SliceGrid:
    """Equispaced slice parameters s_m = m/n_s and their Fourier shift."""

    n_s: int
    vartheta: float

    @property
    def s_values(self) -> np.ndarray:
        return np.arange(self.n_s) / self.n_s

    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_s, d=1.0 / self.n_s)

    def shift_matrix(self, alpha: float | None = None) -> np.ndarray:
        """Dense unitary matrix mapping f(s_m) to f(s_m + alpha).

        Exact on trigonometric polynomials of degree < n_s/2; defaults to the
        slice coupling shift alpha = vartheta.
        """
        if alpha is None:
            alpha = self.vartheta
        ell = self.frequencies()
        W = np.exp(2j * np.pi * np.outer(self.s_values, ell))
        return (W * np.exp(2j * np.pi * ell * alpha)) @ W.conj().T / self.n_s

    def interp_weights(self, s_star) -> np.ndarray:
        """Rows of trigonometric interpolation weights at arbitrary s values."""
        s_star = np.atleast_1d(np.asarray(s_star, dtype=float))
        ell = self.frequencies()
        W = np.exp(2j * np.pi * np.outer(s_star, ell))
        return W @ np.exp(-2j * np.pi * np.outer(ell, self.s_values)) / self.n_s


def make_slice_mesh(theta1: float, h: float) -> fem2d.StructuredMesh2D:
    """Mesh of the slice cell Q = (0,1) x (0, 1/theta1) with step <= h."""
    L = 1.0 / abs(theta1)
    nx = max(2, round(1.0 / h))
    nz = max(2, round(L / h))
    return fem2d.build_mesh(1.0, L, nx, nz)


@dataclass
class AuxCellBank:
    """Factorized slice problems plus their Dirichlet unit responses.

    ``resp_z[m]`` holds the fields driven by unit data at interior z-edge
    nodes (first the bottom edge, then the top), ``resp_x[m]`` the fields
    driven by unit data at x-edge nodes (face 0 block, then face 1);
    ``flux_z`` / ``flux_x`` are the corresponding ``K @ response`` blocks from
    which all edge fluxes are read.  For s-independent media a single slice
    is stored and shared.
    """

    mesh: fem2d.StructuredMesh2D
    grid: SliceGrid
    theta1: float
    omega: complex
    k: float
    slice_independent: bool
    resp_z: list
    resp_x: list
    flux_z: list
    flux_x: list

    @property
    def n_edge_x(self) -> int:  # nodes per x-edge, endpoints included
        return self.mesh.nz + 1

    @property
    def n_edge_z(self) -> int:  # interior nodes per z-edge
        return self.mesh.nx - 1

    def per_slice(self, lst, m):
        return lst[0] if self.slice_independent else lst[m]


def solve_aux_bank(
    side: AugmentedSide,
    omega: complex,
    k: float,
    mesh: fem2d.StructuredMesh2D,
    grid: SliceGrid,
) -> AuxCellBank:
    """Solve every slice's Dirichlet unit-response problems."""
    theta1 = side.cut.theta1
    w = (0.0, theta1)
    independent = side.slice_independent
    s_list = [0.0] if independent else list(grid.s_values)

    nzp = mesh.nz + 1
    nxi = mesh.nx - 1
    x0, x1 = mesh.edge_dofs("X0"), mesh.edge_dofs("X1")
    z0i, z1i = mesh.edge_dofs("Z0")[1:-1], mesh.edge_dofs("Z1")[1:-1]

    bz = np.zeros((mesh.ndofs, 2 * nxi), dtype=complex)
    bz[z0i, np.arange(nxi)] = 1.0
    bz[z1i, nxi + np.arange(nxi)] = 1.0
    bx = np.zeros((mesh.ndofs, 2 * nzp), dtype=complex)
    bx[x0, np.arange(nzp)] = 1.0
    bx[x1, nzp + np.arange(nzp)] = 1.0

    resp_z, resp_x, flux_z, flux_x = [], [], [], []
    for m, s in enumerate(s_list):
        def a_fn(x, z, s=s):
            a11, a12, a22, _ = side.eval_sliced(s, x, z)
            return a11, a12, a22

        def rho_fn(x, z, s=s):
            return side.eval_sliced(s, x, z)[3]

        try:
            form = fem2d.assemble(mesh, a_fn, rho_fn, omega, k=k, w=w)
            solver = form.factorize(fem2d.EDGE_TAGS)
            rz = solver.solve_many(bz)
            rx = solver.solve_many(bx)
        except Exception as exc:
            raise RuntimeError(f"slice {m} (s={s}): {exc}") from exc
        resp_z.append(rz)
        resp_x.append(rx)
        flux_z.append(form.K @ rz)
        flux_x.append(form.K @ rx)
    return AuxCellBank(
        mesh=mesh,
        grid=grid,
        theta1=theta1,
        omega=omega,
        k=k,
        slice_independent=independent,
        resp_z=resp_z,
        resp_x=resp_x,
        flux_z=flux_z,
        flux_x=flux_x,
    )


def edge_dtn_slices(bank: AuxCellBank) -> dict:
    """Per-slice edge flux matrices, keyed by (output edge, input family).

    ``t[l][j]`` maps z-edge data (interior nodes) on edge j to weak fluxes on
    z-edge l; ``t_x[l][j]`` to fluxes on x-edge l.  ``u_z`` / ``u_x`` are the
    analogues for x-edge (face) data.  Lists have one entry per slice (or a
    single shared entry when the bank is s-independent).
    """
    mesh = bank.mesh
    nxi, nzp = bank.n_edge_z, bank.n_edge_x
    rows = {
        "Z0": mesh.edge_dofs("Z0")[1:-1],
        "Z1": mesh.edge_dofs("Z1")[1:-1],
        "X0": mesh.edge_dofs("X0"),
        "X1": mesh.edge_dofs("X1"),
    }
    out = {"t": {}, "t_x": {}, "u_z": {}, "u_x": {}}
    for l, tag in enumerate(("Z0", "Z1")):
        out["t"][l] = {j: [fz[rows[tag]][:, j * nxi:(j + 1) * nxi] for fz in bank.flux_z] for j in (0, 1)}
        out["u_z"][l] = {j: [fx[rows[tag]][:, j * nzp:(j + 1) * nzp] for fx in bank.flux_x] for j in (0, 1)}
    for l, tag in enumerate(("X0", "X1")):
        out["t_x"][l] = {j: [fz[rows[tag]][:, j * nxi:(j + 1) * nxi] for fz in bank.flux_z] for j in (0, 1)}
        out["u_x"][l] = {j: [fx[rows[tag]][:, j * nzp:(j + 1) * nzp] for fx in bank.flux_x] for j in (0, 1)}
    return out


def _blockdiag(mats, n_s: int) -> np.ndarray:
    """Dense block diagonal from per-slice matrices (shared matrix tiles)."""
    if len(mats) == 1:
        return np.kron(np.eye(n_s), mats[0])
    return sla.block_diag(*mats)


@dataclass
class AuxDtNSet:
    """Stack-level operators of the cut (DtD) system and the face fluxes."""

    grid: SliceGrid
    theta1: float
    n_edge_x: int  # per-slice x-edge nodes (incl. endpoints)
    n_face: int  # owned face dofs: n_s * (n_edge_x - 1)
    expand: np.ndarray  # owned stack -> per-slice full x-edge data
    shift_gamma: np.ndarray  # S (x) I on cut stacks
    xi_sum: np.ndarray  # glued flux operator of the cut system
    upsilon_sum: dict  # j -> right-hand-side operator (cut duals from face data)
    xtilde: dict  # l -> face-flux operator from cut data
    ytilde: dict  # (j, l) -> face-flux operator from face data
    face_mass: np.ndarray


def assemble_face_dtn(bank: AuxCellBank) -> AuxDtNSet:
    """Assemble the dense stack operators from the per-slice edge matrices."""
    grid, mesh = bank.grid, bank.mesh
    n_s = grid.n_s
    nzp, nxi = bank.n_edge_x, bank.n_edge_z
    nz = nzp - 1
    c = 1.0 / (abs(bank.theta1) * n_s)
    S = grid.shift_matrix()
    SH = S.conj().T

    ed = edge_dtn_slices(bank)
    TZ = {l: {j: _blockdiag(ed["t"][l][j], n_s) for j in (0, 1)} for l in (0, 1)}
    TX = {l: {j: _blockdiag(ed["t_x"][l][j], n_s) for j in (0, 1)} for l in (0, 1)}
    UZ = {l: {j: _blockdiag(ed["u_z"][l][j], n_s) for j in (0, 1)} for l in (0, 1)}
    UX = {l: {j: _blockdiag(ed["u_x"][l][j], n_s) for j in (0, 1)} for l in (0, 1)}

    SG = np.kron(S, np.eye(nxi))
    SGH = SG.conj().T

    # owned face dof (m, i<nz) -> full per-slice x-edge data (m, i<=nz);
    # the top node of slice m is the shifted bottom node value.
    E = np.zeros((n_s * nzp, n_s * nz), dtype=complex)
    for m in range(n_s):
        E[m * nzp:m * nzp + nz, m * nz:(m + 1) * nz] = np.eye(nz)
        E[m * nzp + nz, 0::nz] = S[m]
    EH = E.conj().T

    xi_sum = c * (TZ[0][0] + TZ[0][1] @ SG + SGH @ (TZ[1][0] + TZ[1][1] @ SG))
    upsilon_sum = {j: c * ((UZ[0][j] + SGH @ UZ[1][j]) @ E) for j in (0, 1)}
    xtilde = {l: c * (EH @ (TX[l][0] + TX[l][1] @ SG)) for l in (0, 1)}
    ytilde = {(j, l): c * (EH @ UX[l][j] @ E) for j in (0, 1) for l in (0, 1)}

    Medge = fem2d.edge_mass(mesh, "X0").toarray()
    face_mass = c * (EH @ np.kron(np.eye(n_s), Medge) @ E)
    return AuxDtNSet(
        grid=grid,
        theta1=bank.theta1,
        n_edge_x=nzp,
        n_face=n_s * nz,
        expand=E,
        shift_gamma=SG,
        xi_sum=xi_sum,
        upsilon_sum=upsilon_sum,
        xtilde=xtilde,
        ytilde=ytilde,
        face_mass=face_mass,
    )


def solve_dtd(aux: AuxDtNSet) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet-to-Dirichlet operators from the glued-flux system."""
    lu, piv = sla.lu_factor(aux.xi_sum)
    out = []
    for j in (0, 1):
        rhs = -aux.upsilon_sum[j]
        R = sla.lu_solve((lu, piv), rhs)
        res = np.linalg.norm(aux.xi_sum @ R + aux.upsilon_sum[j])
        scale = np.linalg.norm(aux.upsilon_sum[j])
        if scale > 0 and res / scale > DTD_RESIDUAL_TOL:
            smin = np.linalg.svd(aux.xi_sum, compute_uv=False)[-1]
            raise RuntimeError(
                f"cut system solve failed: relative residual {res / scale:.3e}, "
                f"smallest singular value {smin:.3e} "
                "(insufficient absorption or resolution)"
            )
        out.append(R)
    return out[0], out[1]


@dataclass
class LocalDtNSet:
    """Weak-convention face DtN blocks of one periodicity cell, plus the cut maps."""

    T: dict  # (j, l) -> dense matrix on owned face stacks
    R0: np.ndarray
    R1: np.ndarray
    face_mass: np.ndarray
    aux: AuxDtNSet

    @property
    def n(self) -> int:
        return self.T[(0, 0)].shape[0]


def local_dtn(aux: AuxDtNSet, R0: np.ndarray, R1: np.ndarray) -> LocalDtNSet:
    """T^{jl} = Ytilde^{jl} + Xtilde^l R^j."""
    R = {0: R0, 1: R1}
    T = {(j, l): aux.ytilde[(j, l)] + aux.xtilde[l] @ R[j] for j in (0, 1) for l in (0, 1)}
    return LocalDtNSet(T=T, R0=R0, R1=R1, face_mass=aux.face_mass, aux=aux)


def dump_local_dtn(T: LocalDtNSet, directory) -> None:
    """Debug dump of the four face DtN blocks as CSV files."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (j, l), block in T.T.items():
        np.savetxt(directory / f"T{j}{l}_re.csv", block.real, delimiter=",")
        np.savetxt(directory / f"T{j}{l}_im.csv", block.imag, delimiter=",")


def reconstruct_E(bank: AuxCellBank, aux: AuxDtNSet, R0, R1, phi: np.ndarray):
    """Per-slice nodal fields of the two cell solutions driven by ``phi``.

    Returns (E0, E1), each shaped (n_s, ndofs); E0 carries trace ``phi`` on
    face 0 and zero on face 1, E1 the reverse.
    """
    n_s = bank.grid.n_s
    nzp, nxi = bank.n_edge_x, bank.n_edge_z
    full = (aux.expand @ phi).reshape(n_s, nzp)
    out = []
    for j, R in ((0, R0), (1, R1)):
        cut = R @ phi
        cut_top = (aux.shift_gamma @ cut).reshape(n_s, nxi)
        cut = cut.reshape(n_s, nxi)
        fields = np.empty((n_s, bank.mesh.ndofs), dtype=complex)
        for m in range(n_s):
            rx = bank.per_slice(bank.resp_x, m)
            rz = bank.per_slice(bank.resp_z, m)
            xdata = full[m] if j == 0 else np.zeros(nzp, dtype=complex)
            xdata1 = full[m] if j == 1 else np.zeros(nzp, dtype=complex)
            fields[m] = (
                rx[:, :nzp] @ xdata
                + rx[:, nzp:] @ xdata1
                + rz[:, :nxi] @ cut[m]
                + rz[:, nxi:] @ cut_top[m]
            )
        out.append(fields)
    return out[0], out[1]


def cell_operators(side: AugmentedSide, omega, k, mesh, grid) -> tuple[AuxCellBank, LocalDtNSet]:
    """Bank, cut solve, and face DtN blocks for one half-guide cell."""
    bank = solve_aux_bank(side, omega, k, mesh, grid)
    aux = assemble_face_dtn(bank)
    R0, R1 = solve_dtd(aux)
    return bank, local_dtn(aux, R0, R1)


# -- fully periodic 2D sanity problem ---------------------------------------
#
# The 2D analogue of the cell solver: a doubly periodic cell problem for the
# rank-one operator -D (mu D .) - rho omega^2 with D = theta . grad, solved
# both directly (2D FEM on the torus) and by 1D slice problems coupled
# through an auxiliary boundary unknown.  Serves as a built-in self-test of
# the slice/shift/glue machinery one dimension down.


@dataclass
class Quasi1DResult:
    slice_points: np.ndarray  # z-nodes of the 1D slice meshes
    s_values: np.ndarray
    direct: np.ndarray  # (n_s, n1d+1) direct solution sampled on slices
    fibered: np.ndarray  # (n_s, n1d+1) slice-assembled solution
    rel_gap: float


def _assemble_1d(zq, wq, znodes, mu, rho, omega):
    """Tridiagonal P1 matrix of int mu u' v' - rho omega^2 u v on the nodes."""
    n = znodes.size - 1
    hseg = np.diff(znodes)
    muq = mu(zq)  # (n, q)
    rhoq = rho(zq)
    K = np.zeros((n + 1, n + 1), dtype=complex)
    stiff = (muq @ wq) / hseg  # int mu / h^2 * h
    idx = np.arange(n)
    np.add.at(K, (idx, idx), stiff)
    np.add.at(K, (idx + 1, idx + 1), stiff)
    np.add.at(K, (idx, idx + 1), -stiff)
    np.add.at(K, (idx + 1, idx), -stiff)
    lam0 = 1.0 - (zq - znodes[:-1, None]) / hseg[:, None]
    lam1 = 1.0 - lam0
    m00 = ((rhoq * lam0 * lam0) @ wq) * hseg
    m11 = ((rhoq * lam1 * lam1) @ wq) * hseg
    m01 = ((rhoq * lam0 * lam1) @ wq) * hseg
    np.add.at(K, (idx, idx), -omega**2 * m00)
    np.add.at(K, (idx + 1, idx + 1), -omega**2 * m11)
    np.add.at(K, (idx, idx + 1), -omega**2 * m01)
    np.add.at(K, (idx + 1, idx), -omega**2 * m01)
    return K


def quasi1d_demo(mu, rho, f, theta, omega, n, n_s=None) -> Quasi1DResult:
    """Solve the doubly periodic degenerate 2D problem two ways and compare.

    ``mu, rho, f`` are Z^2-periodic callables of (z1, z2); ``theta`` the
    direction (theta1, theta2) of the rank-one operator; ``n`` the number of
    mesh subdivisions per unit length.
    """
    theta1, theta2 = theta
    vartheta = theta2 / theta1
    if n_s is None:
        n_s = n
    grid = SliceGrid(n_s, vartheta)
    L = 1.0 / abs(theta1)

    mesh = fem2d.build_mesh(1.0, 1.0, n, n, periodic_x=True, periodic_z=True)

    def a_fn(z1, z2):
        m = mu(z1, z2)
        return theta1 * theta1 * m, theta1 * theta2 * m, theta2 * theta2 * m

    form = fem2d.assemble(mesh, a_fn, rho, omega)
    b = fem2d.load_vector(mesh, f)
    direct = form.factorize(()).solve(load=b)

    n1d = max(2, round(L * n))
    znodes = np.linspace(0.0, L, n1d + 1)
    gauss = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    wq = np.array([0.5, 0.5])
    zq = znodes[:-1, None] + np.diff(znodes)[:, None] * gauss[None, :]

    nslice = grid.n_s
    svals = grid.s_values
    f0 = np.empty((nslice, n1d + 1), dtype=complex)
    f1 = np.empty_like(f0)
    g = np.empty_like(f0)
    flux = np.empty((nslice, 2, 3), dtype=complex)  # endpoint x {f0, f1, g}
    for m, s in enumerate(svals):
        mus = lambda z, s=s: mu(theta1 * z, theta2 * z + s)
        rhos = lambda z, s=s: rho(theta1 * z, theta2 * z + s)
        fs = lambda z, s=s: f(theta1 * z, theta2 * z + s)
        K = _assemble_1d(zq, wq, znodes, mus, rhos, omega)
        hseg = np.diff(znodes)
        fq = fs(zq)
        lam0 = 1.0 - (zq - znodes[:-1, None]) / hseg[:, None]
        bvec = np.zeros(n1d + 1, dtype=complex)
        np.add.at(bvec, np.arange(n1d), ((fq * lam0) @ wq) * hseg)
        np.add.at(bvec, np.arange(1, n1d + 1), ((fq * (1 - lam0)) @ wq) * hseg)

        interior = slice(1, n1d)
        Kii = K[interior, interior]
        for col, (u0, u1, src) in enumerate(((1, 0, None), (0, 1, None), (0, 0, bvec))):
            u = np.zeros(n1d + 1, dtype=complex)
            u[0], u[-1] = u0, u1
            rhs = -(K[interior, 0] * u[0] + K[interior, -1] * u[-1])
            if src is not None:
                rhs = rhs + src[interior]
            u[interior] = np.linalg.solve(Kii, rhs)
            target = (f0, f1, g)[col]
            target[m] = u
            resid = K @ u - (src if src is not None else 0.0)
            flux[m, 0, col] = resid[0]
            flux[m, 1, col] = resid[-1]

    S = grid.shift_matrix()
    SH = S.conj().T
    xi = (
        np.diag(flux[:, 0, 0])
        + np.diag(flux[:, 0, 1]) @ S
        + SH @ (np.diag(flux[:, 1, 0]) + np.diag(flux[:, 1, 1]) @ S)
    )
    rhs = -(flux[:, 0, 2] + SH @ flux[:, 1, 2])
    phi = np.linalg.solve(xi, rhs)
    fibered = phi[:, None] * f0 + (S @ phi)[:, None] * f1 + g

    zz1 = theta1 * znodes
    direct_slices = np.empty_like(fibered)
    for m, s in enumerate(svals):
        direct_slices[m] = fem2d.interp(mesh, direct, zz1, theta2 * znodes + s)

    denom = np.linalg.norm(direct_slices)
    gap = np.linalg.norm(direct_slices - fibered) / (denom if denom > 0 else 1.0)
    return Quasi1DResult(
        slice_points=znodes, s_values=svals, direct=direct_slices, fibered=fibered, rel_gap=gap
    )
