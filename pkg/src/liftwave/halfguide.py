"""Propagation operator, half-guide DtN operators, and cell-by-cell fields.

The trace-transfer operator P of a half-guide satisfies the constrained
quadratic equation

    T10 P^2 + (T00 + T11) P + T01 = 0,        spectral radius(P) < 1,

whose admissible solution is unique under absorption.  Two backends are
provided: a spectral method through the generalized linearization

    A - lambda B,   A = [[0, I], [-T01, -(T00+T11)]],  B = [[I, 0], [0, T10]],

which never inverts the (possibly ill-conditioned) block T10, and a damped
Newton iteration with a radial eigenvalue projection.  The half-guide DtN
follows as Lambda = T10 P + T00.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .quasi2d import AuxCellBank, AuxDtNSet, LocalDtNSet, reconstruct_E

RICCATI_TOL = 1e-10
UNIT_CIRCLE_GUARD = 1e-8
NEWTON_PROJECTION_EPS = 1e-3
NEWTON_MAX_ITER = 50


class RiccatiError(RuntimeError):
    pass


@dataclass
class PropagationOperator:
    """Trace-transfer operator of one half-guide at one Floquet point."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    residual: float
    backend: str

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.eigenvalues.size else 0.0


def _residual(T: LocalDtNSet | dict, P: np.ndarray) -> float:
    T = T.T if isinstance(T, LocalDtNSet) else T
    F = T[(1, 0)] @ P @ P + (T[(0, 0)] + T[(1, 1)]) @ P + T[(0, 1)]
    scale = np.linalg.norm(T[(0, 1)])
    return float(np.linalg.norm(F) / (scale if scale > 0 else 1.0))


def riccati_spectral(T: LocalDtNSet | dict) -> PropagationOperator:
    """Solve through the quadratic-pencil eigenvalue problem."""
    Td = T.T if isinstance(T, LocalDtNSet) else T
    n = Td[(0, 0)].shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    A = np.block([[zero, eye], [-Td[(0, 1)], -(Td[(0, 0)] + Td[(1, 1)])]])
    B = np.block([[eye, zero], [zero, Td[(1, 0)]]])
    lam, vec = sla.eig(A, B)

    finite = np.isfinite(lam)
    mod = np.where(finite, np.abs(lam), np.inf)
    ring = (mod >= 1.0 - UNIT_CIRCLE_GUARD) & (mod <= 1.0 + UNIT_CIRCLE_GUARD)
    if np.any(ring):
        raise RiccatiError(
            "eigenvalues on the unit circle (insufficient absorption): "
            f"moduli {np.sort(mod[ring])[:8]}"
        )
    inside = np.sum(mod < 1.0 - UNIT_CIRCLE_GUARD)
    if inside < n:
        near = np.sort(np.abs(mod - 1.0))[:8]
        raise RiccatiError(
            f"only {inside} of the required {n} eigenvalues lie inside the unit "
            f"circle; distances to it: {near}"
        )
    order = np.argsort(mod)[:n]
    lam_in = lam[order]
    X = vec[:n, order]
    condX = np.linalg.cond(X)
    if not np.isfinite(condX) or condX > 1e12:
        raise RiccatiError(f"eigenvector basis ill-conditioned (cond {condX:.3e})")
    P = X @ (lam_in[:, None] * np.linalg.inv(X))
    res = _residual(T, P)
    if res > RICCATI_TOL:
        raise RiccatiError(f"spectral Riccati residual {res:.3e} exceeds {RICCATI_TOL}")
    return PropagationOperator(matrix=P, eigenvalues=lam_in, residual=res, backend="spectral")


def riccati_newton(
    T: LocalDtNSet | dict,
    P_init: np.ndarray | None = None,
    tol: float = RICCATI_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> PropagationOperator:
    """Newton iteration with radial projection of escaping eigenvalues.

    Each step solves the linearization  (T10 P + T00 + T11) D + T10 D P = -F(P)
    columnwise in the eigenbasis of the current iterate.
    """
    Td = T.T if isinstance(T, LocalDtNSet) else T
    n = Td[(0, 0)].shape[0]
    P = np.zeros((n, n), dtype=complex) if P_init is None else np.array(P_init, dtype=complex)
    history = []
    for _ in range(max_iter):
        F = Td[(1, 0)] @ P @ P + (Td[(0, 0)] + Td[(1, 1)]) @ P + Td[(0, 1)]
        scale = np.linalg.norm(Td[(0, 1)])
        res = np.linalg.norm(F) / (scale if scale > 0 else 1.0)
        history.append(res)
        if res <= tol:
            lam = np.linalg.eigvals(P)
            if lam.size and np.abs(lam).max() >= 1.0:
                raise RiccatiError(
                    f"Newton converged to an inadmissible solution (rho = {np.abs(lam).max():.6f})"
                )
            return PropagationOperator(matrix=P, eigenvalues=lam, residual=res, backend="newton")
        M1 = Td[(1, 0)] @ P + Td[(0, 0)] + Td[(1, 1)]
        D = _solve_sylvester_like(M1, Td[(1, 0)], P, -F)
        P = P + D
        lam, X = np.linalg.eig(P)
        mod = np.abs(lam)
        if np.any(mod >= 1.0 - NEWTON_PROJECTION_EPS):
            lam = np.where(
                mod >= 1.0 - NEWTON_PROJECTION_EPS,
                lam * (1.0 - NEWTON_PROJECTION_EPS) / np.maximum(mod, 1e-300),
                lam,
            )
            P = X @ (lam[:, None] * np.linalg.inv(X))
    raise RiccatiError(f"Newton did not converge; residual history {history[-6:]}")


def _solve_sylvester_like(M1, M2, P, C):
    """Solve M1 D + M2 D P = C (columnwise in the eigenbasis of P)."""
    n = P.shape[0]
    if n == 0:
        return np.zeros_like(C)
    lam, X = np.linalg.eig(P)
    if np.isfinite(np.linalg.cond(X)) and np.linalg.cond(X) < 1e10:
        Ct = C @ X
        Dt = np.empty_like(Ct)
        for i in range(n):
            Dt[:, i] = np.linalg.solve(M1 + lam[i] * M2, Ct[:, i])
        return Dt @ np.linalg.inv(X)
    # defective iterate: vectorized Kronecker fallback (small systems only)
    if n > 80:
        raise RiccatiError("defective Newton iterate on a large system")
    big = np.kron(np.eye(n), M1) + np.kron(P.T, M2)
    return np.linalg.solve(big, C.reshape(-1, order="F")).reshape((n, n), order="F")


def eigenvalue_diagnostic(path, k: float, P: PropagationOperator) -> None:
    """Append rows (k, |lambda_i|) for spectrum inspection."""
    mod = np.sort(np.abs(P.eigenvalues))[::-1]
    with open(path, "a") as fh:
        for m in mod:
            fh.write(f"{k:.17g},{m:.17g}\n")


def halfguide_dtn(T: LocalDtNSet | dict, P: PropagationOperator | np.ndarray) -> np.ndarray:
    """Half-guide DtN matrix Lambda = T10 P + T00 (weak convention)."""
    Td = T.T if isinstance(T, LocalDtNSet) else T
    Pm = P.matrix if isinstance(P, PropagationOperator) else P
    return Td[(1, 0)] @ Pm + Td[(0, 0)]


def propagate(P: PropagationOperator | np.ndarray, phi: np.ndarray, n: int) -> np.ndarray:
    """Trace on the n-th periodicity interface: P^n phi."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    Pm = P.matrix if isinstance(P, PropagationOperator) else P
    out = np.asarray(phi, dtype=complex)
    for _ in range(n):
        out = Pm @ out
    return out


def decay_slope(P: PropagationOperator | np.ndarray, phi: np.ndarray, n_max: int = 8):
    """Least-squares slope of log ||P^n phi|| over n = 0..n_max."""
    norms = []
    cur = np.asarray(phi, dtype=complex)
    Pm = P.matrix if isinstance(P, PropagationOperator) else P
    for _ in range(n_max + 1):
        norms.append(np.linalg.norm(cur))
        cur = Pm @ cur
    norms = np.array(norms)
    if np.any(norms <= 0):
        return -np.inf
    ns = np.arange(n_max + 1)
    slope = np.polyfit(ns, np.log(norms), 1)[0]
    return float(slope)


def halfguide_field(
    bank: AuxCellBank,
    aux: AuxDtNSet,
    R0: np.ndarray,
    R1: np.ndarray,
    P: PropagationOperator | np.ndarray,
    phi: np.ndarray,
    n_cells: int,
):
    """Per-cell slice fields U|_{cell n} = E0[P^n phi] + E1[P^{n+1} phi]."""
    if n_cells < 1:
        raise ValueError("n_cells must be at least 1")
    Pm = P.matrix if isinstance(P, PropagationOperator) else P
    fields = []
    cur = np.asarray(phi, dtype=complex)
    for _ in range(n_cells):
        nxt = Pm @ cur
        fields.append(cell_field(bank, aux, R0, R1, cur, nxt))
        cur = nxt
    return fields


def cell_field(bank: AuxCellBank, aux: AuxDtNSet, R0, R1, phi0, phi1) -> np.ndarray:
    """One cell's slice field with traces phi0 on face 0 and phi1 on face 1."""
    n_s = bank.grid.n_s
    nzp, nxi = bank.n_edge_x, bank.n_edge_z
    full0 = (aux.expand @ phi0).reshape(n_s, nzp)
    full1 = (aux.expand @ phi1).reshape(n_s, nzp)
    cut = R0 @ phi0 + R1 @ phi1
    cut_top = (aux.shift_gamma @ cut).reshape(n_s, nxi)
    cut = cut.reshape(n_s, nxi)
    field = np.empty((n_s, bank.mesh.ndofs), dtype=complex)
    for m in range(n_s):
        rx = bank.per_slice(bank.resp_x, m)
        rz = bank.per_slice(bank.resp_z, m)
        field[m] = (
            rx[:, :nzp] @ full0[m]
            + rx[:, nzp:] @ full1[m]
            + rz[:, :nxi] @ cut[m]
            + rz[:, nxi:] @ cut_top[m]
        )
    return field
