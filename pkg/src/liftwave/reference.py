"""Independent reference solutions used for validation.

Two references, deliberately sharing as little as possible with the lifted
pipeline:

* ``homogeneous_ref`` -- the closed-form solution for piecewise-constant
  media by partial Fourier transform along the interface,

      u(x, z) = (1/2 pi) int  ghat(zeta) / (r+ + r-) e^{-r_pm |x| + i zeta z} dzeta,
      r_pm = sqrt(zeta^2 - rho_pm omega^2),  Re r_pm > 0;

* ``rational_ref`` -- the direct interface-periodic method when both media
  share a period tau along the interface: a Floquet transform in z, one plain
  2D cell problem per half-plane and Floquet point (no lifting, no slices),
  the same propagation-operator reduction, and the trapezoidal inverse
  transform.  It reuses the Riccati machinery but none of the slice code, so
  its agreement with the lifted pipeline is a meaningful cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla

from . import fem2d, halfguide
from .media import Config, ConfigA, ConfigB, JumpData

# the cutoff profile's Fourier tail decays only root-exponentially, so the
# truncation must reach far out for the quadrature to be stable to 1e-8
FOURIER_ZMAX = 800.0
FOURIER_NZETA = 16384


@dataclass(frozen=True)
class FourierRefParams:
    rho_plus: float
    rho_minus: float
    omega: complex
    jump: JumpData
    z_max: float = 0.0  # 0: scaled default
    n_zeta: int = 0

    def resolved(self):
        scale = max(1.0, abs(self.omega))
        zm = self.z_max if self.z_max > 0 else FOURIER_ZMAX * scale
        nz = self.n_zeta if self.n_zeta > 0 else int(FOURIER_NZETA * scale)
        if nz % 2:
            nz += 1
        return zm, nz


def _g_fourier(jump: JumpData, zetas: np.ndarray) -> np.ndarray:
    """ghat(zeta) = int g(z) e^{-i zeta z} dz by a fine uniform rule.

    g vanishes to all orders at the ends of its support, so the uniform rule
    is spectrally accurate.
    """
    n = 801
    z = np.linspace(-jump.support, jump.support, n)
    w = np.full(n, z[1] - z[0])
    w[0] = w[-1] = 0.5 * (z[1] - z[0])
    gz = jump(z)
    return (gz * w) @ np.exp(-1j * np.outer(z, zetas))


def homogeneous_ref(params: FourierRefParams, xs, zs) -> np.ndarray:
    """Reference field on the tensor grid xs x zs for constant media."""
    if np.imag(params.omega) <= 0:
        raise ValueError("Im(omega) > 0 required")
    zm, nz = params.resolved()
    zetas = (np.arange(nz) + 0.5) * (2 * zm / nz) - zm  # midpoint rule
    dz = 2 * zm / nz
    ghat = _g_fourier(params.jump, zetas)
    r_p = np.sqrt(zetas**2 - params.rho_plus * params.omega**2)
    r_m = np.sqrt(zetas**2 - params.rho_minus * params.omega**2)
    if min(r_p.real.min(), r_m.real.min()) <= 0:
        raise AssertionError("decay rates must have positive real part")
    amp = ghat / (r_p + r_m)

    xs = np.asarray(xs, dtype=float)
    zs = np.asarray(zs, dtype=float)
    r_for_x = np.where(xs[:, None] >= 0, r_p[None, :], r_m[None, :])
    decay = np.exp(-r_for_x * np.abs(xs)[:, None])  # (nx, nzeta)
    osc = np.exp(1j * np.outer(zetas, zs))  # (nzeta, nzpts)
    return (decay * amp[None, :]) @ osc * (dz / (2 * np.pi))


def common_interface_period(config: Config, max_den: int = 64) -> float:
    """Common period of both media along the interface; rejects irrational ratios."""
    if isinstance(config, ConfigA):
        ratio = config.p_plus_z / config.p_minus_z
        frac = Fraction(ratio).limit_denominator(max_den)
        if abs(ratio - float(frac)) > 1e-9:
            raise ValueError("interface periods are incommensurate")
        return frac.denominator * config.p_plus_z
    if isinstance(config, ConfigB):
        px, pz = config.p_plus
        frac = Fraction(px).limit_denominator(max_den)
        if abs(px - float(frac)) > 1e-9:
            raise ValueError("skew offset is irrational; medium not interface-periodic")
        return frac.denominator * pz
    raise TypeError(f"not a configuration: {config!r}")


def _physical_side_coeffs(config: Config, side: int):
    """Physical (x, z) coefficient callables for one half-plane, reflected onto x > 0."""

    def a_fn(x, z):
        a11, a12, a22, _ = _eval_side_physical(config, side, -np.asarray(x) if side < 0 else x, z)
        if side < 0:
            a12 = -a12
        return a11, a12, a22

    def rho_fn(x, z):
        return _eval_side_physical(config, side, -np.asarray(x) if side < 0 else x, z)[3]

    return a_fn, rho_fn


def _eval_side_physical(config: Config, side: int, x, z):
    """Physical half-plane coefficients (not the lifted ones)."""
    if isinstance(config, ConfigA):
        if side > 0:
            a = config.a_plus.components(x, z)
            return (*a, config.rho_plus(x, z))
        a = config.a_minus.components(x, z)
        return (*a, config.rho_minus(x, z))
    if side > 0:
        px, pz = config.p_plus
        xc = np.asarray(x, dtype=float) - (px / pz) * np.asarray(z, dtype=float)
        zc = np.asarray(z, dtype=float) / pz
        a = config.a_plus_cell.components(xc, zc)
        return (*a, config.rho_plus_cell.eval_unit(xc, zc))
    shape = np.broadcast(np.asarray(x), np.asarray(z)).shape
    a11, a12, a22 = config.a_minus
    return (
        np.full(shape, a11),
        np.full(shape, a12),
        np.full(shape, a22),
        np.full(shape, config.rho_minus),
    )


def rational_ref(
    config: Config,
    omega: complex,
    jump: JumpData,
    xs,
    zs,
    h: float = 0.05,
    n_k: int = 32,
    tau: float | None = None,
    n_cells: int = 0,
) -> np.ndarray:
    """Direct interface-periodic solve sampled on the grid xs x zs."""
    if np.imag(omega) <= 0:
        raise ValueError("Im(omega) > 0 required")
    if tau is None:
        tau = common_interface_period(config)
    xs = np.asarray(xs, dtype=float)
    zs = np.asarray(zs, dtype=float)
    if n_cells <= 0:
        n_cells = max(2, int(np.ceil(np.abs(xs).max())) + 1)

    nx = max(2, round(1.0 / h))
    nz = max(2, round(tau / h))
    mesh = fem2d.build_mesh(1.0, tau, nx, nz, periodic_z=True)
    edge = mesh.edge_dofs("X0")
    n_edge = edge.size
    x0, x1 = mesh.edge_dofs("X0"), mesh.edge_dofs("X1")
    M = fem2d.edge_mass(mesh, "X0")
    edge_z = mesh.coords[edge, 1]
    w = (0.0, 1.0 / tau)

    ks = -np.pi + 2 * np.pi / n_k * np.arange(n_k)
    dk = 2 * np.pi / n_k

    cells_by_k = []
    for k in ks:
        per_side = {}
        for side in (+1, -1):
            a_fn, rho_fn = _physical_side_coeffs(config, side)
            form = fem2d.assemble(mesh, a_fn, rho_fn, omega, k=float(k), w=w)
            solver = form.factorize(("X0", "X1"))
            blocks = np.zeros((mesh.ndofs, 2 * n_edge), dtype=complex)
            blocks[x0, np.arange(n_edge)] = 1.0
            blocks[x1, n_edge + np.arange(n_edge)] = 1.0
            resp = solver.solve_many(blocks)
            flux = form.K @ resp
            T = {
                (j, l): flux[(x0, x1)[l]][:, j * n_edge:(j + 1) * n_edge]
                for j in (0, 1)
                for l in (0, 1)
            }
            P = halfguide.riccati_spectral(T)
            lam = halfguide.halfguide_dtn(T, P)
            per_side[side] = (resp, T, P, lam)

        ns = np.arange(-int(np.ceil((jump.support + tau) / tau)), int(np.ceil((jump.support + tau) / tau)) + 1)
        gz = jump(edge_z[None, :] + ns[:, None] * tau)
        ghat = (np.exp(-1j * k * ns)[:, None] * gz).sum(axis=0) * np.exp(-1j * k * edge_z / tau)
        rhs = (M @ ghat) / np.sqrt(2 * np.pi)

        A = per_side[+1][3] + per_side[-1][3]
        phi = sla.solve(A, rhs)

        cells = {}
        for side in (+1, -1):
            resp, T, P, _ = per_side[side]
            fields = []
            cur = phi
            for _ in range(n_cells):
                nxt = P.matrix @ cur
                fields.append(resp[:, :n_edge] @ cur + resp[:, n_edge:] @ nxt)
                cur = nxt
            cells[side] = fields
        cells_by_k.append(cells)

    X, Z = np.meshgrid(xs, zs, indexing="ij")
    xf_all = X.ravel()
    zeta = Z.ravel() / tau
    nshift = np.floor(zeta)
    zf = (zeta - nshift) * tau
    out = np.zeros(xf_all.size, dtype=complex)
    plus = xf_all >= 0
    for j, k in enumerate(ks):
        vals = np.zeros_like(out)
        for side in (+1, -1):
            sel = plus if side > 0 else ~plus
            if not np.any(sel):
                continue
            xr = np.abs(xf_all[sel])
            ci = np.minimum(np.floor(xr).astype(int), n_cells - 1)
            xloc = xr - ci
            v = np.zeros(xr.size, dtype=complex)
            for m in np.unique(ci):
                inc = ci == m
                v[inc] = fem2d.interp(mesh, cells_by_k[j][side][m], xloc[inc], zf[sel][inc])
            vals[sel] = v
        out += vals * np.exp(1j * k * (zeta - nshift)) * np.exp(1j * k * nshift)
    out *= dk / np.sqrt(2 * np.pi)
    return out.reshape(X.shape)
