"""Transmission configurations, their 3D periodic lifts, and interface data.

Two configurations are supported:

* configuration A -- both half-plane media are periodic along the interface,
  with periods ``p_plus_z`` and ``p_minus_z`` that need not be commensurate;
* configuration B -- a homogeneous lower medium against an upper medium that
  is periodic with respect to the skewed lattice ``Z e_x + Z p_plus``.

Either way the pair ``(A, rho)`` is the restriction of a Z^3-periodic triple
``(A_p, rho_p)`` along the hyperplane spanned by the cut matrix ``C`` with
rows ``(1,0), (0,theta1), (0,theta2)``.  This module evaluates the lifted
coefficients, their 2D slices ``A_s(x) = A_p(C x + s e_2)``, and the jump
data families used on the lifted interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

# Lattice folding snaps values this close to an integer onto it, so that
# slice points never jitter across a cell boundary.
_FOLD_GUARD = 1e-12

_VALID_FAMILIES = ("constant", "bump-grid", "bump-radial")


def fold_unit(t):
    """Fractional part in [0, 1) with a snap-to-integer guard."""
    t = np.asarray(t, dtype=float)
    f = t - np.floor(t)
    f = np.where((f < _FOLD_GUARD) | (f > 1.0 - _FOLD_GUARD), 0.0, f)
    return f


def fold_symmetric(t):
    """Fold to the symmetric cell [-1/2, 1/2) with the same guard."""
    f = fold_unit(np.asarray(t, dtype=float) + 0.5) - 0.5
    return f


def bump(t):
    """Smooth cutoff exp(1 - 1/(1 - t^2)) on |t| < 1, zero outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


@dataclass(frozen=True)
class Frequency:
    """Complex angular frequency; absorption Im(omega) > 0 is required."""

    omega: complex

    def __post_init__(self):
        if not np.iscomplexobj(np.asarray(self.omega)) and np.imag(self.omega) == 0:
            raise ValueError("frequency must be complex with Im(omega) > 0")
        if np.imag(self.omega) <= 0:
            raise ValueError(f"Im(omega) must be positive, got {self.omega}")


@dataclass(frozen=True)
class CutMatrix:
    """The 3x2 lifting matrix with rows (1,0), (0,theta1), (0,theta2)."""

    theta1: float
    theta2: float

    def __post_init__(self):
        if self.theta1 == 0.0:
            raise ValueError("theta1 must be nonzero")

    @property
    def vartheta(self) -> float:
        return self.theta2 / self.theta1

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[1.0, 0.0], [0.0, self.theta1], [0.0, self.theta2]])


@dataclass(frozen=True)
class CoefficientField2D:
    """Closed-form scalar coefficient on one half-plane.

    The family is defined on the unit cell in scaled coordinates and folded
    to the symmetric cell, so evaluation is exact on arbitrary slice points
    (a raster-backed family would need interpolation there and is left as an
    extension point):

    * ``constant``     -- ``base`` everywhere;
    * ``bump-grid``    -- ``base + amplitude * phi(scale*x) * phi(scale*z)``;
    * ``bump-radial``  -- ``base + amplitude * phi(scale*|x|)``.

    ``period_z`` is the intrinsic z-period of the physical field (the x-period
    is always 1); a configuration may declare any integer multiple of it as
    its lift period.
    """

    family: str = "constant"
    base: float = 1.0
    amplitude: float = 0.0
    scale: float = 1.0
    period_z: float = 1.0

    def __post_init__(self):
        if self.family not in _VALID_FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}")
        if self.bounds[0] <= 0.0:
            raise ValueError("coefficient must have a positive lower bound")
        if self.period_z <= 0.0:
            raise ValueError("period_z must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        lo = self.base + min(0.0, self.amplitude)
        hi = self.base + max(0.0, self.amplitude)
        return (lo, hi)

    def eval_unit(self, xs, zs):
        """Evaluate on unit-cell coordinates (folded internally)."""
        xs = fold_symmetric(xs)
        zs = fold_symmetric(zs)
        if self.family == "constant":
            return np.broadcast_to(self.base, np.broadcast(xs, zs).shape).copy()
        if self.family == "bump-grid":
            return self.base + self.amplitude * bump(self.scale * xs) * bump(self.scale * zs)
        return self.base + self.amplitude * bump(self.scale * np.hypot(xs, zs))

    def __call__(self, xs, zs):
        """Evaluate the physical field (x-period 1, z-period ``period_z``)."""
        return self.eval_unit(xs, np.asarray(zs, dtype=float) / self.period_z)


def constant_field(value: float) -> CoefficientField2D:
    return CoefficientField2D(family="constant", base=value)


def bump_grid_field(base=0.5, amplitude=1.0, scale=4.0, period_z=1.0) -> CoefficientField2D:
    return CoefficientField2D("bump-grid", base, amplitude, scale, period_z)


def bump_radial_field(base=0.5, amplitude=1.0, scale=2.5, period_z=1.0) -> CoefficientField2D:
    return CoefficientField2D("bump-radial", base, amplitude, scale, period_z)


@dataclass(frozen=True)
class MatrixField2D:
    """Symmetric 2x2 coefficient tensor built from scalar component fields."""

    a11: CoefficientField2D = field(default_factory=lambda: constant_field(1.0))
    a12_amplitude: float = 0.0  # constant off-diagonal entry
    a22: CoefficientField2D = field(default_factory=lambda: constant_field(1.0))

    def components(self, xs, zs):
        v11 = self.a11(xs, zs)
        v22 = self.a22(xs, zs)
        v12 = np.broadcast_to(self.a12_amplitude, v11.shape).astype(float)
        return v11, v12, v22

    @property
    def min_eigenvalue(self) -> float:
        lo11, lo22 = self.a11.bounds[0], self.a22.bounds[0]
        hi12 = abs(self.a12_amplitude)
        tr, det_lo = lo11 + lo22, lo11 * lo22 - hi12 * hi12
        return 0.5 * (tr - math.sqrt(max(tr * tr - 4.0 * det_lo, 0.0)))


def identity_tensor() -> MatrixField2D:
    return MatrixField2D()


@dataclass(frozen=True)
class ConfigA:
    """Media periodic along the interface with (possibly) unrelated periods."""

    rho_plus: CoefficientField2D
    rho_minus: CoefficientField2D
    p_plus_z: float
    p_minus_z: float
    a_plus: MatrixField2D = field(default_factory=identity_tensor)
    a_minus: MatrixField2D = field(default_factory=identity_tensor)

    def __post_init__(self):
        for name, p, fieldz in (
            ("p_plus_z", self.p_plus_z, self.rho_plus),
            ("p_minus_z", self.p_minus_z, self.rho_minus),
        ):
            if p <= 0.0:
                raise ValueError(f"{name} must be positive, got {p}")
            if fieldz.family == "constant":
                continue  # any period is a period of a constant
            ratio = p / fieldz.period_z
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(
                    f"{name}={p} is not an integer multiple of the field period "
                    f"{fieldz.period_z}"
                )
        if self.a_plus.min_eigenvalue <= 0 or self.a_minus.min_eigenvalue <= 0:
            raise ValueError("tensor coefficient must be uniformly positive definite")


@dataclass(frozen=True)
class ConfigB:
    """Homogeneous lower medium against a skew-lattice periodic upper one.

    The upper fields are given through their unit-cell families evaluated in
    the lattice basis {e_x, p_plus}; the physical field is
    ``rho(x, z) = rho_cell(x - (px/pz) z, z/pz)``.
    """

    rho_plus_cell: CoefficientField2D
    rho_minus: float
    p_plus: tuple[float, float]
    a_plus_cell: MatrixField2D = field(default_factory=identity_tensor)
    a_minus: tuple[float, float, float] = (1.0, 0.0, 1.0)  # (a11, a12, a22)

    def __post_init__(self):
        if self.p_plus[1] == 0.0:
            raise ValueError("p_plus must have a nonzero z-component")
        if self.rho_minus <= 0.0:
            raise ValueError("rho_minus must be positive")
        a11, a12, a22 = self.a_minus
        if a11 <= 0 or a11 * a22 - a12 * a12 <= 0:
            raise ValueError("a_minus must be symmetric positive definite")


Config = ConfigA | ConfigB


def build_cut_matrix(config: Config) -> CutMatrix:
    """Configuration-specific lifting angles (theta1, theta2)."""
    if isinstance(config, ConfigA):
        return CutMatrix(1.0 / config.p_plus_z, 1.0 / config.p_minus_z)
    if isinstance(config, ConfigB):
        px, pz = config.p_plus
        return CutMatrix(1.0 / pz, -px / pz)
    raise TypeError(f"not a configuration: {config!r}")


def eval_augmented(config: Config, x, z1, z2):
    """Lifted coefficients at 3D points; returns (a11, a12, a22, rho).

    The sign of ``x`` selects the half-space; folding by the unit lattice in
    (z1, z2) happens inside the field families.  Arrays broadcast.
    """
    x, z1, z2 = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(z1, dtype=float), np.asarray(z2, dtype=float)
    )
    plus = x >= 0.0
    out = [np.empty(x.shape) for _ in range(4)]
    for side, mask in ((+1, plus), (-1, ~plus)):
        vals = _eval_side(config, side, x[mask], z1[mask], z2[mask])
        for dst, src in zip(out, vals):
            dst[mask] = src
    return tuple(out)


def _eval_side(config: Config, side: int, x, z1, z2):
    """One half-space's lifted coefficients (no sign dispatch)."""
    if isinstance(config, ConfigA):
        if side > 0:
            zphys = config.p_plus_z * np.asarray(z1, dtype=float)
            a = config.a_plus
            rho = config.rho_plus
        else:
            zphys = config.p_minus_z * np.asarray(z2, dtype=float)
            a = config.a_minus
            rho = config.rho_minus
        a11, a12, a22 = a.components(x, zphys)
        return a11, a12, a22, rho(x, zphys)
    if side > 0:
        # upper B medium: A_p(x, z1, z2) = A_cell(x + z2, z1)
        xc = np.asarray(x, dtype=float) + np.asarray(z2, dtype=float)
        a11, a12, a22 = config.a_plus_cell.components(xc, z1)
        rho = config.rho_plus_cell.eval_unit(xc, z1)
        return a11, a12, a22, rho
    shape = np.broadcast(x, z1, z2).shape
    a11, a12, a22 = config.a_minus
    return (
        np.full(shape, a11),
        np.full(shape, a12),
        np.full(shape, a22),
        np.full(shape, config.rho_minus),
    )


def eval_sliced(config: Config, s, x, z):
    """Slice coefficients A_s(x, z) = A_p(C (x,z) + s e_2); 1-periodic in s."""
    cut = build_cut_matrix(config)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return eval_augmented(config, x, cut.theta1 * z, cut.theta2 * z + s)


class AugmentedSide:
    """Evaluator for one half-space's lifted coefficients on reference cells.

    The minus half-guide is handled by the reflection x -> -x, which maps its
    cells onto (0,1)x(0,1)^2 and conjugates the tensor by diag(-1, 1); with
    ``reflected=True`` the evaluator serves the minus side through the same
    plus-type code path.
    """

    def __init__(self, config: Config, side: int, reflected: bool = False):
        if side not in (+1, -1):
            raise ValueError("side must be +1 or -1")
        self.config = config
        self.side = side
        self.reflected = reflected
        self.cut = build_cut_matrix(config)

    def eval_lifted(self, x, z1, z2):
        """Coefficients at cell coordinates (x >= 0 in the reflected frame)."""
        x = np.asarray(x, dtype=float)
        if self.reflected:
            a11, a12, a22, rho = _eval_side(self.config, self.side, -x, z1, z2)
            return a11, -a12, a22, rho
        return _eval_side(self.config, self.side, x, z1, z2)

    def eval_sliced(self, s, x, z):
        th = self.cut
        return self.eval_lifted(x, th.theta1 * np.asarray(z) , th.theta2 * np.asarray(z) + s)

    @property
    def slice_independent(self) -> bool:
        """True when the sliced coefficients do not depend on s (no z2 use)."""
        if isinstance(self.config, ConfigA):
            if self.side > 0:
                return True  # plus lift ignores z2
            return self.config.rho_minus.family == "constant" and _tensor_constant(
                self.config.a_minus
            )
        if self.side < 0:
            return True  # homogeneous medium
        return self.config.rho_plus_cell.family == "constant" and _tensor_constant(
            self.config.a_plus_cell
        )


def _tensor_constant(a: MatrixField2D) -> bool:
    return a.a11.family == "constant" and a.a22.family == "constant"


@dataclass(frozen=True)
class JumpData:
    """Compactly supported jump of the conormal derivative across x = 0.

    Default is ``g(z) = 100 * phi(2 z)``, supported in |z| <= 1/2.
    """

    amplitude: float = 100.0
    scale: float = 2.0

    def __call__(self, z):
        return self.amplitude * bump(self.scale * np.asarray(z, dtype=float))

    @property
    def support(self) -> float:
        """Half-width of the support interval."""
        return 1.0 / self.scale


@dataclass(frozen=True)
class AugmentedDataSpec:
    """Lifted interface data G_l(0,z1,z2) = e^{2 pi i l (z2 - vartheta z1)} g(z1/theta1).

    Mode 0 is the default (data constant in the auxiliary direction); every
    mode's slice trace at s = 0 reproduces g, so the reconstructed 2D field
    must not depend on l.
    """

    ell: int = 0

    def evaluate(self, cut: CutMatrix, g: JumpData, z1, z2):
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        phase = np.exp(2j * np.pi * self.ell * (z2 - cut.vartheta * z1))
        return phase * g(z1 / cut.theta1)
