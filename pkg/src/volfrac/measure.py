"""Measurable objects built from solved potentials: response matrices,
normalization and diagonalization transforms, the boundary fourth-order
tensor, and attainability residuals.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MeasurementDegeneracyError
from .grid import FACES, face_sign
from .solver import (
    _Tpfa,
    boundary_mean_E,
    face_trace_integrals,
    gradient_pair_integrals,
)
from .tensors import Tensor4, rotate_tensor4

__all__ = [
    "ResponseMatrixResult",
    "BoundaryTensorResult",
    "AttainabilityResult",
    "normalize_mean",
    "normalize_mean_flux",
    "boundary_mean_J",
    "compute_A",
    "compute_Aprime",
    "compute_M",
    "diagonalize",
    "attainability_residual",
]


@dataclass
class ResponseMatrixResult:
    """Response matrix with both evaluation routes retained."""

    matrix: np.ndarray  # symmetrized boundary-route value
    boundary: np.ndarray
    volume: np.ndarray
    asymmetry: float
    route_gap: float

    def to_dict(self):
        return {
            "matrix": self.matrix.reshape(9).tolist(),
            "asymmetry": self.asymmetry,
            "route_gap": self.route_gap,
        }


def normalize_mean(V, cond_limit=1e8):
    """Recombine potentials so the boundary-measured mean field is the
    identity.  Returns (K, normalized potentials)."""
    G = boundary_mean_E(V)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise MeasurementDegeneracyError(
            f"mean-field matrix is ill conditioned (cond={cond:.3e}); "
            "the three measurements are not independent"
        )
    K = np.linalg.inv(G)
    return K, V.combined(K)


def boundary_mean_J(V):
    """Mean current from boundary data: <J>_al = (1/|O|) Int x_a (j_l.n)."""
    grid = V.grid
    out = np.zeros((3, 3))
    for axis, side in FACES:
        pts = grid.face_center_points(axis, side)  # (3, n1, n2)
        F = V.flux[(axis, side)]  # (3, n1, n2) outward flux per face cell
        out += np.einsum("axy,lxy->al", pts, F)
    return out / grid.volume


def normalize_mean_flux(V, cond_limit=1e8):
    """Neumann analogue of :func:`normalize_mean`: makes <J> = I."""
    G = boundary_mean_J(V)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise MeasurementDegeneracyError(
            f"mean-current matrix is ill conditioned (cond={cond:.3e})"
        )
    K = np.linalg.inv(G)
    return K, V.combined(K)


def _energy_matrix(V):
    """Face-based discrete energy <E^T sigma E> (equivalently
    <J^T sigma^-1 J>): the exact summation-by-parts partner of the
    boundary route, so the two agree at solver convergence."""
    grid = V.grid
    op = _Tpfa(V.field)
    vals = V.values
    out = np.zeros((3, 3))
    for axis in range(3):
        sl_lo = [slice(None)] * 4
        sl_hi = [slice(None)] * 4
        sl_lo[1 + axis] = slice(None, -1)
        sl_hi[1 + axis] = slice(1, None)
        d = vals[tuple(sl_hi)] - vals[tuple(sl_lo)]  # (3, ...)
        T = op.interior[axis]
        out += np.einsum("ixyz,jxyz,xyz->ij", d, d, T)
    for axis, side in FACES:
        sl = [slice(None)] * 3
        sl[axis] = 0 if side == 0 else -1
        vc = vals[(slice(None),) + tuple(sl)]
        vb = V.boundary[(axis, side)]
        d = vc - vb
        out += np.einsum("ixy,jxy,xy->ij", d, d, op.boundary[(axis, side)])
    return out / grid.volume


def _boundary_pairing(V):
    """B[i, j] = -(1/|O|) sum over boundary faces of V_i * (outward flux of
    measurement j)."""
    out = np.zeros((3, 3))
    for key in V.boundary:
        vb = V.boundary[key]
        F = V.flux[key]
        out -= np.einsum("ixy,jxy->ij", vb, F)
    return out / V.grid.volume


def _response(V, orientation, warn_tol):
    volume = _energy_matrix(V)
    pairing = _boundary_pairing(V)
    boundary = pairing if orientation == "dirichlet" else pairing.T
    scale = max(1.0, float(np.max(np.abs(boundary))))
    asymmetry = float(np.max(np.abs(boundary - boundary.T))) / scale
    if asymmetry > warn_tol:
        warnings.warn(
            f"response matrix asymmetry {asymmetry:.2e} exceeds {warn_tol:.1e}; "
            "discretization quality is suspect",
            stacklevel=3,
        )
    sym = 0.5 * (boundary + boundary.T)
    gap = float(np.max(np.abs(sym - volume))) / scale
    return ResponseMatrixResult(
        matrix=sym,
        boundary=boundary,
        volume=volume,
        asymmetry=asymmetry,
        route_gap=gap,
    )


def compute_A(V, warn_tol=1e-6):
    """Dirichlet response matrix <E^T sigma E>, boundary route
    -(1/|O|) Int V^T (n J), with the volume (energy) route retained."""
    if V.bc_kind != "dirichlet":
        raise ConfigError("compute_A expects Dirichlet-driven potentials")
    return _response(V, "dirichlet", warn_tol)


def compute_Aprime(V, warn_tol=1e-6):
    """Neumann response matrix <J^T sigma^-1 J>, boundary route
    -(1/|O|) Int (n J)^T V."""
    if V.bc_kind != "neumann":
        raise ConfigError("compute_Aprime expects Neumann-driven potentials")
    return _response(V, "neumann", warn_tol)


@dataclass
class BoundaryTensorResult:
    """Fourth-order boundary tensor with structure residuals."""

    tensor: Tensor4  # volume-route value, standard basis
    boundary: Tensor4
    route_gap: float
    zero_residual: float  # entries with i == k or j == l
    antisym_residual: float  # M_ijkl + M_ilkj
    exchange_residual: float  # M_ijkl - M_klij

    def to_dict(self):
        return {
            "tensor": self.tensor.to_dict(),
            "route_gap": self.route_gap,
            "zero_residual": self.zero_residual,
            "antisym_residual": self.antisym_residual,
            "exchange_residual": self.exchange_residual,
        }


def _vec_index(i, j):
    return i + 3 * j


def _tensor_from_components(M):
    T = np.zeros((9, 9))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    T[_vec_index(i, j), _vec_index(k, l)] = M[i, j, k, l]
    return T


def compute_M(U, warn_tol=1e-6):
    """Boundary fourth-order tensor from the harmonic extensions U
    (a vertex-layout PotentialSet solved in laplace mode).

    Volume route: (1/|O|) Int [d_j u_i d_l u_k - d_l u_i d_j u_k];
    boundary route: (1/|O|) Int_boundary u_i [n_j d_l u_k - n_l d_j u_k],
    which uses only tangential derivatives of the traces.  Returns the
    volume-route tensor with the boundary route and structure residuals
    retained.
    """
    if U.layout != "vertex":
        raise ConfigError("compute_M expects vertex-layout (laplace) potentials")
    grid = U.grid
    S = gradient_pair_integrals(grid, U.values, U.values)
    Mvol = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    Mvol[i, j, k, l] = S[j, i, l, k] - S[l, i, j, k]
    Mvol /= grid.volume

    Mbnd = np.zeros((3, 3, 3, 3))
    for axis, side in FACES:
        sgn = face_sign(side)
        Vf = U.boundary[(axis, side)]
        F = face_trace_integrals(grid, Vf, Vf, axis)
        tang = [a for a in range(3) if a != axis]
        for i in range(3):
            for k in range(3):
                for t in range(2):
                    # j = axis, l = tangential
                    Mbnd[i, axis, k, tang[t]] += sgn * F[i, k, t]
                    # l = axis, j = tangential
                    Mbnd[i, tang[t], k, axis] -= sgn * F[i, k, t]
    Mbnd /= grid.volume

    scale = max(1.0, float(np.max(np.abs(Mvol))))
    gap = float(np.max(np.abs(Mvol - Mbnd))) / scale
    if gap > warn_tol:
        warnings.warn(
            f"boundary-tensor route gap {gap:.2e} exceeds {warn_tol:.1e}",
            stacklevel=2,
        )
    zero = 0.0
    anti = 0.0
    exch = 0.0
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    if i == k or j == l:
                        zero = max(zero, abs(Mvol[i, j, k, l]))
                    anti = max(anti, abs(Mvol[i, j, k, l] + Mvol[i, l, k, j]))
                    exch = max(exch, abs(Mvol[i, j, k, l] - Mvol[k, l, i, j]))
    return BoundaryTensorResult(
        tensor=Tensor4(_tensor_from_components(Mvol), "standard"),
        boundary=Tensor4(_tensor_from_components(Mbnd), "standard"),
        route_gap=gap,
        zero_residual=zero / scale,
        antisym_residual=anti / scale,
        exchange_residual=exch / scale,
    )


def diagonalize(A, M=None):
    """Orthogonal transform that diagonalizes the response matrix.

    Eigenvalues come back descending; each eigenvector's largest-magnitude
    entry is made positive so the transform is deterministic.  M, when
    given, is rotated algebraically as a fourth-order tensor (equivalent
    to re-measuring on the rotated body with rotated data).

    Returns (R, lam, A_diag, M_rotated).
    """
    A = np.asarray(A, dtype=float)
    sym_gap = np.max(np.abs(A - A.T))
    if sym_gap > 1e-8 * max(1.0, np.max(np.abs(A))):
        raise ConfigError("diagonalize expects a symmetric response matrix")
    lam, R = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    R = R[:, order]
    for col in range(3):
        k = int(np.argmax(np.abs(R[:, col])))
        if R[k, col] < 0:
            R[:, col] = -R[:, col]
    A_diag = np.diag(lam)
    M_rot = rotate_tensor4(M, R) if M is not None else None
    return R, lam, A_diag, M_rot


@dataclass
class AttainabilityResult:
    """Residuals certifying (near-)attainment of the matrix bound."""

    r1: float  # phase-1 field uniformity
    r2: float  # global constancy of the translated flux
    phase1_empty: bool = False

    def to_dict(self):
        return {"r1": self.r1, "r2": self.r2, "phase1_empty": self.phase1_empty}


def attainability_residual(E, field):
    """r1: max relative deviation of E from its phase-1 mean over phase-1
    cells; r2: max relative deviation of the translated flux
    sigma E + sigma2 (Tr(E) I - E^T) from its global mean."""
    grid = field.grid
    phase1 = field.phase == 1
    sig = field.sigma()

    trE = np.trace(E, axis1=-2, axis2=-1)
    LE = sig[..., None, None] * E + field.sigma2 * (
        trE[..., None, None] * np.eye(3) - np.swapaxes(E, -2, -1)
    )
    mean_LE = LE.mean(axis=(0, 1, 2))
    denom = max(float(np.linalg.norm(mean_LE)), 1e-300)
    r2 = float(
        np.max(np.linalg.norm(LE - mean_LE, axis=(-2, -1))) / denom
    )

    if not phase1.any():
        return AttainabilityResult(r1=float("nan"), r2=r2, phase1_empty=True)
    E1 = E[phase1]
    mean_E1 = E1.mean(axis=0)
    denom1 = max(float(np.linalg.norm(mean_E1)), 1e-300)
    r1 = float(np.max(np.linalg.norm(E1 - mean_E1, axis=(-2, -1))) / denom1)
    return AttainabilityResult(r1=r1, r2=r2)
