"""Forward solver and field operations on the voxel box.

Two discretizations live here, chosen by solve mode:

* conduction: cell-centered finite volumes with two-point fluxes and
  harmonic-mean face conductivities (the standard scheme for piecewise
  constant coefficients; fluxes are continuous across phase faces).
  Dirichlet values are pinned at boundary-face nodes half a cell from
  the first cell center; Neumann data prescribe the boundary fluxes and
  the potential is gauged to zero mean.
* laplace: vertex-centered 7-point Laplacian with sigma = 1, used for
  the harmonic extensions that the boundary-tensor quadratures consume.

The quadrature helpers treat vertex fields as piecewise trilinear and
integrate with tensor Gauss rules that are exact for those polynomials,
so volume and boundary forms of the null-Lagrangian pairing agree to
roundoff by construction.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverConvergenceError
from .grid import FACES, ConductivityField, DirichletData, NeumannData, face_sign

__all__ = [
    "PotentialSet",
    "PairingResult",
    "solve",
    "extract_fields",
    "boundary_mean_E",
    "null_lagrangian_pairing",
    "gradient_pair_integrals",
    "face_trace_integrals",
]

_GAUSS2 = ((1.0 - 1.0 / np.sqrt(3.0)) / 2.0, (1.0 + 1.0 / np.sqrt(3.0)) / 2.0)


@dataclass
class PotentialSet:
    """Three solved potentials plus the boundary data the measurement
    quadratures need.  Immutable after solve."""

    field: ConductivityField
    layout: str  # "cell" or "vertex"
    mode: str  # "conduction" or "laplace"
    bc_kind: str
    values: np.ndarray  # (3, ...) potential arrays
    boundary: dict  # (axis, side) -> (3, n1, n2) face-node values
    flux: dict  # (axis, side) -> (3, n1, n2) outward flux per face cell
    iterations: tuple
    final_residuals: tuple
    wall_time: float = 0.0

    @property
    def grid(self):
        return self.field.grid

    def combined(self, K):
        """Recombine the three potentials: new_j = sum_i V_i K[i, j]."""
        K = np.asarray(K, dtype=float)
        mix = lambda arr: np.einsum("i...,ij->j...", arr, K)
        return PotentialSet(
            field=self.field,
            layout=self.layout,
            mode=self.mode,
            bc_kind=self.bc_kind,
            values=mix(self.values),
            boundary={k: mix(v) for k, v in self.boundary.items()},
            flux={k: mix(v) for k, v in self.flux.items()},
            iterations=self.iterations,
            final_residuals=self.final_residuals,
            wall_time=self.wall_time,
        )


@dataclass
class PairingResult:
    """Boundary and volume evaluations of the null-Lagrangian pairing."""

    boundary: np.ndarray
    volume: np.ndarray

    @property
    def route_gap(self):
        scale = max(1.0, float(np.max(np.abs(self.volume))))
        return float(np.max(np.abs(self.boundary - self.volume))) / scale


# ---------------------------------------------------------------------------
# cell-centered conduction scheme


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


class _Tpfa:
    """Transmissibilities and sparse operator of the cell-centered scheme."""

    def __init__(self, field):
        self.field = field
        grid = field.grid
        sig = field.sigma()
        self.interior = []
        for axis in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = slice(None, -1)
            sl_hi[axis] = slice(1, None)
            t = _harmonic(sig[tuple(sl_lo)], sig[tuple(sl_hi)])
            t = t * grid.face_area(axis) / grid.spacing[axis]
            self.interior.append(t)
        self.boundary = {}
        for axis, side in FACES:
            sl = [slice(None)] * 3
            sl[axis] = 0 if side == 0 else -1
            sig_c = sig[tuple(sl)]
            t = sig_c * grid.face_area(axis) / (grid.spacing[axis] / 2.0)
            self.boundary[(axis, side)] = t

    def matrix(self, dirichlet):
        grid = self.field.grid
        n = int(np.prod(grid.dims))
        idx = np.arange(n).reshape(grid.dims)
        rows, cols, data = [], [], []
        for axis in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = slice(None, -1)
            sl_hi[axis] = slice(1, None)
            L = idx[tuple(sl_lo)].ravel()
            R = idx[tuple(sl_hi)].ravel()
            T = self.interior[axis].ravel()
            rows += [L, R, L, R]
            cols += [L, R, R, L]
            data += [T, T, -T, -T]
        if dirichlet:
            for axis, side in FACES:
                sl = [slice(None)] * 3
                sl[axis] = 0 if side == 0 else -1
                C = idx[tuple(sl)].ravel()
                T = self.boundary[(axis, side)].ravel()
                rows.append(C)
                cols.append(C)
                data.append(T)
        A = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return A.tocsr()


def _edge_cells(dims, axis, side):
    sl = [slice(None)] * 3
    sl[axis] = 0 if side == 0 else -1
    return tuple(sl)


def _pcg(A, rhs_list, tol, maxiter, preconditioner, shift_singular=False):
    """Conjugate gradients over a shared matrix for several right sides."""
    if preconditioner == "amg":
        import pyamg

        M_mat = A
        if shift_singular:
            shift = 1e-8 * float(A.diagonal().mean())
            M_mat = (A + shift * sp.identity(A.shape[0], format="csr")).tocsr()
        ml = pyamg.smoothed_aggregation_solver(M_mat)
        M = ml.aspreconditioner(cycle="V")
    elif preconditioner == "jacobi":
        dinv = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, matvec=lambda x: dinv * x)
    elif preconditioner == "none":
        M = None
    else:
        raise ConfigError(f"unknown preconditioner {preconditioner!r}")

    solutions, iters, finals = [], [], []
    for b in rhs_list:
        history = []

        def track(xk):
            history.append(float(np.linalg.norm(b - A @ xk)))

        scale = float(np.linalg.norm(b))
        if scale == 0.0:
            solutions.append(np.zeros_like(b))
            iters.append(0)
            finals.append(0.0)
            continue
        x, info = spla.cg(
            A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=track
        )
        resid = float(np.linalg.norm(b - A @ x)) / scale
        if info > 0 or resid > 10.0 * tol:
            raise SolverConvergenceError(
                f"PCG stalled at relative residual {resid:.3e} "
                f"(target {tol:.1e}, {len(history)} iterations)",
                residual_history=[h / scale for h in history],
            )
        solutions.append(x)
        iters.append(len(history))
        finals.append(resid)
    return solutions, iters, finals


def _solve_conduction(field, bc, tol, maxiter, preconditioner):
    grid = field.grid
    dims = grid.dims
    n = int(np.prod(dims))
    op = _Tpfa(field)
    dirichlet = bc.kind == "dirichlet"
    A = op.matrix(dirichlet)

    face_data = {}
    rhs = [np.zeros(n) for _ in range(3)]
    if dirichlet:
        for axis, side in FACES:
            vb = bc.face_values(grid, axis, side)  # (3, n1, n2)
            face_data[(axis, side)] = vb
            T = op.boundary[(axis, side)]
            cells = _edge_cells(dims, axis, side)
            for i in range(3):
                contrib = np.zeros(dims)
                contrib[cells] = T * vb[i]
                rhs[i] += contrib.ravel()
    else:
        area = {axis: grid.face_area(axis) for axis in range(3)}
        total = np.zeros(3)
        total_area = 0.0
        fluxes = {}
        for axis, side in FACES:
            q = bc.face_values(grid, axis, side)  # (3, n1, n2) means of q
            F = -q * area[axis]  # outward flux j.n * face area
            fluxes[(axis, side)] = F
            total += F.sum(axis=(1, 2))
            total_area += area[axis] * F.shape[1] * F.shape[2]
        scale = max(
            float(sum(np.abs(F).sum() for F in fluxes.values())), 1e-30
        )
        if np.max(np.abs(total)) > 1e-6 * scale:
            raise ConfigError(
                f"incompatible Neumann data: net flux {total} vs scale {scale}"
            )
        for key in fluxes:
            axis, _ = key
            fluxes[key] = fluxes[key] - (total / total_area)[:, None, None] * area[axis]
        for (axis, side), F in fluxes.items():
            cells = _edge_cells(dims, axis, side)
            for i in range(3):
                contrib = np.zeros(dims)
                contrib[cells] = F[i]
                rhs[i] -= contrib.ravel()
        face_data = fluxes

    for i in range(3):
        if dirichlet:
            continue
        rhs[i] = rhs[i] - rhs[i].mean()  # project onto range of the operator

    sols, iters, finals = _pcg(
        A, rhs, tol, maxiter, preconditioner, shift_singular=not dirichlet
    )
    values = np.stack([s.reshape(dims) for s in sols])
    if not dirichlet:
        values -= values.mean(axis=(1, 2, 3), keepdims=True)

    boundary = {}
    flux = {}
    for axis, side in FACES:
        cells = _edge_cells(dims, axis, side)
        vc = values[(slice(None),) + cells]
        T = op.boundary[(axis, side)]
        if dirichlet:
            vb = face_data[(axis, side)]
            boundary[(axis, side)] = vb
            flux[(axis, side)] = T[None] * (vc - vb)
        else:
            F = face_data[(axis, side)]
            flux[(axis, side)] = F
            boundary[(axis, side)] = vc - F / T[None]
    return values, boundary, flux, iters, finals


def _solve_laplace(field, bc, tol, maxiter, preconditioner):
    if bc.kind != "dirichlet":
        raise ConfigError("laplace mode requires Dirichlet data")
    grid = field.grid
    nv = tuple(d + 1 for d in grid.dims)
    full = np.zeros((3,) + nv)
    # pin all boundary vertices to the data
    for axis, side in FACES:
        vb = bc.vertex_face_values(grid, axis, side)
        sl = [slice(None)] * 3
        sl[axis] = 0 if side == 0 else -1
        full[(slice(None),) + tuple(sl)] = vb
    interior = tuple(slice(1, -1) for _ in range(3))
    ni = tuple(d - 1 for d in grid.dims)
    n = int(np.prod(ni))
    w = [1.0 / h**2 for h in grid.spacing]
    idx = np.arange(n).reshape(ni)
    rows, cols, data = [], [], []
    diag = 2.0 * sum(w) * np.ones(n)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    data.append(diag)
    for axis in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        L = idx[tuple(sl_lo)].ravel()
        R = idx[tuple(sl_hi)].ravel()
        rows += [L, R]
        cols += [R, L]
        data += [np.full(L.size, -w[axis]), np.full(L.size, -w[axis])]
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    rhs = []
    for i in range(3):
        b = np.zeros(ni)
        v = full[i]
        b[0, :, :] += w[0] * v[0, 1:-1, 1:-1]
        b[-1, :, :] += w[0] * v[-1, 1:-1, 1:-1]
        b[:, 0, :] += w[1] * v[1:-1, 0, 1:-1]
        b[:, -1, :] += w[1] * v[1:-1, -1, 1:-1]
        b[:, :, 0] += w[2] * v[1:-1, 1:-1, 0]
        b[:, :, -1] += w[2] * v[1:-1, 1:-1, -1]
        rhs.append(b.ravel())

    sols, iters, finals = _pcg(A, rhs, tol, maxiter, preconditioner)
    for i in range(3):
        full[i][interior] = sols[i].reshape(ni)

    boundary = {}
    for axis, side in FACES:
        sl = [slice(None)] * 3
        sl[axis] = 0 if side == 0 else -1
        boundary[(axis, side)] = full[(slice(None),) + tuple(sl)].copy()
    return full, boundary, {}, iters, finals


def solve(
    field,
    bc,
    mode="conduction",
    tol=1e-12,
    maxiter=20000,
    preconditioner="amg",
):
    """Solve div(sigma grad V_i) = 0 for the three boundary data components.

    conduction mode uses the cell-centered scheme with the field's sigma;
    laplace mode solves the vertex-centered Laplace problem (sigma = 1)
    used by the boundary-tensor quadratures.  Returns a PotentialSet.
    """
    if not isinstance(bc, (DirichletData, NeumannData)):
        raise ConfigError("bc must be DirichletData or NeumannData")
    t0 = time.perf_counter()
    if mode == "conduction":
        values, boundary, flux, iters, finals = _solve_conduction(
            field, bc, tol, maxiter, preconditioner
        )
        layout = "cell"
    elif mode == "laplace":
        values, boundary, flux, iters, finals = _solve_laplace(
            field, bc, tol, maxiter, preconditioner
        )
        layout = "vertex"
    else:
        raise ConfigError(f"unknown solve mode {mode!r}")
    return PotentialSet(
        field=field,
        layout=layout,
        mode=mode,
        bc_kind=bc.kind,
        values=values,
        boundary=boundary,
        flux=flux,
        iterations=tuple(iters),
        final_residuals=tuple(finals),
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# field extraction


def _cell_face_values(V, i):
    """Reconstructed potential on all faces along each axis, honoring the
    stored boundary values: interior faces take the two-cell mean."""
    grid = V.grid
    vals = V.values[i]
    out = []
    for axis in range(3):
        shape = list(grid.dims)
        shape[axis] += 1
        f = np.empty(shape)
        sl_int = [slice(None)] * 3
        sl_int[axis] = slice(1, -1)
        sl_lo = [slice(None)] * 3
        sl_lo[axis] = slice(None, -1)
        sl_hi = [slice(None)] * 3
        sl_hi[axis] = slice(1, None)
        f[tuple(sl_int)] = 0.5 * (vals[tuple(sl_lo)] + vals[tuple(sl_hi)])
        sl0 = [slice(None)] * 3
        sl0[axis] = 0
        sl1 = [slice(None)] * 3
        sl1[axis] = -1
        f[tuple(sl0)] = V.boundary[(axis, 0)][i]
        f[tuple(sl1)] = V.boundary[(axis, 1)][i]
        out.append(f)
    return out


def extract_fields(V, field=None, method="gradient"):
    """Cell-centered E and J matrices from a PotentialSet.

    E[..., a, i] = -(dV_i/dx_a); J = sigma E cellwise.  ``gradient``
    differences the reconstructed potential across each cell (averaged
    node differences in the interior); ``flux`` divides the two-point
    face fluxes by the cell conductivity, which keeps E clean inside each
    phase when interfaces align with faces.
    """
    field = field or V.field
    grid = field.grid
    E = np.zeros(grid.dims + (3, 3))
    if V.layout == "cell":
        if method == "gradient":
            for i in range(3):
                faces = _cell_face_values(V, i)
                for axis in range(3):
                    f = faces[axis]
                    sl_lo = [slice(None)] * 3
                    sl_lo[axis] = slice(None, -1)
                    sl_hi = [slice(None)] * 3
                    sl_hi[axis] = slice(1, None)
                    E[..., axis, i] = -(
                        f[tuple(sl_hi)] - f[tuple(sl_lo)]
                    ) / grid.spacing[axis]
        elif method == "flux":
            sig = field.sigma()
            op = _Tpfa(field)
            for i in range(3):
                for axis in range(3):
                    shape = list(grid.dims)
                    shape[axis] += 1
                    jn = np.empty(shape)  # flux density along +axis
                    vals = V.values[i]
                    sl_int = [slice(None)] * 3
                    sl_int[axis] = slice(1, -1)
                    sl_lo = [slice(None)] * 3
                    sl_lo[axis] = slice(None, -1)
                    sl_hi = [slice(None)] * 3
                    sl_hi[axis] = slice(1, None)
                    area = grid.face_area(axis)
                    jn[tuple(sl_int)] = (
                        op.interior[axis]
                        * (vals[tuple(sl_lo)] - vals[tuple(sl_hi)])
                        / area
                    )
                    sl0 = [slice(None)] * 3
                    sl0[axis] = 0
                    sl1 = [slice(None)] * 3
                    sl1[axis] = -1
                    # outward flux at side 0 points along -axis
                    jn[tuple(sl0)] = -V.flux[(axis, 0)][i] / area
                    jn[tuple(sl1)] = V.flux[(axis, 1)][i] / area
                    E[..., axis, i] = (
                        0.5 * (jn[tuple(sl_lo)] + jn[tuple(sl_hi)]) / sig
                    )
        else:
            raise ConfigError(f"unknown extraction method {method!r}")
    elif V.layout == "vertex":
        for i in range(3):
            vals = V.values[i]
            for axis in range(3):
                d = np.diff(vals, axis=axis) / grid.spacing[axis]
                for other in range(3):
                    if other == axis:
                        continue
                    sl_lo = [slice(None)] * 3
                    sl_lo[other] = slice(None, -1)
                    sl_hi = [slice(None)] * 3
                    sl_hi[other] = slice(1, None)
                    d = 0.5 * (d[tuple(sl_lo)] + d[tuple(sl_hi)])
                E[..., axis, i] = -d
    else:
        raise ConfigError(f"unknown layout {V.layout!r}")
    sig = field.sigma()
    J = sig[..., None, None] * E
    return E, J


def boundary_mean_E(V):
    """Mean field from the boundary integral <E>_ai = -(1/|O|) Int V_i n_a."""
    grid = V.grid
    out = np.zeros((3, 3))
    for axis, side in FACES:
        vb = V.boundary[(axis, side)]  # (3, n1, n2) or (3, n1+1, n2+1)
        sgn = face_sign(side)
        if V.layout == "cell":
            area = grid.face_area(axis)
            face_int = vb.sum(axis=(1, 2)) * area
        else:
            face_int = _bilinear_face_integral(grid, axis, vb)
        out[axis, :] -= sgn * face_int
    return out / grid.volume


def _bilinear_face_integral(grid, axis, vertex_vals):
    """Exact integral of bilinear face data given its vertex values."""
    area = grid.face_area(axis)
    v = vertex_vals
    cell_mean = 0.25 * (
        v[:, :-1, :-1] + v[:, 1:, :-1] + v[:, :-1, 1:] + v[:, 1:, 1:]
    )
    return cell_mean.sum(axis=(1, 2)) * area


# ---------------------------------------------------------------------------
# trilinear Gauss quadrature over cells and faces


def _axis_mean(arr, axis, t):
    sl_lo = [slice(None)] * arr.ndim
    sl_lo[axis] = slice(None, -1)
    sl_hi = [slice(None)] * arr.ndim
    sl_hi[axis] = slice(1, None)
    return (1.0 - t) * arr[tuple(sl_lo)] + t * arr[tuple(sl_hi)]


def _gauss_cell_gradients(grid, W):
    """Gradients of the trilinear interpolant of vertex field W at the
    2x2x2 Gauss points of every cell.

    Returns grads[axis][(a, b, c)] -> (nx, ny, nz) array; the derivative
    along an axis does not depend on that axis's Gauss coordinate, and the
    returned dict carries that collapsed key (see _gauss_point_gradient).
    """
    h = grid.spacing
    grads = []
    for axis in range(3):
        d = np.diff(W, axis=axis) / h[axis]
        per_point = {}
        others = [a for a in range(3) if a != axis]
        for ta in range(2):
            va = _axis_mean(d, others[0], _GAUSS2[ta])
            for tb in range(2):
                per_point[(ta, tb)] = _axis_mean(va, others[1], _GAUSS2[tb])
        grads.append(per_point)
    return grads


def _gauss_point_gradient(grads, axis, abc):
    others = [a for a in range(3) if a != axis]
    return grads[axis][(abc[others[0]], abc[others[1]])]


def gradient_pair_integrals(grid, W1, W2):
    """S[a, i, b, k] = integral over the box of d_a W1_i * d_b W2_k for
    trilinear interpolants of the two vertex field triples (exact)."""
    g1 = [_gauss_cell_gradients(grid, W1[i]) for i in range(3)]
    g2 = [_gauss_cell_gradients(grid, W2[k]) for k in range(3)]
    S = np.zeros((3, 3, 3, 3))
    w = grid.cell_volume / 8.0
    for abc in np.ndindex(2, 2, 2):
        G1 = np.stack(
            [
                np.stack(
                    [_gauss_point_gradient(g1[i], a, abc) for i in range(3)]
                )
                for a in range(3)
            ]
        )  # (axis, i, nx, ny, nz)
        G2 = np.stack(
            [
                np.stack(
                    [_gauss_point_gradient(g2[k], b, abc) for k in range(3)]
                )
                for b in range(3)
            ]
        )
        S += w * np.einsum("aixyz,bkxyz->aibk", G1, G2)
    return S


def face_trace_integrals(grid, V1face, V2face, axis):
    """F[i, k, t] = integral over one box face of V1_i * d_t V2_k for the
    bilinear traces, t running over the two tangential axes (exact)."""
    tang = [a for a in range(3) if a != axis]
    h1, h2 = grid.spacing[tang[0]], grid.spacing[tang[1]]
    area = grid.face_area(axis)
    F = np.zeros((3, 3, 2))
    d1 = [np.diff(V2face[k], axis=0) / h1 for k in range(3)]
    d2 = [np.diff(V2face[k], axis=1) / h2 for k in range(3)]
    for ta in range(2):
        for tb in range(2):
            w = area / 4.0
            vals1 = [
                _axis_mean(_axis_mean(V1face[i], 0, _GAUSS2[ta]), 1, _GAUSS2[tb])
                for i in range(3)
            ]
            der1 = [_axis_mean(d1[k], 1, _GAUSS2[tb]) for k in range(3)]
            der2 = [_axis_mean(d2[k], 0, _GAUSS2[ta]) for k in range(3)]
            for i in range(3):
                for k in range(3):
                    F[i, k, 0] += w * float(np.sum(vals1[i] * der1[k]))
                    F[i, k, 1] += w * float(np.sum(vals1[i] * der2[k]))
    return F


def null_lagrangian_pairing(V1, V2):
    """Pairing (1/|O|) Int (grad V1)^T T (grad V2), evaluated both as the
    volume integral and as the boundary integral that uses only
    tangential derivatives of V2 on the box faces.

    Both potential sets must be vertex-layout fields on one grid.  The
    two routes agree to roundoff for any vertex data (the integrand is a
    null Lagrangian for the trilinear interpolants); the volume form is
    kept on the result for that agreement check.
    """
    if V1.layout != "vertex" or V2.layout != "vertex":
        raise ConfigError("pairing requires vertex-layout potentials")
    if V1.grid is not V2.grid and V1.grid != V2.grid:
        raise ConfigError("potential sets live on different grids")
    grid = V1.grid
    S = gradient_pair_integrals(grid, V1.values, V2.values)
    vol = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            vol[i, j] = sum(S[j, i, m, m] for m in range(3)) - sum(
                S[a, i, j, a] for a in range(3)
            )
    vol /= grid.volume

    bnd = np.zeros((3, 3))
    for axis, side in FACES:
        sgn = face_sign(side)
        V1f = V1.boundary[(axis, side)]
        V2f = V2.boundary[(axis, side)]
        F = face_trace_integrals(grid, V1f, V2f, axis)
        tang = [a for a in range(3) if a != axis]
        for i in range(3):
            # j == axis: sum of tangential derivatives of the tangential
            # components of V2
            bnd[i, axis] += sgn * sum(F[i, tang[t], t] for t in range(2))
            # j tangential: -d_j V2_axis
            for t in range(2):
                bnd[i, tang[t]] -= sgn * F[i, axis, t]
    bnd /= grid.volume
    return PairingResult(boundary=bnd, volume=vol)
