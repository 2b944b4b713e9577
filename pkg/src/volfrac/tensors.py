"""Exact 3x3 / 9x9 tensor algebra for the translation method.

3x3 matrices are identified with 9-vectors in column-major order,
(1,1)->1, (2,1)->2, (3,1)->3, (1,2)->4, (2,2)->5, (3,2)->6, (1,3)->7,
(2,3)->8, (3,3)->9 (1-based), and fourth-order tensors with 9x9 matrices
acting on those vectors.  A second, "permuted" ordering groups the three
diagonal slots first and then the conjugate off-diagonal pairs
(21,12), (31,13), (32,23); in that ordering the translated conductivity
tensor is block diagonal (one 3x3 block and three 2x2 blocks).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularTranslationError

__all__ = [
    "Tensor4",
    "PhaseAverage",
    "LimitTensorResult",
    "mat_to_vec",
    "vec_to_mat",
    "translation_T",
    "translation_T_tensor",
    "projections",
    "translation_Tprime",
    "translation_Tprime_tensor",
    "projection_tensors",
    "assemble_Lc",
    "assemble_Lc_prime",
    "permute_basis",
    "two_phase_inverse_average",
    "limit_tensor",
    "rotate_tensor4",
]

# Standard vector-basis slot for each permuted slot: diagonal triple first,
# then the pairs (2,1),(1,2) / (3,1),(1,3) / (3,2),(2,3).
PERMUTED_FROM_STANDARD = np.array([0, 4, 8, 1, 3, 2, 6, 5, 7])
STANDARD_FROM_PERMUTED = np.argsort(PERMUTED_FROM_STANDARD)


def _vec_index(i, j):
    """Column-major slot of entry (i, j), all indices 0-based."""
    return i + 3 * j


def mat_to_vec(P):
    """Flatten a 3x3 matrix to its 9-vector (column-major convention)."""
    return np.asarray(P, dtype=float).reshape(9, order="F").copy()


def vec_to_mat(v):
    """Inverse of :func:`mat_to_vec`."""
    return np.asarray(v, dtype=float).reshape((3, 3), order="F").copy()


@dataclass
class Tensor4:
    """Symmetric fourth-order tensor stored as a 9x9 matrix.

    ``basis_tag`` records whether rows/columns follow the standard
    column-major ordering or the permuted block ordering.
    """

    entries: np.ndarray
    basis_tag: str = "standard"

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.shape != (9, 9):
            raise ValueError("Tensor4 entries must be 9x9")
        if self.basis_tag not in ("standard", "permuted"):
            raise ValueError(f"unknown basis_tag {self.basis_tag!r}")

    def apply(self, P):
        """Contract against a 3x3 matrix, returning a 3x3 matrix."""
        if self.basis_tag != "standard":
            return self.to_standard().apply(P)
        return vec_to_mat(self.entries @ mat_to_vec(P))

    def to_permuted(self):
        if self.basis_tag == "permuted":
            return self
        return permute_basis(self, "to_permuted")

    def to_standard(self):
        if self.basis_tag == "standard":
            return self
        return permute_basis(self, "to_standard")

    def eigenvalues(self):
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T))

    def to_dict(self):
        return {
            "basis": self.basis_tag,
            "entries": [float(x) for x in self.entries.reshape(81)],
        }


@dataclass
class PhaseAverage:
    """Two-phase mixture data: volume fraction of the high-conductivity
    phase and the two conductivities (sigma1 > sigma2 > 0)."""

    f1: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma1 > self.sigma2 > 0):
            raise ValueError("require sigma1 > sigma2 > 0")
        if not (0.0 <= self.f1 <= 1.0):
            raise ValueError("require 0 <= f1 <= 1")

    @property
    def f2(self):
        return 1.0 - self.f1


def translation_T(P):
    """Null-Lagrangian translation acting on a 3x3 matrix: Tr(P) I - P^T."""
    P = np.asarray(P, dtype=float)
    return np.trace(P) * np.eye(3) - P.T


def translation_T_tensor():
    """9x9 matrix of the null-Lagrangian translation,
    T_ijkl = d_ij d_kl - d_il d_jk."""
    T = np.zeros((9, 9))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    val = float(i == j) * float(k == l) - float(i == l) * float(j == k)
                    T[_vec_index(i, j), _vec_index(k, l)] = val
    return Tensor4(T, "standard")


def projections(P):
    """Split a 3x3 matrix into hydrostatic, symmetric-trace-free and
    antisymmetric parts (they sum back to P)."""
    P = np.asarray(P, dtype=float)
    hyd = np.trace(P) / 3.0 * np.eye(3)
    sym = 0.5 * (P + P.T) - hyd
    skew = 0.5 * (P - P.T)
    return hyd, sym, skew


def translation_Tprime(P):
    """Quasiconvex translation acting on a 3x3 matrix: P + P^T - Tr(P) I."""
    P = np.asarray(P, dtype=float)
    return P + P.T - np.trace(P) * np.eye(3)


def projection_tensors():
    """9x9 matrices of the hydrostatic / symmetric-trace-free /
    antisymmetric projections."""
    Lh = np.zeros((9, 9))
    Ls = np.zeros((9, 9))
    La = np.zeros((9, 9))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    r, c = _vec_index(i, j), _vec_index(k, l)
                    d = lambda a, b: float(a == b)
                    Lh[r, c] = d(i, j) * d(k, l) / 3.0
                    sym = 0.5 * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
                    Ls[r, c] = sym - Lh[r, c]
                    La[r, c] = 0.5 * (d(i, k) * d(j, l) - d(i, l) * d(j, k))
    return Lh, Ls, La


_LH, _LS, _LA = None, None, None


def _cached_projections():
    global _LH, _LS, _LA
    if _LH is None:
        _LH, _LS, _LA = projection_tensors()
    return _LH, _LS, _LA


def translation_Tprime_tensor():
    """9x9 matrix of the quasiconvex translation, 2*Ls - Lh."""
    Lh, Ls, _ = _cached_projections()
    return Tensor4(2.0 * Ls - Lh, "standard")


def assemble_Lc(sigma, c):
    """Translated conductivity tensor sigma*I + c*T in the standard basis."""
    return Tensor4(
        sigma * np.eye(9) + c * translation_T_tensor().entries, "standard"
    )


def assemble_Lc_prime(sigma, c, require_positive_definite=False):
    """Translated resistivity tensor 1/sigma*I - c*T', i.e.
    (1/sigma + c) Lh + (1/sigma - 2c) Ls + (1/sigma) La.

    With ``require_positive_definite`` the assembly rejects c outside the
    positivity window c < 1/(2*sigma).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if require_positive_definite and not (c < 1.0 / (2.0 * sigma)):
        raise SingularTranslationError(
            f"c={c} leaves 1/sigma - 2c <= 0; require c < 1/(2*sigma)"
        )
    Lh, Ls, La = _cached_projections()
    inv = 1.0 / sigma
    return Tensor4((inv + c) * Lh + (inv - 2.0 * c) * Ls + inv * La, "standard")


def permute_basis(T, direction):
    """Conjugate a Tensor4 by the standard <-> permuted slot permutation.

    ``direction`` is "to_permuted" or "to_standard"; the tensor's
    basis_tag must match the source ordering.  Eigenvalues are invariant
    (the permutation is orthogonal).
    """
    if direction == "to_permuted":
        if T.basis_tag != "standard":
            raise ValueError("tensor is not in the standard basis")
        order = PERMUTED_FROM_STANDARD
        out_tag = "permuted"
    elif direction == "to_standard":
        if T.basis_tag != "permuted":
            raise ValueError("tensor is not in the permuted basis")
        order = STANDARD_FROM_PERMUTED
        out_tag = "standard"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return Tensor4(T.entries[np.ix_(order, order)], out_tag)


def two_phase_inverse_average(pa, c):
    """Inverse of the volume-fraction-weighted average of the two phases'
    inverse translated tensors, (f1 Lc(s1)^-1 + f2 Lc(s2)^-1)^-1.

    Requires c < sigma2 so both phase tensors are invertible; at c ->
    sigma2 the average blows up and the inverse tends to the singular
    limit handled by :func:`limit_tensor`.
    """
    if c >= pa.sigma2:
        raise SingularTranslationError(
            f"c={c} >= sigma2={pa.sigma2}: the phase-2 tensor is singular; "
            "use limit_tensor for the c -> sigma2 limit"
        )
    # Lc eigenvalues are sigma+2c, sigma-c, sigma+c; guard all of them.
    for sigma in (pa.sigma1, pa.sigma2):
        if min(abs(sigma + 2 * c), abs(sigma - c), abs(sigma + c)) < 1e-14 * sigma:
            raise SingularTranslationError(f"Lc({sigma}, {c}) is singular")
    avg = pa.f1 * np.linalg.inv(assemble_Lc(pa.sigma1, c).entries)
    avg += pa.f2 * np.linalg.inv(assemble_Lc(pa.sigma2, c).entries)
    return Tensor4(np.linalg.inv(avg), "standard")


def _limit_closed_form_entries(pa):
    """Permuted-basis closed form of the c -> sigma2 limit as printed:
    a on the full leading 3x3 block, b [[1,-1],[-1,1]] on each 2x2 block,
    with a = (f2/s2 + 3 f1/(2 s2 + s1))^-1 and b = s2/f1."""
    a = 1.0 / (pa.f2 / pa.sigma2 + 3.0 * pa.f1 / (2.0 * pa.sigma2 + pa.sigma1))
    b = pa.sigma2 / pa.f1
    M = np.zeros((9, 9))
    M[:3, :3] = a
    for blk in range(3):
        s = 3 + 2 * blk
        M[s : s + 2, s : s + 2] = b * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return M, a, b


@dataclass
class LimitTensorResult:
    """Numeric c -> sigma2 limit of the two-phase inverse average, with the
    printed closed form kept alongside for comparison (they disagree on the
    2x2 blocks; the numeric limit is what downstream bounds consume)."""

    numeric: Tensor4
    closed_form: Tensor4 | None
    a_closed: float
    b_closed: float | None
    richardson_spread: float
    discrepancy: float
    f1_degenerate: bool = False
    extrapolation_c: list = field(default_factory=list)

    def to_dict(self):
        return {
            "numeric": self.numeric.to_dict(),
            "closed_form": None if self.closed_form is None else self.closed_form.to_dict(),
            "a_closed": self.a_closed,
            "b_closed": self.b_closed,
            "richardson_spread": self.richardson_spread,
            "closed_form_discrepancy": self.discrepancy,
            "f1_degenerate": self.f1_degenerate,
        }


def limit_tensor(pa, k_range=(4, 5, 6, 7, 8)):
    """c -> sigma2 limit of :func:`two_phase_inverse_average`.

    Evaluates the average at c = sigma2 - s_k and removes the leading
    O(s) error with pairwise Richardson steps (entries of the inverted
    average converge linearly in s because the blow-up is a simple pole).
    The step sizes are scaled by f2: near f1 = 1 the limit is reached
    only for s well below f2 * sigma2, so a fixed schedule would
    extrapolate the wrong branch.

    Returns a :class:`LimitTensorResult` carrying the numeric limit, the
    printed closed form, and the max-entry discrepancy between the two.
    """
    if pa.f1 == 0.0:
        # Degenerate: the closed form's 2x2 coefficient diverges, but the
        # actual limit is plain Lc(sigma2) at c = sigma2.
        numeric = assemble_Lc(pa.sigma2, pa.sigma2)
        a = pa.sigma2
        return LimitTensorResult(
            numeric=numeric,
            closed_form=None,
            a_closed=a,
            b_closed=None,
            richardson_spread=0.0,
            discrepancy=float("nan"),
            f1_degenerate=True,
        )

    scale = pa.sigma2 * (pa.f2 if pa.f2 > 0.0 else 1.0)
    svals = [scale * 10.0 ** (-k) for k in k_range]
    cvals = [pa.sigma2 - s for s in svals]
    samples = [two_phase_inverse_average(pa, c).entries for c in cvals]
    extrap = []
    for idx in range(len(samples) - 1):
        ratio = svals[idx] / svals[idx + 1]
        extrap.append(
            (ratio * samples[idx + 1] - samples[idx]) / (ratio - 1.0)
        )
    numeric_entries = extrap[-1]
    norm = max(1.0, np.max(np.abs(numeric_entries)))
    spread = max(
        float(np.max(np.abs(e - numeric_entries))) for e in extrap[:-1]
    ) / norm

    closed_perm, a, b = _limit_closed_form_entries(pa)
    closed = permute_basis(Tensor4(closed_perm, "permuted"), "to_standard")
    disc = float(np.max(np.abs(closed.entries - numeric_entries))) / norm
    return LimitTensorResult(
        numeric=Tensor4(numeric_entries, "standard"),
        closed_form=closed,
        a_closed=a,
        b_closed=b,
        richardson_spread=spread,
        discrepancy=disc,
        extrapolation_c=cvals,
    )


def rotate_tensor4(T, R):
    """Conjugate a standard-basis Tensor4 by an orthogonal 3x3 matrix:
    the 9x9 image of P -> R P R^T acting on both slots."""
    if T.basis_tag != "standard":
        raise ValueError("rotate_tensor4 expects the standard basis")
    K = np.kron(R, R)  # vec(R P R^T) = kron(R, R) vec(P), column-major vec
    return Tensor4(K.T @ T.entries @ K, "standard")
