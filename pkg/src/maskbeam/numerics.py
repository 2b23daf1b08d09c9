"""Complex Hermitian linear algebra kernels shared by MCLP and beamforming.

Matrices are plain complex ndarrays; Hermitian inputs are expected to be
symmetrized by their producers (see hermitize).  All solves go through a
Cholesky factorization of the regularized matrix, never an explicit inverse.
"""

import numpy as np
import scipy.linalg

from .errors import NumericalFailure

DEFAULT_DELTA = 1e-6
MAX_POWER_ITERATIONS = 200
CONVERGENCE_SINE = 1e-10
# Normalized squarings applied to the whitened operator before the power
# loop; they amplify the spectral gap so the iteration also resolves
# near-degenerate pairs to machine precision.
GAP_AMPLIFY_SQUARINGS = 24


def hermitize(a):
    """Symmetrize: 0.5 * (A + A^H), applied over the last two axes."""
    a = np.asarray(a)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def regularize(a, delta):
    """Diagonal loading scaled to the matrix: A + delta * (trace(A)/dim) * I.

    For a zero-trace matrix the loading falls back to delta * I.  The
    trace-relative form keeps the conditioning fix invariant under global
    input scaling.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    a = np.asarray(a, dtype=np.complex128)
    dim = a.shape[-1]
    eye = np.eye(dim, dtype=np.complex128)
    tr = np.trace(a).real / dim
    if tr == 0.0:
        return a + delta * eye
    return a + delta * tr * eye


def solve_hermitian(a, b, delta=DEFAULT_DELTA, bin_index=None):
    """Solve regularize(A, delta) X = B for Hermitian positive semidefinite A.

    Raises NumericalFailure (naming the frequency bin if given) when the
    regularized matrix is not positive definite.
    """
    r = regularize(a, delta)
    b = np.asarray(b, dtype=np.complex128)
    try:
        factor = scipy.linalg.cho_factor(r, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalFailure(
            f"Hermitian solve failed, matrix not positive definite after "
            f"regularization (delta={delta:g}): {exc}",
            bin_index=bin_index,
        ) from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def _amplified(s):
    """Repeatedly square a normalized Hermitian PSD matrix.

    Squaring raises eigenvalue ratios to the power 2^k, so the dominant
    eigenspace of the result is separated from the rest by (lam2/lam1)^(2^k).
    """
    scale = np.max(np.abs(s))
    if scale == 0.0:
        return s
    p = s / scale
    for _ in range(GAP_AMPLIFY_SQUARINGS):
        p = p @ p
        scale = np.max(np.abs(p))
        if scale == 0.0:
            break
        p = p / scale
    return p


def _dominant_unit_vector(p, max_iter, tol, bin_index):
    """Power iteration on an amplified Hermitian PSD operator.

    The start vector is the largest-norm column of the amplified operator:
    after amplification the operator is numerically low-rank, so its largest
    column already lies in the dominant eigenspace (for exact ties this
    deterministically picks the lowest column index).
    """
    dim = p.shape[0]
    col_norms = np.linalg.norm(p, axis=0)
    best = int(np.argmax(col_norms))
    if col_norms[best] == 0.0:  # zero operator: any direction qualifies
        v = np.zeros(dim, dtype=np.complex128)
        v[0] = 1.0
        return v
    v = p[:, best] / col_norms[best]
    for _ in range(max_iter):
        u = p @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return v
        u = u / nu
        # sine of the angle between iterates, computed as the orthogonal
        # residual (sqrt(1 - cos^2) loses everything below sqrt(eps))
        sine = np.linalg.norm(u - v * np.vdot(v, u))
        v = u
        if sine < tol:
            return v
    raise NumericalFailure(
        f"power iteration did not converge in {max_iter} iterations",
        bin_index=bin_index,
    )


def _phase_normalize(w):
    """Unit Euclidean norm with the first significant component real >= 0."""
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return w
    w = w / nw
    idx = np.flatnonzero(np.abs(w) > 1e-12)
    if idx.size:
        lead = w[idx[0]]
        w = w * (np.conj(lead) / abs(lead))
        w[idx[0]] = w[idx[0]].real + 0.0j
    return w


def max_generalized_eigvec(phi_xx, phi_vv, delta=DEFAULT_DELTA,
                           max_iter=MAX_POWER_ITERATIONS, tol=CONVERGENCE_SINE,
                           bin_index=None):
    """Dominant generalized eigenpair of (phi_xx, phi_vv).

    Returns (w, lam) where w maximizes the Rayleigh quotient
    w^H phi_xx w / w^H phi_vv w.  The noise matrix is regularized and
    Cholesky-whitened; the dominant eigenvector of the whitened operator is
    found by gap-amplified power iteration, then mapped back.  w has unit
    Euclidean norm and a real, non-negative first significant component;
    lam is the Rayleigh quotient of w under the matrices as given.
    """
    a = np.asarray(phi_xx, dtype=np.complex128)
    b = regularize(phi_vv, delta)
    dim = a.shape[0]
    try:
        chol = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            f"noise PSD not positive definite after regularization (delta={delta:g})",
            bin_index=bin_index,
        ) from exc
    # whitened operator S = L^-1 A L^-H, Hermitian PSD when A is
    y = scipy.linalg.solve_triangular(chol, a, lower=True, check_finite=False)
    s = scipy.linalg.solve_triangular(chol, y.conj().T, lower=True, check_finite=False)
    s = hermitize(s.conj().T)
    v = _dominant_unit_vector(_amplified(s), max_iter, tol, bin_index)
    w = scipy.linalg.solve_triangular(chol, v, lower=True, trans="C", check_finite=False)
    w = _phase_normalize(w)
    num = np.vdot(w, a @ w).real
    den = np.vdot(w, np.asarray(phi_vv, dtype=np.complex128) @ w).real
    if den <= 0.0:
        den = np.vdot(w, b @ w).real
        if den <= 0.0:
            raise NumericalFailure(
                "Rayleigh quotient denominator vanished", bin_index=bin_index
            )
    lam = num / den
    if not np.isfinite(lam) or not np.all(np.isfinite(w)):
        raise NumericalFailure(
            "generalized eigenpair is not finite", bin_index=bin_index
        )
    if dim != w.shape[0]:  # pragma: no cover - shape sanity
        raise NumericalFailure("eigenvector dimension mismatch", bin_index=bin_index)
    return w, float(lam)


def dominant_eigvec(a, max_iter=MAX_POWER_ITERATIONS, tol=CONVERGENCE_SINE,
                    bin_index=None):
    """Dominant eigenvector (unit norm, phase-normalized) of a Hermitian PSD matrix."""
    s = hermitize(np.asarray(a, dtype=np.complex128))
    v = _dominant_unit_vector(_amplified(s), max_iter, tol, bin_index)
    return _phase_normalize(v)
