"""Dense linear-algebra helpers: guarded Cholesky, PSD repair, sampling roots.

All covariance handling in the package funnels through these helpers so the
jitter policy and failure behavior stay uniform.
"""

import logging

import numpy as np
import scipy.linalg

from .errors import NumericalError

logger = logging.getLogger(__name__)

# jitter escalation: start at JITTER_FRAC*mean(diag), double at most MAX_DOUBLINGS times
JITTER_FRAC = 1e-10
MAX_DOUBLINGS = 10


def chol_with_jitter(mat, return_jitter=False):
    """Lower Cholesky factor of a symmetric matrix, with jitter escalation.

    Attempts a plain factorization first. On failure adds
    ``jitter = 1e-10 * mean(diag(mat))`` to the diagonal (floored at 1e-300
    for all-zero diagonals) and doubles it up to 10 times before giving up.

    Parameters
    ----------
    mat : ndarray, shape (n, n)
        Symmetric positive (semi)definite matrix.
    return_jitter : bool
        If True also return the jitter that was finally added (0.0 when no
        jitter was needed).

    Returns
    -------
    L : ndarray, shape (n, n)
        Lower-triangular factor with ``L @ L.T`` equal to the (jittered) input.
    jitter : float
        Only when ``return_jitter`` is True.

    Raises
    ------
    NumericalError
        If the factorization still fails after the maximum escalation.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NumericalError(f"expected a square matrix, got shape {mat.shape}")
    try:
        L = scipy.linalg.cholesky(mat, lower=True)
        return (L, 0.0) if return_jitter else L
    except scipy.linalg.LinAlgError:
        pass
    base = JITTER_FRAC * float(np.mean(np.diag(mat)))
    if base <= 0.0:
        base = 1e-300
    jitter = base
    eye = np.eye(mat.shape[0])
    for _ in range(MAX_DOUBLINGS + 1):
        try:
            L = scipy.linalg.cholesky(mat + jitter * eye, lower=True)
            logger.debug("cholesky needed jitter %.3e (n=%d)", jitter, mat.shape[0])
            return (L, jitter) if return_jitter else L
        except scipy.linalg.LinAlgError:
            jitter *= 2.0
    raise NumericalError(
        f"matrix of size {mat.shape[0]} not positive definite after "
        f"jitter escalation to {jitter:.3e}"
    )


def chol_solve(L, b):
    """Solve ``A x = b`` given the lower Cholesky factor L of A."""
    return scipy.linalg.cho_solve((L, True), b)


def psd_repair(mat):
    """Project a symmetric matrix onto the PSD cone by eigenvalue clipping.

    Symmetrizes, clips negative eigenvalues at zero, and reconstructs. The
    largest clipped magnitude is logged at DEBUG level so silent large
    repairs are traceable.

    Parameters
    ----------
    mat : ndarray, shape (n, n)

    Returns
    -------
    ndarray, shape (n, n)
        The repaired matrix (symmetric PSD up to round-off).
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(sym)
    if w[0] >= 0.0:
        return sym
    logger.debug("psd repair clipped eigenvalues down to %.3e", w[0])
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


class LowRankCov:
    """Covariance of the form C = s2 * I_n + U @ U.T, evaluated implicitly.

    Solves and log-determinants go through the m x m capacitance matrix
    M = s2 * I_m + U.T @ U (matrix inversion and determinant lemmas), so the
    cost per likelihood evaluation is O(n m^2) instead of O(n^3). Used for
    every marginal-likelihood evaluation where latent Gaussian blocks enter
    through low-rank loading matrices.

    Parameters
    ----------
    U : ndarray, shape (n, m)
        Stacked loading matrix (columns may mix several latent blocks).
    s2 : float
        Positive diagonal noise variance.
    """

    def __init__(self, U, s2):
        if not s2 > 0.0:
            raise NumericalError(f"diagonal variance must be > 0, got {s2}")
        self.U = np.asarray(U, dtype=float)
        self.s2 = float(s2)
        self.n, self.m = self.U.shape
        M = self.s2 * np.eye(self.m) + self.U.T @ self.U
        self._M_chol = chol_with_jitter(M)

    def solve(self, B):
        """C^{-1} B for a vector or matrix B."""
        B = np.asarray(B, dtype=float)
        inner = chol_solve(self._M_chol, self.U.T @ B)
        return (B - self.U @ inner) / self.s2

    def logdet(self):
        """ln|C| via the matrix determinant lemma."""
        logdet_M = 2.0 * float(np.sum(np.log(np.diag(self._M_chol))))
        return (self.n - self.m) * np.log(self.s2) + logdet_M

    def loglik(self, z):
        """Log-density of z under N(0, C)."""
        z = np.asarray(z, dtype=float)
        quad = float(z @ self.solve(z))
        return -0.5 * (self.n * np.log(2.0 * np.pi) + self.logdet() + quad)

    def dense(self):
        """Materialize C; for small problems and cross-checks only."""
        return self.s2 * np.eye(self.n) + self.U @ self.U.T


def sqrt_psd(mat):
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Negative eigenvalues from round-off are clipped at zero first, so this
    also handles rank-deficient and exactly-zero covariance matrices, where
    a Cholesky factorization would fail.

    Returns
    -------
    ndarray, shape (n, n)
        Matrix S with ``S @ S.T`` equal to the clipped input.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)
