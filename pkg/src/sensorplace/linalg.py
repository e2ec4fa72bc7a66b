"""Factor-once / solve-many wrapper for symmetric positive definite systems."""

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError

DENSE_BELOW = 200


class SPDFactor:
    """Cholesky for small systems, minimum-degree-ordered sparse LU above.

    The sparse branch runs SuperLU in symmetric mode without pivoting, so
    its pivots are those of a Cholesky factorisation; a non-positive pivot
    means the matrix is not positive definite.
    """

    def __init__(self, M, dense_below=DENSE_BELOW, what="matrix"):
        self.n = M.shape[0]
        self.what = what
        self._chol = self._lu = None
        if self.n == 0:
            return
        if self.n < dense_below:
            dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
            try:
                self._chol = la.cho_factor(dense, lower=True, check_finite=True)
            except (la.LinAlgError, ValueError) as exc:
                raise NumericalError(f"Cholesky of {what} failed: {exc}") from exc
        else:
            Msp = sp.csc_matrix(M)
            try:
                self._lu = spla.splu(
                    Msp, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise NumericalError(f"factorisation of {what} failed: {exc}") from exc
            if np.any(self._lu.U.diagonal() <= 0.0):
                raise NumericalError(f"{what} is not positive definite")

    def solve(self, B):
        B = np.asarray(B, dtype=float)
        if self.n == 0:
            return np.zeros_like(B)
        if self._chol is not None:
            return la.cho_solve(self._chol, B, check_finite=False)
        return self._lu.solve(B)
