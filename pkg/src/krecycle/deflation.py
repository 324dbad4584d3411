"""Self-adjoint deflation projections.

For a deflation basis ``U`` with ``C = A U`` and ``E = <U, C>`` the
projections are

* ``P x   = x - C E^{-1} <U, x>``
* ``P* x  = x - U E^{-1} <C, x>``  (the adjoint of ``P``)
* ``P_M x = x - M^{-1} C E^{-1} <U, x>_M``

so that ``P A = A P*`` and ``P_M M^{-1} = M^{-1} P``.  MINRES applied to
``M^{-1} A P* x~ = M^{-1} b`` with the corrected initial guess returns iterates
of the original system directly.
"""
import numpy as np
import scipy.linalg

from .errors import DeflationSpaceError, DimensionError
from .hilbert import InnerProduct, Operator, as_block, as_operator

__all__ = ["Deflator", "build_deflator"]


class Deflator:
    """Projection data ``(U, C, E)`` with a pivoted LU factorization of ``E``.

    ``E`` is Hermitian but indefinite in general, so a Cholesky factorization
    is not applicable.

    :param A: operator, self-adjoint w.r.t. ``ip``.
    :param U: deflation basis ``(N, d)``; may be empty.
    :param ip: inner product of the working space (without preconditioner).
    :param cond_max: largest admissible condition number of ``E``.
    :param C: precomputed ``A U``; skips the ``d`` operator applications.
    """

    def __init__(self, A, U, ip: InnerProduct, cond_max=1e12, C=None):
        U = as_block(U)
        self.ip = ip
        self.U = U
        self.N, self.d = U.shape
        if C is None:
            A = as_operator(A, N=self.N, name="A")
            C = A(U) if self.d else np.zeros_like(U)
        C = as_block(C)
        if C.shape != U.shape:
            raise DimensionError(f"C has shape {C.shape}, U has {U.shape}")
        self.C = C
        if self.d == 0:
            self.E = np.zeros((0, 0))
            self.cond = 1.0
            self._lu = None
            return
        E = ip.gram(U, C)
        E = 0.5 * (E + E.conj().T)
        if not np.all(np.isfinite(E)):
            raise DeflationSpaceError("E = <U, AU> is not finite")
        try:
            cond = np.linalg.cond(E)
        except np.linalg.LinAlgError:
            cond = np.inf
        if not cond <= cond_max:
            raise DeflationSpaceError(
                f"E = <U, AU> is too ill-conditioned (cond = {cond:.3e} > {cond_max:.1e})")
        self.E = E
        self.cond = float(cond)
        self._lu = scipy.linalg.lu_factor(E)

    def solve_E(self, rhs):
        """``E^{-1} rhs`` for a vector or a matrix right-hand side."""
        if self.d == 0:
            return np.zeros_like(rhs)
        return scipy.linalg.lu_solve(self._lu, rhs)

    def _check(self, x):
        if x.shape[0] != self.N:
            raise DimensionError(f"vector has length {x.shape[0]}, expected {self.N}")

    def apply_P(self, x):
        x = np.asarray(x)
        self._check(x)
        if self.d == 0:
            return x.copy()
        c = self.ip.gram(self.U, x)
        return x - (self.C @ self.solve_E(c)).reshape(x.shape)

    def apply_P_star(self, x, return_inner=False):
        """``P* x``; with ``return_inner`` also the coefficients ``<C, x>``.

        The coefficients are what a Lanczos-based solver needs to accumulate
        ``B = <V, C>`` without extra inner products.
        """
        x = np.asarray(x)
        self._check(x)
        if self.d == 0:
            y = x.copy()
            c = np.zeros((0,) + x.shape[1:])
        else:
            c = self.ip.gram(self.C, x)
            y = x - (self.U @ self.solve_E(c)).reshape(x.shape)
            if x.ndim == 1:
                c = c[:, 0]
        if return_inner:
            return y, c
        return y

    def apply_P_M(self, x, M, Minv):
        """``P_M x = x - M^{-1} C E^{-1} <U, x>_M``."""
        x = np.asarray(x)
        self._check(x)
        if self.d == 0:
            return x.copy()
        c = self.ip.gram(self.U, M(x))
        return x - (Minv(self.C) @ self.solve_E(c)).reshape(x.shape)

    def corrected_initial_guess(self, x0_raw, b):
        """``x0 = P* x0_raw + U E^{-1} <U, b>``."""
        x0_raw = np.asarray(x0_raw)
        self._check(x0_raw)
        if self.d == 0:
            return x0_raw.copy()
        ub = self.ip.gram(self.U, b)[:, 0]
        return self.apply_P_star(x0_raw) + self.U @ self.solve_E(ub)

    def deflated_operator(self, A, Minv=None):
        """Operator ``x -> M^{-1} P A x``, self-adjoint w.r.t. ``<., .>_M``."""
        A = as_operator(A, N=self.N, name="A")
        Minv = as_operator(Minv, N=self.N, name="Minv")

        def apply(x):
            return Minv(self.apply_P(A(x)))

        return Operator(self.N, apply, self_adjoint=True, name="Minv P A")

    def __repr__(self):
        return f"Deflator(N={self.N}, d={self.d}, cond={self.cond:.2e})"


def build_deflator(A, U, ip, cond_max=1e12):
    """Convenience wrapper around :class:`Deflator`."""
    return Deflator(A, U, ip, cond_max=cond_max)
