"""Ritz pairs of the preconditioned operator on ``span[V_n, U]``.

After a deflated MINRES run the Lanczos relation ``M^{-1} A P* V_n = V_{n+1} T``
and the coupling ``B = <V_n, C>`` give the Rayleigh quotient of ``M^{-1} A``
on the ``M``-orthonormal basis ``[V_n, U]`` without further operator
applications:

    H = [[T_n + B E^{-1} B^H, B],
         [B^H,                E]].

Residual norms follow from a small quadratic form, which needs
``F = <C, M^{-1} C>``, i.e. ``d`` preconditioner applications.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, OrthogonalityError
from .hilbert import InnerProduct, as_operator

__all__ = ["RitzSet", "RitzSelectionWarning", "ritz_pairs", "select_ritz", "STRATEGIES"]

STRATEGIES = ("smallest_magnitude", "largest_magnitude", "smallest_resnorm")


class RitzSelectionWarning(UserWarning):
    """Fewer Ritz pairs were available than requested."""


@dataclass
class RitzSet:
    """Ritz values, coefficient vectors and residual norms.

    Coefficients refer to the basis ``[V_n, U]``; vectors are assembled on
    demand by :meth:`vectors`.
    """
    values: np.ndarray
    coeffs: np.ndarray
    resnorms: np.ndarray
    V: np.ndarray
    U: np.ndarray
    H: np.ndarray

    def __len__(self):
        return len(self.values)

    def vectors(self, indices=None):
        if indices is None:
            indices = range(len(self))
        idx = list(indices)
        basis = np.concatenate([self.V, self.U], axis=1)
        return basis @ self.coeffs[:, idx]


def ritz_pairs(lanczos, B, defl, Minv=None, ip: InnerProduct = None, MinvC=None,
               orth_tol=1e-10):
    """Ritz pairs of ``M^{-1} A`` with respect to ``span[V_n, U]``.

    :param lanczos: :class:`~krecycle.lanczos.LanczosData` of the deflated
      solve (with stored basis and companions ``Z = M V``).
    :param B: coupling matrix ``<V_n, C>`` from the solve.
    :param defl: the :class:`~krecycle.deflation.Deflator` used in the solve.
    :param Minv: preconditioner inverse, used for ``F`` unless ``MinvC`` given.
    :param ip: base inner product.
    :param MinvC: precomputed ``M^{-1} C``.
    :param orth_tol: largest admissible ``|<U, V>_M|`` entry.
    :raises OrthogonalityError: the Lanczos basis is not ``M``-orthogonal to ``U``.
    """
    if ip is None:
        ip = InnerProduct()
    if lanczos.V is None:
        raise InputError("Ritz extraction needs the stored Lanczos basis")
    n = lanczos.n
    d = defl.d
    T = lanczos.T
    rows = T.shape[0]
    V_all = lanczos.V[:, :rows]
    Vn = lanczos.V[:, :n]
    U = defl.U
    C = defl.C
    B = np.asarray(B).reshape(n, d)

    if d:
        orth = ip.pair(U, lanczos.Z[:, :rows])
        err = np.max(np.abs(orth)) if orth.size else 0.0
        if err > orth_tol:
            raise OrthogonalityError(
                f"max |<U, V>_M| = {err:.3e} exceeds {orth_tol:.1e}")
        if MinvC is None:
            Minv = as_operator(Minv, N=U.shape[0], name="Minv")
            MinvC = Minv(C)
        F = ip.gram(C, MinvC)
        F = 0.5 * (F + F.conj().T)
        if rows > n:
            B_ext = np.vstack([B, ip.pair(V_all[:, n:], C)])
        else:
            B_ext = B
        EinvBh = defl.solve_E(B.conj().T)
        H = np.block([[T[:n, :n] + B @ EinvBh, B], [B.conj().T, defl.E]])
    else:
        F = np.zeros((0, 0))
        B_ext = np.zeros((rows, 0))
        EinvBh = np.zeros((0, n))
        H = T[:n, :n].astype(float)
    H = 0.5 * (H + H.conj().T)
    m = n + d
    if m == 0:
        empty = np.zeros(0)
        return RitzSet(empty, np.zeros((0, 0)), empty, Vn, U, H)
    values, W = scipy.linalg.eigh(H)

    # M^-1 C = V_{n+1} B_ext + U E + Q with Q M-orthogonal to both; the Gram
    # matrix of Q is the Schur complement S, so each residual norm splits into
    # three non-negative terms that are free of cancellation.
    if d:
        S = F - B_ext.conj().T @ B_ext - defl.E @ defl.E
        lam, X = np.linalg.eigh(0.5 * (S + S.conj().T))
        floor = 10 * (rows + d) * np.finfo(float).eps * max(np.abs(F).max(), 1.0)
        lam = np.where(lam > floor, lam, 0.0)
        sqrtS = np.sqrt(lam)[:, None] * X.conj().T
    Ibar = np.eye(rows, n)
    resnorms = np.empty(m)
    for j in range(m):
        mu = values[j]
        y, u = W[:n, j], W[n:, j]
        g = (T - mu * Ibar) @ y
        if d:
            c = EinvBh @ y + u
            g = np.concatenate([g + B_ext @ c, defl.E @ c - mu * u, sqrtS @ c])
        resnorms[j] = np.linalg.norm(g)
    return RitzSet(values, W, resnorms, Vn, U, H)


def select_ritz(rs: RitzSet, strategy, d_next):
    """Indices of ``d_next`` Ritz pairs ordered by ``strategy``.

    Ties are broken by the smaller residual norm and then by the index.  If
    fewer pairs are available all of them are returned and a
    :class:`RitzSelectionWarning` is issued.
    """
    if strategy not in STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if d_next < 0:
        raise InputError("d_next must be non-negative")
    m = len(rs)
    if d_next > m:
        warnings.warn(f"requested {d_next} Ritz pairs, only {m} available",
                      RitzSelectionWarning, stacklevel=2)
        d_next = m
    mags = np.abs(rs.values)
    res = rs.resnorms
    if strategy == "smallest_magnitude":
        key = lambda j: (mags[j], res[j], j)
    elif strategy == "largest_magnitude":
        key = lambda j: (-mags[j], res[j], j)
    else:
        key = lambda j: (res[j], j)
    return sorted(range(m), key=key)[:d_next]
