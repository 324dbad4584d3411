"""Lanczos iteration with respect to an arbitrary inner product.

Every basis vector ``v`` travels together with a *companion* ``z`` such that
``<v, y>_ip = pair(v, z_y)`` for the raw pairing of the base inner product.
For an operator-induced inner product ``<x, y>_M = <x, M y>`` the companion is
``M v``.  Preconditioned solvers produce ``z`` first and obtain ``v = M^{-1} z``,
so that ``M`` itself never has to be applied.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InnerProductError, InputError, NumericsError
from .hilbert import InnerProduct, as_operator

__all__ = ["LanczosData", "Lanczos", "lanczos_run"]


@dataclass(frozen=True)
class LanczosData:
    """Result of a Lanczos run.

    ``V`` has ``n + 1`` columns and ``T`` is ``(n + 1) x n`` unless the run hit
    an invariant subspace, in which case both are truncated to ``n`` columns /
    ``n x n`` and :attr:`invariant_subspace` is set.
    """
    V: Optional[np.ndarray]
    T: np.ndarray
    n: int
    invariant_subspace: bool
    Z: Optional[np.ndarray] = None

    @property
    def T_square(self):
        """The leading ``n x n`` symmetric tridiagonal block."""
        return self.T[: self.n, : self.n]


class Lanczos:
    """Incremental three-term Lanczos recurrence.

    The operator image of a basis vector may live on either side of the
    pairing.  With ``raw_side="v"`` (plain inner products) ``step(v)`` returns
    the image ``w`` and ``finish(w)`` returns ``(w, M w)``.  With
    ``raw_side="z"`` (preconditioned solvers) ``step(v)`` returns the
    unpreconditioned image and ``finish(z)`` returns ``(M^{-1} z, z)``.  The
    three-term recurrence is carried out on the raw side before ``finish``, so
    the latter may also apply a projection to the new vector.

    :param step: maps a basis vector ``v`` to its raw image.
    :param finish: maps the orthogonalized raw vector to the pair ``(v, z)``.
    :param v0: starting vector (normalized internally).
    :param z0: companion of ``v0``.
    :param pair: raw pairing ``pair(x, z_y)`` returning a 1x1 matrix.
    :param store: keep the basis (required for reorthogonalization and for
      extracting Ritz pairs).
    :param reorthogonalize: orthogonalize each new vector against all stored
      basis vectors (full reorthogonalization).
    """

    def __init__(self, step: Callable, finish: Callable, v0, z0, pair: Callable,
                 raw_side="v", store=True, reorthogonalize=False, breakdown_factor=1e-14):
        if reorthogonalize and not store:
            raise InputError("reorthogonalization requires a stored basis")
        if raw_side not in ("v", "z"):
            raise InputError(f"raw_side must be 'v' or 'z', got {raw_side!r}")
        v0 = np.asarray(v0)
        z0 = np.asarray(z0)
        nrm2 = np.real(pair(v0, z0)[0, 0])
        if not np.isfinite(nrm2):
            raise NumericsError("starting vector is not finite")
        if nrm2 < 0 or (nrm2 == 0 and np.any(v0 != 0)):
            raise InnerProductError(f"<v0, v0> = {nrm2}")
        if nrm2 == 0:
            raise InputError("Lanczos starting vector must be nonzero")
        self.beta0 = float(np.sqrt(nrm2))
        self._step = step
        self._finish = finish
        self._pair = pair
        self.raw_side = raw_side
        self.store = store
        self.reorthogonalize = reorthogonalize
        self.breakdown_factor = breakdown_factor
        self.breakdown_tol = None
        self.v = v0 / self.beta0
        self.z = z0 / self.beta0
        self.v_prev = None
        self.z_prev = None
        self.alphas = []
        self.betas = []  # betas[k] couples v_k and v_{k+1}
        self.Vs = [self.v] if store else None
        self.Zs = [self.z] if store else None
        self.invariant_subspace = False

    @property
    def n(self):
        return len(self.alphas)

    def _sides(self, v, z):
        # (vector the raw image is combined with, vector it is paired with)
        return (z, v) if self.raw_side == "z" else (v, z)

    def advance(self):
        """Perform one step; returns ``(alpha_k, beta_{k+1})``.

        After a breakdown ``beta_{k+1}`` is reported as 0 and no new vector is
        generated.
        """
        if self.invariant_subspace:
            raise InputError("Lanczos run already terminated in an invariant subspace")
        y = np.asarray(self._step(self.v))
        cur, cur_dual = self._sides(self.v, self.z)
        y = np.array(y, dtype=np.result_type(y, cur))
        if self.v_prev is not None:
            prev, _ = self._sides(self.v_prev, self.z_prev)
            y -= self.betas[-1] * prev
        alpha = float(np.real(self._pair(cur_dual, y)[0, 0]))
        y -= alpha * cur
        if self.reorthogonalize:
            for vj, zj in zip(self.Vs, self.Zs):
                raw_j, dual_j = self._sides(vj, zj)
                y -= self._pair(dual_j, y)[0, 0] * raw_j
        w, zw = self._finish(y)
        beta2 = float(np.real(self._pair(w, zw)[0, 0]))
        if not (np.isfinite(alpha) and np.isfinite(beta2)):
            raise NumericsError(f"non-finite Lanczos coefficients at step {self.n + 1}")
        if self.breakdown_tol is None:
            self.breakdown_tol = self.breakdown_factor * np.sqrt(alpha ** 2 + max(beta2, 0.0))
        tol = self.breakdown_tol
        if beta2 < 0:
            # round-off can push a vanishing beta^2 slightly below zero
            scale = alpha ** 2 + (self.betas[-1] ** 2 if self.betas else 0.0)
            if beta2 < -1e-10 * scale:
                raise InnerProductError(f"<w, w> = {beta2} is negative")
            beta2 = 0.0
        beta = float(np.sqrt(beta2))
        self.alphas.append(alpha)
        if beta <= tol:
            self.invariant_subspace = True
            self.betas.append(0.0)
            return alpha, 0.0
        self.betas.append(beta)
        self.v_prev, self.z_prev = self.v, self.z
        self.v = w / beta
        self.z = zw / beta
        if self.store:
            self.Vs.append(self.v)
            self.Zs.append(self.z)
        return alpha, beta

    def T(self):
        n = self.n
        rows = n if self.invariant_subspace else n + 1
        T = np.zeros((rows, n))
        for k in range(n):
            T[k, k] = self.alphas[k]
            if k + 1 < rows:
                T[k + 1, k] = self.betas[k]
                if k + 1 < n:
                    T[k, k + 1] = self.betas[k]
        return T

    def data(self):
        V = Z = None
        if self.store:
            V = np.column_stack(self.Vs)
            Z = np.column_stack(self.Zs)
        return LanczosData(V=V, T=self.T(), n=self.n,
                           invariant_subspace=self.invariant_subspace, Z=Z)


def lanczos_run(op, v0, ip: InnerProduct, n_max, reorthogonalize=False, store=True):
    """Run at most ``n_max`` Lanczos steps for ``op`` (self-adjoint w.r.t. ``ip``).

    Returns :class:`LanczosData` with ``op(V_n) = V_{n+1} T``.  If the Krylov
    space becomes invariant the run stops early and the data is truncated.

    >>> import numpy as np
    >>> from krecycle.hilbert import InnerProduct
    >>> data = lanczos_run(np.diag([1.0, 2.0, 3.0]), np.ones(3), InnerProduct(), 3)
    >>> np.round(np.linalg.eigvalsh(data.T_square), 12).tolist()
    [1.0, 2.0, 3.0]
    """
    v0 = np.asarray(v0)
    op = as_operator(op, N=v0.shape[0], name="op")
    if n_max < 1:
        raise InputError("n_max must be at least 1")
    if not np.any(v0):
        raise InputError("Lanczos starting vector must be nonzero")

    def finish(w):
        return w, ip.apply_M(w)

    lz = Lanczos(op, finish, v0, ip.apply_M(v0), ip.base.pair, raw_side="v",
                 store=store, reorthogonalize=reorthogonalize)
    while lz.n < n_max and not lz.invariant_subspace:
        lz.advance()
    return lz.data()
