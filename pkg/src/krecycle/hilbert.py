"""Hilbert-space substrate: operators, inner products and vector blocks.

A *block* is an ``(N, k)`` array whose columns are vectors of the working
space.  Block inner products follow the matrix convention
``<X, Y> = X^H W Y`` (entry ``(i, j)`` pairs column ``i`` of ``X`` with column
``j`` of ``Y``), so that ``<X Z, Y> = Z^H <X, Y>`` and ``<X, Y Z> = <X, Y> Z``.

Complex vectors over the real field (the Ginzburg--Landau setting) are stored
as complex arrays; the pairing then takes the real part, which makes every
Gram matrix real symmetric.
"""
import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import DimensionError, InnerProductError, InputError

__all__ = [
    "Operator",
    "IdentityOperator",
    "as_operator",
    "as_block",
    "InnerProduct",
    "block_inner",
    "right_multiply",
    "orthonormalize",
]


def as_block(X):
    """Return ``X`` as a 2-D block; 1-D vectors become single columns."""
    X = np.asarray(X)
    if X.ndim == 1:
        return X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"expected a vector or a block, got ndim={X.ndim}")
    return X


class Operator:
    """A linear operator on the working space with an application counter.

    ``apply`` maps a 1-D vector to a 1-D vector.  If ``apply_block`` is given
    it is used for 2-D blocks, otherwise columns are processed one by one.
    Every vector the operator touches increments :attr:`count`, which is what
    the cost accounting of the recycling solver relies on.
    """

    def __init__(self, N, apply, apply_block=None, self_adjoint=False,
                 positive_definite=False, name=None):
        self.N = int(N)
        self._apply = apply
        self._apply_block = apply_block
        self.self_adjoint = self_adjoint
        self.positive_definite = positive_definite
        self.name = name or "op"
        self.count = 0

    @property
    def shape(self):
        return (self.N, self.N)

    def __call__(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.N:
            raise DimensionError(
                f"{self.name}: operand has length {x.shape[0]}, expected {self.N}")
        if x.ndim == 1:
            self.count += 1
            return np.asarray(self._apply(x))
        if x.ndim != 2:
            raise DimensionError(f"{self.name}: cannot apply to ndim={x.ndim}")
        k = x.shape[1]
        self.count += k
        if k == 0:
            return np.zeros_like(x)
        if self._apply_block is not None:
            return np.asarray(self._apply_block(x))
        return np.column_stack([np.asarray(self._apply(x[:, j])) for j in range(k)])

    def reset_count(self):
        self.count = 0

    def __repr__(self):
        return f"Operator({self.name!r}, N={self.N})"


class IdentityOperator(Operator):
    def __init__(self, N, name="I"):
        super().__init__(N, lambda x: x.copy(), apply_block=lambda X: X.copy(),
                         self_adjoint=True, positive_definite=True, name=name)


def _check_dim(actual, expected):
    if expected is not None and actual != expected:
        raise DimensionError(f"operator dimension {actual} does not match {expected}")


def as_operator(obj, N=None, name=None, **flags):
    """Wrap a matrix, sparse matrix, LinearOperator or callable as :class:`Operator`.

    ``None`` yields the identity (``N`` required then).
    """
    if isinstance(obj, Operator):
        _check_dim(obj.N, N)
        return obj
    if obj is None:
        if N is None:
            raise InputError("dimension required for the identity operator")
        return IdentityOperator(N, name=name or "I")
    if scipy.sparse.issparse(obj) or isinstance(obj, np.ndarray):
        if obj.ndim != 2 or obj.shape[0] != obj.shape[1]:
            raise DimensionError(f"operator matrix must be square, got {obj.shape}")
        mat = obj
        _check_dim(mat.shape[0], N)
        return Operator(mat.shape[0], lambda x: mat @ x, apply_block=lambda X: mat @ X,
                        name=name, **flags)
    if isinstance(obj, scipy.sparse.linalg.LinearOperator):
        lin = obj
        _check_dim(lin.shape[0], N)
        return Operator(lin.shape[0], lin.matvec, apply_block=lin.matmat,
                        name=name, **flags)
    if callable(obj):
        if N is None:
            raise InputError("dimension required when wrapping a callable")
        return Operator(N, obj, name=name, **flags)
    raise InputError(f"cannot interpret {type(obj).__name__} as an operator")


class InnerProduct:
    """Self-adjoint positive-definite pairing on the working space.

    Parameters
    ----------
    weights : array_like, optional
        Positive diagonal weights ``w``; ``<x, y> = sum_k w_k conj(x_k) y_k``.
    real : bool
        Take the real part of the pairing (complex vectors over the real field).
    M, Minv : Operator, optional
        Operator inducing ``<x, y>_M = <x, M y>``; its inverse is carried along
        for solvers that need it.  See :meth:`induced`.
    """

    def __init__(self, weights=None, real=False, M=None, Minv=None):
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.ndim != 1 or np.any(~(weights > 0)):
                raise InnerProductError("weights must be a 1-D array of positive numbers")
        self.weights = weights
        self.real = bool(real)
        self.M = M
        self.Minv = Minv

    @property
    def kind(self):
        if self.M is not None:
            return "operator"
        if self.weights is not None:
            return "diagonal"
        return "real-euclidean" if self.real else "euclidean"

    @property
    def base(self):
        """The same pairing without the inducing operator."""
        if self.M is None:
            return self
        return InnerProduct(self.weights, self.real)

    def induced(self, M, Minv=None):
        """Return ``<x, y>_M := <M x, y>`` built on top of this pairing."""
        if self.M is not None:
            raise InputError("cannot induce an inner product twice")
        return InnerProduct(self.weights, self.real, M=M, Minv=Minv)

    def apply_M(self, X):
        """Companion ``M X`` of a vector or block (``X`` itself if not induced)."""
        if self.M is None:
            return X
        return self.M(X)

    def pair(self, X, MY):
        """Raw weighted pairing of ``X`` with an already M-applied companion."""
        X = as_block(X)
        MY = as_block(MY)
        if X.shape[0] != MY.shape[0]:
            raise DimensionError(
                f"inner product of blocks with lengths {X.shape[0]} and {MY.shape[0]}")
        if self.weights is not None:
            if self.weights.shape[0] != X.shape[0]:
                raise DimensionError(
                    f"weights have length {self.weights.shape[0]}, vectors {X.shape[0]}")
            G = X.conj().T @ (self.weights[:, None] * MY)
        else:
            G = X.conj().T @ MY
        if self.real:
            return np.real(G)
        return G

    def gram(self, X, Y):
        Y = as_block(Y)
        return self.pair(X, self.apply_M(Y))

    __call__ = gram

    def inner(self, x, y):
        """Scalar pairing of two vectors."""
        return self.gram(x, y)[0, 0]

    def norm(self, x):
        val = np.real(self.inner(x, x))
        if not val >= 0:
            raise InnerProductError(f"<x, x> = {val} is negative")
        return float(np.sqrt(val))

    def __repr__(self):
        return f"InnerProduct(kind={self.kind!r})"


def block_inner(X, Y, ip):
    """Matrix ``[<x_i, y_j>]`` of all pairings between the columns of X and Y."""
    X = as_block(X)
    Y = as_block(Y)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"blocks have lengths {X.shape[0]} and {Y.shape[0]}")
    return ip.gram(X, Y)


def right_multiply(X, Z):
    """Column ``j`` of the result is ``sum_i Z[i, j] x_i``."""
    X = as_block(X)
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] != X.shape[1]:
        raise DimensionError(
            f"cannot multiply block with {X.shape[1]} columns by matrix {Z.shape}")
    return X @ Z


def orthonormalize(X, ip, drop_tol=None, return_kept=False):
    """Orthonormal basis of ``span(X)`` with respect to ``ip``.

    Modified Gram--Schmidt with one full reorthogonalization pass.  A column
    whose norm after projection falls below ``drop_tol`` times its original
    norm is considered linearly dependent and dropped.  For an induced inner
    product the inducing operator is applied exactly once per input column;
    the companions ``M x`` are updated alongside the vectors.

    Returns the block ``U`` (``U.shape[1]`` is the retained dimension d) and,
    with ``return_kept``, the indices of the input columns that survived.
    """
    X = as_block(X)
    N, k = X.shape
    if drop_tol is None:
        drop_tol = 1e-14 * np.sqrt(max(N, 1))
    if not drop_tol > 0:
        raise InputError("drop_tol must be positive")
    dtype = np.result_type(X.dtype, float)
    cols, mcols, kept = [], [], []
    for j in range(k):
        x = np.array(X[:, j], dtype=dtype)
        mx = np.asarray(ip.apply_M(x))
        if mx.dtype != x.dtype:
            dtype = np.result_type(dtype, mx.dtype)
            x = x.astype(dtype)
        mx = mx.astype(dtype)
        nrm2 = np.real(ip.pair(x, mx)[0, 0])
        if not nrm2 >= 0 or (nrm2 == 0 and np.any(x != 0)):
            raise InnerProductError(f"<x, x> = {nrm2} for a nonzero column {j}")
        nrm0 = np.sqrt(nrm2)
        if nrm0 == 0:
            continue
        for _ in range(2):
            for u, mu in zip(cols, mcols):
                c = ip.pair(u, mx)[0, 0]
                x = x - c * u
                mx = mx - c * mu
        nrm2 = np.real(ip.pair(x, mx)[0, 0])
        if not nrm2 >= 0:
            if nrm2 > -(drop_tol * nrm0) ** 2:
                continue
            raise InnerProductError(f"<x, x> = {nrm2} after projection")
        nrm = np.sqrt(nrm2)
        if nrm <= drop_tol * nrm0:
            continue
        cols.append(x / nrm)
        mcols.append(mx / nrm)
        kept.append(j)
    U = np.column_stack(cols) if cols else np.zeros((N, 0), dtype=dtype)
    if return_kept:
        return U, kept
    return U
