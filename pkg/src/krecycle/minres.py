"""Preconditioned, optionally deflated MINRES for an arbitrary inner product.

The method solves ``M^{-1} A P* x~ = M^{-1} b`` (``P*`` omitted when no
deflation is active) and minimizes ``||M^{-1}(b - A x)||_M`` over
``x0 + P* K_n``.  Only applications of ``M^{-1}`` are needed: the
``M``-inner products are evaluated from the unpreconditioned companions that
the iteration produces anyway.
"""
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Union

import numpy as np

from .deflation import Deflator
from .errors import InnerProductError, InputError, NumericsError
from .hilbert import InnerProduct, as_operator
from .lanczos import Lanczos, LanczosData

__all__ = [
    "MinresConfig",
    "SolveReport",
    "MinresResult",
    "minres_solve",
    "minres_bound",
]


@dataclass(frozen=True)
class MinresConfig:
    """Stopping and storage options.

    ``tol`` is relative to the reference norm (by default the initial
    preconditioned residual ``||r0||_M``).  With ``project_basis`` each new
    Lanczos vector of a deflated solve is passed through ``P`` before the
    preconditioner is applied.  This is the identity in exact arithmetic but
    stops the round-off growth of the basis components along ``U``, which the
    three-term recurrence otherwise amplifies as the residual decreases.
    """
    tol: float = 1e-10
    max_iter: int = 1000
    store_basis: bool = False
    reorthogonalize: bool = False
    project_basis: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InputError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass
class SolveReport:
    """Convergence history of one solve.

    ``resnorms[j]`` is the relative residual after ``j`` iterations,
    ``abs_resnorms[j]`` the corresponding absolute ``M``-norm.
    """
    iterations: int
    resnorms: List[float]
    abs_resnorms: List[float]
    converged: bool
    ref_norm: float
    wall_time: float = 0.0
    final_resnorm: Optional[float] = None
    counts: dict = field(default_factory=dict)

    @property
    def final_relres(self):
        if self.final_resnorm is None or self.ref_norm == 0:
            return None
        return self.final_resnorm / self.ref_norm


class MinresResult(NamedTuple):
    x: np.ndarray
    report: SolveReport
    lanczos: Optional[LanczosData]
    B: Optional[np.ndarray]


def minres_solve(A, b, Minv=None, ip: Optional[InnerProduct] = None,
                 P_star: Optional[Deflator] = None, x0=None,
                 cfg: Optional[MinresConfig] = None,
                 ref_norm: Union[None, float, Callable] = None,
                 explicit_check=True, callback=None, **options) -> MinresResult:
    """Solve ``A x = b`` with MINRES.

    :param A: operator, self-adjoint w.r.t. ``ip``.
    :param b: right-hand side.
    :param Minv: inverse of a self-adjoint positive-definite preconditioner
      ``M`` (identity if omitted).
    :param ip: inner product of the working space; the solver works in the
      ``M``-inner product built on top of it.
    :param P_star: a :class:`~krecycle.deflation.Deflator`.  The iteration runs
      on ``M^{-1} A P*`` and ``x0`` must be the corrected initial guess, see
      :meth:`~krecycle.deflation.Deflator.corrected_initial_guess`.
    :param x0: initial guess (zero if omitted).
    :param cfg: :class:`MinresConfig`; keyword ``options`` override its fields.
    :param ref_norm: denominator of the relative residual.  ``None`` means
      ``||r0||_M``; a callable receives ``(r0, M^{-1} r0)``.
    :param explicit_check: recompute the final residual explicitly.  These
      operator applications are reported separately under ``check_*``.
    :param callback: called as ``callback(n, x_n, relres_n)`` once per
      iterate including ``n = 0``.
    :returns: :class:`MinresResult` ``(x, report, lanczos, B)``; ``lanczos``
      and ``B = <V_n, C>`` are only populated with ``store_basis``.
    """
    cfg = replace(cfg or MinresConfig(), **options)
    b = np.asarray(b)
    N = b.shape[0]
    if ip is None:
        ip = InnerProduct()
    if ip.M is not None:
        raise InputError("pass the preconditioner via Minv; ip must be the base inner product")
    A = as_operator(A, N=N, name="A")
    Minv = as_operator(Minv, N=N, name="Minv")
    pair = ip.pair
    dtype = np.result_type(b, float) if x0 is None else np.result_type(b, x0, float)
    x = np.zeros(N, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    store = cfg.store_basis or cfg.reorthogonalize
    d = 0 if P_star is None else P_star.d

    a0, m0 = A.count, Minv.count
    t0 = time.perf_counter()
    r = b - A(x)
    z = Minv(r)
    beta0_2 = float(np.real(pair(z, r)[0, 0]))
    if not np.isfinite(beta0_2):
        raise NumericsError("initial residual is not finite")
    if beta0_2 < 0:
        raise InnerProductError(f"<r0, M^-1 r0> = {beta0_2} is negative")
    beta0 = math.sqrt(beta0_2)
    if ref_norm is None:
        ref = beta0
    elif callable(ref_norm):
        ref = float(ref_norm(r, z))
    else:
        ref = float(ref_norm)
    if not ref >= 0:
        raise InputError(f"reference norm must be non-negative, got {ref}")

    def rel(val):
        if ref == 0:
            return 0.0 if val == 0 else math.inf
        return val / ref

    abs_res = [beta0]
    res = [rel(beta0)]
    if callback is not None:
        callback(0, x, res[0])

    pvs = []
    B_rows = []

    def step(v):
        if P_star is not None:
            pv, c = P_star.apply_P_star(v, return_inner=True)
            B_rows.append(np.conj(c))
        else:
            pv = v
        pvs.append(pv)
        return A(pv)

    def finish(w):
        if P_star is not None and cfg.project_basis:
            w = P_star.apply_P(w)
        return Minv(w), w

    lz = None
    n = 0
    if beta0 > 0 and res[0] > cfg.tol:
        lz = Lanczos(step, finish, z, r, pair, raw_side="z", store=store,
                     reorthogonalize=cfg.reorthogonalize)
        eta = beta0
        c_prev = c_prev2 = 1.0
        s_prev = s_prev2 = 0.0
        beta_k = 0.0
        p_prev = p_prev2 = None
        while n < cfg.max_iter:
            alpha, beta_next = lz.advance()
            n += 1
            pv = pvs[-1]
            pvs.clear()
            eps = s_prev2 * beta_k
            delta_t = c_prev2 * beta_k
            delta = c_prev * delta_t + s_prev * alpha
            gamma_t = -s_prev * delta_t + c_prev * alpha
            gamma = math.hypot(gamma_t, beta_next)
            if gamma == 0:
                raise NumericsError(f"singular projected operator at iteration {n}")
            c, s = gamma_t / gamma, beta_next / gamma
            eta_k = c * eta
            eta = -s * eta
            if np.iscomplexobj(pv) and not np.iscomplexobj(x):
                # a complex operator or preconditioner acting on real data
                dtype = np.result_type(dtype, pv.dtype)
                x = x.astype(dtype)
                p_prev = None if p_prev is None else p_prev.astype(dtype)
                p_prev2 = None if p_prev2 is None else p_prev2.astype(dtype)
            p = pv.astype(dtype, copy=True)
            if p_prev is not None:
                p -= delta * p_prev
            if p_prev2 is not None:
                p -= eps * p_prev2
            p /= gamma
            x = x + eta_k * p
            if not math.isfinite(eta) or not np.all(np.isfinite(p)):
                raise NumericsError(f"non-finite values at MINRES iteration {n}")
            p_prev2, p_prev = p_prev, p
            c_prev2, s_prev2, c_prev, s_prev = c_prev, s_prev, c, s
            beta_k = beta_next
            abs_res.append(abs(eta))
            res.append(rel(abs(eta)))
            if callback is not None:
                callback(n, x, res[-1])
            if res[-1] <= cfg.tol or lz.invariant_subspace:
                break
    wall = time.perf_counter() - t0
    counts = {"A": A.count - a0, "Minv": Minv.count - m0}
    converged = res[-1] <= cfg.tol

    final = None
    if explicit_check:
        a1, m1 = A.count, Minv.count
        rf = b - A(x)
        zf = Minv(rf)
        final = math.sqrt(max(float(np.real(pair(zf, rf)[0, 0])), 0.0))
        counts["check_A"] = A.count - a1
        counts["check_Minv"] = Minv.count - m1

    report = SolveReport(iterations=n, resnorms=res, abs_resnorms=abs_res,
                         converged=converged, ref_norm=ref, wall_time=wall,
                         final_resnorm=final, counts=counts)
    data = None
    B = None
    if cfg.store_basis:
        if lz is not None:
            data = lz.data()
        else:
            data = LanczosData(V=np.zeros((N, 0), dtype=dtype), T=np.zeros((0, 0)), n=0,
                               invariant_subspace=True, Z=np.zeros((N, 0), dtype=dtype))
        if d:
            B = np.array(B_rows[:n]).reshape(n, d)
        else:
            B = np.zeros((n, 0))
    return MinresResult(x, report, data, B)


def minres_bound(lambda_min_neg, lambda_max_neg, lambda_min_pos, lambda_max_pos, n):
    """Worst-case MINRES residual bound for a spectrum in two intervals.

    For eigenvalues in ``[l1, ls] U [ls1, lN]`` with ``l1 <= ls < 0 < ls1 <= lN``
    the relative residual after ``n`` steps is at most ``2 rho**(n // 2)`` with
    ``rho = (sqrt(|l1 lN|) - sqrt(|ls ls1|)) / (sqrt(|l1 lN|) + sqrt(|ls ls1|))``.

    >>> minres_bound(-2.0, -1.0, 1.0, 2.0, 0)
    2.0
    >>> round(minres_bound(-2.0, -1.0, 1.0, 2.0, 4), 15)
    0.222222222222222
    """
    l1, ls, ls1, lN = (float(v) for v in
                       (lambda_min_neg, lambda_max_neg, lambda_min_pos, lambda_max_pos))
    if not (l1 <= ls < 0 < ls1 <= lN):
        raise InputError(
            f"need l1 <= ls < 0 < ls1 <= lN, got {l1}, {ls}, {ls1}, {lN}")
    if int(n) != n or n < 0:
        raise InputError(f"n must be a non-negative integer, got {n}")
    outer = math.sqrt(abs(l1 * lN))
    inner = math.sqrt(abs(ls * ls1))
    rho = (outer - inner) / (outer + inner)
    return 2.0 * rho ** (int(n) // 2)
