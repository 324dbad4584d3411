"""Recycling MINRES for a sequence of self-adjoint linear systems.

For each system ``A_k x = b_k`` (preconditioned by ``M_k``) the driver

1. ``M_k``-orthonormalizes the recycled Ritz vectors ``W`` together with the
   auxiliary deflation vectors ``Y_k`` (``W`` first),
2. builds the projection data and the corrected initial guess,
3. runs deflated MINRES with stored Lanczos basis,
4. extracts Ritz pairs on ``span[V_n, U]`` and keeps ``d_max`` of them as the
   next ``W``.
"""
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .deflation import Deflator
from .errors import ConfigError, DeflationSpaceError
from .hilbert import InnerProduct, as_block, as_operator, orthonormalize
from .minres import MinresConfig, SolveReport, minres_solve
from .ritz import STRATEGIES, ritz_pairs, select_ritz

__all__ = [
    "SequenceItem",
    "RecycleConfig",
    "ItemReport",
    "SequenceReport",
    "RecyclingMinres",
    "solve_sequence",
    "cost_model",
]


class SequenceItem:
    """One system of the sequence.

    :param A: operator, self-adjoint w.r.t. the base inner product.
    :param b: right-hand side.
    :param Minv: preconditioner inverse (identity if omitted).
    :param M: preconditioner; mandatory whenever ``Minv`` is given because the
      deflation basis is orthonormalized in the ``M``-inner product.
    :param x0: initial guess before correction (zero if omitted).
    :param Y: auxiliary deflation vectors, ``(N, l)``.
    """

    def __init__(self, A, b, Minv=None, M=None, x0=None, Y=None):
        b = np.asarray(b)
        N = b.shape[0]
        if (Minv is None) != (M is None):
            raise ConfigError("preconditioner needs both the action of M and of M^-1")
        self.N = N
        self.A = as_operator(A, N=N, name="A")
        self.Minv = as_operator(Minv, N=N, name="Minv")
        self.M = as_operator(M, N=N, name="M")
        self.b = b
        self.x0 = np.zeros_like(b, dtype=np.result_type(b, float)) if x0 is None else np.asarray(x0)
        self.Y = np.zeros((N, 0), dtype=b.dtype) if Y is None else as_block(Y)


@dataclass(frozen=True)
class RecycleConfig:
    """Options of the recycling driver.

    ``d_max`` caps the number of Ritz vectors carried to the next system;
    ``orth_tol`` is the admissible ``|<U, V>_M|`` during Ritz extraction.
    """
    d_max: int = 0
    strategy: str = "smallest_magnitude"
    tol: float = 1e-10
    max_iter: int = 1000
    collect_timings: bool = True
    reorthogonalize: bool = False
    cond_max: float = 1e12
    orth_tol: float = 1e-8

    def __post_init__(self):
        if self.d_max < 0:
            raise ConfigError("d_max must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        MinresConfig(tol=self.tol, max_iter=self.max_iter)


def cost_model(n, d, n_candidates):
    """Operator applications per phase for ``n`` iterations and ``d`` vectors.

    ``n_candidates`` is the number of columns fed into the orthonormalization
    (equal to ``d`` unless linearly dependent vectors were dropped).
    """
    return {
        "orthogonalization": {"A": 0, "Minv": 0, "M": n_candidates},
        "setup": {"A": d, "Minv": 0, "M": 0},
        "minres": {"A": n + 1, "Minv": n + 1, "M": 0},
        "ritz": {"A": 0, "Minv": d, "M": 0},
    }


def _totals(phases):
    tot = {"A": 0, "Minv": 0, "M": 0}
    for row in phases.values():
        for key in tot:
            tot[key] += row[key]
    return tot


@dataclass
class ItemReport:
    solve: SolveReport
    d: int
    n_candidates: int
    fallback: bool
    ritz_values: np.ndarray
    ritz_resnorms: np.ndarray
    counts: dict
    model: dict
    check_counts: dict
    timings: dict = field(default_factory=dict)

    @property
    def totals(self):
        return _totals(self.counts)

    @property
    def model_totals(self):
        return _totals(self.model)

    @property
    def counts_match(self):
        return self.counts == self.model


@dataclass
class SequenceReport:
    items: List[ItemReport] = field(default_factory=list)

    @property
    def iterations(self):
        return [it.solve.iterations for it in self.items]

    @property
    def totals(self):
        tot = {"A": 0, "Minv": 0, "M": 0}
        for it in self.items:
            for key, val in it.totals.items():
                tot[key] += val
        return tot

    @property
    def counts_match(self):
        return all(it.counts_match for it in self.items)


class RecyclingMinres:
    """Stateful driver; :meth:`solve` processes the next system of the sequence."""

    def __init__(self, cfg: RecycleConfig, ip: Optional[InnerProduct] = None):
        self.cfg = cfg
        self.ip = ip or InnerProduct()
        self.W = None
        self.report = SequenceReport()

    def solve(self, item: SequenceItem):
        """Solve one system; returns ``(x, ItemReport)``."""
        cfg, ip = self.cfg, self.ip
        N = item.N
        A, Minv, M = item.A, item.Minv, item.M
        a0, mi0, m0 = A.count, Minv.count, M.count
        timings = {}
        clock = time.perf_counter
        counts = {}

        def phase(name, start):
            counts[name] = {"A": A.count - start[0], "Minv": Minv.count - start[1],
                            "M": M.count - start[2]}
            return (A.count, Minv.count, M.count)

        t = clock()
        W = self.W if self.W is not None else np.zeros((N, 0), dtype=item.Y.dtype)
        cand = np.concatenate([W, item.Y], axis=1) if W.shape[1] or item.Y.shape[1] else W
        n_cand = cand.shape[1]
        ipM = ip.induced(M, Minv)
        U = orthonormalize(cand, ipM) if n_cand else cand
        start = phase("orthogonalization", (a0, mi0, m0))
        timings["orthogonalization"] = clock() - t

        t = clock()
        fallback = False
        try:
            defl = Deflator(A, U, ip, cond_max=cfg.cond_max)
        except DeflationSpaceError:
            fallback = True
            defl = Deflator(A, np.zeros((N, 0), dtype=U.dtype), ip)
        d = defl.d
        x0 = defl.corrected_initial_guess(item.x0, item.b)
        start = phase("setup", start)
        timings["setup"] = clock() - t

        # d preconditioner applications, reused by the Ritz residual norms
        mc0 = Minv.count
        MinvC = Minv(defl.C) if d else np.zeros_like(defl.C)
        ritz_minv = Minv.count - mc0
        start = (A.count, Minv.count, M.count)
        ref_norm = None
        if d:
            F = ip.gram(defl.C, MinvC)
            coef = defl.solve_E(ip.gram(defl.U, item.b)[:, 0] - ip.gram(defl.C, item.x0)[:, 0])

            def ref_norm(r0, z0):
                # ||M^-1 (b - A x0_raw)||_M expressed through the corrected residual
                val = (np.real(ip.pair(z0, r0)[0, 0])
                       + 2 * np.real(np.vdot(coef, ip.gram(defl.C, z0)[:, 0]))
                       + np.real(np.vdot(coef, F @ coef)))
                return np.sqrt(max(val, 0.0))

        t = clock()
        want_ritz = cfg.d_max > 0
        x, rep, lz, B = minres_solve(
            A, item.b, Minv, ip, defl if d else None, x0,
            tol=cfg.tol, max_iter=cfg.max_iter, store_basis=want_ritz,
            reorthogonalize=cfg.reorthogonalize, ref_norm=ref_norm)
        check = {"A": rep.counts.get("check_A", 0), "Minv": rep.counts.get("check_Minv", 0)}
        counts["minres"] = {"A": A.count - start[0] - check["A"],
                            "Minv": Minv.count - start[1] - check["Minv"],
                            "M": M.count - start[2]}
        timings["minres"] = clock() - t

        t = clock()
        start = (A.count, Minv.count, M.count)
        values = np.zeros(0)
        resn = np.zeros(0)
        if want_ritz:
            if B is None:
                B = np.zeros((lz.n, d))
            rs = ritz_pairs(lz, B, defl, Minv, ip, MinvC=MinvC, orth_tol=cfg.orth_tol)
            idx = select_ritz(rs, cfg.strategy, min(cfg.d_max, len(rs)))
            self.W = rs.vectors(idx)
            values = rs.values[idx]
            resn = rs.resnorms[idx]
        else:
            self.W = None
        phase("ritz", start)
        counts["ritz"]["Minv"] += ritz_minv
        timings["ritz"] = clock() - t
        if not cfg.collect_timings:
            timings = {}

        report = ItemReport(solve=rep, d=d, n_candidates=n_cand,
                            fallback=fallback, ritz_values=values, ritz_resnorms=resn,
                            counts=counts, model=cost_model(rep.iterations, d, n_cand),
                            check_counts=check, timings=timings)
        self.report.items.append(report)
        return x, report


def solve_sequence(items: Iterable[SequenceItem], cfg: RecycleConfig,
                   ip: Optional[InnerProduct] = None):
    """Solve all systems in order; returns ``(solutions, SequenceReport)``."""
    driver = RecyclingMinres(cfg, ip)
    xs = []
    for item in items:
        x, _ = driver.solve(item)
        xs.append(x)
    return xs, driver.report
