"""Property battery behind ``krecycle check``.

Every check builds a few random instances from a seeded generator, measures
the violation of one invariant and compares it with a fixed tolerance.  The
result is a list of :class:`CheckResult` records in a fixed order, so two
runs with the same seed produce identical reports.
"""
import contextlib
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .deflation import Deflator
from .gl.mesh import build_disk_mesh
from .gl.system import GLSystem, build_preconditioner, dipole_potential
from .hilbert import InnerProduct, Operator, orthonormalize
from .lanczos import lanczos_run
from .minres import minres_bound, minres_solve
from .recycler import RecycleConfig, RecyclingMinres, SequenceItem
from .ritz import ritz_pairs

__all__ = ["CheckResult", "run_checks", "inject_fault", "FAULTS", "random_problem"]

FAULTS = ("pstar-sign",)


@dataclass
class CheckResult:
    module: str
    invariant: str
    violation: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.violation) and self.violation <= self.tol)

    def as_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


@contextlib.contextmanager
def inject_fault(name):
    """Temporarily break the package on purpose (used to test the battery)."""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise ValueError(f"unknown fault {name!r}")
    original = Deflator.apply_P_star

    def flipped(self, x, return_inner=False):
        y, c = original(self, x, return_inner=True)
        y = 2 * np.asarray(x) - y  # x + U E^-1 <C, x>
        return (y, c) if return_inner else y

    Deflator.apply_P_star = flipped
    try:
        yield
    finally:
        Deflator.apply_P_star = original


def random_problem(rng, N, complex_field=False, definite=False):
    """Random ``(A, ip, M, Minv)`` with ``A`` and ``M`` self-adjoint in ``ip``.

    The base inner product has random positive diagonal weights ``w``; with
    ``W = diag(w)`` we take ``A = W^-1 H`` and ``M = W^-1 G`` for a Hermitian
    ``H`` and a Hermitian positive-definite ``G``.
    """
    def rand(*shape):
        X = rng.standard_normal(shape)
        if complex_field:
            X = X + 1j * rng.standard_normal(shape)
        return X

    w = rng.uniform(0.5, 2.0, N)
    X = rand(N, N)
    H = X + X.conj().T
    if definite:
        H = X @ X.conj().T + N * np.eye(N)
    Y = rand(N, N)
    G = Y @ Y.conj().T / N + np.eye(N)
    A = H / w[:, None]
    M = G / w[:, None]
    Minv = np.linalg.solve(G, np.diag(w).astype(G.dtype))
    return A, InnerProduct(weights=w), M, Minv


def _dense_minres_history(A, b, W, Minv, n_max, x0=None, P_star=None):
    """Residual norms of the exact minimal-residual iterates, by least squares."""
    N = b.shape[0]
    x0 = np.zeros(N, dtype=b.dtype) if x0 is None else x0
    Ps = np.eye(N) if P_star is None else P_star
    r0 = b - A @ x0
    L = np.linalg.cholesky(0.5 * ((W @ Minv) + (W @ Minv).conj().T))
    norm = lambda r: np.linalg.norm(L.conj().T @ r)
    out = [norm(r0)]
    K = np.zeros((N, 0), dtype=np.result_type(A, b, Minv))
    v = Minv @ r0
    for _ in range(n_max):
        K = np.column_stack([K, v])
        Q, _ = np.linalg.qr(K)
        S = A @ Ps @ Q
        y = np.linalg.lstsq(L.conj().T @ S, L.conj().T @ r0, rcond=None)[0]
        out.append(norm(r0 - S @ y))
        v = Minv @ (A @ (Ps @ Q[:, -1]))
    return np.array(out)


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _check_hilbert(rng):
    N = 20
    X = rng.standard_normal((N, 5))
    M = np.diag(np.arange(1.0, N + 1))
    ipM = InnerProduct().induced(Operator(N, lambda x: M @ x, apply_block=lambda B: M @ B))
    U = orthonormalize(X, ipM)
    yield "hilbert", "gram-orthonormality", float(np.max(np.abs(ipM(U, U) - np.eye(5)))), 1e-12
    A, ip, _, _ = random_problem(rng, 12, complex_field=True)
    x, y = rng.standard_normal((2, 12))
    lhs, rhs = ip.inner(A @ x, y), ip.inner(x, A @ y)
    yield "hilbert", "operator-self-adjointness", abs(lhs - rhs) / abs(lhs), 1e-12


def _check_lanczos(rng):
    worst_rel, worst_orth = 0.0, 0.0
    for _ in range(5):
        A, ip, _, _ = random_problem(rng, 16)
        data = lanczos_run(A, rng.standard_normal(16), ip, 8)
        V, T = data.V, data.T
        worst_rel = max(worst_rel, _rel(A @ V[:, :data.n], V @ T))
        worst_orth = max(worst_orth, float(np.max(np.abs(ip(V, V) - np.eye(V.shape[1])))))
    yield "lanczos", "lanczos-relation", worst_rel, 1e-12
    yield "lanczos", "basis-orthonormality", worst_orth, 1e-8


def _check_minres(rng):
    worst = 0.0
    for _ in range(5):
        N = int(rng.integers(8, 20))
        A, ip, M, Minv = random_problem(rng, N)
        b = rng.standard_normal(N)
        _, rep, _, _ = minres_solve(A, b, Minv, ip, tol=1e-12, max_iter=N,
                                     reorthogonalize=True)
        ref = _dense_minres_history(A, b, np.diag(ip.weights), Minv, rep.iterations)
        worst = max(worst, float(np.max(np.abs(np.array(rep.abs_resnorms) - ref))
                                 / ref[0]))
    yield "minres", "oracle-equivalence", worst, 1e-8
    N = 40
    eigs = np.concatenate([-np.linspace(1, 4, N // 2), np.linspace(1, 4, N // 2)])
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    A = Q @ np.diag(eigs) @ Q.T
    _, rep, _, _ = minres_solve(A, rng.standard_normal(N), tol=1e-13, max_iter=N)
    excess = max(rep.resnorms[n] - minres_bound(-4, -1, 1, 4, n)
                 for n in range(rep.iterations + 1))
    yield "minres", "convergence-bound", max(excess, 0.0), 1e-12


def _check_deflation(rng):
    adj = inter = comm = sa = corr = 0.0
    for _ in range(10):
        N, d = 12, 3
        A, ip, M, Minv = random_problem(rng, N, complex_field=True)
        U = rng.standard_normal((N, d)) + 1j * rng.standard_normal((N, d))
        defl = Deflator(A, U, ip)
        x, y = rng.standard_normal((2, N)) + 1j * rng.standard_normal((2, N))
        lhs = ip.inner(defl.apply_P(x), y)
        adj = max(adj, abs(lhs - ip.inner(x, defl.apply_P_star(y))) / (ip.norm(x) * ip.norm(y)))
        inter = max(inter, _rel(defl.apply_P(A @ x), A @ defl.apply_P_star(x)))
        Mop = lambda v: M @ v
        Mi = lambda v: Minv @ v
        comm = max(comm, _rel(defl.apply_P_M(Minv @ x, Mop, Mi), Minv @ defl.apply_P(x)))
        ipM = ip.induced(Operator(N, Mop, apply_block=lambda B: M @ B))
        op = defl.deflated_operator(A, Minv)
        a, b_ = ipM.inner(op(x), y), ipM.inner(x, op(y))
        sa = max(sa, abs(a - b_) / (ipM.norm(op(x)) * ipM.norm(y) + 1e-300))
        b = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        xt = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        xc = defl.corrected_initial_guess(xt, b)
        res_direct = Minv @ (b - A @ xc)
        res_defl = defl.apply_P_M(Minv @ b - Minv @ (A @ xt), Mop, Mi)
        corr = max(corr, _rel(res_direct, res_defl))
    yield "deflation", "adjoint-identity", adj, 1e-12
    yield "deflation", "intertwining", inter, 1e-10
    yield "deflation", "commutation", comm, 1e-10
    yield "deflation", "deflated-self-adjointness", sa, 1e-10
    yield "deflation", "residual-correction", corr, 1e-10


def _check_ritz(rng):
    pencil = resid = 0.0
    for _ in range(5):
        N, d, n = 18, 2, 6
        A, ip, M, Minv = random_problem(rng, N)
        Mop = Operator(N, lambda v, M=M: M @ v, apply_block=lambda B, M=M: M @ B)
        U = orthonormalize(rng.standard_normal((N, d)), ip.induced(Mop))
        defl = Deflator(A, U, ip)
        b = rng.standard_normal(N)
        x0 = defl.corrected_initial_guess(np.zeros(N), b)
        _, rep, lz, B = minres_solve(A, b, Minv, ip, defl, x0, tol=1e-14, max_iter=n,
                                     store_basis=True, reorthogonalize=True)
        rs = ritz_pairs(lz, B, defl, Minv, ip)
        S = np.concatenate([lz.V[:, :lz.n], U], axis=1)
        G = S.T @ (ip.weights[:, None] * (M @ S))
        K = S.T @ (ip.weights[:, None] * (A @ S))
        ref = scipy.linalg.eigh(0.5 * (K + K.T), 0.5 * (G + G.T), eigvals_only=True)
        pencil = max(pencil, float(np.max(np.abs(np.sort(rs.values) - ref))))
        for j in range(len(rs)):
            w = rs.vectors([j])[:, 0]
            r = Minv @ (A @ w) - rs.values[j] * w
            direct = np.sqrt(r @ (ip.weights * (M @ r)))
            resid = max(resid, abs(rs.resnorms[j] - direct) / max(direct, 1e-12 * np.abs(rs.values).max()))
    yield "ritz", "pencil-equivalence", pencil, 1e-10
    yield "ritz", "residual-norm-formula", resid, 1e-8


def _check_recycler(rng):
    N = 30
    A, ip, M, Minv = random_problem(rng, N)
    Mop = Operator(N, lambda v: M @ v, apply_block=lambda B: M @ B)
    Miop = Operator(N, lambda v: Minv @ v, apply_block=lambda B: Minv @ B)
    Aop = Operator(N, lambda v: A @ v, apply_block=lambda B: A @ B)
    driver = RecyclingMinres(RecycleConfig(d_max=4, tol=1e-10, collect_timings=False), ip)
    mismatch = 0
    for _ in range(3):
        _, rep = driver.solve(SequenceItem(Aop, rng.standard_normal(N), Minv=Miop, M=Mop))
        mismatch += sum(abs(rep.counts[p][k] - rep.model[p][k])
                        for p in rep.model for k in rep.model[p])
    yield "recycler", "cost-model-counts", float(mismatch), 0.0


def _check_gl(rng):
    system = GLSystem(build_disk_mesh(5.0, 0.5), dipole_potential())
    n = system.n
    ortho = kern = sa = 0.0
    for _ in range(5):
        psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        S = system.residual(psi)
        scale = system.norm(psi) * system.norm(S)
        ortho = max(ortho, abs(system.ip.inner(1j * psi, S)) / scale)
        kern = max(kern, system.norm(system.jacobian_apply(psi, 1j * psi) - 1j * S)
                   / (system.norm(psi) + system.norm(S)))
        phi, chi = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
        a = system.ip.inner(system.jacobian_apply(psi, phi), chi)
        b = system.ip.inner(phi, system.jacobian_apply(psi, chi))
        sa = max(sa, abs(a - b) / (system.norm(system.jacobian_apply(psi, phi)) * system.norm(chi)))
    yield "ginzburg-landau", "orthogonality-of-residual", ortho, 1e-12
    yield "ginzburg-landau", "kernel-identity", kern, 1e-12
    yield "ginzburg-landau", "jacobian-self-adjointness", sa, 1e-12
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    chi = np.sin(system.mesh.points[:, 0]) * np.cos(0.5 * system.mesh.points[:, 1])
    gauged = system.gauge_transform(chi)
    s0 = system.norm(system.residual(psi))
    s1 = gauged.norm(gauged.residual(np.exp(1j * chi) * psi))
    yield "ginzburg-landau", "gauge-invariance", abs(s0 - s1) / s0, 1e-10
    M, Minv = build_preconditioner(system, psi)
    phi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    yield "ginzburg-landau", "preconditioner-inverse", _rel(Minv(M(phi)), phi), 1e-10


_SUITES = (_check_hilbert, _check_lanczos, _check_minres, _check_deflation, _check_ritz,
           _check_recycler, _check_gl)


def run_checks(seed=0, fault=None):
    """Run the whole battery; returns a list of :class:`CheckResult`."""
    results = []
    with inject_fault(fault):
        for k, suite in enumerate(_SUITES):
            rng = np.random.default_rng([seed, k])
            for module, name, violation, tol in suite(rng):
                results.append(CheckResult(module, name, float(violation), float(tol)))
    return results
