"""Newton's method for the discrete Ginzburg--Landau equations.

Every Newton step solves ``J(psi_k) delta = -S(psi_k)`` with (recycling)
MINRES in the real inner product, preconditioned by ``K + 2|psi_k|^2 + shift``.
The near-null direction ``i psi_k`` can be deflated explicitly, and Ritz
vectors can be carried from one step to the next.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import ConfigError, DivergenceError, NumericsError
from ..recycler import ItemReport, RecycleConfig, RecyclingMinres, SequenceItem
from ..ritz import STRATEGIES
from .system import GLSystem, build_preconditioner

__all__ = ["DeflationMode", "NewtonConfig", "NewtonReport", "newton_solve", "parse_deflation"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeflationMode:
    """``aux`` deflates ``i psi``; ``d > 0`` recycles ``d`` Ritz vectors."""
    aux: bool = False
    d: int = 0
    strategy: str = "smallest_magnitude"

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError("number of recycled Ritz vectors must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown Ritz selection strategy {self.strategy!r}")

    @property
    def label(self):
        if self.d == 0:
            return "aux" if self.aux else "none"
        base = "ritz+aux" if self.aux else "ritz"
        return f"{base}:{self.d}:{self.strategy}"


def parse_deflation(text):
    """Parse ``none``, ``aux``, ``ritz:d:strategy`` or ``ritz+aux:d:strategy``."""
    parts = text.strip().split(":")
    kind = parts[0]
    if kind in ("none", "aux") and len(parts) == 1:
        return DeflationMode(aux=(kind == "aux"))
    if kind in ("ritz", "ritz+aux") and len(parts) in (2, 3):
        try:
            d = int(parts[1])
        except ValueError:
            raise ConfigError(f"invalid number of Ritz vectors in {text!r}") from None
        if d < 1:
            raise ConfigError(f"ritz deflation needs d >= 1, got {d}")
        strategy = parts[2] if len(parts) == 3 else "smallest_magnitude"
        return DeflationMode(aux=(kind == "ritz+aux"), d=d, strategy=strategy)
    raise ConfigError(f"cannot parse deflation mode {text!r}")


@dataclass(frozen=True)
class NewtonConfig:
    """Options for :func:`newton_solve`.

    ``forcing`` enables Eisenstat--Walker tolerances
    ``eta_k = gamma (||S_k|| / ||S_{k-1}||)**exponent`` as ``(gamma, exponent)``;
    the linear tolerance never drops below ``linear_tol`` then.
    """
    tol: float = 1e-10
    max_steps: int = 50
    linear_tol: float = 1e-10
    linear_max_iter: int = 5000
    deflation: DeflationMode = DeflationMode()
    shift: float = 1e-2
    precondition: bool = True
    divergence_threshold: float = 1e8
    forcing: Optional[tuple] = None
    debug: bool = False
    reorthogonalize: bool = False


@dataclass
class NewtonReport:
    residuals: List[float]
    linear: List[ItemReport]
    converged: bool
    psi: np.ndarray
    wall_time: float = 0.0
    debug_checks: List[dict] = field(default_factory=list)
    #: iterate at which the k-th Jacobian system was formed
    states: List[np.ndarray] = field(default_factory=list)

    @property
    def steps(self):
        return len(self.residuals) - 1

    @property
    def minres_iterations(self):
        return [rep.solve.iterations for rep in self.linear]


def newton_solve(system: GLSystem, psi0, cfg: NewtonConfig = NewtonConfig(),
                 callback=None) -> NewtonReport:
    """Plain Newton iteration ``psi_{k+1} = psi_k + delta``.

    Stops once ``||S(psi_k)|| < cfg.tol`` or after ``cfg.max_steps`` steps.
    Unconverged linear solves are recorded and the iteration continues with
    the returned update.

    :raises DivergenceError: if ``||S||`` exceeds ``cfg.divergence_threshold``.
    """
    psi = np.array(psi0, dtype=complex)
    if not np.all(np.isfinite(psi)):
        raise NumericsError("initial state is not finite")
    mode = cfg.deflation
    driver = RecyclingMinres(
        RecycleConfig(d_max=mode.d, strategy=mode.strategy, tol=cfg.linear_tol,
                      max_iter=cfg.linear_max_iter, reorthogonalize=cfg.reorthogonalize),
        system.ip)
    t0 = time.perf_counter()
    S = system.residual(psi)
    res = [system.norm(S)]
    linear = []
    checks = []
    states = []
    log.info("Newton step 0: ||S|| = %.3e", res[0])
    while res[-1] >= cfg.tol and len(linear) < cfg.max_steps:
        states.append(psi)
        J = system.jacobian(psi)
        if cfg.debug:
            checks.append(_debug_identities(system, psi, S))
        eta = cfg.linear_tol
        if cfg.forcing is not None and len(res) > 1:
            gamma, exponent = cfg.forcing
            eta = max(cfg.linear_tol, min(0.5, gamma * (res[-1] / res[-2]) ** exponent))
        if eta != driver.cfg.tol:
            driver.cfg = RecycleConfig(d_max=mode.d, strategy=mode.strategy, tol=eta,
                                       max_iter=cfg.linear_max_iter,
                                       reorthogonalize=cfg.reorthogonalize)
        if cfg.precondition:
            M, Minv = build_preconditioner(system, psi, cfg.shift)
        else:
            M = Minv = None
        Y = (1j * psi)[:, None] if mode.aux else None
        item = SequenceItem(J, -S, Minv=Minv, M=M, Y=Y)
        delta, rep = driver.solve(item)
        linear.append(rep)
        if not rep.solve.converged:
            log.info("linear solve %d did not converge (relres %.2e)",
                     len(linear), rep.solve.resnorms[-1])
        psi = psi + delta
        S = system.residual(psi)
        res.append(system.norm(S))
        log.info("Newton step %d: ||S|| = %.3e, MINRES iterations %d",
                 len(linear), res[-1], rep.solve.iterations)
        if callback is not None:
            callback(len(linear), psi, res[-1], rep)
        if not np.isfinite(res[-1]) or res[-1] > cfg.divergence_threshold:
            raise DivergenceError(f"Newton diverged at step {len(linear)}: ||S|| = {res[-1]:.3e}")
    return NewtonReport(residuals=res, linear=linear, converged=res[-1] < cfg.tol, psi=psi,
                        wall_time=time.perf_counter() - t0, debug_checks=checks,
                        states=states)


def _debug_identities(system, psi, S):
    ip = system.ip
    ipsi = 1j * psi
    # S is at rounding level near convergence; scale by the terms it is made of
    size_S = system.norm(system.apply_K(psi)) + system.norm(psi * (1.0 - np.abs(psi) ** 2))
    scale = max(system.norm(psi) * size_S, 1e-300)
    ortho = abs(ip.inner(ipsi, S)) / scale
    kernel = (system.norm(system.jacobian_apply(psi, ipsi) - 1j * S)
              / max(system.norm(psi) + system.norm(S), 1e-300))
    return {"orthogonality": ortho, "kernel": kernel}
