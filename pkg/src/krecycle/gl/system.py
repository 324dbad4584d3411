"""Finite-volume Ginzburg--Landau operators.

With control volumes ``D = diag(|Omega_k|)``, edge coefficients ``alpha`` and
link variables ``U_ij = exp(-i int_{x_i}^{x_j} A)`` the discrete kinetic
energy operator is ``K = D^{-1} Khat`` where

    (Khat phi)_i = sum_{j ~ i} alpha_ij (phi_i - U_ij phi_j)

is Hermitian positive semidefinite.  The residual and its Jacobian are

    S(psi)       = K psi - psi (1 - |psi|^2)
    J(psi) phi   = (K - 1 + 2 |psi|^2) phi + psi^2 conj(phi),

and ``J(psi)`` is self-adjoint in ``<psi, phi>_R = Re sum_k |Omega_k| conj(psi_k) phi_k``.
"""
import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ..errors import DimensionError, PreconditionerError
from ..hilbert import InnerProduct, Operator

__all__ = [
    "dipole_potential",
    "link_variables",
    "GLSystem",
    "real_inner_product",
    "build_preconditioner",
]


def dipole_potential(moment=(0.0, 0.0, 1.0), location=(0.0, 0.0, 5.0)):
    """Vector potential ``A(x) = m x (x - x0) / |x - x0|^3`` of a magnetic dipole.

    Points of a planar mesh are embedded at ``z = 0`` and the in-plane
    components are returned.
    """
    m = np.asarray(moment, dtype=float)
    x0 = np.asarray(location, dtype=float)

    def potential(x):
        x = np.atleast_2d(x)
        dim = x.shape[1]
        X = np.zeros((x.shape[0], 3))
        X[:, :dim] = x
        r = X - x0
        dist3 = np.linalg.norm(r, axis=1) ** 3
        out = np.cross(m, r) / dist3[:, None]
        return out[:, :dim]

    return potential


def link_variables(mesh, potential):
    """``U_ij = exp(-i (x_j - x_i) . A(midpoint))`` for every mesh edge.

    The midpoint rule is exact for affine potentials.  ``potential=None``
    means ``A = 0``.
    """
    if potential is None:
        return np.ones(len(mesh.edges), dtype=complex)
    A = np.asarray(potential(mesh.edge_midpoints()), dtype=float)
    if A.shape != (len(mesh.edges), mesh.dim):
        raise DimensionError(f"potential returned shape {A.shape}")
    flux = np.einsum("ek,ek->e", mesh.edge_vectors(), A)
    return np.exp(-1j * flux)


def real_inner_product(mesh):
    """``<psi, phi>_R = Re sum_k |Omega_k| conj(psi_k) phi_k``."""
    return InnerProduct(weights=mesh.control_volumes, real=True)


class GLSystem:
    """Discrete Ginzburg--Landau problem on a mesh.

    :param mesh: :class:`~krecycle.gl.mesh.Mesh`.
    :param potential: magnetic vector potential, callable on ``(k, dim)``
      arrays; ignored when ``links`` is given.
    :param links: per-edge link variables (unit modulus).
    """

    def __init__(self, mesh, potential=None, links=None):
        self.mesh = mesh
        if links is None:
            links = link_variables(mesh, potential)
        links = np.asarray(links, dtype=complex)
        if links.shape != (len(mesh.edges),):
            raise DimensionError(f"need one link per edge, got shape {links.shape}")
        self.links = links
        self.n = mesh.n_nodes
        self.volumes = mesh.control_volumes
        self.ip = real_inner_product(mesh)
        i, j = mesh.edges[:, 0], mesh.edges[:, 1]
        a = mesh.alpha
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([a, a, -a * links, -a * np.conj(links)]).astype(complex)
        self.Khat = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def gauge_transform(self, chi):
        """System for the gauge-transformed state ``exp(i chi) psi``."""
        chi = np.asarray(chi, dtype=float)
        i, j = self.mesh.edges[:, 0], self.mesh.edges[:, 1]
        return GLSystem(self.mesh, links=self.links * np.exp(1j * (chi[i] - chi[j])))

    def _check(self, phi):
        phi = np.asarray(phi)
        if phi.shape[0] != self.n:
            raise DimensionError(f"state has length {phi.shape[0]}, mesh has {self.n} nodes")
        return phi

    def apply_K(self, phi):
        phi = self._check(phi)
        out = self.Khat @ phi
        if phi.ndim == 2:
            return out / self.volumes[:, None]
        return out / self.volumes

    def residual(self, psi):
        psi = self._check(psi)
        return self.apply_K(psi) - psi * (1.0 - np.abs(psi) ** 2)

    residual_S = residual

    def jacobian_apply(self, psi, phi):
        psi = self._check(psi)
        phi = self._check(phi)
        if phi.ndim == 2:
            diag = (2.0 * np.abs(psi) ** 2 - 1.0)[:, None]
            return self.apply_K(phi) + diag * phi + (psi ** 2)[:, None] * np.conj(phi)
        return (self.apply_K(phi) + (2.0 * np.abs(psi) ** 2 - 1.0) * phi
                + psi ** 2 * np.conj(phi))

    def jacobian(self, psi):
        """The Jacobian at ``psi`` as a counting :class:`~krecycle.hilbert.Operator`."""
        psi = np.array(psi, dtype=complex)
        return Operator(self.n, lambda phi: self.jacobian_apply(psi, phi),
                        apply_block=lambda P: self.jacobian_apply(psi, P),
                        self_adjoint=True, name="J")

    def norm(self, phi):
        """Discrete norm ``sqrt(<phi, phi>_R)``."""
        return self.ip.norm(phi)

    def energy_density(self, psi):
        return np.abs(psi) ** 2


def build_preconditioner(system: GLSystem, psi, shift=1e-2):
    """The pair ``(M, M^{-1})`` for ``M = K + 2 |psi|^2 + shift``.

    ``M = D^{-1} H`` with the Hermitian positive-definite sparse matrix
    ``H = Khat + D diag(2 |psi|^2 + shift)``; the inverse uses an exact sparse
    LU factorization of ``H``.  Both are self-adjoint in ``<., .>_R``.
    """
    psi = np.asarray(psi)
    if not shift > 0:
        raise PreconditionerError("shift must be positive")
    vol = system.volumes
    diag = 2.0 * np.abs(psi) ** 2 + shift
    H = (system.Khat + scipy.sparse.diags(vol * diag)).tocsc()
    try:
        lu = scipy.sparse.linalg.splu(H)
    except RuntimeError as exc:
        raise PreconditionerError(f"factorization failed: {exc}") from None

    def M_apply(phi):
        if phi.ndim == 2:
            return system.apply_K(phi) + diag[:, None] * phi
        return system.apply_K(phi) + diag * phi

    def Minv_apply(phi):
        rhs = vol[:, None] * phi if phi.ndim == 2 else vol * phi
        out = lu.solve(np.asarray(rhs, dtype=complex))
        if not np.all(np.isfinite(out)):
            raise PreconditionerError("preconditioner solve produced non-finite values")
        return out

    M = Operator(system.n, M_apply, apply_block=M_apply, self_adjoint=True,
                 positive_definite=True, name="M")
    Minv = Operator(system.n, Minv_apply, apply_block=Minv_apply, self_adjoint=True,
                    positive_definite=True, name="Minv")
    return M, Minv
