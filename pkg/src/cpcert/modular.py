"""Modular data of a faithful state on a finite-dimensional algebra.

With ``φ(x) = Tr(ρ x)`` and ``ρ`` the density of φ inside M, the modular
operator acts as conjugation by ``ρ``: ``σ_z(x) = ρ^{iz} x ρ^{-iz}``. The
vector ``Ω`` is ``ρ^{1/2}`` and ``J`` is the adjoint, so nothing is built on
a doubled space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import KrausChannel, algebra_density, as_state, is_phi_preserving
from .linalg import (
    DEFAULT_TOL,
    InvalidInputError,
    adjoint,
    hermitian_power,
    identity,
    opnorm,
)


@dataclass(frozen=True, eq=False)
class ModularData:
    """``(M, φ)`` with the Hermitian powers of ``ρ`` computed once."""

    model: object
    rho: np.ndarray = field(repr=False)
    sqrt_rho: np.ndarray = field(repr=False)
    inv_sqrt_rho: np.ndarray = field(repr=False)
    min_eig: float

    @classmethod
    def build(cls, model, phi, tol=DEFAULT_TOL):
        """Restrict φ to M and cache ``ρ^{±1/2}``.

        A density outside M is replaced by its conditional expectation onto
        M, which is the density of ``φ|_M``.
        """
        rho = algebra_density(model, as_state(phi, tol))
        rho = (rho + adjoint(rho)) / 2
        lmin = float(np.linalg.eigvalsh(rho)[0])
        if lmin <= tol.rank_tol:
            raise InvalidInputError(f"state is not faithful on M (min eigenvalue {lmin:.3e})")
        sq = hermitian_power(rho, 0.5, tol)
        return cls(model, rho, sq, hermitian_power(rho, -0.5, tol), lmin)

    @property
    def N(self):
        return self.rho.shape[0]

    def phi(self, x):
        return complex(np.trace(self.rho @ x))

    def power(self, w):
        return hermitian_power(self.rho, w)


def sigma(md, z, x):
    """``σ_z(x) = ρ^{iz} x ρ^{-iz}``."""
    z = complex(z)
    if z == 0:
        return np.asarray(x, dtype=complex)
    return md.power(1j * z) @ x @ md.power(-1j * z)


def kms_check(md, x, y):
    """``|φ(x*y) − φ(σ_{i/2}(y) σ_{−i/2}(x*))|``, both sides evaluated directly."""
    xs = adjoint(np.asarray(x, dtype=complex))
    lhs = md.phi(xs @ y)
    rhs = md.phi(sigma(md, 0.5j, y) @ sigma(md, -0.5j, xs))
    return float(abs(lhs - rhs))


def _require_in_M(md, v, tol):
    if not md.model.membership(v, tol=tol).is_member:
        raise InvalidInputError("tilde needs an inner Kraus operator (v must lie in M)")


def tilde_kraus(md, v, tol=DEFAULT_TOL):
    """``ṽ = ρ^{-1/2} v* ρ^{1/2} = σ_{i/2}(v*)``.

    This is the orientation under which the adjoint channel is unital and
    satisfies the modular duality; applying it twice returns ``v``.
    """
    v = np.asarray(v, dtype=complex)
    _require_in_M(md, v, tol)
    return md.inv_sqrt_rho @ adjoint(v) @ md.sqrt_rho


def adjoint_channel(md, tau, tol=DEFAULT_TOL):
    """The φ-adjoint ``τ̃`` with Kraus operators ``ṽ_k``."""
    if not tau.is_inner(tol):
        raise InvalidInputError("adjoint channel needs inner Kraus operators")
    ok, defect = is_phi_preserving(tau, md.rho, tol)
    if not ok:
        raise InvalidInputError(f"channel does not preserve the state (defect {defect:.3e})")
    tau.require_unital(tol)
    label = f"{tau.label}~" if tau.label else "adjoint"
    return KrausChannel(tau.algebra, tuple(tilde_kraus(md, v, tol) for v in tau.kraus), label)


def duality_defect(md, tau, tau_tilde):
    """Largest ``|φ(τ(x)σ_{−i/2}(y)) − φ(σ_{i/2}(x)τ̃(y))|`` over basis pairs."""
    worst = 0.0
    basis = md.model.basis_M
    left = [sigma(md, -0.5j, y) for y in basis]
    right = [tau_tilde(y) for y in basis]
    for x in basis:
        tx = tau(x)
        sx = sigma(md, 0.5j, x)
        for ly, ry in zip(left, right):
            worst = max(worst, abs(md.phi(tx @ ly) - md.phi(sx @ ry)))
    return float(worst)


def group_law_defect(md, z, w):
    """``max_x ‖σ_z(σ_w(x)) − σ_{z+w}(x)‖`` over ``basis_M``."""
    return max(
        opnorm(sigma(md, z, sigma(md, w, x)) - sigma(md, z + w, x)) for x in md.model.basis_M
    )


def is_trivial(md, tol=DEFAULT_TOL):
    """True when ρ is a multiple of the identity (σ is the identity map)."""
    return opnorm(md.rho - np.trace(md.rho).real / md.N * identity(md.N)) <= tol.residual_tol
