"""Finite-dimensional von Neumann algebras in block form.

``M = ⊕_b M_{n_b} ⊗ I_{m_b}`` acts on ``H = ⊕_b C^{n_b} ⊗ C^{m_b}``. Inside
block ``b`` the carrier index of ``e_i ⊗ f_j`` is ``offset_b + i*m_b + j``.
Bases are listed block by block; within a block the matrix units come in
row-major order. That ordering is part of the JSON contract.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    InvalidInputError,
    identity,
    nullspace,
    vectorize,
)


@dataclass(frozen=True)
class Block:
    dim: int
    multiplicity: int = 1

    def __post_init__(self):
        if int(self.dim) < 1 or int(self.multiplicity) < 1:
            raise InvalidInputError("block dim and multiplicity must be >= 1")

    @property
    def size(self):
        return self.dim * self.multiplicity


@dataclass(frozen=True)
class AlgebraSpec:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in self.blocks)
        if not blocks:
            raise InvalidInputError("algebra needs at least one block")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def full(cls, n):
        """The full matrix algebra ``M_n`` acting on ``C^n``."""
        return cls(((n, 1),))

    @property
    def carrier_dim(self):
        return sum(b.size for b in self.blocks)

    @property
    def reduced_dim(self):
        """Dimension of the multiplicity-free carrier ``⊕ C^{n_b}``."""
        return sum(b.dim for b in self.blocks)

    @property
    def offsets(self):
        out, pos = [], 0
        for b in self.blocks:
            out.append(pos)
            pos += b.size
        return out

    @property
    def is_full(self):
        """True for a single block of multiplicity one, i.e. ``M = B(H)``."""
        return len(self.blocks) == 1 and self.blocks[0].multiplicity == 1

    @property
    def multiplicity_free(self):
        return all(b.multiplicity == 1 for b in self.blocks)

    def to_json(self):
        return {"blocks": [{"dim": b.dim, "multiplicity": b.multiplicity} for b in self.blocks]}

    @classmethod
    def from_json(cls, obj):
        try:
            blocks = [(int(b["dim"]), int(b.get("multiplicity", 1))) for b in obj["blocks"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed algebra description: {exc}") from exc
        return cls(tuple(blocks))

    def __str__(self):
        return " ⊕ ".join(f"M{b.dim}⊗I{b.multiplicity}" for b in self.blocks)


def _unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


def embed(spec, block_elements):
    """Block-diagonal ``⊕_b x_b ⊗ I_{m_b}`` on the carrier space."""
    if len(block_elements) != len(spec.blocks):
        raise InvalidInputError("need one element per block")
    out = np.zeros((spec.carrier_dim, spec.carrier_dim), dtype=complex)
    for blk, off, x in zip(spec.blocks, spec.offsets, block_elements):
        x = np.asarray(x, dtype=complex)
        if x.shape != (blk.dim, blk.dim):
            raise InvalidInputError(f"block element has shape {x.shape}, expected {(blk.dim, blk.dim)}")
        out[off : off + blk.size, off : off + blk.size] = np.kron(x, identity(blk.multiplicity))
    return out


def embed_commutant(spec, block_elements):
    """Block-diagonal ``⊕_b I_{n_b} ⊗ y_b`` with ``y_b`` of size ``m_b``."""
    out = np.zeros((spec.carrier_dim, spec.carrier_dim), dtype=complex)
    for blk, off, y in zip(spec.blocks, spec.offsets, block_elements):
        y = np.asarray(y, dtype=complex)
        if y.shape != (blk.multiplicity, blk.multiplicity):
            raise InvalidInputError("commutant block element has the wrong shape")
        out[off : off + blk.size, off : off + blk.size] = np.kron(identity(blk.dim), y)
    return out


def block_parts(spec, x):
    """Inverse of ``embed`` for ``x`` in M: the list of ``n_b × n_b`` parts.

    Off-block entries and the non-identity part on the multiplicity leg
    are discarded (this is the trace-preserving conditional expectation
    expressed blockwise).
    """
    parts = []
    for blk, off in zip(spec.blocks, spec.offsets):
        sub = np.asarray(x)[off : off + blk.size, off : off + blk.size]
        t = sub.reshape(blk.dim, blk.multiplicity, blk.dim, blk.multiplicity)
        parts.append(np.einsum("ajbj->ab", t) / blk.multiplicity)
    return parts


class Which(str, enum.Enum):
    M = "M"
    COMMUTANT = "commutant"
    CENTER = "center"


@dataclass(frozen=True)
class MembershipResult:
    is_member: bool
    distance: float


@dataclass(frozen=True, eq=False)
class AlgebraModel:
    """An ``AlgebraSpec`` together with trace-orthonormal bases."""

    spec: AlgebraSpec
    basis_M: tuple = field(repr=False)
    basis_comm: tuple = field(repr=False)
    basis_center: tuple = field(repr=False)
    block_projections: tuple = field(repr=False)

    @property
    def N(self):
        return self.spec.carrier_dim

    def basis(self, which):
        which = Which(which)
        if which is Which.M:
            return self.basis_M
        if which is Which.COMMUTANT:
            return self.basis_comm
        return self.basis_center

    @cached_property
    def _frames(self):
        # rows = conj(vec(B)) so frame @ vec(x) gives Tr(B* x)
        return {
            w: np.array([np.conj(vectorize(b)) for b in self.basis(w)])
            for w in Which
        }

    def frame(self, which):
        """Matrix whose rows are ``conj(vec(B))`` over the chosen basis."""
        return self._frames[Which(which)]

    def coefficients(self, x, which=Which.M):
        return self.frame(which) @ vectorize(x)

    def project(self, x, which=Which.M):
        """Trace-orthogonal projection of ``x`` onto the chosen span."""
        c = self.coefficients(x, which)
        return sum((ci * b for ci, b in zip(c, self.basis(which))), np.zeros((self.N, self.N), complex))

    def membership(self, x, which=Which.M, tol=DEFAULT_TOL):
        return membership(self, x, which, tol)

    def embed(self, block_elements):
        return embed(self.spec, block_elements)

    def random_element(self, rng, which=Which.M):
        """Element of the chosen span with Gaussian complex coefficients."""
        basis = self.basis(which)
        c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
        return sum(ci * b for ci, b in zip(c, basis))

    def random_unitary(self, rng):
        """Haar-random unitary of M (independent Haar unitary per block)."""
        from .linalg import haar_unitary

        return embed(self.spec, [haar_unitary(b.dim, rng) for b in self.spec.blocks])


def build(spec):
    """Construct bases of M, its commutant and its center."""
    if not isinstance(spec, AlgebraSpec):
        spec = AlgebraSpec(tuple(spec))
    N = spec.carrier_dim
    basis_M, basis_comm, basis_center, projs = [], [], [], []
    for b, (blk, off) in enumerate(zip(spec.blocks, spec.offsets)):
        n, m = blk.dim, blk.multiplicity
        zeros_M = [np.zeros((c.dim, c.dim)) for c in spec.blocks]
        zeros_C = [np.zeros((c.multiplicity, c.multiplicity)) for c in spec.blocks]
        for i in range(n):
            for j in range(n):
                parts = list(zeros_M)
                parts[b] = _unit(n, i, j) / np.sqrt(m)
                basis_M.append(embed(spec, parts))
        for i in range(m):
            for j in range(m):
                parts = list(zeros_C)
                parts[b] = _unit(m, i, j) / np.sqrt(n)
                basis_comm.append(embed_commutant(spec, parts))
        p = np.zeros((N, N), dtype=complex)
        p[off : off + blk.size, off : off + blk.size] = identity(blk.size)
        projs.append(p)
        basis_center.append(p / np.sqrt(blk.size))
    return AlgebraModel(spec, tuple(basis_M), tuple(basis_comm), tuple(basis_center), tuple(projs))


def membership(model, x, which=Which.M, tol=DEFAULT_TOL):
    """Distance from ``x`` to the chosen span and the membership verdict."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (model.N, model.N):
        raise InvalidInputError(f"expected {model.N}x{model.N} matrix, got {x.shape}")
    dist = float(np.linalg.norm(x - model.project(x, which)))
    scale = max(1.0, float(np.linalg.norm(x)))
    return MembershipResult(dist <= tol.residual_tol * scale, dist)


def commutant_basis(generators, tol=DEFAULT_TOL):
    """Numerical commutant of a set of ``N × N`` matrices.

    Solves ``[X, g] = 0`` for every generator; returns a trace-orthonormal
    basis. Independent of the block bookkeeping in ``build``.
    """
    generators = [np.asarray(g, dtype=complex) for g in generators]
    N = generators[0].shape[0]
    eye = identity(N)
    # vec(X g - g X) = (I ⊗ gᵀ - g ⊗ I) vec(X) under row stacking
    rows = [np.kron(eye, g.T) - np.kron(g, eye) for g in generators]
    scale = 2 * max(float(np.linalg.norm(g, 2)) for g in generators)
    ker = nullspace(np.vstack(rows), tol, scale)
    return [ker[:, k].reshape(N, N) for k in range(ker.shape[1])]


def span_contains(basis, mats, tol=DEFAULT_TOL):
    """Largest distance from any of ``mats`` to span(``basis``)."""
    frame = np.array([vectorize(b) for b in basis]).T
    q, _ = np.linalg.qr(frame)
    worst = 0.0
    for m in mats:
        v = vectorize(m)
        worst = max(worst, float(np.linalg.norm(v - q @ (np.conj(q.T) @ v))))
    return worst
