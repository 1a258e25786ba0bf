"""Unital CP maps in the Heisenberg picture: ``τ(x) = Σ_k v_k x v_k*``.

The Stinespring isometry is stored as the stacked column
``V* = Σ_k v_k* ⊗ e_k : H → H ⊗ C^d``; row ``h*d + k`` of ``V*`` is row
``h`` of ``v_k*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import ceil

import numpy as np

from .algebra import AlgebraModel, AlgebraSpec, Which, build
from .linalg import (
    DEFAULT_TOL,
    IndeterminateError,
    InvalidInputError,
    adjoint,
    as_matrix,
    devectorize,
    fix_phase,
    haar_isometry,
    haar_unitary,
    hermitian_power,
    identity,
    nullspace_report,
    opnorm,
    partial_trace,
    psd_check,
    range_basis,
    rank_decision,
    vectorize,
)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A CP map on the algebra's carrier space given by Kraus operators.

    Unitality is not enforced at construction (dominated maps used for
    Radon–Nikodym checks are not unital); call ``require_unital``.
    """

    algebra: AlgebraModel
    kraus: tuple = field(repr=False)
    label: str = ""

    def __post_init__(self):
        if isinstance(self.algebra, AlgebraSpec):
            object.__setattr__(self, "algebra", build(self.algebra))
        ks = tuple(as_matrix(k, "Kraus operator") for k in self.kraus)
        if not ks:
            raise InvalidInputError("a channel needs at least one Kraus operator")
        N = self.algebra.N
        for k in ks:
            if k.shape != (N, N):
                raise InvalidInputError(f"Kraus operator has shape {k.shape}, expected {(N, N)}")
        object.__setattr__(self, "kraus", ks)

    @property
    def d(self):
        return len(self.kraus)

    @property
    def N(self):
        return self.algebra.N

    @cached_property
    def stack(self):
        return np.array(self.kraus)

    @cached_property
    def vstar(self):
        """The stacked column ``V*`` as an ``(N*d) × N`` matrix."""
        return np.stack([adjoint(v) for v in self.kraus], axis=1).reshape(self.N * self.d, self.N)

    @classmethod
    def from_vstar(cls, algebra, vstar, label=""):
        N = algebra.N
        d = vstar.shape[0] // N
        t = np.asarray(vstar).reshape(N, d, N)
        return cls(algebra, tuple(adjoint(t[:, k, :]) for k in range(d)), label)

    def __call__(self, x):
        return apply(self, x)

    def unitality_defect(self):
        s = np.einsum("kab,kcb->ac", self.stack, np.conj(self.stack))
        return opnorm(s - identity(self.N))

    def require_unital(self, tol=DEFAULT_TOL):
        defect = self.unitality_defect()
        if defect > tol.residual_tol:
            raise InvalidInputError(f"channel is not unital (defect {defect:.3e})")
        return defect

    def is_inner(self, tol=DEFAULT_TOL):
        return all(self.algebra.membership(v, Which.M, tol).is_member for v in self.kraus)

    def relabel(self, label):
        return KrausChannel(self.algebra, self.kraus, label)


def apply(tau, x):
    x = as_matrix(x)
    if x.shape != (tau.N, tau.N):
        raise InvalidInputError(f"expected {tau.N}x{tau.N} input, got {x.shape}")
    return np.einsum("kab,bc,kdc->ad", tau.stack, x, np.conj(tau.stack))


def map_table(tau):
    """Values of ``tau`` on ``basis_M`` as an array ``(dim M, N, N)``."""
    return np.array([apply(tau, b) for b in tau.algebra.basis_M])


def table_distance(t1, t2):
    """Largest Frobenius distance between two tables of values."""
    return float(np.max(np.linalg.norm(np.asarray(t1) - np.asarray(t2), axis=(1, 2))))


def channel_distance(tau, eta):
    """Max over ``basis_M`` of the Frobenius distance of the outputs."""
    return table_distance(map_table(tau), map_table(eta))


def maps_into_algebra_defect(tau):
    """How far ``tau(basis_M)`` sticks out of M."""
    model = tau.algebra
    return max(float(np.linalg.norm(y - model.project(y))) for y in map_table(tau))


def conjugate(tau, u, w=None, label=None):
    """The map ``x ↦ u τ(w x w*) u*`` with Kraus ``u v_k w``.

    ``w`` must normalize M for the result to be a map on M; unitaries of M
    itself always do.
    """
    w = identity(tau.N) if w is None else w
    return KrausChannel(tau.algebra, tuple(u @ v @ w for v in tau.kraus), label or tau.label)


def mixture(channels, weights, label="mixture"):
    """Convex combination ``Σ p_i τ_i`` with concatenated Kraus families."""
    ks = []
    for tau, p in zip(channels, weights):
        ks.extend(np.sqrt(p) * v for v in tau.kraus)
    return KrausChannel(channels[0].algebra, tuple(ks), label)


# -- Choi matrices ---------------------------------------------------------


@dataclass(frozen=True)
class ChoiMatrix:
    """``C = Σ_ij τ(E_ij) ⊗ E_ij = Σ_k vec(v_k) vec(v_k)*`` (row stacking)."""

    matrix: np.ndarray
    convention: str = "row-stacking: sum_ij tau(E_ij) (x) E_ij"


def to_choi(tau):
    """Choi matrix of the Kraus extension of ``tau`` to all of B(H)."""
    vecs = np.array([vectorize(v) for v in tau.kraus]).T
    return ChoiMatrix(vecs @ adjoint(vecs))


def from_choi(choi, algebra, tol=DEFAULT_TOL, label=""):
    """Kraus family with exactly rank(C) members, eigenvalue-descending."""
    c = choi.matrix if isinstance(choi, ChoiMatrix) else as_matrix(choi)
    if isinstance(algebra, AlgebraSpec):
        algebra = build(algebra)
    N = algebra.N
    if c.shape != (N * N, N * N):
        raise InvalidInputError(f"Choi matrix must be {N * N}x{N * N}")
    chk = psd_check(c, tol)
    if not chk.ok:
        if chk.verdict.value == "indeterminate":
            raise IndeterminateError("Choi positivity is indeterminate", [chk.min_eig])
        raise InvalidInputError(f"Choi matrix is not PSD (min eigenvalue {chk.min_eig:.3e})")
    evals, vecs = np.linalg.eigh((c + adjoint(c)) / 2)
    evals, vecs = evals[::-1], vecs[:, ::-1]
    lam = np.clip(evals, 0.0, None)
    rank, indeterminate = rank_decision(lam, tol)
    if indeterminate:
        raise IndeterminateError("Choi rank is indeterminate", lam)
    ks = tuple(np.sqrt(lam[k]) * devectorize(fix_phase(vecs[:, k]), N, N) for k in range(rank))
    return KrausChannel(algebra, ks, label)


def restricted_choi(model, table):
    """Blockwise Choi matrices of a map known only on ``basis_M``.

    For block ``b`` returns ``Σ_ij Φ(ι_b(E_ij)) ⊗ E_ij`` where ``ι_b``
    embeds a matrix unit of ``M_{n_b}``. A map on M is completely positive
    iff every block matrix is PSD.
    """
    out, pos = [], 0
    for blk in model.spec.blocks:
        n, m = blk.dim, blk.multiplicity
        c = np.zeros((model.N * n, model.N * n), dtype=complex)
        for i in range(n):
            for j in range(n):
                val = np.sqrt(m) * table[pos + i * n + j]
                c += np.kron(val, _unit(n, i, j))
        out.append(c)
        pos += n * n
    return out


def _unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


# -- Stinespring data ------------------------------------------------------


@dataclass(frozen=True)
class StinespringData:
    d: int
    support_projection: np.ndarray = field(repr=False)
    index: int
    block_ranks: tuple
    spectrum: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def rank(self):
        return int(round(np.real(np.trace(self.support_projection))))

    @property
    def balanced(self):
        """True when every block fills ``m_b * index`` Kraus directions."""
        return all(r == m * self.index for r, m in self.block_ranks)


def _block_rows(spec, d):
    for blk, off in zip(spec.blocks, spec.offsets):
        yield blk, slice(off * d, (off + blk.size) * d)


def stinespring_support(tau, tol=DEFAULT_TOL):
    """Projection onto the cyclic subspace ``span{(x ⊗ I_d) V* ζ}``.

    The index is ``max_b ceil(r_b / m_b)`` where ``r_b`` is the rank of the
    multiplicity-space part of the projection on block ``b``.
    """
    model, d, N = tau.algebra, tau.d, tau.N
    eye_d = identity(d)
    span = np.hstack([np.kron(x, eye_d) @ tau.vstar for x in model.basis_M])
    q, s = range_basis(span, tol)
    P = q @ adjoint(q)
    block_ranks, residual = [], 0.0
    for blk, rows in _block_rows(model.spec, d):
        pb = P[rows, rows]
        qb = partial_trace(pb, (blk.dim, blk.multiplicity * d), keep=1) / blk.dim
        residual = max(residual, opnorm(pb - np.kron(identity(blk.dim), qb)))
        ev = np.clip(np.linalg.eigvalsh((qb + adjoint(qb)) / 2)[::-1], 0.0, None)
        r, indeterminate = rank_decision(ev, tol, scale=1.0)
        if indeterminate:
            raise IndeterminateError("block multiplicity rank is indeterminate", ev)
        block_ranks.append((r, blk.multiplicity))
    index = max(ceil(r / m) for r, m in block_ranks)
    return StinespringData(d, P, index, tuple(block_ranks), s, residual)


def _block_kraus_frame(vstar_block, n, m, d, inner, tol):
    """Orthonormal frame of the block's multiplicity ⊗ Kraus directions.

    Returns ``(frame, structured)``; with ``structured`` the frame lives in
    ``C^d`` only and acts as ``I_m ⊗ frame``.
    """
    N = vstar_block.shape[1]
    t = vstar_block.reshape(n, m, d, N)
    if inner:
        a = np.transpose(t, (2, 0, 1, 3)).reshape(d, n * m * N)
    else:
        a = np.transpose(t, (1, 2, 0, 3)).reshape(m * d, n * N)
    u, _ = range_basis(a, tol)
    frame = np.zeros_like(u)
    for i in range(u.shape[1]):
        frame[:, i] = fix_phase(u[:, i])
    return frame, inner


def minimal_kraus(tau, tol=DEFAULT_TOL, stinespring=None):
    """Kraus family of cardinality ``index(τ)`` defining the same map on M.

    Built blockwise from the cyclic subspace: an isometry carries the
    block's occupied multiplicity ⊗ Kraus directions into ``C^{m_b} ⊗
    C^{index}``. Inner families (all ``v_k`` in M) stay inner.
    """
    sd = stinespring or stinespring_support(tau, tol)
    model, d, N = tau.algebra, tau.d, tau.N
    D = sd.index
    inner = tau.is_inner(tol)
    new = np.zeros((N * D, N), dtype=complex)
    for (blk, rows), (r, m) in zip(_block_rows(model.spec, d), sd.block_ranks):
        n = blk.dim
        frame, structured = _block_kraus_frame(tau.vstar[rows], n, m, d, inner, tol)
        if structured:
            if frame.shape[1] * m != r:
                raise IndeterminateError("inner block rank disagrees with the support projection")
            t = np.zeros((D, d), dtype=complex)
            t[: frame.shape[1]] = adjoint(frame)
            T = np.kron(identity(m), t)
        else:
            if frame.shape[1] != r:
                raise IndeterminateError("block rank disagrees with the support projection")
            T = np.zeros((m * D, m * d), dtype=complex)
            T[:r] = adjoint(frame)
        out_rows = slice(rows.start // d * D, rows.stop // d * D)
        new[out_rows] = np.kron(identity(n), T) @ tau.vstar[rows]
    return KrausChannel.from_vstar(model, new, tau.label)


def kraus_comm_kernel_report(tau, tol=DEFAULT_TOL):
    """Kernel of ``(c_α) ↦ Σ_α c_α v_α*`` over ``(M′)^d`` without raising."""
    comm = tau.algebra.basis_comm
    cols = [vectorize(c @ adjoint(v)) for v in tau.kraus for c in comm]
    res = nullspace_report(np.array(cols).T, tol)
    L = len(comm)
    basis = []
    for k in range(res.dim):
        a = res.basis[:, k].reshape(tau.d, L)
        basis.append(tuple(sum(a[al, l] * comm[l] for l in range(L)) for al in range(tau.d)))
    return basis, res


def kraus_comm_kernel(tau, tol=DEFAULT_TOL):
    """Basis of ``{c ∈ (M′)^d : Σ_α c_α v_α* = 0}`` as tuples of matrices."""
    basis, res = kraus_comm_kernel_report(tau, tol)
    if res.indeterminate:
        raise IndeterminateError("commutant kernel dimension is indeterminate", res.spectrum)
    return basis


# -- states ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityState:
    rho: np.ndarray = field(repr=False)
    faithful: bool = True

    @classmethod
    def from_matrix(cls, rho, tol=DEFAULT_TOL):
        rho = as_matrix(rho, "density")
        if rho.shape[0] != rho.shape[1]:
            raise InvalidInputError("density must be square")
        chk = psd_check(rho, tol)
        if chk.asymmetry > tol.residual_tol * max(1.0, chk.max_eig):
            raise InvalidInputError("density is not Hermitian")
        if not chk.ok:
            raise InvalidInputError(f"density is not PSD (min eigenvalue {chk.min_eig:.3e})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > max(tol.residual_tol, 1e-12) * rho.shape[0]:
            raise InvalidInputError(f"density has trace {tr}, expected 1")
        rho = (rho + adjoint(rho)) / 2
        return cls(rho, bool(chk.min_eig > tol.rank_tol))

    @property
    def N(self):
        return self.rho.shape[0]

    def expect(self, x):
        return complex(np.trace(self.rho @ x))


def as_state(phi, tol=DEFAULT_TOL):
    if isinstance(phi, DensityState):
        return phi
    return DensityState.from_matrix(phi, tol)


def algebra_density(model, phi):
    """Density of ``φ|_M`` inside M: the trace-preserving conditional expectation."""
    rho = as_state(phi).rho
    return model.project(rho)


def is_phi_preserving(tau, phi, tol=DEFAULT_TOL):
    """``(ok, defect)`` for ``Tr(ρ τ(x)) = Tr(ρ x)`` on ``basis_M``."""
    rho = as_state(phi, tol).rho
    if rho.shape != (tau.N, tau.N):
        raise InvalidInputError("state and channel act on different spaces")
    defect = max(
        abs(np.trace(rho @ (apply(tau, x) - x))) for x in tau.algebra.basis_M
    )
    return bool(defect <= tol.residual_tol), float(defect)


# -- random generation -----------------------------------------------------


def random_channel(spec, d, seed=None, label=None):
    """Unital channel from a Haar-random isometry ``V*: H → H ⊗ C^d``."""
    model = spec if isinstance(spec, AlgebraModel) else build(spec)
    if d < 1:
        raise InvalidInputError("Kraus count must be >= 1")
    rng = _rng(seed)
    vstar = haar_isometry(model.N * d, model.N, rng)
    return KrausChannel.from_vstar(model, vstar, label or f"random(d={d})")


def random_state(spec, seed=None, floor=0.1):
    """Random faithful density in M, mixed with ``floor`` of the tracial state."""
    model = spec if isinstance(spec, AlgebraModel) else build(spec)
    rng = _rng(seed)
    parts = []
    for blk in model.spec.blocks:
        g = rng.standard_normal((blk.dim, blk.dim)) + 1j * rng.standard_normal((blk.dim, blk.dim))
        parts.append(g @ adjoint(g))
    w = model.embed(parts)
    w = w / np.trace(w).real
    rho = (1 - floor) * w + floor * identity(model.N) / model.N
    return DensityState.from_matrix((rho + adjoint(rho)) / 2)


def _commuting_unitary(sigma, rng, gap=1e-9):
    """Haar unitary inside each eigenspace cluster of Hermitian ``sigma``."""
    evals, q = np.linalg.eigh(sigma)
    u = np.zeros_like(q)
    start = 0
    n = len(evals)
    while start < n:
        stop = start + 1
        while stop < n and evals[stop] - evals[stop - 1] <= gap * max(1.0, abs(evals[-1])):
            stop += 1
        u[start:stop, start:stop] = haar_unitary(stop - start, rng)
        start = stop
    return q @ u @ adjoint(q)


def random_phi_channel(spec, phi, d, seed=None, label=None):
    """Mixture ``Σ p_k u_k · u_k*`` of conjugations by unitaries of M commuting with ρ."""
    model = spec if isinstance(spec, AlgebraModel) else build(spec)
    phi = as_state(phi)
    if not phi.faithful:
        raise InvalidInputError("random_phi_channel needs a faithful state")
    rng = _rng(seed)
    from .algebra import block_parts

    sigmas = block_parts(model.spec, algebra_density(model, phi))
    p = rng.dirichlet(np.ones(d))
    ks = []
    for k in range(d):
        u = model.embed([_commuting_unitary(s, rng) for s in sigmas])
        ks.append(np.sqrt(p[k]) * u)
    return KrausChannel(model, tuple(ks), label or f"random_phi(d={d})")


def random_scaled_phi_channel(spec, phi, d, seed=None, label=None, max_iter=10000, tol=1e-13):
    """Generic inner unital φ-preserving channel by alternating scaling.

    Random Kraus operators in M are rescaled alternately so that
    ``Σ v v* = I`` and ``Σ v* ρ v = ρ`` (ρ the density of φ in M) until
    both hold. The final step restores exact unitality.

    Convergence is linear and occasionally slow. For the tracial state any
    ``d >= 2`` works in practice. For a generic ρ a scaling need
    not exist when ``d`` is smaller than the largest block dimension (a
    single Kraus operator would have to commute with ρ); the iteration
    then fails to converge and InvalidInputError is raised.
    """
    model = spec if isinstance(spec, AlgebraModel) else build(spec)
    phi = as_state(phi)
    if not phi.faithful:
        raise InvalidInputError("needs a faithful state")
    rng = _rng(seed)
    rho = algebra_density(model, phi)
    rho_half = hermitian_power(rho, 0.5)
    vs = np.array([model.random_element(rng) for _ in range(d)])
    for _ in range(max_iter):
        s = np.einsum("kab,kcb->ac", vs, np.conj(vs))
        vs = np.einsum("ab,kbc->kac", hermitian_power(s, -0.5), vs)
        r = np.einsum("kba,bc,kcd->ad", np.conj(vs), rho, vs)
        vs = np.einsum("kab,bc->kac", vs, hermitian_power(r, -0.5) @ rho_half)
        s = np.einsum("kab,kcb->ac", vs, np.conj(vs))
        if opnorm(s - identity(model.N)) < tol:
            break
    else:
        raise InvalidInputError(f"scaling did not converge in {max_iter} steps; try more Kraus operators")
    s = np.einsum("kab,kcb->ac", vs, np.conj(vs))
    vs = np.einsum("ab,kbc->kac", hermitian_power(s, -0.5), vs)
    return KrausChannel(model, tuple(vs), label or f"random_scaled_phi(d={d})")
