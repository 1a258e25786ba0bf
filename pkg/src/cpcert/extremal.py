"""Extremality of unital CP maps and the witnesses behind each verdict.

For a minimal Kraus family with support projection ``P`` on
``H ⊗ C^d``, ``τ`` is extremal among unital CP maps iff the only
``Λ = PΛP ∈ M_d(M′)`` with ``V Λ V* = Σ_{αβ} v_α λ^α_β v_β* = 0`` is zero.
Kernel elements are stored as ``(N*d) × (N*d)`` matrices
``Λ = Σ λ^α_β ⊗ E_αβ``; ``blocks(Λ, d)`` recovers the ``d × d`` array of
coefficients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .algebra import Which
from .channel import (
    KrausChannel,
    channel_distance,
    from_choi,
    map_table,
    minimal_kraus,
    restricted_choi,
    stinespring_support,
    table_distance,
    to_choi,
)
from .linalg import (
    DEFAULT_TOL,
    IndeterminateError,
    InvalidInputError,
    PSDVerdict,
    adjoint,
    hermitian_basis,
    hermitian_defect,
    hermitian_power,
    identity,
    nullspace_report,
    opnorm,
    psd_check,
    range_basis,
    vectorize,
)


class Verdict(str, enum.Enum):
    EXTREMAL = "extremal"
    NOT_EXTREMAL = "not_extremal"
    INDETERMINATE = "indeterminate"
    HYPOTHESIS_UNMET = "hypothesis_unmet"


@dataclass
class Certificate:
    """Extremality verdict plus the data needed to re-check it.

    ``channel`` is the (minimal) Kraus family the kernel refers to;
    ``kernel_basis`` holds Hermitian kernel elements, trace-orthonormal.
    """

    verdict: Verdict
    kernel_dim: int
    kernel_basis: list = field(repr=False)
    singular_spectrum: np.ndarray = field(repr=False)
    residuals: dict
    notes: list
    channel: KrausChannel | None = field(default=None, repr=False)
    coefficients: str = "commutant"
    index: int | None = None

    @property
    def d(self):
        return self.channel.d if self.channel is not None else None

    @property
    def is_extremal(self):
        return self.verdict is Verdict.EXTREMAL


def blocks(lam, d):
    """``d × d`` array of ``N × N`` coefficient blocks of ``Λ``."""
    lam = np.asarray(lam)
    Nd = lam.shape[0]
    N = Nd // d
    return lam.reshape(N, d, N, d).transpose(1, 3, 0, 2)


def from_blocks(arr):
    """Inverse of ``blocks``."""
    arr = np.asarray(arr, dtype=complex)
    d, _, N, _ = arr.shape
    return arr.transpose(2, 0, 3, 1).reshape(N * d, N * d)


def _unit(d, a, b):
    e = np.zeros((d, d), dtype=complex)
    e[a, b] = 1.0
    return e


def coefficient_space(d, coeff_basis, P=None, tol=DEFAULT_TOL):
    """Orthonormal basis of ``P · (span(coeff_basis) ⊗ M_d) · P``."""
    gens = [np.kron(c, _unit(d, a, b)) for a in range(d) for b in range(d) for c in coeff_basis]
    if P is None or opnorm(P - identity(P.shape[0])) <= tol.residual_tol:
        return gens
    comp = np.array([vectorize(P @ g @ P) for g in gens]).T
    q, _ = range_basis(comp, tol)
    Nd = P.shape[0]
    return [q[:, k].reshape(Nd, Nd) for k in range(q.shape[1])]


def sandwich(tau, lam):
    """``V Λ V*`` for the channel's stacked Kraus column."""
    return adjoint(tau.vstar) @ lam @ tau.vstar


@dataclass
class _Kernel:
    basis: list
    spectrum: np.ndarray
    indeterminate: bool


def _solve_kernel(columns_by_system, gens, tol):
    """Common kernel of several linear systems over ``span(gens)``.

    ``columns_by_system`` is a list of callables ``G -> vector``; their
    images are stacked row-wise.
    """
    if not gens:
        return _Kernel([], np.zeros(0), False)
    cols = [np.concatenate([f(g) for f in columns_by_system]) for g in gens]
    res = nullspace_report(np.array(cols).T, tol)
    kernel = []
    for k in range(res.dim):
        a = res.basis[:, k]
        kernel.append(sum(ai * g for ai, g in zip(a, gens)))
    return _Kernel(kernel, res.spectrum, res.indeterminate)


def _reduce(tau, tol):
    sd = stinespring_support(tau, tol)
    if sd.index < tau.d:
        tau = minimal_kraus(tau, tol, sd)
        sd = stinespring_support(tau, tol)
    return tau, sd


def _indeterminate(exc, notes, channel=None, **kwargs):
    return Certificate(
        Verdict.INDETERMINATE,
        0,
        [],
        np.asarray(getattr(exc, "spectrum", np.zeros(0))),
        {},
        notes + [f"rank decision indeterminate: {exc}"],
        channel,
        **kwargs,
    )


def _kernel_certificate(tau, sd, coeff_basis, coefficients, tol, notes):
    gens = coefficient_space(tau.d, coeff_basis, sd.support_projection, tol)
    ker = _solve_kernel([lambda g: vectorize(sandwich(tau, g))], gens, tol)
    if ker.indeterminate:
        return _indeterminate(
            IndeterminateError("constraint rank in band", ker.spectrum),
            notes,
            tau,
            coefficients=coefficients,
            index=sd.index,
        )
    herm = hermitian_basis(ker.basis, tol) if ker.basis else []
    residuals = {
        "unitality": tau.unitality_defect(),
        "support_projection": sd.residual,
        "kernel": max((opnorm(sandwich(tau, h)) for h in herm), default=0.0),
        "coefficient_space_dim": len(gens),
    }
    verdict = Verdict.NOT_EXTREMAL if herm else Verdict.EXTREMAL
    return Certificate(
        verdict, len(herm), herm, ker.spectrum, residuals, notes, tau, coefficients, sd.index
    )


def extremality_cp(tau, tol=DEFAULT_TOL):
    """Certificate of extremality among unital CP maps ``M → B(H)``."""
    tau.require_unital(tol)
    notes = ["constraint solved: sum_ab v_a lambda^a_b v_b* = 0 (adjoint on the right factor)"]
    try:
        red, sd = _reduce(tau, tol)
        if red.d < tau.d:
            notes.append(f"reduced Kraus family from {tau.d} to {red.d} operators")
        if not sd.balanced:
            notes.append("support projection is proper: unknowns compressed by P")
        return _kernel_certificate(red, sd, red.algebra.basis_comm, "commutant", tol, notes)
    except IndeterminateError as exc:
        return _indeterminate(exc, notes, tau)


def extremality_choi(tau, tol=DEFAULT_TOL):
    """Choi's criterion for ``M = B(H)``: extremal iff ``{v_k v_j*}`` is independent.

    Uses its own reduction through the Choi matrix, so it shares no
    kernel code with ``extremality_cp``.
    """
    if not tau.algebra.spec.is_full:
        raise InvalidInputError("Choi criterion needs a single block of multiplicity one")
    tau.require_unital(tol)
    notes = ["Choi criterion: linear independence of v_k v_j*"]
    try:
        red = from_choi(to_choi(tau), tau.algebra, tol, tau.label)
    except IndeterminateError as exc:
        return _indeterminate(exc, notes, tau, coefficients="scalar")
    d, N = red.d, red.N
    prods = [vectorize(red.kraus[k] @ adjoint(red.kraus[j])) for k in range(d) for j in range(d)]
    res = nullspace_report(np.array(prods).T, tol)
    if res.indeterminate:
        return _indeterminate(
            IndeterminateError("product rank in band", res.spectrum),
            notes,
            red,
            coefficients="scalar",
            index=d,
        )
    kernel = [np.kron(identity(N), res.basis[:, k].reshape(d, d)) for k in range(res.dim)]
    herm = hermitian_basis(kernel, tol) if kernel else []
    residuals = {
        "unitality": red.unitality_defect(),
        "kernel": max((opnorm(sandwich(red, h)) for h in herm), default=0.0),
    }
    verdict = Verdict.NOT_EXTREMAL if herm else Verdict.EXTREMAL
    return Certificate(verdict, len(herm), herm, res.spectrum, residuals, notes, red, "scalar", d)


def extremality_inner_center(tau, tol=DEFAULT_TOL):
    """Extremality among unital CP maps ``M → M`` for inner Kraus families.

    Coefficients range over the center of M.
    """
    if not tau.is_inner(tol):
        raise InvalidInputError("Kraus operators are not all in M (non-inner family)")
    tau.require_unital(tol)
    notes = ["inner family: coefficients restricted to the center"]
    try:
        red, sd = _reduce(tau, tol)
        return _kernel_certificate(red, sd, red.algebra.basis_center, "center", tol, notes)
    except IndeterminateError as exc:
        return _indeterminate(exc, notes, tau, coefficients="center")


# -- decompositions --------------------------------------------------------


@dataclass
class Decomposition:
    plus: KrausChannel
    minus: KrausChannel
    reassembly_residual: float
    separation: float
    kernel_residual: float
    unitality: tuple


def _commutes_with_algebra(tau, lam):
    eye_d = identity(tau.d)
    worst = 0.0
    for x in tau.algebra.basis_M:
        X = np.kron(x, eye_d)
        worst = max(worst, opnorm(X @ lam - lam @ X))
    return worst


def as_kernel_matrix(lam, d):
    lam = np.asarray(lam, dtype=complex)
    if lam.ndim == 4:
        return from_blocks(lam)
    return lam


def _split(tau, weight_plus, weight_minus, label):
    ks_plus = KrausChannel.from_vstar(tau.algebra, weight_plus @ tau.vstar, f"{label}+")
    ks_minus = KrausChannel.from_vstar(tau.algebra, weight_minus @ tau.vstar, f"{label}-")
    avg = 0.5 * (map_table(ks_plus) + map_table(ks_minus))
    return ks_plus, ks_minus, table_distance(avg, map_table(tau))


def decompose_cp(tau, lam, tol=DEFAULT_TOL):
    """Split ``τ = ½(τ₊ + τ₋)`` along a Hermitian kernel element ``Λ``.

    ``τ±`` have stacked Kraus columns ``W± V*`` with ``W±² = I ∓ Λ``
    after scaling ``‖Λ‖ = 1``.
    """
    lam = as_kernel_matrix(lam, tau.d)
    Nd = tau.N * tau.d
    if lam.shape != (Nd, Nd):
        raise InvalidInputError(f"kernel element must be {Nd}x{Nd}")
    norm = opnorm(lam)
    if norm == 0:
        raise InvalidInputError("kernel element is zero")
    if hermitian_defect(lam) > tol.residual_tol * norm:
        raise InvalidInputError("kernel element must be Hermitian")
    lam = (lam + adjoint(lam)) / (2 * norm)
    kernel_residual = opnorm(sandwich(tau, lam))
    if kernel_residual > tol.residual_tol:
        raise InvalidInputError(f"V Λ V* = {kernel_residual:.3e} exceeds tolerance: not a kernel element")
    if _commutes_with_algebra(tau, lam) > tol.residual_tol:
        raise InvalidInputError("kernel element does not commute with M ⊗ I")
    eye = identity(Nd)
    w_plus = hermitian_power(eye - lam, 0.5, tol)
    w_minus = hermitian_power(eye + lam, 0.5, tol)
    plus, minus, resid = _split(tau, w_plus, w_minus, tau.label or "tau")
    return Decomposition(
        plus,
        minus,
        resid,
        channel_distance(plus, minus),
        kernel_residual,
        (plus.unitality_defect(), minus.unitality_defect()),
    )


# -- Radon–Nikodym derivative ----------------------------------------------


class DominationError(InvalidInputError):
    """``c τ - η`` is not completely positive on M."""


@dataclass
class RNDerivative:
    t: np.ndarray = field(repr=False)
    psd: PSDVerdict
    domination_constant: float
    residual: float
    min_eig: float
    max_eig: float
    notes: list

    def entries(self, d):
        return blocks(self.t, d)


def _as_table(eta, model):
    if isinstance(eta, KrausChannel):
        return map_table(eta)
    table = np.asarray(eta, dtype=complex)
    if table.shape != (len(model.basis_M), model.N, model.N):
        raise InvalidInputError("map table must list the values on basis_M")
    return table


def radon_nikodym(eta, tau, c, tol=DEFAULT_TOL):
    """Solve ``η(x) = Σ v_k x t^k_j v_j*`` for ``t`` in ``P M_d(M′) P``.

    Domination ``η ≤ c τ`` is verified in its complete form: every block
    Choi matrix of ``c τ - η`` restricted to M must be PSD.
    """
    if c <= 0:
        raise InvalidInputError("domination constant must be positive")
    model = tau.algebra
    sd = stinespring_support(tau, tol)
    if sd.index != tau.d:
        raise InvalidInputError(f"τ is not minimal (index {sd.index} < {tau.d} Kraus operators)")
    eta_tab = _as_table(eta, model)
    tau_tab = map_table(tau)
    for blk_choi in restricted_choi(model, c * tau_tab - eta_tab):
        chk = psd_check(blk_choi, tol)
        if chk.verdict is PSDVerdict.INDETERMINATE:
            raise IndeterminateError("domination check is indeterminate", [chk.min_eig])
        if chk.verdict is PSDVerdict.NOT_PSD:
            raise DominationError(f"c·τ − η is not completely positive (min eigenvalue {chk.min_eig:.3e})")
    gens = coefficient_space(tau.d, model.basis_comm, sd.support_projection, tol)
    eye_d = identity(tau.d)
    lifts = [np.kron(x, eye_d) for x in model.basis_M]
    A = np.array(
        [np.concatenate([vectorize(sandwich(tau, X @ g)) for X in lifts]) for g in gens]
    ).T
    rank = nullspace_report(A, tol)
    if rank.indeterminate:
        raise IndeterminateError("Radon–Nikodym system rank is indeterminate", rank.spectrum)
    if rank.dim:
        raise InvalidInputError("Radon–Nikodym system is rank deficient; τ is not minimal")
    b = np.concatenate([vectorize(y) for y in eta_tab])
    a, *_ = np.linalg.lstsq(A, b, rcond=None)
    t = sum(ai * g for ai, g in zip(a, gens))
    residual = float(np.linalg.norm(A @ a - b))
    chk = psd_check(t, tol)
    notes = ["domination verified as complete positivity of c·τ − η on M (blockwise Choi)"]
    if chk.max_eig > c * (1 + tol.rank_tol) + tol.residual_tol:
        notes.append(f"t exceeds c·I: max eigenvalue {chk.max_eig:.6g} > c = {c}")
    return RNDerivative((t + adjoint(t)) / 2, chk.verdict, float(c), residual, chk.min_eig, chk.max_eig, notes)


# -- intertwiners and operator systems -------------------------------------


@dataclass
class Intertwiner:
    lam: np.ndarray = field(repr=False)
    residual: float
    unitarity_defect: float

    def entries(self, d):
        return blocks(self.lam, d)


def _complement_frames(P, spec, d, tol):
    """Per-block orthonormal frames of ``I - q_b`` on ``C^{m_b d}``."""
    from .linalg import partial_trace

    frames = []
    for blk, off in zip(spec.blocks, spec.offsets):
        rows = slice(off * d, (off + blk.size) * d)
        qb = partial_trace(P[rows, rows], (blk.dim, blk.multiplicity * d), keep=1) / blk.dim
        comp = identity(qb.shape[0]) - (qb + adjoint(qb)) / 2
        evals, vecs = np.linalg.eigh(comp)
        frames.append(vecs[:, evals > 0.5])
    return frames


def intertwiner(v_family, w_family, tol=DEFAULT_TOL):
    """Unitary ``λ ∈ M_d(M′)`` with ``v_k* = Σ_j λ^k_j w_j*``.

    Both families must be minimal representations of the same map.
    """
    model = v_family.algebra
    if w_family.algebra.spec != model.spec:
        raise InvalidInputError("families act on different algebras")
    dist = channel_distance(v_family, w_family)
    if dist > tol.residual_tol * max(1.0, model.N):
        raise InvalidInputError(f"families define different maps (distance {dist:.3e})")
    if v_family.d != w_family.d:
        raise InvalidInputError("families have different cardinalities; reduce both to minimal form")
    d, N = v_family.d, model.N
    gens = coefficient_space(d, model.basis_comm)
    A = np.array([vectorize(g @ w_family.vstar) for g in gens]).T
    b = vectorize(v_family.vstar)
    a, *_ = np.linalg.lstsq(A, b, rcond=None)
    lam = sum(ai * g for ai, g in zip(a, gens))
    residual = opnorm(lam @ w_family.vstar - v_family.vstar)
    if residual > tol.residual_tol * max(1.0, N):
        raise InvalidInputError(f"no intertwiner over M′ (residual {residual:.3e})")
    defect = opnorm(lam @ adjoint(lam) - identity(N * d))
    if defect > tol.residual_tol:
        sv = stinespring_support(v_family, tol).support_projection
        sw = stinespring_support(w_family, tol).support_projection
        fv = _complement_frames(sv, model.spec, d, tol)
        fw = _complement_frames(sw, model.spec, d, tol)
        comp = np.zeros((N * d, N * d), dtype=complex)
        for blk, off, a_v, a_w in zip(model.spec.blocks, model.spec.offsets, fv, fw):
            if a_v.shape[1] != a_w.shape[1]:
                raise InvalidInputError("support projections have different block ranks")
            rows = slice(off * d, (off + blk.size) * d)
            comp[rows, rows] = np.kron(identity(blk.dim), a_v @ adjoint(a_w))
        lam = lam @ sw + comp
        residual = opnorm(lam @ w_family.vstar - v_family.vstar)
        defect = opnorm(lam @ adjoint(lam) - identity(N * d))
    return Intertwiner(lam, residual, defect)


def operator_system_basis(tau, tol=DEFAULT_TOL):
    """Trace-orthonormal basis of ``S^τ = {Σ v_i λ^i_j v_j* : λ^i_j ∈ M′}``."""
    red, _ = _reduce(tau, tol)
    gens = coefficient_space(red.d, red.algebra.basis_comm)
    imgs = np.array([vectorize(sandwich(red, g)) for g in gens]).T
    q, _ = range_basis(imgs, tol)
    N = red.N
    return [q[:, k].reshape(N, N) for k in range(q.shape[1])]
