"""Dense complex linear algebra used by every other module.

Matrices are plain ``numpy.ndarray`` values of dtype ``complex128``.
Vectorization is row-stacking (numpy ``C`` order), under which

    vectorize(A @ X @ B) == kron(A, B.T) @ vectorize(X)

This convention is fixed for the whole package: Choi matrices, kernel
systems and coupling states all inherit it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class CertError(Exception):
    """Base class for errors raised by cpcert."""


class InvalidInputError(CertError, ValueError):
    """Input violates a precondition (shape, Hermiticity, membership...)."""


class NumericalError(CertError, ArithmeticError):
    """A factorization failed to converge."""


class IndeterminateError(CertError):
    """A rank decision fell inside the indeterminate band.

    ``spectrum`` holds the singular (or eigen-) values that were being
    thresholded so callers can surface them in a report.
    """

    def __init__(self, message, spectrum=()):
        super().__init__(message)
        self.spectrum = np.asarray(spectrum, dtype=float)


@dataclass(frozen=True)
class ToleranceConfig:
    """Thresholds for rank decisions and residual checks.

    rank_tol
        Relative singular-value cutoff: ``s <= rank_tol * s_max`` counts
        as zero.
    residual_tol
        Absolute cutoff on residual norms.
    indeterminate_band
        Multiplicative width of the no-decision zone around ``rank_tol``.
    """

    rank_tol: float = 1e-9
    residual_tol: float = 1e-9
    indeterminate_band: float = 10.0

    def __post_init__(self):
        if self.rank_tol < 0 or self.residual_tol < 0:
            raise InvalidInputError("tolerances must be nonnegative")
        if self.indeterminate_band < 1:
            raise InvalidInputError("indeterminate_band must be >= 1")

    def with_overrides(self, **kwargs):
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def as_dict(self):
        return {
            "rank_tol": self.rank_tol,
            "residual_tol": self.residual_tol,
            "indeterminate_band": self.indeterminate_band,
        }


DEFAULT_TOL = ToleranceConfig()


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional, got shape {a.shape}")
    return a


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def identity(n):
    return np.eye(n, dtype=complex)


def opnorm(a):
    """Spectral norm (largest singular value); 0 for empty input."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def svd(a):
    """Thin SVD ``a = u @ diag(s) @ adjoint(v)`` with ``s`` nonincreasing.

    Returns ``(u, s, v)`` where ``v`` (not ``v*``) has orthonormal columns.
    """
    a = as_matrix(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u, s, adjoint(vh)


def _full_spectrum(s, n):
    """Pad singular values with zeros up to ``n`` entries."""
    out = np.zeros(n)
    out[: len(s)] = s
    return out


def rank_decision(values, tol=DEFAULT_TOL, scale=None):
    """Count values above ``rank_tol * scale``.

    ``values`` are nonnegative and sorted nonincreasing; ``scale`` defaults
    to the largest value. Returns ``(rank, indeterminate)`` where
    ``indeterminate`` is True if any value sits inside the band
    ``[rank_tol / band, rank_tol * band] * scale``.
    """
    values = np.asarray(values, dtype=float)
    if scale is None:
        scale = float(values[0]) if values.size else 0.0
    if scale <= 0.0:
        return 0, False
    cut = tol.rank_tol * scale
    lo, hi = cut / tol.indeterminate_band, cut * tol.indeterminate_band
    rank = int(np.count_nonzero(values > cut))
    indeterminate = bool(np.any((values >= lo) & (values <= hi)))
    return rank, indeterminate


@dataclass(frozen=True)
class NullSpaceResult:
    basis: np.ndarray
    spectrum: np.ndarray
    rank: int
    indeterminate: bool

    @property
    def dim(self):
        return self.basis.shape[1]


def nullspace_report(a, tol=DEFAULT_TOL, scale=None):
    """Null space without raising on indeterminacy.

    ``spectrum`` is the full singular spectrum padded with zeros to the
    number of columns, so ``dim + rank == cols`` always. ``scale`` replaces
    the largest singular value as the reference for the cutoff, which
    matters when ``a`` may be numerically zero.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if cols == 0:
        return NullSpaceResult(np.zeros((0, 0), complex), np.zeros(0), 0, False)
    if rows == 0:
        return NullSpaceResult(identity(cols), np.zeros(cols), 0, False)
    try:
        _, s, vh = np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    spectrum = _full_spectrum(s, cols)
    rank, indeterminate = rank_decision(spectrum, tol, scale)
    basis = adjoint(vh[rank:])
    return NullSpaceResult(basis, spectrum, rank, indeterminate)


def nullspace(a, tol=DEFAULT_TOL, scale=None):
    """Orthonormal basis of ker(a) as columns.

    Raises IndeterminateError if a singular value lies in the band around
    the cutoff.
    """
    res = nullspace_report(a, tol, scale)
    if res.indeterminate:
        raise IndeterminateError("null space dimension is indeterminate", res.spectrum)
    return res.basis


def range_basis(a, tol=DEFAULT_TOL):
    """Orthonormal basis of the column space of ``a``; raises on indeterminacy."""
    a = as_matrix(a)
    if a.size == 0:
        return np.zeros((a.shape[0], 0), complex), np.zeros(0)
    u, s, _ = svd(a)
    rank, indeterminate = rank_decision(s, tol)
    if indeterminate:
        raise IndeterminateError("rank is indeterminate", s)
    return u[:, :rank], s


def hermitian_defect(a):
    return opnorm(a - adjoint(a))


def _check_hermitian(a, tol):
    scale = max(1.0, opnorm(a))
    if hermitian_defect(a) > tol.residual_tol * scale:
        raise InvalidInputError("matrix is not Hermitian")
    return (a + adjoint(a)) / 2


def hermitian_power(a, w, tol=DEFAULT_TOL):
    """``a ** w`` for Hermitian ``a`` via its eigendecomposition.

    Nonnegative real powers accept PSD input (tiny negative eigenvalues
    are clipped to zero). Negative or non-real powers need ``a`` strictly
    positive definite.
    """
    a = _check_hermitian(as_matrix(a), tol)
    w = complex(w)
    evals, q = np.linalg.eigh(a)
    lmax = float(np.max(np.abs(evals))) if evals.size else 0.0
    floor = tol.rank_tol * max(lmax, np.finfo(float).tiny)
    if w == 0:
        return identity(a.shape[0])
    if w.imag == 0 and w.real > 0:
        if evals.size and evals[0] < -floor:
            raise InvalidInputError("matrix is not positive semidefinite")
        lam = np.clip(evals, 0.0, None)
        with np.errstate(divide="ignore"):
            powered = np.where(lam > 0, np.power(lam, w.real), 0.0)
    else:
        if evals.size and evals[0] <= floor:
            raise InvalidInputError(
                "negative or complex power requires a strictly positive matrix"
            )
        powered = np.exp(w * np.log(evals))
    return (q * powered) @ adjoint(q)


class PSDVerdict(str, enum.Enum):
    PSD = "psd"
    NOT_PSD = "not_psd"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class PSDResult:
    verdict: PSDVerdict
    min_eig: float
    max_eig: float
    asymmetry: float

    @property
    def ok(self):
        return self.verdict is PSDVerdict.PSD


def psd_check(a, tol=DEFAULT_TOL):
    """Decide positive semidefiniteness of (the Hermitian part of) ``a``.

    PSD iff ``min_eig >= -rank_tol * max(1, max_eig)``; indeterminate when
    ``min_eig`` lies within the band around that threshold.
    """
    a = as_matrix(a)
    asym = hermitian_defect(a)
    h = (a + adjoint(a)) / 2
    evals = np.linalg.eigvalsh(h)
    lmin, lmax = float(evals[0]), float(evals[-1])
    t = tol.rank_tol * max(1.0, lmax)
    band = tol.indeterminate_band
    if -t * band <= lmin <= -t / band:
        verdict = PSDVerdict.INDETERMINATE
    elif lmin >= -t:
        verdict = PSDVerdict.PSD
    else:
        verdict = PSDVerdict.NOT_PSD
    return PSDResult(verdict, lmin, lmax, asym)


def kron(*mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def vectorize(a):
    """Row-stacking vectorization."""
    return as_matrix(a).reshape(-1)


def devectorize(v, rows, cols):
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != rows * cols:
        raise InvalidInputError(f"cannot reshape vector of length {v.size} to {rows}x{cols}")
    return v.reshape(rows, cols)


def partial_trace(a, dims, keep):
    """Trace out every tensor factor except index ``keep``.

    ``dims`` lists the factor dimensions in kron order.
    """
    dims = list(dims)
    n = len(dims)
    t = np.asarray(a).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i != keep:
            col[i] = row[i]
    spec = "".join(row) + "".join(col) + "->" + row[keep] + col[keep]
    return np.einsum(spec, t)


def haar_unitary(n, rng):
    """Haar-random unitary from QR of a Ginibre matrix with phase fixing."""
    return haar_isometry(n, n, rng)


def haar_isometry(rows, cols, rng):
    """Haar-random isometry ``rows x cols`` (``rows >= cols``)."""
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phases


def hermitian_basis(mats, tol=DEFAULT_TOL):
    """Hermitian orthonormal basis for the span of a *-closed set of matrices.

    The span (over C) of ``mats`` must be closed under adjoints. The
    returned Hermitian matrices are orthonormal in ``Re Tr(A* B)`` and span
    the same complex subspace.
    """
    mats = [np.asarray(m, dtype=complex) for m in mats]
    if not mats:
        return []
    shape = mats[0].shape
    parts = []
    for m in mats:
        parts.append((m + adjoint(m)) / 2)
        parts.append((m - adjoint(m)) / 2j)
    real = np.array([np.concatenate([p.real.ravel(), p.imag.ravel()]) for p in parts]).T
    u, s, _ = np.linalg.svd(real, full_matrices=False)
    rank, indeterminate = rank_decision(s, tol)
    if indeterminate:
        raise IndeterminateError("Hermitian span has indeterminate dimension", s)
    half = real.shape[0] // 2
    out = []
    for k in range(rank):
        vec = u[:half, k] + 1j * u[half:, k]
        h = vec.reshape(shape)
        out.append(_fix_sign((h + adjoint(h)) / 2))
    return out


def _fix_sign(h):
    """Make the largest-magnitude entry of ``h`` have positive real part."""
    flat = h.ravel()
    k = int(np.argmax(np.abs(flat)))
    if flat[k].real < 0:
        return -h
    return h


def fix_phase(vec):
    """Rotate ``vec`` so that its largest-magnitude entry is real positive."""
    k = int(np.argmax(np.abs(vec)))
    if abs(vec[k]) == 0:
        return vec
    return vec * (abs(vec[k]) / vec[k])
