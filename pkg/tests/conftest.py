import numpy as np
import pytest

from cpcert import AlgebraSpec, KrausChannel, build


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1
    return e


def pinching():
    return KrausChannel(AlgebraSpec.full(2), (unit(2, 0, 0), unit(2, 1, 1)), "pinching")


def identity_channel(n=2):
    return KrausChannel(AlgebraSpec.full(n), (np.eye(n, dtype=complex),), "identity")


def dual_amplitude_damping(gamma):
    v0 = np.diag([1, np.sqrt(1 - gamma)]).astype(complex)
    v1 = np.sqrt(gamma) * unit(2, 1, 0)
    return KrausChannel(AlgebraSpec.full(2), (v0, v1), f"dual-ad({gamma})")


def ginibre(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def random_psd(rng, n):
    g = ginibre(rng, n)
    return g @ g.conj().T


def m_prime_dependent_channel(rng):
    """Blocks [(2,2)] with v₂* = (I ⊗ w) v₁*: scalar-independent, M′-dependent."""
    spec = AlgebraSpec(((2, 2),))
    v0 = ginibre(rng, 4)
    w = ginibre(rng, 2)
    W = np.kron(np.eye(2), w)
    ks = [v0, v0 @ W.conj().T]
    s = sum(k @ k.conj().T for k in ks)
    evals, q = np.linalg.eigh(s)
    s_inv_half = q @ np.diag(evals**-0.5) @ q.conj().T
    return KrausChannel(spec, tuple(s_inv_half @ k for k in ks), "m-prime-dependent")


__all__ = ["unit", "pinching", "identity_channel", "dual_amplitude_damping", "ginibre", "random_psd", "m_prime_dependent_channel", "build"]


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
