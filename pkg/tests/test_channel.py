import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpcert import AlgebraSpec, KrausChannel, build
from cpcert.channel import (
    DensityState,
    apply,
    channel_distance,
    conjugate,
    from_choi,
    is_phi_preserving,
    kraus_comm_kernel,
    map_table,
    minimal_kraus,
    random_channel,
    random_phi_channel,
    random_scaled_phi_channel,
    random_state,
    restricted_choi,
    stinespring_support,
    to_choi,
)
from cpcert.linalg import InvalidInputError, haar_unitary, identity, psd_check

from conftest import dual_amplitude_damping, ginibre, identity_channel, pinching, unit, m_prime_dependent_channel

SPECS = [
    AlgebraSpec.full(2),
    AlgebraSpec.full(3),
    AlgebraSpec(((2, 2),)),
    AlgebraSpec(((1, 1), (1, 1))),
    AlgebraSpec(((2, 1), (1, 2))),
]


def test_apply_examples(rng):
    x = ginibre(rng, 2)
    assert np.allclose(apply(identity_channel(), x), x)
    assert np.allclose(apply(pinching(), x), np.diag(np.diag(x)))
    u = haar_unitary(2, rng)
    y = apply(KrausChannel(AlgebraSpec.full(2), (u,)), x)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(y)), np.sort_complex(np.linalg.eigvals(x)))
    with pytest.raises(InvalidInputError):
        apply(pinching(), np.eye(3))


def test_construction_errors():
    with pytest.raises(InvalidInputError):
        KrausChannel(AlgebraSpec.full(2), ())
    with pytest.raises(InvalidInputError):
        KrausChannel(AlgebraSpec.full(2), (np.eye(3),))
    with pytest.raises(InvalidInputError):
        KrausChannel(AlgebraSpec.full(2), (2 * np.eye(2),)).require_unital()


def test_choi_examples(rng):
    assert from_choi(to_choi(identity_channel()), AlgebraSpec.full(2)).d == 1
    c = to_choi(pinching()).matrix
    assert np.linalg.matrix_rank(c) == 2
    assert from_choi(c, AlgebraSpec.full(2)).d == 2
    tau = random_channel(AlgebraSpec.full(3), 3, rng)
    back = from_choi(to_choi(tau), tau.algebra)
    assert back.d == 3
    assert np.linalg.norm(to_choi(back).matrix - to_choi(tau).matrix) <= 1e-10
    with pytest.raises(InvalidInputError):
        from_choi(-np.eye(4), AlgebraSpec.full(2))


def test_choi_formula_matches_apply(rng):
    tau = random_channel(AlgebraSpec.full(3), 2, rng)
    c = to_choi(tau).matrix
    x = ginibre(rng, 3)
    # τ(x) = Σ_ij x_ij · (block ij of C)
    via_choi = sum(x[i, j] * c.reshape(3, 3, 3, 3)[:, i, :, j] for i in range(3) for j in range(3))
    assert np.allclose(via_choi, apply(tau, x), atol=1e-12)


def test_restricted_choi_detects_cp(rng):
    spec = AlgebraSpec(((2, 1), (1, 2)))
    tau = random_channel(spec, 2, rng)
    model = tau.algebra
    for c in restricted_choi(model, map_table(tau)):
        assert psd_check(c).ok
    # transpose on the first block is positive but not completely positive
    table = map_table(tau)
    tr = np.array([x.T for x in model.basis_M])
    assert not all(psd_check(c).ok for c in restricted_choi(model, tr))
    assert table.shape == (5, 4, 4)


def test_stinespring_examples(rng):
    sd = stinespring_support(identity_channel(3))
    assert sd.index == 1 and np.allclose(sd.support_projection, np.eye(3))
    u = haar_unitary(2, rng)
    dup = KrausChannel(AlgebraSpec.full(2), (u / np.sqrt(2), u / np.sqrt(2)))
    sd = stinespring_support(dup)
    assert sd.rank == 2 and sd.index == 1
    sd = stinespring_support(pinching())
    assert sd.index == 2 and np.allclose(sd.support_projection, np.eye(4))


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_support_projection_invariants(spec, rng):
    tau = random_channel(spec, 3, rng)
    sd = stinespring_support(tau)
    P = sd.support_projection
    assert np.linalg.norm(P @ P - P) <= 1e-10 and np.linalg.norm(P - P.conj().T) <= 1e-10
    for x in tau.algebra.basis_M:
        X = np.kron(x, np.eye(3))
        assert np.linalg.norm(X @ P - P @ X) <= 1e-10
    assert sd.residual <= 1e-10


def test_minimal_kraus_examples(rng):
    u = haar_unitary(2, rng)
    dup = KrausChannel(AlgebraSpec.full(2), (u / np.sqrt(2), u / np.sqrt(2)))
    red = minimal_kraus(dup)
    assert red.d == 1
    x = ginibre(rng, 2)
    assert np.allclose(apply(red, x), u @ x @ u.conj().T)
    assert minimal_kraus(pinching()).d == 2
    # four-operator encoding of the identity map
    w = haar_unitary(4, rng)
    ks = tuple(w[k, 0] * np.eye(2) for k in range(4))
    four = KrausChannel(AlgebraSpec.full(2), ks)
    assert four.unitality_defect() < 1e-12
    assert minimal_kraus(four).d == 1 and channel_distance(minimal_kraus(four), identity_channel()) < 1e-12


@pytest.mark.parametrize("spec", SPECS, ids=str)
@pytest.mark.parametrize("d", [1, 3, 5])
def test_minimal_kraus_reproduces_map(spec, d, rng):
    tau = random_channel(spec, d, rng)
    sd = stinespring_support(tau)
    red = minimal_kraus(tau, stinespring=sd)
    assert red.d == sd.index
    assert channel_distance(tau, red) <= 1e-10
    assert red.unitality_defect() <= 1e-9
    if sd.balanced:
        assert kraus_comm_kernel(red) == []


def test_minimal_kraus_keeps_inner(rng):
    spec = AlgebraSpec(((2, 2), (1, 1)))
    model = build(spec)
    us = [model.random_unitary(rng) for _ in range(3)]
    tau = KrausChannel(model, tuple(u / np.sqrt(6) for u in us) * 2)
    red = minimal_kraus(tau)
    assert red.is_inner() and red.d == 3
    assert channel_distance(red, tau) <= 1e-10


def test_kraus_comm_kernel_examples(rng):
    assert kraus_comm_kernel(pinching()) == []
    u = haar_unitary(2, rng)
    dup = KrausChannel(AlgebraSpec.full(2), (u / np.sqrt(2), u / np.sqrt(2)))
    ker = kraus_comm_kernel(dup)
    assert len(ker) == 1
    c1, c2 = ker[0]
    assert np.allclose(c1, -c2) and np.allclose(c1, c1[0, 0] * np.eye(2))


def test_comm_kernel_sees_commutant_dependence(rng):
    tau = m_prime_dependent_channel(rng)
    assert tau.unitality_defect() < 1e-12
    assert from_choi(to_choi(tau), tau.algebra).d == 2  # scalar independent
    assert len(kraus_comm_kernel(tau)) >= 1
    red = minimal_kraus(tau)
    assert red.d == 1 and kraus_comm_kernel(red) == []


def test_density_state():
    st = DensityState.from_matrix(np.diag([0.7, 0.3]))
    assert st.faithful
    assert not DensityState.from_matrix(np.diag([1.0, 0.0])).faithful
    with pytest.raises(InvalidInputError):
        DensityState.from_matrix(np.diag([0.7, 0.7]))
    with pytest.raises(InvalidInputError):
        DensityState.from_matrix(np.diag([1.2, -0.2]))


def test_phi_preserving_examples():
    tau = random_channel(AlgebraSpec.full(2), 1, 3)
    assert is_phi_preserving(tau, np.eye(2) / 2)[0]
    assert is_phi_preserving(pinching(), np.eye(2) / 2)[0]
    ok, defect = is_phi_preserving(dual_amplitude_damping(0.5), np.eye(2) / 2)
    assert not ok and defect > 0.1


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_random_generators(spec):
    assert random_channel(spec, 1, 0).d == 1
    tau = random_channel(spec, 4, 5)
    assert tau.unitality_defect() <= 1e-12
    phi = random_state(spec, 7)
    assert phi.faithful and build(spec).membership(phi.rho).is_member
    mix = random_phi_channel(spec, phi, 3, 11)
    assert mix.unitality_defect() <= 1e-12
    assert is_phi_preserving(mix, phi)[1] <= 1e-12
    assert mix.is_inner()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(SPECS), st.integers(0, 2))
def test_scaled_generator_converges(seed, spec, extra):
    d = max(b.dim for b in spec.blocks) + extra
    phi = random_state(spec, seed)
    tau = random_scaled_phi_channel(spec, phi, d, seed)
    assert tau.unitality_defect() <= 1e-12
    assert is_phi_preserving(tau, phi)[1] <= 1e-10
    assert tau.is_inner()


def test_conjugation_by_algebra_unitary(rng):
    spec = AlgebraSpec(((2, 1), (1, 2)))
    model = build(spec)
    tau = random_channel(spec, 2, rng)
    u = model.random_unitary(rng)
    conj = conjugate(tau, u, u.conj().T)
    x = model.random_element(rng)
    assert np.allclose(apply(conj, x), u @ apply(tau, u.conj().T @ x @ u) @ u.conj().T)
    assert stinespring_support(conj).index == stinespring_support(tau).index
    assert conj.unitality_defect() < 1e-12
    assert np.allclose(identity(2), np.eye(2))


@pytest.mark.parametrize("n,d", [(2, 1), (3, 1), (3, 2), (4, 3)])
def test_scaled_generator_tracial_any_d(n, d):
    tau = random_scaled_phi_channel(AlgebraSpec.full(n), np.eye(n) / n, d, n + d)
    assert tau.unitality_defect() <= 1e-12
    assert is_phi_preserving(tau, np.eye(n) / n)[1] <= 1e-10


def test_scaled_generator_reports_failure():
    phi = DensityState.from_matrix(np.diag([0.6, 0.3, 0.1]))
    with pytest.raises(InvalidInputError, match="did not converge"):
        random_scaled_phi_channel(AlgebraSpec.full(3), phi, 1, 0, max_iter=50)
