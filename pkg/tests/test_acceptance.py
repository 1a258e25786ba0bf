"""Acceptance criteria, one test each.

Every check returns ``(ok, detail)``; the test records a PASS/FAIL line that
is printed in the terminal summary and by ``python3 tests/test_acceptance.py``.
Oracles here are written against plain numpy and do not call the code path
they check.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cpcert import AlgebraSpec, KrausChannel, build  # noqa: E402
from cpcert.channel import (  # noqa: E402
    channel_distance,
    conjugate,
    kraus_comm_kernel,
    minimal_kraus,
    mixture,
    random_channel,
    random_phi_channel,
    random_scaled_phi_channel,
    random_state,
    stinespring_support,
    to_choi,
)
from cpcert.coupling import (  # noqa: E402
    CouplingState,
    affine_defect,
    channel_to_coupling,
    coupling_extremality,
    coupling_to_channel,
    decompose_cp_phi,
    extremality_cp_phi,
)
from cpcert.extremal import (  # noqa: E402
    Verdict,
    blocks,
    decompose_cp,
    extremality_choi,
    extremality_cp,
    radon_nikodym,
)
from cpcert.linalg import haar_unitary, psd_check  # noqa: E402
from cpcert.modular import ModularData, adjoint_channel, duality_defect, kms_check  # noqa: E402

from conftest import (  # noqa: E402
    ACCEPTANCE,
    dual_amplitude_damping,
    ginibre,
    identity_channel,
    m_prime_dependent_channel,
    pinching,
    random_psd,
)

SPECS = [
    AlgebraSpec.full(2),
    AlgebraSpec.full(3),
    AlgebraSpec(((2, 1), (1, 1))),
    AlgebraSpec(((1, 1), (1, 1), (1, 1))),
    AlgebraSpec(((2, 2), (1, 1))),
]


# -- oracles -------------------------------------------------------------------


def _rank(vectors, tol=1e-9):
    a = np.array([np.ravel(v) for v in vectors])
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _choi_kraus(kraus, tol=1e-10):
    """Minimal Kraus family from an eigendecomposition of the Choi matrix."""
    n = kraus[0].shape[0]
    vecs = np.array([k.reshape(-1) for k in kraus])
    choi = vecs.T @ vecs.conj()
    w, q = np.linalg.eigh(choi)
    keep = w > tol * max(1.0, w[-1])
    return [np.sqrt(wi) * q[:, i].reshape(n, n) for i, wi in zip(np.flatnonzero(keep), w[keep])]


def oracle_products_independent(kraus):
    """Extremal in UCP(M_n) iff ``{v_k v_j*}`` is linearly independent."""
    ks = _choi_kraus(kraus)
    return _rank([a @ b.conj().T for a in ks for b in ks]) == len(ks) ** 2


def oracle_pairs_independent(kraus):
    """Extremal among unital trace-preserving maps iff ``{(v_k v_j*, v_j* v_k)}`` is independent."""
    ks = _choi_kraus(kraus)
    vecs = [np.concatenate([(a @ b.conj().T).ravel(), (b.conj().T @ a).ravel()]) for a in ks for b in ks]
    return _rank(vecs) == len(ks) ** 2


def _algebra_unitary(model, rng):
    return model.embed([haar_unitary(b.dim, rng) for b in model.spec.blocks])


# -- criteria ------------------------------------------------------------------


def check_1():
    disagree, indeterminate, oracle_miss, total = 0, 0, 0, 0
    for n in (2, 3):
        for d in range(1, 5):
            for seed in range(100):
                tau = random_channel(AlgebraSpec.full(n), d, seed=1000 * n + 100 * d + seed)
                a, b = extremality_cp(tau), extremality_choi(tau)
                total += 1
                if Verdict.INDETERMINATE in (a.verdict, b.verdict):
                    indeterminate += 1
                    continue
                disagree += a.verdict is not b.verdict
                oracle_miss += a.is_extremal != oracle_products_independent(tau.kraus)
    ok = disagree == 0 and oracle_miss == 0 and indeterminate < 0.05 * total
    return ok, f"{total} channels, {disagree} cp/choi disagreements, {oracle_miss} oracle mismatches, {indeterminate} indeterminate"


def check_2():
    rng = np.random.default_rng(2)
    failures = []
    extremal = [identity_channel(2), identity_channel(3)]
    extremal += [KrausChannel(AlgebraSpec.full(n), (haar_unitary(n, rng),), "unitary") for n in (2, 3, 4)]
    extremal += [dual_amplitude_damping(g) for g in (0.3, 0.5, 0.7)]
    for tau in extremal:
        if extremality_cp(tau).verdict is not Verdict.EXTREMAL:
            failures.append(tau.label)
    mixtures = [pinching()]
    for n in (2, 3):
        for _ in range(3):
            p = rng.uniform(0.1, 0.9)
            u = [KrausChannel(AlgebraSpec.full(n), (haar_unitary(n, rng),)) for _ in range(2)]
            mixtures.append(mixture(u, [p, 1 - p], f"mix{n}"))
    worst = 0.0
    for tau in mixtures:
        cert = extremality_cp(tau)
        if cert.verdict is not Verdict.NOT_EXTREMAL or cert.kernel_dim < 1:
            failures.append(tau.label)
            continue
        dec = decompose_cp(cert.channel, cert.kernel_basis[0])
        worst = max(worst, dec.reassembly_residual)
        # independent reassembly: both parts are unital, distinct, and average back to τ
        back = max(np.linalg.norm(0.5 * dec.plus(x) + 0.5 * dec.minus(x) - tau(x))
                   for x in tau.algebra.basis_M)
        if back > 1e-9 or dec.separation <= 1e-6 or max(dec.unitality) > 1e-9:
            failures.append(tau.label)
    ok = not failures and worst <= 1e-9
    return ok, f"{len(extremal)} extremal, {len(mixtures)} mixtures, max reassembly {worst:.1e}, failures {failures}"


def check_3():
    worst, worst_id = 0.0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(300 + seed)
        spec = [AlgebraSpec.full(2), AlgebraSpec.full(3), AlgebraSpec(((2, 1), (1, 1)))][seed % 3]
        d = 2 if seed % 2 else 3
        tau = random_channel(spec, d, rng)
        t0 = random_psd(rng, d)
        c = 1.1 * np.linalg.eigvalsh(t0)[-1]
        # η computed directly from Kraus operators: η(x) = Σ v_k x t0_kj v_j*
        eta = np.array([
            sum(tau.kraus[k] @ x * t0[k, j] @ tau.kraus[j].conj().T for k in range(d) for j in range(d))
            for x in tau.algebra.basis_M
        ])
        rn = radon_nikodym(eta, tau, c)
        t = blocks(rn.t, d)
        # t lives in M_d(M'); for these algebras the scalar part sits on each diagonal entry
        rec = t[:, :, 0, 0]
        worst = max(worst, np.linalg.norm(rec - t0))
        worst_id = max(worst_id, np.linalg.norm(radon_nikodym(tau, tau, 1.0).t - np.eye(tau.N * d)))
    ok = worst <= 1e-8 and worst_id <= 1e-10
    return ok, f"50 cases, max ||t - t0|| {worst:.1e}, max ||t - I|| for eta = tau {worst_id:.1e}"


def check_4():
    rng = np.random.default_rng(4)
    mismatches, counts, total = 0, {True: 0, False: 0}, 0
    cases = []
    for i in range(60):
        n = 2 + i % 2
        d = 2 + (i // 2) % 2  # a single scaled operator need not reach a unitary
        cases.append(random_scaled_phi_channel(AlgebraSpec.full(n), np.eye(n) / n, d, seed=400 + i))
    for i in range(40):
        n = 2 + i % 2
        d = 1 + i % 3
        us = [KrausChannel(AlgebraSpec.full(n), (haar_unitary(n, rng),)) for _ in range(d)]
        cases.append(mixture(us, list(rng.dirichlet(np.ones(d))), "unitary-mix"))
    for tau in cases:
        total += 1
        cert = extremality_cp_phi(tau, np.eye(tau.N) / tau.N)
        expected = oracle_pairs_independent(tau.kraus)
        counts[expected] += 1
        if cert.verdict is Verdict.INDETERMINATE or cert.is_extremal != expected:
            mismatches += 1
    return mismatches == 0, f"{total} channels ({counts[True]} extremal, {counts[False]} not), {mismatches} disagreements"


def check_5():
    worst_dual, worst_double, index_fail = 0.0, 0.0, 0
    for seed in range(50):
        spec = SPECS[seed % len(SPECS)]
        phi = random_state(spec, 500 + seed)
        d = max(b.dim for b in spec.blocks) + 1 + seed % 2
        make = random_scaled_phi_channel if seed % 3 else random_phi_channel
        tau = make(spec, phi, d, seed=550 + seed)
        md = ModularData.build(build(spec), phi)
        tt = adjoint_channel(md, tau)
        worst_dual = max(worst_dual, duality_defect(md, tau, tt))
        index_fail += stinespring_support(tt).index != stinespring_support(tau).index
        worst_double = max(worst_double, channel_distance(adjoint_channel(md, tt), tau))
    ok = worst_dual <= 1e-9 and worst_double <= 1e-10 and index_fail == 0
    return ok, f"50 channels, duality {worst_dual:.1e}, double adjoint {worst_double:.1e}, index mismatches {index_fail}"


def _spectral_power(rho, p):
    w, q = np.linalg.eigh(rho)
    return (q * w.astype(complex) ** p) @ q.conj().T


def check_6():
    worst, worst_oracle = 0.0, 0.0
    for n in (2, 3, 4):
        for i in range(100):
            rng = np.random.default_rng(600 + 100 * n + i)
            phi = random_state(AlgebraSpec.full(n), rng)
            md = ModularData.build(build(AlgebraSpec.full(n)), phi)
            x, y = ginibre(rng, n), ginibre(rng, n)
            worst = max(worst, kms_check(md, x, y))
            # oracle: σ_{i/2}(y) = ρ^{-1/2} y ρ^{1/2}, σ_{-i/2}(x*) = ρ^{1/2} x* ρ^{-1/2}
            r, ri = _spectral_power(phi.rho, 0.5), _spectral_power(phi.rho, -0.5)
            xs = x.conj().T
            lhs = np.trace(phi.rho @ xs @ y)
            rhs = np.trace(phi.rho @ (ri @ y @ r) @ (r @ xs @ ri))
            worst_oracle = max(worst_oracle, abs(lhs - rhs))
    ok = worst <= 1e-9 and worst_oracle <= 1e-9
    return ok, f"300 triples, max KMS defect {worst:.1e} (oracle {worst_oracle:.1e})"


def check_7():
    rt_c, rt_d, marg, pair, aff, not_psd = 0.0, 0.0, 0.0, 0.0, 0.0, 0
    for seed in range(50):
        spec = SPECS[seed % 4]
        phi = random_state(spec, 700 + seed)
        d = max(b.dim for b in spec.blocks) + 1
        tau = random_scaled_phi_channel(spec, phi, d, seed=750 + seed)
        cs = channel_to_coupling(tau, phi)
        not_psd += not psd_check(cs.D).ok
        marg = max(marg, cs.marginal_defect())
        back = coupling_to_channel(cs, phi)
        rt_c = max(rt_c, channel_distance(back, tau))
        rt_d = max(rt_d, np.linalg.norm(channel_to_coupling(back, phi).D - cs.D))
        # oracle: Tr(D (xᵀ ⊗ y)) = Tr(ρ^{1/2} x ρ^{1/2} τ(y)) on the algebra basis
        r = _spectral_power(cs.rho, 0.5)
        basis = tau.algebra.basis_M
        for x in basis:
            for y in basis:
                pair = max(pair, abs(np.trace(cs.D @ np.kron(x.T, y)) - np.trace(r @ x @ r @ tau(y))))
        t2 = random_phi_channel(spec, phi, 2, seed=780 + seed)
        aff = max(aff, affine_defect(tau, t2, np.random.default_rng(seed).uniform(), phi))
    ok = max(rt_c, rt_d, marg, pair) <= 1e-9 and aff <= 1e-10 and not_psd == 0
    return ok, (
        f"50 instances, round trips {rt_c:.1e}/{rt_d:.1e}, marginals {marg:.1e}, "
        f"pairing {pair:.1e}, affinity {aff:.1e}, non-PSD {not_psd}"
    )


def check_8():
    phi = np.eye(2) / 2
    full = build(AlgebraSpec.full(2))
    ent = channel_to_coupling(identity_channel(), phi)
    max_ent = 0.5 * np.outer(np.eye(2).ravel(), np.eye(2).ravel())
    ok_ent = np.allclose(ent.D, max_ent) and coupling_extremality(ent).verdict is Verdict.EXTREMAL
    prod = CouplingState.from_matrix(full, np.kron(phi.T, phi).astype(complex), phi)
    cert = coupling_extremality(prod)
    ok_prod = cert.verdict is Verdict.NOT_EXTREMAL
    if ok_prod:
        dec = decompose_cp_phi(cert.channel, phi, cert.kernel_basis[0])
        ok_prod = dec.reassembly_residual <= 1e-9 and all(max(x.values()) <= 1e-9 for x in dec.defects)
    abelian = build(AlgebraSpec(((1, 1), (1, 1))))
    ok_perm = all(
        coupling_extremality(CouplingState.from_matrix(abelian, np.diag(D).astype(complex), phi)).verdict
        is Verdict.EXTREMAL
        for D in ([0.5, 0, 0, 0.5], [0, 0.5, 0.5, 0])
    )
    return ok_ent and ok_prod and ok_perm, f"entangled {ok_ent}, product decomposed {ok_prod}, permutations {ok_perm}"


def check_9():
    rng = np.random.default_rng(9)
    fails = []
    for i in range(10):
        tau = m_prime_dependent_channel(rng)
        scalar_rank = _rank(tau.kraus)  # scalar independence of the family
        before = len(kraus_comm_kernel(tau))
        red = minimal_kraus(tau)
        after = len(kraus_comm_kernel(red))
        same = channel_distance(red, tau)
        if not (scalar_rank == tau.d and red.d < tau.d and before >= 1 and after == 0 and same <= 1e-9):
            fails.append(i)
    return not fails, f"10 constructions [(2,2)], d 2 -> 1, failing cases {fails}"


def check_10():
    rng = np.random.default_rng(10)
    fixtures = [pinching(), dual_amplitude_damping(0.4), identity_channel(3)]
    fixtures += [random_channel(spec, d, rng) for spec in SPECS for d in (1, 2, 3)]
    changed, choi_fail, choi_cases = 0, 0, 0
    for tau in fixtures:
        idx = stinespring_support(tau).index
        for _ in range(20):
            u = _algebra_unitary(tau.algebra, rng)
            w = _algebra_unitary(tau.algebra, rng)
            changed += stinespring_support(conjugate(tau, u, w)).index != idx
        spec = tau.algebra.spec
        if len(spec.blocks) == 1 and spec.blocks[0].multiplicity == 1:
            choi_cases += 1
            choi_fail += idx != np.linalg.matrix_rank(to_choi(tau).matrix, tol=1e-9)
    ok = changed == 0 and choi_fail == 0
    return ok, f"{len(fixtures)} fixtures x 20 unitaries, {changed} index changes, Choi rank mismatches {choi_fail}/{choi_cases}"


CHECKS = {n: globals()[f"check_{n}"] for n in range(1, 11)}


def _record(n):
    ok, detail = CHECKS[n]()
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok, line


@pytest.mark.parametrize("n", list(CHECKS))
def test_acceptance(n):
    ok, line = _record(n)
    assert ok, line


if __name__ == "__main__":
    results = [_record(n)[0] for n in CHECKS]
    sys.exit(0 if all(results) else 1)
