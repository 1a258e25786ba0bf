"""``cpcert`` command line: JSON documents in, JSON reports out.

Exit codes: 0 extremal or success, 1 not extremal (certify commands),
2 invalid input, 3 numerically indeterminate.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import AlgebraSpec, build
from .channel import (
    minimal_kraus,
    random_channel,
    random_phi_channel,
    random_scaled_phi_channel,
    random_state,
    stinespring_support,
)
from .coupling import channel_to_coupling, coupling_extremality, coupling_to_channel, decompose_cp_phi, extremality_cp_phi
from .extremal import Verdict, decompose_cp, extremality_choi, extremality_cp, radon_nikodym
from .io import (
    certificate_to_json,
    channel_from_json,
    channel_to_json,
    coupling_from_json,
    coupling_to_json,
    decomposition_to_json,
    dumps,
    encode_kernel_element,
    encode_matrix,
    load_json,
    state_from_json,
    state_to_json,
)
from .linalg import DEFAULT_TOL, CertError, IndeterminateError, InvalidInputError
from .modular import ModularData, adjoint_channel, duality_defect, kms_check

EXIT_OK, EXIT_NOT_EXTREMAL, EXIT_INVALID, EXIT_INDETERMINATE = 0, 1, 2, 3

NEEDS_STATE = {"certify-phi", "adjoint", "couple", "kms-check"}
COMMANDS = ("certify", "certify-phi", "reduce", "rn", "adjoint", "couple", "uncouple", "random", "kms-check")


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None = None
    state: str | None = None
    eta: str | None = None
    c: float = 1.0
    tol_rank: float | None = None
    tol_residual: float | None = None
    seed: int = 0
    out: str | None = None
    blocks: str | None = None
    kraus: int = 2
    kind: str = "haar"
    method: str = "auto"
    coupling: bool = False
    jobs: int | None = None

    def tolerances(self):
        env = os.environ.get("CPCERT_TOL_RANK")
        rank = self.tol_rank
        if rank is None and env:
            try:
                rank = float(env)
            except ValueError as exc:
                raise InvalidInputError(f"CPCERT_TOL_RANK is not a number: {env!r}") from exc
        return DEFAULT_TOL.with_overrides(rank_tol=rank, residual_tol=self.tol_residual)


def _verdict_code(verdict):
    return {
        Verdict.EXTREMAL: EXIT_OK,
        Verdict.NOT_EXTREMAL: EXIT_NOT_EXTREMAL,
        Verdict.INDETERMINATE: EXIT_INDETERMINATE,
        Verdict.HYPOTHESIS_UNMET: EXIT_INVALID,
    }[verdict]


def _need(value, flag):
    if value is None:
        raise InvalidInputError(f"this command needs {flag}")
    return value


def _load_state(cfg, tol):
    return state_from_json(load_json(_need(cfg.state, "--state")), tol)


def _parse_blocks(text):
    if not text:
        raise InvalidInputError("random needs --blocks, e.g. '2:1,1:2' (dim:multiplicity)")
    try:
        pairs = []
        for part in text.split(","):
            dim, _, mult = part.strip().partition(":")
            pairs.append((int(dim), int(mult or 1)))
    except ValueError as exc:
        raise InvalidInputError(f"bad --blocks value {text!r}") from exc
    return AlgebraSpec(tuple(pairs))


# -- commands --------------------------------------------------------------


def cmd_certify(cfg, tol):
    tau = channel_from_json(load_json(cfg.input))
    cert = extremality_cp(tau, tol)
    report = {"certificate": certificate_to_json(cert)}
    if tau.algebra.spec.is_full and cert.verdict is not Verdict.INDETERMINATE:
        choi = extremality_choi(tau, tol)
        report["choi_check"] = {
            "verdict": choi.verdict.value,
            "kernel_dim": choi.kernel_dim,
            "agrees": choi.verdict is cert.verdict,
        }
    if cert.verdict is Verdict.NOT_EXTREMAL:
        dec = decompose_cp(cert.channel, cert.kernel_basis[0], tol)
        report["decomposition"] = decomposition_to_json(dec, cert.kernel_basis[0], cert.channel.d)
    return report, _verdict_code(cert.verdict)


def cmd_certify_phi(cfg, tol):
    phi = _load_state(cfg, tol)
    if cfg.coupling:
        cert = coupling_extremality(coupling_from_json(load_json(cfg.input), tol, phi), phi, tol, cfg.method)
    else:
        cert = extremality_cp_phi(channel_from_json(load_json(cfg.input)), phi, tol, cfg.method)
    report = {"certificate": certificate_to_json(cert)}
    if cert.verdict is Verdict.NOT_EXTREMAL:
        dec = decompose_cp_phi(cert.channel, phi, cert.kernel_basis[0], tol)
        report["decomposition"] = decomposition_to_json(dec, cert.kernel_basis[0], cert.channel.d)
    return report, _verdict_code(cert.verdict)


def cmd_reduce(cfg, tol):
    tau = channel_from_json(load_json(cfg.input))
    sd = stinespring_support(tau, tol)
    red = minimal_kraus(tau, tol, sd)
    return {
        "index": sd.index,
        "input_kraus": tau.d,
        "block_ranks": [list(r) for r in sd.block_ranks],
        "balanced": sd.balanced,
        "channel": channel_to_json(red),
    }, EXIT_OK


def cmd_rn(cfg, tol):
    tau = channel_from_json(load_json(cfg.input))
    eta = channel_from_json(load_json(_need(cfg.eta, "--eta")))
    if eta.algebra.spec != tau.algebra.spec:
        raise InvalidInputError("η and τ act on different algebras")
    rn = radon_nikodym(eta, tau, cfg.c, tol)
    return {
        "t": encode_kernel_element(rn.t, tau.d),
        "psd": rn.psd.value,
        "min_eig": rn.min_eig,
        "max_eig": rn.max_eig,
        "domination_constant": rn.domination_constant,
        "residual": rn.residual,
        "notes": rn.notes,
    }, EXIT_OK


def cmd_adjoint(cfg, tol):
    tau = channel_from_json(load_json(cfg.input))
    md = ModularData.build(tau.algebra, _load_state(cfg, tol), tol)
    tt = adjoint_channel(md, tau, tol)
    return {
        "channel": channel_to_json(tt),
        "duality_defect": duality_defect(md, tau, tt),
        "unitality_defect": tt.unitality_defect(),
        "index": stinespring_support(tau, tol).index,
        "adjoint_index": stinespring_support(tt, tol).index,
    }, EXIT_OK


def cmd_couple(cfg, tol):
    tau = channel_from_json(load_json(cfg.input))
    cs = channel_to_coupling(tau, _load_state(cfg, tol), tol)
    doc = coupling_to_json(cs)
    doc["marginal_defect"] = cs.marginal_defect()
    return doc, EXIT_OK


def cmd_uncouple(cfg, tol):
    phi = _load_state(cfg, tol) if cfg.state else None
    cs = coupling_from_json(load_json(cfg.input), tol, phi)
    tau = coupling_to_channel(cs, phi, tol)
    return {"channel": channel_to_json(tau), "index": tau.d}, EXIT_OK


def cmd_random(cfg, tol):
    spec = _parse_blocks(cfg.blocks)
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "haar":
        return channel_to_json(random_channel(spec, cfg.kraus, rng)), EXIT_OK
    phi = _load_state(cfg, tol) if cfg.state else random_state(spec, rng)
    if phi.N != spec.carrier_dim:
        raise InvalidInputError("state and --blocks describe different spaces")
    gen = random_phi_channel if cfg.kind == "phi" else random_scaled_phi_channel
    tau = gen(spec, phi, cfg.kraus, rng)
    doc = channel_to_json(tau)
    doc["state"] = state_to_json(phi.rho)["state"]
    return doc, EXIT_OK


def cmd_kms(cfg, tol):
    phi = _load_state(cfg, tol)
    spec = AlgebraSpec.full(phi.N)
    if cfg.input:
        spec = channel_from_json(load_json(cfg.input)).algebra.spec
    model = build(spec)
    md = ModularData.build(model, phi, tol)
    basis = model.basis_M
    table = [[kms_check(md, x, y) for y in basis] for x in basis]
    worst = max(max(row) for row in table)
    return {
        "max_defect": worst,
        "passes": bool(worst <= tol.residual_tol),
        "defect_table": table,
        "rho": encode_matrix(md.rho),
    }, EXIT_OK


HANDLERS = {
    "certify": cmd_certify,
    "certify-phi": cmd_certify_phi,
    "reduce": cmd_reduce,
    "rn": cmd_rn,
    "adjoint": cmd_adjoint,
    "couple": cmd_couple,
    "uncouple": cmd_uncouple,
    "random": cmd_random,
    "kms-check": cmd_kms,
}


def run(cfg):
    """Execute one command; returns ``(exit_code, report)``. Never raises on bad input."""
    report = {"command": cfg.command, "version": __version__}
    try:
        tol = cfg.tolerances()
        report["tolerances"] = tol.as_dict()
        if cfg.command in NEEDS_STATE:
            _need(cfg.state, "--state")
        if cfg.command not in ("random", "kms-check"):
            _need(cfg.input, "--input")
        body, code = HANDLERS[cfg.command](cfg, tol)
        report["result"] = body
    except IndeterminateError as exc:
        report["error"] = {"kind": "indeterminate", "message": str(exc), "spectrum": exc.spectrum.tolist()}
        code = EXIT_INDETERMINATE
    except (CertError, ValueError) as exc:
        report["error"] = {"kind": "invalid_input", "message": str(exc)}
        code = EXIT_INVALID
    report["exit_code"] = code
    return code, report


def _run_one(args):
    cfg, path = args
    code, report = run(RunConfig(**{**cfg.__dict__, "input": str(path)}))
    return path.name, code, report


def run_batch(cfg):
    """Run the command on every ``*.json`` in a directory, in parallel, sorted by name."""
    files = sorted(Path(cfg.input).glob("*.json"))
    if not files:
        return EXIT_INVALID, {"command": cfg.command, "error": {"kind": "invalid_input", "message": "no .json files"}}
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(_run_one, [(cfg, f) for f in files]))
    items = [{"file": name, "exit_code": code, "report": rep} for name, code, rep in results]
    return max(code for _, code, _ in results), {"command": cfg.command, "batch": items}


def build_parser():
    p = argparse.ArgumentParser(prog="cpcert", description="Certify extremality of unital CP maps.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="channel or coupling JSON; a directory runs in batch mode")
    p.add_argument("--state", help="state JSON with a faithful density")
    p.add_argument("--eta", help="dominated channel JSON (rn)")
    p.add_argument("--c", type=float, default=1.0, help="domination constant (rn)")
    p.add_argument("--tol-rank", type=float, help="relative singular value cutoff")
    p.add_argument("--tol-residual", type=float, help="absolute residual cutoff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--blocks", help="algebra for random, e.g. '2:1,1:2' (dim:multiplicity)")
    p.add_argument("--kraus", type=int, default=2, help="number of Kraus operators (random)")
    p.add_argument("--kind", choices=("haar", "phi", "scaled"), default="haar", help="generator (random)")
    p.add_argument("--method", choices=("auto", "inner", "general"), default="auto", help="criterion (certify-phi)")
    p.add_argument("--coupling", action="store_true", help="certify-phi input is a coupling document")
    p.add_argument("--jobs", type=int, help="worker processes for batch mode")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    if cfg.input and Path(cfg.input).is_dir():
        code, report = run_batch(cfg)
    else:
        code, report = run(cfg)
    text = dumps(report)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
