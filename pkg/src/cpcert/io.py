"""JSON encoding of matrices, channels, states, couplings and reports.

A matrix is a list of rows; each entry is a ``[re, im]`` pair. A flat list
of ``N*N`` pairs is also accepted for square matrices, and plain real
numbers are accepted in place of pairs. Output always uses the nested
pair form, and every report dict is built with a fixed key order.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .algebra import AlgebraSpec, build
from .channel import DensityState, KrausChannel
from .linalg import InvalidInputError


def _num(z):
    # -0.0 prints differently from 0.0; normalize for byte-stable output
    return 0.0 if z == 0 else float(z)


def encode_matrix(a):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise InvalidInputError("only 2-dimensional arrays are encoded as matrices")
    return [[[_num(z.real), _num(z.imag)] for z in row] for row in a]


def _entry(e):
    if isinstance(e, (int, float)) and not isinstance(e, bool):
        return complex(e, 0.0)
    if isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(t, (int, float)) for t in e):
        return complex(e[0], e[1])
    raise InvalidInputError(f"matrix entry must be a number or a [re, im] pair, got {e!r}")


def decode_matrix(obj, name="matrix"):
    """Decode a square matrix, trying the nested reading before the flat one."""
    if not isinstance(obj, list) or not obj:
        raise InvalidInputError(f"{name} must be a non-empty list")
    out = None
    if all(isinstance(r, list) for r in obj) and len({len(r) for r in obj}) == 1 and len(obj[0]) == len(obj):
        try:
            out = np.array([[_entry(e) for e in r] for r in obj], dtype=complex)
        except InvalidInputError:
            out = None
    if out is None:
        flat = [_entry(e) for e in obj]
        n = math.isqrt(len(flat))
        if n * n != len(flat):
            raise InvalidInputError(f"{name} is neither a square nested matrix nor a flat square list")
        out = np.array(flat, dtype=complex).reshape(n, n)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return out


def encode_spectrum(values):
    return [_num(v) for v in np.asarray(values, dtype=float)]


def encode_residuals(res):
    out = {}
    for k, v in res.items():
        out[k] = v if isinstance(v, (int, str)) else _num(v)
    return out


def encode_kernel_element(lam, d):
    """``λ`` as a ``d × d`` list of matrices: entry ``[k][j]`` is ``λ^k_j``."""
    from .extremal import blocks

    arr = blocks(lam, d)
    return [[encode_matrix(arr[k, j]) for j in range(d)] for k in range(d)]


def decode_kernel_element(obj):
    from .extremal import from_blocks

    try:
        arr = np.array([[decode_matrix(m) for m in row] for row in obj])
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed kernel element: {exc}") from exc
    if arr.ndim != 4 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError("kernel element must be a square array of matrices")
    return from_blocks(arr)


# -- documents -------------------------------------------------------------


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from exc


def dumps(doc):
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False) + "\n"


def _algebra(obj, fallback_dim):
    if obj is None:
        return AlgebraSpec.full(fallback_dim)
    return AlgebraSpec.from_json(obj)


def channel_to_json(tau):
    return {
        "algebra": tau.algebra.spec.to_json(),
        "kraus": [encode_matrix(v) for v in tau.kraus],
        "label": tau.label,
    }


def channel_from_json(doc):
    if not isinstance(doc, dict) or "kraus" not in doc:
        raise InvalidInputError("channel document needs a 'kraus' list")
    ks = [decode_matrix(k, "Kraus operator") for k in doc["kraus"]]
    if not ks:
        raise InvalidInputError("channel needs at least one Kraus operator")
    spec = _algebra(doc.get("algebra"), ks[0].shape[0])
    return KrausChannel(build(spec), tuple(ks), str(doc.get("label", "")))


def state_to_json(rho, spec=None):
    doc = {"state": encode_matrix(rho)}
    if spec is not None:
        doc["algebra"] = spec.to_json()
    return doc


def state_from_json(doc, tol):
    if not isinstance(doc, dict) or "state" not in doc:
        raise InvalidInputError("state document needs a 'state' matrix")
    return DensityState.from_matrix(decode_matrix(doc["state"], "state"), tol)


def coupling_to_json(cs):
    return {
        "algebra": cs.model.spec.to_json(),
        "coupling": encode_matrix(cs.D),
        "state": encode_matrix(cs.rho),
    }


def coupling_from_json(doc, tol, phi=None):
    from .coupling import CouplingState

    if not isinstance(doc, dict) or "coupling" not in doc:
        raise InvalidInputError("coupling document needs a 'coupling' matrix")
    D = decode_matrix(doc["coupling"], "coupling")
    if phi is None:
        if "state" not in doc:
            raise InvalidInputError("coupling document needs a 'state' or a --state file")
        phi = DensityState.from_matrix(decode_matrix(doc["state"], "state"), tol)
    spec = _algebra(doc.get("algebra"), phi.N)
    return CouplingState.from_matrix(build(spec), D, phi, tol)


def certificate_to_json(cert):
    d = cert.channel.d if cert.channel is not None else None
    doc = {
        "verdict": cert.verdict.value,
        "kernel_dim": cert.kernel_dim,
        "kernel_basis": [encode_kernel_element(h, d) for h in cert.kernel_basis],
        "singular_spectrum": encode_spectrum(cert.singular_spectrum),
        "residuals": encode_residuals(cert.residuals),
        "notes": list(cert.notes),
        "coefficients": cert.coefficients,
        "index": cert.index,
    }
    method = getattr(cert, "method", None)
    if method is not None:
        doc["method"] = method
    doc["channel"] = channel_to_json(cert.channel) if cert.channel is not None else None
    return doc


def decomposition_to_json(dec, kernel_element, d):
    doc = {
        "kernel_element": encode_kernel_element(kernel_element, d),
        "plus": channel_to_json(dec.plus),
        "minus": channel_to_json(dec.minus),
        "reassembly_residual": _num(dec.reassembly_residual),
        "separation": _num(dec.separation),
    }
    if hasattr(dec, "defects"):
        doc["defects"] = [encode_residuals(x) for x in dec.defects]
    else:
        doc["kernel_residual"] = _num(dec.kernel_residual)
        doc["unitality"] = [_num(x) for x in dec.unitality]
    return doc
