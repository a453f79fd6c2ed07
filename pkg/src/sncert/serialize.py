"""JSON serialization for all domain types.

Complex entries are encoded as [re, im] pairs, matrices as row-major nested
arrays.  Python's repr-based float formatting makes encode/decode round
trips bit exact.
"""

from __future__ import annotations

import json

import numpy as np

from .cone import SnDecomposition
from .objects import (
    BipartiteState,
    ChoiMatrix,
    DistributedMeasurement,
    DmProvenance,
    Ensemble,
    InstrumentProvenance,
    Povm,
    ProductChannel,
    TeleportationInstrument,
)


def encode_matrix(m) -> list:
    a = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in a]


def decode_matrix(rows) -> np.ndarray:
    return np.array([[complex(x[0], x[1]) for x in row] for row in rows], dtype=complex)


def encode_vector(v) -> list:
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex)]


def decode_vector(entries) -> np.ndarray:
    return np.array([complex(x[0], x[1]) for x in entries], dtype=complex)


def _enc_decomposition(dec: SnDecomposition | None):
    if dec is None:
        return None
    return {
        "weights": [float(w) for w in dec.weights],
        "vectors": [encode_vector(v) for v in dec.vectors],
        "dims": list(dec.dims),
        "k": dec.k,
        "residual": dec.residual,
    }


def _dec_decomposition(d):
    if d is None:
        return None
    return SnDecomposition(
        weights=np.asarray(d["weights"], dtype=float),
        vectors=[decode_vector(v) for v in d["vectors"]],
        dims=tuple(d["dims"]),
        k=int(d["k"]),
        residual=float(d["residual"]),
    )


def to_json_dict(obj) -> dict:
    if isinstance(obj, BipartiteState):
        return {
            "type": "bipartite_state",
            "dims": list(obj.dims),
            "is_substate": obj.is_substate,
            "matrix": encode_matrix(obj.mat),
        }
    if isinstance(obj, Povm):
        return {
            "type": "povm",
            "dims": list(obj.dims),
            "elements": [encode_matrix(e) for e in obj.elements],
        }
    if isinstance(obj, DistributedMeasurement):
        return {
            "type": "distributed_measurement",
            "dims": list(obj.dims),
            "elements": [[encode_matrix(e) for e in row] for row in obj.elements],
            "provenance": None
            if obj.provenance is None
            else {
                "state": to_json_dict(obj.provenance.state),
                "povm_a": to_json_dict(obj.provenance.povm_a),
                "povm_b": to_json_dict(obj.provenance.povm_b),
                "certificate": _enc_decomposition(obj.provenance.certificate),
            },
        }
    if isinstance(obj, ChoiMatrix):
        return {
            "type": "choi",
            "d_in": obj.d_in,
            "d_out": obj.d_out,
            "normalization": obj.normalization,
            "matrix": encode_matrix(obj.mat),
        }
    if isinstance(obj, TeleportationInstrument):
        return {
            "type": "teleportation_instrument",
            "d_in": obj.d_in,
            "d_out": obj.d_out,
            "chois": [encode_matrix(c.mat) for c in obj.chois],
            "provenance": None
            if obj.provenance is None
            else {
                "state": to_json_dict(obj.provenance.state),
                "povm": to_json_dict(obj.provenance.povm),
                "certificate": _enc_decomposition(obj.provenance.certificate),
            },
        }
    if isinstance(obj, Ensemble):
        return {
            "type": "ensemble",
            "probs": [[float(p) for p in row] for row in obj.probs],
            "states": [[to_json_dict(s) for s in row] for row in obj.states],
        }
    if isinstance(obj, ProductChannel):
        return {
            "type": "product_channel",
            "choi_a": to_json_dict(obj.choi_a),
            "choi_b": to_json_dict(obj.choi_b),
        }
    if isinstance(obj, SnDecomposition):
        d = _enc_decomposition(obj)
        d["type"] = "sn_decomposition"
        return d
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_json_dict(d: dict):
    kind = d.get("type")
    if kind == "bipartite_state":
        return BipartiteState(
            decode_matrix(d["matrix"]), tuple(d["dims"]), bool(d.get("is_substate", False))
        )
    if kind == "povm":
        return Povm(tuple(decode_matrix(e) for e in d["elements"]), tuple(d["dims"]))
    if kind == "distributed_measurement":
        prov = d.get("provenance")
        provenance = None
        if prov is not None:
            provenance = DmProvenance(
                state=from_json_dict(prov["state"]),
                povm_a=from_json_dict(prov["povm_a"]),
                povm_b=from_json_dict(prov["povm_b"]),
                certificate=_dec_decomposition(prov.get("certificate")),
            )
        return DistributedMeasurement(
            tuple(tuple(decode_matrix(e) for e in row) for row in d["elements"]),
            tuple(d["dims"]),
            provenance,
        )
    if kind == "choi":
        return ChoiMatrix(
            decode_matrix(d["matrix"]), int(d["d_in"]), int(d["d_out"]), d["normalization"]
        )
    if kind == "teleportation_instrument":
        chois = tuple(
            ChoiMatrix(decode_matrix(c), int(d["d_in"]), int(d["d_out"])) for c in d["chois"]
        )
        prov = d.get("provenance")
        provenance = None
        if prov is not None:
            provenance = InstrumentProvenance(
                state=from_json_dict(prov["state"]),
                povm=from_json_dict(prov["povm"]),
                certificate=_dec_decomposition(prov.get("certificate")),
            )
        return TeleportationInstrument(chois, provenance)
    if kind == "ensemble":
        return Ensemble(
            np.asarray(d["probs"], dtype=float),
            tuple(tuple(from_json_dict(s) for s in row) for row in d["states"]),
        )
    if kind == "product_channel":
        return ProductChannel(from_json_dict(d["choi_a"]), from_json_dict(d["choi_b"]))
    if kind == "sn_decomposition":
        return _dec_decomposition(d)
    raise ValueError(f"unknown or missing type tag: {kind!r}")


def dumps(obj, **kw) -> str:
    return json.dumps(to_json_dict(obj), sort_keys=True, **kw)


def loads(s: str):
    return from_json_dict(json.loads(s))
