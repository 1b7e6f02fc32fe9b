"""Reading and writing the ``.ttj`` structured-text format.

A ``.ttj`` file is a JSON document::

    {"kind": "tt_tensor", "order": d, "modes": [...], "ranks": [...],
     "dtype": "complex128", "cores": [[re, im, re, im, ...], ...]}

Each core is flattened in row-major ``(r_{k-1}, n_k, r_k)`` order with real
and imaginary parts interleaved. TT matrices use ``kind = "tt_matrix"`` and
store ``row_modes``/``col_modes``; dense tensors use ``kind = "dense"``, omit
``ranks`` and keep all entries in a single element of ``cores``. Kronecker-sum
operators (``kind = "kron_sum_operator"``) list their factor pairs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import TTMatrix, TTTensor

__all__ = [
    "encode_array",
    "decode_array",
    "tt_to_dict",
    "tt_from_dict",
    "save",
    "load",
]


def encode_array(a):
    """Flatten to alternating real/imaginary float64 values (row-major)."""
    a = np.asarray(a, dtype=np.complex128).ravel()
    out = np.empty(2 * a.size)
    out[0::2] = a.real
    out[1::2] = a.imag
    return out.tolist()


def decode_array(values, shape):
    v = np.asarray(values, dtype=np.float64)
    if v.size != 2 * int(np.prod(shape)):
        raise ValueError(f"expected {2 * int(np.prod(shape))} values for shape {tuple(shape)}, got {v.size}")
    return (v[0::2] + 1j * v[1::2]).reshape(shape)


def _maybe_real(a):
    return a.real.copy() if not np.any(a.imag) else a


def tt_to_dict(obj):
    from .kron import KroneckerSumOperator

    if isinstance(obj, TTTensor):
        return {
            "kind": "tt_tensor",
            "order": obj.d,
            "modes": list(obj.mode_sizes),
            "ranks": list(obj.ranks),
            "dtype": "complex128",
            "cores": [encode_array(c) for c in obj.cores],
        }
    if isinstance(obj, TTMatrix):
        return {
            "kind": "tt_matrix",
            "order": obj.d,
            "row_modes": list(obj.row_sizes),
            "col_modes": list(obj.col_sizes),
            "ranks": list(obj.ranks),
            "dtype": "complex128",
            "cores": [encode_array(c) for c in obj.cores],
        }
    if isinstance(obj, KroneckerSumOperator):
        return obj.to_dict()
    arr = np.asarray(obj)
    return {
        "kind": "dense",
        "order": arr.ndim,
        "modes": list(arr.shape),
        "dtype": "complex128",
        "cores": [encode_array(arr)],
    }


def tt_from_dict(doc):
    kind = doc.get("kind", "tt_tensor" if "ranks" in doc else "dense")
    if doc.get("dtype", "complex128") != "complex128":
        raise ValueError(f"unsupported dtype {doc['dtype']!r}")
    if kind == "tt_tensor":
        modes, ranks = doc["modes"], doc["ranks"]
        if len(modes) != doc["order"] or len(ranks) != doc["order"] + 1:
            raise ValueError("inconsistent order/modes/ranks")
        cores = [
            _maybe_real(decode_array(v, (ranks[k], modes[k], ranks[k + 1])))
            for k, v in enumerate(doc["cores"])
        ]
        return TTTensor(tuple(cores))
    if kind == "tt_matrix":
        rm, cm, ranks = doc["row_modes"], doc["col_modes"], doc["ranks"]
        cores = [
            _maybe_real(decode_array(v, (ranks[k], rm[k], cm[k], ranks[k + 1])))
            for k, v in enumerate(doc["cores"])
        ]
        return TTMatrix(tuple(cores))
    if kind == "dense":
        return _maybe_real(decode_array(doc["cores"][0], doc["modes"]))
    if kind == "kron_sum_operator":
        from .kron import KroneckerSumOperator

        return KroneckerSumOperator.from_dict(doc)
    raise ValueError(f"unknown document kind {kind!r}")


def save(obj, path):
    """Write a TT tensor, TT matrix, dense array or operator to ``path``."""
    path = Path(path)
    path.write_text(json.dumps(tt_to_dict(obj), allow_nan=False))
    return path


def load(path):
    return tt_from_dict(json.loads(Path(path).read_text()))
