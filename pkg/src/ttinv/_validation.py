"""Input checks shared by the estimator layer and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .core import TTTensor, from_dense
from .exceptions import BoundsError, ShapeMismatchError

__all__ = [
    "check_tt",
    "check_operator",
    "check_split",
    "check_fraction",
    "check_positive_int",
    "as_tt",
]


def check_tt(obj, name="tensor"):
    if not isinstance(obj, TTTensor):
        raise TypeError(f"{name} must be a TTTensor, got {type(obj).__name__}")
    return obj


def check_operator(obj):
    from .kron import KroneckerSumOperator

    if not isinstance(obj, KroneckerSumOperator):
        raise TypeError(f"expected a KroneckerSumOperator, got {type(obj).__name__}")
    return obj


def check_split(k, d):
    if not isinstance(k, numbers.Integral) or isinstance(k, bool):
        raise TypeError(f"split must be an integer, got {k!r}")
    if not 1 <= k <= d - 1:
        raise BoundsError(f"split {k} out of range 1..{d - 1}")
    return int(k)


def check_fraction(x, name, *, inclusive_high=False):
    """``x`` in ``(0, 1)`` (or ``(0, 1]``)."""
    if not isinstance(x, numbers.Real) or isinstance(x, bool):
        raise TypeError(f"{name} must be a real number")
    ok = 0 < x <= 1 if inclusive_high else 0 < x < 1
    if not ok:
        raise ValueError(f"{name} must lie in (0, 1{']' if inclusive_high else ')'}, got {x}")
    return float(x)


def check_positive_int(x, name, allow_none=False):
    if x is None and allow_none:
        return None
    if not isinstance(x, numbers.Integral) or isinstance(x, bool) or x < 1:
        raise ValueError(f"{name} must be a positive integer, got {x!r}")
    return int(x)


def as_tt(f, mode_sizes):
    """Accept a TT tensor or a dense array (any shape with the right size); return TT and a flag."""
    if isinstance(f, TTTensor):
        if f.mode_sizes != tuple(mode_sizes):
            raise ShapeMismatchError(f"modes {f.mode_sizes} do not match {tuple(mode_sizes)}")
        return f, False
    arr = np.asarray(f)
    if arr.size != int(np.prod(mode_sizes)):
        raise ShapeMismatchError(f"array of size {arr.size} does not fit modes {tuple(mode_sizes)}")
    return from_dense(arr.reshape(mode_sizes), 0.0), True
