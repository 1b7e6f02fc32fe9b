"""Low-rank certificates for the Hadamard inverse of a diagonalized operator.

With ``z_s = mu_s / lam_s``, the inverse tensor has displacement structure
across a split ``k``. If the partial sums over modes ``1..k`` lie in a disk
``|z - c| <= D`` and the negated partial sums over ``k+1..d`` stay at
distance ``D + D'`` from ``c``, the singular values of the split-``k``
matricization decay at least like ``q^j`` with ``q = D / (D + D')``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from math import prod
from typing import NamedTuple

import numpy as np

from .core import DEFAULT_DENSE_CAP, matricize, to_dense
from .exceptions import (
    BoundsError,
    BudgetExceededError,
    CertificateStateError,
    InvertibilityError,
    SizeCapError,
)

__all__ = [
    "DiskCertificate",
    "TheoremFactor",
    "sum_extremes",
    "ratio_extremes",
    "make_disk",
    "verify_condition",
    "decay_factor",
    "rank_bound",
    "empirical_sv_decay",
    "eps_rank",
    "theorem_decay_factor",
    "magnitude_bounds",
]

DEFAULT_BUDGET = 10**7
HEURISTIC_STARTS = 20
RANK_N_RULE = "n = min(prod_{s<=k} n_s, prod_{s>k} n_s)"


@dataclass(frozen=True)
class DiskCertificate:
    split_k: int
    center: complex
    radius: float
    gap: float | None
    decay_q: float | None
    tau: float | None
    rank_bound: int | None
    condition_variant: str
    min_C: float
    method: str
    sound: bool
    d: int
    split_dims: tuple
    eps: float | None = None
    rank_n_rule: str = RANK_N_RULE

    @property
    def certified(self):
        return self.decay_q is not None

    def to_dict(self):
        out = asdict(self)
        out["center"] = [float(self.center.real), float(self.center.imag)]
        out["split_dims"] = list(self.split_dims)
        out["decay_q"] = "uncertified" if self.decay_q is None else self.decay_q
        out["certified"] = self.certified
        return out


class TheoremFactor(NamedTuple):
    q: float
    certified: bool


def _ratios(fact):
    out = []
    for k, (mu, lam) in enumerate(zip(fact.mu, fact.lam), start=1):
        lam = np.asarray(lam)
        if np.any(lam == 0):
            raise InvertibilityError(f"factor {k} has a zero lambda entry")
        out.append(np.asarray(mu) / lam)
    return out


def _extremes(ratios):
    a1 = sum(float(np.min(z.real)) for z in ratios)
    b1 = sum(float(np.max(z.real)) for z in ratios)
    a2 = sum(float(np.min(z.imag)) for z in ratios)
    b2 = sum(float(np.max(z.imag)) for z in ratios)
    return a1, b1, a2, b2


def sum_extremes(fact, modes):
    """Exact real/imaginary extremes of ``sum_{s in modes} mu_s / lam_s`` (1-based modes)."""
    z = _ratios(fact)
    return _extremes([z[s - 1] for s in modes])


def _check_split(fact, k):
    if not 1 <= k <= fact.d - 1:
        raise BoundsError(f"split {k} out of range 1..{fact.d - 1}")


def ratio_extremes(fact, k):
    """``(alpha1, beta1, alpha2, beta2)`` of the partial sums over modes ``1..k``.

    Real and imaginary parts of a sum of per-mode terms are separable, so the
    extremes are sums of per-mode extremes and no enumeration is needed.
    """
    _check_split(fact, k)
    return sum_extremes(fact, range(1, k + 1))


def make_disk(alpha1, beta1, alpha2, beta2):
    """Smallest disk containing the rectangle ``[alpha1, beta1] x [alpha2, beta2]``."""
    if alpha1 > beta1 or alpha2 > beta2:
        raise ValueError("rectangle bounds must satisfy alpha <= beta")
    c = complex((alpha1 + beta1) / 2, (alpha2 + beta2) / 2)
    D = math.hypot((beta1 - alpha1) / 2, (beta2 - alpha2) / 2)
    return c, D


def _min_exact(ratios, c, budget):
    total = prod(len(z) for z in ratios)
    if total > budget:
        raise BudgetExceededError(f"exact enumeration needs {total} tuples (budget {budget})")
    head, tail = ratios[0], ratios[1:]
    rest = np.zeros(1, dtype=complex)
    for z in tail:
        rest = (rest[:, None] + z[None, :]).ravel()
    rest = rest + c
    return float(min(np.min(np.abs(rest + h) ** 2) for h in head))


def _min_heuristic(ratios, c, seed):
    """Multistart coordinate descent on ``|sum_s z_s[j_s] + c|^2``."""
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(HEURISTIC_STARTS):
        idx = [int(rng.integers(len(z))) for z in ratios]
        total = c + sum(z[j] for z, j in zip(ratios, idx))
        for _sweep in range(50):
            moved = False
            for s, z in enumerate(ratios):
                partial = total - z[idx[s]]
                j = int(np.argmin(np.abs(partial + z) ** 2))
                if j != idx[s] and abs(partial + z[j]) < abs(total):
                    idx[s], total, moved = j, partial + z[j], True
            if not moved:
                break
        best = min(best, abs(total) ** 2)
    return float(best)


def _min_bound(ratios, c):
    """Squared distance from ``-c`` to the bounding rectangle of the sums (a lower bound)."""
    a1, b1, a2, b2 = _extremes(ratios)
    dx = max(a1 + c.real, 0.0, -(b1 + c.real))
    dy = max(a2 + c.imag, 0.0, -(b2 + c.imag))
    return dx * dx + dy * dy


def _attempt(disk_side, other_side, method, budget, seed):
    c, D = make_disk(*_extremes(disk_side))
    if method == "exact":
        min_c, label, sound = _min_exact(other_side, c, budget), "exact-enumeration", True
    elif method == "bound":
        min_c, label, sound = _min_bound(other_side, c), "separable-bound", True
    else:
        min_c, label, sound = _min_heuristic(other_side, c, seed), "alternating-heuristic", False
    return c, D, min_c, label, sound


def verify_condition(fact, k, method="exact", budget=DEFAULT_BUDGET, eps=None, seed=0):
    """Check the disk condition at split ``k`` and return a :class:`DiskCertificate`.

    ``method`` selects how ``min_C = min |sum_{other side} z + c|^2`` is found:

    * ``"exact"`` enumerates all tuples (at most ``budget``), sound;
    * ``"bound"`` uses the distance to the separable bounding rectangle,
      a lower bound on ``min_C`` and hence sound but conservative;
    * ``"heuristic"`` runs a seeded multistart coordinate descent. The result
      is never sound, so no decay factor is claimed.

    The ``1..k`` side is tried inside the disk first; if that fails the roles
    of the two index blocks are swapped.
    """
    _check_split(fact, k)
    if method not in ("exact", "bound", "heuristic"):
        raise ValueError(f"unknown method {method!r}")
    z = _ratios(fact)
    left, right = z[:k], z[k:]
    rows, cols = prod(fact.mode_sizes[:k]), prod(fact.mode_sizes[k:])

    def build(variant, attempt):
        c, D, min_c, label, sound = attempt
        ok = min_c > D * D
        gap = math.sqrt(min_c) - D if ok else None
        q = D / (D + gap) if ok and sound else None
        cert = DiskCertificate(
            split_k=k, center=complex(c), radius=float(D), gap=gap, decay_q=q, tau=q,
            rank_bound=None, condition_variant=variant, min_C=float(min_c), method=label,
            sound=sound, d=fact.d, split_dims=(rows, cols), eps=eps,
        )
        if q is not None and eps is not None:
            cert = _replace(cert, rank_bound=rank_bound(cert, eps))
        return cert, ok

    first, ok = build("cond-1", _attempt(left, right, method, budget, seed))
    if ok:
        return first
    try:
        second, ok = build("cond-2", _attempt(right, left, method, budget, seed))
    except BudgetExceededError:
        return first
    return second if ok else first


def _replace(cert, **changes):
    data = {**cert.__dict__, **changes}
    return DiskCertificate(**data)


def decay_factor(cert):
    """``q = D / (D + D')``; singular values satisfy ``sigma_{j+1} <= q^j sigma_1``."""
    if cert.decay_q is None:
        raise CertificateStateError("certificate is uncertified; no decay factor available")
    return cert.decay_q


def rank_bound(cert, eps, split_dims=None, d=None):
    """Upper bound on the ``eps``-rank at the certificate's split.

    ``ceil(log_{tau^2}((1 - tau^2) eps^2 / (d - 1) + tau^(2n)))`` with
    ``n = min(rows, cols)`` of the matricization, clipped to ``[1, n]``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    tau = cert.tau
    if tau is None or not tau < 1:
        raise CertificateStateError("rank bound needs a certified tau < 1")
    rows, cols = cert.split_dims if split_dims is None else split_dims
    d = cert.d if d is None else d
    n = min(rows, cols)
    if tau == 0:
        return 1
    t2 = tau * tau
    arg = (1 - t2) * eps * eps / max(d - 1, 1) + math.exp(2 * n * math.log(tau))
    r = math.ceil(math.log(arg) / math.log(t2) - 1e-12)
    return int(min(max(r, 1), n))


def empirical_sv_decay(L, k, cap=DEFAULT_DENSE_CAP):
    """Singular values of the split-``k`` matricization of ``1 / L`` (dense oracle)."""
    if L.size > cap:
        raise SizeCapError(f"dense tensor would hold {L.size} entries (cap {cap})")
    if not 1 <= k <= L.d - 1:
        raise BoundsError(f"split {k} out of range 1..{L.d - 1}")
    dense = to_dense(L, cap)
    if np.any(dense == 0):
        raise InvertibilityError("tensor has zero entries")
    return np.linalg.svd(matricize(1.0 / dense, k), compute_uv=False)


def eps_rank(singular_values, eps, d):
    """Smallest ``r`` whose discarded tail is at most ``eps^2 ||X||^2 / (d - 1)``."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total == 0:
        return 1
    limit = eps * eps * total / max(d - 1, 1)
    tails = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]])
    return max(int(np.argmax(tails <= limit)), 1)


def theorem_decay_factor(kind, params):
    """Closed-form decay factors for the three model problems.

    ``poisson``: ``kappa, k, d``; ``bgk``: ``k, dt_over_h`` and the real and
    imaginary extremes ``re_min, re_max, im_min, im_max`` of the eigenvalues
    of ``V x (h grad)``; ``fp``: ``k, d, dt, h, mu_1, mu_n`` (the latter the
    extreme eigenvalues of the tridiagonal drift-diffusion part). The
    returned flag is ``False`` whenever the formula leaves ``[0, 1)``.
    """
    p = dict(params)
    if kind == "poisson":
        kappa, k, d = float(p["kappa"]), p["k"], p["d"]
        q = (k * kappa - k) / (k * kappa + 2 * d - k)
    elif kind == "bgk":
        k, r = p["k"], float(p["dt_over_h"])
        spread = math.hypot(p["re_max"] - p["re_min"], p["im_max"] - p["im_min"])
        q = k * r * spread / (4 + k * p["re_max"] * r + 2 * k * p["re_min"] * r)
    elif kind == "fp":
        k, d, dt, h = p["k"], p["d"], float(p["dt"]), float(p["h"])
        mu1, mun = float(p["mu_1"]), float(p["mu_n"])
        denom = 4 * d - 2 * d * dt - 2 * d * dt / h**2 - (k * mu1 + (2 * d - k) * mun) * dt / h
        q = d * (mu1 - mun) * (dt / h) / denom if denom != 0 else math.inf
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    q = float(q)
    return TheoremFactor(q, bool(0 <= q < 1))


def magnitude_bounds(fact):
    """Certified ``(lo, hi)`` with ``lo <= |l| <= hi`` for every diagonal entry.

    Uses ``l = sum_k (prod_{s != k} lam_s) mu_k`` bounded through the
    rectangle of ``sum_k mu_k / lam_k`` and the extreme ``|lam_s|``.
    """
    z = _ratios(fact)
    a1, b1, a2, b2 = _extremes(z)
    dx = max(a1, 0.0, -b1)
    dy = max(a2, 0.0, -b2)
    far = max(math.hypot(x, y) for x in (a1, b1) for y in (a2, b2))
    lam_lo = prod(float(np.min(np.abs(lam))) for lam in fact.lam)
    lam_hi = prod(float(np.max(np.abs(lam))) for lam in fact.lam)
    return lam_lo * math.hypot(dx, dy), lam_hi * far
