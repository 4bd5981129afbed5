"""L-ensembles and marginal-kernel DPPs.

An L-ensemble with kernel ``L`` puts mass ``det(L_A) / det(L + I)`` on the
subset ``A``.  Its marginal kernel ``K = L (L + I)^{-1}`` gives inclusion
probabilities ``Pr(A subset of Y) = det(K_A)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DimensionError, SingularityError, SizeGuardError
from .subsets import Subset, as_members, subsets_of

log = logging.getLogger(__name__)

ENUMERATION_GUARD = 20
DISTINCT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LEnsemble:
    L: np.ndarray
    regenerations: int = field(default=0, compare=False)

    def __post_init__(self):
        L = linalg.as_matrix(self.L, symmetric=True)
        if not linalg.is_psd(L, tol=1e-9):
            raise SingularityError("L-ensemble kernel is not positive semidefinite")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "_normalizer", linalg.det(L + np.eye(L.shape[0])))

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def normalizer(self) -> float:
        """``det(L + I)``, the sum of all principal minors."""
        return self._normalizer


@dataclass(frozen=True, eq=False)
class MarginalDPP:
    K: np.ndarray

    def __post_init__(self):
        K = linalg.as_matrix(self.K, symmetric=True)
        if K.size:
            eig = np.linalg.eigvalsh(K)
            if eig[0] < -1e-9 or eig[-1] > 1 + 1e-9:
                raise DimensionError(
                    f"marginal kernel eigenvalues must lie in [0, 1], got [{eig[0]:.3g}, {eig[-1]:.3g}]"
                )
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.K.shape[0]


def prob(E: LEnsemble, x) -> float:
    """``Pr(Y = x) = det(L_x) / det(L + I)``."""
    return linalg.principal_minor_det(E.L, as_members(x, E.n)) / E.normalizer


def all_minors(L, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """Every principal minor of ``L``, indexed by subset mask.

    ``det(L_x)`` equals the full determinant of ``diag(1 - x) + diag(x) L diag(x)``,
    which lets numpy batch all ``2**n`` determinants.
    """
    L = np.asarray(L, dtype=np.float64)
    n = linalg.check_square(L)
    if n > guard:
        raise SizeGuardError(f"n = {n} exceeds the enumeration guard {guard}")
    out = np.empty(1 << n)
    chunk = 1 << min(n, 12)
    eye = np.eye(n)
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n))
        X = ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
        mats = X[:, :, None] * L[None] * X[:, None, :] + (1 - X)[:, :, None] * eye
        out[masks] = np.linalg.det(mats) if n else 1.0
    return out


def marginal_kernel(E: LEnsemble) -> MarginalDPP:
    """``K = L (L + I)^{-1}``, computed as ``I - (L + I)^{-1}``."""
    n = E.n
    K = np.eye(n) - linalg.psd_inverse(E.L + np.eye(n))
    K = (K + K.T) / 2
    K[np.abs(K) < 1e-15] = 0.0
    return MarginalDPP(K)


def marginal_prob(D: MarginalDPP, A) -> float:
    """``Pr(A subset of Y) = det(K_A)``."""
    return linalg.principal_minor_det(D.K, as_members(A, D.n))


def general_marginal(D: MarginalDPP, A, B) -> float:
    """``Pr(X_i = 1 for i in A, X_j = 0 for j in B)`` by inclusion-exclusion over B.

    Exponential in ``|B|``.
    """
    a = as_members(A, D.n)
    b = as_members(B, D.n)
    if set(a) & set(b):
        raise DimensionError(f"positive and negative evidence overlap: {sorted(set(a) & set(b))}")
    total = 0.0
    for S in subsets_of(b):
        total += (-1) ** len(S) * linalg.principal_minor_det(D.K, sorted(a + S))
    return min(1.0, max(0.0, total))


def conditional_prob(E: LEnsemble, q: int, A_in) -> float:
    """``Pr(X_q = 1 | X_i = 1 for i in A_in, X_j = 0 otherwise)``."""
    a = as_members(A_in, E.n)
    if not 0 <= q < E.n:
        raise DimensionError(f"q = {q} out of range")
    if q in a:
        raise DimensionError(f"q = {q} must not be in the conditioning set")
    num = linalg.principal_minor_det(E.L, a)
    den = linalg.principal_minor_det(E.L, sorted(a + (q,)))
    if abs(den) <= 1e-14 * max(1.0, abs(num)):
        raise SingularityError(f"minor det(L_{{A u {{{q}}}}}) vanishes; conditional undefined")
    return 1.0 / (1.0 + num / den)


def random_gram_factor(rows: int, n: int, bound: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-bound, bound, size=(rows, n))


def random_lensemble(n: int, bound: float = 1.0, seed: int = 0, rows: int | None = None) -> LEnsemble:
    """``L = B^T B`` with ``B`` uniform on ``[-bound, bound]^{rows x n}``.

    Redraws ``B`` while ``|det L| <= 1e-12`` (never happens for ``rows >= n``
    outside measure-zero events); the count is kept on the result.
    """
    if n < 1 or not bound > 0:
        raise DimensionError("need n >= 1 and bound > 0")
    rows = n if rows is None else rows
    rng = np.random.default_rng(seed)
    regenerations = 0
    while True:
        B = random_gram_factor(rows, n, bound, rng)
        L = B.T @ B
        if abs(linalg.det(L)) > 1e-12 or rows < n:
            break
        regenerations += 1
        if regenerations > 1000:
            raise SingularityError("could not draw a nonsingular kernel")
    if regenerations:
        log.info("random_lensemble: %d regenerations", regenerations)
    return LEnsemble((L + L.T) / 2, regenerations=regenerations)


def conditionals(E: LEnsemble, q: int, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """All ``2**(n-1)`` values of :func:`conditional_prob` for item ``q``.

    Entry ``k`` conditions on the subset of ``[n] \\ {q}`` whose mask, after
    deleting bit ``q``, is ``k``.
    """
    n = E.n
    if n > guard:
        raise SizeGuardError(f"n = {n} exceeds the enumeration guard {guard}")
    if not 0 <= q < n:
        raise DimensionError(f"q = {q} out of range")
    minors = all_minors(E.L, guard)
    k = np.arange(1 << (n - 1))
    low = k & ((1 << q) - 1)
    mask = low | ((k >> q) << (q + 1))
    num = minors[mask]
    den = minors[mask | (1 << q)]
    if np.any(np.abs(den) <= 1e-14 * np.maximum(1.0, np.abs(num))):
        raise SingularityError(f"a minor containing item {q} vanishes; conditional undefined")
    return 1.0 / (1.0 + num / den)


def count_distinct_conditionals(E: LEnsemble, q: int, tol: float = DISTINCT_TOL,
                                guard: int = ENUMERATION_GUARD) -> int:
    """Number of distinct conditionals of ``X_q`` given the other variables.

    Sorted values are split wherever consecutive gaps exceed ``tol``.
    """
    vals = np.sort(conditionals(E, q, guard))
    return int(1 + np.count_nonzero(np.diff(vals) > tol))
