"""Circuits and kernels built from one another.

Indices are 0-based throughout.  Where a construction raises ``sqrt(2)`` or
``2`` to an item's position, item ``i`` uses exponent ``i + 1`` so that the
exponents run over ``1..n`` as in the 1-based formulation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import linalg
from .circuit import Builder, Circuit, LeafConfig, evaluate_config
from .dpp import LEnsemble
from .errors import DimensionError, SizeGuardError
from .subsets import Subset, as_members


# factorized distributions -------------------------------------------------------

def _probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DimensionError("probabilities must be a nonempty vector with entries in [0, 1]")
    return p


def factorized_circuit(p) -> Circuit:
    """``prod_i (p_i X_i + (1 - p_i) not X_i)``: deterministic, decomposable, smooth."""
    p = _probabilities(p)
    b = Builder(p.size)
    factors = [b.sum([(pi, b.leaf(i, True)), (1.0 - pi, b.leaf(i, False))]) for i, pi in enumerate(p)]
    root = factors[0] if len(factors) == 1 else b.product(factors)
    return b.build(root)


def diag_kernel_of(p) -> LEnsemble:
    """The L-ensemble ``diag(p_i / (1 - p_i))`` with the same distribution."""
    p = _probabilities(p)
    if np.any(p >= 1):
        raise DimensionError("p_i = 1 has no diagonal kernel (division by zero)")
    return LEnsemble(np.diag(p / (1.0 - p)))


# determinant circuits ---------------------------------------------------------------

def _clow_dp(n: int, b: Builder, entry: Callable[[int, int], int]) -> int:
    """Division-free determinant as a circuit (clow-sequence dynamic program).

    A clow is a closed walk whose head (first vertex) is its smallest vertex
    and is visited only at the ends.  ``det = (-1)^n * sum over clow sequences
    with increasing heads and total length n of (-1)^(#clows) * weight``.
    State ``(h, u, l)``: ``l`` edges used, current clow headed at ``h``, walk
    now at ``u >= h``.  ``(h, h, 0)`` is an empty start (value 1, no node).
    Each closed clow carries a ``-1`` sum weight; the root adds ``(-1)^n``.
    """
    incoming: dict[tuple[int, int, int], list[tuple[float, int]]] = {}
    node: dict[tuple[int, int, int], int | None] = {(h, h, 0): None for h in range(n)}
    root_edges: list[tuple[float, int]] = []
    final_sign = float((-1) ** (n + 1))

    def times(state, i, j) -> int:
        s = node[state]
        e = entry(i, j)
        return e if s is None else b.product([s, e])

    for length in range(n):
        # materialize states of this length
        if length > 0:
            for key in sorted(k for k in incoming if k[2] == length):
                node[key] = b.sum(incoming.pop(key))
        for (h, u, l) in sorted(k for k in node if k[2] == length):
            state = (h, u, l)
            for v in range(h + 1, n):
                incoming.setdefault((h, v, l + 1), []).append((1.0, times(state, u, v)))
            closed = times(state, u, h)
            if l + 1 == n:
                root_edges.append((final_sign, closed))
            else:
                for h2 in range(h + 1, n):
                    incoming.setdefault((h2, h2, l + 1), []).append((-1.0, closed))
    return b.sum(root_edges)


def det_circuit(n: int) -> Circuit:
    """Circuit over ``n*n`` inputs computing the determinant polynomial.

    Input ``t[i][j]`` is the positive literal of variable ``i*n + j``; evaluate
    with :func:`eval_det_circuit`.
    """
    if n < 1:
        raise DimensionError("n must be at least 1")
    b = Builder(n * n)
    return b.build(_clow_dp(n, b, lambda i, j: b.leaf(i * n + j, True)))


def eval_det_circuit(C: Circuit, T) -> float:
    T = np.asarray(T, dtype=np.float64)
    n = linalg.check_square(T)
    if C.n_vars != n * n:
        raise DimensionError(f"circuit has {C.n_vars} inputs, matrix has {n * n} entries")
    return evaluate_config(C, LeafConfig(T.ravel(), np.zeros(n * n)))


def symbolic_kernel_compile(E: LEnsemble) -> Circuit:
    """Determinant circuit fed with the symbolic kernel of ``E``.

    Diagonal entries become ``L_ii X_i + not X_i``, off-diagonal ones
    ``L_ij X_i X_j``, so the circuit evaluates to ``det(L_x)`` on assignment x.
    """
    L = E.L
    n = E.n
    b = Builder(n)
    cache: dict[tuple[int, int], int] = {}

    def entry(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        if key not in cache:
            if i == j:
                cache[key] = b.sum([(L[i, i], b.leaf(i, True)), (1.0, b.leaf(i, False))])
            else:
                pair = b.product([b.leaf(key[0], True), b.leaf(key[1], True)])
                cache[key] = b.sum([(L[i, j], pair)])
        return cache[key]

    return b.build(_clow_dp(n, b, entry))


# spanning trees ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpanningTreeDPP:
    """Marginal kernel of the uniform spanning-tree distribution on K_n.

    Edge ``(i, j)``, ``i < j``, is oriented ``i -> j`` with incidence vector
    ``e_i - e_j``; the kernel entry of two edges is the dot product of their
    incidence vectors divided by ``n``: 2/n on the diagonal, 1/n for edges
    sharing their tail or their head, -1/n when the head of one is the tail of
    the other, 0 for disjoint edges.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    K: np.ndarray

    def exact(self) -> list[list[Fraction]]:
        n = self.n_vertices
        return [[Fraction(_incidence_dot(e, f), n) for f in self.edges] for e in self.edges]

    def edge_labels(self) -> list[str]:
        """1-based vertex labels, ``e12 e13 ...``."""
        return [f"e{i + 1}{j + 1}" if self.n_vertices < 10 else f"e{i + 1}_{j + 1}"
                for i, j in self.edges]

    def edge_index(self, i: int, j: int) -> int:
        return self.edges.index((min(i, j), max(i, j)))

    def tree_count(self, A) -> float:
        """Number of spanning trees containing the edges indexed by ``A``."""
        return linalg.principal_minor_det(self.K, as_members(A, len(self.edges))) \
            * self.n_vertices ** (self.n_vertices - 2)


def _incidence_dot(e, f) -> int:
    (i, j), (l, k) = e, f
    return (i == l) + (j == k) - (i == k) - (j == l)


def spanning_tree_dpp(n: int) -> SpanningTreeDPP:
    if n < 2:
        raise DimensionError("need at least 2 vertices")
    edges = tuple(itertools.combinations(range(n), 2))
    K = np.array([[_incidence_dot(e, f) for f in edges] for e in edges], dtype=np.float64) / n
    K.setflags(write=False)
    return SpanningTreeDPP(n, edges, K)


# rank-one perturbations -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class R1PModel:
    """Kernel ``diag(d) + lam * u u^T`` with ``d >= 0``, ``lam >= 0``."""

    d: np.ndarray
    lam: float
    u: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        if d.shape != u.shape or d.size == 0:
            raise DimensionError("d and u must be nonempty vectors of equal length")
        if np.any(d < 0) or not self.lam >= 0:
            raise DimensionError("R1P model needs d >= 0 and lam >= 0")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n(self) -> int:
        return self.d.size

    @property
    def kernel(self) -> np.ndarray:
        return np.diag(self.d) + self.lam * np.outer(self.u, self.u)

    def normalizer(self) -> float:
        """``det(D + lam u u^T + I)`` in closed form."""
        e = self.d + 1.0
        return float(np.prod(e) * (1.0 + self.lam * np.sum(self.u ** 2 / e)))

    def unnormalized(self, x) -> float:
        """``prod_{i in x} d_i + lam * sum_{i in x} u_i^2 prod_{j in x, j != i} d_j``."""
        idx = list(as_members(x, self.n))
        d, w = self.d[idx], self.lam * self.u[idx] ** 2
        total = float(np.prod(d))
        for k in range(len(idx)):
            total += w[k] * float(np.prod(np.delete(d, k)))
        return total


def r1p_circuit(m: R1PModel) -> Circuit:
    """Decomposable, smooth circuit for the unnormalized R1P L-ensemble.

    With ``f_i = d_i X_i + not X_i``, prefixes ``A_k = f_0 ... f_k`` and
    ``B_k = B_{k-1} f_k + lam u_k^2 X_k A_{k-1}``, the root is ``A_{n-1} + B_{n-1}``.
    Linear size: about 7n nodes.
    """
    n = m.n
    b = Builder(n)
    f = [b.sum([(m.d[i], b.leaf(i, True)), (1.0, b.leaf(i, False))]) for i in range(n)]
    w = m.lam * m.u ** 2
    A = f[0]
    B = b.sum([(w[0], b.leaf(0, True))])
    for k in range(1, n):
        B = b.sum([(1.0, b.product([B, f[k]])),
                   (w[k], b.product([A, b.leaf(k, True)]))])
        A = b.product([A, f[k]])
    return b.build(b.sum([(1.0, A), (1.0, B)]))


# witness kernel and polynomial checks -------------------------------------------------------

def witness_factor(n: int, q: int) -> np.ndarray:
    """Unit diagonal off column ``q``; column ``q`` holds ``sqrt(2)^(i+1)`` in row i."""
    if n < 1 or not 0 <= q < n:
        raise DimensionError(f"need 0 <= q < n, got n={n}, q={q}")
    D = np.eye(n)
    D[:, q] = np.sqrt(2.0) ** (np.arange(n) + 1)
    return D


def witness_kernel(n: int, q: int) -> np.ndarray:
    """``L = D^T D`` for :func:`witness_factor`.

    Identity off row/column q, ``sqrt(2)^(j+1)`` along row/column q and
    ``2^(n+1) - 2`` at ``(q, q)``.
    """
    D = witness_factor(n, q)
    L = D.T @ D
    return (L + L.T) / 2


def witness_minor_closed_form(n: int, q: int, B) -> float:
    """``det(L_{B u {q}}) = 2^(n+1) - 2 - sum_{b in B} 2^(b+1)`` for the witness kernel."""
    b = as_members(B, n)
    if q in b:
        raise DimensionError(f"q = {q} must not be in B")
    return float((2 ** (n + 1) - 2) - sum(2 ** (i + 1) for i in b))


def f_polynomial_eval(L, A, B, q: int) -> float:
    """``det(L_A) det(L_{B+q}) - det(L_B) det(L_{A+q})``.

    Zero exactly when the conditional odds of ``X_q`` given A and given B agree.
    """
    L = np.asarray(L, dtype=np.float64)
    n = linalg.check_square(L)
    a, bb = as_members(A, n), as_members(B, n)
    if q in a or q in bb:
        raise DimensionError(f"q = {q} must be outside A and B")
    minor = lambda S: linalg.principal_minor_det(L, S)
    return minor(a) * minor(sorted(bb + (q,))) - minor(bb) * minor(sorted(a + (q,)))


def check_condition2_bounded(L, max_exp: int, tol: float = 1e-9) -> bool:
    """No multiplicative relation among principal minors up to exponent ``max_exp``.

    True iff ``r log det L_A != sum_{B != A} r_B log det L_B`` (within ``tol``)
    for every nonempty A, ``1 <= r <= max_exp`` and ``0 <= r_B <= max_exp``.
    Requires n <= 3 and every nonempty principal minor > 1.
    """
    L = np.asarray(L, dtype=np.float64)
    n = linalg.check_square(L)
    if n > 3:
        raise SizeGuardError(f"exponent grid over {2 ** n - 1} minors is too large (n <= 3)")
    if max_exp < 1:
        raise DimensionError("max_exp must be at least 1")
    subsets = [Subset.from_mask(n, mask) for mask in range(1, 1 << n)]
    logs = np.array([math.log(linalg.principal_minor_det(L, S)) if linalg.principal_minor_det(L, S) > 0
                     else -np.inf for S in subsets])
    if not np.all(logs > 0):
        raise DimensionError("condition 1 fails: every nonempty principal minor must exceed 1")
    exps = np.arange(max_exp + 1, dtype=np.float64)
    for a in range(len(subsets)):
        others = np.delete(logs, a)
        sums = np.zeros(1)
        for lg in others:
            sums = (sums[:, None] + exps[None, :] * lg).ravel()
        for r in range(1, max_exp + 1):
            if np.any(np.abs(sums - r * logs[a]) <= tol):
                return False
    return True


def bordered_kernel(n: int, seed: int = 0, max_exp: int = 4, low: float = 2.0,
                    high: float = 4.0, max_tries: int = 100) -> np.ndarray:
    """Unit off-diagonal kernel grown one bordered row at a time from ``[2.4]``.

    Each new diagonal entry is drawn uniformly from ``(low, high)`` with
    ``low >= 2``, which keeps every nonempty principal minor above 1.  While
    ``n <= 3`` a draw is rejected if :func:`check_condition2_bounded` finds a
    relation; beyond that only condition 1 is enforced.
    """
    if n < 1:
        raise DimensionError("n must be at least 1")
    if low < 2:
        raise DimensionError("diagonal entries must exceed 2")
    rng = np.random.default_rng(seed)
    d = [2.4]
    while len(d) < n:
        for _ in range(max_tries):
            cand = d + [float(rng.uniform(low, high))]
            L = np.ones((len(cand), len(cand)))
            np.fill_diagonal(L, cand)
            if len(cand) > 3 or check_condition2_bounded(L, max_exp):
                d = cand
                break
        else:
            raise SizeGuardError("no admissible diagonal entry found")
    L = np.ones((n, n))
    np.fill_diagonal(L, d)
    return L
