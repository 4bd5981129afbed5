"""Generators and independent oracles shared by the test modules.

The oracles here deliberately avoid the package's own evaluation code paths:
determinants by cofactor expansion, circuits by plain recursion, spanning
trees by union-find enumeration.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from dppc.circuit import Builder, Circuit, Leaf, Product, Sum


# determinants ------------------------------------------------------------------

def cofactor_det(M) -> float:
    M = [list(map(float, row)) for row in np.asarray(M)]
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return M[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        total += (-1) ** j * M[0][j] * cofactor_det(minor)
    return total


def enumerate_probs(L) -> dict[tuple[int, ...], float]:
    """Pr(subset) for every subset, by one determinant per subset."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    Z = np.linalg.det(L + np.eye(n))
    out = {}
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            out[S] = (np.linalg.det(L[np.ix_(S, S)]) if S else 1.0) / Z
    return out


def random_gram(rng, n, rows=None, bound=1.0):
    B = rng.uniform(-bound, bound, size=(rows or n, n))
    return B.T @ B, B


# circuits ----------------------------------------------------------------------

def recursive_eval(C: Circuit, pos, neg, node=None) -> float:
    """Straight recursion over the node definitions, no caching."""
    i = C.root if node is None else node
    nd = C.nodes[i]
    if isinstance(nd, Leaf):
        return float(pos[nd.var] if nd.positive else neg[nd.var])
    if isinstance(nd, Product):
        return math.prod(recursive_eval(C, pos, neg, c) for c in nd.children)
    return sum(w * recursive_eval(C, pos, neg, c) for w, c in nd.edges)


def recursive_eval_bits(C: Circuit, bits) -> float:
    bits = np.asarray(bits, dtype=float)
    return recursive_eval(C, bits, 1.0 - bits)


def random_decomposable(rng, n, *, smooth=False, deterministic=False, negative=False,
                        max_depth=4) -> Circuit:
    """Random decomposable circuit over ``n`` variables.

    ``deterministic`` builds sums by conditioning on a variable; ``smooth=False``
    lets sum children cover random subsets of their parent's variables.
    """
    b = Builder(n)

    def weight():
        w = rng.uniform(0.1, 2.0)
        return -w if negative and rng.random() < 0.3 else w

    def sub(vs):
        if smooth or len(vs) == 1:
            return vs
        k = int(rng.integers(1, len(vs) + 1))
        return sorted(rng.choice(vs, size=k, replace=False).tolist())

    def build(vs, depth):
        if len(vs) == 1:
            v = vs[0]
            r = rng.random()
            if r < 0.3:
                return b.leaf(v, bool(rng.integers(2)))
            return b.sum([(weight(), b.leaf(v, True)), (weight(), b.leaf(v, False))])
        choice = rng.random()
        if deterministic:
            if choice < 0.4 or depth >= max_depth:
                return product(vs, depth)
            v = vs[int(rng.integers(len(vs)))]
            rest = [x for x in vs if x != v]
            kids = []
            for polarity in (True, False):
                inner = sub(rest)
                kids.append((weight(), b.product([b.leaf(v, polarity), build(inner, depth + 1)])))
            return b.sum(kids)
        if choice < 0.5 or depth >= max_depth:
            return product(vs, depth)
        k = int(rng.integers(2, 4))
        return b.sum([(weight(), build(sub(vs), depth + 1)) for _ in range(k)])

    def product(vs, depth):
        perm = rng.permutation(vs).tolist()
        cuts = sorted(rng.choice(range(1, len(vs)), size=min(len(vs) - 1, int(rng.integers(1, 3))),
                                 replace=False).tolist())
        parts = [perm[a:c] for a, c in zip([0, *cuts], [*cuts, len(vs)])]
        return b.product([build(sorted(p), depth + 1) for p in parts])

    return b.build(build(list(range(n)), 0))


def random_dag(rng, n_nodes, n_vars) -> Circuit:
    """Arbitrary (usually non-decomposable) arena of exactly ``n_nodes`` nodes."""
    nodes = [Leaf(v, p) for v in range(n_vars) for p in (True, False)]
    while len(nodes) < n_nodes:
        i = len(nodes)
        k = int(rng.integers(1, 4))
        kids = sorted(set(int(c) for c in rng.integers(0, i, size=k)))
        if rng.random() < 0.5:
            nodes.append(Product(tuple(kids)))
        else:
            nodes.append(Sum(tuple((float(rng.normal() * 10.0 ** rng.integers(-5, 5)), c) for c in kids)))
    return Circuit(nodes, n_nodes - 1, n_vars)


# spanning trees ------------------------------------------------------------------

def spanning_trees(n):
    """All spanning trees of K_n as frozensets of edge indices (lexicographic edges)."""
    edges = list(itertools.combinations(range(n), 2))
    trees = []
    for T in itertools.combinations(range(len(edges)), n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        ok = True
        for e in T:
            a, c = map(find, edges[e])
            if a == c:
                ok = False
                break
            parent[a] = c
        if ok:
            trees.append(frozenset(T))
    return trees


# exact arithmetic ----------------------------------------------------------------

def exact_det(M) -> Fraction:
    """Fraction-valued Gaussian elimination."""
    M = [[Fraction(v) for v in row] for row in M]
    n, d = len(M), Fraction(1)
    for i in range(n):
        p = next((r for r in range(i, n) if M[r][i] != 0), None)
        if p is None:
            return Fraction(0)
        if p != i:
            M[i], M[p] = M[p], M[i]
            d = -d
        d *= M[i][i]
        for r in range(i + 1, n):
            f = M[r][i] / M[i][i]
            for c in range(i, n):
                M[r][c] -= f * M[i][c]
    return d


def exact_conditionals(L, q) -> list[Fraction]:
    """Every conditional of item q, computed exactly from the float entries of L."""
    L = [[Fraction(float(v)) for v in row] for row in np.asarray(L)]
    n = len(L)
    minor = lambda S: exact_det([[L[i][j] for j in S] for i in S]) if S else Fraction(1)
    others = [i for i in range(n) if i != q]
    out = []
    for k in range(n):
        for A in itertools.combinations(others, k):
            num, den = minor(list(A)), minor(sorted(A + (q,)))
            out.append(den / (den + num))
    return out
