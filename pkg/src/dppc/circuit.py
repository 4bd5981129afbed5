"""Probabilistic circuits over binary variables.

A circuit is an arena of nodes in topological order: every child id is
smaller than its parent's id.  Leaves are literals ``X_v`` (positive) or
``not X_v`` (negative); products are unweighted; sum edges carry real
weights, which may be negative or zero.

Text format (``pc v1``), one node per line, ids dense from 0::

    pc v1
    vars 2
    L 0 0 1
    L 1 0 0
    S 2 0.3:0 0.7:1
    R 2
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, ParseError, StructureError
from .subsets import Subset, as_members

DETERMINISM_GUARD = 16
_BATCH = 1024


@dataclass(frozen=True)
class Leaf:
    var: int
    positive: bool = True


@dataclass(frozen=True)
class Product:
    children: tuple[int, ...]


@dataclass(frozen=True)
class Sum:
    edges: tuple[tuple[float, int], ...]

    @property
    def children(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.edges)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for w, _ in self.edges)


Node = Leaf | Product | Sum


class Circuit:
    """Immutable circuit arena with cached scopes (as variable bitmasks)."""

    def __init__(self, nodes: Sequence[Node], root: int, n_vars: int):
        nodes = tuple(nodes)
        if not nodes:
            raise StructureError("empty circuit")
        if not 0 <= root < len(nodes):
            raise StructureError(f"root {root} is not a node id")
        scopes = []
        for i, node in enumerate(nodes):
            if isinstance(node, Leaf):
                if not 0 <= node.var < n_vars:
                    raise StructureError(f"node {i}: variable {node.var} out of range")
                scopes.append(1 << node.var)
                continue
            children = node.children
            if isinstance(node, Sum):
                if not children:
                    raise StructureError(f"node {i}: sum without children")
                if not all(np.isfinite(w) for w in node.weights):
                    raise StructureError(f"node {i}: non-finite weight")
            scope = 0
            for c in children:
                if not 0 <= c < i:
                    raise StructureError(f"node {i}: child {c} does not precede its parent")
                scope |= scopes[c]
            scopes.append(scope)
        self.nodes = nodes
        self.root = root
        self.n_vars = n_vars
        self.scopes = tuple(scopes)
        self._child_idx = [np.asarray(getattr(nd, "children", ()), dtype=np.intp) for nd in nodes]
        self._weights = [np.asarray(nd.weights, dtype=np.float64) if isinstance(nd, Sum) else None
                         for nd in nodes]

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Circuit) and self.nodes == other.nodes
                and self.root == other.root and self.n_vars == other.n_vars)

    def __repr__(self) -> str:
        return f"Circuit(n_vars={self.n_vars}, nodes={len(self.nodes)}, root={self.root})"

    @property
    def edge_count(self) -> int:
        return sum(len(c) for c in self._child_idx)

    @property
    def parameter_count(self) -> int:
        return sum(len(nd.edges) for nd in self.nodes if isinstance(nd, Sum))

    def scope(self, node: int | None = None) -> frozenset[int]:
        mask = self.scopes[self.root if node is None else node]
        return frozenset(i for i in range(self.n_vars) if mask >> i & 1)

    @property
    def is_decomposable(self) -> bool:
        for i, nd in enumerate(self.nodes):
            if isinstance(nd, Product):
                seen = 0
                for c in nd.children:
                    if seen & self.scopes[c]:
                        return False
                    seen |= self.scopes[c]
        return True

    @property
    def is_smooth(self) -> bool:
        return all(all(self.scopes[c] == self.scopes[i] for c in nd.children)
                   for i, nd in enumerate(self.nodes) if isinstance(nd, Sum))

    @property
    def has_negative_parameter(self) -> bool:
        return any(w < 0 for nd in self.nodes if isinstance(nd, Sum) for w in nd.weights)

    def pruned(self) -> "Circuit":
        """Drop nodes not reachable from the root, renumbering densely."""
        live = np.zeros(len(self.nodes), dtype=bool)
        live[self.root] = True
        for i in range(self.root, -1, -1):
            if live[i]:
                live[self._child_idx[i]] = True
        if live.all():
            return self
        new_id = np.cumsum(live) - 1
        nodes = []
        for i in np.flatnonzero(live):
            nd = self.nodes[i]
            if isinstance(nd, Product):
                nd = Product(tuple(int(new_id[c]) for c in nd.children))
            elif isinstance(nd, Sum):
                nd = Sum(tuple((w, int(new_id[c])) for w, c in nd.edges))
            nodes.append(nd)
        return Circuit(nodes, int(new_id[self.root]), self.n_vars)


class Builder:
    """Incremental construction with shared leaves; :meth:`build` prunes."""

    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.nodes: list[Node] = []
        self._leaves: dict[tuple[int, bool], int] = {}

    def _add(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, var: int, positive: bool = True) -> int:
        key = (var, bool(positive))
        if key not in self._leaves:
            self._leaves[key] = self._add(Leaf(var, bool(positive)))
        return self._leaves[key]

    def product(self, children: Iterable[int]) -> int:
        return self._add(Product(tuple(children)))

    def sum(self, edges: Iterable[tuple[float, int]]) -> int:
        return self._add(Sum(tuple((float(w), int(c)) for w, c in edges)))

    def build(self, root: int) -> Circuit:
        return Circuit(self.nodes, root, self.n_vars).pruned()


class LeafConfig(NamedTuple):
    """Per-variable values substituted for ``X_i`` (pos) and ``not X_i`` (neg)."""

    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def from_assignment(cls, x: Subset) -> "LeafConfig":
        bits = x.bits().astype(np.float64)
        return cls(bits, 1.0 - bits)

    @classmethod
    def from_evidence(cls, n: int, A=(), B=()) -> "LeafConfig":
        """(1,0) on A, (0,1) on B, (1,1) elsewhere."""
        pos, neg = np.ones(n), np.ones(n)
        a, b = as_members(A, n), as_members(B, n)
        if set(a) & set(b):
            raise DimensionError("positive and negative evidence overlap")
        neg[list(a)] = 0.0
        pos[list(b)] = 0.0
        return cls(pos, neg)


@dataclass(frozen=True)
class StructureReport:
    decomposable: bool
    smooth: bool
    deterministic: bool | None
    determinism_method: str
    has_negative_parameter: bool
    node_count: int
    edge_count: int
    parameter_count: int

    def lines(self) -> list[str]:
        det = "skipped" if self.deterministic is None else str(self.deterministic).lower()
        return [
            f"decomposable={str(self.decomposable).lower()}",
            f"smooth={str(self.smooth).lower()}",
            f"deterministic={det}",
            f"determinism_method={self.determinism_method}",
            f"negative_params={str(self.has_negative_parameter).lower()}",
            f"nodes={self.node_count}",
            f"edges={self.edge_count}",
            f"parameters={self.parameter_count}",
        ]


# evaluation -----------------------------------------------------------------

def node_values(C: Circuit, pos: np.ndarray, neg: np.ndarray, stats: dict | None = None) -> np.ndarray:
    """Bottom-up pass over a batch: returns an ``(len(C), batch)`` value buffer.

    ``pos``/``neg`` have shape ``(batch, n_vars)``.  Each node is visited once;
    the count is written to ``stats["visits"]`` when a dict is supplied.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if pos.shape[1] != C.n_vars or neg.shape != pos.shape:
        raise DimensionError(f"leaf values of shape {pos.shape}/{neg.shape} for {C.n_vars} variables")
    vals = np.empty((len(C.nodes), pos.shape[0]))
    visits = 0
    for i, nd in enumerate(C.nodes):
        visits += 1
        if isinstance(nd, Leaf):
            vals[i] = (pos if nd.positive else neg)[:, nd.var]
        elif isinstance(nd, Product):
            ch = C._child_idx[i]
            vals[i] = np.prod(vals[ch], axis=0) if ch.size else 1.0
        else:
            vals[i] = C._weights[i] @ vals[C._child_idx[i]]
    if stats is not None:
        stats["visits"] = visits
    return vals


def evaluate_batch(C: Circuit, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    out = np.empty(pos.shape[0])
    for s in range(0, pos.shape[0], _BATCH):
        out[s:s + _BATCH] = node_values(C, pos[s:s + _BATCH], neg[s:s + _BATCH])[C.root]
    return out


def evaluate(C: Circuit, x) -> float:
    """Value of the circuit on a complete assignment (a Subset or bitstring)."""
    if not isinstance(x, Subset):
        x = Subset.from_bits(x) if isinstance(x, str) else Subset(C.n_vars, tuple(x))
    if x.n != C.n_vars:
        raise DimensionError(f"assignment over {x.n} variables, circuit has {C.n_vars}")
    return evaluate_config(C, LeafConfig.from_assignment(x))


def evaluate_config(C: Circuit, cfg: LeafConfig, stats: dict | None = None) -> float:
    pos, neg = np.asarray(cfg[0], dtype=np.float64), np.asarray(cfg[1], dtype=np.float64)
    if pos.shape != (C.n_vars,) or neg.shape != (C.n_vars,):
        raise DimensionError(f"leaf config of length {pos.size}/{neg.size}, circuit has {C.n_vars} variables")
    return float(node_values(C, pos[None], neg[None], stats)[C.root, 0])


def evaluate_all(C: Circuit) -> np.ndarray:
    """Values on all ``2**n_vars`` complete assignments, indexed by mask."""
    masks = np.arange(1 << C.n_vars)
    X = ((masks[:, None] >> np.arange(C.n_vars)) & 1).astype(np.float64)
    return evaluate_batch(C, X, 1.0 - X)


def _require_decomposable(C: Circuit, what: str):
    if not C.is_decomposable:
        raise StructureError(f"{what} requires a decomposable circuit")


def normalizing_constant(C: Circuit) -> float:
    """Sum of the circuit over all complete assignments (decomposable circuits)."""
    _require_decomposable(C, "normalizing_constant")
    S = smooth_transform(C)
    missing = C.n_vars - len(C.scope())
    return evaluate_config(S, LeafConfig(np.ones(C.n_vars), np.ones(C.n_vars))) * 2.0 ** missing


def marginal(C: Circuit, A=(), B=()) -> float:
    """``Pr(X_i = 1 for i in A, X_j = 0 for j in B)`` in one upward pass.

    Non-smooth input is smoothed first: the (1,1) leaf substitution only sums
    out a variable below nodes whose scope mentions it.  Variables outside the
    root scope contribute a factor 1/2 each when they carry evidence.
    """
    _require_decomposable(C, "marginal")
    cfg = LeafConfig.from_evidence(C.n_vars, A, B)
    S = smooth_transform(C)
    z = evaluate_config(S, LeafConfig(np.ones(C.n_vars), np.ones(C.n_vars)))
    if z == 0:
        raise StructureError("circuit has zero normalizing constant")
    root_scope = C.scope()
    outside = sum(1 for i in (*as_members(A), *as_members(B)) if i not in root_scope)
    return evaluate_config(S, cfg) / z * 0.5 ** outside


# structure --------------------------------------------------------------------

def is_deterministic(C: Circuit) -> bool:
    """Brute force: every sum has at most one nonzero child on every assignment.

    Child values are inspected before weighting, so a zero-weight edge still
    counts as an input.
    """
    sums = [i for i, nd in enumerate(C.nodes) if isinstance(nd, Sum)]
    if not sums:
        return True
    masks = np.arange(1 << C.n_vars)
    for s in range(0, masks.size, _BATCH):
        X = ((masks[s:s + _BATCH, None] >> np.arange(C.n_vars)) & 1).astype(np.float64)
        vals = node_values(C, X, 1.0 - X)
        for i in sums:
            if np.any(np.count_nonzero(vals[C._child_idx[i]], axis=0) > 1):
                return False
    return True


def analyze(C: Circuit, determinism_guard: int = DETERMINISM_GUARD) -> StructureReport:
    if C.n_vars <= determinism_guard:
        deterministic, method = is_deterministic(C), "brute-force"
    else:
        deterministic, method = None, "skipped"
    return StructureReport(
        decomposable=C.is_decomposable,
        smooth=C.is_smooth,
        deterministic=deterministic,
        determinism_method=method,
        has_negative_parameter=C.has_negative_parameter,
        node_count=len(C),
        edge_count=C.edge_count,
        parameter_count=C.parameter_count,
    )


def smooth_transform(C: Circuit) -> Circuit:
    """Equivalent smooth circuit.

    Every sum child missing variables ``G`` of its parent's scope is multiplied
    by ``(X_i + not X_i)`` for ``i`` in ``G``; one such gadget per variable is
    shared.  Scopes of existing nodes do not change, so decomposability is kept.
    """
    _require_decomposable(C, "smooth_transform")
    if C.is_smooth:
        return C
    b = Builder(C.n_vars)
    new_id: list[int] = []
    gadgets: dict[int, int] = {}

    def gadget(v: int) -> int:
        if v not in gadgets:
            gadgets[v] = b.sum([(1.0, b.leaf(v, True)), (1.0, b.leaf(v, False))])
        return gadgets[v]

    for i, nd in enumerate(C.nodes):
        if isinstance(nd, Leaf):
            new_id.append(b.leaf(nd.var, nd.positive))
        elif isinstance(nd, Product):
            new_id.append(b.product(new_id[c] for c in nd.children))
        else:
            edges = []
            for w, c in nd.edges:
                gap = C.scopes[i] & ~C.scopes[c]
                child = new_id[c]
                if gap:
                    pads = [gadget(v) for v in range(C.n_vars) if gap >> v & 1]
                    child = b.product([child, *pads])
                edges.append((w, child))
            new_id.append(b.sum(edges))
    return b.build(new_id[C.root])


def map_inference(C: Circuit, assume_deterministic: bool = False,
                  determinism_guard: int = DETERMINISM_GUARD) -> tuple[Subset, float]:
    """Most probable complete assignment and its (unnormalized) value.

    Max-product upward pass, then a downward trace through maximizing sum
    children.  Needs nonnegative weights, decomposability and determinism;
    determinism is brute-forced unless ``assume_deterministic`` is set.
    Variables outside the selected sub-circuit are set to 0.
    """
    _require_decomposable(C, "map_inference")
    if C.has_negative_parameter:
        raise StructureError("map_inference requires nonnegative weights")
    if not assume_deterministic:
        if C.n_vars > determinism_guard:
            raise StructureError(
                f"cannot verify determinism over {C.n_vars} variables; pass assume_deterministic")
        if not is_deterministic(C):
            raise StructureError("map_inference requires a deterministic circuit")
    best = np.empty(len(C))
    choice = np.full(len(C), -1, dtype=np.intp)
    for i, nd in enumerate(C.nodes):
        if isinstance(nd, Leaf):
            best[i] = 1.0
        elif isinstance(nd, Product):
            best[i] = np.prod(best[C._child_idx[i]]) if nd.children else 1.0
        else:
            scores = C._weights[i] * best[C._child_idx[i]]
            k = int(np.argmax(scores))
            choice[i], best[i] = k, scores[k]
    bits = np.zeros(C.n_vars, dtype=np.int8)
    stack = [C.root]
    while stack:
        i = stack.pop()
        nd = C.nodes[i]
        if isinstance(nd, Leaf):
            bits[nd.var] = 1 if nd.positive else 0
        elif isinstance(nd, Product):
            stack.extend(nd.children)
        else:
            stack.append(nd.edges[choice[i]][1])
    return Subset.from_bits(bits.tolist()), float(best[C.root])


# text format ------------------------------------------------------------------

def serialize(C: Circuit) -> str:
    out = ["pc v1", f"vars {C.n_vars}"]
    for i, nd in enumerate(C.nodes):
        if isinstance(nd, Leaf):
            out.append(f"L {i} {nd.var} {1 if nd.positive else 0}")
        elif isinstance(nd, Product):
            out.append(" ".join(["P", str(i), *map(str, nd.children)]))
        else:
            out.append(" ".join(["S", str(i), *(f"{float(w)!r}:{c}" for w, c in nd.edges)]))
    out.append(f"R {C.root}")
    return "\n".join(out) + "\n"


def parse(text: str, path: str | None = None) -> Circuit:
    """Inverse of :func:`serialize`; errors carry the offending line number."""
    lines = [(k + 1, ln.strip()) for k, ln in enumerate(text.splitlines())]
    lines = [(k, ln) for k, ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0][1].split() != ["pc", "v1"]:
        raise ParseError("missing 'pc v1' header", lines[0][0] if lines else 1, path)
    if len(lines) < 2:
        raise ParseError("missing 'vars' line", lines[0][0], path)
    k, ln = lines[1]
    tok = ln.split()
    if len(tok) != 2 or tok[0] != "vars" or not tok[1].isdigit():
        raise ParseError("expected 'vars <n>'", k, path)
    n_vars = int(tok[1])
    nodes: list[Node] = []
    root = None

    def ref(s: str, k: int) -> int:
        try:
            c = int(s)
        except ValueError:
            raise ParseError(f"bad node id {s!r}", k, path) from None
        if not 0 <= c < len(nodes):
            raise ParseError(f"reference to undefined node {c}", k, path)
        return c

    for k, ln in lines[2:]:
        if root is not None:
            raise ParseError("content after root declaration", k, path)
        tok = ln.split()
        kind = tok[0]
        if kind == "R":
            if len(tok) != 2:
                raise ParseError("expected 'R <id>'", k, path)
            root = ref(tok[1], k)
            continue
        if kind not in ("L", "P", "S") or len(tok) < 2:
            raise ParseError(f"unknown line type {kind!r}", k, path)
        if tok[1] != str(len(nodes)):
            raise ParseError(f"expected node id {len(nodes)}, got {tok[1]}", k, path)
        if kind == "L":
            if len(tok) != 4 or tok[3] not in ("0", "1") or not tok[2].isdigit():
                raise ParseError("expected 'L <id> <var> <1|0>'", k, path)
            var = int(tok[2])
            if var >= n_vars:
                raise ParseError(f"variable {var} out of range for {n_vars} vars", k, path)
            nodes.append(Leaf(var, tok[3] == "1"))
        elif kind == "P":
            nodes.append(Product(tuple(ref(s, k) for s in tok[2:])))
        else:
            edges = []
            for item in tok[2:]:
                w, sep, c = item.partition(":")
                if not sep:
                    raise ParseError(f"sum edge {item!r} is not '<w>:<child>'", k, path)
                try:
                    wf = float(w)
                except ValueError:
                    raise ParseError(f"bad weight {w!r}", k, path) from None
                if not np.isfinite(wf):
                    raise ParseError(f"non-finite weight {w!r}", k, path)
                edges.append((wf, ref(c, k)))
            if not edges:
                raise ParseError("sum node without children", k, path)
            nodes.append(Sum(tuple(edges)))
    if root is None:
        raise ParseError("missing root declaration 'R <id>'", lines[-1][0], path)
    return Circuit(nodes, root, n_vars)
