"""Command-line front end.

Kernels are read as CSV, circuits in the ``pc v1`` text format.  Assignments
are bitstrings ``x1 x2 ... xn``; subsets are comma lists of 1-based items.
Exit status: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import circuit as pc
from . import constructions as cons
from . import dpp, learn, linalg
from .errors import DimensionError, DppcError
from .kernel_io import format_kernel, read_kernel
from .subsets import Subset, all_subsets


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _items(one_based: list[int], n: int, flag: str) -> list[int]:
    for i in one_based:
        if not 1 <= i <= n:
            raise DimensionError(f"{flag}: item {i} outside 1..{n}")
    return [i - 1 for i in one_based]


def _assignment(bits: str, n: int) -> Subset:
    x = Subset.from_bits(bits)
    if x.n != n:
        raise DimensionError(f"--assign has {x.n} bits, expected {n}")
    return x


class _Out:
    def __init__(self, digits):
        self.digits = digits

    def num(self, v: float) -> str:
        return repr(float(v)) if self.digits is None else f"{v:.{self.digits}g}"


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_ensemble(path) -> dpp.LEnsemble:
    return dpp.LEnsemble(read_kernel(path))


def _load_circuit(path) -> pc.Circuit:
    return pc.parse(Path(path).read_text(), str(path))


# dpp ----------------------------------------------------------------------------

def cmd_dpp_prob(a, out):
    E = _load_ensemble(a.kernel)
    print(out.num(dpp.prob(E, _assignment(a.assign, E.n))))


def cmd_dpp_marginal(a, out):
    E = _load_ensemble(a.kernel)
    D = dpp.marginal_kernel(E)
    print(out.num(dpp.general_marginal(D, _items(a.pos, E.n, "--pos"), _items(a.neg, E.n, "--neg"))))


def cmd_dpp_marginal_kernel(a, out):
    E = _load_ensemble(a.kernel)
    _emit(format_kernel(dpp.marginal_kernel(E).K), a.output)


def cmd_dpp_random(a, out):
    E = dpp.random_lensemble(a.n, a.bound, a.seed, rows=a.rows)
    rows = a.n if a.rows is None else a.rows
    _emit(format_kernel(E.L, [f"L = B^T B, B uniform on [-{a.bound}, {a.bound}]^({rows}x{a.n}), seed={a.seed}"]),
          a.output)


def cmd_dpp_conditionals(a, out):
    E = _load_ensemble(a.kernel)
    q = _items([a.q], E.n, "--q")[0]
    if a.count_distinct:
        print(dpp.count_distinct_conditionals(E, q, a.tol))
        return
    vals = dpp.conditionals(E, q)
    print("given,conditional")
    others = [i for i in range(E.n) if i != q]
    for k, v in enumerate(vals):
        given = [others[j] + 1 for j in range(len(others)) if k >> j & 1]
        print(f"\"{','.join(map(str, given))}\",{out.num(v)}")


# compile -------------------------------------------------------------------------

def cmd_compile_factorized(a, out):
    _emit(pc.serialize(cons.factorized_circuit(a.p)), a.output)


def cmd_compile_dpp_circuit(a, out):
    _emit(pc.serialize(cons.symbolic_kernel_compile(_load_ensemble(a.kernel))), a.output)


def cmd_compile_r1p(a, out):
    _emit(pc.serialize(cons.r1p_circuit(cons.R1PModel(a.d, a.lam, a.u))), a.output)


def cmd_compile_spanning_tree(a, out):
    st = cons.spanning_tree_dpp(a.vertices)
    _emit(format_kernel(st.K, ["edges: " + " ".join(st.edge_labels())]), a.output)


# circuit -------------------------------------------------------------------------

def cmd_circuit_eval(a, out):
    C = _load_circuit(a.circuit)
    print(out.num(pc.evaluate(C, _assignment(a.assign, C.n_vars))))


def cmd_circuit_marginal(a, out):
    C = _load_circuit(a.circuit)
    print(out.num(pc.marginal(C, _items(a.pos, C.n_vars, "--pos"), _items(a.neg, C.n_vars, "--neg"))))


def cmd_circuit_map(a, out):
    C = _load_circuit(a.circuit)
    x, score = pc.map_inference(C, assume_deterministic=a.assume_deterministic)
    print(f"{x.bitstring()},{out.num(score)}")


def cmd_circuit_analyze(a, out):
    C = _load_circuit(a.circuit)
    print("\n".join(pc.analyze(C, a.guard).lines()))


def cmd_circuit_smooth(a, out):
    _emit(pc.serialize(pc.smooth_transform(_load_circuit(a.circuit))), a.output)


# verify --------------------------------------------------------------------------

def cmd_verify_witness(a, out):
    n, q = a.n, a.q - 1
    L = cons.witness_kernel(n, q)
    worst, checked = 0.0, 0
    for B in all_subsets(n):
        if q in B:
            continue
        closed = cons.witness_minor_closed_form(n, q, B)
        lu = linalg.principal_minor_det(L, sorted(B.members + (q,)))
        worst = max(worst, abs(lu - closed) / max(1.0, abs(closed)))
        checked += 1
        if checked >= a.limit:
            break
    ok = worst <= 1e-6
    print(f"subsets={checked},max_rel_err={out.num(worst)},ok={str(ok).lower()}")
    if not ok:
        raise DppcError("witness closed form disagrees with LU determinant")


def cmd_verify_det_circuit(a, out):
    C = cons.det_circuit(a.n)
    rng = np.random.default_rng(a.seed)
    worst = 0.0
    for _ in range(a.trials):
        T = rng.normal(size=(a.n, a.n))
        ref = linalg.det(T)
        worst = max(worst, abs(cons.eval_det_circuit(C, T) - ref) / max(1.0, abs(ref)))
    ok = worst <= 1e-9
    print(f"nodes={len(C)},edges={C.edge_count},trials={a.trials},max_rel_err={out.num(worst)},ok={str(ok).lower()}")
    if not ok:
        raise DppcError("determinant circuit disagrees with LU determinant")


# experiment ----------------------------------------------------------------------

def cmd_experiment_table1(a, out):
    cfg = learn.TrainConfig(iterations=a.iterations, restarts=a.restarts, seed=a.seed,
                            optimizer=a.optimizer)
    rows = learn.run_table1(a.n, a.krows, a.m_list, cfg, bound=a.bound)
    meta = dict(seed=a.seed, N=a.n, K_rows=a.krows, bound=a.bound, iterations=a.iterations,
                restarts=a.restarts, optimizer=a.optimizer)
    _emit(learn.table1_csv(rows, meta), a.output)


# parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dppc", description=__doc__.split("\n")[0])
    p.add_argument("--digits", type=int, default=None, help="round numeric output to this many significant digits")
    p.add_argument("-v", "--verbose", action="store_true")
    top = p.add_subparsers(dest="group", required=True)

    def sub(group, name, fn, help=None):
        s = group.add_parser(name, help=help)
        s.set_defaults(func=fn)
        return s

    g = top.add_parser("dpp", help="L-ensemble queries").add_subparsers(dest="cmd", required=True)
    s = sub(g, "prob", cmd_dpp_prob, "probability of a complete assignment")
    s.add_argument("--kernel", required=True)
    s.add_argument("--assign", required=True, help="bitstring x1..xn")
    s = sub(g, "marginal", cmd_dpp_marginal, "Pr(X_i=1 on --pos, X_j=0 on --neg)")
    s.add_argument("--kernel", required=True)
    s.add_argument("--pos", type=_ints, default=[])
    s.add_argument("--neg", type=_ints, default=[])
    s = sub(g, "marginal-kernel", cmd_dpp_marginal_kernel, "write K = L(L+I)^-1")
    s.add_argument("--kernel", required=True)
    s.add_argument("-o", "--output")
    s = sub(g, "random", cmd_dpp_random, "random kernel L = B^T B")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--bound", type=float, default=1.0)
    s.add_argument("--rows", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s = sub(g, "conditionals", cmd_dpp_conditionals, "conditionals of X_q given the rest")
    s.add_argument("--kernel", required=True)
    s.add_argument("--q", type=int, required=True, help="1-based item")
    s.add_argument("--count-distinct", action="store_true")
    s.add_argument("--tol", type=float, default=dpp.DISTINCT_TOL)

    g = top.add_parser("compile", help="build circuits and kernels").add_subparsers(dest="cmd", required=True)
    s = sub(g, "factorized", cmd_compile_factorized)
    s.add_argument("--p", type=_floats, required=True)
    s.add_argument("-o", "--output")
    s = sub(g, "dpp-circuit", cmd_compile_dpp_circuit)
    s.add_argument("--kernel", required=True)
    s.add_argument("-o", "--output")
    s = sub(g, "r1p", cmd_compile_r1p)
    s.add_argument("--d", type=_floats, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--u", type=_floats, required=True)
    s.add_argument("-o", "--output")
    s = sub(g, "spanning-tree", cmd_compile_spanning_tree)
    s.add_argument("--vertices", type=int, required=True)
    s.add_argument("-o", "--output")

    g = top.add_parser("circuit", help="circuit queries").add_subparsers(dest="cmd", required=True)
    s = sub(g, "eval", cmd_circuit_eval)
    s.add_argument("--circuit", required=True)
    s.add_argument("--assign", required=True)
    s = sub(g, "marginal", cmd_circuit_marginal)
    s.add_argument("--circuit", required=True)
    s.add_argument("--pos", type=_ints, default=[])
    s.add_argument("--neg", type=_ints, default=[])
    s = sub(g, "map", cmd_circuit_map)
    s.add_argument("--circuit", required=True)
    s.add_argument("--assume-deterministic", action="store_true")
    s = sub(g, "analyze", cmd_circuit_analyze)
    s.add_argument("--circuit", required=True)
    s.add_argument("--guard", type=int, default=pc.DETERMINISM_GUARD)
    s = sub(g, "smooth", cmd_circuit_smooth)
    s.add_argument("--circuit", required=True)
    s.add_argument("-o", "--output")

    g = top.add_parser("verify", help="numeric audits").add_subparsers(dest="cmd", required=True)
    s = sub(g, "witness", cmd_verify_witness)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--q", type=int, required=True, help="1-based item")
    s.add_argument("--limit", type=int, default=1 << 16)
    s = sub(g, "det-circuit", cmd_verify_det_circuit)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)

    g = top.add_parser("experiment", help="R1P mixture experiment").add_subparsers(dest="cmd", required=True)
    s = sub(g, "table1", cmd_experiment_table1)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--krows", type=int, default=10)
    s.add_argument("--m-list", type=_ints, default=[1, 2, 8, 16])
    s.add_argument("--restarts", type=int, default=20)
    s.add_argument("--iterations", type=int, default=learn.TrainConfig.iterations)
    s.add_argument("--optimizer", choices=["lbfgs", "gd"], default=learn.TrainConfig.optimizer)
    s.add_argument("--bound", type=float, default=learn.TABLE1_BOUND)
    s.add_argument("--seed", type=int, default=learn.TABLE1_SEED)
    s.add_argument("-o", "--output")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, _Out(args.digits))
    except (DppcError, OSError) as exc:
        print(f"dppc: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
