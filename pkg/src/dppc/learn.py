"""Approximating an L-ensemble by mixtures of R1P or fully factorized models.

The target is the exact table of an L-ensemble over ``n <= 20`` items; the
objective ``KL(P || Q)`` and its gradient are computed exactly by summing
over all ``2**n`` assignments.

Parameterization (all unconstrained):

* mixture weights ``w = softmax(alpha)``;
* R1P component: ``d = exp(a)``, ``lam = exp(b)``, ``u`` free;
* factorized component: ``p = sigmoid(z)``.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_softmax, logsumexp, softmax

from .constructions import R1PModel
from .dpp import ENUMERATION_GUARD, LEnsemble, all_minors
from .errors import DimensionError, DivergenceError, SizeGuardError
from .subsets import as_members, assignment_matrix

log = logging.getLogger(__name__)

Kind = Literal["r1p", "factorized"]


@dataclass(frozen=True, eq=False)
class TargetTable:
    n: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (1 << self.n,):
            raise DimensionError(f"table of shape {p.shape} for n = {self.n}")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-8:
            raise DimensionError("target table must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)


def exact_distribution(E: LEnsemble, guard: int = ENUMERATION_GUARD) -> TargetTable:
    """Probabilities of all ``2**n`` subsets, indexed by mask."""
    if E.n > guard:
        raise SizeGuardError(f"n = {E.n} exceeds the enumeration guard {guard}")
    minors = all_minors(E.L, guard)
    return TargetTable(E.n, minors / E.normalizer)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """A mixture with its raw (unconstrained) parameter vector.

    Layout of ``raw``: r1p ``[alpha(m), a(m*n), b(m), u(m*n)]``; factorized
    ``[alpha(m), z(m*n)]``.
    """

    kind: Kind
    n: int
    m: int
    raw: np.ndarray

    def __post_init__(self):
        if self.kind not in ("r1p", "factorized"):
            raise DimensionError(f"unknown mixture kind {self.kind!r}")
        raw = np.asarray(self.raw, dtype=np.float64).reshape(-1)
        if raw.size != raw_size(self.kind, self.n, self.m):
            raise DimensionError(f"raw vector of length {raw.size}, expected {raw_size(self.kind, self.n, self.m)}")
        object.__setattr__(self, "raw", raw)

    def with_raw(self, raw) -> "MixtureModel":
        return replace(self, raw=raw)

    def unpack(self):
        m, n, r = self.m, self.n, self.raw
        alpha = r[:m]
        if self.kind == "factorized":
            return alpha, r[m:].reshape(m, n)
        a = r[m:m + m * n].reshape(m, n)
        b = r[m + m * n:2 * m + m * n]
        u = r[2 * m + m * n:].reshape(m, n)
        return alpha, a, b, u

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.raw[:self.m])

    @property
    def components(self) -> list:
        """R1PModel instances or Bernoulli probability vectors."""
        if self.kind == "factorized":
            return [expit(z) for z in self.unpack()[1]]
        _, a, b, u = self.unpack()
        return [R1PModel(np.exp(a[k]), float(np.exp(b[k])), u[k]) for k in range(self.m)]

    @property
    def parameter_count(self) -> int:
        """Component parameters: ``2 m n`` for r1p (d and u), ``m n`` for factorized.

        Mixture weights and the R1P scales are not counted, so an r1p mixture
        of m components and a factorized mixture of 2m components tie.
        """
        return (2 if self.kind == "r1p" else 1) * self.m * self.n

    @classmethod
    def from_components(cls, weights, components, kind: Kind) -> "MixtureModel":
        """Build from constrained values; ``lam = 0`` maps to ``b = -inf``."""
        weights = np.asarray(weights, dtype=np.float64)
        with np.errstate(divide="ignore"):
            alpha = np.log(weights)
            if kind == "factorized":
                P = np.atleast_2d(np.asarray(components, dtype=np.float64))
                return cls(kind, P.shape[1], P.shape[0], np.concatenate([alpha, np.log(P / (1 - P)).ravel()]))
            a = np.array([np.log(c.d) for c in components])
            b = np.log(np.array([c.lam for c in components]))
        u = np.array([c.u for c in components])
        return cls(kind, a.shape[1], a.shape[0], np.concatenate([alpha, a.ravel(), b, u.ravel()]))


def raw_size(kind: Kind, n: int, m: int) -> int:
    return m + m * n if kind == "factorized" else 2 * m + 2 * m * n


def init_model(kind: Kind, n: int, m: int, rng: np.random.Generator) -> MixtureModel:
    alpha = rng.normal(0.0, 0.01, m)
    if kind == "factorized":
        return MixtureModel(kind, n, m, np.concatenate([alpha, rng.normal(0.0, 0.01, m * n)]))
    a = rng.normal(0.0, 0.1, m * n)
    u = rng.normal(0.0, 1.0, m * n)
    return MixtureModel(kind, n, m, np.concatenate([alpha, a, np.zeros(m), u]))


# component tables -------------------------------------------------------------

_EXP_CAP = 700.0


def _cexp(v):
    return np.exp(np.minimum(v, _EXP_CAP))


def _r1p_terms(M: MixtureModel, X: np.ndarray):
    """Log-space pieces of the R1P closed form.

    ``log(1 + lam * s_x)`` with ``s_x = sum_{i in x} u_i^2 / d_i`` and
    ``log(1 + lam * t)`` with ``t = sum_i u_i^2 / (1 + d_i)``, both via
    ``logaddexp`` so wild parameter values cannot overflow.
    """
    _, a, b, u = M.unpack()
    with np.errstate(divide="ignore"):
        log_u2 = 2 * np.log(np.abs(u))
    log_c = log_u2 - a
    cmax = np.max(log_c, axis=1)
    cmax = np.where(np.isfinite(cmax), cmax, 0.0)
    with np.errstate(divide="ignore"):
        logS = np.log(X @ np.exp(log_c - cmax[:, None]).T) + cmax
    softplus_a = np.logaddexp(0, a)
    log_t = logsumexp(log_u2 - softplus_a, axis=1)
    ell1 = np.logaddexp(0, b + logS)               # (2**n, m)
    ell2 = np.logaddexp(0, b + log_t)              # (m,)
    return a, b, u, log_u2, log_c, logS, softplus_a, log_t, ell1, ell2


def _component_logs(M: MixtureModel, X: np.ndarray):
    """``log q_k(x)`` as a ``(2**n, m)`` array plus intermediates for the gradient."""
    if M.kind == "factorized":
        _, z = M.unpack()
        # log p = -softplus(-z), log(1-p) = -softplus(z)
        with np.errstate(invalid="ignore"):  # p in {0, 1} gives inf * 0; caught as divergence
            logq = -(X @ np.logaddexp(0, -z).T) - ((1 - X) @ np.logaddexp(0, z).T)
        return logq, None
    terms = _r1p_terms(M, X)
    a, b, u, log_u2, log_c, logS, softplus_a, log_t, ell1, ell2 = terms
    logq = X @ a.T - np.sum(softplus_a, axis=1) + ell1 - ell2
    return logq, terms


def _log_model(M: MixtureModel, X: np.ndarray):
    logq, extra = _component_logs(M, X)
    joint = log_softmax(M.raw[:M.m]) + logq
    logQ = logsumexp(joint, axis=1)
    return logQ, joint, extra


def model_table(M: MixtureModel) -> np.ndarray:
    """``Q(x)`` for every assignment, indexed by mask."""
    return np.exp(_log_model(M, assignment_matrix(M.n))[0])


def component_tables(M: MixtureModel) -> np.ndarray:
    """``(2**n, m)`` array of normalized component probabilities."""
    return np.exp(_component_logs(M, assignment_matrix(M.n))[0])


def model_prob(M: MixtureModel, x) -> float:
    members = as_members(x, M.n)
    X = np.zeros((1, M.n))
    X[0, list(members)] = 1.0
    return float(np.exp(_log_model(M, X)[0][0]))


# objective --------------------------------------------------------------------

def _check(P: TargetTable, M: MixtureModel):
    if P.n != M.n:
        raise DimensionError(f"target over {P.n} variables, model over {M.n}")


def _kl_from_log(P: TargetTable, logQ: np.ndarray) -> float:
    support = P.probs > 0
    if np.any(~np.isfinite(logQ[support])):
        raise DivergenceError("model assigns zero probability to a target support point")
    p = P.probs[support]
    return max(0.0, float(np.sum(p * (np.log(p) - logQ[support]))))


def kl(P: TargetTable, M: MixtureModel) -> float:
    """``sum_x P(x) log(P(x) / Q(x))``."""
    _check(P, M)
    return _kl_from_log(P, _log_model(M, assignment_matrix(M.n))[0])


def kl_and_gradient(P: TargetTable, M: MixtureModel, X: np.ndarray | None = None):
    """KL and its gradient with respect to ``M.raw``.

    With responsibilities ``rho_k(x) = w_k q_k(x) / Q(x)`` and
    ``G = P * rho``: ``dKL/dalpha_k = w_k - sum_x G[x, k]`` and
    ``dKL/dtheta_k = -sum_x G[x, k] dlog q_k(x)/dtheta_k``.
    """
    _check(P, M)
    X = assignment_matrix(M.n) if X is None else X
    logQ, joint, extra = _log_model(M, X)
    value = _kl_from_log(P, logQ)
    G = P.probs[:, None] * np.exp(joint - logQ[:, None])
    g = G.sum(axis=0)
    grad_alpha = M.weights - g
    GX = G.T @ X
    if M.kind == "factorized":
        p = expit(M.unpack()[1])
        return value, np.concatenate([grad_alpha, (p * g[:, None] - GX).ravel()])
    a, b, u, log_u2, log_c, logS, softplus_a, log_t, ell1, ell2 = extra
    HX = (G * np.exp(-ell1)).T @ X                 # sum_x G x_i / (1 + lam s_x)
    bc = b[:, None]
    gc = g[:, None]
    at_t = _cexp(bc - softplus_a - ell2[:, None])  # lam / ((1 + d_i)(1 + lam t))
    grad_a = -(GX - _cexp(bc + log_c) * HX - gc * expit(a)
               + gc * _cexp(log_u2 + a - softplus_a) * at_t)
    grad_u = -(2 * u * _cexp(bc - a) * HX - 2 * gc * u * at_t)
    grad_b = -(np.sum(G * expit(b + logS), axis=0) - g * expit(b + log_t))
    return value, np.concatenate([grad_alpha, grad_a.ravel(), grad_b, grad_u.ravel()])


def gradient(M: MixtureModel, P: TargetTable) -> np.ndarray:
    """``d KL / d raw`` through the reparameterization."""
    return kl_and_gradient(P, M)[1]


def finite_difference_gradient(M: MixtureModel, P: TargetTable, step: float = 1e-5) -> np.ndarray:
    """Central differences of :func:`kl`, one coordinate at a time."""
    out = np.empty_like(M.raw)
    for i in range(M.raw.size):
        e = np.zeros_like(M.raw)
        e[i] = step
        out[i] = (kl(P, M.with_raw(M.raw + e)) - kl(P, M.with_raw(M.raw - e))) / (2 * step)
    return out


# training ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``optimizer="lbfgs"`` runs scipy's L-BFGS-B on the exact objective and
    gradient; ``"gd"`` is plain gradient descent with backtracking.  Both only
    accept non-increasing objective values, so histories are monotone.
    """

    learning_rate: float = 0.5
    iterations: int = 1500
    restarts: int = 20
    seed: int = 0
    gradient_mode: Literal["analytic", "finite-difference"] = "analytic"
    optimizer: Literal["lbfgs", "gd"] = "lbfgs"
    growth: float = 1.2
    max_halvings: int = 30
    workers: int | None = None

    def __post_init__(self):
        if self.restarts < 1 or not self.learning_rate > 0 or self.iterations < 0:
            raise DimensionError("need restarts >= 1, learning_rate > 0, iterations >= 0")
        if self.gradient_mode not in ("analytic", "finite-difference"):
            raise DimensionError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.optimizer not in ("lbfgs", "gd"):
            raise DimensionError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    model: MixtureModel
    kl: float
    history: list[float]
    restart: int
    restart_kls: list[float] = field(default_factory=list)
    reinitializations: int = 0


def _value_grad(P: TargetTable, M: MixtureModel, cfg: TrainConfig, X: np.ndarray):
    if cfg.gradient_mode == "analytic":
        return kl_and_gradient(P, M, X)
    return kl(P, M), finite_difference_gradient(M, P)


def _descend(M: MixtureModel, P: TargetTable, cfg: TrainConfig, X: np.ndarray):
    """Gradient descent with backtracking: halve the step on any increase.

    Accepted steps grow the step size by ``cfg.growth``; the run stops early
    when ``cfg.max_halvings`` halvings fail to decrease the objective.
    """
    value, grad = _value_grad(P, M, cfg, X)
    history = [value]
    lr = cfg.learning_rate
    for _ in range(cfg.iterations):
        for _ in range(cfg.max_halvings + 1):
            cand = M.with_raw(M.raw - lr * grad)
            try:
                new_value = _kl_from_log(P, _log_model(cand, X)[0])
            except DivergenceError:
                new_value = np.inf
            if new_value <= value:
                break
            lr /= 2
        else:
            break
        M = cand
        value, grad = _value_grad(P, M, cfg, X)
        history.append(value)
        lr *= cfg.growth
    return M, history


def _lbfgs(M: MixtureModel, P: TargetTable, cfg: TrainConfig, X: np.ndarray):
    """L-BFGS-B on the raw parameters; history holds the accepted iterates."""
    def fun(raw):
        try:
            v, g = _value_grad(P, M.with_raw(raw), cfg, X)
        except DivergenceError:
            return np.inf, np.zeros_like(raw)
        if not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(raw)
        return v, g

    history = [fun(M.raw)[0]]
    best = [M.raw.copy()]

    def record(intermediate_result):
        v = float(intermediate_result.fun)
        if v <= history[-1]:
            history.append(v)
            best[0] = np.array(intermediate_result.x, copy=True)

    if cfg.iterations:
        res = minimize(fun, M.raw, jac=True, method="L-BFGS-B", callback=record,
                       options=dict(maxiter=cfg.iterations, maxfun=2 * cfg.iterations,
                                    ftol=0.0, gtol=1e-10))
        if res.fun < history[-1]:
            history.append(float(res.fun))
            best[0] = res.x
    return M.with_raw(best[0]), history


def train_restart(kind: Kind, m: int, P: TargetTable, cfg: TrainConfig, restart: int):
    """One restart from the RNG stream ``(seed, restart)``; reinitializes on infinite KL."""
    rng = np.random.default_rng([cfg.seed, restart])
    X = assignment_matrix(P.n)
    reinit = 0
    while True:
        M = init_model(kind, P.n, m, rng)
        try:
            kl(P, M)
        except DivergenceError:
            reinit += 1
            if reinit > 100:
                raise
            continue
        step = _lbfgs if cfg.optimizer == "lbfgs" else _descend
        M, history = step(M, P, cfg, X)
        return M, history, reinit


def _restart_job(args):
    return train_restart(*args)


def _worker_count(cfg: TrainConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    env = os.environ.get("DPPC_THREADS", "1")
    try:
        k = int(env)
    except ValueError:
        k = 1
    return (os.cpu_count() or 1) if k == 0 else max(1, k)


def train(kind: Kind, m: int, P: TargetTable, cfg: TrainConfig) -> TrainResult:
    """Best of ``cfg.restarts`` independent descents (ties go to the lower index)."""
    jobs = [(kind, m, P, cfg, r) for r in range(cfg.restarts)]
    workers = min(_worker_count(cfg), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_restart_job, jobs))
    else:
        results = [_restart_job(j) for j in jobs]
    finals = [h[-1] for _, h, _ in results]
    best = int(np.argmin(finals))
    M, history, _ = results[best]
    return TrainResult(M, finals[best], history, best, finals, sum(r for _, _, r in results))


# the comparison experiment ---------------------------------------------------------------

REFERENCE_TABLE1 = {
    1: (0.23406, 0.23240),
    2: (0.14948, 0.14778),
    8: (0.03963, 0.03690),
    16: (0.01373, 0.01077),
    24: (0.00554, 0.00381),
    32: (0.00264, 0.00162),
    40: (0.00125, 0.00062),
    47: (0.00054, 0.00027),
}


@dataclass(frozen=True)
class Table1Row:
    m: int
    baseline_kl: float
    r1p_kl: float

    @property
    def ratio(self) -> float:
        return self.baseline_kl / self.r1p_kl if self.r1p_kl > 0 else float("inf")


TABLE1_SEED = 0
TABLE1_BOUND = 1.0


def table1_kernel(N: int, K_rows: int, seed: int = TABLE1_SEED, bound: float = TABLE1_BOUND) -> LEnsemble:
    """``L = B^T B`` with ``B`` uniform on ``[0, bound]^{K_rows x N}``.

    Nonnegative feature vectors share a common direction, so the kernel is
    close to diagonal plus rank one and exhibits strong repulsion.
    """
    B = np.random.default_rng(seed).uniform(0.0, bound, size=(K_rows, N))
    L = B.T @ B
    return LEnsemble((L + L.T) / 2)


def table1_target(N: int, K_rows: int, seed: int = TABLE1_SEED, bound: float = TABLE1_BOUND) -> TargetTable:
    return exact_distribution(table1_kernel(N, K_rows, seed, bound))


def run_table1(N: int, K_rows: int, m_list: Sequence[int], cfg: TrainConfig,
               bound: float = TABLE1_BOUND, target: TargetTable | None = None) -> list[Table1Row]:
    """R1P mixtures of m components against factorized mixtures of 2m components."""
    if N > 14:
        raise SizeGuardError(f"N = {N} exceeds 14")
    P = table1_target(N, K_rows, cfg.seed, bound) if target is None else target
    rows = []
    for m in m_list:
        base = train("factorized", 2 * m, P, cfg)
        r1p = train("r1p", m, P, cfg)
        log.info("m=%d baseline=%.6g r1p=%.6g", m, base.kl, r1p.kl)
        rows.append(Table1Row(m, base.kl, r1p.kl))
    return rows


def table1_csv(rows: Sequence[Table1Row], meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "baseline_kl", "r1p_kl", "ratio"])
    for r in rows:
        w.writerow([r.m, f"{r.baseline_kl:.8g}", f"{r.r1p_kl:.8g}", f"{r.ratio:.8g}"])
    return buf.getvalue()
