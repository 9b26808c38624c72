"""Cost-sensitive parameter fitting and L1 structure learning.

The training objective is the weighted, penalised log-likelihood

    J(theta) = sum_i w_i log P(x_i | theta) - lam * R(theta)

where ``log P`` is either the exact log-likelihood (needs the partition
function, so only for small state spaces) or the log pseudo-likelihood
``sum_v log P(x_v | x_neighbours(v))``.  ``fit`` maximises J by proximal
gradient ascent: backtracking on the smooth part, soft-thresholding for the
L1 part.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import DegenerateClassError, DivergedError
from .model import (
    GraphStructure,
    MarkovNetwork,
    check_assignments,
    check_exact_limit,
    enumerate_assignments,
    log_scores,
)

OBJECTIVES = ("exact_ll", "pseudo_ll")
REGULARIZERS = ("none", "l2", "l1", "elastic")
WEIGHT_SCHEMES = ("none", "inverse_frequency", "custom")
CANDIDATE_POLICIES = ("top_m_mutual_information", "all")

ARMIJO = 1e-4
SHRINK = 0.5
# relative size of objective changes treated as rounding noise
ROUND_RTOL = 1e-12

#: Default selection strength in units of the standard deviation scale
#: ``sqrt(sum w_i^2)`` of a zero interaction's gradient under sampling noise.
AUTO_L1_SCALE = 1.5


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "pseudo_ll"
    regularizer: str = "l2"
    lam: float = 1.0
    l1_ratio: float = 0.5
    step_size: float = 1.0
    max_iters: int = 500
    grad_tol: float = 1e-4
    weight_scheme: str = "inverse_frequency"
    #: per-class weights ``(w_0, w_1)`` for ``weight_scheme="custom"``
    class_costs: tuple | None = None
    exact_limit: int | None = None

    def __post_init__(self):
        problems = []
        if self.objective not in OBJECTIVES:
            problems.append(f"objective must be one of {OBJECTIVES}")
        if self.regularizer not in REGULARIZERS:
            problems.append(f"regularizer must be one of {REGULARIZERS}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            problems.append(f"weight_scheme must be one of {WEIGHT_SCHEMES}")
        if not self.lam >= 0:
            problems.append("lambda must be >= 0")
        if not 0 <= self.l1_ratio <= 1:
            problems.append("l1_ratio must be in [0, 1]")
        if not self.step_size > 0:
            problems.append("step_size must be > 0")
        if self.max_iters < 1:
            problems.append("max_iters must be >= 1")
        if not self.grad_tol > 0:
            problems.append("grad_tol must be > 0")
        if self.weight_scheme == "custom" and (self.class_costs is None or len(self.class_costs) != 2):
            problems.append("custom weight_scheme needs class_costs=(w_0, w_1)")
        if problems:
            raise ValueError("invalid TrainConfig: " + "; ".join(problems))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrainTrace:
    """Per-iteration record; ``objective`` is J (to be maximised)."""

    objective: list = field(default_factory=list)
    grad_max: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.objective)

    def lines(self) -> list[str]:
        return [
            f"{i}\t{format(j, '.17g')}\t{format(g, '.17g')}\t{int(a)}"
            for i, (j, g, a) in enumerate(zip(self.objective, self.grad_max, self.accepted), start=1)
        ]


# -- sample weights ----------------------------------------------------------

def compute_class_weights(labels, scheme: str = "inverse_frequency", class_costs=None) -> np.ndarray:
    """Per-instance weights for binary labels.

    ``inverse_frequency`` gives every instance of class ``c`` the weight
    ``N / (2 * N_c)`` so both classes carry a total weight of ``N / 2``.
    """
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("labels must be non-empty")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.intp)
    if scheme == "none":
        return np.ones(y.size)
    if scheme == "inverse_frequency":
        counts = np.bincount(y, minlength=2)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise DegenerateClassError(f"class {missing} has no instances; inverse-frequency weights undefined")
        return y.size / (2.0 * counts[y])
    if scheme == "custom":
        costs = np.asarray(class_costs, dtype=np.float64)
        if costs.shape != (2,) or not np.all(costs > 0):
            raise ValueError("custom class_costs must be two positive numbers")
        return costs[y]
    raise ValueError(f"unknown weight scheme {scheme!r}")


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (n,):
        raise ValueError(f"expected {n} sample weights, got {w.size}")
    if not np.all(np.isfinite(w)) or not np.all(w > 0):
        raise ValueError("sample weights must be finite and strictly positive")
    return w


def _as_assignments(structure: GraphStructure, data) -> np.ndarray:
    if hasattr(data, "assignments"):
        data = data.assignments(structure)
    return np.atleast_2d(check_assignments(structure, data))


def _resolve_weights(structure, A, weights, config):
    if weights is None and config.weight_scheme == "none":
        weights = np.ones(A.shape[0])
    elif weights is None:
        weights = compute_class_weights(A[:, structure.label_id], config.weight_scheme, config.class_costs)
    return _check_weights(weights, A.shape[0])


# -- likelihood terms ----------------------------------------------------------

def feature_indices(structure: GraphStructure, A) -> np.ndarray:
    """Flat parameter index of every active indicator, one row per assignment."""
    cols = [structure.unary_offsets[v] + A[:, v] for v in range(structure.n)]
    for i, (u, v) in enumerate(structure.edges):
        cols.append(structure.edge_offsets[i] + A[:, u] * structure.cardinalities[v] + A[:, v])
    return np.stack(cols, axis=1)


def _exact_ll(network, A, w, need_grad, limit):
    s = network.structure
    check_exact_limit(s.state_space_size(), limit)
    states = enumerate_assignments(s.cardinalities)
    scores = log_scores(network, states)
    log_z = logsumexp(scores)
    total_w = w.sum()
    value = float(w @ log_scores(network, A) - total_w * log_z)
    if not need_grad:
        return value, None
    probs = np.exp(scores - log_z)
    n_feat = s.n + len(s.edges)
    emp = np.bincount(feature_indices(s, A).ravel(), weights=np.repeat(w, n_feat), minlength=s.n_params)
    model = np.bincount(feature_indices(s, states).ravel(), weights=np.repeat(probs, n_feat),
                        minlength=s.n_params)
    return value, emp - total_w * model


class PseudoLikelihood:
    """Weighted log pseudo-likelihood evaluated by the selected kernel backend."""

    def __init__(self, structure: GraphStructure, A, weights, backend: str | None = None):
        self.structure = structure
        self.A = np.ascontiguousarray(A, dtype=np.intp)
        self.w = np.ascontiguousarray(weights, dtype=np.float64)
        self._plan = _kernels.neighbor_csr(structure)
        self._kernel = _kernels.get(backend).pseudo_loglik

    def value_and_grad(self, theta, need_grad=True):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        grad = np.zeros(self.structure.n_params) if need_grad else None
        value = self._kernel(theta, self.A, self.w, *self._plan, grad)
        return float(value), grad


def regularizer_value(theta, config: TrainConfig) -> float:
    if config.regularizer == "none":
        return 0.0
    l2 = 0.5 * float(theta @ theta)
    l1 = float(np.abs(theta).sum())
    if config.regularizer == "l2":
        return l2
    if config.regularizer == "l1":
        return l1
    return config.l1_ratio * l1 + (1.0 - config.l1_ratio) * l2


def _split_penalty(config: TrainConfig):
    """``(smooth l2 coefficient, l1 coefficient)`` of ``lam * R``."""
    lam = config.lam
    if config.regularizer == "l2":
        return lam, 0.0
    if config.regularizer == "l1":
        return 0.0, lam
    if config.regularizer == "elastic":
        return lam * (1.0 - config.l1_ratio), lam * config.l1_ratio
    return 0.0, 0.0


class _Objective:
    def __init__(self, structure, A, w, config):
        self.structure = structure
        self.config = config
        self.A, self.w = A, w
        self.l2, self.l1 = _split_penalty(config)
        self._pl = PseudoLikelihood(structure, A, w) if config.objective == "pseudo_ll" else None

    def loglik(self, theta, need_grad=True):
        if self._pl is not None:
            return self._pl.value_and_grad(theta, need_grad)
        net = MarkovNetwork(self.structure, theta)
        return _exact_ll(net, self.A, self.w, need_grad, self.config.exact_limit)

    def smooth(self, theta, need_grad=True):
        """Negative log-likelihood plus the l2 part of the penalty (to minimise)."""
        ll, g = self.loglik(theta, need_grad)
        val = -ll + 0.5 * self.l2 * float(theta @ theta)
        return val, (None if g is None else -g + self.l2 * theta)

    def total(self, theta, smooth_value):
        return smooth_value + self.l1 * float(np.abs(theta).sum())


def objective(network: MarkovNetwork, data, weights=None, config: TrainConfig | None = None) -> float:
    """``sum_i w_i log P(x_i) - lam * R(theta)`` for the configured likelihood."""
    config = config or TrainConfig()
    s = network.structure
    A = _as_assignments(s, data)
    w = _resolve_weights(s, A, weights, config)
    ll, _ = _Objective(s, A, w, config).loglik(network.theta, need_grad=False)
    return ll - config.lam * regularizer_value(network.theta, config)


def gradient(network: MarkovNetwork, data, weights=None, config: TrainConfig | None = None) -> np.ndarray:
    """Gradient of :func:`objective` in canonical parameter order.

    The L1 term contributes ``-lam * sign(theta)`` with ``sign(0) = 0``.
    """
    config = config or TrainConfig()
    s = network.structure
    A = _as_assignments(s, data)
    w = _resolve_weights(s, A, weights, config)
    obj = _Objective(s, A, w, config)
    _, g = obj.loglik(network.theta, need_grad=True)
    theta = network.theta
    return g - obj.l2 * theta - obj.l1 * np.sign(theta)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _projected_grad_max(theta, g, l1):
    """Max-norm of the minimum-norm subgradient of ``f + l1 * |theta|_1``."""
    if l1 == 0:
        return float(np.max(np.abs(g))) if g.size else 0.0
    nz = theta != 0
    pg = np.where(nz, g + l1 * np.sign(theta), soft_threshold(g, l1))
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def fit(initial: MarkovNetwork, data, config: TrainConfig | None = None, weights=None):
    """Maximise the penalised weighted objective from ``initial``.

    Each iteration takes a proximal gradient step whose length is found by
    backtracking from a Barzilai-Borwein guess (``config.step_size`` on the
    first iteration) until the sufficient-decrease condition
    ``F(new) <= F(old) - ARMIJO / t * |new - old|^2`` holds.  Without an L1
    term this is the ordinary Armijo rule.  Near the optimum the change in
    ``F`` drowns in rounding; the condition is then certified from the
    gradient at the candidate, which bounds ``F(new) - F(old)`` because both
    likelihoods are concave in ``theta``.  Stops when the projected gradient
    max-norm drops below ``grad_tol``, after ``max_iters`` iterations, or when
    no step changes ``theta`` any more (``converged`` stays False and the last
    trace entry is marked rejected).

    Returns ``(network, TrainTrace)``.
    """
    config = config or TrainConfig()
    s = initial.structure
    A = _as_assignments(s, data)
    w = _resolve_weights(s, A, weights, config)
    obj = _Objective(s, A, w, config)

    theta = initial.theta.copy()
    f, g = obj.smooth(theta)
    F = obj.total(theta, f)
    if not (np.isfinite(F) and np.all(np.isfinite(g))):
        raise DivergedError(0)

    trace = TrainTrace()
    if _projected_grad_max(theta, g, obj.l1) < config.grad_tol:
        trace.converged = True
        return MarkovNetwork(s, theta), trace

    t = config.step_size
    for it in range(1, config.max_iters + 1):
        accepted = False
        F_c, g_new = F, None
        while True:
            cand = soft_threshold(theta - t * g, t * obj.l1) if obj.l1 else theta - t * g
            d = cand - theta
            if np.max(np.abs(d)) <= np.finfo(float).eps * max(1.0, float(np.max(np.abs(theta)))):
                break
            need = ARMIJO / t * float(d @ d)
            f_c, _ = obj.smooth(cand, need_grad=False)
            F_c = obj.total(cand, f_c)
            if np.isfinite(F_c) and F_c <= F - need:
                accepted = True
                break
            if np.isfinite(F_c) and F_c <= F + ROUND_RTOL * max(1.0, abs(F)):
                # the value test is lost in rounding; convexity of the smooth
                # part bounds F(cand) - F(theta) by this gradient expression
                f_c, g_new = obj.smooth(cand)
                bound = float(g_new @ d) + obj.l1 * (float(np.abs(cand).sum()) - float(np.abs(theta).sum()))
                if np.all(np.isfinite(g_new)) and bound <= -need:
                    accepted = True
                    break
                g_new = None
            t *= SHRINK
        if not accepted:
            if not np.isfinite(F_c):
                raise DivergedError(it)
            # no representable step makes progress
            trace.objective.append(-F)
            trace.grad_max.append(_projected_grad_max(theta, g, obj.l1))
            trace.accepted.append(False)
            break

        if g_new is None:
            f_new, g_new = obj.smooth(cand)
        else:
            f_new = f_c
        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            raise DivergedError(it)
        y = g_new - g
        sy = float(d @ y)
        theta, f, g, F = cand, f_new, g_new, obj.total(cand, f_new)
        pg = _projected_grad_max(theta, g, obj.l1)
        trace.objective.append(-F)
        trace.grad_max.append(pg)
        trace.accepted.append(True)
        if pg < config.grad_tol:
            trace.converged = True
            break
        t = float(d @ d) / sy if sy > 0 else 2.0 * t
        t = min(max(t, 1e-12), 1e12)

    return MarkovNetwork(s, theta), trace


# -- structure learning --------------------------------------------------------

@dataclass(frozen=True)
class StructureOptions:
    candidate_pairs: str = "top_m_mutual_information"
    #: number of feature-feature candidates; ``None`` means ``3 * d``
    m: int | None = None
    prune_eps: float = 1e-3
    #: L1 strength for the selection fit; ``None`` means ``AUTO_L1_SCALE * sqrt(sum w_i^2)``
    lam: float | None = None

    def __post_init__(self):
        if self.candidate_pairs not in CANDIDATE_POLICIES:
            raise ValueError(f"candidate_pairs must be one of {CANDIDATE_POLICIES}")
        if self.m is not None and self.m < 0:
            raise ValueError("m must be >= 0")
        if not self.prune_eps >= 0:
            raise ValueError("prune_eps must be >= 0")


@dataclass
class StructureResult:
    structure: GraphStructure
    candidates: tuple
    kept: tuple
    #: set when more candidates were requested than feature pairs exist
    clamped: bool
    network: MarkovNetwork | None = None


def mutual_information(a, b, card_a: int, card_b: int) -> float:
    """Empirical mutual information (nats) between two discrete columns."""
    joint = np.bincount(a * card_b + b, minlength=card_a * card_b).reshape(card_a, card_b) / a.size
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(pa, pb)[nz])))


def rank_feature_pairs(structure: GraphStructure, A) -> list[tuple[tuple[int, int], float]]:
    """Feature pairs by decreasing mutual information, ties by pair order."""
    fids = structure.feature_ids
    scored = []
    for i, u in enumerate(fids):
        for v in fids[i + 1:]:
            mi = mutual_information(A[:, u], A[:, v], int(structure.cardinalities[u]),
                                    int(structure.cardinalities[v]))
            scored.append(((u, v), mi))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def learn_structure(dataset, config: TrainConfig | None = None, options: StructureOptions | None = None,
                    weights=None) -> StructureResult:
    """Star graph plus the feature-feature edges that survive an L1 fit.

    Label-feature edges are always kept.  Candidate feature-feature edges
    whose fitted table has ``max |theta| < prune_eps`` are dropped.
    """
    config = config or TrainConfig()
    options = options or StructureOptions()
    variables = dataset.variable_specs()
    star = GraphStructure.star(variables)
    A = _as_assignments(star, dataset)
    d = len(star.feature_ids)
    n_pairs = d * (d - 1) // 2

    ranked = rank_feature_pairs(star, A)
    if options.candidate_pairs == "all":
        m, clamped = n_pairs, False
    else:
        m = 3 * d if options.m is None else options.m
        clamped = m > n_pairs
        if clamped:
            warnings.warn(f"requested {m} candidate pairs but only {n_pairs} exist; using all", stacklevel=2)
            m = n_pairs
    candidates = tuple(pair for pair, _ in ranked[:m])
    if not candidates:
        return StructureResult(star, (), (), clamped)

    w = _resolve_weights(star, A, weights, config)
    lam = AUTO_L1_SCALE * float(np.sqrt(w @ w)) if options.lam is None else options.lam
    full = star.with_edges(star.edges + candidates)
    fitted, _ = fit(MarkovNetwork(full), A, config.replace(regularizer="l1", lam=lam), weights=w)
    kept = tuple(e for e in candidates if np.max(np.abs(fitted.pairwise(*e))) >= options.prune_eps)
    return StructureResult(star.with_edges(star.edges + kept), candidates, kept, clamped, fitted)
