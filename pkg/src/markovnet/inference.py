"""Marginal and conditional inference.

Three engines share one output type, :class:`MarginalTable`:

* ``marginals_exact`` enumerates the unobserved state space (the oracle);
* ``marginals_gibbs`` runs a systematic-scan Gibbs chain through the
  compiled kernel in :mod:`markovnet._kernels`;
* ``marginals_meanfield`` runs coordinate-ascent mean field and records the
  ELBO after every sweep.

Evidence is a plain ``{variable_id: state}`` mapping.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import logsumexp, softmax

from . import _kernels
from .errors import InvalidEvidenceError
from .model import (
    MarkovNetwork,
    check_exact_limit,
    enumerate_assignments,
    log_scores,
)

METHODS = ("exact", "gibbs", "meanfield")

# Sweeps per block of uniforms handed to the kernel; part of the seed contract.
_CHUNK_SWEEPS = 4096


@dataclass(frozen=True)
class GibbsConfig:
    seed: int = 0
    burn_in: int = 1000
    samples: int = 5000
    thin: int = 1

    def __post_init__(self):
        if self.samples < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError(
                f"invalid GibbsConfig: samples={self.samples} (>=1), thin={self.thin} (>=1), "
                f"burn_in={self.burn_in} (>=0)"
            )

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + (self.samples - 1) * self.thin + 1


@dataclass(frozen=True)
class MeanFieldConfig:
    tol: float = 1e-6
    max_iters: int = 500
    damping: float = 0.0

    def __post_init__(self):
        if not self.tol > 0 or self.max_iters < 1 or not 0 <= self.damping < 1:
            raise ValueError(
                f"invalid MeanFieldConfig: tol={self.tol} (>0), max_iters={self.max_iters} (>=1), "
                f"damping={self.damping} (in [0, 1))"
            )


@dataclass
class InferenceDiagnostics:
    method: str
    iterations: int
    converged: bool
    elbo_trace: tuple = ()
    #: Gibbs only: max absolute difference between the two halves of the retained samples.
    split_half_gap: float | None = None


@dataclass
class MarginalTable:
    """One categorical distribution per variable; observed variables are point masses."""

    marginals: tuple
    observed: Mapping[int, int] = field(default_factory=dict)

    def __getitem__(self, v: int) -> np.ndarray:
        return self.marginals[v]

    def __len__(self):
        return len(self.marginals)

    def max_abs_diff(self, other: "MarginalTable") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.marginals, other.marginals))


def check_evidence(structure, evidence) -> dict[int, int]:
    ev = {}
    for v, k in dict(evidence or {}).items():
        if not (isinstance(v, (int, np.integer)) and 0 <= v < structure.n):
            raise InvalidEvidenceError(f"evidence names unknown variable {v!r}")
        if not isinstance(k, (int, np.integer)) or not 0 <= k < structure.cardinalities[v]:
            raise InvalidEvidenceError(
                f"evidence state {k!r} for variable {v} outside [0, {structure.cardinalities[v]})"
            )
        ev[int(v)] = int(k)
    return ev


def _point_mass(card: int, k: int) -> np.ndarray:
    p = np.zeros(card)
    p[k] = 1.0
    return p


def marginals_exact(network: MarkovNetwork, evidence=None, limit: int | None = None) -> MarginalTable:
    """Enumerate the unobserved variables and normalise given the evidence."""
    s = network.structure
    ev = check_evidence(s, evidence)
    free = [v for v in range(s.n) if v not in ev]
    check_exact_limit(s.state_space_size(free), limit)

    sub = enumerate_assignments([s.cardinalities[v] for v in free])
    full = np.empty((sub.shape[0], s.n), dtype=np.intp)
    full[:, free] = sub
    for v, k in ev.items():
        full[:, v] = k
    scores = log_scores(network, full)
    probs = np.exp(scores - logsumexp(scores))

    margs = []
    for v in range(s.n):
        card = int(s.cardinalities[v])
        if v in ev:
            margs.append(_point_mass(card, ev[v]))
        else:
            margs.append(np.bincount(full[:, v], weights=probs, minlength=card))
    return MarginalTable(tuple(margs), ev)


def _gibbs_plan(network: MarkovNetwork):
    return (np.ascontiguousarray(network.theta, dtype=np.float64),
            *_kernels.neighbor_csr(network.structure))


def marginals_gibbs(network: MarkovNetwork, evidence=None, cfg: GibbsConfig | None = None,
                    backend: str | None = None):
    """Empirical marginals from a seeded systematic-scan Gibbs chain.

    Variables are resampled in ascending id order within each sweep.  The
    initial state of every unobserved variable is drawn uniformly from the
    same generator that supplies the per-update uniforms, so the result is a
    deterministic function of ``cfg``.  ``backend`` selects the kernel
    (``"cython"`` or ``"python"``); both produce identical chains.
    """
    cfg = cfg or GibbsConfig()
    s = network.structure
    ev = check_evidence(s, evidence)
    free = np.array([v for v in range(s.n) if v not in ev], dtype=np.intp)
    if free.size == 0:
        raise InvalidEvidenceError("Gibbs sampling needs at least one unobserved variable")

    run = _kernels.get(backend).run_sweeps
    plan = _gibbs_plan(network)
    rng = np.random.default_rng(cfg.seed)
    state = np.zeros(s.n, dtype=np.intp)
    for v, k in ev.items():
        state[v] = k
    state[free] = rng.integers(0, s.cardinalities[free])

    total = cfg.total_sweeps
    # Retained samples are split into two halves for the convergence check.
    half_sweep = cfg.burn_in + (cfg.samples // 2) * cfg.thin if cfg.samples >= 2 else total
    halves = (np.zeros(s.n_unary, dtype=np.int64), np.zeros(s.n_unary, dtype=np.int64))
    start = 0
    while start < total:
        stop = min(start + _CHUNK_SWEEPS, total)
        uniforms = rng.random((stop - start, free.size))
        # never let one kernel call straddle the half boundary
        cut = stop if not (start < half_sweep < stop) else half_sweep
        run(*plan, free, state, uniforms[:cut - start], start, cfg.burn_in, cfg.thin,
            halves[0] if start < half_sweep else halves[1])
        if cut < stop:
            run(*plan, free, state, np.ascontiguousarray(uniforms[cut - start:]), cut, cfg.burn_in,
                cfg.thin, halves[1])
        start = stop

    counts = halves[0] + halves[1]
    margs, gap = [], 0.0
    n_a = halves[0][s.unary_offsets[0]:s.unary_offsets[0] + s.cardinalities[0]].sum()
    n_b = cfg.samples - n_a
    for v in range(s.n):
        o, card = s.unary_offsets[v], int(s.cardinalities[v])
        if v in ev:
            margs.append(_point_mass(card, ev[v]))
            continue
        margs.append(counts[o:o + card] / cfg.samples)
        if n_a and n_b:
            gap = max(gap, float(np.max(np.abs(halves[0][o:o + card] / n_a - halves[1][o:o + card] / n_b))))
    diag = InferenceDiagnostics("gibbs", total, gap <= 0.05, split_half_gap=gap)
    return MarginalTable(tuple(margs), ev), diag


def _entropy(q: np.ndarray) -> float:
    nz = q[q > 0]
    return float(-np.sum(nz * np.log(nz)))


def mean_field_elbo(network: MarkovNetwork, q) -> float:
    """Expected log-score under the factorised ``q`` plus its entropy."""
    s = network.structure
    val = 0.0
    for v in range(s.n):
        val += float(q[v] @ network.unary(v)) + _entropy(q[v])
    for u, v in s.edges:
        val += float(q[u] @ network.pairwise(u, v) @ q[v])
    return val


def marginals_meanfield(network: MarkovNetwork, evidence=None, cfg: MeanFieldConfig | None = None):
    """Coordinate-ascent mean field starting from uniform factors.

    Each update sets ``q_v`` to the softmax of its expected local field,
    optionally interpolated with the previous ``q_v`` by ``damping``.  Because
    the ELBO is concave in each single factor, the interpolated update can
    only raise it.
    """
    cfg = cfg or MeanFieldConfig()
    s = network.structure
    ev = check_evidence(s, evidence)
    q = []
    for v in range(s.n):
        card = int(s.cardinalities[v])
        q.append(_point_mass(card, ev[v]) if v in ev else np.full(card, 1.0 / card))
    free = [v for v in range(s.n) if v not in ev]

    trace = [mean_field_elbo(network, q)]
    converged = False
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        max_change = 0.0
        for v in free:
            field_ = network.unary(v).copy()
            for u in s.neighbors(v):
                field_ += network.pairwise(v, u) @ q[u]
            new = softmax(field_)
            if cfg.damping:
                new = (1.0 - cfg.damping) * new + cfg.damping * q[v]
            max_change = max(max_change, float(np.max(np.abs(new - q[v]))))
            q[v] = new
        trace.append(mean_field_elbo(network, q))
        if max_change < cfg.tol:
            converged = True
            break
    diag = InferenceDiagnostics("meanfield", iters, converged, elbo_trace=tuple(trace))
    return MarginalTable(tuple(q), ev), diag


def label_conditional(network: MarkovNetwork, features) -> np.ndarray:
    """``P(label | all features)`` for each row of a fully observed feature matrix.

    ``features`` has one column per feature variable in ascending id order.
    With every feature observed only the label's own unary and its incident
    pairwise tables survive normalisation, so this is a softmax over label
    states.
    """
    s = network.structure
    x = np.atleast_2d(np.asarray(features, dtype=np.intp))
    fids = s.feature_ids
    if x.shape[1] != len(fids):
        raise InvalidEvidenceError(f"expected {len(fids)} feature columns, got {x.shape[1]}")
    if x.size and (np.any(x < 0) or np.any(x >= s.cardinalities[list(fids)][None, :])):
        raise InvalidEvidenceError("feature state outside its variable's range")
    y = s.label_id
    col = {v: j for j, v in enumerate(fids)}
    logits = np.tile(network.unary(y), (x.shape[0], 1))
    for u in s.neighbors(y):
        logits += network.pairwise(u, y)[x[:, col[u]]]
    return softmax(logits, axis=1)


def predict_label(network: MarkovNetwork, feature_evidence, method: str = "exact", cfg=None,
                  limit: int | None = None) -> np.ndarray:
    """Distribution of the label given any subset of observed features."""
    s = network.structure
    ev = check_evidence(s, feature_evidence)
    y = s.label_id
    if y in ev:
        raise InvalidEvidenceError("the label variable must not be part of the evidence")
    if method == "exact":
        if len(ev) == s.n - 1:
            row = [[ev[v] for v in s.feature_ids]]
            return label_conditional(network, row)[0]
        return marginals_exact(network, ev, limit)[y]
    if method == "gibbs":
        table, _ = marginals_gibbs(network, ev, cfg if isinstance(cfg, GibbsConfig) else None)
        return table[y]
    if method == "meanfield":
        table, _ = marginals_meanfield(network, ev, cfg if isinstance(cfg, MeanFieldConfig) else None)
        return table[y]
    raise ValueError(f"unknown inference method {method!r}; expected one of {METHODS}")


def predicted_label(distribution) -> int:
    """Most probable label state; exact ties go to the lower index."""
    return int(np.argmax(distribution))


def label_scores(network: MarkovNetwork, features, method: str = "exact", cfg=None,
                 positive: int = 1) -> np.ndarray:
    """``P(label = positive | x)`` for each row of a feature-state matrix.

    Negative entries mark missing features; such rows are handled one at a
    time by the chosen method, complete rows by the closed-form softmax when
    ``method == "exact"``.
    """
    s = network.structure
    x = np.atleast_2d(np.asarray(features, dtype=np.intp))
    if x.shape[0] == 0:
        return np.zeros(0)
    fids = s.feature_ids
    if method == "exact":
        complete = np.all(x >= 0, axis=1)
        out = np.empty(x.shape[0])
        if complete.any():
            out[complete] = label_conditional(network, x[complete])[:, positive]
        for i in np.flatnonzero(~complete):
            ev = {v: int(x[i, j]) for j, v in enumerate(fids) if x[i, j] >= 0}
            out[i] = predict_label(network, ev, "exact")[positive]
        return out
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        ev = {v: int(x[i, j]) for j, v in enumerate(fids) if x[i, j] >= 0}
        out[i] = predict_label(network, ev, method, cfg)[positive]
    return out
