import contextlib
import itertools
import math
import time

import numpy as np
import pytest

from markovnet.model import GraphStructure, MarkovNetwork, VariableSpec


def make_structure(cards, edges, label=0):
    variables = [VariableSpec(i, f"x{i}", c, "label" if i == label else "feature") for i, c in enumerate(cards)]
    return GraphStructure(variables, edges)


def random_network(seed, n_vars=None, max_card=2, edge_prob=0.4, scale=1.0):
    """Seeded random pairwise network; variable 0 is the label."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9)) if n_vars is None else n_vars
    cards = [2] + [int(rng.integers(2, max_card + 1)) for _ in range(n - 1)]
    edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < edge_prob]
    s = make_structure(cards, edges)
    return MarkovNetwork(s, rng.normal(scale=scale, size=s.n_params))


def brute_score(network, a):
    """Log-score by summing table entries one at a time."""
    s = network.structure
    total = 0.0
    for v in range(s.n):
        total += network.unary(v)[a[v]]
    for u, v in s.edges:
        total += network.pairwise(u, v)[a[u], a[v]]
    return total


def brute_joint(network):
    """``{assignment: probability}`` by plain enumeration with ``math.exp``."""
    cards = [int(c) for c in network.structure.cardinalities]
    weights = {a: math.exp(brute_score(network, a)) for a in itertools.product(*map(range, cards))}
    z = math.fsum(weights.values())
    return {a: w / z for a, w in weights.items()}


def brute_marginals(network, evidence=None):
    evidence = evidence or {}
    joint = {a: p for a, p in brute_joint(network).items() if all(a[v] == k for v, k in evidence.items())}
    z = math.fsum(joint.values())
    cards = [int(c) for c in network.structure.cardinalities]
    out = []
    for v, c in enumerate(cards):
        out.append(np.array([math.fsum(p for a, p in joint.items() if a[v] == k) / z for k in range(c)]))
    return out


@pytest.fixture
def chain3():
    """Seeded 3-node binary chain 0 - 1 - 2."""
    s = make_structure([2, 2, 2], [(0, 1), (1, 2)])
    rng = np.random.default_rng(3)
    return MarkovNetwork(s, rng.normal(size=s.n_params))


# -- acceptance criteria reporting --------------------------------------------

ACCEPTANCE_LINES = []


@contextlib.contextmanager
def criterion(name, budget_s=None):
    """Record one PASS/FAIL/SKIP line for an acceptance criterion.

    The body may fill ``detail["text"]``; a wall-clock ``budget_s`` is
    enforced after the body finishes.
    """
    detail = {"text": ""}
    start = time.perf_counter()
    status = "PASS"
    try:
        yield detail
        elapsed = time.perf_counter() - start
        if budget_s is not None and elapsed >= budget_s:
            status = "FAIL"
            raise AssertionError(f"{name} took {elapsed:.1f} s, budget {budget_s} s")
    except pytest.skip.Exception as exc:
        status = "SKIP"
        detail["text"] = str(exc)
        raise
    except BaseException as exc:
        status = "FAIL"
        detail["text"] = detail["text"] or f"{type(exc).__name__}: {exc}".splitlines()[0]
        raise
    finally:
        elapsed = time.perf_counter() - start
        timing = f"{elapsed:.1f} s" + (f" (budget {budget_s} s)" if budget_s is not None else "")
        line = f"{status:<4}  {name}: {detail['text']} [{timing}]"
        ACCEPTANCE_LINES.append(line)
        print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
