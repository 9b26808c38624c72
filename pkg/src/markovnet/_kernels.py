"""Backend selection for the hot kernels.

The compiled extension ``_ext`` is preferred; ``_fallback`` is used when it
was not built.  Callers may force a backend by name (``"cython"`` or
``"python"``), which the tests and the benchmark script use to compare them.
"""
import numpy as np

from . import _fallback

try:
    from . import _ext
except ImportError:  # extension not built
    _ext = None

_BACKENDS = {"python": _fallback}
if _ext is not None:
    _BACKENDS["cython"] = _ext

AVAILABLE = tuple(sorted(_BACKENDS))
DEFAULT_BACKEND = "cython" if _ext is not None else "python"


def get(backend=None):
    """Module providing ``run_sweeps`` and ``pseudo_loglik`` for ``backend``."""
    name = DEFAULT_BACKEND if backend is None else backend
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; available: {AVAILABLE}") from None


def neighbor_csr(structure):
    """Neighbour tables in the CSR layout both kernels read.

    Returns ``(card, unary_off, nbr_ptr, nbr_var, nbr_off, nbr_s_self,
    nbr_s_other)``: for variable ``v`` in state ``k`` next to neighbour
    ``nbr_var[p]`` in state ``l``, the pairwise parameter sits at
    ``nbr_off[p] + k * nbr_s_self[p] + l * nbr_s_other[p]``.
    """
    s = structure
    ptr = [0]
    nbr_var, nbr_off, s_self, s_other = [], [], [], []
    for v in range(s.n):
        for u in s.neighbors(v):
            a, b = min(u, v), max(u, v)
            cb = int(s.cardinalities[b])
            nbr_var.append(u)
            nbr_off.append(s.edge_offsets[s.edge_index(a, b)])
            s_self.append(cb if v == a else 1)
            s_other.append(1 if v == a else cb)
        ptr.append(len(nbr_var))
    return tuple(np.ascontiguousarray(x, dtype=np.intp)
                 for x in (s.cardinalities, s.unary_offsets, ptr, nbr_var, nbr_off, s_self, s_other))
