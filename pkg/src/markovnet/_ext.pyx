# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Gibbs sweeps and the weighted pseudo-likelihood.

Neighbour structure arrives in CSR form: for variable ``v`` the entries
``p in [nbr_ptr[v], nbr_ptr[v + 1])`` name a neighbour ``nbr_var[p]`` and the
pairwise parameter ``theta[nbr_off[p] + k * nbr_s_self[p] + l * nbr_s_other[p]]``
for ``v`` in state ``k`` and the neighbour in state ``l``.
"""
from libc.math cimport exp, log, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()


def run_sweeps(const double[::1] theta,
               const cnp.intp_t[::1] card,
               const cnp.intp_t[::1] unary_off,
               const cnp.intp_t[::1] nbr_ptr,
               const cnp.intp_t[::1] nbr_var,
               const cnp.intp_t[::1] nbr_off,
               const cnp.intp_t[::1] nbr_s_self,
               const cnp.intp_t[::1] nbr_s_other,
               const cnp.intp_t[::1] free_vars,
               cnp.intp_t[::1] state,
               const double[:, ::1] uniforms,
               Py_ssize_t sweep_start,
               Py_ssize_t burn_in,
               Py_ssize_t thin,
               cnp.int64_t[::1] counts):
    """Systematic-scan sweeps; retained states are tallied into ``counts``.

    Mirrors ``_fallback.run_sweeps`` operation for operation.
    """
    cdef Py_ssize_t n = card.shape[0]
    cdef Py_ssize_t n_free = free_vars.shape[0]
    cdef Py_ssize_t max_card = 0
    cdef Py_ssize_t s, j, v, k, p, kk, g, new_state
    cdef double w, m, total, target
    for v in range(n):
        if card[v] > max_card:
            max_card = card[v]
    cdef double[::1] work = np.empty(max_card, dtype=np.float64)

    for s in range(uniforms.shape[0]):
        for j in range(n_free):
            v = free_vars[j]
            kk = card[v]
            m = -INFINITY
            for k in range(kk):
                w = theta[unary_off[v] + k]
                for p in range(nbr_ptr[v], nbr_ptr[v + 1]):
                    w += theta[nbr_off[p] + k * nbr_s_self[p] + state[nbr_var[p]] * nbr_s_other[p]]
                work[k] = w
                if w > m:
                    m = w
            total = 0.0
            for k in range(kk):
                total += exp(work[k] - m)
                work[k] = total
            target = uniforms[s, j] * total
            new_state = kk - 1
            for k in range(kk):
                if target < work[k]:
                    new_state = k
                    break
            state[v] = new_state
        g = sweep_start + s
        if g >= burn_in and (g - burn_in) % thin == 0:
            for v in range(n):
                counts[unary_off[v] + state[v]] += 1


def pseudo_loglik(const double[::1] theta,
                  const cnp.intp_t[:, ::1] data,
                  const double[::1] weights,
                  const cnp.intp_t[::1] card,
                  const cnp.intp_t[::1] unary_off,
                  const cnp.intp_t[::1] nbr_ptr,
                  const cnp.intp_t[::1] nbr_var,
                  const cnp.intp_t[::1] nbr_off,
                  const cnp.intp_t[::1] nbr_s_self,
                  const cnp.intp_t[::1] nbr_s_other,
                  double[::1] grad=None):
    """Weighted log pseudo-likelihood; adds its gradient into ``grad`` when given."""
    cdef Py_ssize_t n_rows = data.shape[0]
    cdef Py_ssize_t n = card.shape[0]
    cdef Py_ssize_t max_card = 0
    cdef Py_ssize_t i, v, k, p, kk, x, lo, hi
    cdef double wi, m, total, lse, r, value = 0.0
    cdef bint need_grad = grad is not None
    for v in range(n):
        if card[v] > max_card:
            max_card = card[v]
    cdef double[::1] logits = np.empty(max_card, dtype=np.float64)

    for i in range(n_rows):
        wi = weights[i]
        for v in range(n):
            kk = card[v]
            lo = nbr_ptr[v]
            hi = nbr_ptr[v + 1]
            m = -INFINITY
            for k in range(kk):
                r = theta[unary_off[v] + k]
                for p in range(lo, hi):
                    r += theta[nbr_off[p] + k * nbr_s_self[p] + data[i, nbr_var[p]] * nbr_s_other[p]]
                logits[k] = r
                if r > m:
                    m = r
            total = 0.0
            for k in range(kk):
                total += exp(logits[k] - m)
            lse = m + log(total)
            x = data[i, v]
            value += wi * (logits[x] - lse)
            if need_grad:
                for k in range(kk):
                    r = -wi * exp(logits[k] - lse)
                    if k == x:
                        r += wi
                    grad[unary_off[v] + k] += r
                    for p in range(lo, hi):
                        grad[nbr_off[p] + k * nbr_s_self[p] + data[i, nbr_var[p]] * nbr_s_other[p]] += r
    return value
