"""Pure-Python/numpy kernels, used when the compiled extension is unavailable.

``run_sweeps`` repeats the compiled arithmetic in the same order, so Gibbs
chains are identical across backends.  ``pseudo_loglik`` is vectorised over
rows and agrees with the compiled kernel to rounding.
"""
import math

import numpy as np
from scipy.special import logsumexp


def run_sweeps(theta, card, unary_off, nbr_ptr, nbr_var, nbr_off, nbr_s_self, nbr_s_other,
               free_vars, state, uniforms, sweep_start, burn_in, thin, counts):
    # Same arithmetic, same order as the compiled kernel.
    th = theta.tolist()
    card_l = card.tolist()
    uoff = unary_off.tolist()
    ptr = nbr_ptr.tolist()
    nvar = nbr_var.tolist()
    noff = nbr_off.tolist()
    sself = nbr_s_self.tolist()
    sother = nbr_s_other.tolist()
    free = free_vars.tolist()
    st = state.tolist()
    n = len(card_l)
    exp = math.exp
    inf = math.inf
    kept = []

    for s, row in enumerate(uniforms.tolist()):
        for j, v in enumerate(free):
            kk = card_l[v]
            base = uoff[v]
            lo, hi = ptr[v], ptr[v + 1]
            work = [0.0] * kk
            m = -inf
            for k in range(kk):
                w = th[base + k]
                for p in range(lo, hi):
                    w += th[noff[p] + k * sself[p] + st[nvar[p]] * sother[p]]
                work[k] = w
                if w > m:
                    m = w
            total = 0.0
            for k in range(kk):
                total += exp(work[k] - m)
                work[k] = total
            target = row[j] * total
            new_state = kk - 1
            for k in range(kk):
                if target < work[k]:
                    new_state = k
                    break
            st[v] = new_state
        g = sweep_start + s
        if g >= burn_in and (g - burn_in) % thin == 0:
            kept.append([uoff[v] + st[v] for v in range(n)])

    for idx in kept:
        for i in idx:
            counts[i] += 1
    state[:] = st


def pseudo_loglik(theta, data, weights, card, unary_off, nbr_ptr, nbr_var, nbr_off, nbr_s_self,
                  nbr_s_other, grad=None):
    n_rows = data.shape[0]
    rows = np.arange(n_rows)
    value = 0.0
    for v in range(card.size):
        states = np.arange(card[v])
        gathers = [np.broadcast_to(unary_off[v] + states, (n_rows, card[v]))]
        for p in range(nbr_ptr[v], nbr_ptr[v + 1]):
            gathers.append(nbr_off[p] + states[None, :] * nbr_s_self[p]
                           + data[:, nbr_var[p]][:, None] * nbr_s_other[p])
        idx = np.stack(gathers)
        logits = theta[idx].sum(axis=0)
        lse = logsumexp(logits, axis=1)
        x = data[:, v]
        value += float(weights @ (logits[rows, x] - lse))
        if grad is not None:
            resid = -np.exp(logits - lse[:, None]) * weights[:, None]
            resid[rows, x] += weights
            grad += np.bincount(idx.reshape(-1), weights=np.tile(resid.reshape(-1), idx.shape[0]),
                                minlength=grad.size)
    return value
