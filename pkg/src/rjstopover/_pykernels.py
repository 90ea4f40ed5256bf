"""Pure-numpy likelihood kernels (fallback for ``_ckernels``).

All arrays are indexed by 0-based day.  For behavioural group g, arrival
day b and day t >= b:

    present[g, b, t] = prod_{k=b}^{t-1} phi[g, k, age=k-b+1]
    depart[g, b, d]  = present[g, b, d] * (1 - phi[g, d, d-b+1])   (d < T-1)
                     = present[g, b, T-1]                           (d = T-1)

A history first caught on f and last seen on l has latent probability
``mix[f, l] * middle_h`` where

    mix[f, l] = sum_g pi_g sum_{b<=f} beta_b A(b, f) sum_{d>=l} depart[g, b, d] E(l, d)

with ``A(b, f) = prod_{t=b}^{f-1} capfail_t`` (missed captures before
marking) and ``E(l, d) = prod_{t=l+1}^{d} nodet_t`` (missed detections after
the last sighting).  ``middle_h`` covers days f..l and depends only on
detection parameters, so it is computed outside the kernel.
"""

import numpy as np
from scipy.special import expit, logsumexp


def _upper_cumprod(values, inclusive):
    # M[i, j] = prod of values over (i..j) or (i+1..j), zero below the diagonal
    T = values.shape[0]
    idx = np.arange(T)
    keep = idx[None, :] >= idx[:, None] if inclusive else idx[None, :] > idx[:, None]
    out = np.cumprod(np.where(keep, values[None, :], 1.0), axis=1)
    out[idx[None, :] < idx[:, None]] = 0.0
    return out


def open_core(beta, pi, phi0, gamma_t, gamma_a, capfail, nodet, resight, s):
    T = beta.shape[0]
    days = np.arange(T)
    b = days[:, None]
    t = days[None, :]
    upper = t >= b
    lin = phi0[:, None, None] + gamma_t * (t + 1) + gamma_a * (t - b + 1)
    lin = np.where(upper, lin, 0.0)
    phi = np.where(upper, expit(lin), 1.0)
    leave = np.where(upper, expit(-lin), 0.0)

    present = np.ones_like(phi)
    present[:, :, 1:] = np.cumprod(phi[:, :, :-1], axis=2)
    present = np.where(upper, present, 0.0)
    depart = present * leave
    depart[:, :, T - 1] = present[:, :, T - 1]

    # seen[b, t] = prod_{k=b}^{t} capfail_k: present since b and never caught
    seen = _upper_cumprod(capfail, inclusive=True)
    zero = np.einsum("g,b,gbd,bd->", pi, beta, depart, seen)

    zeta = s * np.einsum("g,b,gbt,bt->t", pi, beta, present, seen)
    zeta = np.where(resight.astype(bool), zeta, 0.0)

    tail = _upper_cumprod(nodet, inclusive=False)
    np.fill_diagonal(tail, 1.0)
    wait = np.einsum("gbd,ld->gbl", depart, tail)

    before = np.zeros((T, T))
    before[:, 1:] = seen[:, :-1]
    np.fill_diagonal(before, 1.0)
    mix = np.einsum("g,b,bf,gbl->fl", pi, beta, before, wait)
    mix = np.where(days[None, :] >= days[:, None], mix, 0.0)
    return mix, float(zero), zeta


def closed_core(pi, p, ks, T):
    ks = np.asarray(ks)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        lp = np.log(p)
        lq = np.log1p(-p)
    k = ks[:, None].astype(float)
    terms = log_pi[None, :] + np.where(k > 0, k * lp[None, :], 0.0)
    terms = terms + np.where(T - k > 0, (T - k) * lq[None, :], 0.0)
    return logsumexp(terms, axis=1)
