"""Agent-level inner loops with a numba path and a pure-numpy fallback.

Both paths consume the same pre-drawn uniforms, so they return identical
results; only speed and memory differ.  Set ``CTSIM_DISABLE_NUMBA=1`` to
force the numpy path (numba is also skipped if it fails to import).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("CTSIM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("disabled by CTSIM_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def count_reports_numpy(u_state, u_y, u_branch, u_draw, eta_s, p, p_s, beta, xi):
    """Number of agents reporting 1.

    Agent i is a Stereotype iff ``u_state[i] < eta_s``; its stable preference
    is ``u_y[i] < p``.  Stereotypes take the stereotype draw ``u_draw[i] < p_s``
    when ``u_branch[i] < beta`` and report y otherwise; Aware agents report y
    when ``u_branch[i] < xi`` and 1 - y otherwise.  p and p_s must already be
    clamped to [0, 1].
    """
    y = u_y < p
    stereo = u_state < eta_s
    report_s = np.where(u_branch < beta, u_draw < p_s, y)
    report_a = np.where(u_branch < xi, y, ~y)
    return int(np.count_nonzero(np.where(stereo, report_s, report_a)))


def chain_counts_numpy(e1, e2, lam1, lam2, t):
    """Counts of agents in (S, A, T) at time t for the S -> A -> T chain.

    ``e1`` and ``e2`` are unit-rate exponential draws; the first jump
    happens at ``e1 / lam1`` and the second ``e2 / lam2`` later.
    """
    tau1 = e1 / lam1
    n_s = int(np.count_nonzero(tau1 > t))
    n_t = int(np.count_nonzero(tau1 + e2 / lam2 <= t))
    return n_s, e1.shape[0] - n_s - n_t, n_t


def loss_terms_numpy(p, p_s, a0, a1, a2, g0, g1, g2):
    p_bar = a0 + a1 * p + a2 * p_s
    p_hat = g0 + g1 * p + g2 * p_s
    return p_bar, p_hat


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def count_reports_numba(u_state, u_y, u_branch, u_draw, eta_s, p, p_s, beta, xi):
        total = 0
        for i in range(u_state.shape[0]):
            y = u_y[i] < p
            if u_state[i] < eta_s:
                r = (u_draw[i] < p_s) if u_branch[i] < beta else y
            else:
                r = y if u_branch[i] < xi else not y
            if r:
                total += 1
        return total

    @njit(cache=True, nogil=True)
    def chain_counts_numba(e1, e2, lam1, lam2, t):
        n_s = 0
        n_t = 0
        for i in range(e1.shape[0]):
            tau1 = e1[i] / lam1
            if tau1 > t:
                n_s += 1
            elif tau1 + e2[i] / lam2 <= t:
                n_t += 1
        return n_s, e1.shape[0] - n_s - n_t, n_t

    @njit(cache=True, nogil=True)
    def loss_terms_numba(p, p_s, a0, a1, a2, g0, g1, g2):
        n = p.shape[0]
        p_bar = np.empty(n)
        p_hat = np.empty(n)
        for i in range(n):
            p_bar[i] = a0 + a1 * p[i] + a2 * p_s[i]
            p_hat[i] = g0 + g1 * p[i] + g2 * p_s[i]
        return p_bar, p_hat

    def count_reports(u_state, u_y, u_branch, u_draw, eta_s, p, p_s, beta, xi):
        return int(count_reports_numba(u_state, u_y, u_branch, u_draw,
                                       float(eta_s), float(p), float(p_s),
                                       float(beta), float(xi)))

    def chain_counts(e1, e2, lam1, lam2, t):
        n_s, n_a, n_t = chain_counts_numba(e1, e2, float(lam1), float(lam2), float(t))
        return int(n_s), int(n_a), int(n_t)

    def loss_terms(p, p_s, a0, a1, a2, g0, g1, g2):
        return loss_terms_numba(np.ascontiguousarray(p, dtype=np.float64),
                                np.ascontiguousarray(p_s, dtype=np.float64),
                                float(a0), float(a1), float(a2),
                                float(g0), float(g1), float(g2))

else:
    count_reports = count_reports_numpy
    chain_counts = chain_counts_numpy
    loss_terms = loss_terms_numpy
