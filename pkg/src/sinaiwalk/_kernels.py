"""Compiled inner loops.  All randomness comes in as pre-drawn uniforms."""

import numpy as np
from numba import njit


@njit(cache=True)
def walk_steps(alpha, lo, pos, u, bits, t0):
    """Advance the quenched chain through the uniforms ``u``.

    Step ``t0 + j`` goes right iff ``u[j] < alpha[pos - lo]``; right steps set
    bit ``t0 + j`` of ``bits`` (MSB-first, as ``np.packbits``).  Stops early,
    without consuming ``u[j]``, when the walker stands outside the window.
    Returns ``(consumed, pos)``.
    """
    size = alpha.shape[0]
    for j in range(u.shape[0]):
        i = pos - lo
        if i < 0 or i >= size:
            return j, pos
        if u[j] < alpha[i]:
            t = t0 + j
            bits[t >> 3] |= np.uint8(128 >> (t & 7))
            pos += 1
        else:
            pos -= 1
    return u.shape[0], pos


@njit(cache=True)
def excursions(alpha_loc, m_idx, k_idx, u, state, reps, cap, totals):
    """Run excursions from ``m_idx`` back to ``m_idx`` on a reflecting interval.

    ``alpha_loc`` covers the interval; the end sites reflect.  ``state`` holds
    ``[done, pos, visits, steps]`` so the loop can resume with a fresh
    uniform buffer.  ``totals`` accumulates
    ``[sum, sum_sq, capped_count, sum_cube, sum_fourth]``; an excursion that
    reaches ``cap`` steps without returning is closed and counted as capped.
    Visits to ``k_idx`` are counted at times 1..T_m, so the return itself
    counts when ``k_idx == m_idx``.  Returns the number of uniforms consumed.
    """
    last = alpha_loc.shape[0] - 1
    done = state[0]
    pos = state[1]
    visits = state[2]
    steps = state[3]
    j = 0
    nu = u.shape[0]
    while done < reps:
        if j >= nu:
            break
        if pos == 0:
            pos = 1
        elif pos == last:
            pos = last - 1
        elif u[j] < alpha_loc[pos]:
            pos += 1
        else:
            pos -= 1
        j += 1
        steps += 1
        if pos == k_idx:
            visits += 1
        if pos == m_idx or steps >= cap:
            if pos != m_idx:
                totals[2] += 1.0
            v = float(visits)
            totals[0] += v
            totals[1] += v * v
            totals[3] += v * v * v
            totals[4] += v * v * v * v
            done += 1
            pos = m_idx
            visits = 0
            steps = 0
    state[0] = done
    state[1] = pos
    state[2] = visits
    state[3] = steps
    return j


@njit(cache=True)
def toward_sweep(p_in, w):
    """Expected weight collected before stepping past the last row.

    Rows run from a reflecting end (``p_in[0] = 1``) towards an absorbing
    site; ``p_in[i]`` is the chance of stepping towards it.  This is forward
    elimination of the first-step system with each pivot taken as the exact
    ``p_in[i]`` (the eliminated coefficient is 1 by recurrence), so every
    update adds positive terms and no cancellation occurs.
    """
    g = 0.0
    for i in range(p_in.shape[0]):
        g = (w[i] + (1.0 - p_in[i]) * g) / p_in[i]
    return g
