"""Compiled inner loops for the skeleton chain.

All random input is drawn beforehand by :class:`~friction_walk.rng.RandomStream`
and passed in, so the kernels are pure functions of their arguments and the
results do not depend on how a path is cut into blocks.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def chain(a, y0, U, Y, D):
    """Directions and log-contractions of the polar chain.

    Y[0] = y0; for j < n: w = a Y[j] + (1-a) U[j], D[j] = log|w|,
    Y[j+1] = w/|w|.  Returns the number of completed steps; a step with
    w == 0 exactly (possible only at a = 1/2) gets D = -inf and ends the chain.
    """
    n = U.shape[0]
    b = 1.0 - a
    Y[0, 0] = y0[0]
    Y[0, 1] = y0[1]
    Y[0, 2] = y0[2]
    for j in range(n):
        w0 = a * Y[j, 0] + b * U[j, 0]
        w1 = a * Y[j, 1] + b * U[j, 1]
        w2 = a * Y[j, 2] + b * U[j, 2]
        r = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        if r == 0.0:
            D[j] = -np.inf
            Y[j + 1, 0] = Y[j, 0]
            Y[j + 1, 1] = Y[j, 1]
            Y[j + 1, 2] = Y[j, 2]
            return j + 1
        D[j] = math.log(r)
        Y[j + 1, 0] = w0 / r
        Y[j + 1, 1] = w1 / r
        Y[j + 1, 2] = w2 / r
    return n


@njit(cache=True, nogil=True)
def compensated_cumsum(s, c, inc, out):
    """Running Neumaier sum.

    Starting from the carried state (s, c), writes the corrected partial sums
    s + c after each increment into ``out`` and returns the new (s, c) so a
    later block can continue the same sum.
    """
    for i in range(inc.shape[0]):
        x = inc[i]
        t = s + x
        if math.isinf(t) or math.isnan(t):
            c = 0.0
        elif abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i] = s + c
    return s, c


@njit(cache=True, nogil=True)
def batch_chain(a, Y0, U, lam, marks, S, beta=0.0, thresh=np.inf):
    """Run many independent chains side by side.

    Y0 is (m, 3), U is (m, n, 3), lam is (m, n).  On return S[i, g] holds
    sum_{j < marks[g]} lam[i, j] Y_j for chain i (marks increasing).  Returns (log R_n - log R_0, Y_n, hits)
    per chain, where hits counts the j >= 1 with
    |(lam_j + beta) Y_j - beta Y_{j-1}| >= thresh.  An absorbed chain keeps
    log R = -inf.
    """
    m, n = lam.shape
    b = 1.0 - a
    t2 = thresh * thresh
    logc = np.zeros(m)
    Yn = np.empty((m, 3))
    hits = np.zeros(m, dtype=np.int64)
    for i in range(m):
        y0, y1, y2 = Y0[i, 0], Y0[i, 1], Y0[i, 2]
        p0, p1, p2 = y0, y1, y2
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        acc = 0.0
        g = 0
        for j in range(n):
            l = lam[i, j]
            s0 += l * y0
            s1 += l * y1
            s2 += l * y2
            while g < marks.shape[0] and marks[g] == j + 1:
                S[i, g, 0] = s0
                S[i, g, 1] = s1
                S[i, g, 2] = s2
                g += 1
            if j > 0:
                c = l + beta
                d0 = c * y0 - beta * p0
                d1 = c * y1 - beta * p1
                d2 = c * y2 - beta * p2
                if d0 * d0 + d1 * d1 + d2 * d2 >= t2:
                    hits[i] += 1
            w0 = a * y0 + b * U[i, j, 0]
            w1 = a * y1 + b * U[i, j, 1]
            w2 = a * y2 + b * U[i, j, 2]
            r = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            if r == 0.0:
                acc = -np.inf
                break
            acc += math.log(r)
            p0, p1, p2 = y0, y1, y2
            y0, y1, y2 = w0 / r, w1 / r, w2 / r
        while g < marks.shape[0]:
            S[i, g, 0] = s0
            S[i, g, 1] = s1
            S[i, g, 2] = s2
            g += 1
        logc[i] = acc
        Yn[i, 0] = y0
        Yn[i, 1] = y1
        Yn[i, 2] = y2
    return logc, Yn, hits


@njit(cache=True, nogil=True)
def time_increments(lam, logR, rate_coeff, out):
    """out[j] = lam[j] / (rate_coeff exp(logR[j])), i.e. lam_j / Sigma(K_j)."""
    for j in range(lam.shape[0]):
        out[j] = lam[j] * math.exp(-logR[j]) / rate_coeff
