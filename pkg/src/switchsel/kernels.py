"""Hot inner loops of the Monte Carlo harness.

Every kernel works on the log Bayes-factor path ``D[r, n] = log p_B1(x^n) -
log p_B0(x^n)`` of a batch of streams (row ``r``, sample size ``n = 0..N``,
``D[:, 0] == 0``).  From it the switch evidence at every ``n`` is

    log p_sw1(x^n) - log p_B0(x^n)
        = logsumexp_{t = 2^i <= n} [log pi(t) + D[n] - D[t - 1]]  (+)  log g(n + 1)

where ``g(m)`` is the switch-prior mass on times ``>= m`` and ``(+)`` is
``logaddexp``.  The running sum over switch times changes only when ``n`` hits
a power of two, so one pass per stream suffices.

Both implementations are always importable; :func:`switch_log_ratio_paths`
and :func:`first_crossing` dispatch on :data:`switchsel._accel.USE_NUMBA`.
"""

import math

import numpy as np

from switchsel._accel import USE_NUMBA, njit


@njit(cache=True)
def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _switch_paths_nb(D, log_pi, log_tail_after, out):
    reps, length = D.shape
    for r in range(reps):
        acc = -math.inf
        nxt = 1
        i = 0
        for n in range(length):
            if n == nxt:
                acc = _logaddexp(acc, log_pi[i] - D[r, n - 1])
                i += 1
                nxt *= 2
            out[r, n] = _logaddexp(acc + D[r, n], log_tail_after[n])
    return out


def switch_paths_numba(D, log_pi, log_tail_after):
    D = np.ascontiguousarray(D, dtype=np.float64)
    out = np.empty_like(D)
    return _switch_paths_nb(D, np.asarray(log_pi, dtype=np.float64),
                            np.asarray(log_tail_after, dtype=np.float64), out)


def switch_paths_numpy(D, log_pi, log_tail_after):
    D = np.asarray(D, dtype=np.float64)
    reps, length = D.shape
    out = np.empty_like(D)
    out[:, 0] = log_tail_after[0]
    if length == 1:
        return out
    N = length - 1
    n_pow = N.bit_length()  # number of powers of two <= N
    times = 1 << np.arange(n_pow)
    terms = np.asarray(log_pi[:n_pow])[None, :] - D[:, times - 1]
    acc = np.logaddexp.accumulate(terms, axis=1)
    n = np.arange(1, length)
    idx = np.frexp(n)[1].astype(np.intp) - 1  # n.bit_length() - 1, exact for integers
    out[:, 1:] = np.logaddexp(acc[:, idx] + D[:, 1:], np.asarray(log_tail_after)[None, 1:])
    return out


def switch_log_ratio_paths(D, log_pi, log_tail_after):
    """Switch evidence ``log p_sw1 - log p_B0`` along every stream.

    Args:
        D: ``(reps, N + 1)`` log Bayes factors ``log p_B1 - log p_B0``.
        log_pi: ``log pi(2^i)`` for ``i = 0, 1, ...`` (at least ``N.bit_length()`` entries).
        log_tail_after: ``log sum_{t > n} pi(t)`` for ``n = 0..N``.
    """
    if USE_NUMBA:
        return switch_paths_numba(D, log_pi, log_tail_after)
    return switch_paths_numpy(D, log_pi, log_tail_after)


@njit(cache=True)
def _first_crossing_nb(paths, threshold, mask, out):
    reps, length = paths.shape
    for r in range(reps):
        out[r] = -1
        for n in range(length):
            if mask[n] and paths[r, n] >= threshold:
                out[r] = n
                break
    return out


def first_crossing_numba(paths, threshold, mask):
    out = np.empty(paths.shape[0], dtype=np.int64)
    return _first_crossing_nb(np.ascontiguousarray(paths, dtype=np.float64), float(threshold),
                              np.ascontiguousarray(mask, dtype=np.bool_), out)


def first_crossing_numpy(paths, threshold, mask):
    hit = (np.asarray(paths) >= threshold) & np.asarray(mask, dtype=bool)[None, :]
    any_hit = hit.any(axis=1)
    return np.where(any_hit, hit.argmax(axis=1), -1).astype(np.int64)


def first_crossing(paths, threshold, mask):
    """First index ``n`` with ``mask[n]`` and ``paths[r, n] >= threshold``; ``-1`` if none."""
    if USE_NUMBA:
        return first_crossing_numba(paths, threshold, mask)
    return first_crossing_numpy(paths, threshold, mask)
