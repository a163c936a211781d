"""Hot scanning kernel for the term matcher.

The Aho-Corasick scan over a section's codepoint array dominates matching
time at thesaurus scale, so it is JIT-compiled with numba when available.
Set BIOTRIPLETS_DISABLE_NUMBA=1 to force the pure-Python fallback (same
function body, interpreted); the benchmark under benchmarks/ compares the
two paths.
"""

from __future__ import annotations

import os

import numpy as np

DISABLE_NUMBA = os.environ.get("BIOTRIPLETS_DISABLE_NUMBA", "") not in ("", "0")

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is an optional extra
    _nb = None

NUMBA_ENABLED = _nb is not None and not DISABLE_NUMBA


def _scan_forward_impl(codes, is_word, edge_start, edge_char, edge_dest,
                       fail, out_link, word_len, out_starts, out_lens):
    """One left-to-right automaton pass plus greedy longest-match selection.

    Returns the number of matches written to out_starts/out_lens.
    Transitions follow failure links on a missing edge, so the input
    position only ever advances.
    """
    n = codes.shape[0]
    best = np.zeros(n, dtype=np.int32)

    state = 0
    for i in range(n):
        c = codes[i]
        while True:
            # binary search the CSR edge block of `state`
            lo = edge_start[state]
            hi = edge_start[state + 1]
            nxt = -1
            while lo < hi:
                mid = (lo + hi) // 2
                ec = edge_char[mid]
                if ec == c:
                    nxt = edge_dest[mid]
                    break
                elif ec < c:
                    lo = mid + 1
                else:
                    hi = mid
            if nxt >= 0:
                state = nxt
                break
            if state == 0:
                break
            state = fail[state]
        # collect every dictionary suffix ending here
        t = state if word_len[state] > 0 else out_link[state]
        while t >= 0:
            ln = word_len[t]
            start = i + 1 - ln
            end = i + 1
            if (start == 0 or not is_word[start - 1]) and (end == n or not is_word[end]):
                if ln > best[start]:
                    best[start] = ln
            t = out_link[t]

    count = 0
    p = 0
    while p < n:
        if best[p] > 0:
            out_starts[count] = p
            out_lens[count] = best[p]
            count += 1
            p += best[p]
        else:
            p += 1
    return count


if NUMBA_ENABLED:
    scan_forward = _nb.njit(cache=True)(_scan_forward_impl)
else:
    scan_forward = _scan_forward_impl
