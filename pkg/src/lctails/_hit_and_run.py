"""Compiled inner loop of the hit-and-run walk."""

import numba as nb
import numpy as np

_MIN_CHORD = 1e-12


@nb.njit(cache=True)
def run_chain(a, b, x, dirs, us, done, total, burn_in, thinning, out, kept):
    """Advance the walk in place using the supplied directions and uniforms.

    Returns ``(moves_done, states_kept, degenerate)``; ``degenerate`` is -1 if
    a chord is unbounded.  One direction and one uniform are consumed per
    attempt; degenerate chords consume a direction without moving.
    """
    m, n = a.shape
    degenerate = 0
    for i in range(dirs.shape[0]):
        if done >= total:
            break
        d = dirs[i]
        lo = -np.inf
        hi = np.inf
        for j in range(m):
            ad = 0.0
            ax = 0.0
            for c in range(n):
                ad += a[j, c] * d[c]
                ax += a[j, c] * x[c]
            slack = b[j] - ax
            if slack < 0.0:
                slack = 0.0
            if ad > 0.0:
                lam = slack / ad
                if lam < hi:
                    hi = lam
            elif ad < 0.0:
                lam = slack / ad
                if lam > lo:
                    lo = lam
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return done, kept, -1
        if hi - lo < _MIN_CHORD:
            degenerate += 1
            continue
        u = us[i]
        if u <= 0.0:
            u = 0.5
        step = lo + u * (hi - lo)
        for c in range(n):
            x[c] += step * d[c]
        done += 1
        if done > burn_in and (done - burn_in) % thinning == 0:
            for c in range(n):
                out[kept, c] = x[c]
            kept += 1
    return done, kept, degenerate
