"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The two inner loops that dominate runtime on real feeds live here:
batch point-to-polyline projection (every ping of every traversal) and
the M-run Markov simulation transform. Both exist in two versions:

* ``_*_numba`` -- scalar loops compiled with ``@njit``;
* ``_*_numpy`` -- vectorized numpy with the same elementwise expressions
  and sequential reductions.

The two paths agree to within float rounding (libm vs numpy SIMD
transcendentals can differ by an ulp); within one backend results are
bit-reproducible.

Backend selection happens once at import: numba is used when importable
unless the environment variable ``BUSLINK_NO_NUMBA`` is set to a
non-empty value. ``benchmarks/bench_kernels.py`` times both paths.

Random variates are never drawn in here; callers pass pre-drawn uniform
and normal arrays so that determinism is owned by one numpy Generator
regardless of backend.
"""

from __future__ import annotations

import math
import os

import numpy as np

USE_NUMBA = False
if not os.environ.get("BUSLINK_NO_NUMBA"):
    try:
        from numba import njit

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


# ---------------------------------------------------------------------------
# point-to-polyline projection
# ---------------------------------------------------------------------------

def _project_numpy(qx, qy, vx, vy, cum):
    n = qx.shape[0]
    best_d2 = np.full(n, np.inf)
    best_arc = np.zeros(n)
    for j in range(vx.shape[0] - 1):
        dx = vx[j + 1] - vx[j]
        dy = vy[j + 1] - vy[j]
        seg2 = dx * dx + dy * dy
        seg = math.sqrt(seg2)
        t = ((qx - vx[j]) * dx + (qy - vy[j]) * dy) / seg2
        t = np.minimum(np.maximum(t, 0.0), 1.0)
        ddx = qx - (vx[j] + t * dx)
        ddy = qy - (vy[j] + t * dy)
        d2 = ddx * ddx + ddy * ddy
        arc = cum[j] + t * seg
        take = (d2 < best_d2) | ((d2 == best_d2) & (arc < best_arc))
        best_d2 = np.where(take, d2, best_d2)
        best_arc = np.where(take, arc, best_arc)
    return best_arc, np.sqrt(best_d2)


def _project_scalar(qx, qy, vx, vy, cum):  # pragma: no cover - jitted twin
    n = qx.shape[0]
    best_arc = np.zeros(n)
    best_off = np.zeros(n)
    for i in range(n):
        bd2 = np.inf
        barc = 0.0
        for j in range(vx.shape[0] - 1):
            dx = vx[j + 1] - vx[j]
            dy = vy[j + 1] - vy[j]
            seg2 = dx * dx + dy * dy
            seg = math.sqrt(seg2)
            t = ((qx[i] - vx[j]) * dx + (qy[i] - vy[j]) * dy) / seg2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            ddx = qx[i] - (vx[j] + t * dx)
            ddy = qy[i] - (vy[j] + t * dy)
            d2 = ddx * ddx + ddy * ddy
            arc = cum[j] + t * seg
            if d2 < bd2 or (d2 == bd2 and arc < barc):
                bd2 = d2
                barc = arc
        best_arc[i] = barc
        best_off[i] = math.sqrt(bd2)
    return best_arc, best_off


# ---------------------------------------------------------------------------
# Markov M-run offsets
# ---------------------------------------------------------------------------
# Per run m and per in-scope link i (origin link first):
#   steps  f = max(1, ceil(log1p(-u) / log(p_stay)))   (geometric, support 1,2,...)
#   road   = f * delta_t
#   dwell  = bootstrap pick from the end stop's sample pool
#   signal = sum of exp(mu + sigma * z) over the link's intersections
# The output offset at link i is the running total, i.e. the remaining
# time until *departure from* the link's end stop.

def _markov_numpy(p_stay, u_road, dwell_flat, dwell_start, dwell_len, u_dwell,
                  x_mu, x_sigma, x_start, x_len, z_x, delta_t):
    m_runs, n_links = u_road.shape
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p_stay)
        f = np.ceil(np.log1p(-u_road) / logp[None, :])
    f = np.where(np.isfinite(f), f, 1.0)
    f = np.maximum(f, 1.0)
    total = f * delta_t

    idx = (u_dwell * dwell_len[None, :]).astype(np.int64)
    idx = np.minimum(idx, dwell_len[None, :] - 1)
    total += dwell_flat[dwell_start[None, :] + idx]

    if x_mu.shape[0] > 0:
        x_t = np.exp(x_mu[None, :] + x_sigma[None, :] * z_x)
        for i in range(n_links):
            if x_len[i] > 0:
                sl = x_t[:, x_start[i]:x_start[i] + x_len[i]]
                total[:, i] += sl.sum(axis=1)
    return np.cumsum(total, axis=1)


def _markov_scalar(p_stay, u_road, dwell_flat, dwell_start, dwell_len, u_dwell,
                   x_mu, x_sigma, x_start, x_len, z_x, delta_t):  # pragma: no cover
    m_runs, n_links = u_road.shape
    out = np.empty((m_runs, n_links))
    for m in range(m_runs):
        cum = 0.0
        for i in range(n_links):
            p = p_stay[i]
            if p <= 0.0:
                f = 1.0
            else:
                f = math.ceil(math.log1p(-u_road[m, i]) / math.log(p))
                if not (f >= 1.0):
                    f = 1.0
            t = f * delta_t
            idx = int(u_dwell[m, i] * dwell_len[i])
            if idx >= dwell_len[i]:
                idx = dwell_len[i] - 1
            t += dwell_flat[dwell_start[i] + idx]
            acc = 0.0
            for k in range(x_len[i]):
                j = x_start[i] + k
                acc += math.exp(x_mu[j] + x_sigma[j] * z_x[m, j])
            t += acc
            cum += t
            out[m, i] = cum
    return out


if USE_NUMBA:
    _project_jit = njit(cache=True)(_project_scalar)
    _markov_jit = njit(cache=True)(_markov_scalar)

    def project_onto_polyline(qx, qy, vx, vy, cum):
        return _project_jit(qx, qy, vx, vy, cum)

    def markov_offsets(*args):
        return _markov_jit(*args)
else:
    def project_onto_polyline(qx, qy, vx, vy, cum):
        return _project_numpy(qx, qy, vx, vy, cum)

    def markov_offsets(*args):
        return _markov_numpy(*args)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
