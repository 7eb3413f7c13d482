"""numba kernel for the Philox table fill.

Kept in its own module so rng.py can fall back to pure numpy when numba is
absent.  The loop body must stay in lockstep with rng.philox_4x32 and the
reference fill; tests assert byte-identity of the two paths.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint32, uint64, float64


@njit(cache=True, nogil=True, inline="always")
def _block(c0, c1, c2, k_lo, k_hi):
    x0 = uint32(c0)
    x1 = uint32(c1)
    x2 = uint32(c2)
    x3 = uint32(0)
    key0 = uint32(k_lo)
    key1 = uint32(k_hi)
    for _ in range(10):
        p0 = uint64(0xD2511F53) * uint64(x0)
        p1 = uint64(0xCD9E8D57) * uint64(x2)
        y0 = uint32(p1 >> uint64(32)) ^ x1 ^ key0
        y1 = uint32(p1 & uint64(0xFFFFFFFF))
        y2 = uint32(p0 >> uint64(32)) ^ x3 ^ key1
        y3 = uint32(p0 & uint64(0xFFFFFFFF))
        x0, x1, x2, x3 = y0, y1, y2, y3
        key0 = uint32(key0 + uint32(0x9E3779B9))
        key1 = uint32(key1 + uint32(0xBB67AE85))
    u_even = (uint64(x0) << uint64(32)) | uint64(x1)
    u_odd = (uint64(x2) << uint64(32)) | uint64(x3)
    return u_even, u_odd


@njit(cache=True, nogil=True)
def fill_uniforms(seed_lo, seed_hi, path_offset, n_paths, step_keys, block0,
                  n_lanes, out):
    inv = 2.0 ** -53
    n_steps = step_keys.shape[0]
    n_blocks = (n_lanes + 1) // 2
    for p in range(n_paths):
        c0 = uint32(path_offset + uint32(p))
        for k in range(n_steps):
            c1 = step_keys[k]
            for b in range(n_blocks):
                u_even, u_odd = _block(c0, c1, uint32(block0 + uint32(b)),
                                       seed_lo, seed_hi)
                lane = 2 * b
                out[p, k, lane] = (float64(u_even >> uint64(11)) + 0.5) * inv
                if lane + 1 < n_lanes:
                    out[p, k, lane + 1] = (float64(u_odd >> uint64(11)) + 0.5) * inv
