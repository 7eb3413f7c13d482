"""Counter-based random number generation for reproducible parallel simulation.

Every random scalar consumed by the engine is a pure function of the integer
coordinates (seed, path, step_key, lane).  There is no generator state: the
value at a coordinate does not depend on how many other values were drawn, in
what order, or on which worker thread.  Consequences relied on elsewhere:

* extending a table in paths or lanes preserves every previously drawn value,
* splitting the path range across workers is bit-identical to a serial fill,
* two grids that share step keys share the corresponding draws.

The word function is Philox 4x32 with 10 rounds.  The counter block is
(path, step_key, lane >> 1, 0) and the key is the 64-bit seed split into two
32-bit words; each block yields two 64-bit outputs, one per lane parity.  The
implementation reproduces the three published Random123 reference vectors
(all-zero counter and key, all-ones bits, pi-digit counter with golden-ratio
key); tests pin those vectors and an independent scalar reimplementation.

Uniforms take the top 53 bits of an output word, placed at bin centers:
u = ((w >> 11) + 0.5) * 2**-53, so u lies in (0, 1) strictly and the inverse
normal CDF stays finite.  Normals are ndtri(u).

A numba-jitted kernel is used when numba imports cleanly; the pure-numpy path
computes the identical bytes (asserted in tests) and is kept as the reference.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError

# Philox 4x32 round constants (multipliers and Weyl key increments).
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

# Lane address space: ordinary Brownian driver lanes live below the sampler
# base; exact transition samplers draw their extra randomness above it, so the
# two can never collide for any driver count the validators accept.
SAMPLER_LANE_BASE = 1 << 20
_MAX_LANES = 1 << 21

_COUNTER_LIMIT = 1 << 32
_SEED_LIMIT = 1 << 64

try:  # optional fast path; the numpy reference below is always available
    from . import _rng_numba

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - environment without numba
    _rng_numba = None
    _HAVE_NUMBA = False


def philox_4x32(c0, c1, c2, c3, key_lo: int, key_hi: int):
    """One Philox 4x32-10 block per counter; returns the four output words.

    Counter components are arrays (broadcast together) of values < 2**32.
    Everything is carried in uint64 so the 32x32 products are exact; values
    stay below 2**32 between rounds by construction.
    """
    x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    x0, x1, x2, x3 = (np.array(x, dtype=np.uint64) for x in (x0, x1, x2, x3))
    k0 = np.uint64(key_lo)
    k1 = np.uint64(key_hi)
    thirty_two = np.uint64(32)
    for _ in range(10):
        p0 = _M0 * x0
        p1 = _M1 * x2
        y0 = (p1 >> thirty_two) ^ x1 ^ k0
        y1 = p1 & _MASK32
        y2 = (p0 >> thirty_two) ^ x3 ^ k1
        y3 = p0 & _MASK32
        x0, x1, x2, x3 = y0, y1, y2, y3
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return x0, x1, x2, x3


def _split_seed(seed: int) -> tuple[int, int]:
    if not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= seed < _SEED_LIMIT:
        raise ConfigError(f"seed must lie in [0, 2**64), got {seed}")
    return int(seed) & 0xFFFFFFFF, int(seed) >> 32


def _validate_coords(n_paths: int, path_offset: int, step_keys: np.ndarray,
                     n_lanes: int, lane_base: int) -> np.ndarray:
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    if path_offset < 0 or path_offset + n_paths > _COUNTER_LIMIT:
        raise ConfigError(
            f"path range [{path_offset}, {path_offset + n_paths}) exhausts the "
            f"32-bit counter space")
    keys = np.asarray(step_keys)
    if keys.ndim != 1 or keys.size < 1:
        raise ConfigError("step_keys must be a non-empty 1-D array")
    if np.any(keys < 0) or np.any(keys >= _COUNTER_LIMIT):
        raise ConfigError("step keys exhaust the 32-bit counter space")
    if n_lanes < 1:
        raise ConfigError(f"n_lanes must be >= 1, got {n_lanes}")
    if lane_base < 0 or lane_base % 2 != 0:
        raise ConfigError(f"lane_base must be even and non-negative, got {lane_base}")
    if lane_base + n_lanes > _MAX_LANES:
        raise ConfigError(
            f"lane range [{lane_base}, {lane_base + n_lanes}) exhausts the lane space")
    return keys.astype(np.uint32)


_PATH_CHUNK = 8192  # bounds the uint64 temporaries of the reference fill


def _uniforms_reference(seed_lo: int, seed_hi: int, path_offset: int, n_paths: int,
                        keys: np.ndarray, lane_base: int, n_lanes: int,
                        out: np.ndarray) -> None:
    n_blocks = (n_lanes + 1) // 2
    block0 = lane_base >> 1
    k_steps = keys.astype(np.uint64)[None, :, None]
    blocks = (np.arange(block0, block0 + n_blocks, dtype=np.uint64))[None, None, :]
    inv = 2.0 ** -53
    eleven = np.uint64(11)
    for lo in range(0, n_paths, _PATH_CHUNK):
        hi = min(lo + _PATH_CHUNK, n_paths)
        paths = np.arange(path_offset + lo, path_offset + hi, dtype=np.uint64)[:, None, None]
        w0, w1, w2, w3 = philox_4x32(paths, k_steps, blocks, np.uint64(0), seed_lo, seed_hi)
        u_even = (w0 << np.uint64(32)) | w1
        u_odd = (w2 << np.uint64(32)) | w3
        out[lo:hi, :, 0::2] = ((u_even >> eleven).astype(np.float64) + 0.5) * inv
        if n_lanes > 1:
            odd = ((u_odd >> eleven).astype(np.float64) + 0.5) * inv
            out[lo:hi, :, 1::2] = odd[:, :, : n_lanes // 2]


def uniform_table(seed: int, n_paths: int, step_keys, n_lanes: int, *,
                  path_offset: int = 0, lane_base: int = 0,
                  force_reference: bool = False) -> np.ndarray:
    """Uniform(0,1) table of shape (n_paths, len(step_keys), n_lanes).

    Entry [p, k, l] depends only on (seed, path_offset + p, step_keys[k],
    lane_base + l); the table shape is immaterial.
    """
    seed_lo, seed_hi = _split_seed(seed)
    keys = _validate_coords(n_paths, path_offset, step_keys, n_lanes, lane_base)
    out = np.empty((n_paths, keys.size, n_lanes), dtype=np.float64)
    if _HAVE_NUMBA and not force_reference:
        _rng_numba.fill_uniforms(np.uint32(seed_lo), np.uint32(seed_hi),
                                 np.uint32(path_offset), n_paths, keys,
                                 np.uint32(lane_base >> 1), n_lanes, out)
    else:
        _uniforms_reference(seed_lo, seed_hi, path_offset, n_paths, keys,
                            lane_base, n_lanes, out)
    return out


def normal_table(seed: int, n_paths: int, step_keys, n_lanes: int, *,
                 path_offset: int = 0, lane_base: int = 0,
                 force_reference: bool = False) -> np.ndarray:
    """Standard normal table with the same keying as uniform_table."""
    u = uniform_table(seed, n_paths, step_keys, n_lanes, path_offset=path_offset,
                      lane_base=lane_base, force_reference=force_reference)
    return ndtri(u, out=u)


def have_fast_path() -> bool:
    """True when the numba kernel is active."""
    return _HAVE_NUMBA
