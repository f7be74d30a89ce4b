"""Counter-based normal variates.

Each draw is a pure function of ``(seed, stream, step, index)``: numpy's
Philox bit generator is keyed by ``(seed, stream|step)`` and its 256-bit
counter is positioned at the particle index, so a worker that only owns
indices ``[a, b)`` reproduces exactly the slice of the full draw.
"""

import numpy as np

#: stream tags, stored in the top bits of the second key word
IDIOSYNCRATIC = 0
COMMON = 1

_STEP_BITS = 48
_INV_2_53 = 1.0 / 9007199254740992.0
_MASK53 = np.uint64((1 << 53) - 1)


def _key(seed, step, stream):
    seed = int(seed)
    step = int(step)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    if step < 0 or step >= 1 << _STEP_BITS:
        raise ValueError(f"step index out of range: {step}")
    return np.array([seed, (int(stream) << _STEP_BITS) | step], dtype=np.uint64)


def raw_blocks(seed, step, start, stop, stream=IDIOSYNCRATIC):
    """Philox output blocks for indices ``start..stop-1``, shape ``(n, 4)``."""
    if stop < start:
        raise ValueError("stop < start")
    bg = np.random.Philox(key=_key(seed, step, stream),
                          counter=np.array([start, 0, 0, 0], dtype=np.uint64))
    return bg.random_raw(4 * (stop - start)).reshape(-1, 4)


def normals(seed, step, start, stop, stream=IDIOSYNCRATIC):
    """Standard normals for indices ``start..stop-1`` at ``step``.

    Block ``j`` feeds one Box-Muller pair: index ``2j`` takes the cosine and
    ``2j+1`` the sine branch.
    """
    if stop < start:
        raise ValueError("stop < start")
    lo, hi = start // 2, (stop + 1) // 2
    blk = raw_blocks(seed, step, lo, hi, stream)
    u1 = ((blk[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (blk[:, 1] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * (hi - lo))
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    off = start - 2 * lo
    return out[off:off + (stop - start)]


def antithetic_normals(seed, step, start, stop, stream=IDIOSYNCRATIC):
    """Normals where index ``2j+1`` carries the negated draw of ``2j``."""
    if stop < start:
        raise ValueError("stop < start")
    lo, hi = start // 2, (stop + 1) // 2
    blk = raw_blocks(seed, step, lo, hi, stream)
    u1 = ((blk[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (blk[:, 1] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    out = np.empty(2 * (hi - lo))
    out[0::2] = z
    out[1::2] = -z
    off = start - 2 * lo
    return out[off:off + (stop - start)]
