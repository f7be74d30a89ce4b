"""Fixed-shape pairwise-tree reductions.

The tree depends only on the array length, so sums are bitwise reproducible
no matter how the array was produced (serially or by parallel workers).
"""

import numpy as np


def pairwise_sum(x, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` by repeatedly adding adjacent pairs.

    At each level an odd trailing element is carried up unchanged.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    while x.shape[-1] > 1:
        n = x.shape[-1]
        head = x[..., 0:n - 1:2] + x[..., 1:n:2]
        x = np.concatenate([head, x[..., n - 1:]], axis=-1) if n % 2 else head
    return x[..., 0]


def pairwise_mean(x, axis: int = -1, with_var: bool = False):
    """Mean (and unbiased sample variance) along ``axis``.

    The first element is used as a shift, which keeps constant samples
    exact and reduces cancellation in the variance.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("mean of an empty sample")
    shift = x[..., :1]
    d = x - shift
    mean_d = pairwise_sum(d) / n
    mean = shift[..., 0] + mean_d
    if not with_var:
        return mean
    if n == 1:
        return mean, np.zeros_like(mean)
    r = d - mean_d[..., None]
    var = pairwise_sum(r * r) / (n - 1)
    return mean, var
