"""Mutual information and compute-channel capacity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import EXACT_MATRIX_LIMIT, Channel, OpSpec, _draw, sample_outputs
from .dist import DiscreteDistribution, JointDistribution, binary_entropy, entropy_of_pmf
from .errors import BitmeterError, ChannelTooLarge, NotConverged, ValidationError

__all__ = [
    "CapacityResult",
    "MIEstimate",
    "mutual_information",
    "mutual_information_sampled",
    "channel_capacity",
    "mi_upper_bound",
    "bsc_capacity",
    "noisy_word_capacity",
    "DECOMPOSITION_TOLERANCE",
]

DECOMPOSITION_TOLERANCE = 1e-9
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class MIEstimate:
    value_bits: float
    method: str = "exact"
    samples: int | None = None
    bias_correction: str = "none"
    h_x: float | None = None
    h_y: float | None = None


@dataclass(frozen=True)
class CapacityResult:
    capacity_bits: float
    optimal_input: DiscreteDistribution
    iterations: int
    gap: float


def _conditional_entropy(values, groups, group_mass):
    """``-sum p(a, b) log2 p(a | b)`` for joint entries ``values`` grouped by b."""
    keep = values > 0
    v = values[keep]
    cond = v / group_mass[groups[keep]]
    return max(0.0, math.fsum((-v * np.log2(cond)).tolist()))


def mutual_information(j):
    """Exact ``I(X;Y)`` of a joint distribution, in bits.

    Both ``H(X) - H(X|Y)`` and ``H(Y) - H(Y|X)`` are evaluated from the
    conditionals and must agree to ``DECOMPOSITION_TOLERANCE``.
    """
    if not isinstance(j, JointDistribution):
        raise ValidationError("mutual_information expects a JointDistribution")
    px, py = j.row_mass(), j.col_mass()
    if j.is_sparse:
        coo = j.matrix.tocoo()
        rows, cols, values = coo.row, coo.col, coo.data
    else:
        rows, cols = np.indices(j.matrix.shape)
        rows, cols, values = rows.ravel(), cols.ravel(), j.matrix.ravel()
    h_x, h_y = entropy_of_pmf(px), entropy_of_pmf(py)
    via_x = h_x - _conditional_entropy(values, cols, py)
    via_y = h_y - _conditional_entropy(values, rows, px)
    if abs(via_x - via_y) > DECOMPOSITION_TOLERANCE:
        raise BitmeterError(f"I(X;Y) decompositions disagree: {via_x!r} vs {via_y!r}")
    value = min(max(0.0, 0.5 * (via_x + via_y)), h_x, h_y)
    return MIEstimate(value, "exact", h_x=h_x, h_y=h_y)


def _plugin_entropy(counts, n):
    c = counts[counts > 0].astype(np.float64)
    return max(0.0, math.log2(n) - math.fsum((c * np.log2(c)).tolist()) / n)


def _merge(keys, counts, new_keys):
    uniq, cnt = np.unique(new_keys, return_counts=True)
    if keys is None:
        return uniq, cnt
    allk = np.concatenate([keys, uniq])
    allc = np.concatenate([counts, cnt])
    merged, inv = np.unique(allk, return_inverse=True)
    return merged, np.bincount(inv, weights=allc).astype(np.int64)


def _channel_samples(c, input, samples, seed):
    rng = np.random.default_rng(seed)
    if not isinstance(input, DiscreteDistribution) or not input.same_support(c.input_space):
        raise ValidationError("input distribution support must match the channel's input space")
    index = DiscreteDistribution(np.arange(c.n_inputs), input.pmf)
    x = _draw(index, samples, rng)
    if c.is_deterministic:
        y = c.table[x]
    else:
        cdf = np.cumsum(c.matrix, axis=1)
        u = rng.random(samples)
        y = np.empty(samples, dtype=np.int64)
        step = max(1, (1 << 22) // c.n_outputs)
        for lo in range(0, samples, step):
            sl = slice(lo, lo + step)
            y[sl] = (cdf[x[sl]] <= u[sl, None]).sum(axis=1)
        np.minimum(y, c.n_outputs - 1, out=y)
    yield x, y


def mutual_information_sampled(op, input, samples, seed, correction=False, noise=None):
    """Plug-in ``I(X;Y)`` from ``samples`` simulated channel uses.

    ``op`` is an OpSpec (sampled directly, any size) or a Channel.  With
    ``correction`` the Miller-Madow term ``(Kx + Ky - Kxy - 1) / (2 N ln 2)``
    is added, ``K`` counting occupied bins.  Deterministic given ``seed``.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    if isinstance(op, Channel):
        if noise is not None:
            raise ValidationError("apply noise to the channel before sampling it")
        chunks = _channel_samples(op, input, samples, seed)
        y_bits = max(1, int(op.n_outputs - 1).bit_length())
    elif isinstance(op, OpSpec):
        chunks = sample_outputs(op, input, samples, seed, noise)
        y_bits = op.storage_format.width
    else:
        raise ValidationError("op must be an OpSpec or a Channel")
    keys = counts = None
    for x, y in chunks:
        keys, counts = _merge(keys, counts, (x << y_bits) | y)
    x_keys, x_counts = _merge(None, None, np.repeat(keys >> y_bits, counts))
    y_keys, y_counts = _merge(None, None, np.repeat(keys & ((1 << y_bits) - 1), counts))
    n = samples
    value = _plugin_entropy(x_counts, n) + _plugin_entropy(y_counts, n) - _plugin_entropy(counts, n)
    method = "none"
    if correction:
        value += (x_keys.size + y_keys.size - keys.size - 1) / (2 * n * _LN2)
        method = "miller_madow"
    return MIEstimate(max(0.0, value), "plugin_sampled", samples, method)


def _divergences(c, r):
    """KL(p(.|x) || q) in nats for every input x, and the output law q."""
    if c.is_deterministic:
        q = np.bincount(c.table, weights=r, minlength=c.n_outputs)
        return -np.log(q[c.table]), q
    w = c.matrix
    q = r @ w
    logq = np.log(np.where(q > 0, q, 1.0))
    with np.errstate(divide="ignore"):
        wlogw = np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)
    return wlogw.sum(axis=1) - w @ logq, q


def channel_capacity(c, tolerance=1e-9, max_iterations=100_000):
    """Blahut-Arimoto iteration for ``max_p I(X;Y)`` in bits.

    Starts from the uniform input and stops once the upper bound
    ``max_x D(x)`` and the lower bound ``sum_x r(x) D(x)`` are within
    ``tolerance`` bits.  The lower bound is returned as the capacity.
    """
    if not isinstance(c, Channel):
        raise ValidationError("channel_capacity expects a Channel")
    if not c.is_deterministic and c.n_inputs * c.n_outputs > EXACT_MATRIX_LIMIT:
        raise ChannelTooLarge(
            f"{c!r}: {c.n_inputs * c.n_outputs} matrix entries exceed {EXACT_MATRIX_LIMIT};"
            " use a closed form or the sampled estimator"
        )
    r = np.full(c.n_inputs, 1.0 / c.n_inputs)
    gap = math.inf
    for it in range(1, int(max_iterations) + 1):
        d, _ = _divergences(c, r)
        lower = float(r @ d) / _LN2
        upper = float(d.max()) / _LN2
        gap = max(0.0, upper - lower)
        if gap <= tolerance:
            # rounding can nudge the bound past log2 of the alphabet sizes
            ceiling = math.log2(min(c.n_inputs, c.n_outputs))
            return CapacityResult(min(max(0.0, lower), ceiling), DiscreteDistribution(c.input_space, r), it, gap)
        r = r * np.exp(d - d.max())
        r /= r.sum()
    raise NotConverged(f"{c!r}: gap {gap:.3g} bits after {max_iterations} iterations", gap)


def mi_upper_bound(input_widths, output_widths):
    """``min(sum of input widths, sum of output widths)`` in bits."""
    input_widths, output_widths = list(input_widths), list(output_widths)
    if not input_widths or not output_widths:
        raise ValidationError("need at least one input and one output width")
    if any(w <= 0 for w in input_widths + output_widths):
        raise ValidationError("widths must be positive")
    return min(sum(input_widths), sum(output_widths))


def bsc_capacity(p):
    return 1.0 - binary_entropy(p)


def noisy_word_capacity(width, ber=0.0):
    """Capacity of a ``width``-bit identity word with independent bit flips."""
    return width * bsc_capacity(ber)
