"""Operations as discrete channels.

An operation on encoded operands is a channel from input codes to output
codes.  Exact operations give deterministic channels (one output per input);
bit-flip noise on the output word turns them into stochastic ones.

Input codes for two-operand operations are combined as ``(a << w) | b``
where ``w`` is the operand width.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import formats as fm
from .dist import DiscreteDistribution, JointDistribution
from .errors import ChannelTooLarge, ValidationError

import scipy.sparse as sp

__all__ = [
    "OPS",
    "OpSpec",
    "NoiseSpec",
    "SparsitySpec",
    "Channel",
    "build_channel",
    "evaluate",
    "apply_noise",
    "apply_sparsity",
    "output_distribution",
    "joint_distribution",
    "compose",
    "parallel",
    "identity_channel",
    "bsc",
    "constant_channel",
    "uniform_operand",
    "constant_operand",
    "operand_input",
    "sample_outputs",
    "sample_histogram",
    "write_histogram_csv",
    "EXACT_INPUT_LIMIT",
    "EXACT_NOISE_WIDTH",
    "EXACT_MATRIX_LIMIT",
]

OPS = ("add", "mul", "xor", "compare_lt", "identity")
OVERFLOW_POLICIES = ("saturate", "wrap", "widen")

EXACT_INPUT_LIMIT = 1 << 24
EXACT_NOISE_WIDTH = 16
EXACT_MATRIX_LIMIT = 1 << 26
_SAMPLE_CHUNK = 1 << 22


@dataclass(frozen=True)
class NoiseSpec:
    """Independent per-bit flips of the output word with probability ``ber``."""

    ber: float
    model: str = "per_bit_flip"
    applied_to: str = "output"

    def __post_init__(self):
        if self.model != "per_bit_flip" or self.applied_to != "output":
            raise ValidationError("only per_bit_flip noise on output codes is supported")
        if not 0.0 <= self.ber <= 0.5:
            raise ValidationError(f"ber must lie in [0, 0.5], got {self.ber}")


@dataclass(frozen=True)
class SparsitySpec:
    known_zero_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.known_zero_fraction <= 1.0:
            raise ValidationError(f"known_zero_fraction must lie in [0, 1], got {self.known_zero_fraction}")


def _int_range(spec):
    if spec.kind == "unsigned_int":
        return 0, (1 << spec.width) - 1
    return -(1 << (spec.width - 1)), (1 << (spec.width - 1)) - 1


@dataclass(frozen=True)
class OpSpec:
    """An operation with operand/output formats and overflow handling.

    Float results are rounded once, to nearest with ties to even.  Integer
    results outside the output range follow ``overflow_policy``.  When
    ``container_width`` is set, integer results are stored sign- or
    zero-extended in a wider integer of that width.
    """

    op: str
    operand_format: fm.FormatSpec
    output_format: fm.FormatSpec | None = None
    operand_count: int | None = None
    overflow_policy: str = "saturate"
    container_width: int | None = None
    rounding: str = field(default="nearest_even", init=False)

    def __post_init__(self):
        if self.op not in OPS:
            raise ValidationError(f"unknown op {self.op!r}; expected one of {OPS}")
        if self.overflow_policy not in OVERFLOW_POLICIES:
            raise ValidationError(f"unknown overflow policy {self.overflow_policy!r}")
        count = self.operand_count
        if count is None:
            count = 1 if self.op == "identity" else 2
            object.__setattr__(self, "operand_count", count)
        if count not in (1, 2) or (self.op == "identity") != (count == 1):
            raise ValidationError(f"{self.op} takes {'1' if self.op == 'identity' else '2'} operand(s)")
        if self.output_format is None:
            default = fm.BUILTIN_FORMATS["bool"] if self.op == "compare_lt" else self.operand_format
            object.__setattr__(self, "output_format", default)
        a, out = self.operand_format, self.output_format
        if a.is_float and not (out.is_float or self.op == "compare_lt"):
            raise ValidationError("float operands need a float output format")
        if self.op == "xor" and a.is_float and out != a:
            raise ValidationError("float xor acts on bit patterns; output format must equal operand format")
        if self.container_width is not None:
            if out.is_float or self.container_width < out.width:
                raise ValidationError("container_width needs an integer output no wider than the container")
        if self.overflow_policy == "widen" and not out.is_float and not a.is_float:
            lo, hi = self.exact_range()
            olo, ohi = _int_range(out)
            if lo < olo or hi > ohi:
                raise ValidationError(
                    f"widen: results span [{lo}, {hi}] but {out.name} holds [{olo}, {ohi}]"
                )

    @property
    def input_width(self):
        return self.operand_format.width * self.operand_count

    @property
    def storage_format(self):
        """Format of the emitted output codes (the container when one is set)."""
        out = self.output_format
        if self.container_width is None or self.container_width == out.width:
            return out
        kind = out.kind
        prefix = "int" if kind == "signed_int_twos_complement" else "uint"
        return fm.FormatSpec(f"{prefix}{self.container_width}", self.container_width, kind)

    def exact_range(self):
        """Range of exact integer results for integer operands."""
        lo, hi = _int_range(self.operand_format)
        if self.op == "add":
            return 2 * lo, 2 * hi
        if self.op == "mul":
            corners = [x * y for x in (lo, hi) for y in (lo, hi)]
            return min(corners), max(corners)
        if self.op == "compare_lt":
            return 0, 1
        return lo, hi


# ---------------------------------------------------------------------------
# evaluation


def _int_values(spec, codes):
    codes = np.asarray(codes, dtype=np.int64)
    if spec.kind == "signed_int_twos_complement":
        return np.where(codes >> (spec.width - 1) == 1, codes - (1 << spec.width), codes)
    return codes


def _store_int(op, values):
    out = op.output_format
    lo, hi = _int_range(out)
    if op.overflow_policy == "saturate":
        values = np.clip(values, lo, hi)
    elif op.overflow_policy == "wrap":
        values = _int_values(out, np.mod(values, 1 << out.width))
    return np.mod(values, 1 << op.storage_format.width)


def _encode_special(out, category):
    """Output code for a NaN or infinite result."""
    if category == fm.NAN:
        code = fm.nan_code(out)
        if code is None:
            raise ValidationError(f"{out.name} cannot represent a NaN result")
        return code
    sign = 1 if category == fm.POS_INF else -1
    code = fm.inf_code(out, sign)
    if code is None:
        # same rule as finite overflow
        code = fm.round_to_format(out, sign * Fraction(2) ** (2**out.exponent_bits - out.exponent_bias + 1))
    return code


def _float_result(op, x, y):
    """Exact result of a float op as ('finite', Fraction, zero_sign) or (category,)."""
    if op.op == "identity":
        if x.is_finite:
            return fm.FINITE, x.to_fraction(), x.sign
        return (x.category,)
    if x.is_nan or y.is_nan:
        return (fm.NAN,)
    xinf = x.category in (fm.POS_INF, fm.NEG_INF)
    yinf = y.category in (fm.POS_INF, fm.NEG_INF)
    if op.op == "add":
        if xinf and yinf:
            return (x.category,) if x.category == y.category else (fm.NAN,)
        if xinf or yinf:
            return (x.category if xinf else y.category,)
        s = x.to_fraction() + y.to_fraction()
        zero_sign = -1 if (x.sign < 0 and y.sign < 0) else 1
        return fm.FINITE, s, zero_sign
    if op.op == "mul":
        sx = x.sign if x.is_finite else (1 if x.category == fm.POS_INF else -1)
        sy = y.sign if y.is_finite else (1 if y.category == fm.POS_INF else -1)
        if xinf or yinf:
            if (x.is_finite and x.significand == 0) or (y.is_finite and y.significand == 0):
                return (fm.NAN,)
            return (fm.POS_INF if sx * sy > 0 else fm.NEG_INF,)
        return fm.FINITE, x.to_fraction() * y.to_fraction(), sx * sy
    raise AssertionError(op.op)


def _order_key(v):
    if v.category == fm.POS_INF:
        return math.inf
    if v.category == fm.NEG_INF:
        return -math.inf
    return v.to_fraction()


def _evaluate_float(op, a_codes, b_codes):
    a_fmt, out = op.operand_format, op.output_format
    decoded = {}

    def dec(c):
        v = decoded.get(c)
        if v is None:
            v = decoded[c] = fm.decode(a_fmt, c)
        return v

    rounded = {}
    result = np.empty(len(a_codes), dtype=np.int64)
    for i, (a, b) in enumerate(zip(a_codes.tolist(), b_codes.tolist() if b_codes is not None else [0] * len(a_codes))):
        if op.op == "xor":
            result[i] = a ^ b
            continue
        if op.op == "identity" and out == a_fmt:
            result[i] = a
            continue
        x = dec(a)
        if op.op == "compare_lt":
            y = dec(b)
            lt = not (x.is_nan or y.is_nan) and _order_key(x) < _order_key(y)
            result[i] = _store_int(op, np.array([int(lt)]))[0] if not out.is_float else fm.round_to_format(out, int(lt))
            continue
        res = _float_result(op, x, dec(b) if b_codes is not None else None)
        if res[0] != fm.FINITE:
            result[i] = _encode_special(out, res[0])
            continue
        key = (res[1], res[2])
        code = rounded.get(key)
        if code is None:
            code = rounded[key] = fm.round_to_format(out, res[1], zero_sign=res[2])
        result[i] = code
    return result


def evaluate(op, a_codes, b_codes=None):
    """Apply ``op`` to operand code arrays, returning output codes in the storage format."""
    a_codes = np.asarray(a_codes, dtype=np.int64)
    if op.operand_count == 2:
        if b_codes is None:
            raise ValidationError(f"{op.op} needs two operand arrays")
        b_codes = np.asarray(b_codes, dtype=np.int64)
    if op.operand_format.is_float:
        # each distinct operand tuple is evaluated once
        if b_codes is None:
            uniq, inv = np.unique(a_codes, return_inverse=True)
            return _evaluate_float(op, uniq, None)[inv]
        w = op.operand_format.width
        uniq, inv = np.unique((a_codes << w) | b_codes, return_inverse=True)
        return _evaluate_float(op, uniq >> w, uniq & ((1 << w) - 1))[inv]

    a = _int_values(op.operand_format, a_codes)
    b = _int_values(op.operand_format, b_codes) if b_codes is not None else None
    if op.op == "add":
        v = a + b
    elif op.op == "mul":
        v = a * b
    elif op.op == "xor":
        v = a ^ b
    elif op.op == "compare_lt":
        v = (a < b).astype(np.int64)
    else:
        v = a
    out = op.output_format
    if out.is_float:
        uniq, inv = np.unique(v, return_inverse=True)
        codes = np.array([fm.round_to_format(out, int(x)) for x in uniq.tolist()], dtype=np.int64)
        return codes[inv]
    return _store_int(op, v)


def _split_inputs(op, codes):
    codes = np.asarray(codes, dtype=np.int64)
    if op.operand_count == 1:
        return codes, None
    w = op.operand_format.width
    return codes >> w, codes & ((1 << w) - 1)


# ---------------------------------------------------------------------------
# channels


class Channel:
    """Finite channel ``p(y|x)``: a deterministic table or a stochastic matrix.

    ``table[i]`` is the output index for input index ``i``; ``matrix[i]`` is
    the output pmf for input ``i``.  Exactly one of the two is set.
    """

    def __init__(self, input_space, output_space, table=None, matrix=None, output_format=None, label=""):
        self.input_space = np.asarray(input_space)
        self.output_space = np.asarray(output_space)
        if (table is None) == (matrix is None):
            raise ValidationError("channel needs exactly one of table or matrix")
        n_in, n_out = self.input_space.size, self.output_space.size
        if table is not None:
            table = np.asarray(table, dtype=np.int64)
            if table.shape != (n_in,) or (n_in and (table.min() < 0 or table.max() >= n_out)):
                raise ValidationError("deterministic table must map every input to a valid output index")
        else:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.shape != (n_in, n_out):
                raise ValidationError(f"matrix shape {matrix.shape} != ({n_in}, {n_out})")
            if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-12):
                raise ValidationError("every stochastic row must be a pmf")
        self.table = table
        self.matrix = matrix
        self.output_format = output_format
        self.label = label

    def __repr__(self):
        law = "deterministic" if self.is_deterministic else "stochastic"
        return f"Channel({self.label or '?'}, {law}, {self.n_inputs}x{self.n_outputs})"

    @property
    def is_deterministic(self):
        return self.table is not None

    @property
    def n_inputs(self):
        return self.input_space.size

    @property
    def n_outputs(self):
        return self.output_space.size

    @property
    def output_width(self):
        return self.output_format.width if self.output_format is not None else None

    def transition_matrix(self):
        if self.matrix is not None:
            return self.matrix
        if self.n_inputs * self.n_outputs > EXACT_MATRIX_LIMIT:
            raise ChannelTooLarge(f"{self!r}: dense matrix exceeds {EXACT_MATRIX_LIMIT} entries")
        m = np.zeros((self.n_inputs, self.n_outputs))
        m[np.arange(self.n_inputs), self.table] = 1.0
        return m

    def output_values(self):
        """Decoded output values (int or float) aligned with ``output_space``."""
        spec = self.output_format
        if spec is None:
            return self.output_space.tolist()
        if not spec.is_float:
            return _int_values(spec, self.output_space).tolist()
        return [float(fm.decode(spec, int(c))) for c in self.output_space.tolist()]


def build_channel(op):
    """Exact deterministic channel of ``op`` over every operand combination."""
    n_in = 1 << op.input_width
    if n_in > EXACT_INPUT_LIMIT:
        raise ChannelTooLarge(
            f"{op.op} over {op.input_width} input bits has {n_in} inputs (limit {EXACT_INPUT_LIMIT});"
            " use the sampled path"
        )
    inputs = np.arange(n_in, dtype=np.int64)
    outputs = evaluate(op, *_split_inputs(op, inputs))
    space, table = np.unique(outputs, return_inverse=True)
    label = f"{op.op}[{op.operand_format.name}->{op.storage_format.name}]"
    return Channel(inputs, space, table=table, output_format=op.storage_format, label=label)


def identity_channel(width):
    codes = np.arange(1 << width, dtype=np.int64)
    spec = fm.FormatSpec(f"uint{width}", width, "unsigned_int")
    return Channel(codes, codes, table=np.arange(codes.size), output_format=spec, label=f"identity{width}")


def bsc(p):
    """Binary symmetric channel with crossover probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"crossover must lie in [0, 1], got {p}")
    m = np.array([[1 - p, p], [p, 1 - p]])
    return Channel(np.arange(2), np.arange(2), matrix=m, output_format=fm.BUILTIN_FORMATS["bool"], label=f"bsc({p})")


def constant_channel(input_space, output=0):
    input_space = np.asarray(input_space)
    return Channel(input_space, np.array([output]), table=np.zeros(input_space.size, dtype=np.int64), label="constant")


def _popcount(x):
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


def _flip_kernel(codes, width, ber):
    """Rows of P(y | c) for per-bit flips, for each code c in ``codes``."""
    ys = np.arange(1 << width, dtype=np.int64)
    dist = _popcount(np.asarray(codes, dtype=np.int64)[:, None] ^ ys[None, :])
    if ber == 0.5:
        return np.full(dist.shape, 0.5**width)
    return np.exp(dist * math.log(ber) + (width - dist) * math.log1p(-ber)) if ber > 0 else (dist == 0) * 1.0


def apply_noise(c, noise):
    """Flip each bit of the output word independently with probability ``noise.ber``."""
    if noise.ber == 0:
        return c
    w = c.output_width
    if w is None:
        raise ValidationError("noise needs a binary-coded output space (channel has no output format)")
    if w > EXACT_NOISE_WIDTH or c.n_inputs * (1 << w) > EXACT_MATRIX_LIMIT:
        raise ChannelTooLarge(
            f"exact noisy channel needs {c.n_inputs}x{1 << w} entries; use the sampled path"
        )
    kernel = _flip_kernel(c.output_space, w, noise.ber)
    if c.is_deterministic:
        matrix = kernel[c.table]
    else:
        matrix = c.matrix @ kernel
    matrix = matrix / matrix.sum(axis=1, keepdims=True)
    return Channel(
        c.input_space,
        np.arange(1 << w, dtype=np.int64),
        matrix=matrix,
        output_format=c.output_format,
        label=f"{c.label}+ber({noise.ber})",
    )


def apply_sparsity(throughput_bits, s):
    """Scale an information rate by the share of operand slots not known to be zero."""
    return throughput_bits * (1.0 - s.known_zero_fraction)


def _check_input(c, d):
    if not isinstance(d, DiscreteDistribution) or not d.same_support(c.input_space):
        raise ValidationError("input distribution support must match the channel's input space")


def output_distribution(c, input):
    """Exact pushforward ``p(y) = sum_x p(x) p(y|x)`` over ``c.output_space``."""
    _check_input(c, input)
    if c.is_deterministic:
        pmf = np.bincount(c.table, weights=input.pmf, minlength=c.n_outputs)
    else:
        pmf = input.pmf @ c.matrix
    return DiscreteDistribution(c.output_space, pmf)


def joint_distribution(c, input):
    """Joint ``p(x, y)``; sparse for deterministic channels."""
    _check_input(c, input)
    if c.is_deterministic:
        rows = np.arange(c.n_inputs)
        matrix = sp.csr_array((input.pmf, (rows, c.table)), shape=(c.n_inputs, c.n_outputs))
    else:
        matrix = input.pmf[:, None] * c.matrix
    return JointDistribution(c.input_space, c.output_space, matrix)


def compose(c1, c2):
    """Cascade: feed the output of ``c1`` into ``c2``."""
    if c1.output_space.shape != c2.input_space.shape or np.any(c1.output_space != c2.input_space):
        raise ValidationError("compose: c1 output space must equal c2 input space")
    label = f"{c2.label}∘{c1.label}"
    if c1.is_deterministic and c2.is_deterministic:
        return Channel(c1.input_space, c2.output_space, table=c2.table[c1.table], output_format=c2.output_format, label=label)
    matrix = c1.transition_matrix() @ c2.transition_matrix()
    return Channel(c1.input_space, c2.output_space, matrix=matrix, output_format=c2.output_format, label=label)


def parallel(c1, c2):
    """Two independent channels used side by side; inputs and outputs are index pairs.

    Input index ``i1 * n2 + i2`` stands for the pair ``(i1, i2)``.
    """
    m = np.kron(c1.transition_matrix(), c2.transition_matrix())
    return Channel(
        np.arange(m.shape[0]), np.arange(m.shape[1]), matrix=m, label=f"{c1.label}||{c2.label}"
    )


# ---------------------------------------------------------------------------
# input construction


def uniform_operand(spec):
    return DiscreteDistribution.uniform(np.arange(1 << spec.width, dtype=np.int64))


def constant_operand(spec, value):
    """Point mass on the code of ``value`` (a number, exactly representable or rounded)."""
    if spec.is_float:
        code = fm.round_to_format(spec, Fraction(value))
    else:
        code = fm.encode(spec, int(value))
    return DiscreteDistribution.constant(np.arange(1 << spec.width, dtype=np.int64), code)


def operand_input(op, *operands):
    """Distribution over combined input codes from independent operand distributions.

    A single operand distribution is reused for every operand slot.
    """
    if len(operands) == 1:
        operands = operands * op.operand_count
    if len(operands) != op.operand_count:
        raise ValidationError(f"{op.op} needs {op.operand_count} operand distributions")
    n = 1 << op.operand_format.width
    for d in operands:
        if not d.same_support(np.arange(n)):
            raise ValidationError("operand distributions must be over all operand codes 0..2**width-1")
    if 1 << op.input_width > EXACT_INPUT_LIMIT:
        raise ChannelTooLarge("combined input space too large; pass operand distributions to the sampled path")
    pmf = operands[0].pmf
    for d in operands[1:]:
        pmf = np.outer(pmf, d.pmf).ravel()
    return DiscreteDistribution(np.arange(1 << op.input_width, dtype=np.int64), pmf)


# ---------------------------------------------------------------------------
# sampling


def _draw(d, n, rng):
    if np.all(d.pmf == d.pmf[0]):
        idx = rng.integers(0, len(d), size=n)
    else:
        idx = rng.choice(len(d), size=n, p=d.pmf)
    return d.support[idx].astype(np.int64)


def _sample_codes(op, input, n, rng):
    """Draw operand code arrays for ``n`` uses of ``op``."""
    if isinstance(input, DiscreteDistribution):
        return _split_inputs(op, _draw(input, n, rng))
    operands = list(input)
    if len(operands) == 1:
        operands = operands * op.operand_count
    codes = [_draw(d, n, rng) for d in operands]
    return codes[0], (codes[1] if op.operand_count == 2 else None)


def _flip_bits(codes, width, ber, rng):
    flips = rng.random((codes.size, width)) < ber
    mask = flips @ (np.int64(1) << np.arange(width, dtype=np.int64))
    return codes ^ mask


def sample_outputs(op, input, samples, seed, noise=None):
    """Yield ``(input_codes, output_codes)`` chunks for ``samples`` random channel uses.

    ``input`` is a distribution over combined input codes or a sequence of
    operand distributions.  Results depend only on ``seed``.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    w = op.operand_format.width
    remaining = samples
    while remaining:
        n = min(remaining, _SAMPLE_CHUNK)
        remaining -= n
        a, b = _sample_codes(op, input, n, rng)
        y = evaluate(op, a, b)
        if noise is not None and noise.ber > 0:
            y = _flip_bits(y, op.storage_format.width, noise.ber, rng)
        x = a if b is None else (a << w) | b
        yield x, y


def _code_values(spec, codes):
    if not spec.is_float:
        return _int_values(spec, codes).tolist()
    return [float(fm.decode(spec, int(c))) for c in codes.tolist()]


def sample_histogram(op, input, samples, seed, noise=None):
    """Empirical output distribution as ``{value: frequency}`` sorted by value.

    NaN outputs, if any, come last.
    """
    counts = {}
    for _, y in sample_outputs(op, input, samples, seed, noise):
        uniq, cnt = np.unique(y, return_counts=True)
        for code, c in zip(uniq.tolist(), cnt.tolist()):
            counts[code] = counts.get(code, 0) + c
    codes = np.array(sorted(counts), dtype=np.int64)
    values = _code_values(op.storage_format, codes)
    hist = {}
    nan_freq = 0.0
    for v, c in zip(values, codes.tolist()):
        if _isnan(v):
            nan_freq += counts[c] / samples
        else:
            hist[v] = hist.get(v, 0.0) + counts[c] / samples
    hist = dict(sorted(hist.items()))
    if nan_freq:
        hist[math.nan] = nan_freq
    return hist


def _isnan(v):
    return isinstance(v, float) and math.isnan(v)


def write_histogram_csv(histogram, path):
    """Write ``bin_center,frequency`` rows, one per distinct output value.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(histogram, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(histogram, fh)


def _write_rows(histogram, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["bin_center", "frequency"])
    for value, freq in histogram.items():
        writer.writerow([value, repr(float(freq))])
