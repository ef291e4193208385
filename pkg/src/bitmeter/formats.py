"""Number formats as encoders: enumeration, decoding, rounding and encoding efficiency.

A :class:`FormatSpec` describes how bit patterns map to values.  Decoding is
total, so the 2**width patterns of a format partition into distinct
:class:`DecodedValue` classes.  When patterns are drawn uniformly, the value
distribution has entropy ``H <= width`` and the ratio ``H / width`` is the
encoding efficiency of the format.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EnumerationTooLarge, ValidationError

__all__ = [
    "FormatSpec",
    "DecodedValue",
    "MultiplicityMap",
    "enumerate_format",
    "multiplicity_profile",
    "nan_pattern_count",
    "encoding_efficiency",
    "decode",
    "encode",
    "round_to_format",
    "nan_code",
    "inf_code",
    "zero_code",
    "BUILTIN_FORMATS",
    "ALIASES",
    "get_format",
    "load_format_file",
    "ENUMERATION_WIDTH_LIMIT",
]

ENUMERATION_WIDTH_LIMIT = 24

KINDS = ("unsigned_int", "signed_int_twos_complement", "float")
NAN_POLICIES = ("ieee_all_payloads", "single_nan_pattern", "two_nan_patterns", "none")
INF_POLICIES = ("ieee_pair", "none")

FINITE, NAN, POS_INF, NEG_INF = "finite", "nan", "pos_inf", "neg_inf"
_CATEGORIES = (FINITE, NAN, POS_INF, NEG_INF)


@dataclass(frozen=True)
class FormatSpec:
    """Declarative description of a binary number format.

    Integer kinds only use ``name``, ``width`` and ``kind``.  For floats the
    layout is ``sign | exponent | mantissa`` from the most significant bit.

    ``nan_policy`` selects which patterns decode to NaN:

    * ``ieee_all_payloads``: every non-zero mantissa in the all-ones exponent
      (requires ``inf_policy="ieee_pair"``).
    * ``two_nan_patterns``: only ``S.1..1.1..1`` for both signs.
    * ``single_nan_pattern``: the negative-zero pattern when ``signed_zero``
      is false, otherwise the all-ones pattern.
    * ``none``: no NaN.

    With ``has_subnormals=False`` the zero-exponent patterns flush to zero.
    """

    name: str
    width: int
    kind: str
    exponent_bits: int = 0
    mantissa_bits: int = 0
    exponent_bias: int | None = None
    nan_policy: str = "none"
    inf_policy: str = "none"
    has_subnormals: bool = True
    signed_zero: bool = True

    def __post_init__(self):
        if not isinstance(self.width, int) or isinstance(self.width, bool) or self.width < 1:
            raise ValidationError(f"{self.name}: width must be an integer >= 1, got {self.width!r}")
        if self.kind not in KINDS:
            raise ValidationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind != "float":
            if self.kind == "signed_int_twos_complement" and self.width < 2:
                raise ValidationError(f"{self.name}: signed integers need at least 2 bits")
            return
        if self.nan_policy not in NAN_POLICIES:
            raise ValidationError(f"{self.name}: unknown nan_policy {self.nan_policy!r}")
        if self.inf_policy not in INF_POLICIES:
            raise ValidationError(f"{self.name}: unknown inf_policy {self.inf_policy!r}")
        if self.exponent_bits < 1 or self.mantissa_bits < 0:
            raise ValidationError(f"{self.name}: need exponent_bits >= 1 and mantissa_bits >= 0")
        if 1 + self.exponent_bits + self.mantissa_bits != self.width:
            raise ValidationError(
                f"{self.name}: 1 + {self.exponent_bits} + {self.mantissa_bits} != width {self.width}"
            )
        if self.exponent_bias is None:
            object.__setattr__(self, "exponent_bias", 2 ** (self.exponent_bits - 1) - 1)
        if abs(self.exponent_bias) > 2**28:
            raise ValidationError(f"{self.name}: exponent_bias out of range")
        if self.nan_policy == "ieee_all_payloads":
            if self.inf_policy != "ieee_pair" or self.mantissa_bits < 1:
                raise ValidationError(
                    f"{self.name}: ieee_all_payloads requires inf_policy='ieee_pair' and mantissa_bits >= 1"
                )
        elif self.inf_policy == "ieee_pair" and (self.mantissa_bits >= 1 or self.nan_policy != "none"):
            # the all-ones exponent is reserved; its non-zero payloads need a meaning
            raise ValidationError(
                f"{self.name}: inf_policy='ieee_pair' is only valid with nan_policy='ieee_all_payloads'"
                " (or 'none' when mantissa_bits == 0)"
            )

    @property
    def is_float(self):
        return self.kind == "float"

    @property
    def is_signed(self):
        return self.kind != "unsigned_int"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown format fields: {sorted(unknown)}")
        missing = {"name", "width", "kind"} - set(data)
        if missing:
            raise ValidationError(f"missing format fields: {sorted(missing)}")
        return cls(**data)

    # float geometry ---------------------------------------------------

    @property
    def _exp_all_ones(self):
        return (1 << self.exponent_bits) - 1

    @property
    def _mant_all_ones(self):
        return (1 << self.mantissa_bits) - 1

    @property
    def min_exponent(self):
        """Unbiased exponent of the smallest normal binade."""
        return 1 - self.exponent_bias

    def _fields(self, code):
        m = self.mantissa_bits
        return code >> (self.width - 1), (code >> m) & self._exp_all_ones, code & self._mant_all_ones

    def _is_nan_fields(self, s, f, t):
        policy = self.nan_policy
        if policy == "ieee_all_payloads":
            return f == self._exp_all_ones and t != 0
        if policy == "two_nan_patterns":
            return f == self._exp_all_ones and t == self._mant_all_ones
        if policy == "single_nan_pattern":
            if self.signed_zero:
                return s == 1 and f == self._exp_all_ones and t == self._mant_all_ones
            return s == 1 and f == 0 and t == 0
        return False


@dataclass(frozen=True, order=True)
class DecodedValue:
    """Canonical identity of a decoded bit pattern.

    Finite values are ``sign * significand * 2**exponent`` with an odd
    significand, or ``significand == exponent == 0`` for zero.  Zeros keep
    their sign, so ``+0`` and ``-0`` are distinct values.
    """

    category: str
    sign: int = 1
    significand: int = 0
    exponent: int = 0

    def __post_init__(self):
        if self.category not in _CATEGORIES:
            raise ValidationError(f"unknown value category {self.category!r}")

    @classmethod
    def finite(cls, sign, significand, exponent):
        if significand == 0:
            return cls(FINITE, sign, 0, 0)
        while significand % 2 == 0:
            significand //= 2
            exponent += 1
        return cls(FINITE, sign, significand, exponent)

    @classmethod
    def from_fraction(cls, value, zero_sign=1):
        value = Fraction(value)
        if value == 0:
            return cls(FINITE, zero_sign, 0, 0)
        sign = 1 if value > 0 else -1
        num, den = abs(value.numerator), value.denominator
        if den & (den - 1):
            raise ValidationError(f"{value} is not a dyadic rational")
        return cls.finite(sign, num, -(den.bit_length() - 1))

    @property
    def is_finite(self):
        return self.category == FINITE

    @property
    def is_nan(self):
        return self.category == NAN

    def to_fraction(self):
        if not self.is_finite:
            raise ValueError(f"{self} has no rational value")
        return self.sign * self.significand * Fraction(2) ** self.exponent

    def __float__(self):
        if self.category == NAN:
            return math.nan
        if self.category == POS_INF:
            return math.inf
        if self.category == NEG_INF:
            return -math.inf
        if self.significand == 0:
            return math.copysign(0.0, self.sign)
        return float(self.to_fraction())

    def __str__(self):
        if self.category == NAN:
            return "nan"
        if self.category == POS_INF:
            return "inf"
        if self.category == NEG_INF:
            return "-inf"
        if self.significand == 0:
            return "-0" if self.sign < 0 else "0"
        value = self.to_fraction()
        return str(value.numerator) if value.denominator == 1 else repr(float(value))


NAN_VALUE = DecodedValue(NAN)
POS_INF_VALUE = DecodedValue(POS_INF)
NEG_INF_VALUE = DecodedValue(NEG_INF)


def _check_pattern(spec, pattern):
    if isinstance(pattern, str):
        bits = pattern.replace("_", "")
        if len(bits) != spec.width or set(bits) - {"0", "1"}:
            raise ValidationError(f"{spec.name}: expected {spec.width} binary digits, got {pattern!r}")
        return int(bits, 2)
    code = int(pattern)
    if not 0 <= code < (1 << spec.width):
        raise ValidationError(f"{spec.name}: pattern {code} does not fit in {spec.width} bits")
    return code


def decode(spec, pattern):
    """Decode one bit pattern (int code or string of '0'/'1') to its canonical value."""
    code = _check_pattern(spec, pattern)
    w = spec.width
    if spec.kind == "unsigned_int":
        return DecodedValue.finite(1, code, 0)
    if spec.kind == "signed_int_twos_complement":
        value = code - (1 << w) if code >> (w - 1) else code
        return DecodedValue.finite(-1 if value < 0 else 1, abs(value), 0)

    s, f, t = spec._fields(code)
    if spec._is_nan_fields(s, f, t):
        return NAN_VALUE
    if spec.inf_policy == "ieee_pair" and f == spec._exp_all_ones:
        return NEG_INF_VALUE if s else POS_INF_VALUE
    m = spec.mantissa_bits
    if f == 0:
        significand = t if spec.has_subnormals else 0
        exponent = spec.min_exponent - m
    else:
        significand = (1 << m) | t
        exponent = f - spec.exponent_bias - m
    sign = -1 if s else 1
    if significand == 0 and not spec.signed_zero:
        sign = 1
    return DecodedValue.finite(sign, significand, exponent)


# ---------------------------------------------------------------------------
# enumeration


def _decode_array(spec, codes):
    """Vectorized decode returning (category, sign, significand, exponent) arrays.

    Category codes index ``_CATEGORIES``.
    """
    codes = np.asarray(codes, dtype=np.int64)
    w = spec.width
    n = codes.shape[0]
    cat = np.zeros(n, dtype=np.int64)
    if spec.kind == "unsigned_int":
        sign = np.ones(n, dtype=np.int64)
        sig = codes.copy()
        exp = np.zeros(n, dtype=np.int64)
    elif spec.kind == "signed_int_twos_complement":
        value = np.where(codes >> (w - 1) == 1, codes - (1 << w), codes)
        sign = np.where(value < 0, -1, 1)
        sig = np.abs(value)
        exp = np.zeros(n, dtype=np.int64)
    else:
        m = spec.mantissa_bits
        all_e, all_t = spec._exp_all_ones, spec._mant_all_ones
        s = codes >> (w - 1)
        f = (codes >> m) & all_e
        t = codes & all_t
        sign = np.where(s == 1, -1, 1)
        sub = f == 0
        sig = np.where(sub, t if spec.has_subnormals else 0, (1 << m) | t)
        exp = np.where(sub, spec.min_exponent - m, f - spec.exponent_bias - m)
        if spec.nan_policy == "ieee_all_payloads":
            nan = (f == all_e) & (t != 0)
        elif spec.nan_policy == "two_nan_patterns":
            nan = (f == all_e) & (t == all_t)
        elif spec.nan_policy == "single_nan_pattern":
            if spec.signed_zero:
                nan = (s == 1) & (f == all_e) & (t == all_t)
            else:
                nan = codes == (1 << (w - 1))
        else:
            nan = np.zeros(n, dtype=bool)
        if spec.inf_policy == "ieee_pair":
            inf = (f == all_e) & ~nan
            cat = np.where(inf, np.where(s == 1, 3, 2), cat)
        cat = np.where(nan, 1, cat)
        if not spec.signed_zero:
            sign = np.where(sig == 0, 1, sign)

    special = cat != 0
    sign = np.where(special, 1, sign)
    sig = np.where(special, 0, sig)
    exp = np.where(special | (sig == 0), 0, exp)
    # strip trailing zero bits so equal values share one key
    nz = sig != 0
    low = np.where(nz, sig & -sig, 1)
    tz = np.zeros(n, dtype=np.int64)
    while True:
        more = low > 1
        if not more.any():
            break
        tz += more
        low = np.where(more, low >> 1, low)
    return cat, sign, sig >> tz, exp + tz


_EXP_OFFSET = 1 << 29


def _pack_keys(cat, sign, sig, exp):
    return (cat << 61) | ((sign < 0).astype(np.int64) << 60) | ((exp + _EXP_OFFSET) << 30) | sig


def _unpack_key(key):
    key = int(key)
    cat = key >> 61
    sign = -1 if (key >> 60) & 1 else 1
    exp = ((key >> 30) & ((1 << 30) - 1)) - _EXP_OFFSET
    sig = key & ((1 << 30) - 1)
    if cat != 0:
        return DecodedValue(_CATEGORIES[cat])
    return DecodedValue(FINITE, sign, sig, exp if sig else 0)


class MultiplicityMap:
    """Multiplicity of every distinct value over all bit patterns of a format."""

    def __init__(self, spec, keys, counts):
        self.spec = spec
        self._keys = keys
        self.counts = counts
        self._entries = None

    @property
    def total(self):
        return int(self.counts.sum())

    def __len__(self):
        return len(self.counts)

    @property
    def entries(self):
        """List of ``(DecodedValue, multiplicity)`` pairs in canonical key order."""
        if self._entries is None:
            self._entries = [(_unpack_key(k), int(c)) for k, c in zip(self._keys, self.counts)]
        return self._entries

    def multiplicity(self, value):
        return dict(self.entries).get(value, 0)

    @property
    def nan_multiplicity(self):
        return int(self.counts[(self._keys >> 61) == 1].sum())

    def profile(self):
        """Counter mapping multiplicity -> number of values having it."""
        return Counter(int(c) for c in self.counts)


def enumerate_format(spec):
    """Decode all ``2**width`` patterns and count multiplicities per value."""
    if spec.width > ENUMERATION_WIDTH_LIMIT:
        raise EnumerationTooLarge(
            f"{spec.name}: width {spec.width} exceeds enumeration limit {ENUMERATION_WIDTH_LIMIT}"
        )
    codes = np.arange(1 << spec.width, dtype=np.int64)
    keys = _pack_keys(*_decode_array(spec, codes))
    uniq, counts = np.unique(keys, return_counts=True)
    return MultiplicityMap(spec, uniq, counts)


def nan_pattern_count(spec):
    """Number of bit patterns that decode to NaN."""
    if not spec.is_float:
        return 0
    return {
        "ieee_all_payloads": 2 * spec._mant_all_ones,
        "two_nan_patterns": 2,
        "single_nan_pattern": 1,
        "none": 0,
    }[spec.nan_policy]


def multiplicity_profile(spec):
    """Closed-form multiset of multiplicities, valid for any width.

    Returns a Counter ``{multiplicity: number of distinct values}``.
    """
    n_patterns = 1 << spec.width
    if not spec.is_float:
        return Counter({1: n_patterns})
    m = spec.mantissa_bits
    nan = nan_pattern_count(spec)
    flushed = 0 if spec.has_subnormals else (1 << m) - 1
    pos_zero = 1 + flushed
    neg_zero = 1 + flushed
    if spec.nan_policy == "single_nan_pattern" and not spec.signed_zero:
        neg_zero -= 1
    zeros = [pos_zero, neg_zero] if spec.signed_zero else [pos_zero + neg_zero]
    profile = Counter()
    for k in [nan, *zeros]:
        if k:
            profile[k] += 1
    profile[1] += n_patterns - nan - pos_zero - neg_zero
    return +profile


def _entropy_from_profile(profile, width):
    n_patterns = 1 << width
    terms = [n * (k / n_patterns) * (width - math.log2(k)) for k, n in profile.items()]
    return math.fsum(terms)


def encoding_efficiency(spec):
    """Entropy of the value distribution under uniform patterns, divided by width."""
    return _entropy_from_profile(multiplicity_profile(spec), spec.width) / spec.width


# ---------------------------------------------------------------------------
# encoding


def zero_code(spec, sign=1):
    if spec.is_float and sign < 0 and spec.signed_zero:
        return 1 << (spec.width - 1)
    return 0


def nan_code(spec):
    """Canonical NaN pattern of a float format, or None when it has no NaN."""
    if not spec.is_float:
        return None
    m, w = spec.mantissa_bits, spec.width
    all_e = spec._exp_all_ones << m
    if spec.nan_policy == "ieee_all_payloads":
        return all_e | (1 << (m - 1))
    if spec.nan_policy == "two_nan_patterns":
        return all_e | spec._mant_all_ones
    if spec.nan_policy == "single_nan_pattern":
        return (1 << w) - 1 if spec.signed_zero else 1 << (w - 1)
    return None


def inf_code(spec, sign=1):
    if not spec.is_float or spec.inf_policy != "ieee_pair":
        return None
    code = spec._exp_all_ones << spec.mantissa_bits
    return code | (1 << (spec.width - 1)) if sign < 0 else code


def _max_finite(spec, s):
    """Largest finite magnitude and its (exponent field, mantissa field) for sign bit ``s``."""
    f = spec._exp_all_ones - (1 if spec.inf_policy == "ieee_pair" else 0)
    t = spec._mant_all_ones
    while spec._is_nan_fields(s, f, t):
        if t:
            t -= 1
        else:
            f, t = f - 1, spec._mant_all_ones
    return _field_value(spec, f, t)


def _field_value(spec, f, t):
    m = spec.mantissa_bits
    if f == 0:
        return Fraction(t if spec.has_subnormals else 0) * Fraction(2) ** (spec.min_exponent - m)
    return Fraction((1 << m) | t) * Fraction(2) ** (f - spec.exponent_bias - m)


def _floor_log2(a):
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if a < Fraction(2) ** e:
        e -= 1
    return e


def _encode_magnitude(spec, s, mag):
    m = spec.mantissa_bits
    if mag == 0:
        return zero_code(spec, -1 if s else 1)
    e = _floor_log2(mag)
    if e < spec.min_exponent:
        f = 0
        t = mag / Fraction(2) ** (spec.min_exponent - m)
    else:
        f = e + spec.exponent_bias
        t = mag / Fraction(2) ** (e - m) - (1 << m)
    if t.denominator != 1:
        raise ValidationError(f"{spec.name}: {mag} is not representable")
    return (s << (spec.width - 1)) | (f << m) | int(t)


def round_to_format(spec, value, zero_sign=1):
    """Round an exact rational to a float format with round-to-nearest-even.

    Overflow goes to infinity when the format has it, else to NaN when the
    format has one, else saturates at the largest finite magnitude.
    ``zero_sign`` gives the sign of an exact zero result.
    """
    if not spec.is_float:
        raise ValidationError(f"{spec.name}: round_to_format needs a float format")
    value = Fraction(value)
    if value == 0:
        return zero_code(spec, zero_sign)
    s = 1 if value < 0 else 0
    a = abs(value)
    m = spec.mantissa_bits
    emin = spec.min_exponent
    e = max(_floor_log2(a), emin)
    quantum = Fraction(2) ** (e - m)
    mag = round(a / quantum) * quantum  # Fraction.__round__ ties to even
    if not spec.has_subnormals and mag < Fraction(2) ** emin:
        tiny = Fraction(2) ** emin
        mag = tiny if a > tiny / 2 else Fraction(0)
    top = _max_finite(spec, s)
    if mag > top:
        code = inf_code(spec, -1 if s else 1)
        if code is None:
            code = nan_code(spec)
        if code is None:
            mag = top
        else:
            return code
    return _encode_magnitude(spec, s, mag)


def encode(spec, value):
    """Exact encoding of a value (DecodedValue, int, or Fraction) into ``spec``.

    Raises ValidationError when the value is not representable.
    """
    if not isinstance(value, DecodedValue):
        value = DecodedValue.from_fraction(Fraction(value))
    w = spec.width
    if not spec.is_float:
        if not value.is_finite:
            raise ValidationError(f"{spec.name}: cannot encode {value}")
        x = value.to_fraction()
        lo = -(1 << (w - 1)) if spec.is_signed else 0
        hi = (1 << (w - 1)) - 1 if spec.is_signed else (1 << w) - 1
        if x.denominator != 1 or not lo <= x <= hi:
            raise ValidationError(f"{spec.name}: {x} is not representable")
        return int(x) % (1 << w)
    if value.is_nan:
        code = nan_code(spec)
    elif value.category in (POS_INF, NEG_INF):
        code = inf_code(spec, 1 if value.category == POS_INF else -1)
    else:
        x = value.to_fraction()
        if x == 0:
            return zero_code(spec, value.sign)
        code = round_to_format(spec, x)
        if decode(spec, code) != value:
            code = None
    if code is None:
        raise ValidationError(f"{spec.name}: {value} is not representable")
    return code


# ---------------------------------------------------------------------------
# built-in corpus


def _float(name, e, m, **kw):
    kw.setdefault("nan_policy", "ieee_all_payloads")
    kw.setdefault("inf_policy", "ieee_pair")
    return FormatSpec(name=name, width=1 + e + m, kind="float", exponent_bits=e, mantissa_bits=m, **kw)


def _ints():
    out = []
    for w in (8, 16, 32):
        out.append(FormatSpec(f"int{w}", w, "signed_int_twos_complement"))
        out.append(FormatSpec(f"uint{w}", w, "unsigned_int"))
    out.append(FormatSpec("bool", 1, "unsigned_int"))
    return out


BUILTIN_FORMATS = {
    spec.name: spec
    for spec in [
        *_ints(),
        _float("fp64", 11, 52),
        _float("fp32", 8, 23),
        _float("fp16", 5, 10),
        _float("bf16", 8, 7),
        _float("fp8_e5m2", 5, 2),
        _float("fp8_e4m3_ocp", 4, 3, nan_policy="two_nan_patterns", inf_policy="none"),
        _float("fp8_e4m3_ieee_hypothetical", 4, 3),
        _float("e2m3_ieee", 2, 3),
        _float(
            "e2m3_single_nan", 2, 3, nan_policy="single_nan_pattern", inf_policy="none", signed_zero=False
        ),
        _float("e2m3_ocp", 2, 3, nan_policy="none", inf_policy="none"),
    ]
}

ALIASES = {"fp8": "fp8_e4m3_ocp", "e4m3": "fp8_e4m3_ocp", "e5m2": "fp8_e5m2"}


def load_format_file(path):
    """Read one format (JSON object) or several (JSON array) from ``path``."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
        raise ValidationError(f"{path}: expected a JSON object or array of objects")
    return [FormatSpec.from_dict(d) for d in data]


def get_format(ref, extra: Iterable[FormatSpec] = (), allow_override=False):
    """Resolve a format by name, alias, or path to a format-definition file.

    Built-in names win over ``extra`` unless ``allow_override`` is set.
    """
    if isinstance(ref, FormatSpec):
        return ref
    custom = {spec.name: spec for spec in extra}
    name = ALIASES.get(ref, ref)
    if allow_override and name in custom:
        return custom[name]
    if name in BUILTIN_FORMATS:
        return BUILTIN_FORMATS[name]
    if name in custom:
        return custom[name]
    path = Path(ref)
    if path.suffix == ".json" and path.is_file():
        specs = load_format_file(path)
        if len(specs) != 1:
            raise ValidationError(f"{ref}: expected exactly one format, found {len(specs)}")
        return specs[0]
    raise KeyError(f"unknown format {ref!r}")
