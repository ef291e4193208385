import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitmeter import formats as fm
from bitmeter.channel import (
    Channel,
    NoiseSpec,
    OpSpec,
    SparsitySpec,
    apply_noise,
    apply_sparsity,
    bsc,
    build_channel,
    compose,
    constant_channel,
    constant_operand,
    evaluate,
    identity_channel,
    operand_input,
    output_distribution,
    sample_histogram,
    uniform_operand,
    write_histogram_csv,
)
from bitmeter.capacity import channel_capacity
from bitmeter.errors import ChannelTooLarge, ValidationError

from . import oracles


def _pmf_by_value(c, d):
    out = output_distribution(c, d)
    return dict(zip(c.output_values(), out.pmf.tolist()))


def test_saturating_add_matches_loop_oracle(int8):
    op = OpSpec("add", int8)
    c = build_channel(op)
    got = _pmf_by_value(c, operand_input(op, uniform_operand(int8)))
    want = oracles.saturating_add_pmf(8)
    assert set(got) == set(want)
    for y, p in want.items():
        assert got[y] == pytest.approx(p, abs=1e-15)
    assert got[-128] * 65536 == pytest.approx(8385)
    assert got[127] * 65536 == pytest.approx(8256)


@pytest.mark.parametrize(
    "name,fn",
    [
        ("wrap", lambda a, b: (a + b + 128) % 256 - 128),
        ("mul", lambda a, b: min(127, max(-128, a * b))),
        ("xor", lambda a, b: a ^ b),
        ("lt", lambda a, b: int(a < b)),
    ],
)
def test_int8_ops_match_loop_oracle(int8, name, fn):
    kwargs = {"wrap": dict(op="add", overflow_policy="wrap"), "mul": dict(op="mul"), "xor": dict(op="xor"), "lt": dict(op="compare_lt")}[name]
    op = OpSpec(operand_format=int8, **kwargs)
    c = build_channel(op)
    got = _pmf_by_value(c, operand_input(op, uniform_operand(int8)))
    want = oracles.exact_pmf(fn, 8)
    assert {int(k): v for k, v in got.items()} == pytest.approx(want, abs=1e-15)


def test_add_widen_is_triangular(int8, int16):
    op = OpSpec("add", int8, int16, overflow_policy="widen")
    c = build_channel(op)
    assert c.n_outputs == 511
    got = _pmf_by_value(c, operand_input(op, uniform_operand(int8)))
    for y, p in got.items():
        assert p * 65536 == pytest.approx(256 - abs(y + 1))
    assert max(got.values()) == 256 / 65536


def test_xor_in_int16_container_is_uniform(int8):
    op = OpSpec("xor", int8, container_width=16)
    c = build_channel(op)
    out = output_distribution(c, operand_input(op, uniform_operand(int8)))
    assert out.pmf.size == 256
    assert np.all(out.pmf == 1 / 256)


def test_widen_needs_room(int8):
    with pytest.raises(ValidationError):
        OpSpec("add", int8, overflow_policy="widen")
    with pytest.raises(ValidationError):
        OpSpec("mul", int8, fm.get_format("int8"), overflow_policy="widen")
    OpSpec("mul", int8, fm.get_format("int16"), overflow_policy="widen")


def test_compare_defaults_to_bool(int8):
    op = OpSpec("compare_lt", int8)
    assert op.storage_format.width == 1
    assert build_channel(op).n_outputs == 2


def test_identity_operand_count(int8):
    op = OpSpec("identity", int8)
    assert op.operand_count == 1
    c = build_channel(op)
    assert c.n_inputs == c.n_outputs == 256


def test_float_add_matches_ml_dtypes():
    ml = pytest.importorskip("ml_dtypes")
    spec = fm.get_format("fp8_e5m2")
    op = OpSpec("add", spec)
    codes = np.arange(256, dtype=np.uint8)
    a, b = np.meshgrid(codes, codes, indexing="ij")
    a, b = a.ravel(), b.ravel()
    got = evaluate(op, a.astype(np.int64), b.astype(np.int64))
    fa = a.view(ml.float8_e5m2).astype(np.float64)
    fb = b.view(ml.float8_e5m2).astype(np.float64)
    # float64 sum of two e5m2 values is exact, so one rounding reproduces the op
    with np.errstate(invalid="ignore"):
        total = fa + fb
    want = total.astype(ml.float8_e5m2).view(np.uint8).astype(np.int64)
    nan = np.isnan(total)
    assert np.array_equal(got[~nan], want[~nan])
    assert all(fm.decode(spec, int(c)).category == "nan" for c in np.unique(got[nan]))


def test_float_mul_matches_ml_dtypes_e4m3():
    ml = pytest.importorskip("ml_dtypes")
    spec = fm.get_format("fp8_e4m3_ocp")
    op = OpSpec("mul", spec)
    codes = np.arange(256, dtype=np.uint8)
    a, b = np.meshgrid(codes, codes, indexing="ij")
    a, b = a.ravel(), b.ravel()
    got = evaluate(op, a.astype(np.int64), b.astype(np.int64))
    with np.errstate(invalid="ignore", over="ignore"):
        prod = a.view(ml.float8_e4m3fn).astype(np.float64) * b.view(ml.float8_e4m3fn).astype(np.float64)
        want = prod.astype(ml.float8_e4m3fn)
    # no Inf in this format: overflow lands on NaN, as in the reference cast
    nan = np.isnan(want.astype(np.float64))
    assert np.array_equal(got[~nan], want.view(np.uint8)[~nan].astype(np.int64))
    assert all(fm.decode(spec, int(c)).category == "nan" for c in got[nan])
    assert nan.sum() > 2 * 2 * 256


def test_float_zero_signs():
    spec = fm.get_format("fp16")
    op = OpSpec("add", spec)
    pz, nz = fm.zero_code(spec, 1), fm.zero_code(spec, -1)
    assert evaluate(op, np.array([nz]), np.array([nz]))[0] == nz
    assert evaluate(op, np.array([pz]), np.array([nz]))[0] == pz
    one = fm.encode(spec, 1.0)
    neg_one = fm.encode(spec, -1.0)
    assert evaluate(op, np.array([one]), np.array([neg_one]))[0] == pz


def test_float_inf_minus_inf_is_nan():
    spec = fm.get_format("fp16")
    op = OpSpec("add", spec)
    out = evaluate(op, np.array([fm.inf_code(spec, 1)]), np.array([fm.inf_code(spec, -1)]))
    assert fm.decode(spec, int(out[0])).category == "nan"


def test_noise_zero_is_identity():
    c = identity_channel(4)
    assert apply_noise(c, NoiseSpec(0.0)) is c


def test_noise_kernel_rows():
    c = apply_noise(identity_channel(3), NoiseSpec(0.1))
    m = c.transition_matrix()
    np.testing.assert_allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-15)
    assert m[0, 0] == pytest.approx(0.9**3)
    assert m[0, 7] == pytest.approx(0.1**3)
    assert m[5, 4] == pytest.approx(0.1 * 0.9**2)


def test_noisy_identity_capacity_closed_form():
    c = apply_noise(identity_channel(3), NoiseSpec(0.05))
    assert channel_capacity(c).capacity_bits == pytest.approx(3 * (1 - oracles.binary_entropy(0.05)), abs=1e-8)


def test_noise_size_guard():
    wide = Channel(np.arange(2), np.arange(2), table=[0, 1], output_format=fm.FormatSpec("w20", 20, "unsigned_int"))
    with pytest.raises(ChannelTooLarge):
        apply_noise(wide, NoiseSpec(0.01))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_bsc_cascade(p, q):
    m = compose(bsc(p), bsc(q)).transition_matrix()
    np.testing.assert_allclose(m, bsc(p + q - 2 * p * q).transition_matrix(), atol=1e-15)


def test_compose_deterministic_stays_deterministic(int8):
    c = build_channel(OpSpec("identity", int8))
    k = constant_channel(c.output_space, 0)
    both = compose(c, k)
    assert both.is_deterministic
    assert both.n_outputs == 1


def test_compose_checks_spaces():
    with pytest.raises(ValidationError):
        compose(identity_channel(2), identity_channel(3))


def test_constant_operand_collapses_output(int8):
    op = OpSpec("add", int8)
    c = build_channel(op)
    d = operand_input(op, constant_operand(int8, 3), constant_operand(int8, -5))
    got = {k: v for k, v in _pmf_by_value(c, d).items() if v > 0}
    assert got == {-2: 1.0}


def test_sparsity_scales_rate():
    assert apply_sparsity(8.0, SparsitySpec(0.5)) == 4.0
    with pytest.raises(ValidationError):
        SparsitySpec(1.5)


def test_channel_validation():
    with pytest.raises(ValidationError):
        Channel([0, 1], [0, 1], matrix=[[0.5, 0.4], [0, 1]])
    with pytest.raises(ValidationError):
        Channel([0, 1], [0], table=[0, 1])
    with pytest.raises(ValidationError):
        Channel([0, 1], [0, 1])


def test_histogram_deterministic_and_csv(int8):
    op = OpSpec("xor", int8)
    h1 = sample_histogram(op, [uniform_operand(int8)], 50_000, seed=7)
    h2 = sample_histogram(op, [uniform_operand(int8)], 50_000, seed=7)
    h3 = sample_histogram(op, [uniform_operand(int8)], 50_000, seed=8)
    assert h1 == h2
    assert h1 != h3
    assert list(h1) == sorted(h1)
    assert math.fsum(h1.values()) == pytest.approx(1.0, abs=1e-12)
    buf = io.StringIO()
    write_histogram_csv(h1, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "bin_center,frequency"
    assert len(lines) == len(h1) + 1
    value, freq = lines[1].split(",")
    assert float(freq) == h1[int(value)]


def test_histogram_merges_signed_zero_and_puts_nan_last():
    spec = fm.get_format("fp8_e5m2")
    op = OpSpec("add", spec)
    h = sample_histogram(op, [uniform_operand(spec)], 20_000, seed=1)
    keys = list(h)
    assert math.isnan(keys[-1])
    assert sum(1 for k in keys if k == 0) == 1
    assert math.fsum(h.values()) == pytest.approx(1.0, abs=1e-12)


def test_noisy_histogram_spreads_outputs(int8):
    op = OpSpec("identity", int8)
    d = constant_operand(int8, 0)
    clean = sample_histogram(op, [d], 10_000, seed=3)
    noisy = sample_histogram(op, [d], 10_000, seed=3, noise=NoiseSpec(0.1))
    assert clean == {0: 1.0}
    assert noisy[0] == pytest.approx(0.9**8, abs=0.02)
