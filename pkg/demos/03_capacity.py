"""
Capacity of a computation
=========================

Mutual information depends on the input distribution; capacity is its
maximum. For deterministic operations that is log2 of the number of
reachable outputs. Noise and narrow outputs cut it down.
"""

import math

import numpy as np

from bitmeter import formats as fm
from bitmeter.capacity import channel_capacity, mutual_information, noisy_word_capacity
from bitmeter.channel import (
    Channel,
    NoiseSpec,
    OpSpec,
    apply_noise,
    bsc,
    build_channel,
    compose,
    joint_distribution,
    operand_input,
    output_distribution,
    uniform_operand,
)

int8, int16 = fm.get_format("int8"), fm.get_format("int16")

# the binary symmetric channel has a closed form to compare against
res = channel_capacity(bsc(0.05))
print(f"BSC(0.05): {res.capacity_bits:.6f} bits after {res.iterations} iterations")

# two noisy hops behave like one noisier hop
p, q = 0.05, 0.1
print(f"BSC(p) then BSC(q): {channel_capacity(compose(bsc(p), bsc(q))).capacity_bits:.6f}"
      f"  vs BSC(p+q-2pq): {channel_capacity(bsc(p + q - 2 * p * q)).capacity_bits:.6f}")

# deterministic operations
for label, op in [
    ("add int8 -> int16", OpSpec("add", int8, int16)),
    ("add int8 saturating", OpSpec("add", int8)),
    ("xor int8", OpSpec("xor", int8)),
    ("compare_lt int8", OpSpec("compare_lt", int8)),
    ("add fp8_e5m2", OpSpec("add", fm.get_format("fp8_e5m2"))),
]:
    c = build_channel(op)
    cap = channel_capacity(c).capacity_bits
    uni = mutual_information(joint_distribution(c, operand_input(op, uniform_operand(op.operand_format)))).value_bits
    print(f"{label:22s} capacity {cap:7.4f}  log2(outputs) {math.log2(c.n_outputs):7.4f}  uniform-input MI {uni:7.4f}")

# saturating add: uniform operands pile 8385 and 8256 of 65536 pairs onto the rails,
# so the 8-bit result carries well under 8 bits; a tuned input could still reach 8
sat_op = OpSpec("add", int8)
sat = build_channel(sat_op)
y = dict(zip(sat.output_values(), output_distribution(sat, operand_input(sat_op, uniform_operand(int8))).pmf))
print(f"\nsaturating add: P(-128) = {y[-128] * 65536:.0f}/65536, P(127) = {y[127] * 65536:.0f}/65536")

# flip each bit of a 4-bit word: the solver agrees with width x (1 - H_b)
noisy = apply_noise(Channel(np.arange(16), np.arange(16), table=np.arange(16),
                            output_format=fm.FormatSpec("u4", 4, "unsigned_int")), NoiseSpec(0.02))
print(f"4-bit word, ber 0.02: solver {channel_capacity(noisy).capacity_bits:.6f}, "
      f"closed form {noisy_word_capacity(4, 0.02):.6f}")
