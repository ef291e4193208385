"""
What does an operation do to its inputs?
========================================

Feed two uniform signed 8-bit operands into XOR and into a widening add,
store the results as 16-bit integers, and look at the output distribution.
XOR keeps the output flat; addition piles mass in the middle.

Pass a directory as the first argument to also write the sampled
histograms as CSV files.
"""

import sys
from pathlib import Path

from bitmeter import formats as fm
from bitmeter.capacity import mutual_information
from bitmeter.channel import (
    OpSpec,
    build_channel,
    joint_distribution,
    operand_input,
    output_distribution,
    sample_histogram,
    uniform_operand,
    write_histogram_csv,
)

int8, int16 = fm.get_format("int8"), fm.get_format("int16")
ops = {
    "xor": OpSpec("xor", int8, container_width=16),
    "add": OpSpec("add", int8, int16, overflow_policy="widen"),
}

for name, op in ops.items():
    # exact law: push the uniform input through every one of the 65536 pairs
    c = build_channel(op)
    x = operand_input(op, uniform_operand(int8))
    y = output_distribution(c, x)
    mi = mutual_information(joint_distribution(c, x)).value_bits
    values = c.output_values()
    print(f"{name}: {c.n_outputs} outputs in [{min(values)}, {max(values)}], "
          f"peak p = {y.pmf.max() * 65536:.0f}/65536, I(X;Y) = {mi:.4f} bits")

    # ten million simulated uses with a fixed seed
    hist = sample_histogram(op, [uniform_operand(int8)], 10_000_000, seed=1)
    worst = max(abs(hist.get(v, 0.0) - p) for v, p in zip(values, y.pmf))
    print(f"     sampled {len(hist)} bins, largest deviation from exact {worst:.2e}")

    if len(sys.argv) > 1:
        out = Path(sys.argv[1]) / f"hist_{name}.csv"
        write_histogram_csv(hist, out)
        print(f"     wrote {out}")
