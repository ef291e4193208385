"""
Three ways to count throughput
==============================

Four pipelines running at the same rate: FP64, FP8, FP64 with half its
operand slots known to be zero, and FP64 with 5% of output bits flipped.
Flop/s cannot tell them apart. TPP-2023 sees width but ignores noise and
zeroes out sparse pipelines. Information throughput sees all three effects.
"""

from bitmeter.metrics import compare, information_efficiency, parse_pipeline, roofline_bits

pipelines = [parse_pipeline(t) for t in ("fp64", "fp8", "fp64:sparse=0.5", "fp64:ber=0.05")]
report = compare(pipelines, baseline="fp64")
print(report.to_table())

# CSV as consumed by a plotting script
print(report.to_csv())

# lanes add: eight FP8 lanes match one FP64 lane
wide = compare([parse_pipeline("fp64"), parse_pipeline("fp8:lanes=8")])
print("fp8 x 8 lanes vs fp64:", wide.normalized()["ours_norm"])

# how much of the capacity does a workload use?
print(f"\ninformation efficiency of 7.0 bits/use on an 8-bit channel: {information_efficiency(7.0, 8.0):.3f}")

# roofline in bits: compute roof 64 Gbit/s, link 10 Gbit/s
for intensity in (1, 4, 8, 16):
    print(f"intensity {intensity:2d}: attainable {roofline_bits(64e9, 10e9, intensity) / 1e9:5.1f} Gbit/s")
