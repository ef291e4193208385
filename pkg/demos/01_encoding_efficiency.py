"""
How many bits does a number format really carry?
================================================

Every bit pattern of a format decodes to some value. Redundant patterns
(NaN payloads, duplicate zeros) waste part of the word. Encoding
efficiency is the entropy of the decoded value under uniform bit patterns,
divided by the width.
"""

from bitmeter import formats as fm

# integers are bijective, so nothing is wasted
for name in ("int8", "uint16"):
    print(f"{name:28s} eta = {fm.encoding_efficiency(fm.get_format(name)):.4f}")

# IEEE-style floats spend a whole exponent code on Inf and NaN
for name in ("fp8_e5m2", "fp8_e4m3_ieee_hypothetical", "fp16", "bf16", "fp32", "fp64"):
    spec = fm.get_format(name)
    print(f"{name:28s} eta = {fm.encoding_efficiency(spec):.4f}  nan patterns = {fm.nan_pattern_count(spec)}")

# small formats suffer most: six bits, fourteen NaN codes
e2m3 = fm.get_format("e2m3_ieee")
mm = fm.enumerate_format(e2m3)
print(f"\ne2m3_ieee: {len(mm)} distinct values from 64 patterns, NaN multiplicity {mm.nan_multiplicity}")
print(f"e2m3_ieee eta = {fm.encoding_efficiency(e2m3):.4f}")

# dropping specials, or keeping a single NaN in place of -0, recovers the full width
for name in ("e2m3_single_nan", "e2m3_ocp"):
    print(f"{name:28s} eta = {fm.encoding_efficiency(fm.get_format(name)):.4f}")

# the same analysis works for a format you describe yourself
mine = fm.FormatSpec("e3m2_custom", 6, "float", exponent_bits=3, mantissa_bits=2,
                     nan_policy="ieee_all_payloads", inf_policy="ieee_pair")
print(f"\n{mine.name}: eta = {fm.encoding_efficiency(mine):.4f}")
print("decode(0b011010) =", fm.decode(mine, "011010"))
