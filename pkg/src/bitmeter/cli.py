"""Command-line interface: ``bitmeter <command> ...``.

Exit codes: 0 success, 1 other library error, 2 bad usage or unknown
format/baseline, 3 exact computation too large, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import formats as fm
from .capacity import (
    channel_capacity,
    mi_upper_bound,
    mutual_information,
    mutual_information_sampled,
    noisy_word_capacity,
)
from .channel import (
    NoiseSpec,
    OpSpec,
    apply_noise,
    bsc,
    build_channel,
    constant_operand,
    joint_distribution,
    operand_input,
    sample_histogram,
    uniform_operand,
    write_histogram_csv,
)
from .dist import DiscreteDistribution
from .errors import BitmeterError, ChannelTooLarge, EnumerationTooLarge, ValidationError
from .metrics import compare, parse_pipeline

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_TOO_LARGE, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _custom_formats(args):
    specs = []
    for path in args.formats_file or []:
        try:
            specs.extend(fm.load_format_file(path))
        except OSError as exc:
            raise UsageError(f"cannot read format file {path}: {exc}") from exc
    return specs


def _resolve(args, ref):
    try:
        return fm.get_format(ref, _custom_formats(args), args.allow_override)
    except KeyError as exc:
        raise UsageError(f"unknown format {ref!r}") from exc


def _op_from_args(args):
    if not args.op:
        raise UsageError("--op is required")
    refs = [r for r in (args.inputs or "").split(",") if r]
    if not refs:
        raise UsageError("--in is required")
    specs = [_resolve(args, r) for r in refs]
    if any(s != specs[0] for s in specs):
        raise UsageError("all operands must share one format")
    out = _resolve(args, args.out) if args.out else None
    container = None
    if args.container:
        container = int(args.container) if args.container.isdigit() else _resolve(args, args.container).width
        if out is None and not specs[0].is_float and args.op != "compare_lt":
            # results are computed in the container itself, so integer add/mul stay exact
            prefix = "int" if specs[0].kind == "signed_int_twos_complement" else "uint"
            out = fm.FormatSpec(f"{prefix}{container}", container, specs[0].kind)
    return OpSpec(
        args.op,
        specs[0],
        out,
        operand_count=len(specs),
        overflow_policy=args.overflow,
        container_width=container,
    )


def _operand_dist(args, spec):
    choice = args.dist
    if choice == "uniform":
        return uniform_operand(spec)
    if choice.startswith("constant:"):
        text = choice.split(":", 1)[1]
        return constant_operand(spec, float(text) if spec.is_float else int(text))
    if choice.startswith("file:"):
        path = choice.split(":", 1)[1]
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read distribution file {path}: {exc}") from exc
        if "codes" in data:
            codes = [int(c) for c in data["codes"]]
        elif "values" in data:
            codes = [fm.encode(spec, v) if not spec.is_float else fm.round_to_format(spec, v) for v in data["values"]]
        else:
            raise UsageError(f"{path}: expected 'codes' or 'values' with 'pmf'")
        pmf = np.zeros(1 << spec.width)
        np.add.at(pmf, codes, np.asarray(data["pmf"], dtype=float))
        return DiscreteDistribution(np.arange(1 << spec.width, dtype=np.int64), pmf)
    raise UsageError(f"unknown --dist {choice!r}")


def _emit(args, text):
    if getattr(args, "output", None):
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {args.output}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _render(args, record, styles=None):
    """Render a flat record as table lines, key/value CSV, or full-precision JSON."""
    kind = getattr(args, "format", "table")
    if kind == "json":
        return json.dumps(record, indent=2) + "\n"
    styles = styles or {}
    shown = {k: _show(v, styles.get(k, ".4f")) for k, v in record.items()}
    if kind == "csv":
        return "key,value\n" + "".join(f"{k},{v}\n" for k, v in shown.items())
    return "".join(f"{k}: {v}\n" for k, v in shown.items())


def _show(v, style):
    if isinstance(v, float):
        return format(v, style)
    return str(v)


# ---------------------------------------------------------------------------
# commands


_CAPACITY_STYLE = {"capacity_bits": ".6f", "gap": ".3g"}


def cmd_eta(args):
    spec = _resolve(args, args.format_ref)
    profile = fm.multiplicity_profile(spec)
    if spec.width <= 16:
        mm = fm.enumerate_format(spec)
        distinct, nan = len(mm), mm.nan_multiplicity
    else:
        distinct, nan = sum(profile.values()), fm.nan_pattern_count(spec)
    record = {
        "name": spec.name,
        "width": spec.width,
        "distinct_values": distinct,
        "nan_multiplicity": nan,
        "eta": fm.encoding_efficiency(spec),
    }
    _emit(args, _render(args, record))


def cmd_mi(args):
    op = _op_from_args(args)
    operand = _operand_dist(args, op.operand_format)
    noise = NoiseSpec(args.ber) if args.ber else None
    bound = mi_upper_bound([op.operand_format.width] * op.operand_count, [op.storage_format.width])
    if args.method == "exact":
        channel = build_channel(op)
        if noise is not None:
            channel = apply_noise(channel, noise)
        est = mutual_information(joint_distribution(channel, operand_input(op, operand)))
    else:
        if args.seed is None:
            raise UsageError("--seed is required with --method sampled")
        est = mutual_information_sampled(op, [operand], args.samples, args.seed, args.correction, noise)
    record = {
        "op": op.op,
        "inputs": ",".join([op.operand_format.name] * op.operand_count),
        "output": op.storage_format.name,
        "method": est.method,
        "mi_bits": est.value_bits,
        "upper_bound_bits": bound,
    }
    if est.samples:
        record.update(samples=est.samples, seed=args.seed, bias_correction=est.bias_correction)
    _emit(args, _render(args, record))


def cmd_capacity(args):
    noise = NoiseSpec(args.ber) if args.ber else None
    if args.channel:
        name, _, param = args.channel.partition(":")
        if name != "bsc" or not param:
            raise UsageError(f"unknown --channel {args.channel!r}; expected bsc:<p>")
        channel, label = bsc(float(param)), args.channel
        if noise is not None:
            channel = apply_noise(channel, noise)
    else:
        op = _op_from_args(args)
        label = op.op
        if op.op == "identity" and op.output_format == op.operand_format and op.container_width is None:
            record = {
                "channel": f"identity[{op.operand_format.name}]",
                "method": "closed_form",
                "capacity_bits": noisy_word_capacity(op.operand_format.width, args.ber or 0.0),
                "iterations": 0,
                "gap": 0.0,
            }
            _emit(args, _render(args, record, _CAPACITY_STYLE))
            return
        channel = build_channel(op)
        if noise is not None:
            channel = apply_noise(channel, noise)
    result = channel_capacity(channel, args.tol, args.max_iter)
    record = {
        "channel": label,
        "method": "blahut_arimoto",
        "capacity_bits": result.capacity_bits,
        "iterations": result.iterations,
        "gap": result.gap,
    }
    _emit(args, _render(args, record, _CAPACITY_STYLE))


def cmd_hist(args):
    op = _op_from_args(args)
    if args.seed is None:
        raise UsageError("--seed is required")
    noise = NoiseSpec(args.ber) if args.ber else None
    hist = sample_histogram(op, [_operand_dist(args, op.operand_format)], args.samples, args.seed, noise)
    write_histogram_csv(hist, args.output or sys.stdout)


def cmd_compare(args):
    extra = _custom_formats(args)
    tokens = [t for t in args.pipelines.split(",") if t]
    if not tokens:
        raise UsageError("--pipelines needs at least one pipeline")
    try:
        pipelines = [parse_pipeline(t, extra, args.allow_override) for t in tokens]
    except KeyError as exc:
        raise UsageError(str(exc).strip("'\"")) from exc
    labels = [p.label for p in pipelines]
    baseline = args.baseline or labels[0]
    if baseline not in labels:
        raise UsageError(f"unknown baseline {baseline!r}; pipelines are {labels}")
    report = compare(pipelines, baseline, max_workers=_threads())
    if args.format == "json":
        text = report.to_json()
    elif args.format == "table":
        text = report.to_table()
    else:
        text = report.to_csv()
    _emit(args, text)
    if args.format == "csv":
        for note in report.notes():
            print(f"note: {note}", file=sys.stderr)


def cmd_formats(args):
    names = set(fm.BUILTIN_FORMATS)
    names.update(spec.name for spec in _custom_formats(args))
    _emit(args, "".join(f"{n}\n" for n in sorted(names)))


def _threads():
    raw = os.environ.get("BITMETER_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"BITMETER_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise UsageError(f"BITMETER_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--formats-file", action="append", metavar="PATH", help="JSON format definitions")
    p.add_argument("--allow-override", action="store_true", help="custom formats replace built-ins")


def _add_op(p, dist=True):
    p.add_argument("--op", choices=["add", "mul", "xor", "compare_lt", "identity"])
    p.add_argument("--in", dest="inputs", metavar="FMT[,FMT]", help="operand formats, e.g. int8,int8")
    p.add_argument("--out", help="output format (default: operand format; bool for compare_lt)")
    p.add_argument("--overflow", choices=["saturate", "wrap", "widen"], default="saturate")
    p.add_argument("--container", help="integer storage width or format, e.g. int16")
    p.add_argument("--ber", type=float, default=0.0, help="per-bit output flip probability")
    if dist:
        p.add_argument("--dist", default="uniform", help="uniform | constant:<value> | file:<path>")


def build_parser():
    parser = argparse.ArgumentParser(prog="bitmeter", description="Information-theoretic compute metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eta", help="encoding efficiency of a number format")
    p.add_argument("format_ref", metavar="FORMAT")
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--output", "-o")
    _add_common(p)
    p.set_defaults(func=cmd_eta)

    p = sub.add_parser("mi", help="mutual information of an operation")
    _add_op(p)
    p.add_argument("--method", choices=["exact", "sampled"], default="exact")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--correction", action="store_true", help="Miller-Madow bias correction")
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--output", "-o")
    _add_common(p)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("capacity", help="compute-channel capacity")
    p.add_argument("--channel", help="named channel, e.g. bsc:0.05")
    _add_op(p, dist=False)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--output", "-o")
    _add_common(p)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("hist", help="sampled output histogram as CSV")
    _add_op(p)
    p.add_argument("--samples", type=int, default=10_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("compare", help="flop/s vs TPP-2023 vs bits/s table")
    p.add_argument("--pipelines", required=True, help="comma list of <format>[:key=value...]")
    p.add_argument("--baseline")
    p.add_argument("--format", choices=["csv", "json", "table"], default="csv")
    p.add_argument("--output", "-o")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("formats", help="list known formats")
    p.add_argument("--output", "-o")
    _add_common(p)
    p.set_defaults(func=cmd_formats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"bitmeter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, KeyError) as exc:
        print(f"bitmeter: error: {str(exc).strip(chr(39))}", file=sys.stderr)
        return EXIT_USAGE
    except (ChannelTooLarge, EnumerationTooLarge) as exc:
        print(f"bitmeter: error: {exc} (try --method sampled)", file=sys.stderr)
        return EXIT_TOO_LARGE
    except OSError as exc:
        print(f"bitmeter: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BitmeterError as exc:
        print(f"bitmeter: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
