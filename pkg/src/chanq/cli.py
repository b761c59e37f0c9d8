"""Command-line driver: profiling, plan solving, quantized evaluation,
mode comparisons, profiling-size sweeps, and synthetic data generation.

Every command is deterministic given its flags and seed; reports are
plain-text tables with JSON twins. Exit codes: 0 success, 1 usage error,
2 data/format error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .graph import GraphError, Graph, effective_output, fold_batchnorm, load_model
from .planner import MODES, PlanError, load_plan, solve_plan
from .profiling import collect_stats, dump_stats, load_stats
from .qengine import (
    SqnrAccumulator,
    execute_quantized,
    load_quantized,
    quantize_params,
    save_quantized,
)
from .reports import render_table, write_report
from .synthetic import ARCHS, SynthSpec, write_bundle
from .tensorfile import TensorFileError, read_tensor, write_tensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_graph(args) -> Graph:
    g = load_model(args.model, args.weights)
    if any(n.kind == "batchnorm" for n in g.nodes):
        g = fold_batchnorm(g)
    return g


def _load_dataset(path) -> np.ndarray:
    data = read_tensor(path)
    if data.ndim == 3:
        data = data[None]
    if data.ndim != 4 and data.ndim != 2:
        raise TensorFileError(f"{path}: expected a batch of inputs, got rank {data.ndim}")
    return data.astype(np.float32)


def _profile_subset(data: np.ndarray, n: int | None, seed: int) -> np.ndarray:
    if n is None or n >= len(data):
        return data
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(data))[:n]
    return data[idx]


def _iter_batches(data: np.ndarray, batch: int):
    for start in range(0, len(data), batch):
        yield data[start : start + batch]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_profile(args) -> int:
    g = _load_graph(args)
    data = _profile_subset(_load_dataset(args.dataset), args.profile_samples, args.seed)
    stats = collect_stats(g, _iter_batches(data, args.batch))
    dump_stats(stats, args.out)
    print(f"profiled {len(data)} samples -> {args.out}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    g = _load_graph(args)
    stats = load_stats(args.stats)
    plan = solve_plan(g, stats, args.mode, bit_width=args.bitwidth)
    qg = quantize_params(g, plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_quantized(qg, out / "plan.json", out / "qweights.bin")
    print(f"plan ({args.mode}, {args.bitwidth}-bit) -> {out / 'plan.json'}")
    return EXIT_OK


def _evaluate(g, qg, data, labels, capture, batch):
    """Shared float-vs-quantized evaluation loop."""
    acc = SqnrAccumulator(qg.plan)
    agree = 0
    float_correct = 0
    quant_correct = 0
    saturation: dict[str, int] = {}
    traces: dict[str, list] = {name: [] for name in capture}
    from .graph import execute_float

    for start in range(0, len(data), batch):
        chunk = data[start : start + batch]
        ref, ref_acts = execute_float(g, chunk, capture=capture)
        res = execute_quantized(qg, chunk, capture=capture)
        for name in capture:
            acc.update(name, ref_acts[name], res.captured[name])
            traces[name].append(res.captured[name])
        for k, v in res.saturation.items():
            saturation[k] = saturation.get(k, 0) + v
        fa = np.argmax(ref, axis=1)
        qa = np.argmax(res.output, axis=1)
        agree += int(np.sum(fa == qa))
        if labels is not None:
            lab = labels[start : start + len(chunk)]
            float_correct += int(np.sum(fa == lab))
            quant_correct += int(np.sum(qa == lab))
    n = len(data)
    result = {
        "samples": n,
        "top1_agreement": agree / n,
        "saturation": saturation,
        "sqnr": acc.report(),
    }
    if labels is not None:
        result["float_top1"] = float_correct / n
        result["quant_top1"] = quant_correct / n
    result["traces"] = {name: np.concatenate(chunks) for name, chunks in traces.items()}
    return result


def cmd_eval(args) -> int:
    g = _load_graph(args)
    plan_path = Path(args.plan)
    blob = Path(args.qweights) if args.qweights else plan_path.parent / "qweights.bin"
    if blob.exists():
        qg = load_quantized(g, plan_path, blob)
    else:
        qg = quantize_params(g, load_plan(plan_path))
    data = _load_dataset(args.dataset)
    labels = read_tensor(args.labels) if args.labels else None
    capture = set(g.activation_names()) if args.capture == "all" else set(args.capture.split(","))
    res = _evaluate(g, qg, data, labels, capture, args.batch)

    rows = []
    for name in sorted(res["sqnr"]):
        entry = res["sqnr"][name]
        rows.append([name, len(entry["per_channel"]), entry["pooled"],
                     float(np.min(entry["per_channel"]))])
    text = render_table(["tensor", "channels", "pooled_dB", "min_channel_dB"], rows,
                        title=f"eval: mode={qg.plan.mode} bitwidth={qg.plan.bit_width}")
    text += f"\ntop-1 agreement (quant vs float): {res['top1_agreement']:.4f}\n"
    if labels is not None:
        text += f"float top-1: {res['float_top1']:.4f}\nquant top-1: {res['quant_top1']:.4f}\n"
    text += f"accumulator saturations: {sum(res['saturation'].values())}\n"

    doc = {k: v for k, v in res.items() if k != "traces"}
    doc["mode"] = qg.plan.mode
    doc["bit_width"] = qg.plan.bit_width
    write_report(args.out, text, doc)
    if args.trace_out:
        tdir = Path(args.trace_out)
        tdir.mkdir(parents=True, exist_ok=True)
        for name, codes in sorted(res["traces"].items()):
            write_tensor(tdir / f"{name}.qtsr", codes)
    print(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    g = _load_graph(args)
    data = _load_dataset(args.dataset)
    labels = read_tensor(args.labels) if args.labels else None
    profile = _profile_subset(data, args.profile_samples, args.seed)
    stats = collect_stats(g, _iter_batches(profile, args.batch))

    layer_nodes = [n for n in g.nodes if n.kind in ("conv", "depthwise_conv", "fc")]
    ofm = {n.name: effective_output(g, n) for n in layer_nodes}
    capture = set(ofm.values())

    per_mode = {}
    for mode in MODES:
        plan = solve_plan(g, stats, mode, bit_width=args.bitwidth)
        qg = quantize_params(g, plan)
        per_mode[mode] = _evaluate(g, qg, data, labels, capture, args.batch)

    rows = []
    for node in layer_nodes:
        row = [node.name]
        for mode in MODES:
            row.append(per_mode[mode]["sqnr"][ofm[node.name]]["pooled"])
        rows.append(row)
    rows.append(["top1_agreement"] + [per_mode[m]["top1_agreement"] for m in MODES])
    if labels is not None:
        rows.append(["quant_top1"] + [per_mode[m]["quant_top1"] for m in MODES])
    text = render_table(["layer"] + list(MODES), rows,
                        title=f"mode comparison (pooled OFM SQNR dB, {args.bitwidth}-bit)")
    doc = {
        "bit_width": args.bitwidth,
        "profile_samples": len(profile),
        "layers": {n.name: {m: per_mode[m]["sqnr"][ofm[n.name]]["pooled"] for m in MODES}
                   for n in layer_nodes},
        "top1_agreement": {m: per_mode[m]["top1_agreement"] for m in MODES},
    }
    if labels is not None:
        doc["quant_top1"] = {m: per_mode[m]["quant_top1"] for m in MODES}
        doc["float_top1"] = per_mode[MODES[0]]["float_top1"]
    write_report(args.out, text, doc)
    print(text)
    return EXIT_OK


def _activation_fls(g, stats, mode, bitwidth):
    plan = solve_plan(g, stats, mode, bit_width=bitwidth)
    names = [t for t in g.activation_names()]
    return np.concatenate([plan.tensors[t].fls for t in names])


def cmd_sweep_profile_size(args) -> int:
    g = _load_graph(args)
    data = _load_dataset(args.dataset)
    labels = read_tensor(args.labels) if args.labels else None
    sizes = [int(s) for s in args.sizes.split(",")]
    sweep_modes = ("cw_max", "cw_laplace")

    ref_stats = collect_stats(g, _iter_batches(data, args.batch))
    ref_fls = {m: _activation_fls(g, ref_stats, m, args.bitwidth) for m in sweep_modes}

    rows = []
    doc = {"sizes": sizes, "draws": args.draws, "modes": {m: [] for m in sweep_modes}}
    for size in sizes:
        # both modes see the same profiling draws
        draw_stats = [
            collect_stats(g, _iter_batches(_profile_subset(data, size, args.seed + 1000 * d),
                                           args.batch))
            for d in range(args.draws)
        ]
        for mode in sweep_modes:
            fls_draws = np.array(
                [_activation_fls(g, stats, mode, args.bitwidth) for stats in draw_stats]
            )
            match = float(np.mean(fls_draws == ref_fls[mode][None, :]))
            variance = float(np.mean(np.var(fls_draws, axis=0)))
            plan = solve_plan(g, draw_stats[0], mode, bit_width=args.bitwidth)
            qg = quantize_params(g, plan)
            res = _evaluate(g, qg, data, labels, set(), args.batch)
            rows.append([mode, size, match, variance, res["top1_agreement"]])
            doc["modes"][mode].append(
                {
                    "size": size,
                    "fl_match_fraction": match,
                    "fl_variance": variance,
                    "top1_agreement": res["top1_agreement"],
                }
            )
    text = render_table(
        ["mode", "profile_samples", "fl_match_fraction", "fl_variance", "top1_agreement"],
        rows,
        title=f"profiling-size sweep ({args.draws} draws per size)",
    )
    write_report(args.out, text, doc)
    print(text)
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    spec = SynthSpec(
        arch=args.arch,
        in_channels=args.in_channels,
        image_size=args.image_size,
        channels=args.channels,
        classes=args.classes,
        samples=args.samples,
        scale_span_bits=args.scale_span,
        input_scale_span_bits=args.input_scale_span,
        input_family=args.input_family,
        seed=args.seed,
    )
    paths = write_bundle(spec, args.out)
    for k, p in paths.items():
        print(f"{k}: {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

def _add_model_args(p):
    p.add_argument("--model", required=True, help="model manifest (JSON)")
    p.add_argument("--weights", default=None, help="weights blob (defaults to manifest reference)")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bitwidth", type=int, default=8)
    p.add_argument("--batch", type=int, default=32)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chanq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="collect per-channel stats over a dataset")
    _add_model_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--profile-samples", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("quantize", help="solve a plan and quantize parameters")
    _add_model_args(p)
    p.add_argument("--stats", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out", required=True, help="output directory for plan.json + qweights.bin")
    _add_common(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="evaluate a quantized model against float")
    _add_model_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--plan", required=True)
    p.add_argument("--qweights", default=None)
    p.add_argument("--capture", default="all", help="comma-separated tensor names or 'all'")
    p.add_argument("--trace-out", default=None, help="directory for integer activation dumps")
    p.add_argument("--out", required=True, help="report prefix (.txt/.json)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="side-by-side report across all plan modes")
    _add_model_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--profile-samples", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-profile-size", help="fl stability vs profiling sample count")
    _add_model_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--sizes", required=True, help="comma-separated sample counts")
    p.add_argument("--draws", type=int, default=10)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sweep_profile_size)

    p = sub.add_parser("gen-synthetic", help="generate a seeded model + toy dataset")
    p.add_argument("--arch", default="classifier", choices=ARCHS)
    p.add_argument("--in-channels", type=int, default=3)
    p.add_argument("--image-size", type=int, default=12)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--scale-span", type=float, default=4.0)
    p.add_argument("--input-scale-span", type=float, default=0.0)
    p.add_argument("--input-family", default="gaussian", choices=("gaussian", "laplace", "heavy"))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (OSError, GraphError, TensorFileError, PlanError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as e:
        print(f"internal invariant violation: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
