"""Bit-exact 8-bit execution: quantized parameters, 32-bit accumulation,
and the per-output-channel shift schedule from the plan.

Products of input and kernel codes accumulate exactly in wide integers;
the accumulator is checked against the 32-bit range (clips are counted,
not fatal), shifted into the output format with half-even rounding, and
saturated to the per-channel 8-bit range. ReLU, pooling, addition and
concatenation all run in the integer domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fixedpoint import rounding_shift, saturate_accumulator
from .graph import Graph, GraphError
from .planner import LayerPlan, QuantPlan, TensorFormat
from .tensorops import _as_pair


@dataclass
class QuantizedGraph:
    graph: Graph
    plan: QuantPlan
    kernels: dict  # node name -> int64 kernel codes, same dims as the float kernel
    biases: dict  # node name -> int64 bias codes [Co]


@dataclass
class QuantRunResult:
    output: np.ndarray  # float32, dequantized final tensor
    captured: dict  # tensor name -> integer codes (compact dtype)
    saturation: dict = field(default_factory=dict)  # node name -> clipped lanes


def _code_bounds(fmt: TensorFormat, bit_width: int):
    lo = np.where(fmt.signed, -(2 ** (bit_width - 1)), 0).astype(np.int64)
    hi = np.where(fmt.signed, 2 ** (bit_width - 1) - 1, 2**bit_width - 1).astype(np.int64)
    return lo, hi


def _channel_shape(arr_ndim: int):
    # broadcast shape placing the channel axis of [C] vectors
    return (1, -1) + (1,) * (arr_ndim - 2)


def quantize_tensor(x: np.ndarray, fmt: TensorFormat, bit_width: int) -> np.ndarray:
    """Quantize a float activation tensor with its per-channel formats."""
    x = np.asarray(x, dtype=np.float64)
    cshape = _channel_shape(x.ndim)
    scale = (2.0 ** fmt.fls.astype(np.float64)).reshape(cshape)
    lo, hi = _code_bounds(fmt, bit_width)
    codes = np.rint(x * scale)
    codes = np.clip(codes, lo.reshape(cshape), hi.reshape(cshape))
    return codes.astype(np.int64)


def dequantize_tensor(codes: np.ndarray, fmt: TensorFormat) -> np.ndarray:
    cshape = _channel_shape(codes.ndim)
    inv = (2.0 ** -fmt.fls.astype(np.float64)).reshape(cshape)
    return (codes.astype(np.float64) * inv).astype(np.float32)


def compact_codes(codes: np.ndarray, fmt: TensorFormat, bit_width: int) -> np.ndarray:
    """Cast integer codes to the narrowest dump dtype (i8/u8/i32)."""
    if bit_width <= 8:
        return codes.astype(np.int8) if fmt.signed.all() else codes.astype(np.uint8)
    return codes.astype(np.int32)


def quantize_params(g: Graph, plan: QuantPlan) -> QuantizedGraph:
    """Quantize kernels at their adjusted per-channel fls and biases at the
    adder fl (32-bit)."""
    kernels, biases = {}, {}
    bw = plan.bit_width
    kq_lo, kq_hi = -(2 ** (bw - 1)), 2 ** (bw - 1) - 1
    for node in g.nodes:
        if node.kind not in ("conv", "depthwise_conv", "fc"):
            continue
        if node.name not in plan.layers:
            raise GraphError(f"plan has no layer entry for node {node.name!r}")
        lp = plan.layers[node.name]
        w = np.asarray(g.params[node.params["weight"]], dtype=np.float64)
        b = np.asarray(g.params[node.params["bias"]], dtype=np.float64)
        if node.kind in ("conv", "depthwise_conv"):
            # ker_fl is [Co, Ci] (conv) or [C, 1] (depthwise)
            scale = 2.0 ** lp.ker_fl.astype(np.float64)
            kcodes = np.rint(w * scale[:, :, None, None])
        else:
            fl_per_elem = lp.ker_fl[:, lp.in_groups]  # [U, D]
            kcodes = np.rint(w * 2.0 ** fl_per_elem.astype(np.float64))
        kernels[node.name] = np.clip(kcodes, kq_lo, kq_hi).astype(np.int64)
        bscale = 2.0 ** lp.bias_fl.astype(np.float64)
        bcodes = np.rint(b * bscale)
        biases[node.name] = np.clip(bcodes, -(2**31), 2**31 - 1).astype(np.int64)
    return QuantizedGraph(graph=g, plan=plan, kernels=kernels, biases=biases)


def _int_windows(codes: np.ndarray, kh: int, kw: int, stride, pad) -> np.ndarray:
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(pad)
    if ph or pw:
        codes = np.pad(codes, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(codes, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw, :, :]


def _finish_accumulator(acc, bias_codes, lp: LayerPlan, out_fmt: TensorFormat,
                        bit_width: int, channel_axis: int = 1):
    cshape = [1] * acc.ndim
    cshape[channel_axis] = -1
    acc = acc + bias_codes.reshape(cshape)
    acc, clipped = saturate_accumulator(acc)
    shifted = rounding_shift(acc, lp.shift.reshape(cshape))
    lo, hi = _code_bounds(out_fmt, bit_width)
    out = np.clip(shifted, lo.reshape(cshape), hi.reshape(cshape))
    return out, clipped


def _run_conv(node, codes_in, qg: QuantizedGraph):
    lp = qg.plan.layers[node.name]
    ker = qg.kernels[node.name]
    kh, kw = ker.shape[2], ker.shape[3]
    win = _int_windows(codes_in, kh, kw, node.attr_pair("stride", 1), node.attr_pair("pad", 0))
    if node.kind == "conv":
        if (lp.comp_shift > 0).any():
            n, oh, ow = win.shape[0], win.shape[2], win.shape[3]
            acc = np.zeros((n, ker.shape[0], oh, ow), dtype=np.int64)
            for j in range(ker.shape[0]):
                for i in range(ker.shape[1]):
                    prods = win[:, i] * ker[j, i]  # [N, H', W', Kh, Kw]
                    prods = rounding_shift(prods, int(lp.comp_shift[j, i]))
                    acc[:, j] += prods.sum(axis=(3, 4))
        else:
            acc = np.einsum("nihwkl,oikl->nohw", win, ker)
    else:  # depthwise: no compensation can arise (tight fls never clamp)
        acc = np.einsum("nchwkl,ckl->nchw", win, ker[:, 0])
    out_fmt = qg.plan.tensors[node.outputs[0]]
    return _finish_accumulator(acc, qg.biases[node.name], lp, out_fmt, qg.plan.bit_width)


def _run_fc(node, codes_in, qg: QuantizedGraph):
    lp = qg.plan.layers[node.name]
    ker = qg.kernels[node.name]  # [U, D]
    x = codes_in.reshape(codes_in.shape[0], -1)  # NCHW row-major flatten
    if (lp.comp_shift > 0).any():
        shifts = lp.comp_shift[:, lp.in_groups]  # [U, D]
        acc = np.zeros((x.shape[0], ker.shape[0]), dtype=np.int64)
        for u in range(ker.shape[0]):
            prods = x * ker[u][None, :]
            prods = rounding_shift(prods, shifts[u][None, :])
            acc[:, u] = prods.sum(axis=1)
    else:
        acc = np.einsum("nd,ud->nu", x, ker)
    out_fmt = qg.plan.tensors[node.outputs[0]]
    return _finish_accumulator(acc, qg.biases[node.name], lp, out_fmt, qg.plan.bit_width)


def _div_half_even(acc: np.ndarray, divisor: int) -> np.ndarray:
    if divisor & (divisor - 1) == 0:
        return rounding_shift(acc, int(divisor).bit_length() - 1)
    q = acc // divisor
    r = acc - q * divisor
    q = q + (2 * r > divisor)
    ties = 2 * r == divisor
    return q + (ties & ((q & 1) == 1))


def _run_pool(node, codes_in):
    wh, ww = node.attr_pair("window")
    stride = node.attrs.get("stride", node.attrs.get("window"))
    win = _int_windows(codes_in, wh, ww, _as_pair(stride), node.attr_pair("pad", 0))
    if node.kind == "maxpool":
        return win.max(axis=(4, 5))
    return _div_half_even(win.sum(axis=(4, 5)), wh * ww)


def _run_add(node, a, b, qg: QuantizedGraph):
    fa = qg.plan.tensors[node.inputs[0]].fls
    fb = qg.plan.tensors[node.inputs[1]].fls
    out_fmt = qg.plan.tensors[node.outputs[0]]
    common = np.minimum(fa, fb)  # per-channel alignment target
    cshape = _channel_shape(a.ndim)
    a = rounding_shift(a, (fa - common).reshape(cshape))
    b = rounding_shift(b, (fb - common).reshape(cshape))
    total = a + b
    shifted = rounding_shift(total, (common - out_fmt.fls).reshape(cshape))
    lo, hi = _code_bounds(out_fmt, qg.plan.bit_width)
    return np.clip(shifted, lo.reshape(cshape), hi.reshape(cshape))


def execute_quantized(qg: QuantizedGraph, x: np.ndarray, capture=()) -> QuantRunResult:
    """Integer forward pass; fully deterministic for identical inputs."""
    g, plan = qg.graph, qg.plan
    capture = set(capture)
    codes = {g.input_name: quantize_tensor(x, plan.tensors[g.input_name], plan.bit_width)}
    saturation = {}
    for node in g.nodes:
        ins = [codes[t] for t in node.inputs]
        if node.kind in ("conv", "depthwise_conv"):
            out, clipped = _run_conv(node, ins[0], qg)
            saturation[node.name] = clipped
        elif node.kind == "fc":
            out, clipped = _run_fc(node, ins[0], qg)
            saturation[node.name] = clipped
        elif node.kind == "relu":
            out = np.maximum(ins[0], 0)
        elif node.kind in ("maxpool", "avgpool"):
            out = _run_pool(node, ins[0])
        elif node.kind == "add":
            out = _run_add(node, ins[0], ins[1], qg)
        elif node.kind == "concat":
            out = np.concatenate(ins, axis=1)
        else:
            raise GraphError(f"node {node.name}: kind {node.kind!r} not executable quantized")
        codes[node.outputs[0]] = out
    captured = {
        name: compact_codes(codes[name], plan.tensors[name], plan.bit_width)
        for name in capture
        if name in codes
    }
    out_f = dequantize_tensor(codes[g.output_name], plan.tensors[g.output_name])
    return QuantRunResult(output=out_f, captured=captured, saturation=saturation)


# ---------------------------------------------------------------------------
# Quantized model files
# ---------------------------------------------------------------------------

def save_quantized(qg: QuantizedGraph, plan_path, blob_path) -> None:
    """Write the plan JSON (with a quantized-parameter index) plus the code blob.

    Kernel codes are stored as int8, bias codes as int32, little-endian,
    addressed by byte offsets recorded in the plan document.
    """
    import json
    from pathlib import Path

    from .planner import plan_to_json

    blob = bytearray()
    index = {}
    for name in sorted(qg.kernels):
        k = np.ascontiguousarray(qg.kernels[name].astype(np.int8))
        b = np.ascontiguousarray(qg.biases[name].astype("<i4"))
        index[name] = {
            "kernel": {"offset": len(blob), "len": k.nbytes, "dims": list(k.shape)},
        }
        blob.extend(k.tobytes())
        index[name]["bias"] = {"offset": len(blob), "len": b.nbytes, "dims": list(b.shape)}
        blob.extend(b.tobytes())
    doc = plan_to_json(qg.plan)
    doc["qparams"] = index
    Path(plan_path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    Path(blob_path).write_bytes(bytes(blob))


def load_quantized(g: Graph, plan_path, blob_path) -> QuantizedGraph:
    """Reload a quantized model; inverse of :func:`save_quantized`."""
    import json
    from pathlib import Path

    from .planner import plan_from_json

    doc = json.loads(Path(plan_path).read_text())
    plan = plan_from_json(doc)
    blob = Path(blob_path).read_bytes()
    kernels, biases = {}, {}
    for name, ref in doc.get("qparams", {}).items():
        kref, bref = ref["kernel"], ref["bias"]
        k = np.frombuffer(blob, dtype=np.int8, count=kref["len"], offset=kref["offset"])
        kernels[name] = k.reshape(kref["dims"]).astype(np.int64)
        b = np.frombuffer(blob, dtype="<i4", count=bref["len"] // 4, offset=bref["offset"])
        biases[name] = b.reshape(bref["dims"]).astype(np.int64)
    return QuantizedGraph(graph=g, plan=plan, kernels=kernels, biases=biases)


# ---------------------------------------------------------------------------
# Fidelity reporting
# ---------------------------------------------------------------------------

def sqnr_db(x: np.ndarray, xhat: np.ndarray, axis=None):
    """10*log10(sum x^2 / sum (x-xhat)^2); inf when exact, NaN when x is 0."""
    x = np.asarray(x, dtype=np.float64)
    err = x - np.asarray(xhat, dtype=np.float64)
    sig = np.sum(x * x, axis=axis)
    noise = np.sum(err * err, axis=axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(sig / noise)
    out = np.where(noise == 0, np.inf, out)
    return np.where(sig == 0, np.nan, out)


def sqnr_report(float_acts: dict, quant_acts: dict, plan: QuantPlan) -> dict:
    """Per-tensor, per-channel SQNR in dB for matching capture sets."""
    report = {}
    for name, x in float_acts.items():
        if name not in quant_acts:
            continue
        xhat = dequantize_tensor(np.asarray(quant_acts[name], dtype=np.int64), plan.tensors[name])
        reduce_axes = tuple(i for i in range(x.ndim) if i != 1)
        report[name] = {
            "per_channel": sqnr_db(x, xhat, axis=reduce_axes),
            "pooled": float(sqnr_db(x.ravel(), xhat.ravel())),
        }
    return report


class SqnrAccumulator:
    """Streaming per-tensor, per-channel signal/noise sums across batches."""

    def __init__(self, plan: QuantPlan):
        self.plan = plan
        self._sig: dict[str, np.ndarray] = {}
        self._noise: dict[str, np.ndarray] = {}

    def update(self, name: str, x: np.ndarray, codes: np.ndarray) -> None:
        xhat = dequantize_tensor(np.asarray(codes, dtype=np.int64), self.plan.tensors[name])
        x = np.asarray(x, dtype=np.float64)
        err = x - xhat
        axes = tuple(i for i in range(x.ndim) if i != 1)
        sig = np.sum(x * x, axis=axes)
        noise = np.sum(err * err, axis=axes)
        if name not in self._sig:
            self._sig[name] = np.zeros_like(sig)
            self._noise[name] = np.zeros_like(noise)
        self._sig[name] += sig
        self._noise[name] += noise

    def report(self) -> dict:
        out = {}
        for name in self._sig:
            sig, noise = self._sig[name], self._noise[name]
            with np.errstate(divide="ignore", invalid="ignore"):
                per = 10.0 * np.log10(sig / noise)
            per = np.where(noise == 0, np.inf, per)
            per = np.where(sig == 0, np.nan, per)
            tot_s, tot_n = float(sig.sum()), float(noise.sum())
            if tot_s == 0:
                pooled = float("nan")
            elif tot_n == 0:
                pooled = float("inf")
            else:
                pooled = 10.0 * np.log10(tot_s / tot_n)
            out[name] = {"per_channel": per, "pooled": pooled}
        return out
