"""Quantization plan solving: per-channel formats and kernel coordination.

For each linear layer the partial-sum fractional lengths (kernel fl +
input-channel fl) are aligned to their per-output minimum by adjusting
kernel fls at compile time, so the accumulator needs no runtime shifters.
Kernel fls never drop below the layer-wise value; channels that would are
clamped and compensated by a constant right shift of their partial sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import flsolver
from .fixedpoint import QFormat, fl_from_max, fl_from_max_array
from .graph import Graph
from .profiling import ChannelStats, TensorStats, standardized_moments

MODES = ("layerwise_max", "cw_max", "cw_laplace", "cw_scauchy", "cw_pdf_aware")
_MODE_FAMILY = {"cw_laplace": "laplace", "cw_scauchy": "super_cauchy"}


class PlanError(ValueError):
    """Plan solving failed (missing stats, unsupported node, bad mode)."""


@dataclass
class TensorFormat:
    """Per-channel activation format of one tensor."""

    fls: np.ndarray  # int64 [C]
    signed: np.ndarray  # bool [C]
    layer_wide: bool = False  # single fl spans the tensor (FC outputs, layerwise mode)

    def qformat(self, bit_width: int, channel: int) -> QFormat:
        return QFormat(bit_width, int(self.fls[channel]), bool(self.signed[channel]))


@dataclass
class LayerPlan:
    """Coordinated kernel/bias formats and shift schedule of a linear layer."""

    ker_fl: np.ndarray  # int64 [Co, G] adjusted kernel fls per input-channel group
    bias_fl: np.ndarray  # int64 [Co], equals the per-output adder fl
    shift: np.ndarray  # int64 [Co], bias_fl - ofm_fl
    comp_shift: np.ndarray  # int64 [Co, G] >= 0, partial-sum right shifts
    ker_fl_layerwise: int  # layer-wise kernel fl (the clamp floor)
    in_groups: np.ndarray | None = None  # fc only: flattened element -> group


@dataclass
class QuantPlan:
    mode: str
    bit_width: int
    tensors: dict = field(default_factory=dict)  # tensor name -> TensorFormat
    layers: dict = field(default_factory=dict)  # node name -> LayerPlan


def coordinate_layer(fl_ifm, fl_ker_tight, fl_ofm, fl_ker_layerwise: int):
    """Align partial sums of one layer to their per-output minimum fl.

    fl_ifm is [G] (shared across outputs) or [Co, G] (depthwise pairing);
    fl_ker_tight is [Co, G]; fl_ofm is [Co]. Returns (adjusted kernel fls,
    bias fls, ofm shifts, compensation shifts).
    """
    tight = np.atleast_2d(np.asarray(fl_ker_tight, dtype=np.int64))
    ifm = np.asarray(fl_ifm, dtype=np.int64)
    if ifm.ndim == 1:
        ifm = np.broadcast_to(ifm, tight.shape)
    ofm = np.asarray(fl_ofm, dtype=np.int64)
    floor = int(fl_ker_layerwise)

    psum = tight + ifm
    adder = psum.min(axis=1)
    bias_fl = adder
    adjusted = bias_fl[:, None] - ifm
    comp = np.zeros_like(adjusted)
    below = adjusted < floor
    if below.any():
        comp = np.where(below, floor + ifm - adder[:, None], 0)
        adjusted = np.where(below, floor, adjusted)
    shift = bias_fl - ofm
    return adjusted, bias_fl, shift, comp


def _tight_kernel_fls(node_kind: str, w: np.ndarray, bit_width: int,
                      layerwise_input: bool) -> np.ndarray:
    absw = np.abs(w)
    if node_kind == "conv":
        maxes = absw.max(axis=(2, 3))  # [Co, Ci]
    elif node_kind == "depthwise_conv":
        maxes = absw.max(axis=(1, 2, 3))[:, None]  # [C, 1]
    else:  # fc: one fl per unit, or one per layer on a layer-wise path
        if layerwise_input:
            maxes = np.full((w.shape[0], 1), absw.max())
        else:
            maxes = absw.max(axis=1)[:, None]  # [U, 1], broadcast over groups later
    shape = maxes.shape
    return fl_from_max_array(maxes.ravel(), bit_width, True).reshape(shape)


class _PlanBuilder:
    def __init__(self, g: Graph, stats: dict, mode: str, bit_width: int, knn_model):
        self.g = g
        self.stats = stats
        self.mode = mode
        self.bit_width = bit_width
        self.knn = knn_model
        self.plan = QuantPlan(mode=mode, bit_width=bit_width)

    def _tensor_stats(self, name: str) -> TensorStats:
        if name not in self.stats:
            raise PlanError(f"missing profiling stats for tensor {name!r}")
        return self.stats[name]

    def _unsigned(self, name: str) -> bool:
        producer = self.g.producer(name)
        if producer is not None and producer.kind == "relu":
            return True
        consumers = self.g.consumers(name)
        return bool(consumers) and all(c.kind == "relu" for c in consumers)

    def _fl_one(self, cs: ChannelStats, idx: int, signed: bool) -> int:
        mode = self.mode
        if mode in ("layerwise_max", "cw_max"):
            return fl_from_max(float(cs.max_abs[idx]), self.bit_width, signed)
        if cs.degenerate[idx]:
            return fl_from_max(float(cs.max_abs[idx]), self.bit_width, signed)
        if mode == "cw_pdf_aware":
            family = flsolver.classify_pdf(standardized_moments(cs)[idx], self.knn)
        else:
            family = _MODE_FAMILY[mode]
        return flsolver.optimal_fl(cs, family, self.bit_width, signed, channel=idx)

    def _stats_based_format(self, name: str) -> TensorFormat:
        ts = self._tensor_stats(name)
        channels = self.g.channels(name)
        signed = not self._unsigned(name)
        producer = self.g.producer(name)
        layer_wide = self.mode == "layerwise_max" or (producer is not None and producer.kind == "fc")
        if layer_wide:
            fl = self._fl_one(ts.pooled, 0, signed)
            fls = np.full(channels, fl, dtype=np.int64)
        else:
            fls = np.array(
                [self._fl_one(ts.per_channel, i, signed) for i in range(channels)],
                dtype=np.int64,
            )
        return TensorFormat(fls=fls, signed=np.full(channels, signed), layer_wide=layer_wide)

    def _input_groups(self, node) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, bool]:
        """Per-group input fls for coordination, plus the fc element map."""
        in_name = node.inputs[0]
        fmt = self.plan.tensors[in_name]
        in_shape = self.g.shapes[in_name]
        if node.kind in ("conv", "depthwise_conv"):
            return fmt.fls, fmt.signed, None, False
        # fc: group by source channel; layer-wide paths collapse to one group
        if fmt.layer_wide:
            groups = np.zeros(int(np.prod(in_shape[1:])), dtype=np.int64)
            return fmt.fls[:1], fmt.signed[:1], groups, True
        if len(in_shape) == 4:
            spatial = in_shape[2] * in_shape[3]
            groups = np.repeat(np.arange(in_shape[1], dtype=np.int64), spatial)
        else:
            groups = np.arange(in_shape[1], dtype=np.int64)
        return fmt.fls, fmt.signed, groups, False

    def build(self) -> QuantPlan:
        g, plan = self.g, self.plan
        plan.tensors[g.input_name] = self._stats_based_format(g.input_name)
        for node in g.nodes:
            out = node.outputs[0]
            if node.kind == "batchnorm":
                raise PlanError(
                    f"node {node.name}: fold batchnorm before solving a plan"
                )
            if node.kind in ("conv", "depthwise_conv", "fc"):
                plan.tensors[out] = self._stats_based_format(out)
                self._coordinate(node)
            elif node.kind == "relu":
                src = plan.tensors[node.inputs[0]]
                plan.tensors[out] = TensorFormat(
                    fls=src.fls.copy(),
                    signed=np.zeros_like(src.signed),
                    layer_wide=src.layer_wide,
                )
            elif node.kind in ("maxpool", "avgpool"):
                src = plan.tensors[node.inputs[0]]
                plan.tensors[out] = TensorFormat(src.fls.copy(), src.signed.copy(), src.layer_wide)
            elif node.kind == "add":
                plan.tensors[out] = self._stats_based_format(out)
            elif node.kind == "concat":
                a = plan.tensors[node.inputs[0]]
                b = plan.tensors[node.inputs[1]]
                plan.tensors[out] = TensorFormat(
                    fls=np.concatenate([a.fls, b.fls]),
                    signed=np.concatenate([a.signed, b.signed]),
                    layer_wide=False,
                )
            else:
                raise PlanError(f"node {node.name}: unsupported kind {node.kind!r}")
        return plan

    def _coordinate(self, node) -> None:
        w = self.g.params[node.params["weight"]]
        ifm_fls, _, in_groups, layerwise_input = self._input_groups(node)
        floor = fl_from_max(float(np.abs(w).max()), self.bit_width, True)
        if self.mode == "layerwise_max":
            tight = np.full(
                (w.shape[0], 1 if node.kind != "conv" else w.shape[1]), floor, dtype=np.int64
            )
        else:
            tight = _tight_kernel_fls(node.kind, w, self.bit_width, layerwise_input)
        out_fmt = self.plan.tensors[node.outputs[0]]
        ofm_fls = out_fmt.fls

        if node.kind == "conv":
            ker, bias_fl, shift, comp = coordinate_layer(ifm_fls, tight, ofm_fls, floor)
        elif node.kind == "depthwise_conv":
            ifm = ifm_fls[:, None]  # pair channel c with output c
            ker, bias_fl, shift, comp = coordinate_layer(ifm, tight, ofm_fls, floor)
        else:  # fc
            n_groups = 1 if layerwise_input else int(ifm_fls.shape[0])
            tight = np.broadcast_to(tight, (w.shape[0], n_groups)).copy()
            ifm = ifm_fls[:1] if layerwise_input else ifm_fls
            ker, bias_fl, shift, comp = coordinate_layer(ifm, tight, ofm_fls, floor)
        self.plan.layers[node.name] = LayerPlan(
            ker_fl=ker,
            bias_fl=bias_fl,
            shift=shift,
            comp_shift=comp,
            ker_fl_layerwise=floor,
            in_groups=in_groups,
        )


def solve_plan(g: Graph, stats: dict, mode: str, bit_width: int = 8,
               knn_model=None) -> QuantPlan:
    """Produce the complete quantization recipe for a (batchnorm-free) graph."""
    if mode not in MODES:
        raise PlanError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "cw_pdf_aware" and knn_model is None:
        knn_model = flsolver.default_classifier(bit_width)
    return _PlanBuilder(g, stats, mode, bit_width, knn_model).build()


# ---------------------------------------------------------------------------
# Plan serialization
# ---------------------------------------------------------------------------

def plan_to_json(plan: QuantPlan) -> dict:
    return {
        "version": 1,
        "mode": plan.mode,
        "bit_width": plan.bit_width,
        "tensors": {
            name: {
                "fl": [int(v) for v in fmt.fls],
                "signed": [bool(v) for v in fmt.signed],
                "layer_wide": bool(fmt.layer_wide),
            }
            for name, fmt in plan.tensors.items()
        },
        "layers": {
            name: {
                "ker_fl": lp.ker_fl.tolist(),
                "bias_fl": lp.bias_fl.tolist(),
                "shift": lp.shift.tolist(),
                "comp_shift": lp.comp_shift.tolist(),
                "ker_fl_layerwise": int(lp.ker_fl_layerwise),
                "in_groups": None if lp.in_groups is None else lp.in_groups.tolist(),
            }
            for name, lp in plan.layers.items()
        },
    }


def plan_from_json(doc: dict) -> QuantPlan:
    if doc.get("version") != 1:
        raise PlanError(f"unsupported plan version {doc.get('version')}")
    plan = QuantPlan(mode=doc["mode"], bit_width=int(doc["bit_width"]))
    for name, td in doc["tensors"].items():
        plan.tensors[name] = TensorFormat(
            fls=np.asarray(td["fl"], dtype=np.int64),
            signed=np.asarray(td["signed"], dtype=bool),
            layer_wide=bool(td["layer_wide"]),
        )
    for name, ld in doc["layers"].items():
        plan.layers[name] = LayerPlan(
            ker_fl=np.asarray(ld["ker_fl"], dtype=np.int64),
            bias_fl=np.asarray(ld["bias_fl"], dtype=np.int64),
            shift=np.asarray(ld["shift"], dtype=np.int64),
            comp_shift=np.asarray(ld["comp_shift"], dtype=np.int64),
            ker_fl_layerwise=int(ld["ker_fl_layerwise"]),
            in_groups=None if ld["in_groups"] is None else np.asarray(ld["in_groups"], dtype=np.int64),
        )
    return plan


def save_plan(plan: QuantPlan, path) -> None:
    with open(path, "w") as f:
        json.dump(plan_to_json(plan), f, indent=1, sort_keys=True)
        f.write("\n")


def load_plan(path) -> QuantPlan:
    with open(path) as f:
        return plan_from_json(json.load(f))
