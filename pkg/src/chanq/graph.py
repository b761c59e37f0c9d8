"""Network graph IR: loading, validation, batch-norm folding, float execution.

A model on disk is a JSON manifest plus a raw little-endian float32 blob;
parameters are addressed by byte (offset, len) per manifest entry. In
memory a :class:`Graph` holds validated, topologically ordered nodes and
memory-resident parameter arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensorops as ops

LINEAR_KINDS = ("conv", "depthwise_conv", "fc")
KINDS = LINEAR_KINDS + ("batchnorm", "relu", "maxpool", "avgpool", "add", "concat")

_PARAM_ROLES = {
    "conv": ("weight", "bias"),
    "depthwise_conv": ("weight", "bias"),
    "fc": ("weight", "bias"),
    "batchnorm": ("gamma", "beta", "mean", "var"),
}


class GraphError(ValueError):
    """Invalid manifest, weights, or graph structure."""


@dataclass
class LayerSpec:
    name: str
    kind: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)  # role -> parameter tensor name
    consumer_activation: str = "none"  # none | relu, filled by validation

    def attr_pair(self, key, default=None):
        v = self.attrs.get(key, default)
        if v is None:
            raise GraphError(f"node {self.name}: missing attribute {key!r}")
        return ops._as_pair(v)


@dataclass
class Graph:
    input_name: str
    input_dims: tuple
    nodes: list[LayerSpec]
    params: dict  # parameter tensor name -> np.ndarray (float32)
    shapes: dict = field(default_factory=dict)  # tensor name -> shape (from input_dims)
    output_name: str = ""

    def producer(self, tensor: str) -> LayerSpec | None:
        for node in self.nodes:
            if tensor in node.outputs:
                return node
        return None

    def consumers(self, tensor: str) -> list[LayerSpec]:
        return [n for n in self.nodes if tensor in n.inputs]

    def activation_names(self) -> list[str]:
        names = [self.input_name]
        for node in self.nodes:
            names.extend(node.outputs)
        return names

    def channels(self, tensor: str) -> int:
        shape = self.shapes[tensor]
        return shape[1] if len(shape) >= 2 else shape[0]


def topological_order(nodes: list[LayerSpec], available: set) -> list[LayerSpec]:
    """Kahn ordering by tensor dependencies; raises on cycles naming a node."""
    pending = list(nodes)
    have = set(available)
    ordered = []
    while pending:
        ready = [n for n in pending if all(t in have for t in n.inputs)]
        if not ready:
            stuck = ", ".join(n.name for n in pending)
            raise GraphError(f"cycle or unresolvable dependency among nodes: {stuck}")
        for n in ready:
            ordered.append(n)
            have.update(n.outputs)
            pending.remove(n)
    return ordered


def _infer_shape(node: LayerSpec, in_shapes: list[tuple], params: dict) -> tuple:
    kind = node.kind
    if kind in ("conv", "depthwise_conv"):
        (n, c, h, w) = in_shapes[0]
        kshape = params[node.params["weight"]].shape
        stride = node.attr_pair("stride", 1)
        pad = node.attr_pair("pad", 0)
        if kind == "conv":
            co, ci, kh, kw = kshape
            if ci != c:
                raise GraphError(f"node {node.name}: kernel expects {ci} input channels, tensor has {c}")
        else:
            co, one, kh, kw = kshape
            if one != 1 or co != c:
                raise GraphError(f"node {node.name}: depthwise kernel {kshape} mismatches {c} channels")
        if params[node.params["bias"]].shape != (co,):
            raise GraphError(f"node {node.name}: bias length != {co} output channels")
        oh, ow = ops.conv_output_hw(h, w, kh, kw, stride, pad)
        return (n, co, oh, ow)
    if kind == "fc":
        s = in_shapes[0]
        d = int(np.prod(s[1:]))
        u, dw = params[node.params["weight"]].shape
        if dw != d:
            raise GraphError(f"node {node.name}: fc weights expect {dw} inputs, tensor flattens to {d}")
        if params[node.params["bias"]].shape != (u,):
            raise GraphError(f"node {node.name}: bias length != {u} units")
        return (s[0], u)
    if kind == "batchnorm":
        (n, c, h, w) = in_shapes[0]
        for role in _PARAM_ROLES["batchnorm"]:
            if params[node.params[role]].shape != (c,):
                raise GraphError(f"node {node.name}: {role} length != {c} channels")
        return in_shapes[0]
    if kind == "relu":
        return in_shapes[0]
    if kind in ("maxpool", "avgpool"):
        (n, c, h, w) = in_shapes[0]
        wh, ww = node.attr_pair("window")
        stride = node.attr_pair("stride", node.attrs.get("window"))
        pad = node.attr_pair("pad", 0)
        oh, ow = ops.conv_output_hw(h, w, wh, ww, stride, pad)
        return (n, c, oh, ow)
    if kind == "add":
        a, b = in_shapes
        if a != b:
            raise GraphError(f"node {node.name}: add operands differ: {a} vs {b}")
        return a
    if kind == "concat":
        a, b = in_shapes
        if a[0] != b[0] or a[2:] != b[2:]:
            raise GraphError(f"node {node.name}: concat operands differ: {a} vs {b}")
        return (a[0], a[1] + b[1]) + a[2:]
    raise GraphError(f"node {node.name}: unknown kind {kind!r}")


def validate(g: Graph) -> Graph:
    """Order nodes, check names/shapes, and annotate relu consumers."""
    seen = {g.input_name}
    for node in g.nodes:
        if node.kind not in KINDS:
            raise GraphError(f"node {node.name}: unknown kind {node.kind!r}")
        if len(node.outputs) != 1:
            raise GraphError(f"node {node.name}: exactly one output tensor required")
        for t in node.outputs:
            if t in seen:
                raise GraphError(f"tensor {t!r} produced more than once (node {node.name})")
            seen.add(t)
        for role in _PARAM_ROLES.get(node.kind, ()):
            if role not in node.params:
                raise GraphError(f"node {node.name}: missing parameter {role!r}")
            if node.params[role] not in g.params:
                raise GraphError(f"node {node.name}: parameter tensor {node.params[role]!r} not loaded")
    produced = {g.input_name} | {t for n in g.nodes for t in n.outputs}
    for node in g.nodes:
        for t in node.inputs:
            if t not in produced:
                raise GraphError(f"node {node.name}: input tensor {t!r} is not produced anywhere")
    g.nodes = topological_order(g.nodes, {g.input_name})

    g.shapes = {g.input_name: tuple(g.input_dims)}
    for node in g.nodes:
        in_shapes = [g.shapes[t] for t in node.inputs]
        g.shapes[node.outputs[0]] = _infer_shape(node, in_shapes, g.params)

    consumed = {t for n in g.nodes for t in n.inputs}
    terminals = [t for n in g.nodes for t in n.outputs if t not in consumed]
    if len(terminals) != 1:
        raise GraphError(f"expected exactly one terminal tensor, found {terminals}")
    g.output_name = terminals[0]

    for node in g.nodes:
        consumers = g.consumers(node.outputs[0])
        if consumers and all(c.kind == "relu" for c in consumers):
            node.consumer_activation = "relu"
        else:
            node.consumer_activation = "none"
    return g


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def load_model(manifest_path, weights_path=None) -> Graph:
    """Load and validate a model from its manifest + weights blob."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise GraphError(f"cannot parse manifest {manifest_path}: {e}") from e
    if doc.get("version") != 1:
        raise GraphError(f"{manifest_path}: unsupported manifest version {doc.get('version')}")
    if weights_path is None:
        rel = doc.get("weights")
        if rel is None:
            raise GraphError(f"{manifest_path}: no weights file given or referenced")
        weights_path = manifest_path.parent / rel
    blob = Path(weights_path).read_bytes()

    params = {}
    nodes = []
    for nd in doc["nodes"]:
        spec = LayerSpec(
            name=nd["name"],
            kind=nd["kind"],
            inputs=list(nd["inputs"]),
            outputs=list(nd["outputs"]),
            attrs=dict(nd.get("attrs", {})),
        )
        for role, ref in nd.get("params", {}).items():
            offset, length, dims = int(ref["offset"]), int(ref["len"]), tuple(ref["dims"])
            expected = 4 * int(np.prod(dims, dtype=np.int64))
            if length != expected:
                raise GraphError(
                    f"node {spec.name}: parameter {role!r} length {length} bytes "
                    f"!= {expected} for dims {list(dims)}"
                )
            if offset + length > len(blob):
                raise GraphError(f"node {spec.name}: parameter {role!r} overruns weights file")
            arr = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=offset)
            pname = f"{spec.name}.{role}"
            params[pname] = arr.reshape(dims).copy()
            spec.params[role] = pname
        nodes.append(spec)

    g = Graph(
        input_name=doc["input"]["name"],
        input_dims=tuple(doc["input"]["dims"]),
        nodes=nodes,
        params=params,
    )
    return validate(g)


def save_model(g: Graph, manifest_path, weights_path) -> None:
    """Write the manifest + weights blob pair; inverse of :func:`load_model`."""
    manifest_path, weights_path = Path(manifest_path), Path(weights_path)
    blob = bytearray()
    node_docs = []
    for node in g.nodes:
        refs = {}
        for role, pname in sorted(node.params.items()):  # canonical blob order
            arr = np.ascontiguousarray(g.params[pname], dtype="<f4")
            refs[role] = {"offset": len(blob), "len": arr.nbytes, "dims": list(arr.shape)}
            blob.extend(arr.tobytes())
        node_docs.append(
            {
                "name": node.name,
                "kind": node.kind,
                "inputs": node.inputs,
                "outputs": node.outputs,
                "attrs": node.attrs,
                "params": refs,
            }
        )
    doc = {
        "version": 1,
        "input": {"name": g.input_name, "dims": list(g.input_dims)},
        "weights": weights_path.name,
        "nodes": node_docs,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    weights_path.write_bytes(bytes(blob))


# ---------------------------------------------------------------------------
# Transformations and execution
# ---------------------------------------------------------------------------

def fold_batchnorm(g: Graph) -> Graph:
    """Fuse each batchnorm into the preceding linear layer.

    w' = w * g/sqrt(var+eps) per output channel, b' = (b-mean)*g/sqrt(var+eps) + beta.
    The folded graph's float outputs match the original within 1e-5 relative.
    """
    params = dict(g.params)
    nodes = []
    folded_into = {}  # bn output tensor -> linear node name
    by_output = {}
    for node in g.nodes:
        by_output[node.outputs[0]] = node

    for node in g.nodes:
        if node.kind != "batchnorm":
            nodes.append(replace(node, inputs=list(node.inputs), outputs=list(node.outputs),
                                 attrs=dict(node.attrs), params=dict(node.params)))
            continue
        src = by_output.get(node.inputs[0])
        if src is None or src.kind not in LINEAR_KINDS:
            raise GraphError(
                f"node {node.name}: batchnorm must directly follow a conv/depthwise/fc layer"
            )
        if len(g.consumers(src.outputs[0])) != 1:
            raise GraphError(
                f"node {node.name}: cannot fold, {src.outputs[0]!r} has other consumers"
            )
        gamma = params[node.params["gamma"]]
        beta = params[node.params["beta"]]
        mean = params[node.params["mean"]]
        var = params[node.params["var"]]
        eps = float(node.attrs.get("epsilon", 0.0))
        scale = gamma / np.sqrt(var + eps)

        target = next(n for n in nodes if n.name == src.name)
        w = params[target.params["weight"]]
        b = params[target.params["bias"]]
        shape = (-1,) + (1,) * (w.ndim - 1)
        params[target.params["weight"]] = (w * scale.reshape(shape)).astype(np.float32)
        params[target.params["bias"]] = ((b - mean) * scale + beta).astype(np.float32)
        # The folded layer takes over the bn's output tensor name.
        target.outputs = list(node.outputs)
        folded_into[node.outputs[0]] = target.name

    folded = Graph(input_name=g.input_name, input_dims=g.input_dims, nodes=nodes, params=params)
    # Drop parameter tensors belonging to removed bn nodes.
    live = {p for n in nodes for p in n.params.values()}
    folded.params = {k: v for k, v in params.items() if k in live}
    return validate(folded)


def _run_node(node: LayerSpec, inputs: list[np.ndarray], params: dict) -> np.ndarray:
    kind = node.kind
    if kind == "conv":
        return ops.conv2d(inputs[0], params[node.params["weight"]], params[node.params["bias"]],
                          node.attr_pair("stride", 1), node.attr_pair("pad", 0))
    if kind == "depthwise_conv":
        return ops.depthwise_conv2d(inputs[0], params[node.params["weight"]], params[node.params["bias"]],
                                    node.attr_pair("stride", 1), node.attr_pair("pad", 0))
    if kind == "fc":
        return ops.fully_connected(inputs[0], params[node.params["weight"]], params[node.params["bias"]])
    if kind == "batchnorm":
        return ops.batchnorm(inputs[0], params[node.params["gamma"]], params[node.params["beta"]],
                             params[node.params["mean"]], params[node.params["var"]],
                             float(node.attrs.get("epsilon", 0.0)))
    if kind == "relu":
        return ops.relu(inputs[0])
    if kind in ("maxpool", "avgpool"):
        stride = node.attrs.get("stride", node.attrs.get("window"))
        return ops.pool(inputs[0], kind[:3], node.attr_pair("window"), stride,
                        node.attr_pair("pad", 0))
    if kind == "add":
        return ops.add_elementwise(inputs[0], inputs[1])
    if kind == "concat":
        return ops.concat_channels(inputs[0], inputs[1])
    raise GraphError(f"node {node.name}: unknown kind {kind!r}")


def effective_output(g: Graph, node: LayerSpec) -> str:
    """A layer's output as it feeds forward: the relu output when the layer
    is solely consumed by a relu (fused view), else the layer's own tensor."""
    out = node.outputs[0]
    consumers = g.consumers(out)
    if consumers and all(c.kind == "relu" for c in consumers):
        return consumers[0].outputs[0]
    return out


def execute_float(g: Graph, x: np.ndarray, capture=()) -> tuple[np.ndarray, dict]:
    """Float32 forward pass; captures the requested tensors as produced.

    Captured values are pre-activation: a tensor feeding a relu node is
    recorded before the relu applies (the relu output is a separate name).
    """
    x = np.asarray(x, dtype=np.float32)
    expect = g.shapes[g.input_name]
    if x.shape[1:] != tuple(expect[1:]):
        raise GraphError(f"input shape {x.shape} incompatible with graph input {expect}")
    capture = set(capture)
    values = {g.input_name: x}
    captured = {}
    if g.input_name in capture:
        captured[g.input_name] = x
    for node in g.nodes:
        out = _run_node(node, [values[t] for t in node.inputs], g.params)
        values[node.outputs[0]] = out
        if node.outputs[0] in capture:
            captured[node.outputs[0]] = out
    return values[g.output_name], captured
