"""Graph IR: model files, batch-norm folding, float execution with capture.

Builds a conv+batchnorm+relu model in memory, folds the batchnorm into
the convolution, and shows the roundtrip through the manifest/blob file
pair.
"""

import tempfile
from pathlib import Path

import numpy as np

from chanq.graph import Graph, LayerSpec, execute_float, fold_batchnorm, load_model, save_model, validate

rng = np.random.default_rng(1)
conv = LayerSpec("conv1", "conv", ["image"], ["pre"],
                 attrs={"stride": [1, 1], "pad": [1, 1]},
                 params={"weight": "conv1.weight", "bias": "conv1.bias"})
bn = LayerSpec("bn1", "batchnorm", ["pre"], ["normed"], attrs={"epsilon": 1e-5},
               params={"gamma": "bn1.gamma", "beta": "bn1.beta",
                       "mean": "bn1.mean", "var": "bn1.var"})
relu = LayerSpec("relu1", "relu", ["normed"], ["act"])

g = validate(Graph(
    input_name="image",
    input_dims=(1, 3, 8, 8),
    nodes=[conv, bn, relu],
    params={
        "conv1.weight": rng.normal(0, 0.3, (4, 3, 3, 3)).astype(np.float32),
        "conv1.bias": rng.normal(0, 0.1, 4).astype(np.float32),
        "bn1.gamma": rng.uniform(0.5, 1.5, 4).astype(np.float32),
        "bn1.beta": rng.normal(0, 0.2, 4).astype(np.float32),
        "bn1.mean": rng.normal(0, 0.5, 4).astype(np.float32),
        "bn1.var": rng.uniform(0.2, 2.0, 4).astype(np.float32),
    },
))
print("nodes:", [(n.name, n.kind) for n in g.nodes])
print("inferred shapes:", g.shapes)

x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
out, caps = execute_float(g, x, capture={"pre", "act"})
print(f"\ncaptured 'pre' contains negatives: {bool((caps['pre'] < 0).any())}")
print(f"captured 'act' (post-relu) contains negatives: {bool((caps['act'] < 0).any())}")

folded = fold_batchnorm(g)
print("\nafter folding:", [(n.name, n.kind) for n in folded.nodes])
out2, _ = execute_float(folded, x)
print("max |folded - original| =", float(np.abs(out2 - out).max()))

with tempfile.TemporaryDirectory() as d:
    save_model(folded, Path(d) / "model.json", Path(d) / "weights.bin")
    reloaded = load_model(Path(d) / "model.json")
    out3, _ = execute_float(reloaded, x)
    print("reload is bit-exact:", bool((out3 == out2).all()))
