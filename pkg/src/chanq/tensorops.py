"""Full-precision reference tensor operations (NCHW layout).

These are the float32 baselines: they feed profiling, serve as the
accuracy reference for the integer engine, and double as oracles in
tests. All functions are pure; inputs are never modified.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the operation's contract."""


def _as_pair(v) -> tuple[int, int]:
    if np.isscalar(v):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride, pad) -> tuple[int, int]:
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(pad)
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"empty output: input {h}x{w}, kernel {kh}x{kw}, stride {sh},{sw}, pad {ph},{pw}"
        )
    return oh, ow


def _windows(x: np.ndarray, kh: int, kw: int, stride, pad) -> np.ndarray:
    # -> [N, C, H', W', Kh, Kw]
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(pad)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw, :, :]


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride=1, pad=0) -> np.ndarray:
    """Cross-correlation with zero padding plus per-output-channel bias."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/kernel, got {x.shape} and {kernel.shape}")
    n, ci, h, w = x.shape
    co, ck, kh, kw = kernel.shape
    if ck != ci:
        raise ShapeError(f"kernel input channels {ck} != input channels {ci}")
    if bias.shape != (co,):
        raise ShapeError(f"bias shape {bias.shape} != ({co},)")
    conv_output_hw(h, w, kh, kw, stride, pad)
    win = _windows(x, kh, kw, stride, pad)
    out = np.einsum("nihwkl,oikl->nohw", win, kernel, dtype=np.float64)
    return (out + bias[None, :, None, None]).astype(np.float32)


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride=1, pad=0) -> np.ndarray:
    """Per-channel convolution: output channel c depends only on input channel c."""
    if x.ndim != 4 or kernel.ndim != 4 or kernel.shape[1] != 1:
        raise ShapeError(f"depthwise expects kernel [C,1,Kh,Kw], got {kernel.shape}")
    n, c, h, w = x.shape
    ck, _, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"kernel channels {ck} != input channels {c}")
    if bias.shape != (c,):
        raise ShapeError(f"bias shape {bias.shape} != ({c},)")
    conv_output_hw(h, w, kh, kw, stride, pad)
    win = _windows(x, kh, kw, stride, pad)
    out = np.einsum("nchwkl,ckl->nchw", win, kernel[:, 0], dtype=np.float64)
    return (out + bias[None, :, None, None]).astype(np.float32)


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``x @ weights.T + bias``; 4-D inputs are flattened row-major."""
    if x.ndim == 4:
        x = x.reshape(x.shape[0], -1)
    if x.ndim != 2 or weights.ndim != 2:
        raise ShapeError(f"fc expects 2-D operands, got {x.shape} and {weights.shape}")
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(f"fc input dim {x.shape[1]} != weight dim {weights.shape[1]}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    return (x.astype(np.float64) @ weights.T.astype(np.float64) + bias).astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(np.float32)


def pool(x: np.ndarray, kind: str, window, stride=None, pad=0) -> np.ndarray:
    """Window reduction over spatial dims.

    Average pooling always divides by the full window size, including at
    padded borders, so the integer counterpart has a fixed shift.
    """
    if x.ndim != 4:
        raise ShapeError(f"pool expects 4-D input, got {x.shape}")
    wh, ww = _as_pair(window)
    stride = window if stride is None else stride
    conv_output_hw(x.shape[2], x.shape[3], wh, ww, stride, pad)
    win = _windows(x, wh, ww, stride, pad)
    if kind == "max":
        out = win.max(axis=(4, 5))
    elif kind == "avg":
        out = win.sum(axis=(4, 5)) / float(wh * ww)
    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    return out.astype(np.float32)


def add_elementwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add operands differ: {a.shape} vs {b.shape}")
    return (a + b).astype(np.float32)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != b.ndim or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat operands differ outside channel axis: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1).astype(np.float32)


def batchnorm(x: np.ndarray, gamma, beta, mean, var, eps: float) -> np.ndarray:
    """Per-channel inference-mode normalization: gamma*(x-mean)/sqrt(var+eps)+beta."""
    if x.ndim != 4:
        raise ShapeError(f"batchnorm expects 4-D input, got {x.shape}")
    scale = gamma / np.sqrt(var + eps)
    shape = (1, -1, 1, 1)
    out = x * scale.reshape(shape) + (beta - mean * scale).reshape(shape)
    return out.astype(np.float32)
