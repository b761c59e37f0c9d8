"""Per-channel activation and parameter statistics over a profiling dataset.

Signed central moments up to order 6 accumulate in one streaming pass via
power sums shifted by a per-channel anchor (first value seen), which keeps
them pairwise-merge-safe and numerically stable far from zero. Odd-order
absolute central moments have no exact finite streaming form, so each
channel also retains its raw samples; merges concatenate the buffers, so
merged statistics equal whole-dataset statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from math import comb

import numpy as np

from .graph import Graph, execute_float

MAX_ORDER = 6

_FIELD_NAMES = (
    "count",
    "minv",
    "maxv",
    "max_abs",
    "mean",
    "m2",
    "m3",
    "m4",
    "m5",
    "m6",
    "nu1",
    "nu2",
    "nu3",
    "nu4",
    "nu5",
    "nu6",
)


@dataclass
class ChannelStats:
    """Derived per-channel record; every field is an array of length C.

    m2..m6 are central moments E[(x-mean)^k]; nu_k are standardized
    absolute moments E[|x-mean|^k] / sigma^k (NaN where sigma == 0).
    """

    count: np.ndarray
    minv: np.ndarray
    maxv: np.ndarray
    max_abs: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    m5: np.ndarray
    m6: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    nu3: np.ndarray
    nu4: np.ndarray
    nu5: np.ndarray
    nu6: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.mean)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.m2, 0.0))

    @property
    def degenerate(self) -> np.ndarray:
        return self.m2 <= 0.0

    def channel(self, i: int) -> "ChannelStats":
        return ChannelStats(**{f.name: getattr(self, f.name)[i : i + 1] for f in fields(self)})


def standardized_moments(stats: ChannelStats) -> np.ndarray:
    """Scale/shift-invariant feature vectors (nu1, nu3, nu4, nu5, nu6), [C, 5].

    Rows of degenerate channels (sigma == 0) are NaN; check
    ``stats.degenerate`` before use.
    """
    return np.stack([stats.nu1, stats.nu3, stats.nu4, stats.nu5, stats.nu6], axis=1)


def _rebase(sums: np.ndarray, delta: np.ndarray) -> np.ndarray:
    # sums[k] = sum((x - K)^k); returns sum((x - K')^k) for K' = K - delta.
    out = np.zeros_like(sums)
    for k in range(MAX_ORDER + 1):
        acc = np.zeros_like(sums[0])
        for j in range(k + 1):
            acc += comb(k, j) * delta ** (k - j) * sums[j]
        out[k] = acc
    return out


class StatsAccumulator:
    """Streaming per-channel accumulator; update, merge, then snapshot."""

    def __init__(self, channels: int):
        self.channels = channels
        self.count = np.zeros(channels, dtype=np.int64)
        self.minv = np.full(channels, np.inf)
        self.maxv = np.full(channels, -np.inf)
        self.shift = None  # per-channel anchor, fixed at first update
        self.sums = np.zeros((MAX_ORDER + 1, channels))
        self._chunks: list[np.ndarray] = []

    def update(self, values: np.ndarray) -> None:
        """Add samples, shape [C, M]."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != self.channels:
            raise ValueError(f"expected [C={self.channels}, M] samples, got {values.shape}")
        if values.shape[1] == 0:
            return
        if self.shift is None:
            self.shift = values[:, 0].copy()
        y = values - self.shift[:, None]
        p = np.ones_like(y)
        self.sums[0] += y.shape[1]
        for k in range(1, MAX_ORDER + 1):
            p = p * y
            self.sums[k] += p.sum(axis=1)
        self.count += values.shape[1]
        self.minv = np.minimum(self.minv, values.min(axis=1))
        self.maxv = np.maximum(self.maxv, values.max(axis=1))
        self._chunks.append(values.copy())

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        """Combine two partial accumulations; associative up to roundoff."""
        if self.channels != other.channels:
            raise ValueError("channel counts differ")
        if other.shift is None:
            return self._copy()
        if self.shift is None:
            return other._copy()
        out = self._copy()
        out.sums = self.sums + _rebase(other.sums, other.shift - self.shift)
        out.count = self.count + other.count
        out.minv = np.minimum(self.minv, other.minv)
        out.maxv = np.maximum(self.maxv, other.maxv)
        out._chunks = list(self._chunks) + list(other._chunks)
        return out

    def pooled(self) -> "StatsAccumulator":
        """Collapse all channels into one (for layer-wide formats)."""
        out = StatsAccumulator(1)
        if self.shift is None:
            return out
        anchor = self.shift[:1]
        rebased = _rebase(self.sums, self.shift - anchor[0])
        out.shift = anchor.copy()
        out.sums = rebased.sum(axis=1, keepdims=True)
        out.count = self.count.sum(keepdims=True)
        out.minv = self.minv.min(keepdims=True)
        out.maxv = self.maxv.max(keepdims=True)
        out._chunks = [c.reshape(1, -1) for c in self._chunks]
        return out

    def _copy(self) -> "StatsAccumulator":
        out = StatsAccumulator(self.channels)
        out.count = self.count.copy()
        out.minv = self.minv.copy()
        out.maxv = self.maxv.copy()
        out.shift = None if self.shift is None else self.shift.copy()
        out.sums = self.sums.copy()
        out._chunks = list(self._chunks)
        return out

    def snapshot(self) -> ChannelStats:
        if self.shift is None:
            raise ValueError("no samples accumulated")
        n = self.count.astype(np.float64)
        mean = self.shift + self.sums[1] / n
        central = _rebase(self.sums, -self.sums[1] / n)
        m = {k: central[k] / n for k in range(2, MAX_ORDER + 1)}
        sigma = np.sqrt(np.maximum(m[2], 0.0))
        buf = np.concatenate(self._chunks, axis=1)
        dev = np.abs(buf - mean[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            nu = {}
            for k in (1, 3, 5):
                nu[k] = np.where(sigma > 0, (dev**k).mean(axis=1) / sigma**k, np.nan)
            for k in (2, 4, 6):
                nu[k] = np.where(sigma > 0, m[k] / sigma**k, np.nan)
        return ChannelStats(
            count=self.count.copy(),
            minv=self.minv.copy(),
            maxv=self.maxv.copy(),
            max_abs=np.maximum(np.abs(self.minv), np.abs(self.maxv)),
            mean=mean,
            m2=m[2],
            m3=m[3],
            m4=m[4],
            m5=m[5],
            m6=m[6],
            nu1=nu[1],
            nu2=nu[2],
            nu3=nu[3],
            nu4=nu[4],
            nu5=nu[5],
            nu6=nu[6],
        )


@dataclass
class TensorStats:
    """Per-channel stats plus the tensor-pooled record (one pseudo-channel)."""

    kind: str  # activation | parameter
    per_channel: ChannelStats
    pooled: ChannelStats


def stats_from_samples(samples) -> ChannelStats:
    """One-channel stats straight from a value sequence (exact single pass)."""
    samples = np.asarray(samples, dtype=np.float64).reshape(1, -1)
    acc = StatsAccumulator(1)
    acc.update(samples)
    return acc.snapshot()


def channel_major(arr: np.ndarray) -> np.ndarray:
    """Reorder an activation tensor to [C, everything-else]."""
    if arr.ndim == 4:
        return np.moveaxis(arr, 1, 0).reshape(arr.shape[1], -1)
    if arr.ndim == 2:
        return np.ascontiguousarray(arr.T)
    raise ValueError(f"unsupported activation rank {arr.ndim}")


def collect_stats(g: Graph, dataset, include_params: bool = True) -> dict:
    """Accumulate stats for every activation tensor (and parameters) over a dataset.

    Activation statistics pool over batch and spatial positions per channel;
    parameter statistics are exact since the values are fully known.
    """
    names = g.activation_names()
    accs: dict[str, StatsAccumulator] = {}
    n_batches = 0
    for batch in dataset:
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim == 3:
            batch = batch[None]
        _, captured = execute_float(g, batch, capture=names)
        for name, value in captured.items():
            cm = channel_major(value)
            if name not in accs:
                accs[name] = StatsAccumulator(cm.shape[0])
            accs[name].update(cm)
        n_batches += 1
    if n_batches == 0:
        raise ValueError("profiling dataset is empty")

    result = {
        name: TensorStats("activation", acc.snapshot(), acc.pooled().snapshot())
        for name, acc in accs.items()
    }
    if include_params:
        for pname, arr in g.params.items():
            cm = np.asarray(arr, dtype=np.float64).reshape(arr.shape[0], -1)
            acc = StatsAccumulator(cm.shape[0])
            acc.update(cm)
            result[pname] = TensorStats("parameter", acc.snapshot(), acc.pooled().snapshot())
    return result


# ---------------------------------------------------------------------------
# JSON stats dump
# ---------------------------------------------------------------------------

def _encode_array(a: np.ndarray) -> list:
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=np.float64)]


def _decode_array(vals) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in vals], dtype=np.float64)


def _encode_stats(cs: ChannelStats) -> dict:
    return {name: _encode_array(getattr(cs, name)) for name in _FIELD_NAMES}


def _decode_stats(doc: dict) -> ChannelStats:
    kw = {name: _decode_array(doc[name]) for name in _FIELD_NAMES}
    kw["count"] = kw["count"].astype(np.int64)
    return ChannelStats(**kw)


def dump_stats(stats: dict, path) -> None:
    doc = {
        "version": 1,
        "tensors": {
            name: {
                "kind": ts.kind,
                "per_channel": _encode_stats(ts.per_channel),
                "pooled": _encode_stats(ts.pooled),
            }
            for name, ts in stats.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_stats(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported stats file version {doc.get('version')}")
    return {
        name: TensorStats(
            kind=td["kind"],
            per_channel=_decode_stats(td["per_channel"]),
            pooled=_decode_stats(td["pooled"]),
        )
        for name, td in doc["tensors"].items()
    }
