"""Fractional-length determination from channel statistics.

The MAX rule reserves integer bits for the observed extreme value; the
moment-based rules fit a density to the channel's mean/sigma and pick the
integer fractional length minimizing expected squared quantization error
(granular error inside the representable range plus overload error from
saturating the tails). A small kNN over standardized absolute moments
selects the best-fit family per channel.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import pdfs
from .fixedpoint import FL_MAX, QFormat, dequantize, fl_from_max, quantize
from .profiling import ChannelStats, standardized_moments, stats_from_samples

DEFAULT_PANELS = 200_000
GRID_HALF_WIDTH = 30.0  # integration span in scale units, per family support


def _grid(model: pdfs.PdfModel, panels: int):
    half = max(model.half_support if np.isfinite(model.half_support) else 0.0, GRID_HALF_WIDTH)
    span = half * model.scale
    lo, hi = model.location - span, model.location + span
    h = (hi - lo) / panels
    xs = lo + (np.arange(panels) + 0.5) * h
    return xs, pdfs.density(model, xs), h


class _NoiseGrid:
    """Composite-midpoint noise integral over a fixed grid, evaluated per
    format by aggregating panels into quantization cells via prefix sums.

    Regrouping sum_i w_i (x_i - Q(x_i))^2 by the cell each midpoint lands
    in gives the identical quantity; with <= 2^B cells per format this is
    hundreds of times cheaper than re-quantizing the whole grid per fl.
    """

    def __init__(self, model: pdfs.PdfModel, panels: int = DEFAULT_PANELS):
        self.xs, p, h = _grid(model, panels)
        w = p * h
        self.s0 = np.concatenate([[0.0], np.cumsum(w)])
        self.s1 = np.concatenate([[0.0], np.cumsum(w * self.xs)])
        self.s2 = np.concatenate([[0.0], np.cumsum(w * self.xs**2)])

    def noise(self, q: QFormat) -> float:
        xs = self.xs
        step = 2.0**-q.frac_len
        scale = 2.0**q.frac_len
        k_lo = int(np.clip(np.rint(xs[0] * scale), q.min_code, q.max_code))
        k_hi = int(np.clip(np.rint(xs[-1] * scale), q.min_code, q.max_code))
        # cell k holds values rounding (then saturating) to code k
        edges = (np.arange(k_lo, k_hi) + 0.5) * step
        idx = np.searchsorted(xs, edges, side="left")
        bounds = np.concatenate([[0], idx, [len(xs)]])
        lo, hi = bounds[:-1], bounds[1:]
        v = np.arange(k_lo, k_hi + 1) * step
        m0 = self.s0[hi] - self.s0[lo]
        m1 = self.s1[hi] - self.s1[lo]
        m2 = self.s2[hi] - self.s2[lo]
        return float(np.sum(m2 - 2.0 * v * m1 + v * v * m0))


def sqnr_noise(model: pdfs.PdfModel, q: QFormat, panels: int = DEFAULT_PANELS) -> float:
    """Expected squared quantization error of the model under the format.

    Composite midpoint quadrature over location +/- max(support, 30) scale
    units; saturation to the extreme code is the overload behavior.
    """
    return _NoiseGrid(model, panels).noise(q)


def _scan_lower_bound(xs, bit_width: int, signed) -> int:
    # Any fl whose range covers twice the grid extent dominates all coarser
    # fls pointwise (dyadic grids nest and neither saturates there), so the
    # argmin scan can start at the finest such fl.
    span = max(abs(float(xs[0])), abs(float(xs[-1])))
    return fl_from_max(2.0 * span, bit_width, signed)


def optimal_fl(stats: ChannelStats, family: str, bit_width: int = 8,
               signed: bool = True, channel: int = 0,
               panels: int = DEFAULT_PANELS) -> int:
    """SQNR-optimal integer fractional length for one channel.

    Balances granular against overload error by explicit argmin over
    integer fls; ties break toward the smaller fl (wider range). Channels
    with sigma == 0 fall back to the MAX rule.
    """
    sigma = float(stats.sigma[channel])
    if sigma <= 0:
        return fl_from_max(float(stats.max_abs[channel]), bit_width, signed)
    model = fit_pdf(stats, family, channel=channel)
    grid = _NoiseGrid(model, panels)
    best_fl, best_noise = None, np.inf
    for fl in range(_scan_lower_bound(grid.xs, bit_width, signed), FL_MAX + 1):
        noise = grid.noise(QFormat(bit_width, fl, signed))
        if noise < best_noise:
            best_fl, best_noise = fl, noise
    return best_fl


def fit_pdf(stats: ChannelStats, family: str, channel: int = 0) -> pdfs.PdfModel:
    """Fit a density of the family to the channel's mean and sigma."""
    sigma = float(stats.sigma[channel])
    if sigma <= 0:
        raise ValueError("cannot fit a density to a degenerate (sigma == 0) channel")
    return pdfs.fit_pdf(float(stats.mean[channel]), sigma, family)


def empirical_quant_mse(samples: np.ndarray, q: QFormat) -> float:
    """Mean squared quantize-dequantize error over observed samples."""
    samples = np.asarray(samples, dtype=np.float64)
    back = dequantize(quantize(samples, q), q)
    return float(np.mean((samples - back) ** 2))


LABEL_FAMILIES = ("laplace", "super_cauchy")


def label_channel(samples, bit_width: int = 8, signed: bool = True) -> str:
    """Best-fit family for a channel: lowest empirical MSE at each family's
    optimal fl. Ties go to laplace."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 100:
        raise ValueError(f"need at least 100 samples to label a channel, got {samples.size}")
    stats = stats_from_samples(samples)
    if float(stats.sigma[0]) <= 0:
        raise ValueError("cannot label a degenerate (sigma == 0) channel")
    best = None
    for family in LABEL_FAMILIES:  # laplace first, so ties keep laplace
        fl = optimal_fl(stats, family, bit_width, signed)
        mse = empirical_quant_mse(samples, QFormat(bit_width, fl, signed))
        if best is None or mse < best[0]:
            best = (mse, family)
    return best[1]


# ---------------------------------------------------------------------------
# Best-fit-family classifier (kNN over standardized moment features)
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    points: np.ndarray  # [N, F], z-score normalized
    labels: list
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    k: int = 12


def train_knn(features: np.ndarray, labels, k: int = 12) -> KnnModel:
    """Fit a k-nearest-neighbors model over z-score-normalized features."""
    features = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if len(labels) < k:
        raise ValueError(f"need at least k={k} training entries, got {len(labels)}")
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return KnnModel(points=(features - mu) / sd, labels=labels, feat_mean=mu, feat_scale=sd, k=k)


def classify_pdf(features, model: KnnModel) -> str:
    """Majority vote among the k nearest training points; ties -> laplace."""
    f = (np.asarray(features, dtype=np.float64) - model.feat_mean) / model.feat_scale
    d2 = np.sum((model.points - f) ** 2, axis=1)
    nearest = np.argsort(d2, kind="stable")[: model.k]
    votes = Counter(model.labels[i] for i in nearest)
    top = max(votes.values())
    winners = sorted(lbl for lbl, c in votes.items() if c == top)
    return "laplace" if "laplace" in winners else winners[0]


def build_labeled_corpus(n_channels: int, seed: int, samples_per_channel: int = 20_000,
                         bit_width: int = 8, scale_log2_range: tuple = (-4.0, 4.0)):
    """Synthetic labeled channels: half laplace, half heavy-tailed draws,
    varied scales; labels from :func:`label_channel`.

    Returns (features [N, 5], labels list, true_families list).
    """
    rng = np.random.default_rng(seed)
    feats, labels, true = [], [], []
    for i in range(n_channels):
        family = LABEL_FAMILIES[i % 2]
        sigma = 2.0 ** rng.uniform(*scale_log2_range)
        model = pdfs.fit_pdf(0.0, sigma, family)
        samples = pdfs.sample(model, samples_per_channel, rng)
        stats = stats_from_samples(samples)
        feats.append(standardized_moments(stats)[0])
        labels.append(label_channel(samples, bit_width))
        true.append(family)
    return np.array(feats), labels, true


_DEFAULT_KNN: dict[int, KnnModel] = {}


def default_classifier(bit_width: int = 8) -> KnnModel:
    """Shared classifier for the PDF-aware mode.

    The 8-bit model ships with the package (a frozen synthetic corpus);
    other bit widths build a fresh corpus on first use.
    """
    if bit_width not in _DEFAULT_KNN:
        if bit_width == 8:
            import json
            from importlib import resources

            raw = resources.files("chanq").joinpath("data/knn_default.json").read_text()
            doc = json.loads(raw)
            _DEFAULT_KNN[8] = train_knn(np.asarray(doc["features"]), doc["labels"], k=doc["k"])
        else:
            feats, labels, _ = build_labeled_corpus(400, seed=20240801, bit_width=bit_width)
            _DEFAULT_KNN[bit_width] = train_knn(feats, labels)
    return _DEFAULT_KNN[bit_width]
