"""Probability density models used to pick fractional lengths.

Families: laplace, gaussian, and a heavy-tailed quartic-decay density
(``super_cauchy``) truncated to a finite scale-normalized window, plus a
uniform family kept for tests. Fitting matches location to the mean and
scale to the variance; for the truncated family the scale comes from a
bisection against the numerically integrated model variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt, pi

import numpy as np
from scipy import integrate

FAMILIES = ("laplace", "gaussian", "super_cauchy", "uniform")

# Half-width of the heavy-tailed family's support, in units of its scale.
DEFAULT_TRUNCATION = 15.0


@dataclass(frozen=True)
class PdfModel:
    family: str
    location: float
    scale: float
    truncation: float | None = None  # super_cauchy only, scale-normalized

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def half_support(self) -> float:
        """Half-width used for integration grids, in scale units."""
        if self.family == "super_cauchy":
            return self.truncation if self.truncation is not None else DEFAULT_TRUNCATION
        if self.family == "uniform":
            return 1.0
        return np.inf


def _quartic_unit(u: np.ndarray) -> np.ndarray:
    # Unnormalized unit-scale heavy-tailed density; integrates to 1 over R.
    return sqrt(2.0) / (pi * (1.0 + u**4))


_Z_CACHE: dict[float, float] = {}
_V_CACHE: dict[float, float] = {}


def quartic_norm_const(truncation: float = DEFAULT_TRUNCATION) -> float:
    """Mass of the unit quartic-tail density inside +/- truncation."""
    if truncation not in _Z_CACHE:
        val, _ = integrate.quad(lambda u: sqrt(2.0) / (pi * (1.0 + u**4)), -truncation, truncation)
        _Z_CACHE[truncation] = val
    return _Z_CACHE[truncation]


def quartic_unit_variance(truncation: float = DEFAULT_TRUNCATION) -> float:
    """Variance of the truncated, renormalized unit quartic-tail density."""
    if truncation not in _V_CACHE:
        raw, _ = integrate.quad(
            lambda u: u**2 * sqrt(2.0) / (pi * (1.0 + u**4)), -truncation, truncation
        )
        _V_CACHE[truncation] = raw / quartic_norm_const(truncation)
    return _V_CACHE[truncation]


def density(model: PdfModel, x) -> np.ndarray:
    """Evaluate the model density at x (vectorized)."""
    x = np.asarray(x, dtype=np.float64)
    u = (x - model.location) / model.scale
    if model.family == "laplace":
        return np.exp(-np.abs(u)) / (2.0 * model.scale)
    if model.family == "gaussian":
        return np.exp(-0.5 * u**2) / (model.scale * sqrt(2.0 * pi))
    if model.family == "uniform":
        return np.where(np.abs(u) <= 1.0, 0.5 / model.scale, 0.0)
    t = model.truncation if model.truncation is not None else DEFAULT_TRUNCATION
    inside = np.abs(u) < t
    vals = _quartic_unit(u) / (model.scale * quartic_norm_const(t))
    return np.where(inside, vals, 0.0)


def model_variance(model: PdfModel) -> float:
    """Variance of the model; numerically integrated for the truncated family."""
    if model.family == "laplace":
        return 2.0 * model.scale**2
    if model.family == "gaussian":
        return model.scale**2
    if model.family == "uniform":
        return model.scale**2 / 3.0
    t = model.truncation if model.truncation is not None else DEFAULT_TRUNCATION
    return model.scale**2 * quartic_unit_variance(t)


def normalization(model: PdfModel, panels: int = 400_000) -> float:
    """Total mass by composite midpoint quadrature (validation aid)."""
    half = model.half_support if np.isfinite(model.half_support) else 40.0
    lo = model.location - half * model.scale
    hi = model.location + half * model.scale
    xs = lo + (np.arange(panels) + 0.5) * (hi - lo) / panels
    return float(density(model, xs).sum() * (hi - lo) / panels)


def fit_pdf(mean: float, sigma: float, family: str,
            truncation: float = DEFAULT_TRUNCATION) -> PdfModel:
    """Fit a model of the given family to a channel's mean and sigma.

    The truncated family's scale is found by bisection so that its
    numerically integrated variance matches sigma**2 to 1e-6 relative.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive to fit a density")
    if family == "laplace":
        return PdfModel("laplace", float(mean), float(sigma) / sqrt(2.0))
    if family == "gaussian":
        return PdfModel("gaussian", float(mean), float(sigma))
    if family == "uniform":
        return PdfModel("uniform", float(mean), float(sigma) * sqrt(3.0))
    if family != "super_cauchy":
        raise ValueError(f"unknown family {family!r}")
    target = float(sigma) ** 2
    lo, hi = sigma / 8.0, sigma * 8.0

    def var_at(gamma):
        return model_variance(PdfModel("super_cauchy", float(mean), gamma, truncation))

    # Variance grows monotonically with the scale.
    while var_at(lo) > target:
        lo /= 2.0
    while var_at(hi) < target:
        hi *= 2.0
    while (hi - lo) > 1e-6 * lo:
        mid = 0.5 * (lo + hi)
        if var_at(mid) < target:
            lo = mid
        else:
            hi = mid
    return PdfModel("super_cauchy", float(mean), 0.5 * (lo + hi), truncation)


_SC_INVCDF_CACHE: dict[float, tuple[np.ndarray, np.ndarray]] = {}


def sample(model: PdfModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n samples from the model."""
    if model.family == "laplace":
        return rng.laplace(model.location, model.scale, n)
    if model.family == "gaussian":
        return rng.normal(model.location, model.scale, n)
    if model.family == "uniform":
        return rng.uniform(model.location - model.scale, model.location + model.scale, n)
    t = model.truncation if model.truncation is not None else DEFAULT_TRUNCATION
    if t not in _SC_INVCDF_CACHE:
        u = np.linspace(-t, t, 2**17 + 1)
        pdf = _quartic_unit(u)
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(u))])
        cdf /= cdf[-1]
        _SC_INVCDF_CACHE[t] = (cdf, u)
    cdf, u = _SC_INVCDF_CACHE[t]
    draws = np.interp(rng.random(n), cdf, u)
    return model.location + model.scale * draws
