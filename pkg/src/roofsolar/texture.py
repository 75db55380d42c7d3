"""Gabor filtering and two-component Gaussian mixture fitting.

The Gabor kernel responds to frequency content in one direction; fitting a
two-Gaussian mixture to the intensity histogram then splits foreground
(roof) from background at the posterior-equality intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .errors import DegenerateInputError, ParameterError

__all__ = [
    "GaborParams",
    "Gmm2",
    "gabor_kernel",
    "gabor_response",
    "fit_gmm2",
    "gmm_segment",
    "posterior_split_intensity",
]

SIGMA_FLOOR = 1.0  # intensity units; prevents EM variance collapse


@dataclass(frozen=True)
class GaborParams:
    f: float = 0.1  # spatial frequency, cycles/pixel
    theta: float = 0.0  # orientation, radians
    delta_x: float = 4.0  # envelope stddev along the wave axis
    delta_y: float = 4.0
    size: int = 21

    def validate(self) -> "GaborParams":
        if not self.f > 0:
            raise ParameterError(f"frequency must be > 0, got {self.f}")
        if not (self.delta_x > 0 and self.delta_y > 0):
            raise ParameterError("envelope deltas must be > 0")
        if self.size % 2 == 0 or self.size < 1:
            raise ParameterError(f"kernel size must be odd >= 1, got {self.size}")
        return self


@dataclass(frozen=True)
class Gmm2:
    w1: float
    mu1: float
    sigma1: float
    w2: float
    mu2: float
    sigma2: float
    loglik: float
    iterations: int

    def as_dict(self) -> dict:
        return {
            "w1": self.w1,
            "mu1": self.mu1,
            "sigma1": self.sigma1,
            "w2": self.w2,
            "mu2": self.mu2,
            "sigma2": self.sigma2,
            "loglik": self.loglik,
        }


def gabor_kernel(p: GaborParams) -> np.ndarray:
    """Oriented Gabor kernel, mean-subtracted so it sums to zero.

    weights(x, y) = exp(-1/2 [x'^2/dx^2 + y'^2/dy^2]) * cos(pi f x') with
    (x', y') the coordinates rotated by theta about the kernel center.
    """
    p.validate()
    r = p.size // 2
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    c, s = np.cos(p.theta), np.sin(p.theta)
    xr = xs * c + ys * s
    yr = -xs * s + ys * c
    env = np.exp(-0.5 * (xr ** 2 / p.delta_x ** 2 + yr ** 2 / p.delta_y ** 2))
    k = env * np.cos(np.pi * p.f * xr)
    return k - k.mean()


def gabor_response(img, p: GaborParams) -> np.ndarray:
    """Magnitude of the convolution with the Gabor kernel."""
    return np.abs(raster.convolve(img, gabor_kernel(p)))


# ---------------------------------------------------------------------------
# two-component GMM over the histogram

def _normal_pdf(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    z = (x - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))


def _percentile_from_hist(hist: np.ndarray, q: float) -> float:
    cum = np.cumsum(hist)
    target = q * cum[-1]
    return float(np.searchsorted(cum, target, side="left"))


def fit_gmm2(hist, max_iter: int = 200, tol: float = 1e-6) -> Gmm2:
    """EM fit of a two-Gaussian mixture to a 256-bin histogram.

    Responsibilities are computed per bin and weighted by counts, so the fit
    is deterministic and independent of pixel ordering. Initialization is
    fixed: means at the 25th/75th intensity percentiles, equal weights,
    sigmas from the global standard deviation. Components come back in
    mu-ascending order; sigmas never drop below SIGMA_FLOOR.
    """
    h = np.asarray(hist, dtype=float)
    if h.ndim != 1 or h.size != 256:
        raise ParameterError(f"expected a 256-bin histogram, got shape {h.shape}")
    if np.count_nonzero(h) < 2:
        raise DegenerateInputError("histogram needs at least 2 nonempty bins")
    n = h.sum()
    bins = np.arange(256, dtype=float)
    g_mu = (h * bins).sum() / n
    g_sigma = max(np.sqrt((h * (bins - g_mu) ** 2).sum() / n), SIGMA_FLOOR)

    mu = np.array([_percentile_from_hist(h, 0.25), _percentile_from_hist(h, 0.75)])
    if mu[0] == mu[1]:
        mu = mu + np.array([-1.0, 1.0])
    sigma = np.array([g_sigma, g_sigma])
    w = np.array([0.5, 0.5])

    loglik = -np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        dens = np.stack([w[i] * _normal_pdf(bins, mu[i], sigma[i]) for i in (0, 1)])
        total = dens.sum(axis=0)
        total = np.maximum(total, 1e-300)
        new_loglik = float((h * np.log(total)).sum())
        resp = dens / total  # 2 x 256
        weighted = resp * h
        nk = weighted.sum(axis=1)
        nk = np.maximum(nk, 1e-12)
        mu = (weighted * bins).sum(axis=1) / nk
        var = (weighted * (bins - mu[:, None]) ** 2).sum(axis=1) / nk
        sigma = np.maximum(np.sqrt(var), SIGMA_FLOOR)
        w = nk / n
        if np.isfinite(loglik) and abs(new_loglik - loglik) <= tol * abs(loglik):
            loglik = new_loglik
            break
        loglik = new_loglik

    order = np.argsort(mu, kind="stable")
    w, mu, sigma = w[order], mu[order], sigma[order]
    return Gmm2(
        w1=float(w[0]), mu1=float(mu[0]), sigma1=float(sigma[0]),
        w2=float(w[1]), mu2=float(mu[1]), sigma2=float(sigma[1]),
        loglik=loglik, iterations=iterations,
    )


def posterior_split_intensity(model: Gmm2) -> float:
    """Intensity t* in [mu1, mu2] where the two posteriors are equal.

    Above t* component 2 (the brighter one) dominates. Found by bisection on
    the posterior difference, which changes sign exactly once inside
    [mu1, mu2].
    """
    def diff(v: float) -> float:
        d1 = model.w1 * _normal_pdf(np.array([v]), model.mu1, model.sigma1)[0]
        d2 = model.w2 * _normal_pdf(np.array([v]), model.mu2, model.sigma2)[0]
        return d2 - d1

    lo, hi = model.mu1, model.mu2
    if diff(lo) > 0:
        return lo
    if diff(hi) < 0:
        return hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if diff(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def gmm_segment(img, model: Gmm2, invert: bool = False) -> np.ndarray:
    """Assign each pixel to the mixture component with the higher posterior.

    Realized as a threshold at the posterior-equality intensity; the
    higher-mean component is foreground (255) unless ``invert``. A posterior
    tie goes to background.
    """
    a = raster.as_gray(img)
    t = posterior_split_intensity(model)
    fg = a > t
    if invert:
        fg = ~fg
    return raster.mask_from_bool(fg)
