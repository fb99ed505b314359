"""Independent brute-force oracles used to validate the analytic paths.

Nothing here shares code with the moment propagation or the update rules:
forward moments are checked by sampling actual weights, gradients by central
finite differences, and the Gamma tilted moments by 1-D quadrature on a
log-transformed axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .forward import forward_output_moments
from .posterior import GammaDist, NetworkPosterior
from .updates import GradientStore, log_z_likelihood


class OracleError(Exception):
    """An oracle failed its own convergence or sanity check."""


@dataclass
class McEstimate:
    """Sample mean/variance of the network output with standard errors."""

    mean: float
    variance: float
    mean_se: float
    variance_se: float
    samples: int


def _sample_network_output(
    net: NetworkPosterior, x: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw weight sets from the posterior and run the deterministic network."""
    z = np.tile(np.append(x, 1.0), (count, 1))
    last = len(net.layers) - 1
    for l, layer in enumerate(net.layers):
        std = np.sqrt(layer.variances)
        w = layer.means + std * rng.standard_normal((count, *layer.means.shape))
        a = np.einsum("nrc,nc->nr", w, z) / math.sqrt(layer.cols)
        if l < last:
            b = np.maximum(a, 0.0)
            z = np.hstack([b, np.ones((count, 1))])
    return a[:, 0]


def mc_forward_moments(
    net: NetworkPosterior,
    x: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 20000,
) -> McEstimate:
    """Monte-Carlo estimate of the output mean and variance under the posterior.

    Sampling runs in chunks on spawned substreams and the power sums are merged
    deterministically, so the estimate does not depend on chunk scheduling.
    """
    if samples < 10_000:
        raise ValueError("use at least 10^4 samples for a meaningful oracle")
    n_chunks = math.ceil(samples / chunk)
    streams = rng.spawn(n_chunks)
    s1 = s2 = s3 = s4 = 0.0
    remaining = samples
    for stream in streams:
        count = min(chunk, remaining)
        remaining -= count
        out = _sample_network_output(net, x, count, stream)
        s1 += float(out.sum())
        s2 += float((out**2).sum())
        s3 += float((out**3).sum())
        s4 += float((out**4).sum())

    n = samples
    mean = s1 / n
    m2 = s2 / n - mean**2
    variance = m2 * n / (n - 1)
    # Central fourth moment via the raw power sums.
    m4 = (s4 - 4 * mean * s3 + 6 * mean**2 * s2 - 4 * mean**3 * s1) / n + mean**4
    mean_se = math.sqrt(max(m2, 0.0) / n)
    variance_se = math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    return McEstimate(mean, variance, mean_se, variance_se, samples)


def fd_logz_gradients(
    net: NetworkPosterior, x: np.ndarray, y: float, step: float = 1e-5
) -> GradientStore:
    """Central finite differences of the likelihood log Z per weight parameter.

    Step size is relative: h = step * max(1, |theta|), clipped for variances so
    the downward evaluation stays positive.
    """

    def logz(n: NetworkPosterior) -> float:
        mz, vz, _ = forward_output_moments(n, x)
        return log_z_likelihood(y, mz, vz, n.gamma, 0)

    work = net.clone()
    d_means, d_variances = [], []
    for layer in work.layers:
        dm = np.zeros_like(layer.means)
        dv = np.zeros_like(layer.variances)
        for i in range(layer.rows):
            for j in range(layer.cols):
                theta = layer.means[i, j]
                h = step * max(1.0, abs(theta))
                layer.means[i, j] = theta + h
                up = logz(work)
                layer.means[i, j] = theta - h
                down = logz(work)
                layer.means[i, j] = theta
                dm[i, j] = (up - down) / (2 * h)

                theta = layer.variances[i, j]
                h = min(step * max(1.0, abs(theta)), 0.5 * theta)
                if h <= 0.0:
                    raise OracleError(f"variance step underflow at {theta}")
                layer.variances[i, j] = theta + h
                up = logz(work)
                layer.variances[i, j] = theta - h
                down = logz(work)
                layer.variances[i, j] = theta
                dv[i, j] = (up - down) / (2 * h)
        d_means.append(dm)
        d_variances.append(dv)
    return GradientStore(d_means, d_variances)


def gamma_tilted_moments_quadrature(
    g: GammaDist, factor, rel_tol: float = 1e-9
) -> tuple[float, float]:
    """First two moments of s(x) ∝ factor(x) * Gamma(x | shape, rate).

    Integrates on t = log x so both tails decay at least exponentially; each
    integral is shifted by its own maximum to stay in range. factor must be
    positive and integrable against the Gamma density.
    """
    a, b = g.shape, g.rate
    if b <= 0.0:
        raise ValueError("quadrature needs a proper Gamma (rate > 0)")
    t0 = math.log(a / b)
    lo, hi = t0 - 70.0, t0 + 70.0
    log_gamma_const = a * math.log(b) - gammaln(a)

    def log_integrand(t: float, k: int) -> float:
        lam = math.exp(t)
        f = factor(lam)
        if f < 0.0:
            raise OracleError("factor must be nonnegative")
        if f == 0.0:
            return -math.inf
        # log Gamma pdf + log-axis Jacobian contributes a*t - b*lam.
        return k * t + math.log(f) + log_gamma_const + a * t - b * lam

    grid = np.linspace(lo, hi, 512)
    results = []
    for k in (0, 1, 2):
        shift = max(log_integrand(t, k) for t in grid)
        if not math.isfinite(shift):
            raise OracleError("integrand vanished everywhere on the grid")
        val, err = quad(
            lambda t: math.exp(log_integrand(t, k) - shift),
            lo,
            hi,
            epsabs=0.0,
            epsrel=rel_tol,
            limit=400,
        )
        if val <= 0.0 or err > 10 * rel_tol * val:
            raise OracleError(f"non-convergent integral (k={k}, val={val}, err={err})")
        results.append((shift, val))

    (c0, i0), (c1, i1), (c2, i2) = results
    first = math.exp(c1 - c0) * i1 / i0
    second = math.exp(c2 - c0) * i2 / i0
    return first, second
