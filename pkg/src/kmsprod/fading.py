"""Single kappa-mu shadowed link: parameters, PDF, Mellin transform, CDF, sampler.

The power PDF is theta * x^(mu-1) * exp(-a x) * 1F1(m; mu; a c x) with the
reparameterization a = mu(1+kappa)/gamma_bar, c = mu kappa/(mu kappa + m),
b = (m/(mu kappa + m))^m, theta = a^mu b / Gamma(mu).  Evaluation is done in
log space with a rescaled 1F1 accumulation so large arguments neither
overflow nor lose the exp(-a x) / 1F1 balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import MellinStripError, NonConvergenceError, ParameterError
from .specfun import DEFAULT_POLICY, SeriesValue, TruncationPolicy, gauss_2f1

_RESCALE = 1e280
_LOG_RESCALE = math.log(_RESCALE)


@dataclass(frozen=True)
class ShadowedParams:
    """One kappa-mu shadowed link (linear power units).

    kappa: dominant-to-scattered power ratio, >= 0
    mu: real-valued multipath cluster number, > 0
    m: LOS shadowing shape, > 0
    gamma_bar: mean power / SNR, > 0
    """

    kappa: float
    mu: float
    m: float
    gamma_bar: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "mu", "m", "gamma_bar"):
            v = getattr(self, name)
            try:
                v = float(v)
            except (TypeError, ValueError):
                raise ParameterError(f"{name} must be a number, got {v!r}") from None
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.kappa < 0:
            raise ParameterError(f"kappa must be >= 0, got {self.kappa}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if self.m <= 0:
            raise ParameterError(f"m must be > 0, got {self.m}")
        if self.gamma_bar <= 0:
            raise ParameterError(f"gamma_bar must be > 0, got {self.gamma_bar}")


@dataclass(frozen=True)
class DerivedCoeffs:
    """Reparameterized link coefficients; b == (1-c)^m holds exactly."""

    a: float
    b: float
    c: float
    theta: float


def derive_coeffs(p: ShadowedParams) -> DerivedCoeffs:
    a = p.mu * (1.0 + p.kappa) / p.gamma_bar
    denom = p.mu * p.kappa + p.m
    c = p.mu * p.kappa / denom
    b = math.exp(p.m * (math.log(p.m) - math.log(denom)))
    theta = math.exp(p.mu * math.log(a) - math.lgamma(p.mu)) * b
    return DerivedCoeffs(a=a, b=b, c=c, theta=theta)


def _log_theta(p: ShadowedParams) -> float:
    a = p.mu * (1.0 + p.kappa) / p.gamma_bar
    denom = p.mu * p.kappa + p.m
    return (
        p.mu * math.log(a)
        + p.m * (math.log(p.m) - math.log(denom))
        - math.lgamma(p.mu)
    )


def _log_pdf_upper_bound(p: ShadowedParams, dc: DerivedCoeffs, x):
    """Generous upper bound on log pdf: e^{-ax} 1F1(m; mu; acx) decays like
    e^{-a(1-c)x} times an algebraic factor.  Used to skip series work for
    points that underflow to zero anyway."""
    z = dc.a * dc.c * x
    return (
        _log_theta(p)
        + (p.mu - 1.0) * np.log(x)
        - dc.a * (1.0 - dc.c) * x
        + (abs(p.m - p.mu) + 1.0) * np.log1p(z)
        + 50.0
    )


def pdf_single(
    p: ShadowedParams, x: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> SeriesValue:
    """Density at x > 0.  All 1F1 terms are positive, so max_term_ratio <= 1."""
    if not x > 0.0:
        raise ParameterError(f"pdf_single requires x > 0, got {x}")
    dc = derive_coeffs(p)
    if float(_log_pdf_upper_bound(p, dc, x)) < -746.0:
        return SeriesValue(0.0, 1, 0.0, 0.0, True)
    z = dc.a * dc.c * x
    # rescaled positive-term 1F1 accumulation
    t = 1.0
    s = 1.0
    scale = 0.0
    k = 0
    # the 1F1 argument sets how many terms the series needs; honor the policy
    # tolerances but budget terms by z.
    budget = max(policy.max_terms, int(4 * z) + 200)
    small = 0
    max_ratio = 1.0  # k = 0 term over the (so far) unit sum
    while True:
        r = (p.m + k) * z / ((p.mu + k) * (k + 1.0))
        t *= r
        k += 1
        s += t
        max_ratio = max(max_ratio, t / s)
        if s > _RESCALE:
            s /= _RESCALE
            t /= _RESCALE
            scale += _LOG_RESCALE
        if r < 1.0 and t <= policy.rel_tol * s + policy.abs_tol:
            small += 1
            if small >= policy.consecutive_small:
                break
        else:
            small = 0
        if k >= budget:
            raise NonConvergenceError(f"1F1 not converged after {k} terms (z={z})")
    log_pdf = _log_theta(p) + (p.mu - 1.0) * math.log(x) - dc.a * x + math.log(s) + scale
    value = math.exp(log_pdf) if log_pdf < 709.0 else math.inf
    tail = value * (t / s)
    return SeriesValue(value, k + 1, tail, max_ratio, True)


def pdf_single_many(
    p: ShadowedParams,
    xs,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> np.ndarray:
    """Vectorized density; same scaled series as pdf_single, values only."""
    xs = np.asarray(xs, dtype=float)
    out_shape = xs.shape
    xs = xs.ravel()
    if np.any(xs < 0.0):
        raise ParameterError("pdf_single_many requires x >= 0")
    dc = derive_coeffs(p)
    vals = np.zeros(xs.size)
    pos = xs > 0.0
    with np.errstate(divide="ignore"):
        pos[pos] = _log_pdf_upper_bound(p, dc, xs[pos]) >= -746.0
    x = xs[pos]
    z = dc.a * dc.c * x
    n = x.size
    if n:
        t = np.ones(n)
        s = np.ones(n)
        scale = np.zeros(n)
        idx = np.arange(n)
        k = 0
        budget = max(policy.max_terms, int(4 * float(z.max(initial=0.0))) + 200)
        while idx.size:
            zi = z[idx]
            r = (p.m + k) * zi / ((p.mu + k) * (k + 1.0))
            t[idx] *= r
            s[idx] += t[idx]
            big = idx[s[idx] > _RESCALE]
            if big.size:
                s[big] /= _RESCALE
                t[big] /= _RESCALE
                scale[big] += _LOG_RESCALE
            done = (r < 1.0) & (t[idx] <= policy.rel_tol * s[idx] + policy.abs_tol)
            idx = idx[~done]
            k += 1
            if k >= budget and idx.size:
                raise NonConvergenceError(
                    f"1F1 not converged after {k} terms (max z={float(z.max())})"
                )
        log_pdf = (
            _log_theta(p)
            + (p.mu - 1.0) * np.log(x)
            - dc.a * x
            + np.log(s)
            + scale
        )
        vals[pos] = np.exp(np.minimum(log_pdf, 709.0))
    return vals.reshape(out_shape)


def mellin_single(
    p: ShadowedParams, s: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> float:
    """E[X^(s-1)] = b Gamma(s+mu-1) 2F1(m, s+mu-1; mu; c) / (Gamma(mu) a^(s-1))."""
    if not s + p.mu - 1.0 > 0.0:
        raise MellinStripError(
            f"mellin_single requires s + mu - 1 > 0, got s={s}, mu={p.mu}"
        )
    dc = derive_coeffs(p)
    hyp = gauss_2f1(p.m, s + p.mu - 1.0, p.mu, dc.c, policy)
    log_pref = (
        math.log(dc.b)
        + math.lgamma(s + p.mu - 1.0)
        - math.lgamma(p.mu)
        - (s - 1.0) * math.log(dc.a)
    )
    return math.exp(log_pref) * hyp.value


def _cdf_integrand(p: ShadowedParams, policy: TruncationPolicy):
    """(integrand, transform) pair; substitutes x = t^(1/mu) when mu < 1 so the
    x^(mu-1) endpoint singularity integrates exactly."""
    if p.mu < 1.0:
        inv_mu = 1.0 / p.mu

        def f(ts):
            ts = np.asarray(ts, dtype=float)
            xs = ts**inv_mu
            vals = pdf_single_many(p, xs, policy)
            with np.errstate(divide="ignore", invalid="ignore"):
                jac = np.where(ts > 0.0, inv_mu * ts ** (inv_mu - 1.0), 0.0)
            out = vals * jac
            # limit t -> 0: integrand -> theta / mu (finite)
            out[ts == 0.0] = math.exp(_log_theta(p)) / p.mu
            return out

        return f, lambda x: x**p.mu
    return (lambda xs: pdf_single_many(p, xs, policy)), (lambda x: x)


def cdf_single(
    p: ShadowedParams,
    x: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
    *,
    abs_tol: float = 1e-11,
) -> float:
    """P(X <= x) by adaptive quadrature of the density (no closed form used)."""
    if x < 0.0:
        raise ParameterError(f"cdf_single requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    f, tr = _cdf_integrand(p, policy)
    splits = [tr(v) for v in (p.gamma_bar, 0.1 * p.gamma_bar) if 0.0 < tr(v) < tr(x)]
    val, _ = quadrature.integrate(
        f, 0.0, tr(x), abs_tol=abs_tol, rel_tol=1e-11, initial_splits=splits
    )
    return min(val, 1.0)


def cdf_single_grid(
    p: ShadowedParams,
    xs,
    policy: TruncationPolicy = DEFAULT_POLICY,
    *,
    abs_tol: float = 1e-10,
) -> np.ndarray:
    """CDF on an ascending grid via one cumulative quadrature sweep.

    Monotone by construction (panel integrals of a nonnegative density).
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0.0):
        raise ParameterError("cdf_single_grid requires x >= 0")
    f, tr = _cdf_integrand(p, policy)
    ts = tr(xs)
    grid = np.concatenate([[0.0], ts])
    cum = quadrature.cumulative(f, grid, abs_tol=abs_tol, rel_tol=1e-10)
    return np.minimum(cum[1:], 1.0)


def sample_single(p: ShadowedParams, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw i.i.d. variates via the Gamma-Poisson mixture construction.

    The LOS shadowing xi ~ Gamma(m, mean 1) sets a conditional noncentrality
    lambda = 2 mu kappa xi; a Poisson(lambda/2) mixture of Gamma(mu + K, 1)
    realizes the conditional noncentral power, exact for any real mu > 0.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    xi = rng.gamma(shape=p.m, scale=1.0 / p.m, size=count)
    pois_mean = p.mu * p.kappa * xi  # lambda / 2
    k = rng.poisson(pois_mean)
    g = rng.gamma(shape=p.mu + k)
    return p.gamma_bar * g / (p.mu * (1.0 + p.kappa))
