"""Real-argument special functions with explicit truncation control.

Every series here is summed with Neumaier compensation under a
TruncationPolicy and reports what it did (terms used, tail estimate, worst
|term|/|sum| ratio) through a SeriesValue.  All functions are pure and
re-entrant; there is no module state beyond constants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import (
    DomainError,
    NonConvergenceError,
    ParameterError,
    PoleArgumentError,
)

EULER_GAMMA = 0.5772156649015328606065121

# |term|/|sum| beyond which a double-precision sum retains no correct digits.
CANCELLATION_LIMIT = 1e12

# Distance from a nonpositive integer treated as "on the pole".
_POLE_TOL = 1e-12


class PrecisionLossWarning(UserWarning):
    """Series value is dominated by cancellation between large terms."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Controls every infinite-series evaluation in the package.

    The stopping rule: the sum is converged once `consecutive_small`
    successive terms each satisfy |term| <= rel_tol*|partial| + abs_tol.
    Reaching `max_terms` without that raises NonConvergenceError.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-300
    max_terms: int = 1000
    consecutive_small: int = 3

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise ParameterError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if not (0.0 < self.abs_tol < 1.0):
            raise ParameterError(f"abs_tol must lie in (0, 1), got {self.abs_tol}")
        if self.max_terms < 10:
            raise ParameterError(f"max_terms must be >= 10, got {self.max_terms}")
        if self.consecutive_small < 1:
            raise ParameterError(
                f"consecutive_small must be >= 1, got {self.consecutive_small}"
            )


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class SeriesValue:
    """A truncated-series result together with its evaluation diagnostics.

    max_term_ratio is the largest |term|/|value| seen; values above
    CANCELLATION_LIMIT mean the double-precision digits were consumed by
    cancellation and the value should not be trusted as-is.
    """

    value: float
    terms_used: int
    tail_estimate: float
    max_term_ratio: float
    converged: bool

    @property
    def precision_loss(self) -> bool:
        return self.max_term_ratio > CANCELLATION_LIMIT


def _finish(value, terms_used, tail, max_abs_term, converged, context=""):
    if value == 0.0:
        ratio = 0.0 if max_abs_term == 0.0 else math.inf
    else:
        ratio = max_abs_term / abs(value)
    if ratio > CANCELLATION_LIMIT:
        warnings.warn(
            f"series cancellation ratio {ratio:.2e} exceeds {CANCELLATION_LIMIT:.0e}"
            f"{'; ' + context if context else ''}",
            PrecisionLossWarning,
            stacklevel=3,
        )
    return SeriesValue(value, terms_used, tail, ratio, converged)


def sum_series(
    terms: Iterable[float],
    policy: TruncationPolicy = DEFAULT_POLICY,
    *,
    min_terms: int = 1,
    context: str = "",
) -> SeriesValue:
    """Neumaier-compensated sum of `terms` under the policy stopping rule.

    A finite iterable that exhausts on its own is summed exactly: converged
    with zero tail estimate.  `min_terms` delays the stopping rule, which
    series with a known slow start (rising terms) use to avoid a premature
    stop.
    """
    s = 0.0
    comp = 0.0
    n = 0
    small_run = 0
    max_abs = 0.0
    recent: list[float] = []
    exhausted = True
    for t in terms:
        if n >= policy.max_terms:
            raise NonConvergenceError(
                f"no convergence in {policy.max_terms} terms"
                f"{'; ' + context if context else ''}"
            )
        n += 1
        # Neumaier update
        total = s + t
        if abs(s) >= abs(t):
            comp += (s - total) + t
        else:
            comp += (t - total) + s
        s = total
        if not math.isfinite(s):
            raise NonConvergenceError(
                f"series overflowed after {n} terms{'; ' + context if context else ''}"
            )
        at = abs(t)
        if at > max_abs:
            max_abs = at
        recent.append(at)
        if len(recent) > policy.consecutive_small:
            recent.pop(0)
        if n >= min_terms and at <= policy.rel_tol * abs(s + comp) + policy.abs_tol:
            small_run += 1
            if small_run >= policy.consecutive_small:
                exhausted = False
                break
        else:
            small_run = 0
    value = s + comp
    if exhausted:
        return _finish(value, n, 0.0, max_abs, True, context)
    return _finish(value, n, max(recent), max_abs, True, context)


def _is_nonpositive_integer(x, tol=0.0):
    if x > tol:
        return False
    r = round(x)
    return r <= 0 and abs(x - r) <= tol


def _tan_pi(x):
    # tan has period pi, so reduce to the nearest integer first.
    return math.tan(math.pi * (x - round(x)))


# Asymptotic digamma: psi(x) ~ ln x - 1/(2x) - sum B_2k / (2k x^2k).
_DIGAMMA_ASYMP = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)


def digamma(x: float) -> float:
    """psi(x) for real non-pole x, relative error ~1e-14 on [1e-6, 1e6]."""
    if _is_nonpositive_integer(x, _POLE_TOL):
        raise PoleArgumentError(f"digamma pole at nonpositive integer x={x}")
    if x < 0.5:
        # psi(x) = psi(1-x) - pi/tan(pi x)
        return digamma(1.0 - x) - math.pi / _tan_pi(x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    s = 0.0
    p = inv2
    for coef in _DIGAMMA_ASYMP:
        s += coef * p
        p *= inv2
    return acc + math.log(x) - 0.5 / x + s


def ln_gamma_signed(x: float) -> tuple[float, int]:
    """(log|Gamma(x)|, sign) with the sign tracked exactly for x < 0.

    Negative arguments go through the reflection formula on log-gamma of
    1-x, so arbitrarily large negative non-integer arguments neither
    overflow nor lose the sign: sign(Gamma(x)) = (-1)^floor(x) there.
    """
    if x > 0.0:
        return math.lgamma(x), 1
    if x == math.floor(x):
        raise PoleArgumentError(f"gamma pole at nonpositive integer x={x}")
    r = x - math.floor(x)  # in (0, 1)
    # |sin(pi x)| = sin(pi r); evaluate at min(r, 1-r) to keep precision.
    log_sin = math.log(math.sin(math.pi * min(r, 1.0 - r)))
    log_abs = math.log(math.pi) - log_sin - math.lgamma(1.0 - x)
    sign = 1 if int(math.floor(x)) % 2 == 0 else -1
    return log_abs, sign


def pochhammer(a: float, k: int) -> float:
    """Rising factorial (a)_k = a (a+1) ... (a+k-1); (a)_0 = 1."""
    if k < 0 or k != int(k):
        raise DomainError(f"pochhammer order must be a nonnegative integer, got {k}")
    out = 1.0
    for j in range(int(k)):
        out *= a + j
    return out


def _terminating_index(*params):
    """Smallest n with some parameter equal to -n (series then ends at k=n)."""
    n = None
    for p in params:
        if p <= 0.0 and p == round(p):
            cand = int(-p)
            n = cand if n is None else min(n, cand)
    return n


def _gauss_2f1_terms(a, b, c, z, stop: int | None) -> Iterator[float]:
    t = 1.0
    k = 0
    while True:
        yield t
        if stop is not None and k >= stop:
            return
        t *= (a + k) * (b + k) * z / ((c + k) * (k + 1.0))
        k += 1


def gauss_2f1(
    a: float,
    b: float,
    c: float,
    z: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> SeriesValue:
    """Gauss hypergeometric series sum_k (a)_k (b)_k z^k / ((c)_k k!).

    Requires c > 0 and |z| < 1.  When a or b is a nonpositive integer the
    series is a polynomial and is summed exactly (no truncation).
    """
    if c <= 0.0:
        raise DomainError(f"gauss_2f1 requires c > 0, got c={c}")
    if abs(z) >= 1.0:
        raise DomainError(f"gauss_2f1 series requires |z| < 1, got z={z}")
    stop = _terminating_index(a, b)
    return sum_series(
        _gauss_2f1_terms(a, b, c, z, stop),
        policy,
        context=f"2F1({a},{b};{c};{z})",
    )


def gauss_2f1_db_at_neg_int(
    a: float,
    n: int,
    c: float,
    z: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> SeriesValue:
    """d/db 2F1(a, b; c; z) evaluated at b = -n for integer n >= 0.

    Term-wise derivative of the Gauss series.  For k <= n the factor (b)_k
    is nonzero at b=-n and differentiates to (-n)_k * sum_{j<k} 1/(-n+j);
    for k > n it has the single zero factor (b+n), whose removal leaves
    (-1)^n n! (k-n-1)!.  Both regimes are summed under the policy.
    """
    if n < 0 or n != int(n):
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    if c <= 0.0:
        raise DomainError(f"gauss_2f1_db_at_neg_int requires c > 0, got c={c}")
    if abs(z) >= 1.0:
        raise DomainError(f"gauss_2f1_db_at_neg_int requires |z| < 1, got z={z}")
    n = int(n)

    def terms():
        # k = 0 term is constant in b: derivative 0.
        yield 0.0
        p = 1.0  # (a)_k z^k / ((c)_k k!)
        g = 1.0  # (-n)_k
        h = 0.0  # sum_{j=0}^{k-1} 1/(-n+j)
        for k in range(1, n + 1):
            p *= (a + k - 1.0) * z / ((c + k - 1.0) * k)
            g *= -n + k - 1.0
            h += 1.0 / (-n + k - 1.0)
            yield p * g * h
        # k = n+1 seed: (a)_{n+1} z^{n+1} / ((c)_{n+1} (n+1)!) * (-1)^n n! 0!
        w = z ** (n + 1) / (n + 1.0)
        for j in range(n + 1):
            w *= (a + j) / (c + j)
        if n % 2:
            w = -w
        k = n + 1
        while True:
            yield w
            w *= (a + k) * z * (k - n) / ((c + k) * (k + 1.0))
            k += 1

    return sum_series(
        terms(),
        policy,
        min_terms=n + 2,
        context=f"d/db 2F1({a},b;{c};{z}) at b=-{n}",
    )


def _kummer_terms(a, b, z, stop: int | None) -> Iterator[float]:
    t = 1.0
    k = 0
    while True:
        yield t
        if stop is not None and k >= stop:
            return
        t *= (a + k) * z / ((b + k) * (k + 1.0))
        k += 1


def kummer_1f1(
    a: float,
    b: float,
    z: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> SeriesValue:
    """Confluent hypergeometric series sum_k (a)_k z^k / ((b)_k k!), b > 0.

    Exact for terminating a = -n.  The series is entire in z, but terms grow
    to ~e^z before decaying, so large positive z can overflow; callers that
    need e^{-x} 1F1(...; a c x) at large x should use the scaled evaluation
    in the fading module instead.
    """
    if b <= 0.0:
        raise DomainError(f"kummer_1f1 requires b > 0, got b={b}")
    stop = _terminating_index(a)
    return sum_series(
        _kummer_terms(a, b, z, stop),
        policy,
        min_terms=max(2, int(abs(z)) + 2) if stop is None else 1,
        context=f"1F1({a};{b};{z})",
    )
