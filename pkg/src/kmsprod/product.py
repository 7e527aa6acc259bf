"""Statistics of Y = X1 * X2 for two independent kappa-mu shadowed links.

The Mellin transform of Y factors into the two single-link transforms; the
PDF is the residue series over the pole ladders of Gamma(s + mu_i - 1).
Two regimes:

  non-integer mu gap: f(y) = P * sum_n [A_n y^(n+mu1-1) + B_n y^(n+mu2-1)]
  integer gap N:      f(y) = P * (sum_{n<N} A_n y^(n+mu1-1)
                               + sum_{n>=N} [C_n - D_n ln y] y^(n+mu1-1))

with P = b1 b2 / (Gamma(mu1) Gamma(mu2)).  CDF and MGF follow by term-wise
integration / Laplace transform; moments come from the Mellin transform at
integer arguments.

Numerics.  The two pole ladders cancel against each other like the I_(+v),
I_(-v) pair inside a Bessel K: individual terms reach ~exp(2 sqrt(a1 a2 y))
while the density stays O(1) or smaller, so float64 dies well inside
practically interesting y.  Every evaluation therefore runs a fast float64
pass first (coefficients assembled in log space from cancellation-free
Pfaff/Euler-transformed hypergeometric sums) and, when the observed
term-to-sum ratio crosses _ESCALATE_RATIO, repeats the sum in mpmath at a
precision sized from the observed cancellation.  max_term_ratio always
reports the honest cancellation scale of the series itself.
"""

from __future__ import annotations

import math
import threading
import warnings
from enum import Enum

import mpmath as mp
import numpy as np

from . import quadrature
from .errors import (
    CaseMismatchError,
    DomainError,
    MellinStripError,
    NonConvergenceError,
)
from .fading import ShadowedParams, derive_coeffs, mellin_single
from .specfun import (
    DEFAULT_POLICY,
    PrecisionLossWarning,
    SeriesValue,
    TruncationPolicy,
    digamma,
    gauss_2f1_db_at_neg_int,
    kummer_1f1,
    ln_gamma_signed,
    pochhammer,
)

INTEGER_GAP_TOL = 1e-8
ILL_CONDITIONED_GAP = 1e-3

# double-pass cancellation ratio beyond which the sum is redone in mpmath
# (observed float64 term noise is up to ~3e-13 * ratio for the integer-gap
# coefficients, so this keeps the fast path at ~3e-8 relative or better)
_ESCALATE_RATIO = 1e5
# refuse escalation beyond this many decimal digits of cancellation
_MAX_ESCALATION_DIGITS = 20000

_RESCALE = 1e280
_LOG_RESCALE = math.log(_RESCALE)
_LN10 = math.log(10.0)

# mpmath's working precision is process-global, so escalated evaluations are
# serialized; the float64 fast path stays fully concurrent
_MP_EVAL_LOCK = threading.Lock()

# relative tolerance for internal hypergeometric factor sums: coefficients
# should be as exact as doubles allow, whatever the caller's policy says
_FACTOR_REL_TOL = 5e-17
_FACTOR_BUDGET = 200000

# largest a1*a2/(-s) for which the MGF ladder is summed directly
_MGF_SERIES_CAP = 400.0


class IllConditionedGapWarning(UserWarning):
    """mu gap within (1e-8, 1e-3) of an integer: case-1 coefficients nearly cancel."""


class GapCase(Enum):
    NON_INTEGER = "non-integer"
    INTEGER = "integer"


def _sort_key(p: ShadowedParams):
    return (p.mu, p.kappa, p.m, p.gamma_bar)


class ProductModel:
    """Ordered pair of links plus the pole-structure classification.

    Links are stored with mu2 >= mu1; Y is symmetric, so evaluated
    statistics never depend on the input order.  Series coefficients are
    cached per model, append-only under a lock, so concurrent readers are
    safe.
    """

    def __init__(self, link1: ShadowedParams, link2: ShadowedParams):
        lo, hi = sorted((link1, link2), key=_sort_key)
        self.link1 = lo
        self.link2 = hi
        self.gap = hi.mu - lo.mu
        nearest = round(self.gap)
        offset = abs(self.gap - nearest)
        if offset <= INTEGER_GAP_TOL:
            self.case = GapCase.INTEGER
            self.N = int(nearest)
        else:
            self.case = GapCase.NON_INTEGER
            self.N = None
            if offset < ILL_CONDITIONED_GAP:
                warnings.warn(
                    f"mu gap {self.gap} is within {ILL_CONDITIONED_GAP} of an "
                    "integer; case-1 coefficients are nearly singular",
                    IllConditionedGapWarning,
                    stacklevel=2,
                )
        self.coeffs1 = derive_coeffs(lo)
        self.coeffs2 = derive_coeffs(hi)
        self.log_aa = math.log(self.coeffs1.a) + math.log(self.coeffs2.a)
        # log of P = b1 b2 / (Gamma(mu1) Gamma(mu2))
        self.log_prefactor = (
            math.log(self.coeffs1.b)
            + math.log(self.coeffs2.b)
            - math.lgamma(lo.mu)
            - math.lgamma(hi.mu)
        )
        self._lock = threading.Lock()
        self._A: list[tuple[float, int]] = []  # (log|.|, sign)
        self._B: list[tuple[float, int]] = []
        self._C: list[tuple[float, int]] = []  # stored at index n - N
        self._D: list[tuple[float, int]] = []
        self._mp_dps = 0
        self._mp_state = None
        self._mp_A: list = []
        self._mp_B: list = []
        self._mp_C: list = []
        self._mp_D: list = []

    def __repr__(self):
        tag = (
            f"IntegerGap(N={self.N})"
            if self.case is GapCase.INTEGER
            else f"NonIntegerGap(gap={self.gap:.6g})"
        )
        return f"ProductModel({self.link1}, {self.link2}, {tag})"

    @property
    def mean(self) -> float:
        return self.link1.gamma_bar * self.link2.gamma_bar


# ---------------------------------------------------------------------------
# stable log-space hypergeometric factors (float64 path)
# ---------------------------------------------------------------------------


def _signed_scaled_sum(factors, budget, context):
    """Sum 1 + sum_k prod_{j<=k} r_j with rescaling; returns (log|S|, sign).

    `factors` yields successive term ratios r_k = t_{k+1}/t_k.  Positive and
    negative mass accumulate separately so the scale bookkeeping survives
    any sign pattern.
    """
    sp = 1.0
    sn = 0.0
    t = 1.0
    scale = 0.0
    small = 0
    k = 0
    for r in factors:
        t *= r
        if t >= 0.0:
            sp += t
        else:
            sn -= t
        k += 1
        if sp > _RESCALE or sn > _RESCALE:
            sp /= _RESCALE
            sn /= _RESCALE
            t /= _RESCALE
            scale += _LOG_RESCALE
        if abs(t) <= _FACTOR_REL_TOL * (sp + sn) + 1e-305:
            small += 1
            if small >= 3:
                break
        else:
            small = 0
        if k >= budget:
            raise NonConvergenceError(f"factor series stalled after {k} terms; {context}")
    v = sp - sn
    if v == 0.0:
        return -math.inf, 1
    return math.log(abs(v)) + scale, (1 if v > 0.0 else -1)


def _log_2f1_terminating(alpha, n, gamma_, z):
    """(log|.|, sign) of 2F1(alpha, -n; gamma; z), integer n >= 0, 0 <= z < 1.

    Pfaff transform: (1-z)^n 2F1(gamma-alpha, -n; gamma; z/(z-1)); the
    mapped argument is negative, which pairs with (-n)_k to keep the finite
    sum essentially cancellation-free.
    """
    if n == 0 or z == 0.0:
        return 0.0, 1
    w = z / (z - 1.0)
    gen = (
        (gamma_ - alpha + k) * (-n + k) * w / ((gamma_ + k) * (k + 1.0))
        for k in range(n)
    )
    log_s, sign = _signed_scaled_sum(gen, n + 1, f"pfaff 2F1 n={n}")
    return log_s + n * math.log1p(-z), sign


def _log_2f1_euler(alpha, b, gamma_, z, budget=_FACTOR_BUDGET):
    """(log|.|, sign) of 2F1(alpha, b; gamma; z) via the Euler transform
    (1-z)^(gamma-alpha-b) 2F1(gamma-alpha, gamma-b; gamma; z).

    Used for the non-terminating factor with large negative b, where
    gamma - b grows positively and the transformed series carries no
    n-dependent sign alternation.
    """
    if z == 0.0:
        return 0.0, 1
    a2 = gamma_ - alpha
    b2 = gamma_ - b

    def factors():
        k = 0
        while True:
            yield (a2 + k) * (b2 + k) * z / ((gamma_ + k) * (k + 1.0))
            k += 1

    log_s, sign = _signed_scaled_sum(factors(), budget, f"euler 2F1 b={b}")
    return log_s + (gamma_ - alpha - b) * math.log1p(-z), sign


def _mul_signed(*parts):
    log_abs = 0.0
    sign = 1
    for la, sa in parts:
        log_abs += la
        sign *= sa
    return log_abs, sign


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

_COEFF_POLICY = TruncationPolicy(rel_tol=1e-15, abs_tol=1e-300, max_terms=60000)


def _case1_pair(model: ProductModel, n: int):
    p1, p2 = model.link1, model.link2
    d1, d2 = model.coeffs1, model.coeffs2
    gap = model.gap
    lgn = math.lgamma(n + 1.0)
    odd = -1 if n % 2 else 1

    la, sa = _mul_signed(
        ln_gamma_signed(gap - n),
        _log_2f1_terminating(p1.m, n, p1.mu, d1.c),
        _log_2f1_euler(p2.m, gap - n, p2.mu, d2.c),
    )
    a_n = ((n + p1.mu) * model.log_aa + la - lgn, sa * odd)

    lb, sb = _mul_signed(
        ln_gamma_signed(-gap - n),
        _log_2f1_euler(p1.m, -gap - n, p1.mu, d1.c),
        _log_2f1_terminating(p2.m, n, p2.mu, d2.c),
    )
    b_n = ((n + p2.mu) * model.log_aa + lb - lgn, sb * odd)
    return a_n, b_n


def _case2_head(model: ProductModel, n: int):
    """A_n for n < N (simple poles); Gamma(gap - n) = (N - n - 1)! exactly."""
    p1, p2 = model.link1, model.link2
    d1, d2 = model.coeffs1, model.coeffs2
    la, sa = _mul_signed(
        (math.lgamma(model.N - n), 1),
        _log_2f1_terminating(p1.m, n, p1.mu, d1.c),
        _log_2f1_euler(p2.m, float(model.N - n), p2.mu, d2.c),
    )
    log_a = (n + p1.mu) * model.log_aa + la - math.lgamma(n + 1.0)
    return log_a, sa * (-1 if n % 2 else 1)


def _case2_pair(model: ProductModel, n: int):
    """(C_n, D_n) in signed-log form for n >= N (double poles)."""
    p1, p2 = model.link1, model.link2
    d1, d2 = model.coeffs1, model.coeffs2
    N = model.N
    lf1, sf1 = _log_2f1_terminating(p1.m, n, p1.mu, d1.c)
    lf2, sf2 = _log_2f1_terminating(p2.m, n - N, p2.mu, d2.c)
    f1 = sf1 * math.exp(lf1)
    f2 = sf2 * math.exp(lf2)
    df1 = gauss_2f1_db_at_neg_int(p1.m, n, p1.mu, d1.c, _COEFF_POLICY).value
    df2 = gauss_2f1_db_at_neg_int(p2.m, n - N, p2.mu, d2.c, _COEFF_POLICY).value
    brace = (
        df1 * f2
        + f1 * df2
        + (digamma(n + 1.0) + digamma(n - N + 1.0) - model.log_aa) * f1 * f2
    )
    log_pref = (
        (n + p1.mu) * model.log_aa - math.lgamma(n - N + 1.0) - math.lgamma(n + 1.0)
    )
    sign_pref = -1 if N % 2 else 1

    def signed_log(x):
        if x == 0.0:
            return (-math.inf, 1)
        return (log_pref + math.log(abs(x)), sign_pref * (1 if x > 0.0 else -1))

    return signed_log(brace), signed_log(f1 * f2)


def _ensure_coeffs(model: ProductModel, n: int):
    """Extend the float64 coefficient cache through series index n."""
    if model.case is GapCase.NON_INTEGER:
        if len(model._A) > n:
            return
        with model._lock:
            while len(model._A) <= n:
                a, b = _case1_pair(model, len(model._A))
                model._A.append(a)
                model._B.append(b)
    else:
        if len(model._A) >= model.N and len(model._C) > n - model.N:
            return
        with model._lock:
            while len(model._A) < model.N:
                model._A.append(_case2_head(model, len(model._A)))
            while len(model._C) <= n - model.N:
                c, d = _case2_pair(model, len(model._C) + model.N)
                model._C.append(c)
                model._D.append(d)


def _require_case2_index(model, n):
    if model.case is not GapCase.INTEGER:
        raise CaseMismatchError("C_n/D_n exist only for an integer mu gap")
    if n < model.N:
        raise CaseMismatchError(f"C_n/D_n require n >= N = {model.N}, got n={n}")


def coeff_A(model: ProductModel, n: int) -> float:
    """Residue coefficient of y^(n+mu1-1) from the Gamma(s+mu1-1) pole ladder."""
    if n < 0:
        raise DomainError("coefficient index must be >= 0")
    if model.case is GapCase.INTEGER and n >= model.N:
        raise CaseMismatchError(
            f"A_n exists for n < N = {model.N} on an integer-gap model"
        )
    _ensure_coeffs(model, n)
    log_a, sign = model._A[n]
    return sign * math.exp(log_a)


def coeff_B(model: ProductModel, n: int) -> float:
    """Residue coefficient of y^(n+mu2-1); the link-swapped mirror of A_n."""
    if n < 0:
        raise DomainError("coefficient index must be >= 0")
    if model.case is GapCase.INTEGER:
        raise CaseMismatchError("B_n exists only for a non-integer mu gap")
    _ensure_coeffs(model, n)
    log_b, sign = model._B[n]
    return sign * math.exp(log_b)


def coeff_C(model: ProductModel, n: int) -> float:
    """Double-pole coefficient (regular part) for the integer-gap case, n >= N."""
    _require_case2_index(model, n)
    _ensure_coeffs(model, n)
    log_c, sign = model._C[n - model.N]
    return sign * math.exp(log_c)


def coeff_D(model: ProductModel, n: int) -> float:
    """Double-pole coefficient multiplying -ln y, n >= N."""
    _require_case2_index(model, n)
    _ensure_coeffs(model, n)
    log_d, sign = model._D[n - model.N]
    return sign * math.exp(log_d)


# ---------------------------------------------------------------------------
# mpmath coefficient cache (escalation path)
# ---------------------------------------------------------------------------


def _mp_2f1_euler(alpha, b, gamma_, z):
    if z == 0:
        return mp.mpf(1)
    a2 = gamma_ - alpha
    b2 = gamma_ - b
    s = mp.mpf(1)
    t = mp.mpf(1)
    k = 0
    tol = mp.mpf(10) ** (-(mp.mp.dps + 5))
    while True:
        t *= (a2 + k) * (b2 + k) * z / ((gamma_ + k) * (k + 1))
        s += t
        k += 1
        if k > 4 and abs(t) < tol * abs(s):
            break
        if k > 2_000_000:
            raise NonConvergenceError("mp euler 2F1 stalled")
    return s * (1 - z) ** (gamma_ - alpha - b)


def _mp_db2f1(a, n, c, z, base_dps):
    """d/db 2F1(a,b;c;z) at b = -n in mpmath.  The k <= n block alternates
    with binomial growth ~(1+z)^n, so it gets its own precision bump."""
    bump = int(n * math.log10(1.0 + float(z))) + 10
    with mp.workdps(base_dps + bump):
        a = mp.mpf(a)
        c = mp.mpf(c)
        z = mp.mpf(z)
        s = mp.mpf(0)
        p = mp.mpf(1)
        g = mp.mpf(1)
        h = mp.mpf(0)
        for k in range(1, n + 1):
            p *= (a + k - 1) * z / ((c + k - 1) * k)
            g *= -n + k - 1
            h += mp.mpf(1) / (-n + k - 1)
            s += p * g * h
        w = z ** (n + 1) / (n + 1)
        for j in range(n + 1):
            w *= (a + j) / (c + j)
        if n % 2:
            w = -w
        k = n + 1
        tol = mp.mpf(10) ** (-(base_dps + 5))
        while True:
            s += w
            if k > n + 4 and abs(w) < tol * (abs(s) + 1):
                break
            w *= (a + k) * z * (k - n) / ((c + k) * (k + 1))
            k += 1
        out = +s
    return out


class _Contiguous:
    """Gauss 2F1 ladder F(b0 - k) advanced by the contiguous relation
    (c-b) F(b-1) + (2b-c+(a-b)z) F(b) + b(z-1) F(b+1) = 0.

    Walking b downward keeps the algebraically-decaying solution dominant
    (the contaminant dies like (1-z)^k), so the ladder is forward-stable;
    verified against direct sums over hundreds of steps.
    """

    def __init__(self, a, c, z, f_b0, f_b0_plus1, b0):
        self.a = a
        self.c = c
        self.z = z
        self.b = b0
        self.cur = f_b0
        self.prev = f_b0_plus1  # F(b0 + 1)

    def step(self):
        a, c, z, b = self.a, self.c, self.z, self.b
        nxt = -((2 * b - c + (a - b) * z) * self.cur + b * (z - 1) * self.prev) / (c - b)
        self.prev = self.cur
        self.cur = nxt
        self.b = b - 1
        return nxt


def _mp_model_params(model):
    p1, p2 = model.link1, model.link2
    mu1 = mp.mpf(p1.mu)
    mu2 = mp.mpf(p2.mu)
    m1 = mp.mpf(p1.m)
    m2 = mp.mpf(p2.m)
    aa = (
        mu1 * (1 + mp.mpf(p1.kappa)) / mp.mpf(p1.gamma_bar)
        * mu2 * (1 + mp.mpf(p2.kappa)) / mp.mpf(p2.gamma_bar)
    )
    c1 = mu1 * mp.mpf(p1.kappa) / (mu1 * mp.mpf(p1.kappa) + m1)
    c2 = mu2 * mp.mpf(p2.kappa) / (mu2 * mp.mpf(p2.kappa) + m2)
    return mu1, mu2, m1, m2, aa, c1, c2


def _ensure_mp_coeffs(model: ProductModel, n: int, dps: int):
    """Extend the mpmath coefficient cache through index n at >= dps digits.

    All 2F1 value families advance by O(1) contiguous-recurrence steps; only
    the parameter-derivative factors of the integer-gap case are summed
    directly (their ladder is unstable), with a (1+z)^n precision bump.
    """
    with model._lock:
        if dps > model._mp_dps:
            model._mp_A = []
            model._mp_B = []
            model._mp_C = []
            model._mp_D = []
            model._mp_state = None
            model._mp_dps = dps
        dps = model._mp_dps
        if model.case is GapCase.NON_INTEGER:
            done = len(model._mp_A) > n
        else:
            done = len(model._mp_A) >= model.N and len(model._mp_C) > n - model.N
        if done:
            return
        with mp.workdps(dps):
            st = getattr(model, "_mp_state", None)
            mu1, mu2, m1, m2, aa, c1, c2 = _mp_model_params(model)
            if st is None:
                gap = (
                    mu2 - mu1
                    if model.case is GapCase.NON_INTEGER
                    else mp.mpf(model.N)  # exact-limit convention of the N-pole formula
                )
                st = {
                    "k": 0,
                    # 2F1(m1, -k; mu1; c1) and 2F1(m2, N_or_gap - k; mu2; c2)
                    "f1t": _Contiguous(m1, mu1, c1, mp.mpf(1), mp.hyp2f1(m1, 1, mu1, c1), mp.mpf(0)),
                    "f2e": _Contiguous(
                        m2, mu2, c2,
                        _mp_2f1_euler(m2, gap, mu2, c2),
                        _mp_2f1_euler(m2, gap + 1, mu2, c2),
                        gap,
                    ),
                    "gamma_a": mp.gamma(gap) if model.case is GapCase.NON_INTEGER else None,
                    "fact": mp.mpf(1),
                    "pw1": aa**mu1,
                    "pw2": aa**mu2,
                    "gap": gap,
                }
                if model.case is GapCase.NON_INTEGER:
                    # B-ladder families: 2F1(m1, -gap-k; mu1; c1), 2F1(m2, -k; mu2; c2)
                    st["f1e"] = _Contiguous(
                        m1, mu1, c1,
                        _mp_2f1_euler(m1, -gap, mu1, c1),
                        _mp_2f1_euler(m1, -gap + 1, mu1, c1),
                        -gap,
                    )
                    st["f2t"] = _Contiguous(
                        m2, mu2, c2, mp.mpf(1), mp.hyp2f1(m2, 1, mu2, c2), mp.mpf(0)
                    )
                    st["gamma_b"] = mp.gamma(-gap)
                model._mp_state = st

            def factors_at_current_k():
                # ladder values for the current k (cur fields), then advance
                return st["f1t"].cur, st["f2e"].cur

            if model.case is GapCase.NON_INTEGER:
                gap = st["gap"]
                while len(model._mp_A) <= n:
                    k = st["k"]
                    sgn = -1 if k % 2 else 1
                    f1t, f2e = factors_at_current_k()
                    model._mp_A.append(
                        sgn * st["pw1"] * st["gamma_a"] / st["fact"] * f1t * f2e
                    )
                    model._mp_B.append(
                        sgn * st["pw2"] * st["gamma_b"] / st["fact"]
                        * st["f1e"].cur * st["f2t"].cur
                    )
                    # advance every ladder to k+1
                    st["gamma_a"] /= gap - k - 1
                    st["gamma_b"] /= -gap - k - 1
                    st["fact"] *= k + 1
                    st["pw1"] *= aa
                    st["pw2"] *= aa
                    st["f1t"].step()
                    st["f2e"].step()
                    st["f1e"].step()
                    st["f2t"].step()
                    st["k"] = k + 1
            else:
                N = model.N
                log_aa_mp = mp.log(aa)
                sgn_n = -1 if N % 2 else 1
                target = max(n, N - 1)
                while st["k"] <= target or len(model._mp_A) < N:
                    k = st["k"]
                    f1t, f2e = factors_at_current_k()
                    if k < N:
                        sgn = -1 if k % 2 else 1
                        model._mp_A.append(
                            sgn * st["pw1"] * mp.factorial(N - k - 1) / st["fact"]
                            * f1t * f2e
                        )
                    else:
                        # for k >= N the gap ladder value is 2F1(m2, -(k-N); mu2; c2)
                        df1 = _mp_db2f1(model.link1.m, k, model.link1.mu, c1, dps)
                        df2 = _mp_db2f1(model.link2.m, k - N, model.link2.mu, c2, dps)
                        pref = sgn_n * st["pw1"] / (mp.factorial(k - N) * st["fact"])
                        model._mp_C.append(
                            pref
                            * (
                                df1 * f2e
                                + f1t * df2
                                + (
                                    mp.digamma(k + 1)
                                    + mp.digamma(k - N + 1)
                                    - log_aa_mp
                                )
                                * f1t
                                * f2e
                            )
                        )
                        model._mp_D.append(pref * f1t * f2e)
                    st["fact"] *= k + 1
                    st["pw1"] *= aa
                    st["f1t"].step()
                    st["f2e"].step()
                    st["k"] = k + 1


def _mp_prefactor(model):
    m1 = mp.mpf(model.link1.m)
    m2 = mp.mpf(model.link2.m)
    k1 = mp.mpf(model.link1.kappa) * mp.mpf(model.link1.mu)
    k2 = mp.mpf(model.link2.kappa) * mp.mpf(model.link2.mu)
    return (
        (m1 / (k1 + m1)) ** m1
        * (m2 / (k2 + m2)) ** m2
        / (mp.gamma(model.link1.mu) * mp.gamma(model.link2.mu))
    )


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------


def _mk_series_value(value, n, tail, ratio, converged, context):
    if ratio > 1e12:
        warnings.warn(
            f"{context}: series cancellation ratio {ratio:.2e} exceeds 1e12 "
            "(beyond double precision; value from the extended-precision pass)",
            PrecisionLossWarning,
            stacklevel=4,
        )
    return SeriesValue(value, n, tail, ratio, converged)


def _double_pass(model, policy, term_fn, min_terms=2):
    """Neumaier sum of term_fn(n) -> (term, max_component, log_component).

    The stopping rule runs on the max component magnitude, the honest scale
    for the two-ladder cancellation.  Returns (value, n, tail, max_abs,
    max_log, clean); clean is False once a non-finite partial appears.
    """
    s = 0.0
    comp = 0.0
    max_abs = 0.0
    max_log = -math.inf
    recent: list[float] = []
    small = 0
    n = 0
    clean = True
    while True:
        if n >= policy.max_terms:
            raise NonConvergenceError(
                f"product series: no convergence in {policy.max_terms} terms"
            )
        t, mag, log_mag = term_fn(n)
        max_log = max(max_log, log_mag)
        n += 1
        if not math.isfinite(t):
            clean = False
            break
        total = s + t
        if abs(s) >= abs(t):
            comp += (s - total) + t
        else:
            comp += (t - total) + s
        s = total
        max_abs = max(max_abs, mag)
        recent.append(mag)
        if len(recent) > policy.consecutive_small:
            recent.pop(0)
        if n >= min_terms and mag <= policy.rel_tol * abs(s + comp) + policy.abs_tol:
            small += 1
            if small >= policy.consecutive_small:
                break
        else:
            small = 0
    return s + comp, n, (max(recent) if recent else 0.0), max_abs, max_log, clean


def _mp_ladder_sum(term_fn_mp, dps):
    """Sum term_fn_mp(n) in mpmath until terms fall 10^-(dps+5) below the peak."""
    s = mp.mpf(0)
    max_abs = mp.mpf(0)
    tol = mp.mpf(10) ** (-(dps + 5))
    n = 0
    small = 0
    while True:
        t = term_fn_mp(n)
        s += t
        a = abs(t)
        if a > max_abs:
            max_abs = a
        n += 1
        if n >= 4 and max_abs > 0 and a <= tol * max_abs:
            small += 1
            if small >= 3:
                break
        else:
            small = 0
        if n > 200000:
            raise NonConvergenceError("mp ladder sum stalled")
    return s, n, max_abs


def _eval_product_series(model, policy, kind, *, y=None, s=None):
    """Shared pdf/cdf/mgf ladder evaluation with escalation.

    kind in {"pdf", "cdf", "mgf"}; y > 0 for pdf/cdf, s < 0 for mgf.
    """
    p1, p2 = model.link1, model.link2
    mu1, mu2 = p1.mu, p2.mu
    log_pref = model.log_prefactor
    integer_case = model.case is GapCase.INTEGER
    N = model.N if integer_case else None

    if kind == "mgf":
        log_z = -math.log(-s)  # log of 1/(-s)
        ln_y = None
        lns = math.log(-s)
    else:
        ln_y = math.log(y)
        log_z = None
        lns = None

    def expterm(sign, log_t):
        if log_t < 700.0:
            return sign * math.exp(log_t)
        return sign * math.inf

    def term_double(n):
        _ensure_coeffs(model, n)
        if not integer_case:
            la, sa = model._A[n]
            lb, sb = model._B[n]
            if kind == "pdf":
                lta = la + (n + mu1 - 1.0) * ln_y
                ltb = lb + (n + mu2 - 1.0) * ln_y
            elif kind == "cdf":
                lta = la + (n + mu1) * ln_y - math.log(n + mu1)
                ltb = lb + (n + mu2) * ln_y - math.log(n + mu2)
            else:
                lta = la + math.lgamma(n + mu1) + (n + mu1) * log_z
                ltb = lb + math.lgamma(n + mu2) + (n + mu2) * log_z
            lta += log_pref
            ltb += log_pref
            ta = expterm(sa, lta)
            tb = expterm(sb, ltb)
            return ta + tb, max(abs(ta), abs(tb)), max(lta, ltb)
        if n < N:
            la, sa = model._A[n]
            if kind == "pdf":
                lt = la + (n + mu1 - 1.0) * ln_y
            elif kind == "cdf":
                lt = la + (n + mu1) * ln_y - math.log(n + mu1)
            else:
                lt = la + math.lgamma(n + mu1) + (n + mu1) * log_z
            lt += log_pref
            t = expterm(sa, lt)
            return t, abs(t), lt
        lc, sc = model._C[n - N]
        ld, sd = model._D[n - N]
        if kind == "pdf":
            base = (n + mu1 - 1.0) * ln_y + log_pref
            tc = expterm(sc, lc + base)
            td = -ln_y * expterm(sd, ld + base)
            return tc + td, max(abs(tc), abs(td)), max(lc, ld + math.log1p(abs(ln_y))) + base
        if kind == "cdf":
            base = (n + mu1) * ln_y + log_pref - math.log(n + mu1)
            tc = expterm(sc, lc + base)
            td1 = -ln_y * expterm(sd, ld + base)
            td2 = expterm(sd, ld + base) / (n + mu1)
            return (
                tc + td1 + td2,
                max(abs(tc), abs(td1), abs(td2)),
                max(lc, ld + math.log1p(abs(ln_y))) + base,
            )
        base = math.lgamma(n + mu1) + (n + mu1) * log_z + log_pref
        fac = lns - digamma(n + mu1)
        tc = expterm(sc, lc + base)
        td = fac * expterm(sd, ld + base)
        return tc + td, max(abs(tc), abs(td)), max(lc, ld + math.log1p(abs(fac))) + base

    value, n_used, tail, max_abs, max_log, clean = _double_pass(model, policy, term_double)

    needs_mp = (
        not clean
        or not math.isfinite(value)
        or (value == 0.0 and max_abs > 0.0)
        or (max_abs > _ESCALATE_RATIO * abs(value))
    )
    if not needs_mp:
        ratio = 0.0 if max_abs == 0.0 else (math.inf if value == 0.0 else max_abs / abs(value))
        return _mk_series_value(value, n_used, tail, ratio, True, f"{kind}_product")

    # ---- extended-precision pass ------------------------------------------
    if value != 0.0 and math.isfinite(value) and clean:
        guess_digits = (max_log - math.log(abs(value))) / _LN10
    else:
        guess_digits = max_log / _LN10 + 40.0
    if kind == "cdf":
        # a CDF cannot exceed 1, so the cancellation is at least max_log
        guess_digits = max(guess_digits, max_log / _LN10)
    if guess_digits > _MAX_ESCALATION_DIGITS:
        raise NonConvergenceError(
            f"{kind}_product cancellation needs ~{guess_digits:.0f} digits"
        )
    need_digits = max(15.0, -math.log10(policy.rel_tol) + 3.0)
    dps = int(guess_digits + need_digits) + 10
    with _MP_EVAL_LOCK:
        return _mp_eval(model, policy, kind, y, s, dps, need_digits, n_used)


def _mp_eval(model, policy, kind, y, s, dps, need_digits, n_used):
    p1, p2 = model.link1, model.link2
    mu1, mu2 = p1.mu, p2.mu
    integer_case = model.case is GapCase.INTEGER
    N = model.N if integer_case else None
    while True:
        _ensure_mp_coeffs(model, max(n_used + 40, 12), dps)
        with mp.workdps(dps):
            pref = _mp_prefactor(model)
            # exponents and divisors must be assembled in mpf: float-rounded
            # n + mu1 - 1 would put a coherent 1e-16 drift on every term,
            # which the ladder cancellation amplifies without bound
            u1 = mp.mpf(mu1)
            u2 = mp.mpf(mu2)
            y_mp = mp.mpf(y) if y is not None else None
            s_mp = mp.mpf(s) if s is not None else None
            lny = mp.log(y_mp) if y_mp is not None else None
            zi = -1 / s_mp if s_mp is not None else None

            def term_mp(n):
                _ensure_mp_coeffs(model, n, dps)
                if not integer_case:
                    A = model._mp_A[n]
                    B = model._mp_B[n]
                    if kind == "pdf":
                        return A * y_mp ** (n + u1 - 1) + B * y_mp ** (n + u2 - 1)
                    if kind == "cdf":
                        return (
                            A * y_mp ** (n + u1) / (n + u1)
                            + B * y_mp ** (n + u2) / (n + u2)
                        )
                    return (
                        A * mp.gamma(n + u1) * zi ** (n + u1)
                        + B * mp.gamma(n + u2) * zi ** (n + u2)
                    )
                if n < N:
                    A = model._mp_A[n]
                    if kind == "pdf":
                        return A * y_mp ** (n + u1 - 1)
                    if kind == "cdf":
                        return A * y_mp ** (n + u1) / (n + u1)
                    return A * mp.gamma(n + u1) * zi ** (n + u1)
                C = model._mp_C[n - N]
                D = model._mp_D[n - N]
                if kind == "pdf":
                    return (C - D * lny) * y_mp ** (n + u1 - 1)
                if kind == "cdf":
                    return ((C - D * lny) / (n + u1) + D / (n + u1) ** 2) * y_mp ** (
                        n + u1
                    )
                return (
                    (C + D * (mp.log(-s_mp) - mp.digamma(n + u1)))
                    * mp.gamma(n + u1)
                    * zi ** (n + u1)
                )

            total, n_mp, max_abs_mp = _mp_ladder_sum(term_mp, dps)
            total *= pref
            max_abs_mp *= pref
            if total == 0:
                v = 0.0
                ratio = math.inf if max_abs_mp > 0 else 0.0
                return _mk_series_value(v, n_mp, 0.0, ratio, True, f"{kind}_product")
            cancel_digits = float(mp.log10(max_abs_mp / abs(total)))
            if dps - cancel_digits >= need_digits:
                v = float(total)
                ratio = (
                    float(max_abs_mp / abs(total))
                    if cancel_digits < 300.0
                    else math.inf
                )
                tail_mp = abs(v) * 10.0 ** (-(dps - cancel_digits) + 1)
                return _mk_series_value(v, n_mp, tail_mp, ratio, True, f"{kind}_product")
        if cancel_digits > _MAX_ESCALATION_DIGITS:
            raise NonConvergenceError(
                f"{kind}_product cancellation needs ~{cancel_digits:.0f} digits"
            )
        dps = max(int(cancel_digits + need_digits) + 10, int(dps * 1.6))


# ---------------------------------------------------------------------------
# public statistics
# ---------------------------------------------------------------------------


def pdf_product(
    model: ProductModel, y: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> SeriesValue:
    """Density of Y at y > 0 from the residue series."""
    if not y > 0.0:
        raise DomainError(f"pdf_product requires y > 0, got {y}")
    return _eval_product_series(model, policy, "pdf", y=y)


def cdf_product(
    model: ProductModel, y: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> SeriesValue:
    """P(Y <= y) from the term-wise integrated residue series.

    If the truncated value leaves [0, 1] by more than its tail estimate it
    is reported clamped to the boundary, flagged via converged=False and a
    PrecisionLossWarning (never silently).
    """
    if y < 0.0:
        raise DomainError(f"cdf_product requires y >= 0, got {y}")
    if y == 0.0:
        return SeriesValue(0.0, 0, 0.0, 0.0, True)
    sv = _eval_product_series(model, policy, "cdf", y=y)
    if sv.value < -sv.tail_estimate or sv.value > 1.0 + sv.tail_estimate:
        clamped = min(max(sv.value, 0.0), 1.0)
        warnings.warn(
            f"cdf_product({y}) = {sv.value!r} left [0, 1] beyond its tail "
            f"estimate; reporting the clamped value {clamped}",
            PrecisionLossWarning,
            stacklevel=2,
        )
        return SeriesValue(clamped, sv.terms_used, sv.tail_estimate, sv.max_term_ratio, False)
    return sv


def _mgf_by_moments(model, s, policy):
    """M(s) = sum_k s^k E[Y^k]/k! truncated at the smallest term.

    The moment series is asymptotic in s; for |s| well below the tail scale
    the smallest term is astronomically small and the truncation is exact
    for doubles.  Returns None when the best achievable error is too big.
    """
    total = 1.0
    term = 1.0
    best_err = math.inf
    k = 1
    prev = math.inf
    while k < 80:
        term = moment_product(model, k) * (s**k) / math.factorial(k)
        if abs(term) >= prev:
            best_err = 2.0 * abs(term)
            break
        total += term
        prev = abs(term)
        if abs(term) <= 1e-17 * abs(total):
            best_err = abs(term)
            break
        k += 1
    if best_err > max(1e-9 * abs(total), policy.abs_tol):
        return None
    return SeriesValue(total, k, best_err, 1.0, True)


def _mgf_by_laplace(model, s, policy):
    """Numerical Laplace transform of the (escalated) series density."""

    def integrand(ys):
        ys = np.asarray(ys, dtype=float)
        out = np.empty_like(ys)
        for i, yi in enumerate(ys):
            out[i] = math.exp(s * yi) * pdf_product(model, yi, policy).value if yi > 0 else 0.0
        return out

    mu1 = model.link1.mu
    lo = 0.0
    head = 0.0
    head_err = 0.0
    if mu1 < 1.0:
        # integrable y^(mu1-1) singularity: substitute y = t^(1/mu1) on [0, 1]
        inv = 1.0 / mu1

        def sub(ts):
            ts = np.asarray(ts, dtype=float)
            out = np.empty_like(ts)
            for i, ti in enumerate(ts):
                if ti <= 0.0:
                    out[i] = 0.0
                    continue
                yi = ti**inv
                out[i] = math.exp(s * yi) * pdf_product(model, yi, policy).value * inv * ti ** (inv - 1.0)
            return out

        head, head_err = quadrature.integrate(sub, 0.0, 1.0, abs_tol=1e-11, rel_tol=1e-9)
        lo = 1.0
    body, body_err = quadrature.integrate_to_inf(
        integrand, lo, first_width=max(1.0, model.mean), abs_tol=1e-11, rel_tol=1e-9
    )
    total = head + body
    return SeriesValue(total, 0, head_err + body_err + 1e-12 * abs(total), 1.0, True)


def mgf_product(
    model: ProductModel, s: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> SeriesValue:
    """E[e^{sY}] for s < 0 (the transform diverges for any s > 0).

    Evaluation is tiered: the residue-ladder series where its cancellation
    stays within the extended-precision budget; otherwise the truncated
    moment expansion (asymptotic, exact for small |s|); otherwise direct
    Laplace quadrature of the series density.
    """
    if not s < 0.0:
        raise DomainError(f"mgf_product requires s < 0, got s={s}")
    ladder_scale = math.exp(model.log_aa) / (-s)
    if ladder_scale <= min(_MGF_SERIES_CAP, 0.6 * policy.max_terms):
        return _eval_product_series(model, policy, "mgf", s=s)
    by_moments = _mgf_by_moments(model, s, policy)
    if by_moments is not None:
        return by_moments
    return _mgf_by_laplace(model, s, policy)


def mellin_product(
    model: ProductModel, s: float, policy: TruncationPolicy = DEFAULT_POLICY
) -> float:
    """E[Y^(s-1)]: the product of the two single-link Mellin transforms."""
    for link in (model.link1, model.link2):
        if not s + link.mu - 1.0 > 0.0:
            raise MellinStripError(
                f"mellin_product requires s + mu - 1 > 0 for both links; "
                f"violated by mu={link.mu} at s={s}"
            )
    return mellin_single(model.link1, s, policy) * mellin_single(model.link2, s, policy)


def _moment_factor(p: ShadowedParams, c: float, n: int) -> float:
    """E[X^n] for one link: (mu)_n 2F1(mu-m, -n; mu; c) / (a(1-c))^n.

    This is the Euler-transformed (terminating) form of
    b (mu)_n 2F1(m, mu+n; mu; c) / a^n, safe for c near 1.
    """
    a = p.mu * (1.0 + p.kappa) / p.gamma_bar
    lf, sf = _log_2f1_terminating(p.mu - p.m, n, p.mu, c)
    return (
        pochhammer(p.mu, n)
        * sf
        * math.exp(lf - n * (math.log(a) + math.log1p(-c)))
    )


def moment_product(model: ProductModel, n: int) -> float:
    """E[Y^n] in closed form (independent of the residue series)."""
    if n < 0 or n != int(n):
        raise DomainError(f"moment order must be a nonnegative integer, got {n}")
    n = int(n)
    if n == 0:
        return 1.0
    return _moment_factor(model.link1, model.coeffs1.c, n) * _moment_factor(
        model.link2, model.coeffs2.c, n
    )


def moment_mixed(shadowed: ShadowedParams, km: ShadowedParams, n: int) -> float:
    """E[Y^n] for a shadowed link times a plain kappa-mu link (km.m ignored).

    The kappa-mu factor is the Kummer-transformed terminating polynomial
    1F1(-n; mu2; kappa2 mu2); the shadowed factor is the same terminating
    2F1 as in moment_product.
    """
    if n < 0 or n != int(n):
        raise DomainError(f"moment order must be a nonnegative integer, got {n}")
    n = int(n)
    if n == 0:
        return 1.0
    d1 = derive_coeffs(shadowed)
    a2 = km.mu * (1.0 + km.kappa) / km.gamma_bar
    f1 = _moment_factor(shadowed, d1.c, n)
    f2 = (
        pochhammer(km.mu, n)
        * kummer_1f1(float(-n), km.mu, km.kappa * km.mu).value
        / a2**n
    )
    return f1 * f2


# ---------------------------------------------------------------------------
# grid helpers (CLI / KS evaluation)
# ---------------------------------------------------------------------------


def pdf_grid(model, ys, policy=DEFAULT_POLICY):
    """pdf_product over a grid; returns (values, max_term_ratios)."""
    vals = np.empty(len(ys))
    ratios = np.empty(len(ys))
    for i, yi in enumerate(ys):
        sv = pdf_product(model, float(yi), policy)
        vals[i] = sv.value
        ratios[i] = sv.max_term_ratio
    return vals, ratios


def cdf_grid(model, ys, policy=DEFAULT_POLICY):
    """cdf_product over a grid; returns (values, max_term_ratios)."""
    vals = np.empty(len(ys))
    ratios = np.empty(len(ys))
    for i, yi in enumerate(ys):
        sv = cdf_product(model, float(yi), policy)
        vals[i] = sv.value
        ratios[i] = sv.max_term_ratio
    return vals, ratios
