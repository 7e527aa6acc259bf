"""Self-contained validation suite behind `kmsprod validate`.

Every check pits an analytic expression against an independent route
(convolution quadrature, Monte Carlo, finite differences, or a different
closed form) at a fixed tolerance and reports pass/fail plus the measured
numbers.  All randomness comes from one seeded generator, so a fixed seed
makes the whole report reproducible byte for byte.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .fading import ShadowedParams, cdf_single
from .metrics import amount_of_fading, combine_min_outage, cqei, op_cascade
from .product import (
    GapCase,
    ProductModel,
    cdf_grid,
    cdf_product,
    mgf_product,
    moment_product,
    pdf_product,
)
from .oracle import compare_ecdf, pdf_by_convolution, product_cdf_interpolator, sample_product
from .specfun import DEFAULT_POLICY, gauss_2f1, gauss_2f1_db_at_neg_int

# the four reference parameter sets: (kappa, mu, m) per link, unit mean power
REFERENCE_SETS = (
    ((5.0, 1.2, 0.5), (2.1, 3.0, 0.8)),
    ((2.2, 1.2, 10.0), (0.9, 3.2, 4.0)),
    ((1.0, 1.5, 2.0), (1.0, 3.5, 2.0)),
    ((1.0, 2.0, 2.0), (3.0, 2.0, 5.0)),
)

OP_SHAPE_DB_GRID = np.linspace(-10.0, 0.0, 21)

# S-R hop used by the relay checks (the R-D hop is reference set 1)
RELAY_SR = (2.0, 1.5, 1.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)


def _models():
    return [
        ProductModel(ShadowedParams(*s1), ShadowedParams(*s2))
        for s1, s2 in REFERENCE_SETS
    ]


def check_oracle_equivalence(tol=1e-6) -> CheckResult:
    """Series PDF vs convolution quadrature on 40 log-spaced y in [0.01, 5]."""
    ys = np.geomspace(0.01, 5.0, 40)
    worst = []
    for model in _models():
        w = 0.0
        for y in ys:
            series = pdf_product(model, float(y)).value
            conv = pdf_by_convolution(model, float(y))
            w = max(w, abs(series - conv) / conv)
        worst.append(w)
    return CheckResult(
        "oracle_equivalence",
        all(w <= tol for w in worst),
        {"worst_rel_diff_per_set": worst, "tolerance": tol},
    )


def check_monte_carlo_ks(rng, count=1_000_000, tol=5e-3) -> CheckResult:
    """KS distance between the sampled product ECDF and the series CDF."""
    distances = []
    for model in _models():
        samples = sample_product(model, rng, count)
        cdf = product_cdf_interpolator(model, samples)
        distances.append(compare_ecdf(samples, cdf).ks_distance)
    return CheckResult(
        "monte_carlo_ks",
        all(d <= tol for d in distances),
        {"ks_per_set": distances, "tolerance": tol, "samples": count},
    )


def _moment_by_quadrature(model, order):
    """integral of y^order f(y) dy against the series density."""

    def integrand(ys):
        out = np.empty(len(ys))
        for i, yi in enumerate(ys):
            out[i] = yi**order * pdf_product(model, float(yi)).value if yi > 0 else 0.0
        return out

    mu1 = model.link1.mu
    head = 0.0
    lo = 0.0
    if mu1 < 1.0:
        inv = 1.0 / mu1

        def sub(ts):
            out = np.empty(len(ts))
            for i, ti in enumerate(ts):
                if ti <= 0.0:
                    out[i] = 0.0
                    continue
                yi = ti**inv
                out[i] = (
                    yi**order * pdf_product(model, float(yi)).value
                    * inv * ti ** (inv - 1.0)
                )
            return out

        head, _ = quadrature.integrate(sub, 0.0, 1.0, abs_tol=1e-12, rel_tol=1e-10)
        lo = 1.0
    body, _ = quadrature.integrate_to_inf(
        integrand, lo, first_width=2.0, abs_tol=1e-12, rel_tol=1e-10, tail_rel=1e-11
    )
    return head + body


def check_moment_identities(tol=1e-7) -> CheckResult:
    """Closed-form moments vs quadrature of the series PDF, orders 1..4."""
    worst = 0.0
    exact_mean_err = 0.0
    for model in _models():
        exact_mean_err = max(exact_mean_err, abs(moment_product(model, 1) - model.mean))
        for order in range(1, 5):
            closed = moment_product(model, order)
            quad = _moment_by_quadrature(model, order)
            worst = max(worst, abs(closed - quad) / abs(closed))
    return CheckResult(
        "moment_identities",
        worst <= tol and exact_mean_err <= 1e-12,
        {
            "worst_rel_diff": worst,
            "tolerance": tol,
            "mean_abs_err": exact_mean_err,
        },
    )


def check_af_cqei(rng, draws=100, tol=1e-10) -> CheckResult:
    """Closed-form AF/CQEI vs their moment definitions; AF decreasing in m."""
    worst = 0.0
    for _ in range(draws):
        links = [
            ShadowedParams(
                kappa=float(rng.uniform(0.05, 8.0)),
                mu=float(rng.uniform(0.4, 6.0)),
                m=float(rng.uniform(0.3, 15.0)),
                gamma_bar=float(rng.uniform(0.2, 5.0)),
            )
            for _ in range(2)
        ]
        model = ProductModel(*links)
        m1 = moment_product(model, 1)
        m2 = moment_product(model, 2)
        af_def = (m2 - m1 * m1) / (m1 * m1)
        cqei_def = (m2 - m1 * m1) / m1**3
        worst = max(
            worst,
            abs(amount_of_fading(model) - af_def) / af_def,
            abs(cqei(model) - cqei_def) / cqei_def,
        )
    # strict decrease in each m on the stated grid (kappa > 0 so the
    # m-dependent term is present)
    m_grid = (0.5, 1.0, 2.0, 5.0, 10.0)
    monotone = True
    for _ in range(20):
        k1, k2 = rng.uniform(0.1, 8.0, size=2)
        mu1, mu2 = rng.uniform(0.4, 6.0, size=2)
        m_other = float(rng.uniform(0.3, 15.0))
        for swap in (False, True):
            prev = math.inf
            for m_val in m_grid:
                pair = (
                    ShadowedParams(float(k1), float(mu1), m_val),
                    ShadowedParams(float(k2), float(mu2), m_other),
                )
                model = ProductModel(*(pair[::-1] if swap else pair))
                af = amount_of_fading(model)
                if not af < prev:
                    monotone = False
                prev = af
    return CheckResult(
        "af_cqei",
        worst <= tol and monotone,
        {"worst_rel_diff": worst, "tolerance": tol, "m_monotone": monotone},
    )


def check_case_continuity(tol=1e-3) -> CheckResult:
    """Integer-gap series is the limit of the near-integer case-1 series."""
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n_gap in (0, 1, 2):
            base = ShadowedParams(1.3, 1.3, 1.7)
            exact = ProductModel(base, ShadowedParams(0.9, 1.3 + n_gap, 2.4))
            for off in (1e-4, -1e-4):
                nearby = ProductModel(
                    base, ShadowedParams(0.9, 1.3 + n_gap + off, 2.4)
                )
                for y in (0.1, 1.0, 3.0):
                    ref = pdf_product(exact, y).value
                    near = pdf_product(nearby, y).value
                    worst = max(worst, abs(near - ref) / ref)
    return CheckResult(
        "case_continuity", worst <= tol, {"worst_rel_diff": worst, "tolerance": tol}
    )


def check_db_2f1(tol=1e-6) -> CheckResult:
    """Analytic parameter derivative of 2F1 vs central finite differences."""
    h = 1e-6
    worst = 0.0
    for a in (0.5, 1.0, 2.0, 5.0):
        for n in (0, 1, 3, 7):
            for c in (1.2, 3.0):
                for z in (0.1, 0.5, 0.9):
                    exact = gauss_2f1_db_at_neg_int(a, n, c, z).value
                    fd = (
                        gauss_2f1(a, -n + h, c, z).value
                        - gauss_2f1(a, -n - h, c, z).value
                    ) / (2.0 * h)
                    worst = max(worst, abs(exact - fd) / abs(fd))
    log_worst = 0.0
    for z in (0.1, 0.5, 0.9):
        got = gauss_2f1_db_at_neg_int(1.7, 0, 1.7, z).value
        log_worst = max(log_worst, abs(got + math.log1p(-z)))
    return CheckResult(
        "db_2f1",
        worst <= tol and log_worst <= 1e-10,
        {"worst_fd_rel_diff": worst, "log_identity_abs_err": log_worst},
    )


def relay_reference() -> tuple[ShadowedParams, ProductModel]:
    sr = ShadowedParams(*RELAY_SR)
    rd = ProductModel(
        ShadowedParams(*REFERENCE_SETS[0][0]), ShadowedParams(*REFERENCE_SETS[0][1])
    )
    return sr, rd


def check_relay_outage(rng, trials=1_000_000) -> CheckResult:
    """Analytic min-SNR relay OP vs Monte Carlo, plus the exact-SNR gap."""
    from .fading import sample_single

    sr, rd = relay_reference()
    g_sr = sample_single(sr, rng, trials)
    g_rd = sample_product(rd, rng, trials)
    ok = True
    rows = []
    for db in (-5.0, 0.0, 5.0):
        th = 10.0 ** (db / 10.0)
        analytic = combine_min_outage(
            cdf_single(sr, th), cdf_product(rd, th).value
        )
        mc_min = float(np.mean(np.minimum(g_sr, g_rd) <= th))
        exact_snr = g_sr * g_rd / (g_sr + g_rd + 1.0)
        mc_exact = float(np.mean(exact_snr <= th))
        se = math.sqrt(max(mc_min * (1.0 - mc_min), 1e-12) / trials)
        ok = ok and abs(analytic - mc_min) <= 3.0 * se
        rows.append(
            {
                "gamma_th_db": db,
                "analytic": analytic,
                "mc_min": mc_min,
                "mc_exact_snr": mc_exact,
                "binomial_se": se,
                "min_approx_gap": mc_exact - mc_min,
            }
        )
    return CheckResult("relay_outage", ok, {"points": rows, "trials": trials})


def check_figure_shapes() -> CheckResult:
    """Cascade OP families decrease in the swept parameter on the outage grid."""
    ths = 10.0 ** (OP_SHAPE_DB_GRID / 10.0)
    families = {
        "m1": [((5.0, 1.2, v), (2.1, 3.0, 0.8)) for v in (0.5, 1.0, 2.0, 4.4)],
        "m2": [((5.0, 1.2, 0.5), (2.1, 3.0, v)) for v in (0.8, 1.6, 3.0, 4.4)],
        "mu1": [((0.9, v, 4.0), (2.2, 2.0, 10.0)) for v in (0.5, 1.0, 2.0, 3.0)],
        "mu2": [((0.9, 1.2, 4.0), (2.2, v, 10.0)) for v in (0.8, 1.5, 2.5, 3.5)],
        "kappa1": [((v, 1.5, 4.0), (1.0, 2.1, 10.0)) for v in (0.0, 1.0, 2.5, 5.0)],
        "kappa2": [((1.0, 1.5, 4.0), (v, 2.1, 10.0)) for v in (0.0, 1.0, 2.5, 5.0)],
    }
    failures = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, family in families.items():
            prev = None
            for s1, s2 in family:
                model = ProductModel(ShadowedParams(*s1), ShadowedParams(*s2))
                curve = np.array([op_cascade(model, float(t)) for t in ths])
                if prev is not None and not np.all(curve < prev):
                    failures.append(name)
                prev = curve
    return CheckResult(
        "figure_shapes",
        not failures,
        {"violating_families": failures, "db_grid": [float(v) for v in OP_SHAPE_DB_GRID]},
    )


def check_mgf(tol=1e-6) -> CheckResult:
    """MGF series vs numerical Laplace transform; unit limit at s -> 0-."""
    model = _models()[0]
    worst = 0.0
    for s in (-0.5, -1.0, -2.0):
        series = mgf_product(model, s).value

        def integrand(ys, s=s):
            out = np.empty(len(ys))
            for i, yi in enumerate(ys):
                out[i] = (
                    math.exp(s * yi) * pdf_product(model, float(yi)).value
                    if yi > 0.0
                    else 0.0
                )
            return out

        quad, _ = quadrature.integrate_to_inf(
            integrand, 0.0, first_width=1.0, abs_tol=1e-12, rel_tol=1e-9
        )
        worst = max(worst, abs(series - quad) / quad)
    near_one = mgf_product(model, -1e-4).value
    return CheckResult(
        "mgf",
        worst <= tol and abs(near_one - 1.0) <= 1e-3,
        {"worst_rel_diff": worst, "tolerance": tol, "value_at_minus_1e-4": near_one},
    )


def run_validation(seed: int, full: bool = True) -> dict:
    """Execute the suite; `full` uses the stated sample sizes, else a fast pass."""
    rng = np.random.default_rng(seed)
    count = 1_000_000 if full else 50_000
    trials = 1_000_000 if full else 50_000
    ks_tol = 5e-3 if full else 2.5e-2
    checks = [
        check_oracle_equivalence(),
        check_monte_carlo_ks(rng, count=count, tol=ks_tol),
        check_moment_identities(),
        check_af_cqei(rng),
        check_case_continuity(),
        check_db_2f1(),
        check_relay_outage(rng, trials=trials),
        check_figure_shapes(),
        check_mgf(),
    ]
    from . import __version__

    return {
        "version": __version__,
        "seed": seed,
        "full": full,
        "passed": all(c.passed for c in checks),
        "checks": [
            {"name": c.name, "passed": c.passed, "details": c.details} for c in checks
        ],
    }
