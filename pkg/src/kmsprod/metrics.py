"""Link-performance metrics for cascaded and relayed kappa-mu shadowed channels."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError, ParameterError
from .fading import ShadowedParams, cdf_single
from .product import ProductModel, cdf_product
from .specfun import DEFAULT_POLICY, TruncationPolicy


@dataclass(frozen=True)
class RelayModel:
    """Variable-gain amplify-and-forward relay with no direct S-D link.

    sr_link: the single-hop S-R channel; rd_cascade: the R-D hop modeled as
    a two-factor cascaded (keyhole) channel.
    """

    sr_link: ShadowedParams
    rd_cascade: ProductModel


@dataclass(frozen=True)
class MetricReport:
    """Bundle of cascade metrics; op_curve is ((gamma_th, probability), ...)."""

    af: float
    cqei: float
    op_curve: tuple[tuple[float, float], ...]

    def __post_init__(self):
        probs = [p for _, p in self.op_curve]
        if any(q < p - 1e-12 for p, q in zip(probs, probs[1:])):
            raise ParameterError("op_curve probabilities must be nondecreasing")


def _single_link_af_factor(p: ShadowedParams) -> float:
    k = p.kappa
    return (
        1.0
        + (2.0 * k + 1.0) / (p.mu * (1.0 + k) ** 2)
        + p.mu * k * k / (p.m * (p.mu + 1.0))
    )


def amount_of_fading(model: ProductModel) -> float:
    """Var[Y]/E[Y]^2 in closed form: prod of per-link factors minus one."""
    return (
        _single_link_af_factor(model.link1) * _single_link_af_factor(model.link2) - 1.0
    )


def cqei(model: ProductModel) -> float:
    """Channel quality estimation index Var[Y]/E[Y]^3 = AF / (gbar1 gbar2)."""
    return amount_of_fading(model) / model.mean


def op_cascade(
    model: ProductModel,
    gamma_th: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> float:
    """Outage probability of the cascaded channel: P(Y <= gamma_th)."""
    if not gamma_th > 0.0:
        raise DomainError(f"gamma_th must be > 0, got {gamma_th}")
    return min(max(cdf_product(model, gamma_th, policy).value, 0.0), 1.0)


def combine_min_outage(f_sr: float, f_rd: float) -> float:
    """P(min(g_sr, g_rd) <= th) = F_sr + F_rd - F_sr F_rd for independent hops."""
    return f_sr + f_rd - f_sr * f_rd


def op_relay_variable_gain(
    relay: RelayModel,
    gamma_th: float,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> float:
    """Relay outage under the min-SNR bound on g_sr g_rd / (g_sr + g_rd + 1).

    The exact end-to-end SNR appears only in the Monte Carlo oracle so the
    approximation gap stays measurable.
    """
    if not gamma_th > 0.0:
        raise DomainError(f"gamma_th must be > 0, got {gamma_th}")
    f_sr = cdf_single(relay.sr_link, gamma_th, policy)
    f_rd = min(max(cdf_product(relay.rd_cascade, gamma_th, policy).value, 0.0), 1.0)
    return combine_min_outage(f_sr, f_rd)


def cascade_report(
    model: ProductModel,
    thresholds,
    policy: TruncationPolicy = DEFAULT_POLICY,
) -> MetricReport:
    """AF, CQEI and the outage curve over an ascending threshold grid."""
    curve = tuple(
        (float(g), op_cascade(model, float(g), policy)) for g in thresholds
    )
    return MetricReport(af=amount_of_fading(model), cqei=cqei(model), op_curve=curve)
