"""Secrecy metrics for fluid-antenna wiretap channels.

Analytical ASC / SOP / SEE from Gaussian-copula best-port distributions and
Gauss-Laguerre quadrature, plus an independent Monte Carlo simulator used to
cross-check every analytical number.
"""

from fas_secrecy.quadrature import (
    GaussLaguerreRule,
    gauss_laguerre_rule,
    integrate_exp_weighted,
    integrate_half_line,
    laguerre_eval,
)
from fas_secrecy.geometry import (
    CorrelationMatrix,
    PortGrid,
    copula_correlation,
    jakes_covariance,
    port_flat_index,
    port_index_map,
    spherical_bessel_j0,
)
from fas_secrecy.copula import (
    MarginalModel,
    MvnEstimate,
    fas_gain_cdf,
    fas_gain_cdf_derivative,
    fas_gain_pdf_paper,
    gaussian_copula_cdf,
    gaussian_copula_density,
    mvn_cdf,
    rayleigh_gain_cdf,
    rayleigh_gain_pdf,
    std_normal_cdf,
    std_normal_quantile,
)
from fas_secrecy.metrics import (
    MetricResult,
    NodeParams,
    PowerModel,
    SecrecyScenario,
    asc,
    asc_asymptotic,
    asc_single_port,
    effective_cdf,
    effective_pdf_paper,
    see,
    sop,
    sop_oracle,
    sop_single_port,
)
from fas_secrecy.montecarlo import McEstimate, sample_copula_gains, sample_gains, simulate_metrics

__version__ = "0.1.0"
