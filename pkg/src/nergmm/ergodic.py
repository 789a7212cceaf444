"""Ergodic mixed-effects regression and the partially non-ergodic extension.

The ergodic model is y = f(M, R, Vs30) + dB_e + dW_es with between-event sd
tau and within-event sd phi, giving a block-diagonal covariance
C = phi^2 I + tau^2 (event blocks). The likelihood exploits that structure
per event; the linear coefficients are profiled out by GLS at each (tau,
phi) iterate so the derivative-free search runs in 2 (or 3) dimensions.

The partial extension adds systematic station terms dS2S_s and splits phi
into phi_SS (single-station) and phi_S2S.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import gmm
from .errors import ModelQualityWarning, NumericalError
from .linalg import LowRankCov
from .optimize import MAX_EVALS, REL_TOL, minimize_bounded

logger = logging.getLogger(__name__)

SD_BOUNDS = (1e-4, 10.0)


@dataclass
class ErgodicFitConfig:
    """Settings for the ergodic fit."""

    saturated: bool = True
    c6: float = 6.0
    estimate_c6: bool = False
    c6_bounds: tuple = (1.5, 30.0)
    v_ref: float = gmm.V_REF_DEFAULT
    sd_bounds: tuple = SD_BOUNDS
    max_evals: int = MAX_EVALS
    rel_tol: float = REL_TOL


@dataclass
class ErgodicFit:
    """Result of the ergodic fit."""

    coeffs: gmm.ErgodicCoeffs
    tau: float
    phi: float
    loglik: float
    event_terms: np.ndarray         # conditional-mean dB_e, shape (n_events,)
    residuals: np.ndarray           # dW_es, shape (n_records,)
    n_evals: int = 0
    converged: bool = True

    @property
    def total_sigma(self):
        return float(np.hypot(self.tau, self.phi))


@dataclass
class PartialFit(ErgodicFit):
    """Ergodic fit extended with systematic station terms.

    tau/phi hold the aleatory pair of this model: tau = tau0 and
    phi = sqrt(phi_SS^2 + phi_S2S^2), so total_sigma stays comparable with
    the ergodic fit.
    """

    tau0: float = 0.0
    phi_ss: float = 0.0
    phi_s2s: float = 0.0
    site_terms: np.ndarray = field(default_factory=lambda: np.empty(0))
    within_site_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))


def _event_blocks(event_index, n_events, values):
    """Per-event sums of a record-level array (or each column of a matrix)."""
    if values.ndim == 1:
        return np.bincount(event_index, weights=values, minlength=n_events)
    out = np.empty((n_events, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(event_index, weights=values[:, j],
                                minlength=n_events)
    return out


def loglik_ergodic(catalog, coeffs, tau, phi):
    """Exact Gaussian log-likelihood of the ergodic mixed-effects model.

    Evaluated event block by event block: with n_e records in an event,
    |C_e| = phi^(2(n_e - 1)) (phi^2 + n_e tau^2) and the quadratic form uses
    the rank-one inverse update, so no dense matrix is built.

    Parameters
    ----------
    catalog : Catalog
    coeffs : ErgodicCoeffs
    tau, phi : float
        Between- and within-event sds, >= 0 and not both 0.

    Returns
    -------
    float

    Raises
    ------
    NumericalError
        phi = 0 with any multi-record event makes a block singular.
    """
    resid = catalog.y - gmm.f_erg(coeffs, catalog.mag, catalog.r_rup,
                                  catalog.vs30)
    return _loglik_blocks(resid, catalog.event_index, catalog.n_events,
                          tau, phi)


def _loglik_blocks(resid, event_index, n_events, tau, phi):
    if tau < 0 or phi < 0 or (tau == 0 and phi == 0):
        raise NumericalError(f"need tau, phi >= 0 and not both 0, got "
                             f"tau={tau}, phi={phi}")
    n = resid.size
    n_e = np.bincount(event_index, minlength=n_events).astype(float)
    if phi == 0.0:
        if np.any(n_e > 1):
            raise NumericalError(
                "phi = 0 with a multi-record event gives a singular block")
        # every block is the scalar tau^2
        return -0.5 * (n * np.log(2 * np.pi) + n * np.log(tau ** 2)
                       + float(resid @ resid) / tau ** 2)
    s_e = np.bincount(event_index, weights=resid, minlength=n_events)
    denom = phi ** 2 + n_e * tau ** 2
    logdet = float(np.sum((n_e - 1.0) * np.log(phi ** 2) + np.log(denom)))
    quad = (float(resid @ resid)
            - tau ** 2 * float(np.sum(s_e ** 2 / denom))) / phi ** 2
    return -0.5 * (n * np.log(2 * np.pi) + logdet + quad)


def _gls_profile(X, y, event_index, n_events, tau, phi):
    """GLS solve of the linear coefficients under the ergodic covariance.

    Returns (beta, resid) where resid = y - X beta. Uses the same rank-one
    block inverse as the likelihood.
    """
    n_e = np.bincount(event_index, minlength=n_events).astype(float)
    denom = phi ** 2 + n_e * tau ** 2
    w_e = tau ** 2 / denom                      # shrinkage per event
    sX = _event_blocks(event_index, n_events, X)
    sy = np.bincount(event_index, weights=y, minlength=n_events)
    XtCiX = X.T @ X - (sX * w_e[:, None]).T @ sX
    XtCiy = X.T @ y - (sX * w_e[:, None]).T @ sy
    try:
        beta = np.linalg.solve(XtCiX, XtCiy)
    except np.linalg.LinAlgError:
        # collinear design (e.g. constant magnitude makes the quadratic
        # magnitude column a multiple of the intercept); fall back to the
        # minimum-norm solution
        warnings.warn("design matrix is rank-deficient; using the "
                      "minimum-norm coefficient solution",
                      ModelQualityWarning, stacklevel=3)
        beta = np.linalg.lstsq(XtCiX, XtCiy, rcond=None)[0]
    return beta, y - X @ beta


def _event_means_blup(resid, event_index, n_events, tau, phi):
    """Conditional means dB_e = tau^2 sum(resid_e) / (phi^2 + n_e tau^2)."""
    n_e = np.bincount(event_index, minlength=n_events).astype(float)
    s_e = np.bincount(event_index, weights=resid, minlength=n_events)
    return tau ** 2 * s_e / (phi ** 2 + n_e * tau ** 2)


def _moment_start(resid, group_index, n_groups):
    """Method-of-moments split of a residual variance into between/within."""
    n_g = np.bincount(group_index, minlength=n_groups).astype(float)
    means = np.bincount(group_index, weights=resid, minlength=n_groups)
    means = np.divide(means, n_g, out=np.zeros_like(means), where=n_g > 0)
    within = resid - means[group_index]
    multi = n_g > 1
    if np.any(multi):
        dof = float(np.sum(n_g[multi] - 1.0))
        var_w = float(np.sum(within ** 2)) / max(dof, 1.0)
    else:
        var_w = float(np.var(resid))
    var_b = max(float(np.var(means[n_g > 0])) - var_w * float(np.mean(1.0 / n_g[n_g > 0])), 0.0)
    return np.sqrt(var_b), np.sqrt(var_w)


def fit_ergodic(catalog, config=None):
    """Maximum-likelihood ergodic fit.

    The nonlinear search runs over (tau, phi) and optionally c6; at every
    iterate the linear coefficients come from an exact GLS solve, so the
    reported likelihood is the profile likelihood.

    Returns
    -------
    ErgodicFit
    """
    config = config or ErgodicFitConfig()
    if catalog.n_events < 2:
        warnings.warn(
            "catalog has a single event; tau is unidentifiable and will pin "
            "to its lower bound", ModelQualityWarning, stacklevel=2)

    def build_X(c6):
        X, _ = gmm.design_matrix(catalog.mag, catalog.r_rup, catalog.vs30,
                                 c6, v_ref=config.v_ref,
                                 saturated=config.saturated)
        return X

    # moment start from an OLS fit
    X0 = build_X(config.c6)
    _, resid0 = _gls_profile(X0, catalog.y, catalog.event_index,
                             catalog.n_events, 0.0, 1.0)
    tau_start, phi_start = _moment_start(resid0, catalog.event_index,
                                         catalog.n_events)
    lo = config.sd_bounds[0]
    tau_start = max(tau_start, 10 * lo)
    phi_start = max(phi_start, 10 * lo)

    bounds = [config.sd_bounds, config.sd_bounds]
    x0 = [tau_start, phi_start]
    if config.estimate_c6:
        bounds.append(config.c6_bounds)
        x0.append(config.c6)

    def negloglik(x):
        tau, phi = x[0], x[1]
        c6 = x[2] if config.estimate_c6 else config.c6
        X = build_X(c6)
        _, resid = _gls_profile(X, catalog.y, catalog.event_index,
                                catalog.n_events, tau, phi)
        return -_loglik_blocks(resid, catalog.event_index, catalog.n_events,
                               tau, phi)

    res = minimize_bounded(negloglik, x0, bounds, max_evals=config.max_evals,
                           rel_tol=config.rel_tol)
    tau, phi = float(res.x[0]), float(res.x[1])
    c6 = float(res.x[2]) if config.estimate_c6 else config.c6
    X = build_X(c6)
    beta, resid = _gls_profile(X, catalog.y, catalog.event_index,
                               catalog.n_events, tau, phi)
    coeffs = gmm.coeffs_from_solution(beta, c6, v_ref=config.v_ref,
                                      saturated=config.saturated)
    if coeffs.c7 > 0:
        warnings.warn(
            f"fitted c7 = {coeffs.c7:+.4g} is positive; anelastic "
            "attenuation should be <= 0", ModelQualityWarning, stacklevel=2)
    dB = _event_means_blup(resid, catalog.event_index, catalog.n_events,
                           tau, phi)
    dW = resid - dB[catalog.event_index]
    logger.info("ergodic fit: tau=%.4f phi=%.4f loglik=%.3f (%d evals)",
                tau, phi, -res.fun, res.n_evals)
    return ErgodicFit(coeffs=coeffs, tau=tau, phi=phi, loglik=-res.fun,
                      event_terms=dB, residuals=dW, n_evals=res.n_evals)


def _partial_loading(catalog, tau0, phi_s2s):
    """Loading matrix for C = phi_SS^2 I + U U^T with event+station blocks."""
    Ze = catalog.event_indicator()
    Zs = catalog.station_indicator()
    return np.hstack([tau0 * Ze, phi_s2s * Zs])


def fit_partial(catalog, config=None):
    """Fit the partially non-ergodic model with station terms.

    Covariance: phi_SS^2 I + phi_S2S^2 (station blocks) + tau0^2 (event
    blocks). The two grouping structures overlap, so evaluation goes through
    the low-rank identity instead of per-event blocks.

    Returns
    -------
    PartialFit
    """
    config = config or ErgodicFitConfig()
    if config.estimate_c6:
        raise NotImplementedError("c6 estimation applies to the ergodic fit")
    X = gmm.design_matrix(catalog.mag, catalog.r_rup, catalog.vs30,
                          config.c6, v_ref=config.v_ref,
                          saturated=config.saturated)[0]

    # starts: ergodic-style moments, then split phi between the station pair
    _, resid0 = _gls_profile(X, catalog.y, catalog.event_index,
                             catalog.n_events, 0.0, 1.0)
    tau_start, phi_start = _moment_start(resid0, catalog.event_index,
                                         catalog.n_events)
    lo = config.sd_bounds[0]
    x0 = [max(tau_start, 10 * lo), max(phi_start / np.sqrt(2), 10 * lo),
          max(phi_start / np.sqrt(2), 10 * lo)]
    bounds = [config.sd_bounds] * 3

    def solve_beta(cov):
        XtCiX = X.T @ cov.solve(X)
        XtCiy = X.T @ cov.solve(catalog.y)
        beta = np.linalg.solve(XtCiX, XtCiy)
        return beta, catalog.y - X @ beta

    def negloglik(x):
        tau0, phi_ss, phi_s2s = x
        cov = LowRankCov(_partial_loading(catalog, tau0, phi_s2s), phi_ss ** 2)
        _, resid = solve_beta(cov)
        return -cov.loglik(resid)

    res = minimize_bounded(negloglik, x0, bounds, max_evals=config.max_evals,
                           rel_tol=config.rel_tol)
    tau0, phi_ss, phi_s2s = (float(v) for v in res.x)
    cov = LowRankCov(_partial_loading(catalog, tau0, phi_s2s), phi_ss ** 2)
    beta, resid = solve_beta(cov)
    coeffs = gmm.coeffs_from_solution(beta, config.c6, v_ref=config.v_ref,
                                      saturated=config.saturated)

    ci_resid = cov.solve(resid)
    dB = tau0 ** 2 * (catalog.event_indicator().T @ ci_resid)
    dS2S = phi_s2s ** 2 * (catalog.station_indicator().T @ ci_resid)
    dWS = (resid - dB[catalog.event_index] - dS2S[catalog.station_index])
    logger.info("partial fit: tau0=%.4f phi_ss=%.4f phi_s2s=%.4f (%d evals)",
                tau0, phi_ss, phi_s2s, res.n_evals)
    return PartialFit(coeffs=coeffs, tau=tau0,
                      phi=float(np.hypot(phi_ss, phi_s2s)),
                      loglik=-res.fun,
                      event_terms=dB,
                      residuals=resid - dB[catalog.event_index],
                      n_evals=res.n_evals,
                      tau0=tau0, phi_ss=phi_ss, phi_s2s=phi_s2s,
                      site_terms=dS2S, within_site_residuals=dWS)


@dataclass(frozen=True)
class ResidualPartition:
    """Station-term split of within-event residuals."""

    site_terms: np.ndarray
    within_site: np.ndarray
    phi_s2s: float
    phi_ss: float


def partition_residuals(fit, catalog):
    """Split fitted within-event residuals into station terms and remainder.

    Station terms are shrunk station means of dW with shrinkage factor
    phi_S2S^2 / (phi_S2S^2 + phi_SS^2 / n_s); the variance split comes from
    one-way method-of-moments on the station grouping. Systematic effects
    that were absorbed into the ergodic event terms are not recovered here.

    Parameters
    ----------
    fit : ErgodicFit
    catalog : Catalog

    Returns
    -------
    ResidualPartition
        site_terms has shape (n_stations,), within_site (n_records,);
        phi_s2s and phi_ss are the moment-based sds of the two parts.
    """
    dW = fit.residuals
    n_s = np.bincount(catalog.station_index,
                      minlength=catalog.n_stations).astype(float)
    phi_s2s, phi_ss = _moment_start(dW, catalog.station_index,
                                    catalog.n_stations)
    s_means = np.bincount(catalog.station_index, weights=dW,
                          minlength=catalog.n_stations)
    s_means = np.divide(s_means, n_s, out=np.zeros_like(s_means),
                        where=n_s > 0)
    if phi_s2s == 0.0 and phi_ss == 0.0:
        shrink = np.zeros(catalog.n_stations)
    else:
        with np.errstate(divide="ignore"):
            shrink = phi_s2s ** 2 / (phi_s2s ** 2 + phi_ss ** 2 / np.maximum(n_s, 1))
    site_terms = shrink * s_means
    within_site = dW - site_terms[catalog.station_index]
    return ResidualPartition(site_terms=site_terms, within_site=within_site,
                             phi_s2s=phi_s2s, phi_ss=phi_ss)
