"""Prediction of non-ergodic coefficients and median ground motion.

All operations are closed-form Gaussian conditioning against a fitted
non-ergodic model. Coefficient predictions come in three flavors: with the
fitted coefficients treated as known values, with their posterior
uncertainty marginalized, and the marginalized form for a field with a
nonzero prior mean (cell attenuation). Ground-motion prediction offers two
algebraically equivalent routes: direct conditioning of the scenario ground
motion on the observations, or composition of per-term coefficient
predictions through the functional form. Aleatory terms (tau0, phi0) never
enter the cross-covariance between scenarios and observations; they are
reported alongside the epistemic results.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .catalog import scenarios_to_arrays
from .cells import segment_path
from .errors import OutOfGridError, ValidationError
from .gmm import f_erg
from .kernels import SNAP_TOL, kernel_matrix
from .linalg import chol_with_jitter, psd_repair, sqrt_psd
from .nonergodic import design_values, resolve_mu_ca, term_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoeffPrediction:
    """Coefficient posterior at new inputs."""

    term: str
    mu_star: np.ndarray
    psi_star: np.ndarray


@dataclass(frozen=True)
class GmPrediction:
    """Median non-ergodic ground motion with epistemic covariance."""

    scenario_ids: np.ndarray
    median: np.ndarray
    cov: np.ndarray              # epistemic, across scenarios
    dL2L: np.ndarray
    dP2P: np.ndarray
    dS2S: np.ndarray
    tau0: float
    phi0: float

    @property
    def sd_epistemic(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def _term_data(fit, term_name):
    for td in fit.terms_data:
        if td.term.name == term_name:
            return td
    raise ValidationError(f"no term named {term_name!r}")


def _cross_mats(fit, td, new_inputs):
    """Kernel blocks between new inputs and a term's support."""
    params = fit.hyper.for_term(fit.spec, td.term.name)
    kern = term_kernel(td.term, params)
    k_cross = kernel_matrix(kern, new_inputs, td.support_inputs)
    k_star = kernel_matrix(kern, new_inputs, new_inputs)
    return k_cross, k_star


def _support_solve(fit, td, k_cross):
    """A = k_cross @ K_support^{-1} via a jitter-guarded Cholesky."""
    params = fit.hyper.for_term(fit.spec, td.term.name)
    K = td.kernel_mat(params)
    L = chol_with_jitter(K)
    return scipy.linalg.cho_solve((L, True), k_cross.T).T


def predict_coeffs_fixed(fit, term_name, new_inputs):
    """Interpolate a term's fitted coefficients as if they were known.

    mu* = k*^T K^{-1} c_hat and Psi* = K** - k*^T K^{-1} k*, where c_hat is
    the posterior mean at the support. Psi* carries only the interpolation
    uncertainty of the field, not the estimation uncertainty of c_hat; use
    ``predict_coeffs`` for the marginalized version. A nonzero prior mean
    (cell term) is not handled here.

    Parameters
    ----------
    fit : NergFit
    term_name : str
    new_inputs : ndarray
        (s, 2) coordinates or (s,) ids, matching the term's input kind.

    Returns
    -------
    CoeffPrediction
    """
    td = _term_data(fit, term_name)
    mu_hat, _ = fit.term_posterior(term_name)
    k_cross, k_star = _cross_mats(fit, td, new_inputs)
    A = _support_solve(fit, td, k_cross)
    mu = A @ mu_hat
    psi = psd_repair(k_star - A @ k_cross.T)
    return CoeffPrediction(term=term_name, mu_star=mu, psi_star=psi)


def predict_coeffs(fit, term_name, new_inputs):
    """Predict a zero-prior-mean coefficient field at new inputs, with the
    posterior uncertainty of the fitted coefficients marginalized.

    mu* = k*^T K^{-1} mu_post and
    Psi* = K** - k*^T K^{-1} k* + (k*^T K^{-1}) Psi_post (k*^T K^{-1})^T.

    Returns
    -------
    CoeffPrediction
    """
    td = _term_data(fit, term_name)
    mu_hat, psi_hat = fit.term_posterior(term_name)
    k_cross, k_star = _cross_mats(fit, td, new_inputs)
    A = _support_solve(fit, td, k_cross)
    mu = A @ mu_hat
    psi = psd_repair(k_star - A @ k_cross.T + A @ psi_hat @ A.T)
    return CoeffPrediction(term=term_name, mu_star=mu, psi_star=psi)


def predict_coeffs_nonzero_mean(fit, term_name, new_inputs):
    """Marginalized coefficient prediction for a field with a nonzero
    (scalar) prior mean: the mean shifts, the covariance does not.

    mu* = k*^T K^{-1} (mu_post - mu_prior) + mu_prior.
    """
    td = _term_data(fit, term_name)
    if td.term.design == "cells":
        mu_prior = resolve_mu_ca(fit.spec, fit.erg_coeffs)
    else:
        mu_prior = 0.0
    mu_hat, psi_hat = fit.term_posterior(term_name)
    k_cross, k_star = _cross_mats(fit, td, new_inputs)
    A = _support_solve(fit, td, k_cross)
    mu = A @ (mu_hat - mu_prior) + mu_prior
    psi = psd_repair(k_star - A @ k_cross.T + A @ psi_hat @ A.T)
    return CoeffPrediction(term=term_name, mu_star=mu, psi_star=psi)


def _match_entity_ids(scen_xy, entity_xy):
    """Map scenario coordinates to dense entity ids by collocation.

    Scenario points within the coordinate snap of a fitted entity get that
    entity's id; the rest get fresh ids past the support range, with
    coordinate-identical new points sharing one fresh id so they stay
    perfectly correlated under a group kernel.
    """
    n_ent = entity_xy.shape[0]
    d = cdist(scen_xy, entity_xy)
    nearest = np.argmin(d, axis=1)
    matched = d[np.arange(scen_xy.shape[0]), nearest] <= SNAP_TOL
    ids = np.where(matched, nearest.astype(float), -1.0)
    un = np.flatnonzero(~matched)
    if un.size:
        _, inverse = np.unique(scen_xy[un], axis=0, return_inverse=True)
        ids[un] = n_ent + inverse
    return ids


def _term_new_inputs(fit, term, arrs):
    """Per-scenario kernel inputs for one term."""
    if term.input == "t_E":
        return arrs["eq_xy"]
    if term.input == "t_S":
        return arrs["sta_xy"]
    if term.input == "event":
        return _match_entity_ids(arrs["eq_xy"], fit.catalog.event_xy)
    if term.input == "station":
        return _match_entity_ids(arrs["sta_xy"], fit.catalog.station_xy)
    raise ValidationError(
        f"term {term.name!r}: cell terms enter scenario prediction through "
        "their path segments, not through new kernel inputs")


def _scenario_dR(grid, arrs):
    """Path-segment rows for each scenario ray."""
    s = arrs["mag"].size
    out = np.zeros((s, grid.n_cells))
    for j in range(s):
        try:
            seg = segment_path(grid, arrs["eq_xy"][j], arrs["sta_xy"][j])
        except OutOfGridError as exc:
            raise OutOfGridError(f"scenario {j}: {exc}") from exc
        out[j, seg.cells] = seg.lengths
    return out


def predict_gm(fit, scenarios, route="direct"):
    """Median non-ergodic ground motion and epistemic covariance at
    scenarios.

    route="direct" conditions the scenario ground motion on the
    observations in one Gaussian step; route="compose" predicts every
    coefficient term at the scenario inputs (through the joint posterior,
    so cross-term covariance blocks are kept) and pushes the results
    through the functional form. The two agree to numerical precision and
    exist as mutual checks.

    Parameters
    ----------
    fit : NergFit
    scenarios : sequence of Scenario, or dict of arrays as produced by
        catalog.scenarios_to_arrays
    route : str

    Returns
    -------
    GmPrediction
    """
    if route not in ("direct", "compose"):
        raise ValidationError(f"unknown route {route!r}")
    arrs = scenarios if isinstance(scenarios, dict) else \
        scenarios_to_arrays(scenarios)
    s = arrs["mag"].size
    coeffs = fit.erg_coeffs
    f0 = np.atleast_1d(f_erg(coeffs, arrs["mag"], arrs["r_rup"], arrs["vs30"]))

    cell_term = fit.spec.cell_term
    dR_star = _scenario_dR(cell_term.grid, arrs) if cell_term else None
    mu_ca = resolve_mu_ca(fit.spec, coeffs)

    role_sums = {"E": np.zeros(s), "P": np.zeros(s), "S": np.zeros(s)}

    if route == "direct":
        alpha = fit.solve_ctot(fit.z)
        cross_total = np.zeros((s, fit.catalog.n_records))
        prior_cov = np.zeros((s, s))
        for td in fit.terms_data:
            term = td.term
            if term.design == "cells":
                params = fit.hyper.for_term(fit.spec, term.name)
                K = td.kernel_mat(params)
                W = dR_star @ K
                cross = W @ fit.dR.T
                prior_cov += W @ dR_star.T
                prior_part = (mu_ca * dR_star.sum(axis=1)
                              - coeffs.c7 * arrs["r_rup"])
            else:
                new_inputs = _term_new_inputs(fit, term, arrs)
                x_star = design_values(term.design, arrs["mag"],
                                       arrs["r_rup"], arrs["vs30"], coeffs)
                k_cross, k_star = _cross_mats(fit, td, new_inputs)
                cross = (x_star[:, None] * k_cross) @ td.D.T
                prior_cov += np.outer(x_star, x_star) * k_star
                prior_part = np.zeros(s)
            role_sums[term.role] = (role_sums[term.role] + cross @ alpha
                                    + prior_part)
            cross_total += cross
        cov = prior_cov - cross_total @ fit.solve_ctot(cross_total.T)
    else:
        # compose: per-term coefficient predictions through the joint
        # posterior, then the functional form
        P_blocks = []
        resid_cov = np.zeros((s, s))
        for td in fit.terms_data:
            term = td.term
            if term.design == "cells":
                mu_hat, _ = fit.term_posterior(term.name)
                P_blocks.append(dR_star)
                role_sums[term.role] = (role_sums[term.role]
                                        + dR_star @ mu_hat
                                        - coeffs.c7 * arrs["r_rup"])
            else:
                new_inputs = _term_new_inputs(fit, term, arrs)
                x_star = design_values(term.design, arrs["mag"],
                                       arrs["r_rup"], arrs["vs30"], coeffs)
                pred = predict_coeffs(fit, term.name, new_inputs)
                role_sums[term.role] = (role_sums[term.role]
                                        + x_star * pred.mu_star)
                k_cross, k_star = _cross_mats(fit, td, new_inputs)
                A = _support_solve(fit, td, k_cross)
                P_blocks.append(x_star[:, None] * A)
                resid_cov += (np.outer(x_star, x_star)
                              * (k_star - A @ k_cross.T))
        P = np.hstack(P_blocks)
        cov = P @ fit.psi_joint @ P.T + resid_cov

    median = f0 + role_sums["E"] + role_sums["P"] + role_sums["S"]
    cov = psd_repair(cov)
    return GmPrediction(scenario_ids=arrs["scenario_id"], median=median,
                        cov=cov, dL2L=role_sums["E"], dP2P=role_sums["P"],
                        dS2S=role_sums["S"], tau0=fit.hyper.tau0,
                        phi0=fit.hyper.phi0)


def sample_coeff_fields(prediction, n_draws, seed):
    """Joint Normal draws of a predicted coefficient field.

    Uses a counter-based generator keyed by the seed, and an
    eigendecomposition square root so rank-deficient and exactly-zero
    covariances sample correctly (zero covariance reproduces the mean).

    Returns
    -------
    ndarray, shape (n_draws, len(mu_star))
    """
    if n_draws < 1:
        raise ValidationError(f"n_draws must be >= 1, got {n_draws}")
    rng = np.random.Generator(np.random.Philox(seed))
    S = sqrt_psd(psd_repair(prediction.psi_star))
    eps = rng.standard_normal((int(n_draws), prediction.mu_star.size))
    return prediction.mu_star[None, :] + eps @ S.T
