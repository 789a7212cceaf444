"""Fully non-ergodic varying-coefficient model on ergodic residuals.

Residuals r = y - f_erg are modeled as

    r = sum_i D_i dc_i + dB0 + dWS0

where each dc_i is a latent Gaussian coefficient block (source, path, or
site role) with a kernel prior on its support (event locations, station
locations, station ids, or attenuation-cell centers), D_i maps supports to
records scaled by the term's design values, dB0 is the remaining
between-event term (sd tau0) and dWS0 the remaining within-site noise
(sd phi0).

Hyperparameters maximize the analytic marginal likelihood plus weak
penalties (half-normal on every omega, log-uniform on every ell): a
penalized MLE, equivalently a MAP point estimate. Given hyperparameters,
every coefficient posterior is exact Gaussian conditioning; the joint
posterior covariance across all terms is kept because scenario predictions
need the cross-term blocks.

A cell-attenuation term replaces the ergodic linear distance scaling: its
prior mean is the ergodic c7 by default, and its record-level effect is
dP2P = dR @ c_ca - c7 * R_rup, which is mean-zero a priori when the ray
length equals the rupture distance.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import gmm
from .cells import assemble_dR, clamp_and_report, CellAttenPosterior
from .errors import ValidationError
from .kernels import KINDS, Kernel, KernelSum, kernel_matrix
from .linalg import LowRankCov, chol_with_jitter
from .optimize import MAX_EVALS, REL_TOL, minimize_bounded

logger = logging.getLogger(__name__)

ROLES = ("E", "P", "S")
INPUT_KEYS = ("t_E", "t_S", "event", "station", "t_C")
DESIGNS = ("one", "ln_r", "ln_vs", "cells")
EXP_KINDS = ("exponential", "squared_exponential")

OMEGA_BOUNDS = (1e-4, 10.0)
ELL_BOUNDS = (1.0, 500.0)
SD_BOUNDS = (1e-4, 10.0)


@dataclass(frozen=True)
class TermSpec:
    """One varying-coefficient term.

    Parameters
    ----------
    name : str
    role : str
        "E" (source), "P" (path), or "S" (site); used only for reporting
        the dL2L/dP2P/dS2S split.
    kinds : tuple of str
        Kernel kinds summed to form this term's covariance function.
    input : str
        What the kernel sees: "t_E"/"t_S" coordinates, "event"/"station"
        dense ids, or "t_C" cell centers.
    design : str
        Per-record multiplier: "one", "ln_r" (ln(R_rup + c6)), "ln_vs"
        (ln(Vs30/v_ref)), or "cells" (the dR block; requires input "t_C").
    grid : CellGrid, optional
        Required with design "cells".
    omega_bounds, ell_bounds : tuple
    omega_init, ell_init : tuple or None
        Per-part initial values; None picks defaults at fit time.
    """

    name: str
    role: str
    kinds: tuple
    input: str
    design: str = "one"
    grid: object = None
    omega_bounds: tuple = OMEGA_BOUNDS
    ell_bounds: tuple = ELL_BOUNDS
    omega_init: tuple = None
    ell_init: tuple = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"term {self.name!r}: role must be one of "
                                  f"{ROLES}, got {self.role!r}")
        if self.input not in INPUT_KEYS:
            raise ValidationError(f"term {self.name!r}: unknown input "
                                  f"{self.input!r}")
        if self.design not in DESIGNS:
            raise ValidationError(f"term {self.name!r}: unknown design "
                                  f"{self.design!r}")
        if not self.kinds:
            raise ValidationError(f"term {self.name!r}: needs >= 1 kernel kind")
        for kind in self.kinds:
            if kind not in KINDS or kind == "identity":
                raise ValidationError(
                    f"term {self.name!r}: kernel kind {kind!r} not usable "
                    "for a coefficient term")
        if (self.design == "cells") != (self.input == "t_C"):
            raise ValidationError(
                f"term {self.name!r}: design 'cells' and input 't_C' go "
                "together")
        if self.design == "cells" and self.grid is None:
            raise ValidationError(f"term {self.name!r}: cells design needs a grid")

    @property
    def n_parts(self):
        return len(self.kinds)


@dataclass(frozen=True)
class ModelSpec:
    """Ordered collection of terms plus cell-prior settings.

    ``mu_ca`` is the scalar prior mean of the cell attenuation field:
    "from_c7" (default) uses the ergodic c7 estimate, or pass a float.
    """

    terms: tuple
    mu_ca: object = "from_c7"
    origin_convention: str = "closest_point"

    def __post_init__(self):
        names = [t.name for t in self.terms]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate term names: {names}")
        n_cells_terms = sum(1 for t in self.terms if t.design == "cells")
        if n_cells_terms > 1:
            raise ValidationError("at most one cell-attenuation term allowed")
        if self.origin_convention not in ("closest_point", "epicenter"):
            raise ValidationError(
                f"unknown origin convention {self.origin_convention!r}")

    @property
    def cell_term(self):
        for t in self.terms:
            if t.design == "cells":
                return t
        return None

    def term(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise ValidationError(f"no term named {name!r}")


def default_model_spec(grid=None):
    """The shipped default: source constant, spatial + station site terms,
    and (when a grid is given) cell-specific attenuation.

    The source constant is keyed on source coordinates, so sources sharing a
    location share the adjustment; with unique locations this is equivalent
    to an event-id grouping.
    """
    terms = [
        TermSpec(name="source", role="E", kinds=("group",), input="t_E"),
        TermSpec(name="site_spatial", role="S", kinds=("exponential",),
                 input="t_S"),
        TermSpec(name="site_station", role="S", kinds=("group",),
                 input="station"),
    ]
    if grid is not None:
        terms.append(TermSpec(name="cell_atten", role="P",
                              kinds=("exponential", "group"), input="t_C",
                              design="cells", grid=grid,
                              omega_bounds=(1e-6, 1.0),
                              omega_init=(0.005, 0.002)))
    return ModelSpec(terms=tuple(terms))


@dataclass(frozen=True)
class Hyperparameters:
    """Point estimates: per-term kernel parameters plus (tau0, phi0).

    ``term_params`` aligns with the model spec's term order; each entry is
    a tuple of (omega, ell) pairs, ell None for non-distance kinds.
    """

    term_params: tuple
    tau0: float
    phi0: float

    def for_term(self, spec, name):
        for term, params in zip(spec.terms, self.term_params):
            if term.name == name:
                return params
        raise ValidationError(f"no term named {name!r}")


def term_kernel(term, params):
    """Build the (possibly summed) kernel of a term from parameter pairs."""
    parts = []
    for kind, (omega, ell) in zip(term.kinds, params):
        if kind in EXP_KINDS:
            parts.append(Kernel(kind, omega, ell))
        else:
            parts.append(Kernel(kind, omega))
    return parts[0] if len(parts) == 1 else KernelSum(tuple(parts))


def _hyper_layout(spec):
    """Flat optimizer layout: per term, per part, omega then optional ell."""
    layout = []
    for i, term in enumerate(spec.terms):
        for j, kind in enumerate(term.kinds):
            layout.append((i, j, "omega"))
            if kind in EXP_KINDS:
                layout.append((i, j, "ell"))
    layout.append((None, None, "tau0"))
    layout.append((None, None, "phi0"))
    return layout


def hyper_to_vector(spec, hyper):
    out = []
    for term, params in zip(spec.terms, hyper.term_params):
        for kind, (omega, ell) in zip(term.kinds, params):
            out.append(omega)
            if kind in EXP_KINDS:
                out.append(ell)
    out.extend([hyper.tau0, hyper.phi0])
    return np.array(out)


def hyper_from_vector(spec, x):
    x = np.asarray(x, dtype=float)
    pos = 0
    term_params = []
    for term in spec.terms:
        parts = []
        for kind in term.kinds:
            omega = float(x[pos]); pos += 1
            ell = None
            if kind in EXP_KINDS:
                ell = float(x[pos]); pos += 1
            parts.append((omega, ell))
        term_params.append(tuple(parts))
    tau0 = float(x[pos]); phi0 = float(x[pos + 1])
    return Hyperparameters(term_params=tuple(term_params), tau0=tau0,
                           phi0=phi0)


def _hyper_bounds(spec, sd_bounds=SD_BOUNDS):
    bounds = []
    for term in spec.terms:
        for kind in term.kinds:
            bounds.append(term.omega_bounds)
            if kind in EXP_KINDS:
                bounds.append(term.ell_bounds)
    bounds.extend([sd_bounds, sd_bounds])
    return bounds


class _TermData:
    """Materialized per-term arrays shared by fitting and prediction."""

    def __init__(self, term, catalog, erg_coeffs, dR=None):
        self.term = term
        n = catalog.n_records
        if term.design == "cells":
            if dR is None:
                raise ValidationError(
                    f"term {term.name!r} needs a precomputed dR matrix")
            self.design_values = None
            self.D = dR
            self.support_inputs = term.grid.cell_centers()
            self.entity_index = None
        else:
            x = design_values(term.design, catalog.mag, catalog.r_rup,
                              catalog.vs30, erg_coeffs)
            self.design_values = x
            if term.input == "t_E":
                idx, self.support_inputs = catalog.event_index, catalog.event_xy
            elif term.input == "t_S":
                idx, self.support_inputs = (catalog.station_index,
                                            catalog.station_xy)
            elif term.input == "event":
                idx = catalog.event_index
                self.support_inputs = np.arange(catalog.n_events, dtype=float)
            elif term.input == "station":
                idx = catalog.station_index
                self.support_inputs = np.arange(catalog.n_stations, dtype=float)
            else:
                raise ValidationError(
                    f"term {term.name!r}: input t_C requires design 'cells'")
            self.entity_index = idx
            m = self.support_inputs.shape[0]
            D = np.zeros((n, m))
            D[np.arange(n), idx] = x
            self.D = D
        self.m = self.D.shape[1]

    def kernel_mat(self, params):
        K = kernel_matrix(term_kernel(self.term, params), self.support_inputs)
        return K

    def prior_record_var(self, params):
        """Per-record prior variance contributed by this term."""
        kern = term_kernel(self.term, params)
        var0 = sum(p.omega ** 2 for p in kern.parts)   # kernel at distance 0
        if self.term.design == "cells":
            K = self.kernel_mat(params)
            return np.einsum("ij,jk,ik->i", self.D, K, self.D)
        return self.design_values ** 2 * var0


def design_values(design, mag, r_rup, vs30, erg_coeffs):
    """Record-level design multipliers for a non-cell term."""
    if design == "one":
        return np.ones_like(np.asarray(r_rup, dtype=float))
    if design == "ln_r":
        return np.log(np.asarray(r_rup, dtype=float) + erg_coeffs.c6)
    if design == "ln_vs":
        return np.log(np.asarray(vs30, dtype=float) / erg_coeffs.v_ref)
    raise ValidationError(f"unknown design {design!r}")


def resolve_mu_ca(spec, erg_coeffs):
    """Scalar prior mean of the cell field, or None without a cell term."""
    if spec.cell_term is None:
        return None
    if spec.mu_ca == "from_c7":
        if erg_coeffs is None:
            raise ValidationError(
                "mu_ca='from_c7' needs the ergodic coefficients")
        return float(erg_coeffs.c7)
    return float(spec.mu_ca)


def materialize_terms(spec, catalog, erg_coeffs):
    """Build all per-term arrays; returns (terms_data, dR_or_None)."""
    dR = None
    cell = spec.cell_term
    if cell is not None:
        dR = assemble_dR(cell.grid, catalog, spec.origin_convention)
    return ([_TermData(t, catalog, erg_coeffs, dR=dR) for t in spec.terms],
            dR)


def prior_mean_records(spec, catalog, erg_coeffs, dR):
    """Prior mean of the residuals: dR*mu_ca - c7*R_rup with a cell term.

    The cell field replaces the ergodic linear distance term, so its prior
    mean contribution is offset by the c7 part already inside f_erg. Without
    a cell term the residual prior mean is zero.
    """
    if spec.cell_term is None:
        return np.zeros(catalog.n_records)
    mu_ca = resolve_mu_ca(spec, erg_coeffs)
    return mu_ca * dR.sum(axis=1) - erg_coeffs.c7 * catalog.r_rup


def _loading(terms_data, hyper, Ze):
    """Stack U so that C_tot = phi0^2 I + U U^T."""
    blocks = []
    for td, params in zip(terms_data, hyper.term_params):
        K = td.kernel_mat(params)
        L = chol_with_jitter(K)
        blocks.append(td.D @ L)
    blocks.append(hyper.tau0 * Ze)
    return np.hstack(blocks)


def marginal_loglik(catalog, residuals, spec, hyper, erg_coeffs=None):
    """Log marginal likelihood of ergodic residuals with all latent
    coefficient blocks integrated out analytically.

    The covariance is C = sum_i D_i K_i D_i^T + tau0^2 Ze Ze^T + phi0^2 I,
    evaluated through the low-rank determinant/inversion identities. A spec
    with zero terms reduces to the ergodic likelihood with (tau0, phi0).

    Parameters
    ----------
    catalog : Catalog
    residuals : ndarray, shape (n_records,)
        y - f_erg.
    spec : ModelSpec
    hyper : Hyperparameters
    erg_coeffs : ErgodicCoeffs, optional
        Needed when any term requires c6/v_ref/c7 (ln_r or ln_vs designs,
        cell term with mu_ca="from_c7").

    Returns
    -------
    float
    """
    terms_data, dR = materialize_terms(spec, catalog, erg_coeffs)
    z = residuals - prior_mean_records(spec, catalog, erg_coeffs, dR)
    Ze = catalog.event_indicator()
    cov = LowRankCov(_loading(terms_data, hyper, Ze), hyper.phi0 ** 2)
    return cov.loglik(z)


@dataclass
class NergConfig:
    """Settings for the non-ergodic hyperparameter fit."""

    erg_coeffs: gmm.ErgodicCoeffs = None
    penalty_scale: float = None      # half-normal scale for omegas; default:
                                     # sd of the centered residuals
    sd_bounds: tuple = SD_BOUNDS
    tau0_init: float = None
    phi0_init: float = None
    max_evals: int = MAX_EVALS
    rel_tol: float = REL_TOL
    optimize: bool = True


@dataclass
class NergFit:
    """Fitted non-ergodic model.

    The joint posterior over all coefficient blocks is N(mu_joint,
    psi_joint); ``slices`` maps term names into that vector. The posterior
    kept here is the exact Gaussian one; the sign-constrained cell report
    (means clamped to <= 0) lives in ``cell_posterior`` and does not feed
    back into the Gaussian machinery.
    """

    spec: ModelSpec
    hyper: Hyperparameters
    erg_coeffs: gmm.ErgodicCoeffs
    catalog: object
    residuals: np.ndarray            # y - f_erg, as handed to the fit
    z: np.ndarray                    # residuals minus prior mean
    mu_joint: np.ndarray
    psi_joint: np.ndarray
    slices: dict
    L_ctot: np.ndarray               # lower Cholesky factor of C_tot
    event_terms: np.ndarray          # dB0 per event
    noise_residuals: np.ndarray      # dWS0 per record
    loglik: float
    variance_check: float            # prior total sd at the data centroid
    cell_posterior: object = None    # CellAttenPosterior or None
    dR: np.ndarray = None
    n_evals: int = 0

    # --- conveniences -----------------------------------------------------

    def term_posterior(self, name):
        """(mean, covariance) slice of the joint posterior for one term."""
        sl = self.slices[name]
        return self.mu_joint[sl].copy(), self.psi_joint[sl, sl].copy()

    def solve_ctot(self, B):
        """C_tot^{-1} B via the stored Cholesky factor."""
        return scipy.linalg.cho_solve((self.L_ctot, True), B)

    @property
    def terms_data(self):
        if not hasattr(self, "_terms_data"):
            self._terms_data, _ = materialize_terms(
                self.spec, self.catalog, self.erg_coeffs)
        return self._terms_data

    def record_contributions(self):
        """Posterior-mean record-level effect of each term, as a dict.

        The cell term reports dR @ mu_ca_post - c7 * R_rup (its effect
        relative to the ergodic model).
        """
        out = {}
        for td in self.terms_data:
            mu = self.mu_joint[self.slices[td.term.name]]
            vals = td.D @ mu
            if td.term.design == "cells":
                vals = vals - self.erg_coeffs.c7 * self.catalog.r_rup
            out[td.term.name] = vals
        return out

    def prior_record_sd(self):
        """Per-record prior sd of the full non-ergodic model (epistemic
        prior variances plus tau0^2 + phi0^2)."""
        var = np.full(self.catalog.n_records,
                      self.hyper.tau0 ** 2 + self.hyper.phi0 ** 2)
        for td, params in zip(self.terms_data, self.hyper.term_params):
            var = var + td.prior_record_var(params)
        return np.sqrt(var)


def _centroid_record(catalog):
    mid = 0.5 * (catalog.eq_xy + catalog.sta_xy)
    center = mid.mean(axis=0)
    return int(np.argmin(np.linalg.norm(mid - center, axis=1)))


def build_nerg_fit(catalog, residuals, spec, hyper, erg_coeffs,
                   n_evals=0, loglik=None):
    """Exact coefficient posteriors at fixed hyperparameters.

    Builds the dense C_tot once, conditions every coefficient block on the
    centered residuals, and assembles the joint posterior covariance
    including cross-term blocks.
    """
    if not spec.terms:
        raise ValidationError("model spec has no terms")
    terms_data, dR = materialize_terms(spec, catalog, erg_coeffs)
    mu_ca = resolve_mu_ca(spec, erg_coeffs)
    m_prior = prior_mean_records(spec, catalog, erg_coeffs, dR)
    z = residuals - m_prior
    Ze = catalog.event_indicator()

    Ks = [td.kernel_mat(p) for td, p in zip(terms_data, hyper.term_params)]
    U = _loading(terms_data, hyper, Ze)
    C = hyper.phi0 ** 2 * np.eye(catalog.n_records) + U @ U.T
    L_ctot = chol_with_jitter(C)
    solve = lambda B: scipy.linalg.cho_solve((L_ctot, True), B)

    if loglik is None:
        logdet = 2.0 * float(np.sum(np.log(np.diag(L_ctot))))
        loglik = -0.5 * (catalog.n_records * np.log(2 * np.pi) + logdet
                         + float(z @ solve(z)))

    # joint posterior over all coefficient blocks
    slices = {}
    pos = 0
    B_blocks = []
    prior_mean_joint = []
    for td, K in zip(terms_data, Ks):
        slices[td.term.name] = slice(pos, pos + td.m)
        pos += td.m
        B_blocks.append(td.D @ K)
        mean_i = mu_ca if td.term.design == "cells" else 0.0
        prior_mean_joint.append(np.full(td.m, mean_i))
    m_tot = pos
    B = np.hstack(B_blocks) if B_blocks else np.zeros((catalog.n_records, 0))
    prior_mean_joint = np.concatenate(prior_mean_joint)

    alpha = solve(z)
    mu_joint = prior_mean_joint + B.T @ alpha
    CinvB = solve(B)
    psi_joint = scipy.linalg.block_diag(*Ks) - B.T @ CinvB
    psi_joint = 0.5 * (psi_joint + psi_joint.T)

    dB0 = hyper.tau0 ** 2 * (Ze.T @ alpha)
    dWS0 = hyper.phi0 ** 2 * alpha

    cell_posterior = None
    if spec.cell_term is not None:
        sl = slices[spec.cell_term.name]
        mu_cell = mu_joint[sl]
        psi_diag = np.sqrt(np.clip(np.diag(psi_joint[sl, sl]), 0.0, None))
        clamped, report = clamp_and_report(mu_cell)
        cell_posterior = CellAttenPosterior(mu_ca=clamped, psi_ca=psi_diag,
                                            mu_prior=mu_ca, report=report)

    fit = NergFit(spec=spec, hyper=hyper, erg_coeffs=erg_coeffs,
                  catalog=catalog, residuals=np.asarray(residuals, float),
                  z=z, mu_joint=mu_joint, psi_joint=psi_joint, slices=slices,
                  L_ctot=L_ctot, event_terms=dB0, noise_residuals=dWS0,
                  loglik=float(loglik), variance_check=0.0,
                  cell_posterior=cell_posterior, dR=dR, n_evals=n_evals)
    fit._terms_data = terms_data
    fit.variance_check = float(fit.prior_record_sd()[_centroid_record(catalog)])
    return fit


def fit_nerg(catalog, residuals, spec, config):
    """MAP hyperparameter estimation followed by exact posteriors.

    Returns
    -------
    NergFit

    Raises
    ------
    ValidationError
        Empty spec, missing ergodic coefficients for designs that need them.
    ConvergenceError
        Optimizer budget exhausted.
    """
    if not spec.terms:
        raise ValidationError("model spec has no terms; nothing to fit")
    residuals = np.asarray(residuals, dtype=float)
    erg_coeffs = config.erg_coeffs
    terms_data, dR = materialize_terms(spec, catalog, erg_coeffs)
    m_prior = prior_mean_records(spec, catalog, erg_coeffs, dR)
    z = residuals - m_prior
    Ze = catalog.event_indicator()

    pen_scale = config.penalty_scale
    if pen_scale is None:
        pen_scale = max(float(np.std(z)), 1e-3)

    lo = config.sd_bounds[0]
    # moment starts for the aleatory pair
    from .ergodic import _moment_start
    tau_b, phi_w = _moment_start(z, catalog.event_index, catalog.n_events)
    tau0_init = config.tau0_init if config.tau0_init is not None else tau_b
    phi0_init = config.phi0_init if config.phi0_init is not None else phi_w
    tau0_init = min(max(tau0_init, 10 * lo), config.sd_bounds[1])
    phi0_init = min(max(phi0_init, 10 * lo), config.sd_bounds[1])

    x0 = []
    for term in spec.terms:
        om_init = term.omega_init or (0.5 * pen_scale,) * term.n_parts
        el_init = term.ell_init or (np.sqrt(term.ell_bounds[0]
                                            * term.ell_bounds[1]),) * term.n_parts
        for j, kind in enumerate(term.kinds):
            x0.append(min(max(om_init[j], term.omega_bounds[0]),
                          term.omega_bounds[1]))
            if kind in EXP_KINDS:
                x0.append(el_init[j])
    x0.extend([tau0_init, phi0_init])
    bounds = _hyper_bounds(spec, config.sd_bounds)
    layout = _hyper_layout(spec)

    def neg_objective(x):
        hyper = hyper_from_vector(spec, x)
        cov = LowRankCov(_loading(terms_data, hyper, Ze), hyper.phi0 ** 2)
        ll = cov.loglik(z)
        pen = 0.0
        for xi, (_, _, kind) in zip(x, layout):
            if kind == "omega":
                pen -= 0.5 * (xi / pen_scale) ** 2   # half-normal
            elif kind == "ell":
                pen -= np.log(xi)                    # log-uniform in ell
        return -(ll + pen)

    if config.optimize:
        res = minimize_bounded(neg_objective, x0, bounds,
                               max_evals=config.max_evals,
                               rel_tol=config.rel_tol)
        hyper = hyper_from_vector(spec, res.x)
        n_evals = res.n_evals
    else:
        hyper = hyper_from_vector(spec, np.asarray(x0))
        n_evals = 0

    logger.info("non-ergodic fit: tau0=%.4f phi0=%.4f (%d evals)",
                hyper.tau0, hyper.phi0, n_evals)
    return build_nerg_fit(catalog, residuals, spec, hyper, erg_coeffs,
                          n_evals=n_evals)


def decompose(fit, index=None):
    """Split fitted systematic effects into (dL2L, dP2P, dS2S) per record.

    Role sums of the posterior-mean term contributions; the cell term's
    contribution subtracts the ergodic c7 * R_rup it replaces. Records
    without any path term report dP2P = 0.

    Parameters
    ----------
    fit : NergFit
    index : int or array of int, optional
        Record subset; default all records.

    Returns
    -------
    (dL2L, dP2P, dS2S) : ndarrays
    """
    contrib = fit.record_contributions()
    n = fit.catalog.n_records
    sums = {"E": np.zeros(n), "P": np.zeros(n), "S": np.zeros(n)}
    for term in fit.spec.terms:
        sums[term.role] = sums[term.role] + contrib[term.name]
    if index is None:
        return sums["E"], sums["P"], sums["S"]
    return sums["E"][index], sums["P"][index], sums["S"][index]
