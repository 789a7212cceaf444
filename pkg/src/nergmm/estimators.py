"""Estimator-style wrappers with the fit/predict + get_params convention.

These wrap the functional layer for pipeline use. Constructor arguments
are stored verbatim (no validation, no mutation) so ``get_params`` /
``set_params`` round-trip and ``sklearn.base.clone`` works; all learned
state lands in trailing-underscore attributes during ``fit``.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .catalog import scenarios_to_arrays
from .ergodic import ErgodicFitConfig, fit_ergodic
from .gmm import V_REF_DEFAULT, f_erg
from .nonergodic import NergConfig, default_model_spec, fit_nerg
from .predict import predict_gm


class ErgodicGmm(BaseEstimator):
    """Ergodic ground-motion model with event random effects.

    Parameters
    ----------
    saturated : bool
        Tie the magnitude-distance scaling so the distance slope cancels
        the linear magnitude term at zero distance.
    c6 : float
        Near-field saturation distance, km.
    estimate_c6 : bool
        Optimize c6 along with the variance components.
    v_ref : float
        Reference shear-wave velocity, m/s.
    """

    def __init__(self, saturated=True, c6=6.0, estimate_c6=False,
                 v_ref=V_REF_DEFAULT):
        self.saturated = saturated
        self.c6 = c6
        self.estimate_c6 = estimate_c6
        self.v_ref = v_ref

    def fit(self, X, y=None):
        config = ErgodicFitConfig(saturated=self.saturated, c6=self.c6,
                                  estimate_c6=self.estimate_c6,
                                  v_ref=self.v_ref)
        fit = fit_ergodic(X, config)
        self.fit_ = fit
        self.coeffs_ = fit.coeffs
        self.tau_ = fit.tau
        self.phi_ = fit.phi
        self.loglik_ = fit.loglik
        return self

    def predict(self, X):
        """Median ln-motion for scenarios (list of Scenario or Catalog)."""
        if hasattr(X, "mag"):
            mag, r_rup, vs30 = X.mag, X.r_rup, X.vs30
        else:
            arrs = scenarios_to_arrays(X)
            mag, r_rup, vs30 = arrs["mag"], arrs["r_rup"], arrs["vs30"]
        return f_erg(self.coeffs_, np.asarray(mag, dtype=float),
                     np.asarray(r_rup, dtype=float),
                     np.asarray(vs30, dtype=float))


class NonErgodicGmm(BaseEstimator):
    """Two-stage model: ergodic backbone plus spatial adjustment terms.

    Parameters
    ----------
    spec : ModelSpec or None
        Term layout. None uses the default source/site layout (no cell
        attenuation).
    saturated, c6, estimate_c6, v_ref :
        Passed to the ergodic stage.
    max_evals, rel_tol :
        Hyperparameter search budget and convergence tolerance.
    optimize : bool
        False skips the search and conditions at the initial values.
    """

    def __init__(self, spec=None, saturated=True, c6=6.0, estimate_c6=False,
                 v_ref=V_REF_DEFAULT, max_evals=2000, rel_tol=1e-8,
                 optimize=True):
        self.spec = spec
        self.saturated = saturated
        self.c6 = c6
        self.estimate_c6 = estimate_c6
        self.v_ref = v_ref
        self.max_evals = max_evals
        self.rel_tol = rel_tol
        self.optimize = optimize

    def fit(self, X, y=None):
        erg = ErgodicGmm(saturated=self.saturated, c6=self.c6,
                         estimate_c6=self.estimate_c6, v_ref=self.v_ref)
        erg.fit(X)
        self.ergodic_ = erg
        residuals = X.y - erg.predict(X)
        spec = self.spec if self.spec is not None else default_model_spec()
        config = NergConfig(erg_coeffs=erg.coeffs_, max_evals=self.max_evals,
                            rel_tol=self.rel_tol, optimize=self.optimize)
        self.fit_ = fit_nerg(X, residuals, spec, config)
        self.hyper_ = self.fit_.hyper
        self.tau0_ = self.fit_.hyper.tau0
        self.phi0_ = self.fit_.hyper.phi0
        return self

    def predict(self, X, route="direct"):
        """Full prediction (median, epistemic covariance, term splits)."""
        arrs = X if isinstance(X, dict) else scenarios_to_arrays(X)
        return predict_gm(self.fit_, arrs, route=route)
