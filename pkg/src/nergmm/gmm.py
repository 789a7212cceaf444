"""Ergodic median model: functional form, saturation tie, design matrix.

The median log ground motion is

    f = c1 + c2*M + c3*(8.5 - M)**2 + (c4 + c5*M)*ln(R_rup + c6)
        + c7*R_rup + c10*ln(Vs30/v_ref)

covering magnitude scaling, geometrical spreading with magnitude-dependent
slope, linear anelastic attenuation, and linear site response. Full magnitude
saturation at zero distance ties c5 = -c2/ln(c6), which cancels the linear
magnitude term as R_rup -> 0.
"""

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, ModelQualityWarning

V_REF_DEFAULT = 760.0   # m/s, reference velocity of the linear site term


@dataclass(frozen=True)
class ErgodicCoeffs:
    """Coefficients of the ergodic median model.

    c6 is a pseudo-depth and must exceed 1 km so ln(c6) > 0 and the
    saturation tie is well defined. c7 is anelastic attenuation per km and
    should be non-positive; a positive value is physically suspect and only
    warns, so that unconstrained regressions on noisy data can still return.
    """

    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    c6: float = 6.0
    c7: float = 0.0
    c10: float = 0.0
    v_ref: float = V_REF_DEFAULT

    def __post_init__(self):
        if not self.c6 > 1.0:
            raise ConstraintError(f"c6 must be > 1 km, got {self.c6}")
        if not self.v_ref > 0:
            raise ConstraintError(f"v_ref must be > 0, got {self.v_ref}")
        if self.c7 > 0:
            warnings.warn(
                f"c7 = {self.c7:+.4g} is positive; anelastic attenuation "
                "should be <= 0",
                ModelQualityWarning,
                stacklevel=2,
            )

    def as_array(self):
        return np.array([self.c1, self.c2, self.c3, self.c4, self.c5,
                         self.c6, self.c7, self.c10])


def apply_full_saturation(coeffs):
    """Return coefficients with the zero-distance saturation tie applied.

    Sets c5 = -c2 / ln(c6) so the linear magnitude scaling cancels at
    R_rup -> 0; all other fields are unchanged. The quadratic magnitude term
    (c3) is outside the tie, so strict magnitude independence at zero
    distance additionally requires c3 = 0.

    Raises
    ------
    ConstraintError
        If c6 <= 1 (guarded by the coefficient type itself).
    """
    return dataclasses.replace(coeffs, c5=-coeffs.c2 / np.log(coeffs.c6))


def f_erg(coeffs, mag, r_rup, vs30):
    """Evaluate the ergodic median. Broadcasts over array inputs.

    Parameters
    ----------
    coeffs : ErgodicCoeffs
    mag, r_rup, vs30 : float or ndarray

    Returns
    -------
    float or ndarray
    """
    mag = np.asarray(mag, dtype=float)
    r_rup = np.asarray(r_rup, dtype=float)
    vs30 = np.asarray(vs30, dtype=float)
    c = coeffs
    out = (c.c1
           + c.c2 * mag
           + c.c3 * (8.5 - mag) ** 2
           + (c.c4 + c.c5 * mag) * np.log(r_rup + c.c6)
           + c.c7 * r_rup
           + c.c10 * np.log(vs30 / c.v_ref))
    return out if out.ndim else float(out)


# column order of the profiled (linear) coefficients
DESIGN_NAMES_SAT = ("c1", "c2", "c3", "c4", "c7", "c10")
DESIGN_NAMES_FREE = ("c1", "c2", "c3", "c4", "c5", "c7", "c10")


def design_matrix(mag, r_rup, vs30, c6, v_ref=V_REF_DEFAULT, saturated=True):
    """Design matrix of the linear coefficients for GLS profiling.

    With the saturation tie active, c5 is not a free column: the c2 column
    becomes M * (1 - ln(R_rup + c6)/ln(c6)), which is the derivative of the
    tied model w.r.t. c2.

    Returns
    -------
    X : ndarray, shape (n, 6) or (n, 7)
    names : tuple of str
        Coefficient name per column.
    """
    mag = np.atleast_1d(np.asarray(mag, dtype=float))
    r_rup = np.atleast_1d(np.asarray(r_rup, dtype=float))
    vs30 = np.atleast_1d(np.asarray(vs30, dtype=float))
    if not c6 > 1.0:
        raise ConstraintError(f"c6 must be > 1 km, got {c6}")
    ln_r = np.log(r_rup + c6)
    ones = np.ones_like(mag)
    site = np.log(vs30 / v_ref)
    if saturated:
        cols = [ones, mag * (1.0 - ln_r / np.log(c6)), (8.5 - mag) ** 2,
                ln_r, r_rup, site]
        return np.column_stack(cols), DESIGN_NAMES_SAT
    cols = [ones, mag, (8.5 - mag) ** 2, ln_r, mag * ln_r, r_rup, site]
    return np.column_stack(cols), DESIGN_NAMES_FREE


def coeffs_from_solution(beta, c6, v_ref=V_REF_DEFAULT, saturated=True):
    """Map a GLS solution vector back to ErgodicCoeffs.

    Inverse of ``design_matrix``'s column layout; with the tie active the
    derived c5 = -c2/ln(c6) is filled in.
    """
    beta = np.asarray(beta, dtype=float)
    with warnings.catch_warnings():
        # GLS on noisy data may produce slightly positive c7; warning is
        # surfaced by the calling fit, not per inner iteration
        warnings.simplefilter("ignore", ModelQualityWarning)
        if saturated:
            c1, c2, c3, c4, c7, c10 = beta
            coeffs = ErgodicCoeffs(c1=c1, c2=c2, c3=c3, c4=c4,
                                   c5=-c2 / np.log(c6), c6=c6, c7=c7,
                                   c10=c10, v_ref=v_ref)
        else:
            c1, c2, c3, c4, c5, c7, c10 = beta
            coeffs = ErgodicCoeffs(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6,
                                   c7=c7, c10=c10, v_ref=v_ref)
    return coeffs
