"""Covariance functions on record indices, entity ids, and planar coordinates.

Five kernel kinds are supported:

    identity             w**2 * 1[k == l]          (record positions)
    group                w**2 * 1[dist(t_k,t_l)=0] (ids or coordinates)
    constant             w**2                      (any inputs)
    exponential          w**2 * exp(-d / ell)
    squared_exponential  w**2 * exp(-d**2 / ell**2)

where d is the Euclidean distance for coordinate pairs and the absolute
difference for scalar ids. Kernels compose by summation; a per-record scaled
term multiplies a kernel by design values x so that an assembled covariance
entry is sum_i x_i[k] * kappa_i(t_i[k], t_i[l]) * x_i[l].
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import HyperparameterError, ValidationError

KINDS = ("identity", "group", "constant", "exponential", "squared_exponential")

# coordinates closer than this (km) are the same GP input point
SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Kernel:
    """A single covariance function.

    Parameters
    ----------
    kind : str
        One of ``KINDS``.
    omega : float
        Scale (standard deviation of the term), >= 0.
    ell : float, optional
        Correlation length in km; required and > 0 for the exponential kinds.
    """

    kind: str
    omega: float
    ell: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise HyperparameterError(f"unknown kernel kind {self.kind!r}")
        if not self.omega >= 0.0:
            raise HyperparameterError(f"omega must be >= 0, got {self.omega}")
        if self.kind in ("exponential", "squared_exponential"):
            if self.ell is None or not self.ell > 0.0:
                raise HyperparameterError(
                    f"{self.kind} kernel needs ell > 0, got {self.ell}")
        elif self.ell is not None:
            raise HyperparameterError(
                f"{self.kind} kernel takes no ell, got {self.ell}")

    @property
    def parts(self):
        return (self,)


@dataclass(frozen=True)
class KernelSum:
    """Pointwise sum of kernels (a valid covariance function)."""

    kernels: tuple

    @property
    def parts(self):
        return self.kernels


def sum_kernels(a, b):
    """Compose two kernel expressions by summation.

    Identity kernels act on record positions while the other kinds act on
    entity inputs, so an identity kernel cannot be summed with a
    coordinate/id kernel.
    """
    parts = tuple(a.parts) + tuple(b.parts)
    has_identity = any(k.kind == "identity" for k in parts)
    if has_identity and any(k.kind != "identity" for k in parts):
        raise ValidationError(
            "cannot sum an identity (record-position) kernel with an "
            "entity-input kernel")
    return KernelSum(parts)


# scalar forms, convenient for spot checks and docs

def k_identity(k, l, omega):
    """omega**2 if the record positions coincide, else 0."""
    return omega ** 2 if k == l else 0.0


def k_group(t_k, t_l, omega):
    """omega**2 at zero distance (same id or same location), else 0."""
    return omega ** 2 if _dist_scalar(t_k, t_l) <= SNAP_TOL else 0.0


def k_constant(omega):
    """omega**2 for every input pair."""
    return omega ** 2


def k_exponential(t_k, t_l, omega, ell):
    if not ell > 0:
        raise HyperparameterError(f"ell must be > 0, got {ell}")
    return omega ** 2 * np.exp(-_dist_scalar(t_k, t_l) / ell)


def k_squared_exponential(t_k, t_l, omega, ell):
    if not ell > 0:
        raise HyperparameterError(f"ell must be > 0, got {ell}")
    return omega ** 2 * np.exp(-(_dist_scalar(t_k, t_l) / ell) ** 2)


def _dist_scalar(t_k, t_l):
    a = np.asarray(t_k, dtype=float)
    b = np.asarray(t_l, dtype=float)
    if a.ndim == 0:
        return abs(float(a) - float(b))
    return float(np.linalg.norm(a - b))


def _pairwise_dist(A, B):
    """Distances between input arrays: (n,2)/(m,2) coords or (n,)/(m,) ids."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        return np.abs(A[:, None] - B[None, :])
    return cdist(A, B)


def kernel_matrix(kernel, A, B=None):
    """Dense covariance matrix of a kernel expression between input arrays.

    Parameters
    ----------
    kernel : Kernel or KernelSum
    A : ndarray
        Left inputs: shape (n, 2) coordinates, or shape (n,) ids. For the
        identity kind these must be record positions (integers).
    B : ndarray, optional
        Right inputs; defaults to A.

    Returns
    -------
    ndarray, shape (n, m)
    """
    if B is None:
        B = A
    out = None
    for part in kernel.parts:
        if part.kind == "constant":
            n = np.asarray(A).shape[0]
            m = np.asarray(B).shape[0]
            block = np.full((n, m), part.omega ** 2)
        elif part.kind == "identity":
            a = np.asarray(A).ravel()
            b = np.asarray(B).ravel()
            block = part.omega ** 2 * (a[:, None] == b[None, :]).astype(float)
        else:
            d = _pairwise_dist(A, B)
            if part.kind == "group":
                block = part.omega ** 2 * (d <= SNAP_TOL).astype(float)
            elif part.kind == "exponential":
                block = part.omega ** 2 * np.exp(-d / part.ell)
            else:
                block = part.omega ** 2 * np.exp(-((d / part.ell) ** 2))
        out = block if out is None else out + block
    return out


@dataclass(frozen=True)
class ScaledKernelTerm:
    """A kernel with per-record inputs and design multipliers.

    Parameters
    ----------
    kernel : Kernel or KernelSum
    inputs : ndarray
        Per-record kernel inputs, shape (n_records,) for ids or
        (n_records, 2) for coordinates.
    design : ndarray, shape (n_records,)
        Multipliers x_i (e.g. 1, ln of effective distance, ln(Vs30/v_ref)).
    """

    kernel: object
    inputs: np.ndarray
    design: np.ndarray

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        if not np.all(np.isfinite(design)):
            raise ValidationError("term design values must be finite")
        if np.asarray(self.inputs).shape[0] != design.shape[0]:
            raise ValidationError(
                "term inputs and design must have the same record count")


def assemble_cov(terms, rows=None, cols=None):
    """Assemble the record-level covariance of summed scaled kernel terms.

    K[k, l] = sum_i x_i[k] * kappa_i(t_i[k], t_i[l]) * x_i[l], where k, l
    run over ``rows`` and ``cols`` (record index subsets; default all).
    Identity kernels compare the global record positions, so off-diagonal
    row/col subsets behave correctly.

    Returns
    -------
    ndarray, shape (len(rows), len(cols))
    """
    terms = list(terms)
    if not terms:
        raise ValidationError("no terms to assemble")
    n = np.asarray(terms[0].inputs).shape[0]
    for t in terms:
        if np.asarray(t.inputs).shape[0] != n:
            raise ValidationError("terms disagree on the record count")
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=int)
    cols = np.arange(n) if cols is None else np.asarray(cols, dtype=int)

    out = np.zeros((rows.size, cols.size))
    for t in terms:
        inputs = np.asarray(t.inputs)
        design = np.asarray(t.design, dtype=float)
        if any(p.kind == "identity" for p in t.kernel.parts):
            kmat = kernel_matrix(t.kernel, rows, cols)
        else:
            kmat = kernel_matrix(t.kernel, inputs[rows], inputs[cols])
        out += design[rows, None] * kmat * design[None, cols]
    return out
