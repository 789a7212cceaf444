"""Synthetic catalogs with fully known ground truth, plus the dense
Gaussian-conditioning oracle used to verify every closed-form prediction.

The generator samples a fixed station network and a set of source locations
uniformly in a planar region, attaches events to source locations (several
events may share one location, which is what makes a source-location term
identifiable), draws every latent coefficient field exactly from its kernel
prior, and composes the response. Everything drawn is returned, so recovery
tests can compare against exact latent values.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gmm
from .catalog import Catalog, Record, validate_catalog
from .errors import NumericalError, ValidationError
from .linalg import chol_with_jitter
from .nonergodic import (Hyperparameters, ModelSpec, materialize_terms,
                         resolve_mu_ca, term_kernel)


@dataclass
class SynthConfig:
    """Settings of the synthetic-catalog generator.

    The true non-ergodic structure is a ModelSpec plus Hyperparameters; an
    empty spec generates a purely ergodic catalog with aleatory (tau0,
    phi0) only.
    """

    region: tuple = (0.0, 400.0, 0.0, 400.0)    # x_min, x_max, y_min, y_max
    n_events: int = 100
    events_per_location: int = 1
    n_stations: int = 60
    stations_per_event: tuple = (5, 20)         # inclusive bounds
    mag_range: tuple = (3.0, 7.2)
    dist_range: tuple = (1.0, 400.0)
    vs30_range: tuple = (180.0, 1200.0)
    coeffs: gmm.ErgodicCoeffs = field(
        default_factory=lambda: gmm.apply_full_saturation(
            gmm.ErgodicCoeffs(c1=3.5, c2=0.8, c3=0.0, c4=-1.2, c6=6.0,
                              c7=-0.005, c10=-0.4)))
    spec: ModelSpec = field(default_factory=lambda: ModelSpec(terms=()))
    hyper: Hyperparameters = field(
        default_factory=lambda: Hyperparameters(term_params=(), tau0=0.4,
                                                phi0=0.55))
    seed: int = 0

    def validate(self):
        x0, x1, y0, y1 = self.region
        if not (x1 > x0 and y1 > y0):
            raise ValidationError(f"degenerate region {self.region}")
        for name in ("mag_range", "dist_range", "vs30_range"):
            lo, hi = getattr(self, name)
            if not hi >= lo:
                raise ValidationError(f"{name} not ordered: ({lo}, {hi})")
        if self.n_events < 1 or self.n_stations < 1:
            raise ValidationError("need at least one event and one station")
        if self.events_per_location < 1:
            raise ValidationError("events_per_location must be >= 1")
        lo, hi = self.stations_per_event
        if not (1 <= lo <= hi):
            raise ValidationError(
                f"stations_per_event bounds not ordered: ({lo}, {hi})")
        if len(self.spec.terms) != len(self.hyper.term_params):
            raise ValidationError(
                "spec terms and hyperparameter entries do not align")


@dataclass
class GroundTruth:
    """Every latent quantity behind a generated catalog."""

    coeffs: gmm.ErgodicCoeffs
    spec: ModelSpec
    hyper: Hyperparameters
    fields: dict                  # term name -> values on the term support
    contributions: dict           # term name -> per-record effect
    dB0: np.ndarray               # per event
    dWS0: np.ndarray              # per record
    f_erg_vals: np.ndarray
    dL2L: np.ndarray
    dP2P: np.ndarray
    dS2S: np.ndarray


def generate(config):
    """Draw a synthetic catalog and its ground truth.

    Returns
    -------
    (Catalog, GroundTruth)

    Raises
    ------
    ValidationError
        Bad configuration, or a region too small to give any event an
        eligible station under the distance window.
    """
    config.validate()
    rng = np.random.Generator(np.random.Philox(config.seed))
    x0, x1, y0, y1 = config.region

    station_xy = np.column_stack([rng.uniform(x0, x1, config.n_stations),
                                  rng.uniform(y0, y1, config.n_stations)])
    vs30_sta = np.exp(rng.uniform(np.log(config.vs30_range[0]),
                                  np.log(config.vs30_range[1]),
                                  config.n_stations))
    n_loc = -(-config.n_events // config.events_per_location)   # ceil
    source_xy = np.column_stack([rng.uniform(x0, x1, n_loc),
                                 rng.uniform(y0, y1, n_loc)])
    mags = rng.uniform(config.mag_range[0], config.mag_range[1],
                       config.n_events)

    lo_k, hi_k = config.stations_per_event
    records = []
    for e in range(config.n_events):
        exy = source_xy[e // config.events_per_location]
        dists = np.linalg.norm(station_xy - exy, axis=1)
        eligible = np.flatnonzero((dists >= config.dist_range[0])
                                  & (dists <= config.dist_range[1]))
        if eligible.size == 0:
            raise ValidationError(
                f"event {e}: no station within the distance window "
                f"{config.dist_range}; region too small for the requested "
                "layout")
        k = int(rng.integers(lo_k, hi_k + 1))
        chosen = rng.choice(eligible, size=min(k, eligible.size),
                            replace=False)
        for s in np.sort(chosen):
            records.append(Record(event_id=e, station_id=int(s),
                                  mag=float(mags[e]),
                                  r_rup=float(dists[s]),
                                  vs30=float(vs30_sta[s]),
                                  t_E=(float(exy[0]), float(exy[1])),
                                  t_S=(float(station_xy[s][0]),
                                       float(station_xy[s][1])),
                                  y=0.0))
    catalog = Catalog(records)

    f0 = gmm.f_erg(config.coeffs, catalog.mag, catalog.r_rup, catalog.vs30)
    y = np.asarray(f0, dtype=float).copy()
    fields, contributions = {}, {}
    role_sums = {"E": np.zeros(catalog.n_records),
                 "P": np.zeros(catalog.n_records),
                 "S": np.zeros(catalog.n_records)}

    terms_data, _ = materialize_terms(config.spec, catalog, config.coeffs)
    mu_ca = resolve_mu_ca(config.spec, config.coeffs)
    for td, params in zip(terms_data, config.hyper.term_params):
        K = td.kernel_mat(params)
        L = chol_with_jitter(K)
        mean = mu_ca if td.term.design == "cells" else 0.0
        vals = mean + L @ rng.standard_normal(td.m)
        effect = td.D @ vals
        if td.term.design == "cells":
            # the cell field replaces the ergodic linear distance term
            effect = effect - config.coeffs.c7 * catalog.r_rup
        fields[td.term.name] = vals
        contributions[td.term.name] = effect
        role_sums[td.term.role] = role_sums[td.term.role] + effect
        y += effect

    dB0 = config.hyper.tau0 * rng.standard_normal(catalog.n_events)
    dWS0 = config.hyper.phi0 * rng.standard_normal(catalog.n_records)
    y += dB0[catalog.event_index] + dWS0

    final_records = [Record(event_id=r.event_id, station_id=r.station_id,
                            mag=r.mag, r_rup=r.r_rup, vs30=r.vs30, t_E=r.t_E,
                            t_S=r.t_S, y=float(y[i]))
                     for i, r in enumerate(records)]
    catalog = validate_catalog(final_records)
    truth = GroundTruth(coeffs=config.coeffs, spec=config.spec,
                        hyper=config.hyper, fields=fields,
                        contributions=contributions, dB0=dB0, dWS0=dWS0,
                        f_erg_vals=np.asarray(f0, dtype=float),
                        dL2L=role_sums["E"], dP2P=role_sums["P"],
                        dS2S=role_sums["S"])
    return catalog, truth


def oracle_condition(joint_mean, joint_cov, observed_idx, observed_vals):
    """Textbook Gaussian conditioning by direct dense solve.

    Deliberately independent of the package's prediction code paths: plain
    index partitioning and one np.linalg.solve on the observed block. The
    returned mean/cov keep the full dimension, with observed entries set to
    their values and zero (co)variance.

    Parameters
    ----------
    joint_mean : ndarray, shape (d,)
    joint_cov : ndarray, shape (d, d)
    observed_idx : array of int
    observed_vals : ndarray

    Returns
    -------
    (mean, cov) : full-dimension conditional moments.

    Raises
    ------
    NumericalError
        Singular observed block.
    """
    mean = np.asarray(joint_mean, dtype=float).copy()
    cov = np.asarray(joint_cov, dtype=float).copy()
    obs = np.asarray(observed_idx, dtype=int)
    vals = np.asarray(observed_vals, dtype=float)
    if obs.size == 0:
        return mean, cov
    d = mean.size
    hid = np.setdiff1d(np.arange(d), obs)

    S_oo = cov[np.ix_(obs, obs)]
    S_ho = cov[np.ix_(hid, obs)]
    S_hh = cov[np.ix_(hid, hid)]
    try:
        gain = np.linalg.solve(S_oo, np.eye(obs.size))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"observed block singular: {exc}") from exc

    new_mean = np.empty(d)
    new_mean[obs] = vals
    new_mean[hid] = mean[hid] + S_ho @ gain @ (vals - mean[obs])
    new_cov = np.zeros((d, d))
    new_cov[np.ix_(hid, hid)] = S_hh - S_ho @ gain @ S_ho.T
    return new_mean, new_cov


def oracle_condition_precision(joint_mean, joint_cov, observed_idx,
                               observed_vals):
    """Second conditioning implementation through the precision matrix.

    Exists purely to cross-check ``oracle_condition``: the conditional
    covariance is the inverse of the hidden block of the precision matrix,
    and the conditional mean solves that block against the cross terms.
    """
    mean = np.asarray(joint_mean, dtype=float).copy()
    cov = np.asarray(joint_cov, dtype=float).copy()
    obs = np.asarray(observed_idx, dtype=int)
    vals = np.asarray(observed_vals, dtype=float)
    if obs.size == 0:
        return mean, cov
    d = mean.size
    hid = np.setdiff1d(np.arange(d), obs)
    prec = np.linalg.inv(cov)
    L_hh = prec[np.ix_(hid, hid)]
    L_ho = prec[np.ix_(hid, obs)]
    cov_h = np.linalg.inv(L_hh)
    new_mean = np.empty(d)
    new_mean[obs] = vals
    new_mean[hid] = mean[hid] - cov_h @ L_ho @ (vals - mean[obs])
    new_cov = np.zeros((d, d))
    new_cov[np.ix_(hid, hid)] = cov_h
    return new_mean, new_cov
