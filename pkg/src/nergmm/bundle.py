"""Versioned persistence of fitted models.

A bundle is a compressed npz holding every array a prediction needs (joint
posterior, Cholesky factor of the residual covariance, centered residuals,
catalog columns) plus a JSON manifest with the model structure. Loading
reconstructs a NergFit that predicts identically to the in-memory original.
"""

import json

import numpy as np

from .catalog import Catalog, Record
from .cells import CellAttenPosterior, CellGrid, ClampReport
from .errors import ValidationError
from .gmm import ErgodicCoeffs
from .nonergodic import Hyperparameters, ModelSpec, NergFit, TermSpec

MAGIC = "NERGMM_BUNDLE"
SCHEMA_VERSION = 1


def _spec_to_payload(spec):
    terms = []
    for t in spec.terms:
        d = {"name": t.name, "role": t.role, "kinds": list(t.kinds),
             "input": t.input, "design": t.design,
             "omega_bounds": list(t.omega_bounds),
             "ell_bounds": list(t.ell_bounds),
             "omega_init": list(t.omega_init) if t.omega_init else None,
             "ell_init": list(t.ell_init) if t.ell_init else None,
             "grid": None}
        if t.grid is not None:
            g = t.grid
            d["grid"] = {"origin_x": g.x0, "origin_y": g.y0, "dx": g.dx,
                         "dy": g.dy, "nx": g.nx, "ny": g.ny}
        terms.append(d)
    return {"terms": terms, "mu_ca": spec.mu_ca,
            "origin_convention": spec.origin_convention}


def _spec_from_payload(payload):
    terms = []
    for d in payload["terms"]:
        grid = None
        if d["grid"] is not None:
            g = d["grid"]
            grid = CellGrid(x0=g["origin_x"], y0=g["origin_y"], dx=g["dx"],
                            dy=g["dy"], nx=int(g["nx"]), ny=int(g["ny"]))
        terms.append(TermSpec(
            name=d["name"], role=d["role"], kinds=tuple(d["kinds"]),
            input=d["input"], design=d["design"], grid=grid,
            omega_bounds=tuple(d["omega_bounds"]),
            ell_bounds=tuple(d["ell_bounds"]),
            omega_init=tuple(d["omega_init"]) if d["omega_init"] else None,
            ell_init=tuple(d["ell_init"]) if d["ell_init"] else None))
    return ModelSpec(terms=tuple(terms), mu_ca=payload["mu_ca"],
                     origin_convention=payload["origin_convention"])


def save_bundle(path, fit, extra=None):
    """Write a fitted non-ergodic model to a bundle file.

    Parameters
    ----------
    path : str
    fit : NergFit
    extra : dict, optional
        JSON-able metadata (e.g. the ergodic fit summary) stored verbatim.
    """
    cat = fit.catalog
    manifest = {
        "magic": MAGIC,
        "schema_version": SCHEMA_VERSION,
        "spec": _spec_to_payload(fit.spec),
        "hyper": {"term_params": [[list(p) for p in tp]
                                  for tp in fit.hyper.term_params],
                  "tau0": fit.hyper.tau0, "phi0": fit.hyper.phi0},
        "erg_coeffs": {k: getattr(fit.erg_coeffs, k)
                       for k in ("c1", "c2", "c3", "c4", "c5", "c6", "c7",
                                 "c10", "v_ref")},
        "loglik": fit.loglik,
        "variance_check": fit.variance_check,
        "n_evals": fit.n_evals,
        "has_cell": fit.cell_posterior is not None,
        "cell_mu_prior": (fit.cell_posterior.mu_prior
                          if fit.cell_posterior is not None else None),
        "extra": extra or {},
    }
    arrays = {
        "eqid": cat.event_ids[cat.event_index],
        "ssn": cat.station_ids[cat.station_index],
        "mag": cat.mag, "rrup": cat.r_rup, "vs30": cat.vs30,
        "eq_xy": cat.eq_xy, "sta_xy": cat.sta_xy, "y": cat.y,
        "residuals": fit.residuals, "z": fit.z,
        "mu_joint": fit.mu_joint, "psi_joint": fit.psi_joint,
        "L_ctot": fit.L_ctot,
        "event_terms": fit.event_terms,
        "noise_residuals": fit.noise_residuals,
    }
    if fit.dR is not None:
        arrays["dR"] = fit.dR
    if fit.cell_posterior is not None:
        cp = fit.cell_posterior
        arrays["cell_mu"] = cp.mu_ca
        arrays["cell_psi"] = cp.psi_ca
        arrays["cell_clamped_idx"] = cp.report.clamped_indices
        arrays["cell_clamped_orig"] = cp.report.original_values
    np.savez_compressed(path, manifest=np.array(json.dumps(manifest)),
                        **arrays)


def load_bundle(path):
    """Load a bundle back into a NergFit.

    Returns
    -------
    (fit, extra) : NergFit and the stored metadata dict.

    Raises
    ------
    ValidationError
        Not a bundle, or an unsupported schema version.
    """
    with np.load(path, allow_pickle=False) as data:
        try:
            manifest = json.loads(str(data["manifest"]))
        except KeyError:
            raise ValidationError(f"{path}: not a model bundle") from None
        if manifest.get("magic") != MAGIC:
            raise ValidationError(f"{path}: not a model bundle")
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(
                f"{path}: unsupported bundle schema "
                f"{manifest.get('schema_version')}")
        arrays = {k: data[k] for k in data.files if k != "manifest"}

    records = [Record(event_id=int(arrays["eqid"][i]),
                      station_id=int(arrays["ssn"][i]),
                      mag=float(arrays["mag"][i]),
                      r_rup=float(arrays["rrup"][i]),
                      vs30=float(arrays["vs30"][i]),
                      t_E=tuple(arrays["eq_xy"][i]),
                      t_S=tuple(arrays["sta_xy"][i]),
                      y=float(arrays["y"][i]))
               for i in range(arrays["mag"].size)]
    catalog = Catalog(records)

    spec = _spec_from_payload(manifest["spec"])
    hyper = Hyperparameters(
        term_params=tuple(tuple((p[0], p[1]) for p in tp)
                          for tp in manifest["hyper"]["term_params"]),
        tau0=manifest["hyper"]["tau0"], phi0=manifest["hyper"]["phi0"])
    erg_coeffs = ErgodicCoeffs(**manifest["erg_coeffs"])

    slices = {}
    pos = 0
    sizes = {"t_E": catalog.n_events, "event": catalog.n_events,
             "t_S": catalog.n_stations, "station": catalog.n_stations}
    for t in spec.terms:
        m = t.grid.n_cells if t.design == "cells" else sizes[t.input]
        slices[t.name] = slice(pos, pos + m)
        pos += m

    cell_posterior = None
    if manifest["has_cell"]:
        report = ClampReport(
            n_cells=int(arrays["cell_mu"].size),
            clamped_indices=arrays["cell_clamped_idx"].astype(int),
            original_values=arrays["cell_clamped_orig"])
        cell_posterior = CellAttenPosterior(
            mu_ca=arrays["cell_mu"], psi_ca=arrays["cell_psi"],
            mu_prior=manifest["cell_mu_prior"], report=report)

    fit = NergFit(spec=spec, hyper=hyper, erg_coeffs=erg_coeffs,
                  catalog=catalog, residuals=arrays["residuals"],
                  z=arrays["z"], mu_joint=arrays["mu_joint"],
                  psi_joint=arrays["psi_joint"], slices=slices,
                  L_ctot=arrays["L_ctot"], event_terms=arrays["event_terms"],
                  noise_residuals=arrays["noise_residuals"],
                  loglik=float(manifest["loglik"]),
                  variance_check=float(manifest["variance_check"]),
                  cell_posterior=cell_posterior,
                  dR=arrays.get("dR"), n_evals=int(manifest["n_evals"]))
    return fit, manifest["extra"]
