"""JSON run configurations for the command-line workflow.

Two shapes exist: the synthesis config (true model for catalog generation)
and the fit config (ergodic settings, non-ergodic terms, optimizer). Both
reject unknown keys so typos fail loudly instead of silently using
defaults.
"""

import json

from . import gmm
from .cells import grid_from_dict
from .errors import ValidationError
from .ergodic import ErgodicFitConfig
from .nonergodic import (ELL_BOUNDS, EXP_KINDS, OMEGA_BOUNDS, Hyperparameters,
                         ModelSpec, TermSpec)
from .synth import SynthConfig

_TERM_KEYS = {"name", "role", "kinds", "input", "design", "omega_bounds",
              "ell_bounds", "omega_init", "ell_init", "omega", "ell"}
_FIT_KEYS = {"ergodic", "terms", "cell_grid", "mu_ca", "origin_convention",
             "optimizer", "seeds", "output"}
_ERGODIC_KEYS = {"saturated", "c6", "estimate_c6", "c6_bounds", "v_ref"}
_OPTIMIZER_KEYS = {"max_evals", "rel_tol", "penalty_scale"}
_SYNTH_KEYS = {"region", "n_events", "events_per_location", "n_stations",
               "stations_per_event", "mag_range", "dist_range", "vs30_range",
               "coeffs", "saturated", "terms", "tau0", "phi0", "cell_grid",
               "mu_ca", "origin_convention", "seed"}
_COEFF_KEYS = {"c1", "c2", "c3", "c4", "c5", "c6", "c7", "c10", "v_ref"}


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc


def _check_keys(payload, allowed, where):
    extra = set(payload) - allowed
    if extra:
        raise ValidationError(f"{where}: unknown keys {sorted(extra)}")


def _term_from_dict(d, grid, want_truth):
    """Build a TermSpec (and optionally its true hyper values) from JSON."""
    _check_keys(d, _TERM_KEYS, f"term {d.get('name', '?')!r}")
    for key in ("name", "role", "kinds", "input"):
        if key not in d:
            raise ValidationError(f"term is missing key {key!r}: {d}")
    design = d.get("design", "cells" if d["input"] == "t_C" else "one")
    term_grid = grid if design == "cells" else None
    if design == "cells" and term_grid is None:
        raise ValidationError(
            f"term {d['name']!r} uses cells but no cell_grid is configured")
    term = TermSpec(
        name=d["name"], role=d["role"], kinds=tuple(d["kinds"]),
        input=d["input"], design=design, grid=term_grid,
        omega_bounds=tuple(d.get("omega_bounds", OMEGA_BOUNDS)),
        ell_bounds=tuple(d.get("ell_bounds", ELL_BOUNDS)),
        omega_init=tuple(d["omega_init"]) if d.get("omega_init") else None,
        ell_init=tuple(d["ell_init"]) if d.get("ell_init") else None)
    if not want_truth:
        return term, None
    omegas = d.get("omega")
    if omegas is None:
        raise ValidationError(
            f"term {d['name']!r}: synthesis needs true 'omega' values")
    omegas = list(omegas) if isinstance(omegas, (list, tuple)) else [omegas]
    ells = d.get("ell")
    ells = (list(ells) if isinstance(ells, (list, tuple))
            else [ells] * len(term.kinds))
    if len(omegas) != len(term.kinds):
        raise ValidationError(
            f"term {d['name']!r}: {len(term.kinds)} kernel parts but "
            f"{len(omegas)} omega values")
    params = []
    for kind, om, el in zip(term.kinds, omegas, ells):
        params.append((float(om), float(el) if kind in EXP_KINDS else None))
    return term, tuple(params)


def _spec_from_payload(payload, where):
    grid = None
    if payload.get("cell_grid") is not None:
        grid = grid_from_dict(payload["cell_grid"])
    terms = []
    truths = []
    for d in payload.get("terms", []):
        term, params = _term_from_dict(d, grid, want_truth=(where == "synth"))
        terms.append(term)
        truths.append(params)
    spec = ModelSpec(terms=tuple(terms),
                     mu_ca=payload.get("mu_ca", "from_c7"),
                     origin_convention=payload.get("origin_convention",
                                                   "closest_point"))
    return spec, truths


def read_fit_config(path):
    """Parse a fit config file.

    Returns
    -------
    dict with keys: erg_config (ErgodicFitConfig), spec (ModelSpec),
    optimizer (dict), output (dict of file names).
    """
    payload = _load_json(path)
    _check_keys(payload, _FIT_KEYS, path)
    erg = payload.get("ergodic", {})
    _check_keys(erg, _ERGODIC_KEYS, f"{path}:ergodic")
    erg_config = ErgodicFitConfig(
        saturated=bool(erg.get("saturated", True)),
        c6=float(erg.get("c6", 6.0)),
        estimate_c6=bool(erg.get("estimate_c6", False)),
        c6_bounds=tuple(erg.get("c6_bounds", (1.5, 30.0))),
        v_ref=float(erg.get("v_ref", gmm.V_REF_DEFAULT)))
    opt = payload.get("optimizer", {})
    _check_keys(opt, _OPTIMIZER_KEYS, f"{path}:optimizer")
    spec, _ = _spec_from_payload(payload, "fit")
    if not spec.terms:
        raise ValidationError(f"{path}: fit config needs at least one term")
    output = payload.get("output", {})
    _check_keys(output, {"bundle", "report", "cell_paths"}, f"{path}:output")
    return {"erg_config": erg_config, "spec": spec, "optimizer": opt,
            "seeds": payload.get("seeds", {}), "output": output}


def read_synth_config(path):
    """Parse a synthesis config file into a SynthConfig."""
    payload = _load_json(path)
    _check_keys(payload, _SYNTH_KEYS, path)
    cd = dict(payload.get("coeffs", {}))
    _check_keys(cd, _COEFF_KEYS, f"{path}:coeffs")
    coeffs = gmm.ErgodicCoeffs(**{k: float(v) for k, v in cd.items()})
    if payload.get("saturated", True):
        coeffs = gmm.apply_full_saturation(coeffs)
    spec, truths = _spec_from_payload(payload, "synth")
    hyper = Hyperparameters(term_params=tuple(truths),
                            tau0=float(payload.get("tau0", 0.4)),
                            phi0=float(payload.get("phi0", 0.55)))
    kwargs = {}
    for key in ("region", "stations_per_event", "mag_range", "dist_range",
                "vs30_range"):
        if key in payload:
            kwargs[key] = tuple(payload[key])
    for key in ("n_events", "events_per_location", "n_stations", "seed"):
        if key in payload:
            kwargs[key] = int(payload[key])
    return SynthConfig(coeffs=coeffs, spec=spec, hyper=hyper, **kwargs)
