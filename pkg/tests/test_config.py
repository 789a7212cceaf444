import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nergmm.config import read_fit_config, read_synth_config
from nergmm.errors import ValidationError

FIT_MINIMAL = {
    "terms": [{"name": "site", "role": "S", "kinds": ["exponential"],
               "input": "t_S"}],
}

SYNTH_MINIMAL = {
    "n_events": 5,
    "n_stations": 4,
    "terms": [{"name": "site", "role": "S", "kinds": ["exponential"],
               "input": "t_S", "omega": [0.3], "ell": [25.0]}],
    "seed": 1,
}


def _dump(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestFitConfig:
    def test_defaults(self, tmp_path):
        cfg = read_fit_config(_dump(tmp_path, FIT_MINIMAL))
        assert cfg["erg_config"].saturated is True
        assert cfg["erg_config"].c6 == 6.0
        assert cfg["optimizer"] == {}
        assert cfg["output"] == {}
        assert len(cfg["spec"].terms) == 1
        term = cfg["spec"].terms[0]
        assert term.design == "one"
        assert term.grid is None

    def test_full_round_trip(self, tmp_path):
        payload = {
            "ergodic": {"saturated": False, "c6": 4.5, "estimate_c6": True,
                        "c6_bounds": [2.0, 12.0], "v_ref": 600.0},
            "terms": [
                {"name": "source", "role": "E", "kinds": ["group"],
                 "input": "t_E", "omega_bounds": [0.01, 2.0]},
                {"name": "cells", "role": "P",
                 "kinds": ["exponential", "group"], "input": "t_C",
                 "design": "cells", "omega_init": [0.004, 0.002],
                 "ell_init": [60.0, None]},
            ],
            "cell_grid": {"origin_x": 0, "origin_y": 0, "dx": 20, "dy": 20,
                          "nx": 5, "ny": 5},
            "optimizer": {"max_evals": 900, "rel_tol": 1e-6},
            "output": {"bundle": "m.npz"},
        }
        cfg = read_fit_config(_dump(tmp_path, payload))
        assert cfg["erg_config"].estimate_c6 is True
        assert cfg["erg_config"].c6_bounds == (2.0, 12.0)
        assert cfg["optimizer"]["max_evals"] == 900
        assert cfg["output"]["bundle"] == "m.npz"
        cells = cfg["spec"].cell_term
        assert cells is not None
        assert cells.grid.n_cells == 25
        assert cells.omega_init == (0.004, 0.002)
        assert cfg["spec"].terms[0].omega_bounds == (0.01, 2.0)

    def test_unknown_top_key(self, tmp_path):
        payload = dict(FIT_MINIMAL, extra_knob=1)
        with pytest.raises(ValidationError, match="extra_knob"):
            read_fit_config(_dump(tmp_path, payload))

    def test_unknown_nested_keys(self, tmp_path):
        payload = dict(FIT_MINIMAL, ergodic={"c6": 6.0, "c_six": 1})
        with pytest.raises(ValidationError, match="c_six"):
            read_fit_config(_dump(tmp_path, payload))
        payload = dict(FIT_MINIMAL, optimizer={"maxevals": 10})
        with pytest.raises(ValidationError, match="maxevals"):
            read_fit_config(_dump(tmp_path, payload))
        payload = dict(FIT_MINIMAL)
        payload["terms"] = [dict(FIT_MINIMAL["terms"][0], omga=[0.1])]
        with pytest.raises(ValidationError, match="omga"):
            read_fit_config(_dump(tmp_path, payload))

    def test_term_missing_required_key(self, tmp_path):
        payload = {"terms": [{"name": "site", "role": "S",
                              "kinds": ["exponential"]}]}
        with pytest.raises(ValidationError, match="missing key 'input'"):
            read_fit_config(_dump(tmp_path, payload))

    def test_cells_without_grid(self, tmp_path):
        payload = {"terms": [{"name": "cells", "role": "P",
                              "kinds": ["group"], "input": "t_C",
                              "design": "cells"}]}
        with pytest.raises(ValidationError, match="no cell_grid"):
            read_fit_config(_dump(tmp_path, payload))

    def test_no_terms_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="at least one term"):
            read_fit_config(_dump(tmp_path, {"terms": []}))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{]")
        with pytest.raises(ValidationError, match="invalid JSON"):
            read_fit_config(str(path))


class TestSynthConfig:
    def test_defaults_and_saturation(self, tmp_path):
        cfg = read_synth_config(_dump(tmp_path, SYNTH_MINIMAL))
        assert cfg.n_events == 5
        assert cfg.seed == 1
        # full saturation ties c5 to c2 through c6 by default
        assert_allclose(cfg.coeffs.c5,
                        -cfg.coeffs.c2 / np.log(cfg.coeffs.c6), rtol=1e-12)
        assert cfg.hyper.term_params == (((0.3, 25.0),),)

    def test_unsaturated_keeps_coeffs(self, tmp_path):
        payload = dict(SYNTH_MINIMAL, saturated=False,
                       coeffs={"c2": 0.9, "c5": -0.1})
        cfg = read_synth_config(_dump(tmp_path, payload))
        assert cfg.coeffs.c5 == -0.1

    def test_synth_term_needs_truth(self, tmp_path):
        payload = dict(SYNTH_MINIMAL)
        payload["terms"] = [{"name": "site", "role": "S",
                             "kinds": ["exponential"], "input": "t_S"}]
        with pytest.raises(ValidationError, match="true 'omega'"):
            read_synth_config(_dump(tmp_path, payload))

    def test_omega_count_mismatch(self, tmp_path):
        payload = dict(SYNTH_MINIMAL)
        payload["terms"] = [{"name": "site", "role": "S",
                             "kinds": ["exponential", "group"],
                             "input": "t_S", "omega": [0.3],
                             "ell": [25.0, None]}]
        with pytest.raises(ValidationError, match="2 kernel parts but 1"):
            read_synth_config(_dump(tmp_path, payload))

    def test_unknown_coeff_key(self, tmp_path):
        payload = dict(SYNTH_MINIMAL, coeffs={"c1": 3.0, "c99": 1.0})
        with pytest.raises(ValidationError, match="c99"):
            read_synth_config(_dump(tmp_path, payload))

    def test_ranges_forwarded(self, tmp_path):
        payload = dict(SYNTH_MINIMAL, region=[0, 300, 0, 150],
                       mag_range=[4.0, 7.5], vs30_range=[200, 900])
        cfg = read_synth_config(_dump(tmp_path, payload))
        assert cfg.region == (0, 300, 0, 150)
        assert cfg.mag_range == (4.0, 7.5)
        assert cfg.vs30_range == (200, 900)
