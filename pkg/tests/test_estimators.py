import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.base import clone

from nergmm.catalog import Scenario
from nergmm.estimators import ErgodicGmm, NonErgodicGmm
from nergmm.gmm import f_erg
from nergmm.nonergodic import Hyperparameters, ModelSpec, TermSpec
from nergmm.synth import SynthConfig, generate

SPEC = ModelSpec(terms=(
    TermSpec(name="source", role="E", kinds=("group",), input="t_E"),
    TermSpec(name="site", role="S", kinds=("exponential",), input="t_S",
             omega_init=(0.3,), ell_init=(30.0,)),
))
HYPER = Hyperparameters(term_params=(((0.3, None),), ((0.4, 30.0),)),
                        tau0=0.35, phi0=0.5)


@pytest.fixture(scope="module")
def synth_cat():
    cfg = SynthConfig(n_events=40, n_stations=25, stations_per_event=(3, 7),
                      spec=SPEC, hyper=HYPER, seed=19)
    return generate(cfg)


class TestErgodicGmm:
    def test_params_round_trip(self):
        est = ErgodicGmm(saturated=False, c6=4.0, v_ref=600.0)
        params = est.get_params()
        assert params["saturated"] is False
        assert params["c6"] == 4.0
        est2 = ErgodicGmm().set_params(**params)
        assert est2.get_params() == params

    def test_clone(self):
        est = ErgodicGmm(c6=5.0, estimate_c6=True)
        dup = clone(est)
        assert dup.get_params() == est.get_params()
        assert dup is not est

    def test_fit_predict(self, synth_cat):
        cat, truth = synth_cat
        est = ErgodicGmm().fit(cat)
        assert est.tau_ > 0 and est.phi_ > 0
        med = est.predict(cat)
        assert_allclose(med, f_erg(est.coeffs_, cat.mag, cat.r_rup,
                                   cat.vs30), atol=1e-12)
        # the fitted backbone stays close to the generating coefficients
        truth_med = f_erg(truth.coeffs, cat.mag, cat.r_rup, cat.vs30)
        assert np.abs(med - truth_med).mean() < 0.5

    def test_predict_scenarios(self, synth_cat):
        cat, _ = synth_cat
        est = ErgodicGmm().fit(cat)
        scen = [Scenario(scenario_id=1, mag=6.0, r_rup=30.0, vs30=400.0,
                         t_E=(0.0, 0.0), t_S=(30.0, 0.0))]
        med = est.predict(scen)
        assert med.shape == (1,)
        assert_allclose(med[0], f_erg(est.coeffs_, 6.0, 30.0, 400.0),
                        atol=1e-12)

    def test_fit_returns_self(self, synth_cat):
        cat, _ = synth_cat
        est = ErgodicGmm()
        assert est.fit(cat) is est


class TestNonErgodicGmm:
    def test_params_round_trip_and_clone(self):
        est = NonErgodicGmm(spec=SPEC, max_evals=500, optimize=False)
        params = est.get_params()
        assert params["spec"] is SPEC
        assert params["max_evals"] == 500
        dup = clone(est)
        # clone copies parameters; frozen dataclasses compare by value
        assert dup.get_params()["spec"] == SPEC
        assert dup.get_params()["optimize"] is False

    def test_fit_predict_no_search(self, synth_cat):
        # optimize=False conditions at the model spec's initial values,
        # which keeps the test fast while exercising the whole chain
        cat, _ = synth_cat
        est = NonErgodicGmm(spec=SPEC, optimize=False).fit(cat)
        assert est.tau0_ > 0 and est.phi0_ > 0
        scen = [Scenario(scenario_id=k, mag=6.0, r_rup=40.0, vs30=400.0,
                         t_E=(50.0, 50.0), t_S=(90.0, 50.0))
                for k in range(2)]
        pred = est.predict(scen)
        assert pred.median.shape == (2,)
        assert pred.cov.shape == (2, 2)
        assert np.all(np.diag(pred.cov) >= 0)
        composed = est.predict(scen, route="compose")
        assert_allclose(composed.median, pred.median, atol=1e-9)
        assert_allclose(composed.cov, pred.cov, atol=1e-9)

    def test_fit_with_search_recovers_scales(self, synth_cat):
        cat, _ = synth_cat
        est = NonErgodicGmm(spec=SPEC, max_evals=1500).fit(cat)
        assert 0.1 < est.tau0_ < 0.7
        assert 0.2 < est.phi0_ < 0.9
        hp = est.hyper_.for_term(est.fit_.spec, "site")
        assert 0.1 < hp[0][0] < 0.9

    def test_residual_identity(self, synth_cat):
        cat, _ = synth_cat
        est = NonErgodicGmm(spec=SPEC, optimize=False).fit(cat)
        fit = est.fit_
        contrib = fit.record_contributions()
        recon = (sum(contrib.values()) + fit.event_terms[cat.event_index]
                 + fit.noise_residuals)
        assert_allclose(recon, fit.residuals, atol=1e-10)
