import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import multivariate_normal

from conftest import make_record, random_catalog
from nergmm.catalog import Record, validate_catalog
from nergmm.ergodic import (ErgodicFitConfig, fit_ergodic, fit_partial,
                            loglik_ergodic, partition_residuals)
from nergmm.errors import ModelQualityWarning
from nergmm.gmm import ErgodicCoeffs, apply_full_saturation, f_erg
from nergmm.kernels import Kernel, ScaledKernelTerm, assemble_cov
from nergmm.nonergodic import Hyperparameters, ModelSpec
from nergmm.synth import SynthConfig, generate


def _dense_loglik(catalog, coeffs, tau, phi):
    """Oracle: explicit MVN with block covariance phi^2 I + tau^2 Z Z'."""
    Z = catalog.event_indicator()
    cov = phi ** 2 * np.eye(catalog.n_records) + tau ** 2 * (Z @ Z.T)
    mean = f_erg(coeffs, catalog.mag, catalog.r_rup, catalog.vs30)
    return multivariate_normal(mean=mean, cov=cov).logpdf(catalog.y)


def _erg_synth(seed, n_events=60, n_stations=30, tau0=0.4, phi0=0.55):
    cfg = SynthConfig(n_events=n_events, n_stations=n_stations,
                      stations_per_event=(4, 10),
                      spec=ModelSpec(terms=()),
                      hyper=Hyperparameters((), tau0, phi0), seed=seed)
    return generate(cfg)


class TestLoglik:
    def test_matches_dense_oracle(self, rng):
        coeffs = apply_full_saturation(ErgodicCoeffs(
            c1=3.0, c2=0.7, c3=0.01, c4=-1.1, c6=5.0, c7=-0.004, c10=-0.3))
        for _ in range(8):
            cat = random_catalog(rng, n_events=7, n_stations=6)
            tau, phi = rng.uniform(0.2, 0.8, 2)
            got = loglik_ergodic(cat, coeffs, tau, phi)
            assert_allclose(got, _dense_loglik(cat, coeffs, tau, phi),
                            rtol=1e-10)

    def test_two_records_one_event_analytic(self):
        # r = 0, tau = phi = 1: C = [[2,1],[1,2]], |C| = 3
        recs = [make_record(y=0.0), make_record(station_id=1, t_S=(0.0, 30.0),
                                                r_rup=30.0, y=0.0)]
        cat = validate_catalog(recs)
        got = loglik_ergodic(cat, ErgodicCoeffs(), 1.0, 1.0)
        assert_allclose(got, -math.log(2 * math.pi) - 0.5 * math.log(3.0),
                        rtol=1e-14)

    def test_matches_kernel_assembly(self, rng):
        # same covariance built from the kernel layer instead of blocks
        cat = random_catalog(rng, n_events=6, n_stations=5)
        coeffs = ErgodicCoeffs(c1=1.0, c2=0.5)
        tau, phi = 0.45, 0.6
        terms = [ScaledKernelTerm(Kernel("group", tau), cat.event_index,
                                  np.ones(cat.n_records)),
                 ScaledKernelTerm(Kernel("identity", phi),
                                  np.arange(cat.n_records),
                                  np.ones(cat.n_records))]
        cov = assemble_cov(terms)
        mean = f_erg(coeffs, cat.mag, cat.r_rup, cat.vs30)
        want = multivariate_normal(mean=mean, cov=cov).logpdf(cat.y)
        assert_allclose(loglik_ergodic(cat, coeffs, tau, phi), want,
                        rtol=1e-10)

    def test_record_order_invariance(self, rng):
        cat = random_catalog(rng, n_events=6, n_stations=5)
        perm = rng.permutation(cat.n_records)
        cat2 = validate_catalog([cat.records[i] for i in perm])
        coeffs = ErgodicCoeffs(c1=0.5, c2=0.3, c7=-0.002)
        a = loglik_ergodic(cat, coeffs, 0.4, 0.6)
        b = loglik_ergodic(cat2, coeffs, 0.4, 0.6)
        assert_allclose(a, b, rtol=1e-12)


class TestFit:
    def test_recovery_on_synthetic(self):
        cat, truth = _erg_synth(seed=5, n_events=120, n_stations=40)
        fit = fit_ergodic(cat)
        assert abs(fit.tau - 0.4) / 0.4 < 0.30
        assert abs(fit.phi - 0.55) / 0.55 < 0.15
        assert abs(fit.coeffs.c2 - truth.coeffs.c2) < 0.15
        assert abs(fit.coeffs.c10 - truth.coeffs.c10) < 0.15
        assert fit.converged

    def test_noiseless_recovers_coefficients(self):
        cat, truth = _erg_synth(seed=9, n_events=50, n_stations=25,
                                tau0=1e-9, phi0=1e-9)
        fit = fit_ergodic(cat)
        for name in ("c1", "c2", "c4", "c5", "c7", "c10"):
            assert_allclose(getattr(fit.coeffs, name),
                            getattr(truth.coeffs, name), atol=1e-5)
        assert np.abs(fit.residuals).max() < 1e-6

    def test_profiled_loglik_is_local_max(self):
        cat, _ = _erg_synth(seed=2)
        fit = fit_ergodic(cat)
        for ft in (0.9, 1.1):
            for fp in (0.9, 1.1):
                other = loglik_ergodic(cat, fit.coeffs, fit.tau * ft,
                                       fit.phi * fp)
                assert other <= fit.loglik + 1e-6

    def test_loglik_consistent_with_reported_parameters(self):
        cat, _ = _erg_synth(seed=4)
        fit = fit_ergodic(cat)
        assert_allclose(fit.loglik,
                        loglik_ergodic(cat, fit.coeffs, fit.tau, fit.phi),
                        rtol=1e-9)

    def test_event_terms_are_blup(self):
        cat, _ = _erg_synth(seed=6)
        fit = fit_ergodic(cat)
        raw = cat.y - f_erg(fit.coeffs, cat.mag, cat.r_rup, cat.vs30)
        n_e = np.bincount(cat.event_index, minlength=cat.n_events)
        s_e = np.bincount(cat.event_index, weights=raw,
                          minlength=cat.n_events)
        want = fit.tau ** 2 * s_e / (fit.phi ** 2 + n_e * fit.tau ** 2)
        assert_allclose(fit.event_terms, want, rtol=1e-8, atol=1e-10)
        # within-event residuals are raw minus the event term
        assert_allclose(fit.residuals, raw - want[cat.event_index],
                        rtol=1e-8, atol=1e-10)

    def test_single_event_catalog_warns(self):
        recs = [make_record(station_id=s, t_S=(30.0 + s, 0.0),
                            r_rup=30.0 + s, y=float(np.sin(s)))
                for s in range(6)]
        cat = validate_catalog(recs)
        with pytest.warns(ModelQualityWarning):
            fit_ergodic(cat)

    def test_record_order_invariance(self, rng):
        cat, _ = _erg_synth(seed=7, n_events=30, n_stations=20)
        perm = rng.permutation(cat.n_records)
        cat2 = validate_catalog([cat.records[i] for i in perm])
        f1 = fit_ergodic(cat)
        f2 = fit_ergodic(cat2)
        assert_allclose(f1.loglik, f2.loglik, rtol=1e-7)
        assert_allclose(f1.tau, f2.tau, rtol=1e-4)
        assert_allclose(f1.coeffs.c2, f2.coeffs.c2, atol=1e-5)

    def test_estimate_c6(self):
        cat, _ = _erg_synth(seed=8, n_events=80, n_stations=40)
        fixed = fit_ergodic(cat, ErgodicFitConfig(c6=6.0))
        free = fit_ergodic(cat, ErgodicFitConfig(estimate_c6=True))
        assert 1.5 <= free.coeffs.c6 <= 30.0
        assert free.loglik >= fixed.loglik - 1e-6

    def test_unsaturated_config(self):
        cat, _ = _erg_synth(seed=10, n_events=60, n_stations=30)
        fit = fit_ergodic(cat, ErgodicFitConfig(saturated=False))
        # c5 free: no tie enforced
        assert fit.converged
        assert np.isfinite(fit.coeffs.c5)


class TestPartial:
    def _site_synth(self, seed):
        # station group term creates dS2S; partial fit should split phi
        from nergmm.nonergodic import TermSpec
        spec = ModelSpec(terms=(TermSpec(name="site_station", role="S",
                                         kinds=("group",),
                                         input="station"),))
        hyper = Hyperparameters(((((0.35, None)),),), 0.4, 0.45)
        cfg = SynthConfig(n_events=80, n_stations=30,
                          stations_per_event=(5, 12), spec=spec,
                          hyper=hyper, seed=seed)
        return generate(cfg)

    def test_partial_recovers_site_variance(self):
        cat, truth = self._site_synth(seed=3)
        fit = fit_partial(cat)
        assert abs(fit.tau0 - 0.4) / 0.4 < 0.35
        assert abs(fit.phi_s2s - 0.35) / 0.35 < 0.35
        assert abs(fit.phi_ss - 0.45) / 0.45 < 0.25
        # combined phi consistent
        assert_allclose(fit.phi, math.hypot(fit.phi_ss, fit.phi_s2s),
                        rtol=1e-12)

    def test_site_terms_track_truth(self):
        cat, truth = self._site_synth(seed=12)
        fit = fit_partial(cat)
        true_site = truth.fields["site_station"]
        corr = np.corrcoef(fit.site_terms, true_site)[0, 1]
        assert corr > 0.8

    def test_partition_residuals_moments(self):
        cat, _ = self._site_synth(seed=5)
        fit = fit_ergodic(cat)
        part = partition_residuals(fit, cat)
        assert part.phi_s2s > 0.15
        assert part.phi_ss > 0.25
        assert_allclose(math.hypot(part.phi_ss, part.phi_s2s), fit.phi,
                        rtol=0.35)
