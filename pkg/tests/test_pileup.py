import math

import numpy as np
import pytest

from dc1sim import core, pileup
from dc1sim.core import (HIGH_LUMI, LOW_LUMI, LuminosityConfig, PdgClass,
                         Process, Subdetector)
from dc1sim.genfilter import MINBIAS_PARAMS, generate_sample
from dc1sim.pileup import (CavernEvent, FluxEntry, FluxTable,
                           PremixedMinbias, digitize_event, overlay, premix,
                           pileup_cost, pileup_job_decomposition,
                           sample_cavern)


def _minbias_pool(n=20, hits_per_event=1, subdetectors=(Subdetector.MDT,)):
    """Premixed pool built directly, with controlled hit content."""
    pool = []
    for i in range(n):
        base = core.EventRecord(
            10 ** 6 + i, Process.MINBIAS,
            (core.ParticleRecord(PdgClass.PION, 1.0, 0.0, 0.0, 1.0),), 0)
        hits = tuple(core.HitRecord(sd, 5, 5, 0.5, 12.0)
                     for sd in subdetectors
                     for _ in range(hits_per_event))
        pool.append(PremixedMinbias(base, 1, hits, (base.event_id,)))
    return pool


class TestSampleCavern:
    def test_mean_rate_matches_poisson(self):
        # charged entries so neither the neutral energy cut nor the prompt
        # flag interferes with the analytic mean
        flux = FluxTable((FluxEntry(PdgClass.ELECTRON, 3.0, 1e-3),))
        events = sample_cavern(flux, 10_000, seed=1)
        counts = [len(ev.hits) for ev in events]
        mean = np.mean(counts)
        sigma_mean = math.sqrt(3.0 / 10_000)
        assert abs(mean - 3.0) < 3 * sigma_mean

    def test_soft_photons_all_cut(self):
        # fixed 5 keV photons sit below the 10 keV neutral cut
        flux = FluxTable((FluxEntry(PdgClass.PHOTON, 5.0, 5e-6,
                                    spectrum="fixed"),))
        events = sample_cavern(flux, 500, seed=2)
        assert all(len(ev.hits) == 0 for ev in events)

    def test_hit_times_inside_bunch_slot(self):
        events = sample_cavern(pileup.DEFAULT_FLUX, 200, seed=3)
        for ev in events:
            for hit in ev.hits:
                assert 0.0 <= hit.time < 25.0

    def test_prompt_component_excluded(self):
        flux = FluxTable((FluxEntry(PdgClass.PROTON, 4.0, 1e-3,
                                    prompt=True),))
        events = sample_cavern(flux, 200, seed=4)
        assert all(len(ev.hits) == 0 for ev in events)

    def test_empty_flux_rejected(self):
        with pytest.raises(pileup.PileupError):
            sample_cavern(FluxTable(()), 10, seed=0)

    def test_flux_table_config_roundtrip(self, tmp_path):
        path = tmp_path / "flux.cfg"
        path.write_text("# cavern flux\n"
                        "neutron 2.0 1e-4\n"
                        "photon 1.5 5e-5 fixed\n"
                        "proton 0.2 5e-4 exponential prompt\n")
        flux = pileup.load_flux_table(path)
        assert flux.total_rate == pytest.approx(3.7)
        assert flux.entries[1].spectrum == "fixed"
        assert flux.entries[2].prompt


class TestPremix:
    def _inputs(self, n_mb=10, n_cav=10):
        minbias = generate_sample(MINBIAS_PARAMS, n_mb, seed=7)
        flux = FluxTable((FluxEntry(PdgClass.ELECTRON, 2.0, 1e-3),))
        cavern = sample_cavern(flux, n_cav, seed=8, first_event_id=5000)
        return minbias, cavern

    def test_safety_one_provenance(self):
        minbias, cavern = self._inputs()
        out = premix(minbias, cavern, 1, seed=1)
        assert len(out) == 10
        for pm in out:
            assert len(pm.provenance) == 2  # 1 minbias + 1 cavern
            assert pm.provenance[0] == pm.base.event_id

    def test_safety_five_round_robin_distinct(self):
        minbias, cavern = self._inputs()
        out = premix(minbias, cavern, 5, seed=2)
        for pm in out:
            cavern_ids = pm.provenance[1:]
            assert len(cavern_ids) == 5
            assert len(set(cavern_ids)) == 5

    def test_merged_hit_count_recount_oracle(self):
        minbias, cavern = self._inputs()
        safety = 2
        out = premix(minbias, cavern, safety, seed=3)
        cavern_by_id = {c.event_id: c for c in cavern}
        for pm in out:
            expected = len(digitize_event(pm.base).hits) + sum(
                len(cavern_by_id[cid].hits) for cid in pm.provenance[1:])
            assert len(pm.merged_hits) == expected

    def test_inputs_not_mutated(self):
        minbias, cavern = self._inputs()
        before = (list(minbias), list(cavern))
        premix(minbias, cavern, 2, seed=4)
        assert (minbias, cavern) == (list(before[0]), list(before[1]))

    def test_premix_job_cost_within_budget(self, cost_model):
        # a 10k-event premix job must stay under 2000 SI95-s
        assert 10_000 * cost_model.premix_job.cpu_si95s <= 2000.0

    def test_empty_inputs_rejected(self):
        minbias, cavern = self._inputs()
        with pytest.raises(pileup.PileupError):
            premix([], cavern, 1, seed=0)
        with pytest.raises(pileup.PileupError):
            premix(minbias, [], 1, seed=0)


class TestOverlay:
    def _physics(self):
        return core.DigitizedEvent(1, (), (1,), 7.5, 8000.0)

    def test_high_lumi_full_window_mean(self, full_window_timing):
        pool = _minbias_pool(hits_per_event=0, subdetectors=())
        totals = [len(overlay(self._physics(), pool, HIGH_LUMI,
                              full_window_timing, seed=s).provenance) - 1
                  for s in range(2000)]
        mean = np.mean(totals)
        assert abs(mean - 61 * 23.0) < 2.5  # 3 sigma of the sample mean

    def test_lar_only_previous_crossings(self):
        pool = _minbias_pool(subdetectors=(Subdetector.LAR,))
        lumi = LuminosityConfig("low", 2e33, 1.0)
        for s in range(200):
            ev = overlay(self._physics(), pool, lumi, seed=s)
            for hit in ev.hits:
                if hit.subdetector is Subdetector.LAR:
                    # base times in [0,25); positive offsets are excluded
                    assert hit.time < 25.0
                    assert math.floor(hit.time / 25.0) <= 0

    def test_mdt_admits_up_to_plus_28(self):
        pool = _minbias_pool(subdetectors=(Subdetector.MDT,))
        lumi = LuminosityConfig("high", 1e34, 2.0)
        max_offset = -31
        for s in range(300):
            ev = overlay(self._physics(), pool, lumi, seed=s)
            for hit, src in zip(ev.hits, ev.hit_sources):
                if src == 1:
                    continue
                k = math.floor(hit.time / 25.0)
                max_offset = max(max_offset, k)
                assert -30 <= k <= 28
        assert max_offset == 28  # the boundary crossing is actually reached

    def test_mu_zero_leaves_physics_alone(self):
        physics = core.DigitizedEvent(
            1, (core.HitRecord(Subdetector.SILICON, 1, 1, 2.0, 3.0),),
            (1,), 3.6, 2000.0)
        pool = _minbias_pool()
        lumi = LuminosityConfig("low", 2e33, 0.0)
        ev = overlay(physics, pool, lumi, seed=0)
        assert ev.hits == physics.hits
        assert ev.provenance == (1,)

    def test_deterministic(self, full_window_timing):
        pool = _minbias_pool()
        a = overlay(self._physics(), pool, HIGH_LUMI, full_window_timing, seed=9)
        b = overlay(self._physics(), pool, HIGH_LUMI, full_window_timing, seed=9)
        assert a == b

    def test_count_distribution_poisson(self, full_window_timing):
        pool = _minbias_pool(hits_per_event=0, subdetectors=())
        counts = np.array([
            overlay(self._physics(), pool, HIGH_LUMI, full_window_timing,
                    seed=s).count_at(0)
            for s in range(10_000)])
        ratio = counts.var() / counts.mean()
        assert 0.95 <= ratio <= 1.05

    def test_provenance_conservation(self):
        pool = _minbias_pool()
        lumi = LuminosityConfig("low", 2e33, 2.0)
        ev = overlay(self._physics(), pool, lumi, seed=5)
        assert len(ev.hits) == len(ev.hit_sources)
        assert set(ev.hit_sources) <= set(ev.provenance)
        # subdetector windows respected for every hit
        windows = {t.subdetector: (t.n_prev, t.n_post)
                   for t in core.DEFAULT_TIMINGS}
        for hit, src in zip(ev.hits, ev.hit_sources):
            if src == 1:
                continue
            k = math.floor(hit.time / 25.0)
            n_prev, n_post = windows[hit.subdetector]
            assert -n_prev <= k <= n_post

    def test_empty_pool_rejected(self):
        with pytest.raises(pileup.PileupError):
            overlay(self._physics(), [], HIGH_LUMI, seed=0)

    def test_unknown_subdetector_timing_rejected(self):
        pool = _minbias_pool(subdetectors=(Subdetector.LAR,))
        silicon_only = (core.SubdetectorTiming(Subdetector.SILICON, 0, 0, 10.0),)
        with pytest.raises(pileup.PileupError):
            overlay(self._physics(), pool,
                    LuminosityConfig("high", 1e34, 23.0), silicon_only, seed=0)


class TestPileupCost:
    def test_low_lumi_table_pair(self):
        assert pileup_cost(LOW_LUMI) == (3.6, 2000.0)

    def test_high_lumi_table_pair(self):
        assert pileup_cost(HIGH_LUMI) == (7.5, 8000.0)

    def test_job_decomposition(self):
        mixing, digi, total = pileup_job_decomposition()
        assert (mixing, digi) == (800.0, 3600.0)
        assert total == 4400.0
