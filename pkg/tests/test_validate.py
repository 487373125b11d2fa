import math

import numpy as np
import pytest

from dc1sim import validate
from dc1sim.genfilter import DIJET_PARAMS, MINBIAS_PARAMS, generate_sample
from dc1sim.validate import (ComparisonResult, Histogram1D, HistogramSpec,
                             compare_histograms, merge, parse_spec_file,
                             render_summary, summary_chart, validate_site)


def _gauss_hist(name, n, seed, shift=0.0, n_bins=50, lo=-4.0, hi=4.0):
    rng = np.random.default_rng(seed)
    h = Histogram1D(name, n_bins, lo, hi)
    h.fill_array(rng.normal(shift, 1.0, n))
    return h


class TestHistogram1D:
    def test_fill_lands_in_correct_bin(self):
        h = Histogram1D("h", 10, 0.0, 10.0)
        h.fill(3.5)
        assert h.counts[3] == 1
        assert h.entries == 1

    def test_half_open_bins_and_flows(self):
        h = Histogram1D("h", 10, 0.0, 10.0)
        h.fill(0.0)       # lo edge is inside
        h.fill(10.0)      # hi edge overflows
        h.fill(-0.001)
        assert h.counts[0] == 1
        assert h.overflow == 1
        assert h.underflow == 1

    def test_weighted_fill_tracks_sum_w2(self):
        h = Histogram1D("h", 4, 0.0, 4.0)
        h.fill(1.5, weight=3.0)
        assert h.sum_w[1] == 3.0
        assert h.sum_w2[1] == 9.0
        assert h.counts[1] == 1

    def test_fill_array_matches_scalar_fill(self):
        rng = np.random.default_rng(0)
        values = rng.normal(0, 2, 5000)
        a = Histogram1D("a", 30, -3.0, 3.0)
        b = Histogram1D("b", 30, -3.0, 3.0)
        a.fill_array(values)
        for v in values:
            b.fill(float(v))
        assert np.array_equal(a.counts, b.counts)
        assert a.underflow == b.underflow and a.overflow == b.overflow
        assert a.entries == b.entries

    def test_scaled_copy(self):
        h = _gauss_hist("h", 1000, 1)
        s = h.scaled(0.5)
        assert np.allclose(s.sum_w, h.sum_w * 0.5)
        assert np.allclose(s.sum_w2, h.sum_w2 * 0.25)
        assert s.entries == h.entries
        assert h.integral() == pytest.approx(2 * s.integral())

    def test_dict_roundtrip(self):
        h = _gauss_hist("h", 500, 2)
        back = Histogram1D.from_dict(h.to_dict())
        assert back.to_dict() == h.to_dict()

    def test_merge(self):
        a = _gauss_hist("h", 400, 3)
        b = _gauss_hist("h", 600, 4)
        m = merge(a, b)
        assert m.entries == 1000
        assert np.array_equal(m.counts, a.counts + b.counts)

    def test_merge_binning_mismatch(self):
        with pytest.raises(validate.BinningMismatchError):
            merge(Histogram1D("a", 10, 0, 1), Histogram1D("b", 20, 0, 1))

    def test_invalid_construction(self):
        with pytest.raises(ValueError):
            Histogram1D("h", 0, 0.0, 1.0)
        with pytest.raises(ValueError):
            Histogram1D("h", 10, 1.0, 1.0)


class TestCompareHistograms:
    def test_identical_histograms_chi2_zero(self):
        h = _gauss_hist("h", 10_000, 5)
        r = compare_histograms(h, h)
        assert r.chi2 == 0.0
        assert r.ndf > 0

    def test_same_distribution_chi2_per_ndf_near_one(self):
        a = _gauss_hist("h", 100_000, 6)
        b = _gauss_hist("h", 100_000, 7)
        r = compare_histograms(a, b)
        assert 0.7 <= r.chi2_per_ndf <= 1.3

    def test_shifted_distribution_flagged(self):
        a = _gauss_hist("h", 100_000, 8)
        b = _gauss_hist("h", 100_000, 9, shift=0.1)
        assert compare_histograms(a, b).chi2_per_ndf > 2.0

    def test_scale_invariance(self):
        # area normalization makes comparisons insensitive to overall scale
        a = _gauss_hist("h", 50_000, 10)
        b = _gauss_hist("h", 50_000, 11)
        r1 = compare_histograms(a, b)
        r2 = compare_histograms(a.scaled(7.0), b)
        assert r1.chi2 == pytest.approx(r2.chi2)

    def test_empty_bins_not_counted_in_ndf(self):
        a = Histogram1D("h", 10, 0.0, 10.0)
        b = Histogram1D("h", 10, 0.0, 10.0)
        a.fill(1.5)
        b.fill(1.5)
        b.fill(2.5)
        r = compare_histograms(a, b)
        assert r.ndf == 2
        assert sum(1 for s in r.significances if not math.isnan(s)) == 2

    def test_both_empty_rejected(self):
        with pytest.raises(validate.HistogramError):
            compare_histograms(Histogram1D("a", 5, 0, 1),
                               Histogram1D("b", 5, 0, 1))

    def test_binning_mismatch_rejected(self):
        with pytest.raises(validate.BinningMismatchError):
            compare_histograms(Histogram1D("a", 5, 0, 1),
                               Histogram1D("b", 6, 0, 1))


class TestSummaryChart:
    def test_sorted_worst_first(self):
        rows = summary_chart([
            ComparisonResult("quiet", (), 10.0, 20),
            ComparisonResult("loud", (), 90.0, 20),
            ComparisonResult("mid", (), 40.0, 20),
        ])
        assert [name for name, _ in rows] == ["loud", "mid", "quiet"]

    def test_name_tiebreak(self):
        rows = summary_chart([ComparisonResult("b", (), 10.0, 10),
                              ComparisonResult("a", (), 10.0, 10)])
        assert [name for name, _ in rows] == ["a", "b"]

    def test_render_contains_all_rows(self):
        text = render_summary([("jet_pt", 2.5), ("jet_eta", 0.9)])
        assert "jet_pt" in text and "jet_eta" in text
        assert text.splitlines()[1].count("#") > text.splitlines()[2].count("#")

    def test_empty_rejected(self):
        with pytest.raises(validate.HistogramError):
            summary_chart([])


class TestSiteValidation:
    SPECS = (HistogramSpec("particle_pt", "pt", 40, 0.0, 20.0),
             HistogramSpec("particle_eta", "eta", 40, -5.0, 5.0),
             HistogramSpec("n_jets", "n_jets", 10, 0.0, 10.0))

    def test_spec_file_parsing(self, tmp_path):
        path = tmp_path / "specs.txt"
        path.write_text("# validation histograms\n"
                        "particle_pt pt 40 0 20\n"
                        "n_jets n_jets 10 0 10\n")
        specs = parse_spec_file(path)
        assert specs == [HistogramSpec("particle_pt", "pt", 40, 0.0, 20.0),
                         HistogramSpec("n_jets", "n_jets", 10, 0.0, 10.0)]

    def test_unknown_variable_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("h colour 10 0 1\n")
        with pytest.raises(validate.HistogramError):
            parse_spec_file(path)

    def test_identical_samples_pass(self):
        sample = generate_sample(DIJET_PARAMS, 300, seed=1)
        report = validate_site(sample, sample, self.SPECS)
        assert report.passed
        assert all(r.chi2 == 0.0 for r in report.results)

    def test_same_generator_different_seeds_pass(self):
        a = generate_sample(DIJET_PARAMS, 2000, seed=2)
        b = generate_sample(DIJET_PARAMS, 2000, seed=3)
        assert validate_site(a, b, self.SPECS).passed

    def test_wrong_process_fails(self):
        a = generate_sample(DIJET_PARAMS, 2000, seed=4)
        b = generate_sample(MINBIAS_PARAMS, 2000, seed=5)
        report = validate_site(a, b, self.SPECS)
        assert not report.passed

    def test_chart_matches_summary_chart_order(self):
        a = generate_sample(DIJET_PARAMS, 1000, seed=6)
        b = generate_sample(MINBIAS_PARAMS, 1000, seed=7)
        report = validate_site(a, b, self.SPECS)
        assert list(report.chart) == summary_chart(report.results)

    def test_report_serializes(self):
        import json
        sample = generate_sample(DIJET_PARAMS, 100, seed=8)
        report = validate_site(sample, sample, self.SPECS)
        assert json.loads(json.dumps(report.to_dict()))["passed"] is True
