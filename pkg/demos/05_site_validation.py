"""
Histogram-based site validation
===============================

Two sites claim to have produced the same physics. The validator fills a
fixed suite of histograms from each sample, area-normalizes, computes the
bin-by-bin significance and chi2/ndf per histogram, and ranks everything
in a worst-first bar chart. A healthy pair sits near chi2/ndf = 1; a site
running the wrong process lights up immediately.
"""

from dc1sim.genfilter import DIJET_PARAMS, MINBIAS_PARAMS, generate_sample
from dc1sim.validate import HistogramSpec, render_summary, validate_site

SPECS = (HistogramSpec("particle_pt", "pt", 40, 0.0, 20.0),
         HistogramSpec("particle_eta", "eta", 40, -5.0, 5.0),
         HistogramSpec("n_jets", "n_jets", 10, 0.0, 10.0))

reference = generate_sample(DIJET_PARAMS, 3000, seed=100)

# site A runs the same generator with a different seed: should pass
site_a = generate_sample(DIJET_PARAMS, 3000, seed=200)
report = validate_site(site_a, reference, SPECS)
print("site A (same process, independent seed)")
print(render_summary(report.chart))
print(f"result: {'PASS' if report.passed else 'FAIL'} "
      f"(threshold chi2/ndf <= {report.threshold})\n")

# site B misconfigured itself and produced minbias instead: should fail
site_b = generate_sample(MINBIAS_PARAMS, 3000, seed=300)
report = validate_site(site_b, reference, SPECS)
print("site B (wrong process)")
print(render_summary(report.chart))
print(f"result: {'PASS' if report.passed else 'FAIL'} "
      f"(threshold chi2/ndf <= {report.threshold})")
