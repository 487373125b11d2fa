"""Histogram bookkeeping and two-sample compatibility statistics.

Quality assurance is histogram based: each sample is summarized by a set of
1-D histograms, pairs of histograms are compared bin by bin after area
normalization, and a summary table ranks all comparisons by chi2/ndf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from dc1sim import core


class HistogramError(Exception):
    pass


class BinningMismatchError(HistogramError):
    pass


class Histogram1D:
    """Fixed-binning weighted 1-D histogram with under/overflow tracking.

    Bins are half-open [edge_i, edge_{i+1}); a fill at ``hi`` lands in
    overflow.
    """

    def __init__(self, name: str, n_bins: int, lo: float, hi: float):
        if n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if not lo < hi:
            raise ValueError("lo must be < hi")
        self.name = name
        self.n_bins = n_bins
        self.lo = lo
        self.hi = hi
        self.counts = np.zeros(n_bins)
        self.sum_w = np.zeros(n_bins)
        self.sum_w2 = np.zeros(n_bins)
        self.underflow = 0.0
        self.overflow = 0.0
        self.entries = 0

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_bins + 1)

    def same_binning(self, other: "Histogram1D") -> bool:
        return (self.n_bins == other.n_bins and self.lo == other.lo
                and self.hi == other.hi)

    def fill(self, value: float, weight: float = 1.0):
        self.entries += 1
        if value < self.lo:
            self.underflow += weight
            return
        if value >= self.hi:
            self.overflow += weight
            return
        i = int((value - self.lo) / (self.hi - self.lo) * self.n_bins)
        i = min(i, self.n_bins - 1)  # guard float edge rounding
        self.counts[i] += 1
        self.sum_w[i] += weight
        self.sum_w2[i] += weight * weight

    def fill_many(self, values: Iterable[float], weight: float = 1.0):
        for v in values:
            self.fill(v, weight)

    def fill_array(self, values: np.ndarray, weight: float = 1.0):
        """Vectorized fill for large unweighted-per-entry samples."""
        values = np.asarray(values, dtype=float)
        below = values < self.lo
        above = values >= self.hi
        in_range = values[~below & ~above]
        counts, _ = np.histogram(in_range, bins=self.n_bins,
                                 range=(self.lo, self.hi))
        self.counts += counts
        self.sum_w += counts * weight
        self.sum_w2 += counts * weight * weight
        self.underflow += below.sum() * weight
        self.overflow += above.sum() * weight
        self.entries += len(values)

    def scaled(self, factor: float) -> "Histogram1D":
        """Rescaled copy: weights multiply by ``factor``, variances by its
        square. Entry counts are preserved."""
        out = Histogram1D(self.name, self.n_bins, self.lo, self.hi)
        out.counts = self.counts.copy()
        out.sum_w = self.sum_w * factor
        out.sum_w2 = self.sum_w2 * factor ** 2
        out.underflow = self.underflow * factor
        out.overflow = self.overflow * factor
        out.entries = self.entries
        return out

    def integral(self) -> float:
        return float(self.sum_w.sum())

    def to_dict(self) -> dict:
        return {
            "name": self.name, "n_bins": self.n_bins, "lo": self.lo,
            "hi": self.hi, "counts": self.counts.tolist(),
            "sum_w": self.sum_w.tolist(), "sum_w2": self.sum_w2.tolist(),
            "underflow": self.underflow, "overflow": self.overflow,
            "entries": self.entries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram1D":
        h = cls(d["name"], d["n_bins"], d["lo"], d["hi"])
        h.counts = np.asarray(d["counts"], dtype=float)
        h.sum_w = np.asarray(d["sum_w"], dtype=float)
        h.sum_w2 = np.asarray(d["sum_w2"], dtype=float)
        h.underflow = d["underflow"]
        h.overflow = d["overflow"]
        h.entries = d["entries"]
        return h


def merge(a: Histogram1D, b: Histogram1D) -> Histogram1D:
    """Bin-wise sum of two identically binned histograms."""
    if not a.same_binning(b):
        raise BinningMismatchError(f"{a.name} vs {b.name}")
    out = Histogram1D(a.name, a.n_bins, a.lo, a.hi)
    out.counts = a.counts + b.counts
    out.sum_w = a.sum_w + b.sum_w
    out.sum_w2 = a.sum_w2 + b.sum_w2
    out.underflow = a.underflow + b.underflow
    out.overflow = a.overflow + b.overflow
    out.entries = a.entries + b.entries
    return out


@dataclass(frozen=True)
class ComparisonResult:
    name: str
    significances: tuple  # per bin; nan for inadmissible bins
    chi2: float
    ndf: int

    @property
    def chi2_per_ndf(self) -> float:
        return self.chi2 / self.ndf if self.ndf else 0.0


def compare_histograms(a: Histogram1D, b: Histogram1D,
                       name: Optional[str] = None) -> ComparisonResult:
    """Bin-by-bin significance and chi2 between two histograms.

    Both sides are normalized to unit area with propagated variances;
    s_i = (a_i - b_i) / sqrt(var_a_i + var_b_i) over bins whose combined
    variance is positive (admissible bins); chi2 is the sum of s_i^2.
    """
    if not a.same_binning(b):
        raise BinningMismatchError(f"{a.name} vs {b.name}")
    wa, wb = a.integral(), b.integral()
    if wa <= 0 and wb <= 0:
        raise HistogramError("both histograms are empty")
    na = a.sum_w / wa if wa > 0 else a.sum_w
    nb = b.sum_w / wb if wb > 0 else b.sum_w
    va = a.sum_w2 / wa ** 2 if wa > 0 else a.sum_w2
    vb = b.sum_w2 / wb ** 2 if wb > 0 else b.sum_w2
    var = va + vb
    sig = np.full(a.n_bins, np.nan)
    admissible = var > 0
    sig[admissible] = (na[admissible] - nb[admissible]) / np.sqrt(var[admissible])
    chi2 = float(np.sum(sig[admissible] ** 2))
    return ComparisonResult(name or a.name, tuple(sig.tolist()), chi2,
                            int(admissible.sum()))


def summary_chart(comparisons: Sequence[ComparisonResult]) -> list[tuple[str, float]]:
    """Rank comparisons by chi2/ndf, worst first."""
    if not comparisons:
        raise HistogramError("at least one comparison required")
    return sorted(((c.name, c.chi2_per_ndf) for c in comparisons),
                  key=lambda row: (-row[1], row[0]))


def render_summary(rows: Sequence[tuple[str, float]], width: int = 40) -> str:
    """Text bar chart of chi2/ndf per comparison."""
    top = max((v for _, v in rows), default=0.0) or 1.0
    lines = [f"{'histogram':<28} {'chi2/ndf':>9}  "]
    for name, value in rows:
        bar = "#" * int(round(value / top * width))
        lines.append(f"{name:<28} {value:9.3f}  {bar}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Histogram specifications and site validation

@dataclass(frozen=True)
class HistogramSpec:
    name: str
    variable: str  # pt | eta | n_jets | hit_time | hits_per_event
    n_bins: int
    lo: float
    hi: float


KNOWN_VARIABLES = ("pt", "eta", "n_jets", "hit_time", "hits_per_event")


def parse_spec_file(path) -> list[HistogramSpec]:
    """Spec file: one `name variable n_bins lo hi` row per line, # comments."""
    specs = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, variable, n_bins, lo, hi = line.split()
            if variable not in KNOWN_VARIABLES:
                raise HistogramError(f"unknown variable {variable!r}")
            specs.append(HistogramSpec(name, variable, int(n_bins),
                                       float(lo), float(hi)))
    return specs


def _fill_from_sample(spec: HistogramSpec, records) -> Histogram1D:
    from dc1sim.genfilter import find_jets  # deferred; genfilter uses this module

    h = Histogram1D(spec.name, spec.n_bins, spec.lo, spec.hi)
    for rec in records:
        if isinstance(rec, core.EventRecord):
            if spec.variable == "pt":
                h.fill_many(p.pt for p in rec.particles)
            elif spec.variable == "eta":
                h.fill_many(p.eta for p in rec.particles)
            elif spec.variable == "n_jets":
                h.fill(len(find_jets(rec)))
            else:
                raise HistogramError(
                    f"variable {spec.variable!r} needs digitized events")
        else:  # DigitizedEvent-like
            if spec.variable == "hit_time":
                h.fill_many(hit.time for hit in rec.hits)
            elif spec.variable == "hits_per_event":
                h.fill(len(rec.hits))
            elif spec.variable == "pt":
                h.fill_many(hit.energy for hit in rec.hits)
            else:
                raise HistogramError(
                    f"variable {spec.variable!r} needs generated events")
    return h


@dataclass(frozen=True)
class SiteValidationReport:
    passed: bool
    threshold: float
    results: tuple[ComparisonResult, ...]
    chart: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "threshold": self.threshold,
            "results": [
                {"name": r.name, "chi2": r.chi2, "ndf": r.ndf,
                 "chi2_per_ndf": r.chi2_per_ndf}
                for r in self.results
            ],
            "chart": [list(row) for row in self.chart],
        }


def validate_site(candidate, reference, specs: Sequence[HistogramSpec],
                  threshold: float = 2.0) -> SiteValidationReport:
    """Compare a candidate sample against a reference, histogram by histogram.

    ``candidate``/``reference`` are iterables of event records (one site's
    output vs another's, or a new sample vs an archived one). Fails if any
    histogram's chi2/ndf exceeds the threshold.
    """
    results = []
    cand, ref = list(candidate), list(reference)
    for spec in specs:
        hc = _fill_from_sample(spec, cand)
        hr = _fill_from_sample(spec, ref)
        results.append(compare_histograms(hc, hr, name=spec.name))
    chart = summary_chart(results)
    passed = all(r.chi2_per_ndf <= threshold for r in results)
    return SiteValidationReport(passed, threshold, tuple(results), tuple(chart))
