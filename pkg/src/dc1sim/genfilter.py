"""Toy event generation, the di-jet tower filter, cone jet finding and
generation monitoring.

The generator is deliberately simple: Poisson multiplicity, exponential pt
spectrum, flat eta and phi. That gives every sample analytic moments, which
is what the downstream statistical checks lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from dc1sim import core
from dc1sim.core import (EventRecord, ParticleRecord, PdgClass, Process,
                         TOWER_ETA_BINS, TOWER_PHI_BINS, seeded_rng,
                         tower_index, wrap_phi)

DEFAULT_CONE_RADIUS = 0.4
DEFAULT_JET_PT_MIN = 10.0


@dataclass(frozen=True)
class ProcessParams:
    process: Process
    mean_multiplicity: float
    pt_scale: float  # GeV, exponential spectrum scale
    et_hard_cut: float = 0.0  # GeV, di-jet hard scattering cut
    eta_max: float = 5.0

    def __post_init__(self):
        if self.mean_multiplicity <= 0:
            raise ValueError("mean_multiplicity must be > 0")
        if self.pt_scale <= 0:
            raise ValueError("pt_scale must be > 0")
        if self.eta_max > 5.0:
            raise ValueError("eta_max must be <= 5")


MINBIAS_PARAMS = ProcessParams(Process.MINBIAS, 50.0, 0.5)
SINGLE_PARTICLE_PARAMS = ProcessParams(Process.SINGLE_PARTICLE, 1.0, 20.0)
DIJET_PARAMS = ProcessParams(Process.DIJET, 30.0, 1.0, et_hard_cut=17.0)


def params_for(process: Process) -> ProcessParams:
    return {
        Process.MINBIAS: MINBIAS_PARAMS,
        Process.SINGLE_PARTICLE: SINGLE_PARTICLE_PARAMS,
        Process.DIJET: DIJET_PARAMS,
    }[process]


_SOFT_CLASSES = (PdgClass.PION, PdgClass.PHOTON, PdgClass.PROTON,
                 PdgClass.OTHER)
_CHARGES = {PdgClass.ELECTRON: -1, PdgClass.MUON: -1, PdgClass.PHOTON: 0,
            PdgClass.PION: 1, PdgClass.NEUTRON: 0, PdgClass.PROTON: 1,
            PdgClass.OTHER: 0}


def generate_event(params: ProcessParams, seed: int,
                   event_id: Optional[int] = None) -> EventRecord:
    """Generate one toy event; pure function of (params, seed).

    Multiplicity ~ Poisson(mean), pt ~ Exp(pt_scale), eta and phi flat. For
    di-jet events two back-to-back hard particles above the hard-scattering
    cut are injected on top of the soft activity.
    """
    rng = seeded_rng(seed, f"gen:{params.process.value}")
    n = max(1, int(rng.poisson(params.mean_multiplicity)))
    if params.process is Process.SINGLE_PARTICLE:
        n = int(round(params.mean_multiplicity))
    particles = []
    for _ in range(n):
        cls = _SOFT_CLASSES[rng.integers(len(_SOFT_CLASSES))]
        if params.process is Process.SINGLE_PARTICLE:
            cls = PdgClass.MUON
        pt = float(rng.exponential(params.pt_scale))
        eta = float(rng.uniform(-params.eta_max, params.eta_max))
        phi = float(rng.uniform(-math.pi, math.pi))
        particles.append(ParticleRecord(cls, pt, eta, phi,
                                        e_kin=pt * math.cosh(eta),
                                        t0=float(rng.uniform(0.0, core.BUNCH_SPACING_NS)),
                                        charge=_CHARGES[cls]))
    if params.process is Process.DIJET:
        hard_pt = params.et_hard_cut + float(rng.exponential(params.pt_scale))
        eta1 = float(rng.uniform(-params.eta_max, params.eta_max))
        eta2 = float(rng.uniform(-params.eta_max, params.eta_max))
        phi1 = float(rng.uniform(-math.pi, math.pi))
        for eta, phi in ((eta1, phi1), (eta2, wrap_phi(phi1 + math.pi))):
            particles.append(ParticleRecord(PdgClass.PION, hard_pt, eta, phi,
                                            e_kin=hard_pt * math.cosh(eta),
                                            t0=0.0, charge=1))
    return EventRecord(
        event_id=event_id if event_id is not None else seed,
        process=params.process,
        particles=tuple(particles),
        seed=seed,
    )


def generate_sample(params: ProcessParams, n_events: int, seed: int,
                    first_event_id: int = 0) -> list[EventRecord]:
    """A reproducible sample: event i uses the per-event seed derived from
    (seed, i)."""
    rng = seeded_rng(seed, "gen:event-seeds")
    seeds = rng.integers(0, 2 ** 62, size=n_events)
    return [generate_event(params, int(s), event_id=first_event_id + i)
            for i, s in enumerate(seeds)]


# ---------------------------------------------------------------------------
# Di-jet filter

def tower_energies(event: EventRecord) -> np.ndarray:
    """Summed particle pt per (eta, phi) tower."""
    grid = np.zeros((TOWER_ETA_BINS, TOWER_PHI_BINS))
    for p in event.particles:
        ieta, iphi = tower_index(p.eta, p.phi)
        grid[ieta, iphi] += p.pt
    return grid


def dijet_filter(event: EventRecord, e_threshold: float) -> bool:
    """True iff two towers adjacent in eta or phi (phi wraps) each hold more
    than ``e_threshold`` of summed particle pt."""
    grid = tower_energies(event)
    hot = grid > e_threshold
    if hot.sum() < 2:
        return False
    # adjacent in eta
    if np.any(hot[:-1, :] & hot[1:, :]):
        return True
    # adjacent in phi, wrap-around included
    return bool(np.any(hot & np.roll(hot, 1, axis=1)))


# ---------------------------------------------------------------------------
# Jet finding

@dataclass(frozen=True)
class Jet:
    pt: float
    eta: float
    phi: float
    constituent_count: int


def delta_r(eta1, phi1, eta2, phi2) -> float:
    dphi = abs(wrap_phi(phi1 - phi2))
    return math.hypot(eta1 - eta2, dphi)


def find_jets(event: EventRecord, cone_radius: float = DEFAULT_CONE_RADIUS,
              pt_min: float = DEFAULT_JET_PT_MIN) -> list[Jet]:
    """Seeded fixed-cone finder at particle level.

    Seeds are taken in descending pt; each unassigned particle within
    ``cone_radius`` of the seed joins that jet. Jets below ``pt_min`` are
    dropped; the result is sorted descending in pt.
    """
    if cone_radius <= 0:
        raise ValueError("cone_radius must be > 0")
    order = sorted(range(len(event.particles)),
                   key=lambda i: -event.particles[i].pt)
    assigned = [False] * len(event.particles)
    jets = []
    for si in order:
        if assigned[si]:
            continue
        seed = event.particles[si]
        members = [i for i in order
                   if not assigned[i]
                   and delta_r(seed.eta, seed.phi,
                               event.particles[i].eta,
                               event.particles[i].phi) <= cone_radius]
        pt = sum(event.particles[i].pt for i in members)
        if pt < pt_min:
            continue
        for i in members:
            assigned[i] = True
        eta = sum(event.particles[i].pt * event.particles[i].eta
                  for i in members) / pt
        # pt-weighted circular mean relative to the seed axis
        dphi = sum(event.particles[i].pt
                   * wrap_phi(event.particles[i].phi - seed.phi)
                   for i in members) / pt
        jets.append(Jet(pt, eta, wrap_phi(seed.phi + dphi), len(members)))
    return sorted(jets, key=lambda j: -j.pt)


# ---------------------------------------------------------------------------
# Generation monitoring

@dataclass(frozen=True)
class MonitoringReport:
    sample_size: int
    histograms: dict  # raw count histograms, by name
    normalizations: dict  # {"per_events": {...}, "per_jets": {...}, "per_xsec": {...}}

    def histogram(self, name: str, normalization: Optional[str] = None):
        if normalization is None:
            return self.histograms[name]
        return self.normalizations[normalization][name]


def monitor_sample(events: Sequence[EventRecord],
                   cone_radius: float = DEFAULT_CONE_RADIUS,
                   pt_min: float = DEFAULT_JET_PT_MIN,
                   cross_section: float = 1.0) -> MonitoringReport:
    """Fill the jet monitoring histograms for a generated sample.

    Three normalization variants of the same raw counts are produced: per
    event, per jet, and per unit cross section.
    """
    from dc1sim.validate import Histogram1D

    if not events:
        raise ValueError("monitor_sample needs a non-empty sample")
    h_njets = Histogram1D("n_jets", 20, 0.0, 20.0)
    h_pt = Histogram1D("jet_pt", 50, 0.0, 100.0)
    h_eta = Histogram1D("jet_eta", 50, -5.0, 5.0)
    n_jets_total = 0
    for ev in events:
        jets = find_jets(ev, cone_radius, pt_min)
        n_jets_total += len(jets)
        h_njets.fill(len(jets))
        for jet in jets:
            h_pt.fill(jet.pt)
            h_eta.fill(jet.eta)
    raw = {"n_jets": h_njets, "jet_pt": h_pt, "jet_eta": h_eta}
    n_events = len(events)
    normalizations = {
        "per_events": {k: h.scaled(1.0 / n_events) for k, h in raw.items()},
        "per_jets": {k: h.scaled(1.0 / n_jets_total if n_jets_total else 0.0)
                     for k, h in raw.items()},
        "per_xsec": {k: h.scaled(cross_section / n_events)
                     for k, h in raw.items()},
    }
    return MonitoringReport(n_events, raw, normalizations)
