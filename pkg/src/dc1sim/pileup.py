"""Cavern-background sampling, minbias premixing and luminosity overlay.

The procedure mirrors a four-step background chain:

1. a parametric flux table stands in for the dedicated background transport
   simulation (rates per pp collision per particle class);
2. pseudo-events are sampled from the table, normalized per pp collision;
3. pseudo-events are premixed into minbias events with an integer safety
   factor;
4. premixed minbias events are overlaid onto physics events over +/- 30
   bunch crossings according to the luminosity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from dc1sim import core
from dc1sim.core import (BUNCH_SPACING_NS, DEFAULT_TIMINGS, DigitizedEvent,
                         EventRecord, HitRecord, LuminosityConfig,
                         ParticleRecord, PdgClass, PILEUP_WINDOW, Process,
                         Subdetector, SubdetectorTiming, seeded_rng,
                         tower_index, wrap_phi)

# Neutral cavern particles below this kinetic energy never make a hit.
NEUTRAL_EKIN_CUT_GEV = 10e-6  # 10 keV

# High-luminosity overlay job breakdown, SI95-s per job.
PILEUP_JOB_MIXING_SI95S = 800.0
PILEUP_JOB_DIGITISATION_SI95S = 3600.0

DEFAULT_SAFETY_FACTORS = (1, 2, 5)


class PileupError(Exception):
    pass


@dataclass(frozen=True)
class FluxEntry:
    pdg_class: PdgClass
    rate: float  # particles per pp collision entering the envelope
    e_kin_scale: float  # GeV; exponential spectrum scale, or the fixed value
    spectrum: str = "exponential"  # "exponential" | "fixed"
    prompt: bool = False  # prompt component, excluded to avoid double counting

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("flux rate must be >= 0")
        if self.spectrum not in ("exponential", "fixed"):
            raise ValueError(f"unknown spectrum {self.spectrum!r}")


@dataclass(frozen=True)
class FluxTable:
    entries: tuple[FluxEntry, ...]
    source_event_count: int = 10000

    def __post_init__(self):
        if self.source_event_count <= 0:
            raise ValueError("source_event_count must be > 0")

    @property
    def total_rate(self) -> float:
        return sum(e.rate for e in self.entries)


DEFAULT_FLUX = FluxTable(entries=(
    FluxEntry(PdgClass.NEUTRON, 2.0, 1e-4),
    FluxEntry(PdgClass.PHOTON, 1.5, 5e-5),
    FluxEntry(PdgClass.ELECTRON, 0.3, 2e-4),
    FluxEntry(PdgClass.PROTON, 0.2, 5e-4, prompt=True),
))


def load_flux_table(path) -> FluxTable:
    """Flux config: `class rate e_kin_scale [fixed|exponential] [prompt]`
    rows, # comments."""
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            cls, rate, scale = PdgClass(fields[0]), float(fields[1]), float(fields[2])
            spectrum = fields[3] if len(fields) > 3 else "exponential"
            prompt = len(fields) > 4 and fields[4] == "prompt"
            entries.append(FluxEntry(cls, rate, scale, spectrum, prompt))
    if not entries:
        raise PileupError(f"flux table {path} has no entries")
    return FluxTable(entries=tuple(entries))


@dataclass(frozen=True)
class CavernEvent:
    event_id: int
    hits: tuple[HitRecord, ...]  # muon system only
    normalization: str = "per_pp_collision"


def sample_cavern(flux: FluxTable, n_collisions: int, seed: int,
                  first_event_id: int = 0) -> list[CavernEvent]:
    """Draw cavern pseudo-events, one per pp collision.

    Per pseudo-event the particle count is Poisson in the total flux rate.
    Neutral particles below 10 keV kinetic energy are dropped, as is the
    prompt charged component (already present in the minbias simulation).
    Surviving particles get a fresh uniform phi rotation and a start time
    reset into the [0, 25) ns bunch-crossing slot.
    """
    if not flux.entries:
        raise PileupError("empty flux table")
    if n_collisions < 1:
        raise ValueError("n_collisions must be >= 1")
    rng = seeded_rng(seed, "cavern")
    rates = np.array([e.rate for e in flux.entries])
    probs = rates / rates.sum() if rates.sum() > 0 else None
    events = []
    for i in range(n_collisions):
        hits = []
        n = int(rng.poisson(flux.total_rate))
        if n and probs is not None:
            picks = rng.choice(len(flux.entries), size=n, p=probs)
            for j in picks:
                entry = flux.entries[j]
                if entry.prompt:
                    continue
                if entry.spectrum == "fixed":
                    e_kin = entry.e_kin_scale
                else:
                    e_kin = float(rng.exponential(entry.e_kin_scale))
                neutral = entry.pdg_class in (PdgClass.PHOTON, PdgClass.NEUTRON)
                if neutral and e_kin <= NEUTRAL_EKIN_CUT_GEV:
                    continue
                t = float(rng.uniform(0.0, BUNCH_SPACING_NS))
                phi = float(rng.uniform(-math.pi, math.pi))
                eta = float(rng.uniform(-2.7, 2.7))  # muon system coverage
                ieta, iphi = tower_index(eta, phi)
                hits.append(HitRecord(Subdetector.MDT, ieta, iphi, e_kin, t))
        events.append(CavernEvent(first_event_id + i, tuple(hits)))
    return events


# ---------------------------------------------------------------------------
# Digitization of generated events (simulation-stage stand-in)

_CALO_BY_CLASS = {
    PdgClass.ELECTRON: Subdetector.LAR,
    PdgClass.PHOTON: Subdetector.LAR,
    PdgClass.PION: Subdetector.TILE,
    PdgClass.PROTON: Subdetector.TILE,
    PdgClass.NEUTRON: Subdetector.TILE,
    PdgClass.OTHER: Subdetector.TILE,
}


def digitize_event(event: EventRecord, size_mb: float = 1.0,
                   cpu_si95s: float = 1.0) -> DigitizedEvent:
    """Turn truth particles into detector hits.

    Charged particles leave silicon and TRT hits; electrons and photons
    deposit in LAr, hadrons in Tile; muons additionally reach the MDTs.
    Hit times inherit the particle production time.
    """
    hits = []
    for p in event.particles:
        ieta, iphi = tower_index(p.eta, p.phi)
        if p.charge != 0:
            hits.append(HitRecord(Subdetector.SILICON, ieta, iphi, p.pt, p.t0))
            hits.append(HitRecord(Subdetector.TRT, ieta, iphi, p.pt, p.t0))
        if p.pdg_class is PdgClass.MUON:
            hits.append(HitRecord(Subdetector.MDT, ieta, iphi, p.pt, p.t0))
        else:
            calo = _CALO_BY_CLASS[p.pdg_class]
            hits.append(HitRecord(calo, ieta, iphi, p.pt, p.t0))
    return DigitizedEvent(
        event_id=event.event_id,
        hits=tuple(hits),
        provenance=(event.event_id,),
        nominal_size_mb=size_mb,
        nominal_cpu_si95s=cpu_si95s,
    )


# ---------------------------------------------------------------------------
# Premixing (safety-factor cavern mixing into minbias)

@dataclass(frozen=True)
class PremixedMinbias:
    base: EventRecord
    cavern_multiplier: int
    merged_hits: tuple[HitRecord, ...]
    provenance: tuple[int, ...]  # minbias id first, then cavern ids


def premix(minbias_events: Sequence[EventRecord],
           cavern_events: Sequence[CavernEvent],
           safety_factor: int, seed: int) -> list[PremixedMinbias]:
    """Mix cavern pseudo-events into minbias events.

    Each output takes one minbias event plus ``safety_factor`` consecutive
    cavern events from a round-robin cursor over the pool, so the pool is
    reused across outputs but never within one output (for factors up to
    the pool size).
    """
    if safety_factor < 1:
        raise ValueError("safety_factor must be >= 1")
    if not minbias_events or not cavern_events:
        raise PileupError("premix needs non-empty minbias and cavern inputs")
    rng = seeded_rng(seed, "premix")
    cursor = int(rng.integers(len(cavern_events)))
    out = []
    for mb in minbias_events:
        digitized = digitize_event(mb)
        hits = list(digitized.hits)
        cavern_ids = []
        for _ in range(safety_factor):
            cav = cavern_events[cursor % len(cavern_events)]
            cursor += 1
            hits.extend(cav.hits)
            cavern_ids.append(cav.event_id)
        out.append(PremixedMinbias(
            base=mb,
            cavern_multiplier=safety_factor,
            merged_hits=tuple(hits),
            provenance=(mb.event_id, *cavern_ids),
        ))
    return out


# ---------------------------------------------------------------------------
# Luminosity overlay

@dataclass(frozen=True)
class PiledUpEvent:
    event_id: int
    hits: tuple[HitRecord, ...]
    hit_sources: tuple[int, ...]  # contributing event id per hit
    provenance: tuple[int, ...]  # physics id first
    overlay_counts: tuple[tuple[int, int], ...]  # (crossing offset, count)
    nominal_size_mb: float
    nominal_cpu_si95s: float

    def count_at(self, k: int) -> int:
        return dict(self.overlay_counts).get(k, 0)


def _window_for(timings: Sequence[SubdetectorTiming]) -> dict:
    windows = {}
    for t in timings:
        windows[t.subdetector] = (t.n_prev, t.n_post)
    return windows


def overlay(physics: DigitizedEvent, minbias_pool: Sequence[PremixedMinbias],
            lumi: LuminosityConfig,
            timings: Sequence[SubdetectorTiming] = DEFAULT_TIMINGS,
            seed: int = 0,
            cost_model: core.CostModel = core.DEFAULT_COST_MODEL) -> PiledUpEvent:
    """Overlay pile-up onto one physics event.

    For each crossing offset k in [-window, +window] an independent
    Poisson(mu) number of premixed minbias events is drawn uniformly with
    replacement from the pool; their hits are shifted by k bunch spacings
    and kept only inside the owning subdetector's sensitivity window. The
    triggering physics event sits at k = 0 in addition to the overlay.
    """
    if not minbias_pool:
        raise PileupError("empty premixed minbias pool")
    windows = _window_for(timings)
    for hit in physics.hits:
        if hit.subdetector not in windows:
            raise PileupError(f"no timing for subdetector {hit.subdetector.value}")
    rng = seeded_rng(seed, f"overlay:{physics.event_id}")
    hits = list(physics.hits)
    sources = [physics.event_id] * len(physics.hits)
    provenance = [physics.event_id]
    offsets = range(-lumi.window, lumi.window + 1)
    draw = rng.poisson(lumi.mu, len(offsets))
    total = int(draw.sum())
    picks = rng.integers(len(minbias_pool), size=total) if total else []
    counts = []
    cursor = 0
    for k, n_k in zip(offsets, draw):
        counts.append((k, int(n_k)))
        for pick in picks[cursor:cursor + n_k]:
            pm = minbias_pool[int(pick)]
            provenance.append(pm.provenance[0])
            for hit in pm.merged_hits:
                if hit.subdetector not in windows:
                    raise PileupError(
                        f"no timing for subdetector {hit.subdetector.value}")
                n_prev, n_post = windows[hit.subdetector]
                if -n_prev <= k <= n_post:
                    hits.append(HitRecord(hit.subdetector, hit.cell_eta,
                                          hit.cell_phi, hit.energy,
                                          hit.time + k * lumi.bunch_spacing))
                    sources.append(pm.provenance[0])
        cursor += int(n_k)
    cost = cost_model.pileup(lumi.label)
    return PiledUpEvent(
        event_id=physics.event_id,
        hits=tuple(hits),
        hit_sources=tuple(sources),
        provenance=tuple(provenance),
        overlay_counts=tuple(counts),
        nominal_size_mb=cost.size_mb,
        nominal_cpu_si95s=cost.cpu_si95s,
    )


def pileup_cost(lumi: LuminosityConfig,
                cost_model: core.CostModel = core.DEFAULT_COST_MODEL) -> tuple[float, float]:
    """Per-event (output size MB, CPU SI95-s) for the overlay stage."""
    entry = cost_model.pileup(lumi.label)
    return entry.size_mb, entry.cpu_si95s


def pileup_job_decomposition() -> tuple[float, float, float]:
    """(mixing, digitisation, total) SI95-s for one high-luminosity job."""
    return (PILEUP_JOB_MIXING_SI95S, PILEUP_JOB_DIGITISATION_SI95S,
            PILEUP_JOB_MIXING_SI95S + PILEUP_JOB_DIGITISATION_SI95S)


# ---------------------------------------------------------------------------
# Partition serialization for piled-up events

def _piledup_to_obj(e: PiledUpEvent) -> dict:
    return {
        "event_id": e.event_id,
        "hits": [core._hit_to_obj(h) for h in e.hits],
        "hit_sources": list(e.hit_sources),
        "provenance": list(e.provenance),
        "overlay_counts": [list(kv) for kv in e.overlay_counts],
        "nominal_size_mb": e.nominal_size_mb,
        "nominal_cpu_si95s": e.nominal_cpu_si95s,
    }


def _piledup_from_obj(d: dict) -> PiledUpEvent:
    return PiledUpEvent(
        event_id=d["event_id"],
        hits=tuple(core._hit_from_obj(h) for h in d["hits"]),
        hit_sources=tuple(d["hit_sources"]),
        provenance=tuple(d["provenance"]),
        overlay_counts=tuple((k, n) for k, n in d["overlay_counts"]),
        nominal_size_mb=d["nominal_size_mb"],
        nominal_cpu_si95s=d["nominal_cpu_si95s"],
    )


def _premixed_to_obj(e: PremixedMinbias) -> dict:
    return {
        "base": core._event_to_obj(e.base),
        "cavern_multiplier": e.cavern_multiplier,
        "merged_hits": [core._hit_to_obj(h) for h in e.merged_hits],
        "provenance": list(e.provenance),
    }


def _premixed_from_obj(d: dict) -> PremixedMinbias:
    return PremixedMinbias(
        base=core._event_from_obj(d["base"]),
        cavern_multiplier=d["cavern_multiplier"],
        merged_hits=tuple(core._hit_from_obj(h) for h in d["merged_hits"]),
        provenance=tuple(d["provenance"]),
    )


core.register_record_kind("piledup", PiledUpEvent, _piledup_to_obj,
                          _piledup_from_obj)
core.register_record_kind("premixed", PremixedMinbias, _premixed_to_obj,
                          _premixed_from_obj)
