"""Reconstruction stub: summaries of piled-up events at table cost.

Track and cluster definitions are deliberately minimal proxies; the stage
exists so end-to-end plans close the chain and the cost accounting is
exercised with the reconstruction table values.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from dc1sim import core
from dc1sim.core import (LuminosityConfig, Subdetector, TOWER_ETA_BINS,
                         TOWER_PHI_BINS)
from dc1sim.genfilter import Jet, find_jets
from dc1sim.pileup import PiledUpEvent

TRACK_HIT_THRESHOLD = 2  # silicon+trt hits per source to call it a track
CLUSTER_ENERGY_THRESHOLD = 1.0  # GeV per tower


class RecoError(Exception):
    pass


@dataclass(frozen=True)
class RecoSummary:
    event_id: int
    n_tracks: int
    n_clusters: int
    jets: tuple[Jet, ...]
    size_mb: float
    cpu_si95s: float


def _count_tracks(event: PiledUpEvent) -> int:
    per_source = Counter()
    for hit, src in zip(event.hits, event.hit_sources):
        if hit.subdetector in (Subdetector.SILICON, Subdetector.TRT):
            per_source[src] += 1
    return sum(1 for n in per_source.values() if n >= TRACK_HIT_THRESHOLD)


def _count_clusters(event: PiledUpEvent,
                    threshold: float = CLUSTER_ENERGY_THRESHOLD) -> int:
    """Contiguous above-threshold calorimeter tower groups (4-adjacency,
    phi wraps)."""
    grid = np.zeros((TOWER_ETA_BINS, TOWER_PHI_BINS))
    for hit in event.hits:
        if hit.subdetector in (Subdetector.LAR, Subdetector.TILE):
            grid[hit.cell_eta, hit.cell_phi] += hit.energy
    hot = grid > threshold
    seen = np.zeros_like(hot, dtype=bool)
    clusters = 0
    for ie in range(TOWER_ETA_BINS):
        for ip in range(TOWER_PHI_BINS):
            if not hot[ie, ip] or seen[ie, ip]:
                continue
            clusters += 1
            queue = deque([(ie, ip)])
            seen[ie, ip] = True
            while queue:
                e, p = queue.popleft()
                for de, dp in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ne, np_ = e + de, (p + dp) % TOWER_PHI_BINS
                    if 0 <= ne < TOWER_ETA_BINS and hot[ne, np_] \
                            and not seen[ne, np_]:
                        seen[ne, np_] = True
                        queue.append((ne, np_))
    return clusters


def _tower_pseudo_event(event: PiledUpEvent) -> core.EventRecord:
    """Calorimeter towers as massless pseudo-particles for jet finding."""
    towers = Counter()
    for hit in event.hits:
        if hit.subdetector in (Subdetector.LAR, Subdetector.TILE):
            towers[(hit.cell_eta, hit.cell_phi)] += hit.energy
    particles = []
    for (ie, ip), energy in sorted(towers.items()):
        eta = -core.TOWER_ETA_MAX + (ie + 0.5) * 2 * core.TOWER_ETA_MAX / TOWER_ETA_BINS
        phi = -np.pi + (ip + 0.5) * 2 * np.pi / TOWER_PHI_BINS
        particles.append(core.ParticleRecord(core.PdgClass.OTHER, energy,
                                             eta, phi, energy))
    if not particles:
        particles = [core.ParticleRecord(core.PdgClass.OTHER, 0.0, 0.0, 0.0, 0.0)]
    return core.EventRecord(event.event_id, core.Process.PHYSICS_OTHER,
                            tuple(particles), seed=0)


def reconstruct(event: PiledUpEvent, lumi: LuminosityConfig,
                cost_model: core.CostModel = core.DEFAULT_COST_MODEL) -> RecoSummary:
    """Deterministic summary of one piled-up event at table cost."""
    try:
        cost = cost_model.reco(lumi.label)
    except KeyError as exc:
        raise RecoError(str(exc)) from None
    return RecoSummary(
        event_id=event.event_id,
        n_tracks=_count_tracks(event),
        n_clusters=_count_clusters(event),
        jets=tuple(find_jets(_tower_pseudo_event(event))),
        size_mb=cost.size_mb,
        cpu_si95s=cost.cpu_si95s,
    )
