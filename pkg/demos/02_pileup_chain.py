"""
The four-step pile-up procedure
===============================

Follows one physics event through digitization, cavern-background
premixing and the luminosity overlay, and shows why the per-subdetector
timing windows matter: a detector that integrates for 700 ns keeps feeling
bunch crossings from 28 slots ago.
"""

import math
from collections import Counter

from dc1sim import core
from dc1sim.core import HIGH_LUMI, LOW_LUMI, Subdetector
from dc1sim.genfilter import DIJET_PARAMS, MINBIAS_PARAMS, generate_sample
from dc1sim.pileup import (DEFAULT_FLUX, digitize_event, overlay, premix,
                           pileup_cost, pileup_job_decomposition,
                           sample_cavern)

# step 0: a physics event and a minbias pool, digitized into hits
physics = digitize_event(generate_sample(DIJET_PARAMS, 1, seed=1)[0])
minbias = generate_sample(MINBIAS_PARAMS, 50, seed=2)
print(f"physics event: {len(physics.hits)} hits")

# step 1: sample the cavern background flux (neutral hits below 10 keV are
# dropped, the prompt charged component is excluded)
cavern = sample_cavern(DEFAULT_FLUX, 250, seed=3, first_event_id=10 ** 6)
print(f"cavern pseudo-events: {len(cavern)}, "
      f"mean hits {sum(len(c.hits) for c in cavern) / len(cavern):.2f}")

# step 2: premix cavern events into the minbias pool with a safety factor
pool = premix(minbias, cavern, safety_factor=5, seed=4)
print(f"premixed pool: {len(pool)} events, safety factor 5 "
      f"(each carries 5 distinct cavern events)")

# steps 3-4: overlay at both luminosities; mu scales the extra activity
for lumi in (LOW_LUMI, HIGH_LUMI):
    ev = overlay(physics, pool, lumi, seed=5)
    print(f"\n{lumi.label} luminosity (mu={lumi.mu}): "
          f"{len(ev.provenance) - 1} overlaid events, {len(ev.hits)} hits")
    offsets = Counter()
    for hit, src in zip(ev.hits, ev.hit_sources):
        if src != physics.event_id:
            offsets[hit.subdetector.value] = max(
                offsets.get(hit.subdetector.value, -30),
                math.floor(hit.time / core.BUNCH_SPACING_NS))
    for name, k in sorted(offsets.items()):
        print(f"  latest {name} pile-up hit at bunch offset {k:+d}")

# the resource table behind pile-up jobs
for lumi in (LOW_LUMI, HIGH_LUMI):
    size, cpu = pileup_cost(lumi)
    print(f"\npileup cost at {lumi.label}: {size} MB, {cpu:.0f} SI95-s/event")
mixing, digi, total = pileup_job_decomposition()
print(f"high-lumi job: {mixing:.0f} mixing + {digi:.0f} digitisation "
      f"= {total:.0f} SI95-s")
