"""
The virtual-data catalog and the pull model
===========================================

Transformations are recipes, derivations bind their parameters, and each
execution attempt is an invocation held under a lease. Agents pull work;
nothing is ever pushed. The demo plays out the failure story: an agent
leases a derivation and dies, the lease times out, another agent pulls the
same derivation, and only the first registered success counts.
"""

from dc1sim.vdc import ParamSpec, Transformation, VirtualDataCatalog

catalog = VirtualDataCatalog()
catalog.register_agent("cern-0")
catalog.register_agent("lyon-0")

tid = catalog.register_transformation(Transformation(
    "toysim", "1.0", "simulate",
    (ParamSpec("seed", "int"), ParamSpec("events", "int")),
    default_timeout=100.0))

d = catalog.derive(tid, {"seed": 7, "events": 1000}, ["ds1/00000.dc1p"])
print(f"derivation {d.derivation_id}: {d.bindings} -> {d.declared_outputs}")

# cern-0 pulls the work and then silently dies
inv1 = catalog.pull_next("cern-0", now=0.0)
print(f"t=0:   cern-0 leased invocation {inv1.invocation_id} "
       f"(timeout {inv1.timeout:.0f} s)")
print(f"t=50:  lyon-0 pulls -> "
      f"{catalog.pull_next('lyon-0', now=50.0)} (lease still live)")

# past the timeout the derivation is eligible again; the stale invocation
# is marked expired and the retry counter ticks
inv2 = catalog.pull_next("lyon-0", now=150.0)
print(f"t=150: lyon-0 leased invocation {inv2.invocation_id}; "
      f"invocation {inv1.invocation_id} is now "
      f"{catalog.invocations[inv1.invocation_id].outcome}, "
      f"retry_count={catalog.derivations[d.derivation_id].retry_count}")

outputs = [{"lfn": "ds1/00000.dc1p", "checksum": "0f3a", "size_mb": 50.0,
            "event_count": 1000}]
print(f"t=200: lyon-0 success accepted: "
      f"{catalog.register_success(inv2.invocation_id, outputs, now=200.0)}")

# cern-0 was not dead after all and reports in late; its result is refused
print(f"t=210: cern-0 late success accepted: "
      f"{catalog.register_success(inv1.invocation_id, outputs, now=210.0)}")
print(f"final: derivation status {catalog.derivations[d.derivation_id].status}, "
      f"outputs recorded once: {catalog.outputs[d.derivation_id][0]['lfn']}")
