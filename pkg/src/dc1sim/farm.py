"""Discrete-event simulation of the worldwide production farm.

Sites host one agent per processor; idle agents pull leased work from the
virtual-data catalog, replicate missing inputs, execute at cost-model
speed and register outputs in the catalogs. Crash faults abandon the
attempt (timeout recovery re-issues it); hang faults hold the lease past
its timeout so the late result is discarded. The whole loop is a single
deterministic event queue: (plan, seed) fixes the trace.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import yaml

from dc1sim import catalogs as cat
from dc1sim import core
from dc1sim import vdc as vdcmod
from dc1sim.core import SI95_PER_NCU

_EPS = 1e-9


class FarmError(Exception):
    pass


class DeadlockError(FarmError):
    """No agent can make progress; carries the blocked derivation ids."""

    def __init__(self, blocked: Sequence[int]):
        super().__init__(f"production deadlocked; blocked derivations: "
                         f"{sorted(blocked)}")
        self.blocked = sorted(blocked)


def ncu_to_si95(ncu: float) -> float:
    if ncu < 0:
        raise ValueError("ncu must be >= 0")
    return ncu * SI95_PER_NCU


@dataclass
class Site:
    name: str
    processors: int
    ncu_per_processor: float
    bandwidth_mb_s: float = 100.0
    local_cache: set = field(default_factory=set)

    def __post_init__(self):
        if self.processors < 1:
            raise ValueError("processors must be >= 1")

    @property
    def capacity_si95(self) -> float:
        return self.processors * ncu_to_si95(self.ncu_per_processor)


@dataclass(frozen=True)
class Fault:
    time: float
    agent: str
    kind: str  # "crash" | "hang"

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("fault times must be non-negative")
        if self.kind not in ("crash", "hang"):
            raise ValueError(f"unknown fault kind {self.kind!r}")


@dataclass
class DatasetSpec:
    dataset_id: int
    process: str  # single_particle | minbias | dijet
    events: int
    partitions: int = 1
    stage: str = "simulate"
    lumi: str = "low"
    priority: str = "high"
    group_in_charge: str = "production"
    inputs_from: Optional[int] = None


@dataclass
class ProductionPlan:
    sites: list[Site]
    datasets: list[DatasetSpec]
    faults: list[Fault] = field(default_factory=list)
    seed: int = 0


def load_plan(path) -> ProductionPlan:
    """Plan config: YAML with `sites`, `datasets`, optional `faults`, `seed`."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    sites = [Site(s["name"], s["processors"], s["ncu_per_processor"],
                  s.get("bandwidth_mb_s", 100.0)) for s in raw["sites"]]
    datasets = [DatasetSpec(
        dataset_id=d["dataset_id"], process=d["process"], events=d["events"],
        partitions=d.get("partitions", 1), stage=d.get("stage", "simulate"),
        lumi=d.get("lumi", "low"), priority=d.get("priority", "high"),
        group_in_charge=d.get("group_in_charge", "production"),
        inputs_from=d.get("inputs_from"),
    ) for d in raw["datasets"]]
    faults = [Fault(f["time"], f["agent"], f["kind"])
              for f in raw.get("faults", [])]
    return ProductionPlan(sites, datasets, faults, raw.get("seed", 0))


_PRIORITY_RANK = {p: i for i, p in enumerate(cat.PRIORITY_ORDER)}

_STAGE_TRANSFORMS = {
    "generate": ("toygen", "1.0"),
    "simulate": ("toysim", "1.0"),
    "premix": ("premix", "1.0"),
    "pileup": ("pileup", "1.0"),
    "reconstruct": ("toyreco", "1.0"),
}


def stage_cost(stage: str, process: str, lumi: str,
               cost_model: core.CostModel) -> core.CostEntry:
    """Per-event (size, CPU) for one derivation of the given stage."""
    if stage in ("generate", "simulate"):
        return cost_model.simulation(core.Process(process))
    if stage == "premix":
        return cost_model.premix_job
    if stage == "pileup":
        return cost_model.pileup(lumi)
    if stage == "reconstruct":
        return cost_model.reco(lumi)
    raise FarmError(f"unknown stage {stage!r}")


def partition_lfn(dataset_id: int, partition: int) -> str:
    return f"{dataset_id}/{partition:05d}.dc1p"


def install_plan(plan: ProductionPlan, vdc: vdcmod.VirtualDataCatalog,
                 metadata: cat.MetadataCatalog,
                 cost_model: core.CostModel = core.DEFAULT_COST_MODEL):
    """Register the plan's transformations, datasets and derivations.

    Each dataset becomes one metadata record plus one derivation per
    partition. Timeouts default to 10x the partition's CPU estimate on the
    slowest site in the plan.
    """
    slowest = min(ncu_to_si95(s.ncu_per_processor) for s in plan.sites)
    tids = {}
    for stage, (name, version) in _STAGE_TRANSFORMS.items():
        try:
            tids[stage] = vdc.register_transformation(vdcmod.Transformation(
                name, version, stage,
                (vdcmod.ParamSpec("dataset_id", "int"),
                 vdcmod.ParamSpec("partition_number", "int"),
                 vdcmod.ParamSpec("event_count", "int"),
                 vdcmod.ParamSpec("process", "str"),
                 vdcmod.ParamSpec("lumi", "str"),
                 vdcmod.ParamSpec("seed", "int")),
            ))
        except vdcmod.DuplicateTransformationError:
            tids[stage] = vdc.by_name_version[(name, version)]
    for ds in plan.datasets:
        metadata.register_dataset({
            "process": ds.process, "lumi": ds.lumi,
            "priority": ds.priority, "group_in_charge": ds.group_in_charge,
            "status": "requested", "events_requested": ds.events,
            "events_generated": 0, "events_simulated": 0,
        })
        per_part = ds.events // ds.partitions
        remainder = ds.events - per_part * ds.partitions
        cost = stage_cost(ds.stage, ds.process, ds.lumi, cost_model)
        for p in range(ds.partitions):
            n_events = per_part + (1 if p < remainder else 0)
            inputs = ()
            if ds.inputs_from is not None:
                inputs = (partition_lfn(ds.inputs_from, p),)
            timeout = 10.0 * n_events * cost.cpu_si95s / slowest
            vdc.derive(
                tids[ds.stage],
                bindings={"dataset_id": ds.dataset_id, "partition_number": p,
                          "event_count": n_events, "process": ds.process,
                          "lumi": ds.lumi, "seed": plan.seed},
                outputs=[partition_lfn(ds.dataset_id, p)],
                inputs=inputs,
                priority=_PRIORITY_RANK.get(ds.priority, 0),
                timeout=timeout,
            )


@dataclass
class SiteLedger:
    events: int = 0
    si95_seconds: float = 0.0
    busy_seconds: float = 0.0
    data_volume_mb: float = 0.0
    partitions: int = 0
    transfer_seconds: float = 0.0


@dataclass
class ProductionReport:
    per_site: dict
    events_processed: int
    si95_seconds: float
    wall_clock_seconds: float
    data_volume_mb: float
    partitions: int
    retries: int
    expired_invocations: int
    wasted_si95_seconds: float

    def to_dict(self) -> dict:
        return {
            "per_site": {
                name: {"events": s.events, "si95_seconds": s.si95_seconds,
                       "busy_seconds": s.busy_seconds,
                       "data_volume_mb": s.data_volume_mb,
                       "partitions": s.partitions,
                       "transfer_seconds": s.transfer_seconds}
                for name, s in sorted(self.per_site.items())
            },
            "events_processed": self.events_processed,
            "si95_seconds": self.si95_seconds,
            "wall_clock_seconds": self.wall_clock_seconds,
            "data_volume_mb": self.data_volume_mb,
            "partitions": self.partitions,
            "retries": self.retries,
            "expired_invocations": self.expired_invocations,
            "wasted_si95_seconds": self.wasted_si95_seconds,
        }


class FarmSimulator:
    """Single-threaded event loop; snapshot_progress is safe from other
    threads (it reads a published copy)."""

    HANG_DELAY_FACTOR = 1.5  # extra lease-timeouts a hung attempt stalls for

    def __init__(self, plan: ProductionPlan, vdc: vdcmod.VirtualDataCatalog,
                 metadata: cat.MetadataCatalog, replicas: cat.ReplicaCatalog,
                 cost_model: core.CostModel = core.DEFAULT_COST_MODEL,
                 seed: int = 0):
        self.plan = plan
        self.vdc = vdc
        self.metadata = metadata
        self.replicas = replicas
        self.cost_model = cost_model
        self.rng = core.seeded_rng(seed, "farm")
        self.now = 0.0
        self.heap: list = []
        self._seq = itertools.count()
        self.agent_site: dict[str, Site] = {}
        self.faults: dict[str, list[Fault]] = {}
        self.ledgers = {s.name: SiteLedger() for s in plan.sites}
        self.retries_seen = 0
        self.wasted_si95s = 0.0
        self.finished = False
        self._snapshot_lock = threading.Lock()
        self._published_snapshot: dict = {}
        for site in plan.sites:
            replicas.register_site(site.name)
            for i in range(site.processors):
                agent = f"{site.name}-{i}"
                self.agent_site[agent] = site
                vdc.register_agent(agent)
                self._schedule(0.0, "wake", agent)
        for f in sorted(plan.faults, key=lambda f: f.time):
            self.faults.setdefault(f.agent, []).append(f)
        self._publish()

    # -- event plumbing ------------------------------------------------------

    def _schedule(self, time: float, kind: str, agent: str, data=None):
        heapq.heappush(self.heap, (time, next(self._seq), kind, agent, data))

    def _next_fault(self, agent: str, start: float, end: float) -> Optional[Fault]:
        for f in self.faults.get(agent, ()):
            if start <= f.time < end:
                self.faults[agent].remove(f)
                return f
        return None

    # -- execution -----------------------------------------------------------

    def _exec_params(self, derivation) -> tuple[core.CostEntry, str, int]:
        t = self.vdc.transformations[derivation.transformation_id]
        b = derivation.bindings
        cost = stage_cost(t.stage, b.get("process", "minbias"),
                          b.get("lumi", "low"), self.cost_model)
        return cost, t.stage, b["event_count"]

    def _start_work(self, agent: str):
        inv = self.vdc.pull_next(agent, self.now)
        if inv is None:
            if self.vdc.all_done():
                return
            leased = [d for d in self.vdc.derivations.values()
                      if d.status == "leased"]
            if leased:
                next_expiry = min(
                    self.vdc.invocations[d.current_invocation].lease_start
                    + d.timeout for d in leased)
                self._schedule(max(next_expiry, self.now) + _EPS, "wake", agent)
                return
            # nothing leased, nothing eligible: inputs can never appear
            raise DeadlockError(self.vdc.blocked_derivations())
        site = self.agent_site[agent]
        d = self.vdc.derivations[inv.derivation_id]
        cost, stage, n_events = self._exec_params(d)
        transfer = 0.0
        for lfn in d.declared_inputs:
            if lfn in site.local_cache:
                continue
            locations = self.replicas.locate(lfn)
            if not any(r.site == site.name for r in locations):
                src = sorted(r.site for r in locations)[0]
                _, duration = self.replicas.replicate(lfn, src, site.name,
                                                      site.bandwidth_mb_s)
                transfer += duration
            site.local_cache.add(lfn)
        speed = ncu_to_si95(site.ncu_per_processor)
        exec_time = n_events * cost.cpu_si95s / speed
        start = self.now + transfer
        finish = start + exec_time
        self.ledgers[site.name].transfer_seconds += transfer
        fault = self._next_fault(agent, self.now, finish)
        if fault is not None and fault.kind == "crash":
            # attempt abandoned; processor freed now, lease recovers by timeout
            self.wasted_si95s += max(0.0, fault.time - start) * speed
            self._schedule(max(fault.time, self.now) + _EPS, "wake", agent)
            return
        if fault is not None and fault.kind == "hang":
            finish = max(finish, fault.time) + d.timeout * self.HANG_DELAY_FACTOR
        self._schedule(finish, "finish", agent, (inv.invocation_id, exec_time))

    def _output_files(self, derivation) -> list[dict]:
        cost, stage, n_events = self._exec_params(derivation)
        files = []
        for lfn in derivation.declared_outputs:
            checksum = hashlib.sha256(
                f"{lfn}:{sorted(derivation.bindings.items())}".encode()
            ).hexdigest()[:16]
            files.append({"lfn": lfn, "checksum": checksum,
                          "size_mb": n_events * cost.size_mb,
                          "event_count": n_events})
        return files

    def _finish_work(self, agent: str, invocation_id: int, exec_time: float):
        site = self.agent_site[agent]
        inv = self.vdc.invocations[invocation_id]
        d = self.vdc.derivations[inv.derivation_id]
        cost, stage, n_events = self._exec_params(d)
        speed = ncu_to_si95(site.ncu_per_processor)
        self.ledgers[site.name].busy_seconds += exec_time
        accepted = self.vdc.register_success(invocation_id,
                                             self._output_files(d), self.now)
        if accepted:
            ledger = self.ledgers[site.name]
            ledger.events += n_events
            ledger.si95_seconds += n_events * cost.cpu_si95s
            ledger.data_volume_mb += n_events * cost.size_mb
            ledger.partitions += len(d.declared_outputs)
            for f in self._output_files(d):
                self.metadata.attach_file(
                    d.bindings["dataset_id"],
                    cat.LogicalFile(f["lfn"], f["size_mb"], f["checksum"],
                                    f["event_count"], d.derivation_id))
                self.replicas.register_replica(f["lfn"], site.name)
                site.local_cache.add(f["lfn"])
            self._update_dataset_progress(d, stage, n_events)
        else:
            self.wasted_si95s += n_events * cost.cpu_si95s
        self._schedule(self.now + _EPS, "wake", agent)

    def _update_dataset_progress(self, derivation, stage: str, n_events: int):
        dsid = derivation.bindings["dataset_id"]
        ds = self.metadata.datasets.get(dsid)
        if ds is None:
            return
        key = ("events_generated" if stage == "generate"
               else "events_simulated")
        updates = {key: ds.attributes.get(key, 0) + n_events}
        done = ds.attributes.get("events_simulated", 0) + \
            (n_events if key == "events_simulated" else 0)
        if done >= ds.attributes.get("events_requested", 0):
            updates["status"] = "done"
        else:
            updates["status"] = "running"
        self.metadata.update_attributes(dsid, updates)

    # -- driving -------------------------------------------------------------

    def step(self) -> bool:
        """Process one event; False when the queue drained."""
        while self.heap:
            time, _, kind, agent, data = heapq.heappop(self.heap)
            self.now = max(self.now, time)
            if kind == "wake":
                if not self.vdc.all_done():
                    self._start_work(agent)
            elif kind == "finish":
                self._finish_work(agent, *data)
            self._publish()
            return True
        if not self.vdc.all_done():
            raise DeadlockError(self.vdc.blocked_derivations())
        self.finished = True
        self._publish()
        return False

    def run(self, max_steps: Optional[int] = None) -> bool:
        """Run at most ``max_steps`` events; True while work remains."""
        steps = 0
        while max_steps is None or steps < max_steps:
            if not self.step():
                return False
            steps += 1
        return True

    def report(self) -> ProductionReport:
        expired = sum(1 for i in self.vdc.invocations.values()
                      if i.outcome == "expired")
        retries = sum(d.retry_count for d in self.vdc.derivations.values())
        return ProductionReport(
            per_site=self.ledgers,
            events_processed=sum(s.events for s in self.ledgers.values()),
            si95_seconds=sum(s.si95_seconds for s in self.ledgers.values()),
            wall_clock_seconds=self.now,
            data_volume_mb=sum(s.data_volume_mb for s in self.ledgers.values()),
            partitions=sum(s.partitions for s in self.ledgers.values()),
            retries=retries,
            expired_invocations=expired,
            wasted_si95_seconds=self.wasted_si95s,
        )

    # -- monitoring ----------------------------------------------------------

    def _publish(self):
        datasets = []
        for dsid in sorted(self.metadata.datasets):
            ds = self.metadata.datasets[dsid]
            a = ds.attributes
            cost = None
            if a.get("process") in ("single_particle", "minbias", "dijet"):
                cost = self.cost_model.simulation(
                    core.Process(a["process"])).cpu_si95s
            datasets.append({
                "dataset_id": dsid,
                "process": a.get("process"),
                "priority": a.get("priority"),
                "group_in_charge": a.get("group_in_charge"),
                "status": a.get("status"),
                "events_requested": a.get("events_requested", 0),
                "events_generated": a.get("events_generated", 0),
                "events_simulated": a.get("events_simulated", 0),
                "time_per_event_si95s": cost,
            })
        sites = {}
        for site in self.plan.sites:
            ledger = self.ledgers[site.name]
            utilization = 0.0
            if self.now > 0:
                utilization = min(1.0, ledger.busy_seconds
                                  / (self.now * site.processors))
            sites[site.name] = {
                "processors": site.processors,
                "capacity_si95": site.capacity_si95,
                "busy_seconds": ledger.busy_seconds,
                "utilization": utilization,
                "events": ledger.events,
            }
        snapshot = {
            "simulated_time": self.now,
            "finished": self.finished,
            "datasets": datasets,
            "sites": sites,
            "retries": sum(d.retry_count
                           for d in self.vdc.derivations.values()),
            "expired_invocations": sum(
                1 for i in self.vdc.invocations.values()
                if i.outcome == "expired"),
            "derivations_done": sum(
                1 for d in self.vdc.derivations.values()
                if d.status == "done"),
            "derivations_total": len(self.vdc.derivations),
        }
        with self._snapshot_lock:
            self._published_snapshot = snapshot

    def snapshot_progress(self) -> dict:
        with self._snapshot_lock:
            return dict(self._published_snapshot)


def run_production(plan: ProductionPlan, vdc: vdcmod.VirtualDataCatalog,
                   metadata: cat.MetadataCatalog,
                   replicas: cat.ReplicaCatalog,
                   cost_model: core.CostModel = core.DEFAULT_COST_MODEL,
                   seed: int = 0) -> ProductionReport:
    """Install the plan (unless already installed) and run it to the end."""
    if not vdc.derivations:
        install_plan(plan, vdc, metadata, cost_model)
    sim = FarmSimulator(plan, vdc, metadata, replicas, cost_model, seed)
    sim.run()
    return sim.report()
