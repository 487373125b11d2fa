"""Campaign state: journals, catalogs, plans and the stepwise run loop.

One data directory holds everything a campaign owns (journals, snapshots,
partition files, progress file), so a campaign can be relocated or
restarted by pointing at the directory again.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from dc1sim import catalogs as cat
from dc1sim import core, farm
from dc1sim import vdc as vdcmod
from dc1sim.journal import Journal


@dataclass
class CampaignConfig:
    data_dir: Path
    cost_model: core.CostModel = core.DEFAULT_COST_MODEL
    attribute_schema: tuple = cat.DEFAULT_SCHEMA
    default_validation_threshold: float = 2.0
    run_batch_steps: int = 200

    @classmethod
    def load(cls, path: Optional[str] = None) -> "CampaignConfig":
        """Read the YAML config; DC1_DATA_DIR overrides data_dir."""
        raw = {}
        if path is not None:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        data_dir = os.environ.get("DC1_DATA_DIR", raw.get("data_dir", "./dc1-data"))
        cost = core.DEFAULT_COST_MODEL
        if "cost_model" in raw:
            overrides = {k: core.CostEntry(*v) for k, v in raw["cost_model"].items()}
            cost = core.CostModel(**{
                **{f: getattr(core.DEFAULT_COST_MODEL, f)
                   for f in core.CostModel.__dataclass_fields__},
                **overrides})
        schema = list(cat.DEFAULT_SCHEMA)
        for extra in raw.get("attribute_schema_extra", []):
            schema.append(cat.AttributeSpec(extra["key"], extra["type"],
                                            tuple(extra.get("ordering", ()))))
        return cls(
            data_dir=Path(data_dir),
            cost_model=cost,
            attribute_schema=tuple(schema),
            default_validation_threshold=raw.get(
                "default_validation_threshold", 2.0),
            run_batch_steps=raw.get("run_batch_steps", 200),
        )


@dataclass
class PlanState:
    plan_id: int
    plan: farm.ProductionPlan
    simulator: Optional[farm.FarmSimulator] = None
    state: str = "created"  # created | running | paused | done | failed
    error: Optional[str] = None
    thread: Optional[threading.Thread] = None
    pause_requested: bool = False


class Campaign:
    """All mutable production state behind one object.

    The catalogs are journal-backed; reopening a Campaign on the same
    data_dir resumes from the persisted state.
    """

    def __init__(self, config: CampaignConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        jdir = self.data_dir / "journals"
        self.metadata = cat.MetadataCatalog(Journal(jdir / "metadata.jsonl"),
                                            schema=config.attribute_schema)
        self.replicas = cat.ReplicaCatalog(Journal(jdir / "replicas.jsonl"),
                                           metadata=self.metadata)
        self.vdc = vdcmod.VirtualDataCatalog(
            Journal(jdir / "vdc.jsonl"),
            input_available=self.replicas.has_file)
        self.plans: dict[int, PlanState] = {}
        self.validations: dict[int, dict] = {}
        self._next_plan_id = 1
        self._next_validation_id = 1
        self._lock = threading.Lock()

    def close(self):
        for state in self.plans.values():
            if state.thread is not None and state.thread.is_alive():
                state.pause_requested = True
                state.thread.join(timeout=5)
        for sm in (self.metadata, self.replicas, self.vdc):
            if sm.journal is not None:
                sm.journal.close()

    def checkpoint(self):
        for sm in (self.metadata, self.replicas, self.vdc):
            sm.checkpoint()

    # -- plans ---------------------------------------------------------------

    def create_plan(self, plan: farm.ProductionPlan) -> int:
        with self._lock:
            plan_id = self._next_plan_id
            self._next_plan_id += 1
            self.plans[plan_id] = PlanState(plan_id, plan)
            return plan_id

    def _run_loop(self, state: PlanState):
        sim = state.simulator
        try:
            while True:
                if state.pause_requested:
                    state.state = "paused"
                    return
                if not sim.run(max_steps=self.config.run_batch_steps):
                    break
                self.write_progress(sim.snapshot_progress())
            state.state = "done"
            self.write_progress(sim.snapshot_progress())
        except farm.DeadlockError as exc:
            state.state = "failed"
            state.error = str(exc)

    def run_plan(self, plan_id: int, seed: int = 0,
                 background: bool = True) -> PlanState:
        state = self.plans[plan_id]
        if state.state == "running":
            return state
        if state.simulator is None:
            if not self.vdc.derivations:
                farm.install_plan(state.plan, self.vdc, self.metadata,
                                  self.config.cost_model)
            state.simulator = farm.FarmSimulator(
                state.plan, self.vdc, self.metadata, self.replicas,
                self.config.cost_model, seed)
        state.pause_requested = False
        state.state = "running"
        if background:
            state.thread = threading.Thread(target=self._run_loop,
                                            args=(state,), daemon=True)
            state.thread.start()
        else:
            self._run_loop(state)
        return state

    def pause_plan(self, plan_id: int) -> PlanState:
        state = self.plans[plan_id]
        state.pause_requested = True
        if state.thread is not None:
            state.thread.join(timeout=30)
        return state

    # -- monitoring ----------------------------------------------------------

    def write_progress(self, snapshot: dict):
        path = self.data_dir / "progress.json"
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(snapshot, fh, sort_keys=True)
        os.replace(tmp, path)

    def progress(self) -> dict:
        for state in self.plans.values():
            if state.simulator is not None:
                return state.simulator.snapshot_progress()
        return self.empty_progress()

    def empty_progress(self) -> dict:
        datasets = []
        for dsid in sorted(self.metadata.datasets):
            a = self.metadata.datasets[dsid].attributes
            datasets.append({
                "dataset_id": dsid, "process": a.get("process"),
                "priority": a.get("priority"),
                "group_in_charge": a.get("group_in_charge"),
                "status": a.get("status"),
                "events_requested": a.get("events_requested", 0),
                "events_generated": a.get("events_generated", 0),
                "events_simulated": a.get("events_simulated", 0),
                "time_per_event_si95s": None,
            })
        return {"simulated_time": 0.0, "finished": False,
                "datasets": datasets, "sites": {}, "retries": 0,
                "expired_invocations": 0, "derivations_done": 0,
                "derivations_total": len(self.vdc.derivations)}

    # -- operator steering ---------------------------------------------------

    def set_dataset_priority(self, dataset_id: int, priority: str):
        """Update the dataset attribute and re-prioritize its pending
        derivations so the next pull honors the change."""
        self.metadata.update_attributes(dataset_id, {"priority": priority})
        rank = farm._PRIORITY_RANK.get(priority, 0)
        for d in self.vdc.derivations.values():
            if d.bindings.get("dataset_id") == dataset_id and d.status != "done":
                self.vdc.set_priority(d.derivation_id, rank)

    def retry_derivation(self, derivation_id: int):
        now = 0.0
        for state in self.plans.values():
            if state.simulator is not None:
                now = state.simulator.now
        self.vdc.force_retry(derivation_id, now)

    def store_validation(self, report: dict) -> int:
        with self._lock:
            vid = self._next_validation_id
            self._next_validation_id += 1
            self.validations[vid] = report
            return vid
