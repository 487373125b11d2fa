"""Virtual-data catalog: transformations, derivations and pull-model leases.

Recipes are primary: a Transformation is a parameterized recipe, a
Derivation binds its parameters, and each execution attempt is an
Invocation held under a lease. Agents pull work instead of having it
pushed; a lease that outlives its timeout makes the derivation eligible
again, and only the first registered success for a derivation counts.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from dc1sim.journal import Journal, JournaledStateMachine

STAGES = ("generate", "simulate", "premix", "pileup", "reconstruct")
DEFAULT_TIMEOUT = 1000.0


class VdcError(Exception):
    pass


class UnknownTransformationError(VdcError):
    pass


class DuplicateTransformationError(VdcError):
    pass


class SchemaViolationError(VdcError):
    pass


class UnknownAgentError(VdcError):
    pass


class UnknownInvocationError(VdcError):
    pass


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str  # "int" | "float" | "str"
    required: bool = True


_PARAM_TYPES = {"int": int, "float": (int, float), "str": str}


@dataclass(frozen=True)
class Transformation:
    name: str
    version: str
    stage: str
    parameter_schema: tuple[ParamSpec, ...]
    default_timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        names = [p.name for p in self.parameter_schema]
        if len(names) != len(set(names)):
            raise SchemaViolationError("duplicate parameter names in schema")

    def check_bindings(self, bindings: dict):
        by_name = {p.name: p for p in self.parameter_schema}
        for key, value in bindings.items():
            spec = by_name.get(key)
            if spec is None:
                raise SchemaViolationError(f"unknown parameter {key!r}")
            if not isinstance(value, _PARAM_TYPES[spec.type]) or isinstance(value, bool):
                raise SchemaViolationError(
                    f"parameter {key!r} must be {spec.type}")
        for spec in self.parameter_schema:
            if spec.required and spec.name not in bindings:
                raise SchemaViolationError(f"missing required parameter {spec.name!r}")


@dataclass
class Derivation:
    derivation_id: int
    transformation_id: int
    bindings: dict
    declared_inputs: tuple[str, ...]
    declared_outputs: tuple[str, ...]
    status: str = "pending"  # pending | leased | done
    priority: int = 0
    timeout: float = DEFAULT_TIMEOUT
    retry_count: int = 0
    current_invocation: Optional[int] = None


@dataclass
class Invocation:
    invocation_id: int
    derivation_id: int
    agent_id: str
    lease_start: float
    timeout: float
    outcome: str = "running"  # running | succeeded | expired | superseded


class VirtualDataCatalog(JournaledStateMachine):
    """Single logical state machine; all mutations atomic and journaled.

    ``input_available`` gates eligibility on declared inputs (normally
    wired to the replica catalog); ``on_success`` receives the first
    accepted output set of each derivation.
    """

    def __init__(self, journal: Optional[Journal] = None,
                 input_available: Optional[Callable[[str], bool]] = None,
                 on_success: Optional[Callable] = None):
        self.transformations: dict[int, Transformation] = {}
        self.by_name_version: dict[tuple[str, str], int] = {}
        self.derivations: dict[int, Derivation] = {}
        self._active: dict[int, Derivation] = {}  # not-done, pull fast path
        self.invocations: dict[int, Invocation] = {}
        self.agents: set[str] = set()
        self.outputs: dict[int, list] = {}  # accepted outputs per derivation
        self._next_tid = 1
        self._next_did = 1
        self._next_iid = 1
        self._lock = threading.RLock()
        self.input_available = input_available or (lambda lfn: True)
        self.on_success = on_success
        super().__init__(journal)

    # -- public operations ---------------------------------------------------

    def register_agent(self, agent_id: str):
        with self._lock:
            if agent_id not in self.agents:
                self._commit("register_agent", {"agent_id": agent_id})

    def register_transformation(self, t: Transformation) -> int:
        with self._lock:
            if (t.name, t.version) in self.by_name_version:
                raise DuplicateTransformationError(f"{t.name} {t.version}")
            tid = self._next_tid
            self._commit("register_transformation", {
                "tid": tid, "name": t.name, "version": t.version,
                "stage": t.stage, "default_timeout": t.default_timeout,
                "schema": [[p.name, p.type, p.required]
                           for p in t.parameter_schema],
            })
            return tid

    def get_transformation(self, name: str, version: str) -> Transformation:
        key = (name, version)
        if key not in self.by_name_version:
            raise UnknownTransformationError(f"{name} {version}")
        return self.transformations[self.by_name_version[key]]

    def derive(self, transformation_id: int, bindings: dict,
               outputs: Sequence[str], inputs: Sequence[str] = (),
               priority: int = 0, timeout: Optional[float] = None) -> Derivation:
        with self._lock:
            t = self.transformations.get(transformation_id)
            if t is None:
                raise UnknownTransformationError(str(transformation_id))
            t.check_bindings(bindings)
            did = self._next_did
            self._commit("derive", {
                "did": did, "tid": transformation_id, "bindings": bindings,
                "inputs": list(inputs), "outputs": list(outputs),
                "priority": priority,
                "timeout": timeout if timeout is not None else t.default_timeout,
            })
            return self.derivations[did]

    def set_priority(self, derivation_id: int, priority: int):
        with self._lock:
            if derivation_id not in self.derivations:
                raise VdcError(f"unknown derivation {derivation_id}")
            self._commit("set_priority", {"did": derivation_id,
                                          "priority": priority})

    def _eligible(self, d: Derivation, now: float,
                  stage_filter: Optional[str]) -> bool:
        if d.status == "done":
            return False
        if stage_filter is not None:
            if self.transformations[d.transformation_id].stage != stage_filter:
                return False
        if d.status == "leased":
            inv = self.invocations[d.current_invocation]
            if now - inv.lease_start <= inv.timeout:
                return False
        return all(self.input_available(lfn) for lfn in d.declared_inputs)

    def pull_next(self, agent_id: str, now: float,
                  stage_filter: Optional[str] = None) -> Optional[Invocation]:
        """Atomically lease the highest-priority eligible derivation.

        Ties break on ascending derivation id. Returns None when nothing
        is eligible; a leased-but-expired derivation is eligible and its
        stale invocation is marked expired.
        """
        with self._lock:
            if agent_id not in self.agents:
                raise UnknownAgentError(agent_id)
            candidates = [d for d in self._active.values()
                          if self._eligible(d, now, stage_filter)]
            if not candidates:
                return None
            pick = min(candidates, key=lambda d: (-d.priority, d.derivation_id))
            iid = self._next_iid
            self._commit("lease", {
                "did": pick.derivation_id, "iid": iid, "agent_id": agent_id,
                "now": now,
            })
            return self.invocations[iid]

    def register_success(self, invocation_id: int, output_files: Sequence[dict],
                         now: float) -> bool:
        """First success for a derivation wins; later ones are discarded.

        ``output_files`` entries: {"lfn", "checksum", "size_mb",
        "event_count"}. Duplicate delivery of the winning invocation is
        idempotent and re-accepted without state change.
        """
        with self._lock:
            inv = self.invocations.get(invocation_id)
            if inv is None:
                raise UnknownInvocationError(str(invocation_id))
            d = self.derivations[inv.derivation_id]
            if d.status == "done":
                # idempotent only for the invocation that won
                return inv.outcome == "succeeded"
            accepted_outputs = [dict(f) for f in output_files]
            self._commit("success", {
                "iid": invocation_id, "now": now,
                "outputs": accepted_outputs,
            })
            if self.on_success is not None:
                self.on_success(d, accepted_outputs)
            return True

    def force_retry(self, derivation_id: int, now: float):
        """Operator action: drop the current lease so the derivation is
        immediately re-eligible. No-op when already pending."""
        with self._lock:
            d = self.derivations.get(derivation_id)
            if d is None:
                raise VdcError(f"unknown derivation {derivation_id}")
            if d.status == "done":
                raise VdcError(f"derivation {derivation_id} already done")
            if d.status == "leased":
                self._commit("expire", {"did": derivation_id, "now": now})

    def gc_sweep(self, now: float) -> list[int]:
        """Return every expired lease to pending; reports the derivation ids."""
        with self._lock:
            expired = [d.derivation_id for d in self._active.values()
                       if d.status == "leased"
                       and now - self.invocations[d.current_invocation].lease_start
                       > self.invocations[d.current_invocation].timeout]
            for did in expired:
                self._commit("expire", {"did": did, "now": now})
            return expired

    # -- queries -------------------------------------------------------------

    def pending_count(self) -> int:
        return len(self._active)

    def all_done(self) -> bool:
        return not self._active

    def blocked_derivations(self) -> list[int]:
        """Pending derivations whose declared inputs are not all available."""
        return [d.derivation_id for d in self._active.values()
                if d.status == "pending"
                and not all(self.input_available(lfn)
                            for lfn in d.declared_inputs)]

    # -- state machine core --------------------------------------------------

    def _apply(self, op: str, p: dict):
        if op == "register_agent":
            self.agents.add(p["agent_id"])
        elif op == "register_transformation":
            t = Transformation(p["name"], p["version"], p["stage"],
                               tuple(ParamSpec(n, ty, r)
                                     for n, ty, r in p["schema"]),
                               p["default_timeout"])
            self.transformations[p["tid"]] = t
            self.by_name_version[(t.name, t.version)] = p["tid"]
            self._next_tid = max(self._next_tid, p["tid"] + 1)
        elif op == "derive":
            d = Derivation(p["did"], p["tid"], dict(p["bindings"]),
                           tuple(p["inputs"]), tuple(p["outputs"]),
                           priority=p["priority"], timeout=p["timeout"])
            self.derivations[p["did"]] = d
            self._active[p["did"]] = d
            self._next_did = max(self._next_did, p["did"] + 1)
        elif op == "set_priority":
            self.derivations[p["did"]].priority = p["priority"]
        elif op == "lease":
            d = self.derivations[p["did"]]
            if d.current_invocation is not None:
                old = self.invocations[d.current_invocation]
                if old.outcome == "running":
                    old.outcome = "expired"
                    d.retry_count += 1
            inv = Invocation(p["iid"], p["did"], p["agent_id"], p["now"],
                             d.timeout)
            self.invocations[p["iid"]] = inv
            d.status = "leased"
            d.current_invocation = p["iid"]
            self._next_iid = max(self._next_iid, p["iid"] + 1)
        elif op == "success":
            inv = self.invocations[p["iid"]]
            d = self.derivations[inv.derivation_id]
            inv.outcome = "succeeded"
            if d.current_invocation is not None and d.current_invocation != p["iid"]:
                cur = self.invocations[d.current_invocation]
                if cur.outcome == "running":
                    cur.outcome = "superseded"
            d.status = "done"
            d.current_invocation = p["iid"]
            self._active.pop(d.derivation_id, None)
            self.outputs[d.derivation_id] = p["outputs"]
        elif op == "expire":
            d = self.derivations[p["did"]]
            inv = self.invocations[d.current_invocation]
            inv.outcome = "expired"
            d.retry_count += 1
            d.status = "pending"
            d.current_invocation = None
        else:
            raise VdcError(f"unknown journal op {op!r}")

    def _dump_snapshot(self) -> dict:
        return {
            "agents": sorted(self.agents),
            "transformations": [
                {"tid": tid, "name": t.name, "version": t.version,
                 "stage": t.stage, "default_timeout": t.default_timeout,
                 "schema": [[p.name, p.type, p.required]
                            for p in t.parameter_schema]}
                for tid, t in sorted(self.transformations.items())
            ],
            "derivations": [
                {"did": d.derivation_id, "tid": d.transformation_id,
                 "bindings": d.bindings, "inputs": list(d.declared_inputs),
                 "outputs": list(d.declared_outputs), "status": d.status,
                 "priority": d.priority, "timeout": d.timeout,
                 "retry_count": d.retry_count,
                 "current_invocation": d.current_invocation}
                for d in sorted(self.derivations.values(),
                                key=lambda d: d.derivation_id)
            ],
            "invocations": [
                {"iid": i.invocation_id, "did": i.derivation_id,
                 "agent_id": i.agent_id, "lease_start": i.lease_start,
                 "timeout": i.timeout, "outcome": i.outcome}
                for i in sorted(self.invocations.values(),
                                key=lambda i: i.invocation_id)
            ],
            "outputs": {str(k): v for k, v in self.outputs.items()},
        }

    def _load_snapshot(self, state: dict):
        self.agents = set(state["agents"])
        for rec in state["transformations"]:
            t = Transformation(rec["name"], rec["version"], rec["stage"],
                               tuple(ParamSpec(n, ty, r)
                                     for n, ty, r in rec["schema"]),
                               rec["default_timeout"])
            self.transformations[rec["tid"]] = t
            self.by_name_version[(t.name, t.version)] = rec["tid"]
            self._next_tid = max(self._next_tid, rec["tid"] + 1)
        for rec in state["derivations"]:
            d = Derivation(rec["did"], rec["tid"], dict(rec["bindings"]),
                           tuple(rec["inputs"]), tuple(rec["outputs"]),
                           status=rec["status"], priority=rec["priority"],
                           timeout=rec["timeout"],
                           retry_count=rec["retry_count"],
                           current_invocation=rec["current_invocation"])
            self.derivations[rec["did"]] = d
            if d.status != "done":
                self._active[rec["did"]] = d
            self._next_did = max(self._next_did, rec["did"] + 1)
        for rec in state["invocations"]:
            self.invocations[rec["iid"]] = Invocation(
                rec["iid"], rec["did"], rec["agent_id"], rec["lease_start"],
                rec["timeout"], rec["outcome"])
            self._next_iid = max(self._next_iid, rec["iid"] + 1)
        self.outputs = {int(k): v for k, v in state["outputs"].items()}
