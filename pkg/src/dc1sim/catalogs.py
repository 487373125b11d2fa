"""Metadata and replica catalogs.

The metadata catalog maps dataset attributes to logical files (so a file's
contents can be understood and searched without opening it); the replica
catalog maps logical files to physical locations at registered sites and
models replication at a configured bandwidth. Each catalog keeps its own
journal for independent auditing.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from dc1sim.journal import Journal, JournaledStateMachine


class CatalogError(Exception):
    pass


class SchemaViolationError(CatalogError):
    pass


class UnknownDatasetError(CatalogError):
    pass


class UnknownFileError(CatalogError):
    pass


class UnknownSiteError(CatalogError):
    pass


class DuplicateReplicaError(CatalogError):
    pass


class ReplicaExistsError(CatalogError):
    pass


class MissingSourceError(CatalogError):
    pass


# Ordered vocabularies for attributes that support range predicates.
PRIORITY_ORDER = ("low", "medium", "high", "very_high")


@dataclass(frozen=True)
class AttributeSpec:
    key: str
    type: str  # "int" | "float" | "str" | "ordered"
    ordering: tuple[str, ...] = ()


# Mirrors the fields of a production monitoring page; extensible via the
# campaign config.
DEFAULT_SCHEMA = (
    AttributeSpec("process", "str"),
    AttributeSpec("lumi", "str"),
    AttributeSpec("safety_factor", "int"),
    AttributeSpec("priority", "ordered", PRIORITY_ORDER),
    AttributeSpec("group_in_charge", "str"),
    AttributeSpec("status", "str"),
    AttributeSpec("events_requested", "int"),
    AttributeSpec("events_generated", "int"),
    AttributeSpec("events_simulated", "int"),
    AttributeSpec("time_per_event_si95s", "float"),
)


@dataclass(frozen=True)
class LogicalFile:
    lfn: str
    size_mb: float
    checksum: str
    event_count: int
    producing_derivation: Optional[int] = None


@dataclass(frozen=True)
class Replica:
    lfn: str
    site: str
    pfn: str
    store: str = "disk"  # disk | tape-sim


@dataclass
class DatasetDescriptor:
    dataset_id: int
    attributes: dict
    logical_files: list = field(default_factory=list)


class MetadataCatalog(JournaledStateMachine):
    """Attribute-indexed dataset bookkeeping (search without opening files)."""

    def __init__(self, journal: Optional[Journal] = None,
                 schema: Sequence[AttributeSpec] = DEFAULT_SCHEMA):
        self.schema = {s.key: s for s in schema}
        self.datasets: dict[int, DatasetDescriptor] = {}
        self.files: dict[str, LogicalFile] = {}
        self.file_dataset: dict[str, int] = {}
        self._next_id = 1
        self._lock = threading.RLock()
        super().__init__(journal)

    def _check_attributes(self, attributes: dict):
        for key, value in attributes.items():
            spec = self.schema.get(key)
            if spec is None:
                raise SchemaViolationError(f"attribute {key!r} not in schema")
            if spec.type == "int" and not isinstance(value, int):
                raise SchemaViolationError(f"{key} must be int")
            if spec.type == "float" and not isinstance(value, (int, float)):
                raise SchemaViolationError(f"{key} must be numeric")
            if spec.type == "ordered" and value not in spec.ordering:
                raise SchemaViolationError(
                    f"{key} must be one of {spec.ordering}")

    def register_dataset(self, attributes: dict) -> int:
        with self._lock:
            self._check_attributes(attributes)
            dsid = self._next_id
            self._commit("register_dataset",
                         {"dsid": dsid, "attributes": attributes})
            return dsid

    def update_attributes(self, dataset_id: int, attributes: dict):
        with self._lock:
            if dataset_id not in self.datasets:
                raise UnknownDatasetError(str(dataset_id))
            self._check_attributes(attributes)
            self._commit("update_attributes",
                         {"dsid": dataset_id, "attributes": attributes})

    def attach_file(self, dataset_id: int, lf: LogicalFile):
        with self._lock:
            if dataset_id not in self.datasets:
                raise UnknownDatasetError(str(dataset_id))
            if lf.lfn in self.files:
                raise CatalogError(f"lfn {lf.lfn!r} already registered")
            self._commit("attach_file", {
                "dsid": dataset_id, "lfn": lf.lfn, "size_mb": lf.size_mb,
                "checksum": lf.checksum, "event_count": lf.event_count,
                "producing_derivation": lf.producing_derivation,
            })

    def get_dataset(self, dataset_id: int) -> DatasetDescriptor:
        if dataset_id not in self.datasets:
            raise UnknownDatasetError(str(dataset_id))
        return self.datasets[dataset_id]

    def _term_matches(self, attributes: dict, key: str, op: str, value) -> bool:
        spec = self.schema.get(key)
        if spec is None:
            raise SchemaViolationError(f"attribute {key!r} not in schema")
        if key not in attributes:
            return False
        actual = attributes[key]
        if spec.type == "ordered":
            actual = spec.ordering.index(actual)
            value = spec.ordering.index(value)
        if op == "=":
            return actual == value
        if op == "!=":
            return actual != value
        if op == "<":
            return actual < value
        if op == ">":
            return actual > value
        raise CatalogError(f"unknown predicate operator {op!r}")

    def query_files(self, predicate: Sequence[tuple]) -> list[str]:
        """lfns of every dataset matching all (key, op, value) terms, in
        (dataset_id, attach-order) order."""
        out = []
        for dsid in sorted(self.datasets):
            ds = self.datasets[dsid]
            if all(self._term_matches(ds.attributes, k, op, v)
                   for k, op, v in predicate):
                out.extend(ds.logical_files)
        return out

    def describe_file(self, lfn: str,
                      derivation_bindings: Optional[Callable] = None) -> dict:
        """Dataset attributes merged with the producing derivation's
        parameter bindings; never touches the partition file itself."""
        if lfn not in self.files:
            raise UnknownFileError(lfn)
        lf = self.files[lfn]
        ds = self.datasets[self.file_dataset[lfn]]
        out = dict(ds.attributes)
        out.update({"lfn": lfn, "dataset_id": ds.dataset_id,
                    "size_mb": lf.size_mb, "event_count": lf.event_count,
                    "checksum": lf.checksum,
                    "producing_derivation": lf.producing_derivation})
        if derivation_bindings is not None and lf.producing_derivation is not None:
            out.update(derivation_bindings(lf.producing_derivation))
        return out

    def _apply(self, op: str, p: dict):
        if op == "register_dataset":
            self.datasets[p["dsid"]] = DatasetDescriptor(
                p["dsid"], dict(p["attributes"]))
            self._next_id = max(self._next_id, p["dsid"] + 1)
        elif op == "update_attributes":
            self.datasets[p["dsid"]].attributes.update(p["attributes"])
        elif op == "attach_file":
            lf = LogicalFile(p["lfn"], p["size_mb"], p["checksum"],
                             p["event_count"], p["producing_derivation"])
            self.files[lf.lfn] = lf
            self.file_dataset[lf.lfn] = p["dsid"]
            self.datasets[p["dsid"]].logical_files.append(lf.lfn)
        else:
            raise CatalogError(f"unknown journal op {op!r}")

    def _dump_snapshot(self) -> dict:
        return {
            "datasets": [
                {"dsid": ds.dataset_id, "attributes": ds.attributes,
                 "files": ds.logical_files}
                for ds in sorted(self.datasets.values(),
                                 key=lambda d: d.dataset_id)
            ],
            "file_records": [
                {"lfn": lf.lfn, "size_mb": lf.size_mb,
                 "checksum": lf.checksum, "event_count": lf.event_count,
                 "producing_derivation": lf.producing_derivation}
                for lfn, lf in sorted(self.files.items())
            ],
        }

    def _load_snapshot(self, state: dict):
        for rec in state["datasets"]:
            ds = DatasetDescriptor(rec["dsid"], dict(rec["attributes"]),
                                   list(rec["files"]))
            self.datasets[ds.dataset_id] = ds
            self._next_id = max(self._next_id, ds.dataset_id + 1)
            for lfn in ds.logical_files:
                self.file_dataset[lfn] = ds.dataset_id
        for rec in state["file_records"]:
            self.files[rec["lfn"]] = LogicalFile(
                rec["lfn"], rec["size_mb"], rec["checksum"],
                rec["event_count"], rec["producing_derivation"])


def make_pfn(site: str, store: str, lfn: str) -> str:
    return f"{site}://{store}/{lfn}"


class ReplicaCatalog(JournaledStateMachine):
    """Logical-to-physical mapping across sites, with modeled transfers."""

    def __init__(self, journal: Optional[Journal] = None,
                 metadata: Optional[MetadataCatalog] = None):
        self.sites: set[str] = set()
        self.replicas: dict[str, list[Replica]] = {}
        self.metadata = metadata
        self._lock = threading.RLock()
        super().__init__(journal)

    def register_site(self, site: str):
        with self._lock:
            if site not in self.sites:
                self._commit("register_site", {"site": site})

    def _known_lfn(self, lfn: str) -> bool:
        if self.metadata is not None:
            return lfn in self.metadata.files
        return True

    def has_file(self, lfn: str) -> bool:
        return bool(self.replicas.get(lfn))

    def register_replica(self, lfn: str, site: str, store: str = "disk") -> str:
        with self._lock:
            if site not in self.sites:
                raise UnknownSiteError(site)
            if not self._known_lfn(lfn):
                raise UnknownFileError(lfn)
            for r in self.replicas.get(lfn, ()):
                if r.site == site and r.store == store:
                    raise DuplicateReplicaError(f"{lfn} at {site}/{store}")
            self._commit("register_replica",
                         {"lfn": lfn, "site": site, "store": store})
            return make_pfn(site, store, lfn)

    def locate(self, lfn: str) -> list[Replica]:
        if not self._known_lfn(lfn):
            raise UnknownFileError(lfn)
        return list(self.replicas.get(lfn, ()))

    def replicate(self, lfn: str, from_site: str, to_site: str,
                  bandwidth_mb_s: float) -> tuple[Replica, float]:
        """Copy a replica between sites; returns (new replica, transfer
        seconds = size / bandwidth)."""
        with self._lock:
            if to_site not in self.sites:
                raise UnknownSiteError(to_site)
            existing = self.replicas.get(lfn, ())
            if not any(r.site == from_site for r in existing):
                raise MissingSourceError(f"{lfn} not at {from_site}")
            if any(r.site == to_site for r in existing):
                raise ReplicaExistsError(f"{lfn} already at {to_site}")
            if self.metadata is not None:
                size = self.metadata.files[lfn].size_mb
            else:
                size = 0.0
            self._commit("register_replica",
                         {"lfn": lfn, "site": to_site, "store": "disk"})
            replica = self.replicas[lfn][-1]
            return replica, size / bandwidth_mb_s

    def _apply(self, op: str, p: dict):
        if op == "register_site":
            self.sites.add(p["site"])
        elif op == "register_replica":
            r = Replica(p["lfn"], p["site"],
                        make_pfn(p["site"], p["store"], p["lfn"]), p["store"])
            self.replicas.setdefault(p["lfn"], []).append(r)
        else:
            raise CatalogError(f"unknown journal op {op!r}")

    def _dump_snapshot(self) -> dict:
        return {
            "sites": sorted(self.sites),
            "replicas": [
                {"lfn": r.lfn, "site": r.site, "store": r.store}
                for lfn in sorted(self.replicas)
                for r in self.replicas[lfn]
            ],
        }

    def _load_snapshot(self, state: dict):
        self.sites = set(state["sites"])
        for rec in state["replicas"]:
            r = Replica(rec["lfn"], rec["site"],
                        make_pfn(rec["site"], rec["store"], rec["lfn"]),
                        rec["store"])
            self.replicas.setdefault(rec["lfn"], []).append(r)


def audit(metadata: MetadataCatalog, replicas: ReplicaCatalog,
          vdc=None) -> list[str]:
    """Full-state referential integrity check; returns violation messages."""
    problems = []
    for lfn in replicas.replicas:
        if lfn not in metadata.files:
            problems.append(f"replica for unregistered lfn {lfn}")
    for lfn, lf in metadata.files.items():
        if vdc is not None and lf.producing_derivation is not None:
            if lf.producing_derivation not in vdc.derivations:
                problems.append(
                    f"{lfn}: unknown producing derivation {lf.producing_derivation}")
    return problems
