"""Shared domain types, the partition file container and deterministic RNG.

Everything downstream (generation, pile-up, farm accounting) speaks in the
types defined here. Times are nanoseconds, energies GeV, sizes MB and CPU
work SI95-seconds throughout.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Union

import numpy as np

# One bunch-crossing slot; all timing windows are multiples of this.
BUNCH_SPACING_NS = 25.0
# Symmetric pile-up window in bunch crossings around the trigger.
PILEUP_WINDOW = 30

# Calorimeter-style tower grid: 50 eta bins over |eta| < 5, 64 phi bins.
TOWER_ETA_BINS = 50
TOWER_PHI_BINS = 64
TOWER_ETA_MAX = 5.0

# 1 NCU = 1 Pentium III 500 MHz = 21 SpecInt95.
SI95_PER_NCU = 21.0


class PdgClass(str, Enum):
    ELECTRON = "electron"
    MUON = "muon"
    PHOTON = "photon"
    PION = "pion"
    NEUTRON = "neutron"
    PROTON = "proton"
    OTHER = "other"


class Process(str, Enum):
    SINGLE_PARTICLE = "single_particle"
    MINBIAS = "minbias"
    DIJET = "dijet"
    CAVERN = "cavern"
    PHYSICS_OTHER = "physics_other"


class Subdetector(str, Enum):
    SILICON = "silicon"
    TRT = "trt"
    LAR = "lar"
    TILE = "tile"
    MDT = "mdt"


def wrap_phi(phi: float) -> float:
    """Wrap an azimuth into [-pi, pi)."""
    return (phi + math.pi) % (2.0 * math.pi) - math.pi


def tower_index(eta: float, phi: float) -> tuple[int, int]:
    """Map (eta, phi) onto the tower grid; eta is clamped to the edge bins."""
    ieta = int((eta + TOWER_ETA_MAX) / (2.0 * TOWER_ETA_MAX) * TOWER_ETA_BINS)
    ieta = min(max(ieta, 0), TOWER_ETA_BINS - 1)
    iphi = int((wrap_phi(phi) + math.pi) / (2.0 * math.pi) * TOWER_PHI_BINS)
    iphi = iphi % TOWER_PHI_BINS
    return ieta, iphi


@dataclass(frozen=True)
class ParticleRecord:
    pdg_class: PdgClass
    pt: float
    eta: float
    phi: float
    e_kin: float
    t0: float = 0.0
    charge: int = 0

    def __post_init__(self):
        if self.pt < 0:
            raise ValueError("pt must be >= 0")
        if self.e_kin < 0:
            raise ValueError("e_kin must be >= 0")
        if self.t0 < 0:
            raise ValueError("t0 must be >= 0")
        if not (-math.pi <= self.phi < math.pi):
            object.__setattr__(self, "phi", wrap_phi(self.phi))


@dataclass(frozen=True)
class EventRecord:
    event_id: int
    process: Process
    particles: tuple[ParticleRecord, ...]
    seed: int
    truth_tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.process is not Process.CAVERN and not self.particles:
            raise ValueError("particles must be non-empty for non-cavern processes")


@dataclass(frozen=True)
class HitRecord:
    subdetector: Subdetector
    cell_eta: int
    cell_phi: int
    energy: float
    time: float  # ns relative to the trigger bunch crossing

    def __post_init__(self):
        if self.energy < 0:
            raise ValueError("hit energy must be >= 0")
        object.__setattr__(self, "cell_phi", self.cell_phi % TOWER_PHI_BINS)


@dataclass(frozen=True)
class DigitizedEvent:
    event_id: int
    hits: tuple[HitRecord, ...]
    provenance: tuple[int, ...]
    nominal_size_mb: float
    nominal_cpu_si95s: float


@dataclass(frozen=True)
class SubdetectorTiming:
    subdetector: Subdetector
    n_prev: int
    n_post: int
    collection_time: float  # ns

    def __post_init__(self):
        if not (0 <= self.n_prev <= PILEUP_WINDOW and 0 <= self.n_post <= PILEUP_WINDOW):
            raise ValueError("sensed crossings must lie within the pile-up window")


def drift_timing(subdetector: Subdetector, collection_time: float) -> SubdetectorTiming:
    """Timing for a drift-style detector: posterior sensitivity follows the
    signal collection time, clamped to the pile-up window."""
    n_post = min(PILEUP_WINDOW, int(collection_time // BUNCH_SPACING_NS))
    return SubdetectorTiming(subdetector, PILEUP_WINDOW, n_post, collection_time)


# Silicon integrates one crossing; LAr is shaped so only previous crossings
# contribute; TRT and MDT stay live for their full drift time.
DEFAULT_TIMINGS = (
    SubdetectorTiming(Subdetector.SILICON, 0, 0, 10.0),
    SubdetectorTiming(Subdetector.LAR, PILEUP_WINDOW, 0, 450.0),
    SubdetectorTiming(Subdetector.TILE, PILEUP_WINDOW, 0, 450.0),
    drift_timing(Subdetector.TRT, 50.0),
    drift_timing(Subdetector.MDT, 700.0),
)


@dataclass(frozen=True)
class LuminosityConfig:
    label: str  # "low" or "high"
    luminosity: float  # cm^-2 s^-1
    mu: float  # mean overlaid collisions per bunch crossing
    bunch_spacing: float = BUNCH_SPACING_NS
    window: int = PILEUP_WINDOW

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


LOW_LUMI = LuminosityConfig("low", 2e33, 4.6)
HIGH_LUMI = LuminosityConfig("high", 1e34, 23.0)


@dataclass(frozen=True)
class CostEntry:
    size_mb: float
    cpu_si95s: float

    def __post_init__(self):
        if self.size_mb <= 0 or self.cpu_si95s <= 0:
            raise ValueError("cost entries must be strictly positive")


@dataclass(frozen=True)
class CostModel:
    """Per-event output size and CPU work for every production stage."""

    single_particle: CostEntry = CostEntry(0.05, 300.0)
    minbias: CostEntry = CostEntry(1.00, 4000.0)
    dijet: CostEntry = CostEntry(2.40, 13000.0)
    pileup_low: CostEntry = CostEntry(3.6, 2000.0)
    pileup_high: CostEntry = CostEntry(7.5, 8000.0)
    reco_low: CostEntry = CostEntry(0.02, 3000.0)
    reco_high: CostEntry = CostEntry(0.03, 7600.0)
    cavern_step2: CostEntry = CostEntry(0.03, 6.0)
    premix_job: CostEntry = CostEntry(0.10, 0.2)

    def simulation(self, process: Process) -> CostEntry:
        try:
            return {
                Process.SINGLE_PARTICLE: self.single_particle,
                Process.MINBIAS: self.minbias,
                Process.DIJET: self.dijet,
            }[process]
        except KeyError:
            raise KeyError(f"no simulation cost for process {process.value}") from None

    def pileup(self, label: str) -> CostEntry:
        if label == "low":
            return self.pileup_low
        if label == "high":
            return self.pileup_high
        raise KeyError(f"unknown luminosity label {label!r}")

    def reco(self, label: str) -> CostEntry:
        if label == "low":
            return self.reco_low
        if label == "high":
            return self.reco_high
        raise KeyError(f"unknown luminosity label {label!r}")


DEFAULT_COST_MODEL = CostModel()


# ---------------------------------------------------------------------------
# Deterministic RNG

def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream_label).

    Identical arguments give identical streams on every platform; distinct
    labels give statistically independent streams, so each pipeline stage
    can derive its own stream from one campaign seed.
    """
    digest = hashlib.sha256(f"{seed}:{stream_label}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Record serialization (registry so higher stages can add record kinds)

def _particle_to_obj(p: ParticleRecord) -> list:
    return [p.pdg_class.value, p.pt, p.eta, p.phi, p.e_kin, p.t0, p.charge]


def _particle_from_obj(o: list) -> ParticleRecord:
    return ParticleRecord(PdgClass(o[0]), o[1], o[2], o[3], o[4], o[5], o[6])


def _hit_to_obj(h: HitRecord) -> list:
    return [h.subdetector.value, h.cell_eta, h.cell_phi, h.energy, h.time]


def _hit_from_obj(o: list) -> HitRecord:
    return HitRecord(Subdetector(o[0]), o[1], o[2], o[3], o[4])


def _event_to_obj(e: EventRecord) -> dict:
    return {
        "event_id": e.event_id,
        "process": e.process.value,
        "particles": [_particle_to_obj(p) for p in e.particles],
        "seed": e.seed,
        "truth_tags": list(map(list, e.truth_tags)),
    }


def _event_from_obj(d: dict) -> EventRecord:
    return EventRecord(
        event_id=d["event_id"],
        process=Process(d["process"]),
        particles=tuple(_particle_from_obj(p) for p in d["particles"]),
        seed=d["seed"],
        truth_tags=tuple((k, v) for k, v in d["truth_tags"]),
    )


def _digitized_to_obj(e: DigitizedEvent) -> dict:
    return {
        "event_id": e.event_id,
        "hits": [_hit_to_obj(h) for h in e.hits],
        "provenance": list(e.provenance),
        "nominal_size_mb": e.nominal_size_mb,
        "nominal_cpu_si95s": e.nominal_cpu_si95s,
    }


def _digitized_from_obj(d: dict) -> DigitizedEvent:
    return DigitizedEvent(
        event_id=d["event_id"],
        hits=tuple(_hit_from_obj(h) for h in d["hits"]),
        provenance=tuple(d["provenance"]),
        nominal_size_mb=d["nominal_size_mb"],
        nominal_cpu_si95s=d["nominal_cpu_si95s"],
    )


RECORD_KINDS: dict[str, tuple[type, Callable, Callable]] = {
    "event": (EventRecord, _event_to_obj, _event_from_obj),
    "digitized": (DigitizedEvent, _digitized_to_obj, _digitized_from_obj),
}


def register_record_kind(kind: str, cls: type, to_obj: Callable, from_obj: Callable):
    RECORD_KINDS[kind] = (cls, to_obj, from_obj)


def record_to_bytes(record) -> bytes:
    for kind, (cls, to_obj, _) in RECORD_KINDS.items():
        if type(record) is cls:
            return json.dumps({"kind": kind, "data": to_obj(record)},
                              separators=(",", ":")).encode()
    raise TypeError(f"unserializable record type {type(record).__name__}")


def record_from_bytes(raw: bytes):
    d = json.loads(raw)
    kind = d["kind"]
    if kind not in RECORD_KINDS:
        raise MalformedHeaderError(f"unknown record kind {kind!r}")
    return RECORD_KINDS[kind][2](d["data"])


# ---------------------------------------------------------------------------
# Partition file container

PARTITION_MAGIC = b"DC1P"
PARTITION_VERSION = 1


class PartitionError(Exception):
    """Base class for partition container failures."""


class MalformedHeaderError(PartitionError):
    pass


class TruncatedBodyError(PartitionError):
    pass


class VersionMismatchError(PartitionError):
    pass


@dataclass(frozen=True)
class PartitionHeader:
    dataset_id: int
    partition_number: int
    process: Process
    event_count: int
    params: tuple[tuple[str, str], ...] = ()
    format_version: int = PARTITION_VERSION


@dataclass(frozen=True)
class PartitionFile:
    header: PartitionHeader
    body: tuple

    def __post_init__(self):
        if self.header.event_count != len(self.body):
            raise ValueError("header event_count must equal body length")


def _header_text(h: PartitionHeader) -> str:
    fields = {
        "dataset_id": h.dataset_id,
        "event_count": h.event_count,
        "params": dict(h.params),
        "partition_number": h.partition_number,
        "process": h.process.value,
    }
    return "".join(f"{k}={json.dumps(fields[k], sort_keys=True)}\n"
                   for k in sorted(fields))


def _header_from_text(text: str, version: int) -> PartitionHeader:
    fields = {}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        if not _:
            raise MalformedHeaderError(f"bad header line {line!r}")
        fields[key] = json.loads(value)
    try:
        return PartitionHeader(
            dataset_id=fields["dataset_id"],
            partition_number=fields["partition_number"],
            process=Process(fields["process"]),
            event_count=fields["event_count"],
            params=tuple(sorted(fields["params"].items())),
            format_version=version,
        )
    except KeyError as exc:
        raise MalformedHeaderError(f"missing header field {exc}") from None


def write_partition(path, partition: PartitionFile) -> int:
    """Write a partition file; returns the byte count written."""
    header_bytes = _header_text(partition.header).encode()
    chunks = [PARTITION_MAGIC, struct.pack("<H", partition.header.format_version),
              struct.pack("<I", len(header_bytes)), header_bytes]
    for record in partition.body:
        payload = record_to_bytes(record)
        chunks.append(struct.pack("<I", len(payload)))
        chunks.append(payload)
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_partition(path) -> PartitionFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10 or blob[:4] != PARTITION_MAGIC:
        raise MalformedHeaderError("bad magic bytes")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != PARTITION_VERSION:
        raise VersionMismatchError(f"unsupported format version {version}")
    (header_len,) = struct.unpack_from("<I", blob, 6)
    offset = 10 + header_len
    if offset > len(blob):
        raise MalformedHeaderError("header extends past end of file")
    try:
        header = _header_from_text(blob[10:offset].decode(), version)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedHeaderError(str(exc)) from None
    body = []
    for _ in range(header.event_count):
        if offset + 4 > len(blob):
            raise TruncatedBodyError(f"expected {header.event_count} records, "
                                     f"got {len(body)}")
        (rec_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + rec_len > len(blob):
            raise TruncatedBodyError("record frame extends past end of file")
        body.append(record_from_bytes(blob[offset:offset + rec_len]))
        offset += rec_len
    return PartitionFile(header=header, body=tuple(body))
