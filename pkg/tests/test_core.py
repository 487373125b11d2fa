import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from dc1sim import core
from dc1sim.core import (EventRecord, HitRecord, ParticleRecord,
                         PartitionFile, PartitionHeader, PdgClass, Process,
                         Subdetector, read_partition, seeded_rng,
                         write_partition)


class TestSeededRng:
    def test_same_seed_same_label_identical(self):
        a = seeded_rng(42, "gen").random(1000)
        b = seeded_rng(42, "gen").random(1000)
        assert (a == b).all()

    def test_different_labels_differ(self):
        a = seeded_rng(42, "gen").random(1000)
        b = seeded_rng(42, "pileup").random(1000)
        assert not (a == b).all()

    def test_different_seeds_differ(self):
        a = seeded_rng(42, "gen").random(1000)
        b = seeded_rng(43, "gen").random(1000)
        assert not (a == b).all()


class TestDomainTypes:
    def test_phi_wrapped_into_range(self):
        p = ParticleRecord(PdgClass.PION, 1.0, 0.0, 4.0, 1.0)
        assert -math.pi <= p.phi < math.pi

    def test_negative_pt_rejected(self):
        with pytest.raises(ValueError):
            ParticleRecord(PdgClass.PION, -1.0, 0.0, 0.0, 1.0)

    def test_non_cavern_event_needs_particles(self):
        with pytest.raises(ValueError):
            EventRecord(1, Process.MINBIAS, (), 0)
        # cavern pseudo-events may be empty
        EventRecord(1, Process.CAVERN, (), 0)

    def test_hit_phi_wraps_modulo_tower_count(self):
        h = HitRecord(Subdetector.LAR, 3, core.TOWER_PHI_BINS + 5, 1.0, 0.0)
        assert h.cell_phi == 5

    def test_mdt_timing_follows_collection_time(self):
        t = core.drift_timing(Subdetector.MDT, 700.0)
        assert t.n_post == math.floor(700.0 / core.BUNCH_SPACING_NS) == 28

    def test_trt_timing(self):
        t = core.drift_timing(Subdetector.TRT, 50.0)
        assert t.n_post == 2

    def test_collection_time_clamped_to_window(self):
        t = core.drift_timing(Subdetector.MDT, 10000.0)
        assert t.n_post == core.PILEUP_WINDOW

    def test_cost_model_entries_positive(self):
        cm = core.DEFAULT_COST_MODEL
        for name in cm.__dataclass_fields__:
            entry = getattr(cm, name)
            assert entry.size_mb > 0 and entry.cpu_si95s > 0

    def test_tower_grid_shape(self):
        assert core.TOWER_ETA_BINS == 50
        assert core.TOWER_PHI_BINS == 64
        ieta, iphi = core.tower_index(0.0, -math.pi)
        assert 0 <= ieta < 50 and 0 <= iphi < 64


def _event(event_id=0, n=3, seed=0):
    rng = seeded_rng(seed, "test-events")
    particles = tuple(
        ParticleRecord(PdgClass.PION, float(rng.exponential(1.0)),
                       float(rng.uniform(-5, 5)),
                       float(rng.uniform(-math.pi, math.pi)),
                       float(rng.exponential(1.0)),
                       float(rng.uniform(0, 25)), 1)
        for _ in range(n))
    return EventRecord(event_id, Process.MINBIAS, particles, seed)


class TestPartitionFile:
    def test_empty_body_roundtrip(self, tmp_path):
        p = PartitionFile(PartitionHeader(1, 0, Process.CAVERN, 0), ())
        path = tmp_path / "empty.dc1p"
        assert write_partition(path, p) > 0
        assert read_partition(path) == p

    def test_hundred_event_roundtrip(self, tmp_path):
        body = tuple(_event(i, seed=i) for i in range(100))
        p = PartitionFile(
            PartitionHeader(7, 3, Process.MINBIAS, 100,
                            params=(("seed", "9"),)), body)
        path = tmp_path / "mb.dc1p"
        n = write_partition(path, p)
        assert n > 0
        assert read_partition(path) == p

    def test_header_body_mismatch_rejected(self):
        with pytest.raises(ValueError):
            PartitionFile(PartitionHeader(1, 0, Process.MINBIAS, 2),
                          (_event(),))

    def test_truncated_body(self, tmp_path):
        body = tuple(_event(i, seed=i) for i in range(5))
        p = PartitionFile(PartitionHeader(1, 0, Process.MINBIAS, 5), body)
        path = tmp_path / "t.dc1p"
        write_partition(path, p)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 40])
        with pytest.raises(core.TruncatedBodyError):
            read_partition(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dc1p"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(core.MalformedHeaderError):
            read_partition(path)

    def test_version_mismatch(self, tmp_path):
        p = PartitionFile(PartitionHeader(1, 0, Process.CAVERN, 0), ())
        path = tmp_path / "v.dc1p"
        write_partition(path, p)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(core.VersionMismatchError):
            read_partition(path)

    @settings(max_examples=30, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(specs=st.lists(st.tuples(st.integers(0, 2 ** 40),
                                    st.integers(1, 8),
                                    st.integers(0, 2 ** 30)), max_size=12))
    def test_roundtrip_property(self, specs, tmp_path):
        body = tuple(_event(eid, n, seed) for eid, n, seed in specs)
        p = PartitionFile(
            PartitionHeader(2, 1, Process.MINBIAS, len(body)), body)
        path = tmp_path / "prop.dc1p"
        write_partition(path, p)
        assert read_partition(path) == p
