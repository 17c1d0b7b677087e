import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saflosim import manager
from saflosim.core import (
    ControlMap,
    ControlMapEntry,
    DetectionLog,
    DetectionMap,
    DetectionRecord,
    SharedReport,
    SubflowKey,
    make_rng,
    seconds_to_ns,
)
from saflosim.manager import (
    ManagerConfig,
    SFs,
    apply_reports,
    cleanup_closed,
    decide_states,
    enable_probability,
    flush_dmap,
    snapshot,
    tick,
)

CELL_RID = 1


class ScriptedRng:
    """Stands in for a Generator: returns a fixed threshold sequence."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def fill(cmap, token, lingers, safe=(True, True)):
    """Token with subflows (0,0) wifi and (1,1) cellular at given lingers."""

    for i, linger in enumerate(lingers):
        cmap.update(SubflowKey(token, i, i),
                    ControlMapEntry(linger, int(linger * 1e6), 1e6, safe=safe[i]))


class TestSnapshot:
    def test_groups_and_sums(self):
        cmap = ControlMap()
        fill(cmap, 1, (0.2, 0.6))
        table = snapshot(cmap)
        assert set(table) == {1}
        sfs = table[1]
        assert sfs.sf_num == 2
        assert sfs.lt_sum == pytest.approx(0.8)
        assert sfs.local_ids == [0, 1]
        assert sfs.remote_ids == [0, 1]

    def test_empty_map(self):
        assert snapshot(ControlMap()) == {}

    def test_three_tokens_six_subflows(self):
        cmap = ControlMap()
        for token in (1, 2, 3):
            fill(cmap, token, (0.1, 0.2))
        table = snapshot(cmap)
        assert len(table) == 3
        assert sum(s.sf_num for s in table.values()) == 6


class TestApplyReports:
    def test_compromised_cellular_marked_unsafe(self):
        cmap = ControlMap()
        fill(cmap, 7, (0.1, 0.2))
        table = snapshot(cmap)
        apply_reports(SharedReport({7}), cmap, table, CELL_RID)
        assert cmap.lookup(SubflowKey(7, 1, 1)).safe is False
        assert cmap.lookup(SubflowKey(7, 0, 0)).safe is True

    def test_empty_report_no_change(self):
        cmap = ControlMap()
        fill(cmap, 7, (0.1, 0.2))
        apply_reports(SharedReport(), cmap, snapshot(cmap), CELL_RID)
        assert all(e.safe for _k, e in cmap.items())

    def test_closed_token_ignored(self):
        cmap = ControlMap()
        fill(cmap, 1, (0.1, 0.2))
        apply_reports(SharedReport({42}), cmap, snapshot(cmap), CELL_RID)
        assert all(e.safe for _k, e in cmap.items())


class TestEnableProbability:
    def test_weighted_values_within_bounds(self):
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        assert enable_probability(1.0, 4.0, cfg) == pytest.approx(0.75)
        assert enable_probability(3.0, 4.0, cfg) == pytest.approx(0.25)

    def test_single_subflow_clamps_to_p_min(self):
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        assert enable_probability(1.5, 1.5, cfg) == pytest.approx(0.2)

    def test_all_idle_gets_p_max(self):
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        assert enable_probability(0.0, 0.0, cfg) == pytest.approx(0.8)

    @given(
        st.floats(0.001, 100, allow_nan=False),
        st.floats(0.001, 100, allow_nan=False),
    )
    @settings(max_examples=100)
    def test_monotone_in_linger(self, a, b):
        cfg = ManagerConfig(p_min=0.0, p_max=1.0)
        lt_sum = a + b
        pa = enable_probability(a, lt_sum, cfg)
        pb = enable_probability(b, lt_sum, cfg)
        if a < b:
            assert pa > pb
        elif a == b:
            assert pa == pb

    @given(st.floats(0, 50, allow_nan=False), st.floats(0.001, 50, allow_nan=False))
    @settings(max_examples=100)
    def test_clamped_to_bounds(self, linger, extra):
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        p = enable_probability(linger, linger + extra, cfg)
        assert 0.2 <= p <= 0.8


class TestDecideStates:
    def test_thresholds_gate_enable(self):
        cmap = ControlMap()
        fill(cmap, 1, (1.0, 3.0))  # lt_sum 4 -> p = 0.75 and 0.25
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        decide_states(1, snapshot(cmap)[1], cmap, ScriptedRng([0.7, 0.3]), cfg)
        assert cmap.lookup(SubflowKey(1, 0, 0)).enabled is True  # 0.75 > 0.7
        assert cmap.lookup(SubflowKey(1, 1, 1)).enabled is False  # 0.25 < 0.3

    def test_unsafe_disabled_regardless_of_rng(self):
        cmap = ControlMap()
        fill(cmap, 1, (1.0, 1.0), safe=(True, False))
        decide_states(1, snapshot(cmap)[1], cmap, ScriptedRng([0.0]), ManagerConfig())
        assert cmap.lookup(SubflowKey(1, 1, 1)).enabled is False

    def test_binomial_concentration_at_p075(self):
        cmap = ControlMap()
        cfg = ManagerConfig(p_min=0.2, p_max=0.8)
        rng = make_rng(5, "manager")
        enabled = 0
        n = 10_000
        for _ in range(n):
            fill(cmap, 1, (1.0, 3.0))
            decide_states(1, snapshot(cmap)[1], cmap, rng, cfg)
            enabled += cmap.lookup(SubflowKey(1, 0, 0)).enabled
        assert abs(enabled / n - 0.75) <= 0.02

    def test_missing_entry_skipped(self):
        cmap = ControlMap()
        sfs = SFs(sf_num=1, local_ids=[0], remote_ids=[0], lt_sum=1.0)
        decide_states(1, sfs, cmap, ScriptedRng([0.5]), ManagerConfig())
        assert len(cmap) == 0


class TestCleanupFlush:
    def test_closed_token_entries_removed(self):
        cmap = ControlMap()
        fill(cmap, 1, (0.1, 0.2))
        fill(cmap, 2, (0.1, 0.2))
        assert cleanup_closed({2}, cmap) == 2
        assert len(cmap) == 2
        assert cmap.lookup(SubflowKey(2, 0, 0)) is not None

    def test_all_live_removes_none(self):
        cmap = ControlMap()
        fill(cmap, 1, (0.1, 0.2))
        assert cleanup_closed({1}, cmap) == 0

    def test_empty_map(self):
        assert cleanup_closed(set(), ControlMap()) == 0

    def test_flush_writes_sorted_lines_and_empties(self):
        dmap, log = DetectionMap(), DetectionLog()
        for t in (30, 10, 20, 50, 40):
            dmap.append(DetectionRecord(t, 3, 1448))
        assert flush_dmap(dmap, log) == 5
        assert len(dmap) == 0
        assert log.lines[0] == "10,3,1448"
        assert len(log.lines) == 5

    def test_second_flush_writes_zero(self):
        dmap, log = DetectionMap(), DetectionLog()
        dmap.append(DetectionRecord(10**9, 3, 1448))
        flush_dmap(dmap, log)
        assert flush_dmap(dmap, log) == 0
        assert log.lines == ["1000000000,3,1448"]

    def test_flush_preserves_multiset(self):
        dmap, log = DetectionMap(), DetectionLog()
        appended = []
        rng = make_rng(3, "flush")
        for _ in range(4):
            for _ in range(int(rng.integers(1, 20))):
                r = DetectionRecord(int(rng.integers(0, 100)), int(rng.integers(1, 4)),
                                    int(rng.integers(1, 5000)))
                dmap.append(r)
                appended.append(r)
            flush_dmap(dmap, log)
        assert sorted(log.records(), key=lambda r: (r.timestamp, r.token, r.burst)) == \
            sorted(appended, key=lambda r: (r.timestamp, r.token, r.burst))


class TestTick:
    def test_empty_system_noop(self):
        cfg = ManagerConfig()
        log = DetectionLog()
        nxt = tick(seconds_to_ns(2), ControlMap(), DetectionMap(), SharedReport(),
                   set(), make_rng(0, "m"), cfg, log)
        assert nxt == seconds_to_ns(4)
        assert log.lines == []

    def test_reported_token_disabled_within_one_tick(self):
        cmap = ControlMap()
        fill(cmap, 7, (0.1, 0.2))
        tick(0, cmap, DetectionMap(), SharedReport({7}), {7}, make_rng(0, "m"),
             ManagerConfig(), DetectionLog())
        cellular = cmap.lookup(SubflowKey(7, 1, 1))
        assert cellular.safe is False and cellular.enabled is False

    def test_deterministic_masks(self):
        def run():
            cmap = ControlMap()
            for token in (1, 2, 3):
                fill(cmap, token, (0.3, 0.5))
            tick(0, cmap, DetectionMap(), SharedReport(), {1, 2, 3},
                 make_rng(11, "m"), ManagerConfig(), DetectionLog())
            return [(k, e.enabled) for k, e in sorted(cmap.items(), key=lambda kv: kv[0])]

        assert run() == run()

    def test_safe_false_implies_disabled_after_tick(self):
        cmap = ControlMap()
        for token in range(1, 6):
            fill(cmap, token, (0.4, 0.4))
        tick(0, cmap, DetectionMap(), SharedReport({2, 4}), set(range(1, 6)),
             make_rng(1, "m"), ManagerConfig(), DetectionLog())
        for key, entry in cmap.items():
            if not entry.safe:
                assert not entry.enabled
            assert entry.safe == (not (key.token in (2, 4) and key.remote_id == CELL_RID))

    def test_every_entry_decided_each_tick(self):
        # A stale enabled=False from a previous tick is re-rolled when safe.
        cmap = ControlMap()
        fill(cmap, 1, (0.0, 0.0))
        for key, e in cmap.items():
            e.enabled = False
        rng = ScriptedRng([0.1, 0.1])  # p_max=0.8 > 0.1 both
        tick(0, cmap, DetectionMap(), SharedReport(), {1}, rng,
             ManagerConfig(), DetectionLog())
        assert all(e.enabled for _k, e in cmap.items())


def test_config_validation():
    with pytest.raises(ValueError):
        ManagerConfig(p_min=0.9, p_max=0.1)
    with pytest.raises(ValueError):
        ManagerConfig(interval=0)
