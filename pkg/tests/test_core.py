import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saflosim.core import (
    ControlMap,
    ControlMapEntry,
    DetectionLog,
    DetectionMap,
    DetectionRecord,
    LogParseError,
    MapFullError,
    SubflowKey,
    TokenAllocator,
    format_log_line,
    make_rng,
    parse_log_line,
)


def key(token=1, local=0, remote=0):
    return SubflowKey(token, local, remote)


def entry(linger=0.5, wmem=1000, pace=2000.0, enabled=True, safe=True):
    return ControlMapEntry(linger, wmem, pace, enabled, safe)


class TestControlMap:
    def test_lookup_never_inserted_is_absent(self):
        assert ControlMap().lookup(key()) is None

    def test_insert_lookup_round_trip(self):
        cmap = ControlMap()
        e = entry()
        cmap.update(key(), e)
        assert cmap.lookup(key()) is e

    def test_last_write_wins(self):
        cmap = ControlMap()
        cmap.update(key(), entry(linger=1.0))
        e2 = entry(linger=2.0)
        cmap.update(key(), e2)
        assert cmap.lookup(key()).linger_time == 2.0

    def test_update_absent_key_creates(self):
        cmap = ControlMap()
        cmap.update(key(token=9), entry())
        assert key(token=9) in cmap

    def test_disabled_flag_persists(self):
        cmap = ControlMap()
        cmap.update(key(), entry(enabled=False))
        assert cmap.lookup(key()).enabled is False

    def test_one_connection_two_subflows_two_entries(self):
        cmap = ControlMap()
        cmap.update(key(token=1, local=0, remote=0), entry())
        cmap.update(key(token=1, local=1, remote=1), entry())
        assert len(cmap) == 2

    def test_capacity_exceeded_raises(self):
        cmap = ControlMap(capacity=2)
        cmap.update(key(token=1), entry())
        cmap.update(key(token=2), entry())
        with pytest.raises(MapFullError):
            cmap.update(key(token=3), entry())
        cmap.update(key(token=1), entry(linger=9.0))  # overwrite still allowed

    @given(
        st.lists(
            st.tuples(st.integers(0, 5), st.floats(0, 10, allow_nan=False)),
            max_size=40,
        )
    )
    def test_behaves_like_exact_dict(self, ops):
        cmap = ControlMap()
        model = {}
        for token, linger in ops:
            k = key(token=token)
            e = entry(linger=linger)
            cmap.update(k, e)
            model[k] = e
            for mk, mv in model.items():
                assert cmap.lookup(mk) is mv


class TestDetectionMap:
    def test_empty_drain(self):
        assert DetectionMap().drain() == []

    def test_drain_returns_all_then_empty(self):
        dmap = DetectionMap()
        records = [DetectionRecord(10, 1, 100), DetectionRecord(20, 2, 200),
                   DetectionRecord(30, 1, 300)]
        for r in records:
            dmap.append(r)
        assert dmap.drain() == records
        assert dmap.drain() == []

    def test_drain_sorted_by_timestamp(self):
        dmap = DetectionMap()
        for t in (5, 1, 3):
            dmap.append(DetectionRecord(t, 1, 10))
        assert [r.timestamp for r in dmap.drain()] == [1, 3, 5]

    def test_identical_timestamp_token_kept_distinct(self):
        dmap = DetectionMap()
        dmap.append(DetectionRecord(7, 3, 100))
        dmap.append(DetectionRecord(7, 3, 200))
        assert [r.burst for r in dmap.drain()] == [100, 200]

    def test_nonpositive_burst_rejected(self):
        with pytest.raises(ValueError):
            DetectionMap().append(DetectionRecord(0, 1, 0))

    @given(st.lists(st.tuples(st.integers(0, 100), st.integers(1, 5),
                              st.integers(1, 10_000)), max_size=50))
    @settings(max_examples=50)
    def test_double_drain_always_empty(self, triples):
        dmap = DetectionMap()
        for t, token, burst in triples:
            dmap.append(DetectionRecord(t, token, burst))
        first = dmap.drain()
        assert sorted(first, key=lambda r: (r.timestamp, r.token)) == first
        assert dmap.drain() == []


class TestDetectionLog:
    def test_line_format_contract(self):
        assert format_log_line(DetectionRecord(10**9, 3, 1448)) == "1000000000,3,1448"

    def test_round_trip(self):
        r = DetectionRecord(123456789, 42, 64 * 1024)
        assert parse_log_line(format_log_line(r)) == r

    def test_malformed_line_names_lineno(self):
        with pytest.raises(LogParseError) as exc:
            parse_log_line("not,a line", lineno=17)
        assert exc.value.lineno == 17

    @pytest.mark.parametrize("line", ["", "1,2", "1,2,3,4", "a,b,c", "1,2,0", "1,2,-5"])
    def test_bad_lines_rejected(self, line):
        with pytest.raises(LogParseError):
            parse_log_line(line)

    def test_file_sink_matches_memory(self, tmp_path):
        path = tmp_path / "detect.log"
        log = DetectionLog(str(path))
        log.append(DetectionRecord(1, 2, 3))
        log.append(DetectionRecord(4, 5, 6))
        log.close()
        assert path.read_text() == "1,2,3\n4,5,6\n"
        assert log.lines == ["1,2,3", "4,5,6"]


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(7, "netsim").random(8)
        b = make_rng(7, "netsim").random(8)
        assert (a == b).all()

    def test_scopes_differ(self):
        a = make_rng(7, "netsim").random(8)
        b = make_rng(7, "manager").random(8)
        assert (a != b).any()

    def test_seed_matters(self):
        assert (make_rng(1, "x").random(8) != make_rng(2, "x").random(8)).any()


def test_token_allocator_sequential_from_one():
    alloc = TokenAllocator()
    assert [alloc.allocate() for _ in range(3)] == [1, 2, 3]
