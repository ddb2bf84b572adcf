import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supreme.errors import DegenerateSplitError, FormatError, IrreparableLeadError, TruncatedError
from supreme.signal_io import (
    DatasetManifest,
    EcgRecord,
    ManifestEntry,
    SplitSpec,
    load_manifest,
    load_record,
    repair_nonfinite,
    save_manifest,
    save_record,
    split_dataset,
)


def _lead(values):
    return EcgRecord("r", 500, np.array([values], dtype=np.float32))


def brute_repair(lead):
    """Independent oracle: sort all finite samples by (distance, index) and average the first 6."""
    lead = list(lead)
    good = [i for i, v in enumerate(lead) if math.isfinite(v)]
    out = list(lead)
    for i, v in enumerate(lead):
        if not math.isfinite(v):
            chosen = sorted(good, key=lambda j: (abs(j - i), j))[:6]
            out[i] = sum(float(lead[j]) for j in chosen) / 6
    return np.array(out, dtype=np.float32)


class TestRecordFiles:
    def test_twelve_lead_record(self, tmp_path):
        rec = EcgRecord("a", 500, np.random.default_rng(0).standard_normal((12, 5000)))
        save_record(rec, tmp_path / "a.speg")
        back = load_record(tmp_path / "a.speg")
        assert back.data.size == 60000
        assert (back.leads, back.samples, back.sampling_rate) == (12, 5000, 500)

    def test_minimal_record(self, tmp_path):
        save_record(EcgRecord("m", 1, [[0.0]]), tmp_path / "m.speg")
        np.testing.assert_array_equal(load_record(tmp_path / "m.speg").data, [[0.0]])

    def test_byte_identical_round_trip(self, tmp_path):
        rec = EcgRecord("b", 250, np.random.default_rng(1).standard_normal((3, 17)))
        save_record(rec, tmp_path / "b.speg")
        raw = (tmp_path / "b.speg").read_bytes()
        save_record(load_record(tmp_path / "b.speg"), tmp_path / "c.speg")
        assert (tmp_path / "c.speg").read_bytes() == raw

    def test_header_layout(self, tmp_path):
        save_record(EcgRecord("h", 500, np.zeros((2, 3))), tmp_path / "h.speg")
        raw = (tmp_path / "h.speg").read_bytes()
        assert raw[:4] == b"SPEG"
        assert struct.unpack("<BHII", raw[4:15]) == (1, 2, 3, 500)
        assert len(raw) == 15 + 2 * 3 * 4

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.speg").write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError):
            load_record(tmp_path / "x.speg")

    def test_bad_version(self, tmp_path):
        save_record(EcgRecord("v", 500, np.zeros((1, 2))), tmp_path / "v.speg")
        raw = bytearray((tmp_path / "v.speg").read_bytes())
        raw[4] = 9
        (tmp_path / "v.speg").write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_record(tmp_path / "v.speg")

    def test_truncated_payload(self, tmp_path):
        save_record(EcgRecord("t", 500, np.zeros((2, 10))), tmp_path / "t.speg")
        raw = (tmp_path / "t.speg").read_bytes()
        (tmp_path / "t.speg").write_bytes(raw[:-3])
        with pytest.raises(TruncatedError):
            load_record(tmp_path / "t.speg")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 30), st.integers(0, 2**31))
    def test_round_trip_bitwise(self, tmp_path_factory, leads, samples, seed):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((leads, samples)).astype(np.float32)
        data[rng.random(data.shape) < 0.1] = np.nan
        path = tmp_path_factory.mktemp("rt") / "r.speg"
        save_record(EcgRecord("r", 500, data), path)
        assert load_record(path).data.tobytes() == data.tobytes()


class TestRepair:
    def test_centered(self):
        out = repair_nonfinite(_lead([1, 2, 3, np.nan, 5, 6, 7]))
        assert out.data[0, 3] == np.float32(4.0)

    def test_left_boundary(self):
        out = repair_nonfinite(_lead([np.nan, 1, 2, 3, 4, 5, 6, 7]))
        assert out.data[0, 0] == np.float32(3.5)

    def test_run_of_two(self):
        lead = [1, 2, 3, np.nan, np.inf, 6, 7, 8]
        out = repair_nonfinite(_lead(lead)).data[0]
        # index 3 uses {2,1,5,0,6,7}; index 4 uses {5,2,6,1,7,0}; both average to 27/6
        assert out[3] == np.float32(27 / 6)
        assert out[4] == np.float32(27 / 6)
        np.testing.assert_array_equal(out, brute_repair(lead))

    def test_finite_input_unchanged(self):
        rec = _lead([1, 2, 3, 4, 5, 6, 7, 8])
        np.testing.assert_array_equal(repair_nonfinite(rec).data, rec.data)

    def test_too_few_finite(self):
        with pytest.raises(IrreparableLeadError):
            repair_nonfinite(_lead([1, 2, 3, 4, 5, np.nan, np.nan]))

    def test_leads_independent(self):
        data = np.array([[1, 2, 3, np.nan, 5, 6, 7], [10, 20, 30, 40, 50, 60, 70]], dtype=np.float32)
        out = repair_nonfinite(EcgRecord("r", 1, data)).data
        assert out[0, 3] == 4.0
        np.testing.assert_array_equal(out[1], data[1])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(6, 60), st.floats(0.0, 0.5), st.integers(0, 2**31))
    def test_matches_oracle_and_is_local_and_idempotent(self, n, frac, seed):
        rng = np.random.default_rng(seed)
        lead = rng.standard_normal(n).astype(np.float32)
        bad = rng.random(n) < frac
        bad[rng.permutation(n)[:6]] = False  # keep at least 6 finite samples
        lead[bad] = rng.choice([np.nan, np.inf, -np.inf], size=int(bad.sum()))
        out = repair_nonfinite(_lead(lead)).data[0]
        np.testing.assert_array_equal(out, brute_repair(lead))
        assert np.all(np.isfinite(out))
        assert out[~bad].tobytes() == lead[~bad].tobytes()
        again = repair_nonfinite(_lead(out)).data[0]
        assert again.tobytes() == out.tobytes()


def _manifest(n):
    return DatasetManifest([ManifestEntry(f"r{i}", f"r{i}.speg", (i % 3,)) for i in range(n)])


class TestSplit:
    @pytest.mark.parametrize("n,expected", [(100, (70, 10, 20)), (10, (7, 1, 2))])
    def test_sizes(self, n, expected):
        parts = split_dataset(_manifest(n), SplitSpec((0.7, 0.1, 0.2), seed=3))
        assert tuple(len(p) for p in parts) == expected

    def test_deterministic(self):
        a = split_dataset(_manifest(50), SplitSpec(seed=7))
        b = split_dataset(_manifest(50), SplitSpec(seed=7))
        assert [p.entries for p in a] == [p.entries for p in b]

    def test_seed_matters(self):
        a = split_dataset(_manifest(50), SplitSpec(seed=1))
        b = split_dataset(_manifest(50), SplitSpec(seed=2))
        assert a[0].entries != b[0].entries

    def test_degenerate(self):
        with pytest.raises(DegenerateSplitError):
            split_dataset(_manifest(2), SplitSpec((0.7, 0.1, 0.2)))
        with pytest.raises(DegenerateSplitError):
            split_dataset(DatasetManifest([]), SplitSpec())

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            SplitSpec((0.5, 0.5, 0.5))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 1000), st.integers(0, 2**31))
    def test_partition(self, n, seed):
        m = _manifest(n)
        try:
            parts = split_dataset(m, SplitSpec((0.6, 0.2, 0.2), seed))
        except DegenerateSplitError:
            assert n < 8
            return
        ids = [e.record_id for p in parts for e in p.entries]
        assert len(ids) == len(set(ids)) == n
        assert set(ids) == {e.record_id for e in m.entries}


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = _manifest(5)
        save_manifest(m, tmp_path / "m.jsonl")
        assert load_manifest(tmp_path / "m.jsonl").entries == m.entries

    def test_duplicate_ids(self):
        with pytest.raises(FormatError):
            DatasetManifest([ManifestEntry("a", "x", ()), ManifestEntry("a", "y", ())])

    def test_label_bounds(self):
        m = _manifest(4)
        m.validate_labels(3)
        with pytest.raises(FormatError):
            m.validate_labels(2)
        assert m.label_matrix(3).sum() == 4
