import json

import pytest

from controltower.errors import StoreCorrupt
from controltower.store import WalStore


def test_append_replay_roundtrip(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a.put", {"x": 1})
        store.append("b.put", {"y": [1, 2]})
    with WalStore(path) as store:
        assert list(store.replay()) == [("a.put", {"x": 1}), ("b.put", {"y": [1, 2]})]


def test_empty_store(tmp_path):
    with WalStore(tmp_path / "wal.log") as store:
        assert list(store.replay()) == []


def test_torn_tail_is_truncated(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a", {"n": 1})
        store.append("b", {"n": 2})
    # simulate a crash mid-write: chop the last line in half
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 9])
    with WalStore(path) as store:
        assert list(store.replay()) == [("a", {"n": 1})]
    # and the file was repaired: reopening again is clean
    with WalStore(path) as store:
        assert len(list(store.replay())) == 1


def test_append_after_torn_tail(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a", {"n": 1})
        store.append("b", {"n": 2})
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with WalStore(path) as store:
        store.append("c", {"n": 3})
    with WalStore(path) as store:
        assert [op for op, _ in store.replay()] == ["a", "c"]


def test_checksum_mismatch_refuses_to_start(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a", {"n": 1})
        store.append("b", {"n": 2})
    lines = path.read_text().splitlines()
    doc = json.loads(lines[0])
    doc["data"]["n"] = 999  # tamper without updating the crc
    lines[0] = json.dumps(doc, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(StoreCorrupt) as excinfo:
        WalStore(path)
    assert str(path) in str(excinfo.value)


def test_garbage_middle_line_is_corrupt(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a", {"n": 1})
        store.append("b", {"n": 2})
    lines = path.read_text().splitlines()
    lines[0] = "not json at all"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(StoreCorrupt):
        WalStore(path)


def test_sequence_regression_is_corrupt(tmp_path):
    path = tmp_path / "wal.log"
    with WalStore(path) as store:
        store.append("a", {"n": 1})
    # duplicate the first line verbatim: same seq twice
    line = path.read_text()
    path.write_text(line + line)
    with pytest.raises(StoreCorrupt):
        WalStore(path)


def test_checksum_stable_across_reads(tmp_path):
    with WalStore(tmp_path / "wal.log") as store:
        store.append("a", {"n": 1})
        before = store.checksum()
        list(store.replay())
        assert store.checksum() == before
        store.append("b", {"n": 2})
        assert store.checksum() != before
