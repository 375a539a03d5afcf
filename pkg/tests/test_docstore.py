import json
import struct
import threading
import zlib

import numpy as np
import pytest

from presencia.docstore import (
    CorruptInterior,
    DocStore,
    DuplicateId,
    NotFound,
    SchemaViolation,
    TypeMismatch,
    UnknownCollection,
    canonical_json,
    compact_and_recover,
)


def person(pid="s001", name="Ada", count=0, status="enrolling"):
    return {"person_id": pid, "name": name, "sample_count": count, "status": status}


def model_doc(**kw):
    return dict(kw)


class TestBasicOps:
    def test_insert_get_roundtrip(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person())
        assert store.get("persons", "s001") == person()

    def test_get_missing_is_none(self, tmp_path):
        assert DocStore(tmp_path).get("persons", "nope") is None

    def test_duplicate_insert_rejected(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person())
        with pytest.raises(DuplicateId):
            store.insert("persons", "s001", person())

    def test_update_replaces_body(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person())
        store.update("persons", "s001", person(count=3, status="ready"))
        assert store.get("persons", "s001")["sample_count"] == 3

    def test_update_missing_raises(self, tmp_path):
        with pytest.raises(NotFound):
            DocStore(tmp_path).update("persons", "s001", person())

    def test_schema_missing_field(self, tmp_path):
        store = DocStore(tmp_path)
        bad = {"session_id": "x", "person_id": "y"}
        with pytest.raises(SchemaViolation):
            store.insert("attendance", "x:y", bad)

    def test_schema_wrong_type(self, tmp_path):
        with pytest.raises(SchemaViolation):
            DocStore(tmp_path).insert("persons", "s1", person(count="three"))

    def test_unknown_collection(self, tmp_path):
        with pytest.raises(UnknownCollection):
            DocStore(tmp_path).insert("widgets", "a", {})

    def test_returned_docs_are_copies(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person())
        doc = store.get("persons", "s001")
        doc["sample_count"] = 999
        assert store.get("persons", "s001")["sample_count"] == 0


class TestIncrement:
    def seeded(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert(
            "attendance",
            "sess:s001",
            {
                "session_id": "sess",
                "person_id": "s001",
                "name": "Ada",
                "count": 0,
                "first_seen": "2026-01-01T00:00:00Z",
                "last_seen": "2026-01-01T00:00:00Z",
            },
        )
        return store

    def test_increment_existing(self, tmp_path):
        store = self.seeded(tmp_path)
        assert store.increment("attendance", "sess:s001", "count", 1) == 1
        assert store.increment("attendance", "sess:s001", "count", 1) == 2

    def test_absent_field_counts_from_zero(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("models", "current", model_doc(note="x"))
        assert store.increment("models", "current", "train_runs", 1) == 1

    def test_missing_document(self, tmp_path):
        with pytest.raises(NotFound):
            DocStore(tmp_path).increment("models", "nope", "n", 1)

    def test_type_mismatch(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("models", "current", model_doc(tau="0.5"))
        with pytest.raises(TypeMismatch):
            store.increment("models", "current", "tau", 1)

    def test_concurrent_increments_lose_nothing(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("models", "current", model_doc())
        threads = [
            threading.Thread(
                target=lambda: [store.increment("models", "current", "n", 1) for _ in range(10)]
            )
            for _ in range(20)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert store.get("models", "current")["n"] == 200


class TestQuery:
    def test_predicate_filters(self, tmp_path):
        store = DocStore(tmp_path)
        for sid, pid in [("a", "p1"), ("a", "p2"), ("b", "p1")]:
            store.insert(
                "attendance",
                f"{sid}:{pid}",
                {
                    "session_id": sid,
                    "person_id": pid,
                    "name": pid,
                    "count": 1,
                    "first_seen": "2026-01-01T00:00:00Z",
                    "last_seen": "2026-01-01T00:00:00Z",
                },
            )
        rows = store.query("attendance", {"session_id": "a"})
        assert [doc["person_id"] for _, doc in rows] == ["p1", "p2"]

    def test_empty_predicate_returns_all_sorted(self, tmp_path):
        store = DocStore(tmp_path)
        for pid in ("s3", "s1", "s2"):
            store.insert("persons", pid, person(pid=pid))
        assert [i for i, _ in store.query("persons")] == ["s1", "s2", "s3"]

    def test_no_matches(self, tmp_path):
        assert DocStore(tmp_path).query("persons", {"name": "nobody"}) == []


class TestRecovery:
    def test_fresh_directory_empty(self, tmp_path):
        store = compact_and_recover(tmp_path / "db")
        assert store.query("persons") == []

    def test_reopen_preserves_acknowledged_writes(self, tmp_path):
        store = DocStore(tmp_path)
        for i in range(20):
            store.insert("persons", f"s{i:03d}", person(pid=f"s{i:03d}", count=i))
        store.close()
        again = DocStore(tmp_path)
        assert len(again.query("persons")) == 20
        assert again.get("persons", "s007")["sample_count"] == 7

    def test_roundtrip_random_documents(self, tmp_path):
        rng = np.random.default_rng(0)
        store = DocStore(tmp_path)
        docs = {}
        for i in range(300):
            body = {
                "nested": {"a": int(rng.integers(0, 100)), "b": [1, 2, {"c": "x"}]},
                "f": float(np.round(rng.uniform(-5, 5), 6)),
                "flag": bool(rng.integers(0, 2)),
                "text": f"doc-{i}-éß",
            }
            store.insert("models", f"m{i:04d}", body)
            docs[f"m{i:04d}"] = body
        store.close()
        again = DocStore(tmp_path)
        for doc_id, body in docs.items():
            assert again.get("models", doc_id) == body

    def test_truncated_tail_dropped(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person(pid="s001"))
        store.insert("persons", "s002", person(pid="s002"))
        store.close()
        log = tmp_path / "persons.log"
        data = log.read_bytes()
        log.write_bytes(data[:-3])  # cut into the final record's checksum
        again = DocStore(tmp_path)
        assert again.get("persons", "s001") is not None
        assert again.get("persons", "s002") is None

    def test_every_truncation_point_of_final_record(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person(pid="s001"))
        store.close()
        base = (tmp_path / "persons.log").read_bytes()
        extra = canonical_json({"id": "s002", "body": person(pid="s002")})
        frame = struct.pack("<I", len(extra)) + extra + struct.pack("<I", zlib.crc32(extra))
        for cut in range(len(base), len(base) + len(frame)):
            sub = tmp_path / f"case{cut}"
            sub.mkdir()
            (sub / "persons.log").write_bytes((base + frame)[:cut])
            again = DocStore(sub)
            assert again.get("persons", "s001") is not None, cut
            assert again.get("persons", "s002") is None, cut
        whole = tmp_path / "whole"
        whole.mkdir()
        (whole / "persons.log").write_bytes(base + frame)
        assert DocStore(whole).get("persons", "s002") is not None

    def test_interior_corruption_raises(self, tmp_path):
        store = DocStore(tmp_path)
        store.insert("persons", "s001", person(pid="s001"))
        store.insert("persons", "s002", person(pid="s002"))
        store.close()
        log = tmp_path / "persons.log"
        data = bytearray(log.read_bytes())
        data[6] ^= 0xFF  # flip a payload byte inside the first record
        log.write_bytes(bytes(data))
        with pytest.raises(CorruptInterior):
            DocStore(tmp_path)

    def test_compaction_truncates_log(self, tmp_path):
        store = DocStore(tmp_path)
        for i in range(10):
            store.insert("persons", f"s{i}", person(pid=f"s{i}"))
        store.close()
        assert (tmp_path / "persons.log").stat().st_size > 0
        again = DocStore(tmp_path)
        again.close()
        assert (tmp_path / "persons.log").stat().st_size == 0
        assert (tmp_path / "persons.snapshot").stat().st_size > 0

    def test_canonical_json_sorted_and_stable(self):
        a = canonical_json({"b": 1, "a": {"z": 2.5, "y": [1, 2]}})
        b = canonical_json({"a": {"y": [1, 2], "z": 2.5}, "b": 1})
        assert a == b == b'{"a":{"y":[1,2],"z":2.5},"b":1}'
