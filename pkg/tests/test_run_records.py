import json
import math
import os
import tempfile
import unittest

import numpy as np

from src.engine.bound_result import INFEASIBLE, LOWER_SDP, UPPER_HEURISTIC, BoundResult
from src.engine.run_records import TOOL_VERSION, RunRecord, RunRecordStore


class TestRunRecordStore(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "records", "runs.json")
        self.store = RunRecordStore(self.path)

    def tearDown(self):
        self.tmp.cleanup()

    def record(self, command="lower", value=0.25, status="optimal"):
        result = BoundResult(value, LOWER_SDP if command == "lower" else UPPER_HEURISTIC, status, m=8, k=1,
                             metadata={"history": np.array([0.3, 0.25]), "dual_value": np.float64(0.2499)})
        return RunRecord("abc123", command, {"m": 8, "p": np.float64(0.3)}, result)

    def test_append_and_reload(self):
        self.assertEqual(self.store.load_all(), [])
        self.assertTrue(self.store.append(self.record()))
        self.assertTrue(self.store.append(self.record("upper", 0.3)))
        records = self.store.load_all()
        self.assertEqual(len(records), 2)
        self.assertEqual(records[0].result.value, 0.25)
        self.assertEqual(records[0].result.metadata["history"], [0.3, 0.25])
        self.assertEqual(records[0].parameters["p"], 0.3)
        self.assertEqual(records[1].tool_version, TOOL_VERSION)
        self.assertEqual(len(self.store.find("abc123")), 2)
        self.assertEqual(self.store.find("other"), [])

    def test_stats(self):
        self.store.append(self.record())
        self.store.append(self.record(value=math.nan, status=INFEASIBLE))
        self.store.append(self.record("upper"))
        stats = self.store.get_stats()
        self.assertEqual(stats["record_count"], 3)
        self.assertEqual(stats["by_command"], {"lower": 2, "upper": 1})
        self.assertEqual(stats["failed_count"], 1)

    def test_corrupt_file_is_treated_as_empty(self):
        os.makedirs(os.path.dirname(self.path))
        with open(self.path, "w") as f:
            f.write("{not json")
        with self.assertLogs("src.engine.run_records", level="WARNING"):
            self.assertEqual(self.store.load_all(), [])

    def test_append_keeps_unreadable_history(self):
        os.makedirs(os.path.dirname(self.path))
        truncated = '[{"input_hash": "old", "command": "lower", "result": {"value": 0.1'
        with open(self.path, "w") as f:
            f.write(truncated)
        with self.assertLogs("src.engine.run_records", level="ERROR"):
            self.assertTrue(self.store.append(self.record()))

        self.assertEqual([r.input_hash for r in self.store.load_all()], ["abc123"])
        directory = os.path.dirname(self.path)
        moved = [name for name in os.listdir(directory) if name.startswith("runs.json.corrupt-")]
        self.assertEqual(len(moved), 1)
        with open(os.path.join(directory, moved[0])) as f:
            self.assertEqual(f.read(), truncated)
        self.assertFalse(os.path.exists(self.path + ".tmp"))

    def test_non_list_file_is_not_overwritten(self):
        os.makedirs(os.path.dirname(self.path))
        with open(self.path, "w") as f:
            json.dump({"input_hash": "old"}, f)
        with self.assertLogs("src.engine.run_records", level="ERROR"):
            self.store.append(self.record())
        moved = [n for n in os.listdir(os.path.dirname(self.path)) if ".corrupt-" in n]
        self.assertEqual(len(moved), 1)
        self.assertEqual(len(self.store.load_all()), 1)

    def test_dump_single_record(self):
        out = os.path.join(self.tmp.name, "out", "bound.json")
        self.record().dump(out)
        with open(out) as f:
            data = json.load(f)
        self.assertEqual(data["command"], "lower")
        self.assertEqual(data["result"]["clamped"], 0.25)
        self.assertEqual(RunRecord.from_dict(data).result.kind, LOWER_SDP)


if __name__ == '__main__':
    unittest.main()
