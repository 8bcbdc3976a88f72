import json
import os

import numpy as np
import pytest

from pgq.cli import main
from pgq.formats import TensorFile, read_quantized, read_tensor, write_tensor


@pytest.fixture
def workspace(tmp_path, rng):
    tensors = {
        "enc.fc1": ("linear", rng.standard_normal((16, 8)).astype(np.float32)),
        "tok.emb": ("embedding", rng.standard_normal((8, 12)).astype(np.float32)),
    }
    layers = []
    for name, (kind, data) in tensors.items():
        path = tmp_path / f"{name}.pgw"
        write_tensor(str(path), TensorFile(name=name, kind=kind, data=data))
        layers.append({"file": f"{name}.pgw", "block_size": 4,
                       "num_centroids": 8, "seed": 1})
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"schema": 1, "layers": layers}))
    return tmp_path, tensors, manifest


class TestQuantizeCommand:
    def test_two_layer_manifest_produces_files_and_report(self, workspace):
        tmp, tensors, manifest = workspace
        out = tmp / "out"
        code = main(["quantize", str(manifest), "-o", str(out), "--method", "pg"])
        assert code == 0
        produced = sorted(p.name for p in out.glob("*.pgq"))
        assert produced == ["enc.fc1.pgq", "tok.emb.pgq"]
        report = json.loads((out / "report.json").read_text())
        assert report["schema"] == 1
        assert len(report["layers"]) == 2
        agg = report["aggregate"]
        assert "linear" in agg["per_kind"] and "embedding" in agg["per_kind"]
        assert agg["total_compression_ratio"] > 1

    def test_indivisible_block_size_exits_2(self, workspace):
        tmp, _, _ = workspace
        bad = tmp / "bad.json"
        bad.write_text(json.dumps({"schema": 1, "layers": [
            {"file": "enc.fc1.pgw", "block_size": 3, "num_centroids": 4}]}))
        code = main(["quantize", str(bad), "-o", str(tmp / "out2")])
        assert code == 2

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main(["quantize", str(tmp_path / "none.json"),
                     "-o", str(tmp_path / "o")]) == 2

    def test_pg_full_vs_pg_reports_differ_only_in_dense_fields(self, workspace):
        tmp, _, manifest = workspace
        out_a, out_b = tmp / "a", tmp / "b"
        assert main(["quantize", str(manifest), "-o", str(out_a),
                     "--method", "pg", "--seed", "3"]) == 0
        assert main(["quantize", str(manifest), "-o", str(out_b),
                     "--method", "pg_full", "--seed", "3"]) == 0
        ra = json.loads((out_a / "report.json").read_text())
        rb = json.loads((out_b / "report.json").read_text())
        for la, lb in zip(ra["layers"], rb["layers"]):
            assert la["method"] == "pg" and lb["method"] == "pg_full"
            assert la["consolidated_weights"] is None
            assert lb["consolidated_weights"] is not None

    def test_csv_report_option(self, workspace):
        tmp, _, manifest = workspace
        out = tmp / "csvout"
        assert main(["quantize", str(manifest), "-o", str(out),
                     "--report", "csv"]) == 0
        header = (out / "report.csv").read_text().splitlines()[0]
        assert header.startswith("layer,kind,rows,cols")


class TestDequantizeCommand:
    def test_round_trip(self, workspace):
        tmp, tensors, manifest = workspace
        out = tmp / "out"
        assert main(["quantize", str(manifest), "-o", str(out)]) == 0
        qpath = out / "enc.fc1.pgq"
        rpath = tmp / "recon.pgw"
        assert main(["dequantize", str(qpath), "-o", str(rpath)]) == 0
        recon = read_tensor(str(rpath))
        orig = tensors["enc.fc1"][1]
        assert recon.data.shape == orig.shape
        doc = read_quantized(str(qpath))
        mse = float(((orig.astype(np.float64) - recon.data) ** 2).mean())
        assert mse == pytest.approx(doc["report"]["mse"], rel=1e-6)

    def test_corrupt_file_exits_2(self, tmp_path):
        path = tmp_path / "junk.pgq"
        path.write_bytes(b"JUNKJUNKJUNK")
        assert main(["dequantize", str(path), "-o", str(tmp_path / "o.pgw")]) == 2


class TestBenchCommand:
    def _config(self, tmp_path):
        cfg = tmp_path / "suite.json"
        cfg.write_text(json.dumps({
            "methods": ["baseline", "pg"],
            "rows": [{"family": "uniform", "n": 200, "b": 2, "k": 8,
                      "seeds": [0, 1]}],
        }))
        return cfg

    def test_custom_suite_writes_csv_and_json(self, tmp_path):
        cfg = self._config(tmp_path)
        out = tmp_path / "bench"
        assert main(["bench", str(cfg), "-o", str(out)]) == 0
        csv_text = (out / "bench.csv").read_text()
        assert csv_text.splitlines()[0].startswith("schema,family")
        assert len(csv_text.splitlines()) == 3
        doc = json.loads((out / "bench.json").read_text())
        assert doc["schema"] == 1

    def test_fixed_seed_identical_csv_bytes(self, tmp_path):
        cfg = self._config(tmp_path)
        out1, out2 = tmp_path / "b1", tmp_path / "b2"
        assert main(["bench", str(cfg), "-o", str(out1)]) == 0
        assert main(["bench", str(cfg), "-o", str(out2)]) == 0
        assert (out1 / "bench.csv").read_bytes() == (out2 / "bench.csv").read_bytes()

    def test_requires_config_or_default(self, tmp_path):
        assert main(["bench", "-o", str(tmp_path / "x")]) == 2

    def test_partial_failure_exits_1(self, tmp_path):
        cfg = tmp_path / "suite.json"
        cfg.write_text(json.dumps({
            "methods": ["pg"],
            "rows": [
                {"family": "uniform", "n": 100, "b": 2, "k": 4, "seeds": [0]},
                {"family": "uniform", "n": 100, "b": 2, "k": 4, "seeds": [1],
                 "params": {"low": 5, "high": 1}},
            ],
        }))
        assert main(["bench", str(cfg), "-o", str(tmp_path / "bench")]) == 1


class TestInspectCommand:
    def test_inspect_tensor_and_quantized(self, workspace, capsys):
        tmp, _, manifest = workspace
        assert main(["inspect", str(tmp / "enc.fc1.pgw")]) == 0
        assert json.loads(capsys.readouterr().out)["format"] == "PGW1"
        out = tmp / "out"
        assert main(["quantize", str(manifest), "-o", str(out)]) == 0
        capsys.readouterr()
        assert main(["inspect", str(out / "enc.fc1.pgq")]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["format"] == "PGQ1"
        assert doc["report"]["method"] == "pg"

    def test_unknown_magic_exits_2(self, tmp_path):
        path = tmp_path / "mystery.bin"
        path.write_bytes(b"ABCD1234")
        assert main(["inspect", str(path)]) == 2
