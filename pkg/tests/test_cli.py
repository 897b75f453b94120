import json
from pathlib import Path

import numpy as np
import pytest

from fracbnn import cli, modelfile
from fracbnn.images import synthetic_images, write_ppm_file

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def model_path(resnet_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "model.fbm"
    modelfile.save_file(resnet_model, path)
    return str(path)


@pytest.fixture(scope="module")
def image_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "image.ppm"
    write_ppm_file(synthetic_images(31, 1)[0], path)
    return str(path)


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEncode:
    def test_black_pixel(self, capsys, tmp_path):
        ppm = tmp_path / "black.ppm"
        write_ppm_file(np.zeros((1, 1, 3), dtype=np.uint8), ppm)
        out = tmp_path / "black.fbtn"
        code, _, _ = run_cli(capsys, "encode", "--image", str(ppm), "--out", str(out))
        assert code == 0
        data = out.read_bytes()
        assert data[:4] == b"FBTN"
        assert data[16:] == b"\x00" * 16  # 96 channels of -1 at one position

    def test_golden_fixture(self, capsys, tmp_path):
        out = tmp_path / "fix.fbtn"
        code, _, _ = run_cli(capsys, "encode", "--image",
                             str(DATA / "fixture_2x2.ppm"), "--out", str(out))
        assert code == 0
        assert out.read_bytes() == (DATA / "fixture_2x2.fbtn").read_bytes()

    def test_rejects_wrong_maxval(self, capsys, tmp_path):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
        code, _, err = run_cli(capsys, "encode", "--image", str(bad),
                               "--out", str(tmp_path / "x.fbtn"))
        assert code == 2
        assert "maxval" in err

    def test_missing_file_is_io_error(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "encode", "--image", str(tmp_path / "nope.ppm"),
                             "--out", str(tmp_path / "x.fbtn"))
        assert code == 1

    def test_truncated_ppm_reports_offset(self, capsys, tmp_path):
        bad = tmp_path / "trunc.ppm"
        bad.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00")
        code, _, err = run_cli(capsys, "encode", "--image", str(bad),
                               "--out", str(tmp_path / "x.fbtn"))
        assert code == 2
        assert "offset" in err


class TestInfer:
    def test_json_deterministic_across_runs_and_threads(self, capsys, model_path,
                                                        image_path):
        outputs = set()
        for _ in range(5):
            for threads in ("1", "4"):
                code, out, _ = run_cli(capsys, "infer", "--model", model_path,
                                       "--image", image_path, "--json",
                                       "--threads", threads)
                assert code == 0
                outputs.add(out)
        assert len(outputs) == 1

    def test_json_schema(self, capsys, model_path, image_path):
        _, out, _ = run_cli(capsys, "infer", "--model", model_path,
                            "--image", image_path, "--json")
        payload = json.loads(out)
        assert payload["schema"] == "fracbnn.infer/1"
        assert len(payload["logits"]) == 10
        assert payload["stats"]["schema"] == "fracbnn.run_stats/1"
        assert 1.0 <= payload["stats"]["effective_bitwidth"] <= 2.0

    def test_matches_oracle_argmax(self, capsys, resnet_model, model_path, image_path):
        from fracbnn import oracle
        from fracbnn.images import read_ppm_file
        _, out, _ = run_cli(capsys, "infer", "--model", model_path,
                            "--image", image_path, "--json")
        payload = json.loads(out)
        want = oracle.forward(resnet_model, read_ppm_file(image_path))
        assert payload["class"] == int(np.argmax(want))
        assert payload["logits"] == [int(v) for v in want]

    def test_corrupt_model_is_format_error(self, capsys, model_path, image_path,
                                           tmp_path):
        data = bytearray(Path(model_path).read_bytes())
        data[100] ^= 0xFF
        bad = tmp_path / "bad.fbm"
        bad.write_bytes(bytes(data))
        code, _, _ = run_cli(capsys, "infer", "--model", str(bad),
                             "--image", image_path)
        assert code == 2

    def test_wrong_image_size_is_shape_error(self, capsys, model_path, tmp_path):
        small = tmp_path / "small.ppm"
        write_ppm_file(np.zeros((8, 8, 3), dtype=np.uint8), small)
        code, _, _ = run_cli(capsys, "infer", "--model", model_path,
                             "--image", str(small))
        assert code == 3


class TestVerify:
    def test_small_run_passes(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--cases", "10", "--seed", "1")
        assert code == 0
        assert "PASS" in out

    def test_zero_cases_warns(self, capsys):
        code, out, _ = run_cli(capsys, "verify", "--cases", "0")
        assert code == 0
        assert "warning" in out

    def test_injected_fault_detected(self, capsys, monkeypatch):
        from fracbnn import kernels, verify as verify_mod

        real = kernels.binary_conv2d

        def broken(x, w, stride=1, pad=0, threads=1):
            out = real(x, w, stride=stride, pad=pad, threads=threads)
            out.values[0] += 2  # preserve parity, break values
            return out

        monkeypatch.setattr(kernels, "binary_conv2d", broken)
        report = verify_mod.check_binary_conv2d(seed=0, cases=5)
        assert not report.ok


class TestStats:
    def test_default_topology(self, capsys):
        code, out, _ = run_cli(capsys, "stats", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["params_binary"] == 281088
        assert payload["bmacs_base"] == 40108032
        assert payload["bmacs_input"] == 14155776
        assert payload["total_bmacs_at_sparsity"]["1.0"] == 54263808

    def test_from_model_file(self, capsys, model_path):
        code, out, _ = run_cli(capsys, "stats", "--model", model_path, "--json")
        assert code == 0
        assert json.loads(out)["params_binary"] == 281088


class TestBench:
    def test_single_iteration_complete_report(self, capsys, model_path):
        code, out, _ = run_cli(capsys, "bench", "--model", model_path,
                               "--iters", "1", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["schema"] == "fracbnn.bench/1"
        names = [lane["name"] for lane in payload["lanes"]]
        assert "oracle" in names
        assert any(n.startswith("engine[") for n in names)
        assert payload["speedup_vs_oracle"] > 0
        for lane in payload["lanes"]:
            assert lane["seconds_per_image"] > 0
            assert len(lane["layers"]) == 21

    def test_json_schema_stable_fields(self, capsys, model_path):
        _, out1, _ = run_cli(capsys, "bench", "--model", model_path,
                             "--iters", "1", "--json")
        _, out2, _ = run_cli(capsys, "bench", "--model", model_path,
                             "--iters", "1", "--json")
        keys1 = sorted(json.loads(out1).keys())
        keys2 = sorted(json.loads(out2).keys())
        assert keys1 == keys2
