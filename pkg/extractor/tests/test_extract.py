import json
import math

import numpy as np
import pytest

import importlib

from featext import ExtractionError, ExtractionSpec, available_detectors, extract

extract_module = importlib.import_module("featext.extract")


class TestExtract:
    def test_sift_available(self):
        assert "sift" in available_detectors()

    def test_writes_valid_interchange_file(self, sample_images, tmp_path):
        out = tmp_path / "features.jsonl"
        count = extract(ExtractionSpec(image=sample_images[0], out=out))
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["type"] == "feature_set"
        assert header["count"] == count == len(lines) - 1
        for line in lines[1:]:
            rec = json.loads(line)
            assert rec["scale"] > 0
            assert -math.pi <= rec["orientation"] < math.pi
            assert 0 <= rec["x"] < header["width"]
            assert 0 <= rec["y"] < header["height"]
            assert len(rec["descriptor"]) == header["descriptor_len"]
            assert np.linalg.norm(rec["descriptor"]) == pytest.approx(1.0, abs=1e-9)

    def test_max_features_caps_output(self, sample_images, tmp_path):
        out = tmp_path / "capped.jsonl"
        count = extract(ExtractionSpec(
            image=sample_images[1], out=out, max_features=100))
        assert count <= 100
        header = json.loads(out.read_text().splitlines()[0])
        assert header["count"] <= 100

    def test_deterministic_output(self, sample_images, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        extract(ExtractionSpec(image=sample_images[2], out=a, max_features=200))
        extract(ExtractionSpec(image=sample_images[2], out=b, max_features=200))
        assert a.read_bytes() == b.read_bytes()

    def test_orb_descriptors_pass_through(self, sample_images, tmp_path):
        out = tmp_path / "orb.jsonl"
        extract(ExtractionSpec(image=sample_images[3], out=out, detector="orb"))
        header = json.loads(out.read_text().splitlines()[0])
        assert header["descriptor_len"] == 32

    def test_unknown_detector_rejected(self, sample_images, tmp_path):
        with pytest.raises(ExtractionError, match="unknown detector"):
            extract(ExtractionSpec(image=sample_images[0],
                                   out=tmp_path / "x.jsonl", detector="magic"))

    def test_unreadable_image_rejected(self, tmp_path):
        with pytest.raises(ExtractionError, match="could not read"):
            extract(ExtractionSpec(image=tmp_path / "missing.png",
                                   out=tmp_path / "x.jsonl"))

    def test_detector_without_orientation_rejected(self, sample_images, tmp_path,
                                                   monkeypatch):
        import cv2

        class NoAngleDetector:
            def detectAndCompute(self, img, mask):
                kps = [cv2.KeyPoint(10.0, 10.0, 4.0, -1.0)]
                return kps, np.ones((1, 8), dtype=np.float32)

        monkeypatch.setattr(extract_module, "_detector_registry",
                            lambda: {"noangle": NoAngleDetector})
        with pytest.raises(ExtractionError, match="orientation"):
            extract(ExtractionSpec(image=sample_images[0],
                                   out=tmp_path / "x.jsonl", detector="noangle"))

    def test_invalid_max_features(self, sample_images, tmp_path):
        with pytest.raises(ValueError):
            ExtractionSpec(image=sample_images[0], out=tmp_path / "x.jsonl",
                           max_features=0)


class TestCli:
    def test_extract_subcommand(self, sample_images, tmp_path, capsys):
        from featext.cli import main
        out = tmp_path / "cli.jsonl"
        code = main(["extract", "--image", str(sample_images[4]),
                     "--out", str(out), "--max-features", "150"])
        assert code == 0
        assert out.exists()
        assert "wrote" in capsys.readouterr().out

    def test_error_exit_code(self, tmp_path, capsys):
        from featext.cli import main
        code = main(["extract", "--image", str(tmp_path / "nope.png"),
                     "--out", str(tmp_path / "x.jsonl")])
        assert code == 1
