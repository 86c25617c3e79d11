import json
import sys

import numpy as np
import pytest

from panoreduce.detection import (BlurParams, ExternalDetector, OracleDetector, blur_regions,
                                  check_local_detections, parse_response)
from panoreduce.errors import DetectorError, ProtocolError
from panoreduce.records import Detection
from reference import checkerboard as _checker, dense_gaussian_blur

STUB = [sys.executable, "-m", "panoreduce.stub_detector"]


# -- oracle -----------------------------------------------------------------

def test_oracle_fraction_rule():
    gt = [("face", (90, 0, 110, 10))]
    det = OracleDetector(gt, 1000)
    # patch [100, 200): half the box inside
    out = det.detect(np.zeros((50, 100, 3)), (100, 0))
    assert out == [Detection("face", (0, 0, 10, 10), 1.0)]
    # patch starting at 105: 25% inside, still reported
    assert len(det.detect(np.zeros((50, 100, 3)), (105, 0))) == 1
    # patch starting at 106: 20% inside, dropped
    assert det.detect(np.zeros((50, 100, 3)), (106, 0)) == []


def test_oracle_seam_boxes():
    gt = [("plate", (990, 20, 1010, 30))]  # straddles the seam of a 1000-wide panorama
    det = OracleDetector(gt, 1000)
    assert det.detect(np.zeros((50, 100, 3)), (0, 0)) == [Detection("plate", (0, 20, 10, 30), 1.0)]
    # a patch that itself wraps sees the whole box
    assert det.detect(np.zeros((50, 100, 3)), (950, 0)) == [Detection("plate", (40, 20, 60, 30), 1.0)]


def test_check_local_detections():
    ok = [Detection("face", (0, 0, 5, 5), 0.5)]
    assert check_local_detections(ok, 5, 5) == ok
    with pytest.raises(ProtocolError):
        check_local_detections([Detection("face", (0, 0, 6, 5), 0.5)], 5, 5)
    with pytest.raises(ProtocolError):
        check_local_detections([Detection("face", (0, 0, 5, 5), 1.5)], 5, 5)


# -- protocol -----------------------------------------------------------------

def test_parse_response_valid():
    line = json.dumps({"detections": [{"class": "plate", "box": [1, 2, 3, 4], "score": 0.7}]})
    assert parse_response(line, 10, 10) == [Detection("plate", (1, 2, 3, 4), 0.7)]


@pytest.mark.parametrize("line", [
    "",
    "not json",
    "[]",
    '{"detections": {}}',
    '{"detections": [], "extra": 1}',
    '{"detections": [{"class": "car", "box": [0, 0, 1, 1], "score": 0.5}]}',
    '{"detections": [{"class": "face", "box": [0, 0, 11, 1], "score": 0.5}]}',
    '{"detections": [{"class": "face", "box": [3, 0, 1, 1], "score": 0.5}]}',
    '{"detections": [{"class": "face", "box": [0, 0, 1], "score": 0.5}]}',
    '{"detections": [{"class": "face", "box": [0, 0, 1, 1], "score": 2}]}',
    '{"detections": [{"class": "face", "box": [0, 0, 1, 1]}]}',
    '{"detections": [{"class": "face", "box": [0, 0, 1, 1], "score": NaN}]}',
])
def test_parse_response_rejects(line):
    with pytest.raises(ProtocolError) as info:
        parse_response(line, 10, 10)
    assert info.value.raw == line


def test_parse_response_fuzzed_mutations():
    good = json.dumps({"detections": [{"class": "face", "box": [1, 2, 3, 4], "score": 0.5}]})
    rng = np.random.default_rng(0)
    for _ in range(300):
        chars = list(good)
        for _ in range(rng.integers(1, 4)):
            chars[rng.integers(len(chars))] = chr(rng.integers(32, 127))
        line = "".join(chars)
        try:
            dets = parse_response(line, 10, 10)
        except ProtocolError:
            continue
        assert all(0 <= d.box[0] < d.box[2] <= 10 and 0 <= d.score <= 1 for d in dets)


# -- external process -----------------------------------------------------------

def test_external_loopback(tmp_path):
    with ExternalDetector(STUB + ["--box", "1", "2", "30", "40", "--class", "plate"], tmp_path) as det:
        out = det.detect(np.zeros((60, 80, 3), np.uint8), (5, 6), index=3)
    assert out == [Detection("plate", (1, 2, 30, 40), 0.9)]
    assert (tmp_path / "patch_3_5_6.ppm").exists()


def test_external_truth_mode_matches_oracle(tmp_path):
    truth = {"width": 1000, "objects": [{"class": "face", "box": [90, 0, 110, 10]}]}
    (tmp_path / "t.json").write_text(json.dumps(truth))
    pixels = np.zeros((50, 100, 3), np.uint8)
    with ExternalDetector(STUB + ["--truth", str(tmp_path / "t.json")], tmp_path) as det:
        assert det.detect(pixels, (100, 0)) == OracleDetector.from_truth(truth).detect(pixels, (100, 0))


def test_external_timeout(tmp_path):
    det = ExternalDetector(STUB + ["--delay", "5"], tmp_path, timeout_s=0.3)
    with pytest.raises(DetectorError, match="timed out"):
        det.detect(np.zeros((4, 4, 3), np.uint8), (0, 0))
    det.close()


def test_external_crash(tmp_path):
    with ExternalDetector(STUB + ["--exit-after", "1"], tmp_path) as det:
        det.detect(np.zeros((4, 4, 3), np.uint8), (0, 0))
        with pytest.raises(DetectorError, match="exited"):
            det.detect(np.zeros((4, 4, 3), np.uint8), (0, 0))


def test_external_off_contract_reply(tmp_path):
    script = "import sys\nfor _ in sys.stdin:\n    print('{\"boxes\": []}', flush=True)\n"
    with ExternalDetector([sys.executable, "-c", script], tmp_path) as det:
        with pytest.raises(ProtocolError):
            det.detect(np.zeros((4, 4, 3), np.uint8), (0, 0))


def test_external_workers_bounded(tmp_path):
    from concurrent.futures import ThreadPoolExecutor
    with ExternalDetector(STUB + ["--delay", "0.05"], tmp_path, max_parallelism=2) as det:
        with ThreadPoolExecutor(4) as pool:
            list(pool.map(lambda i: det.detect(np.zeros((4, 4, 3), np.uint8), (i, 0), i), range(8)))
        assert len(det._all) <= 2


# -- blur ---------------------------------------------------------------------

def test_blur_matches_dense_reference():
    rgb = _checker(80, 160)
    box = (40, 20, 70, 50)
    ours = blur_regions(rgb, [Detection("face", box, 1.0)], BlurParams())
    ref = dense_gaussian_blur(rgb, box)
    assert np.abs(ours.astype(int) - ref.astype(int)).max() <= 1


def test_blur_matches_reference_across_seam():
    rgb = _checker(80, 160)
    box = (150, 20, 160, 40)
    ours = blur_regions(rgb, [Detection("face", box, 1.0)], BlurParams())
    ref = dense_gaussian_blur(rgb, box)
    assert np.abs(ours.astype(int) - ref.astype(int)).max() <= 1
    assert (ours[:, :10] != rgb[:, :10]).any()  # padding wraps to column 0


def test_blur_locality_and_threshold():
    rgb = np.random.default_rng(0).integers(0, 256, (100, 200, 3), dtype=np.uint8)
    dets = [Detection("face", (50, 30, 70, 60), 0.9), Detection("plate", (120, 10, 150, 20), 0.1)]
    out = blur_regions(rgb, dets, BlurParams())
    inside = np.zeros((100, 200), dtype=bool)
    inside[26:64, 46:74] = True
    np.testing.assert_array_equal(out[~inside], rgb[~inside])
    assert (out[inside] != rgb[inside]).any()


def test_blur_flattens_checkerboard():
    rgb = _checker(120, 240)
    box = (80, 40, 140, 100)
    out = blur_regions(rgb, [Detection("face", box, 1.0)], BlurParams())
    region = (slice(40, 100), slice(80, 140))
    ratio = out[region].astype(float).var() / rgb[region].astype(float).var()
    assert ratio <= 0.05
