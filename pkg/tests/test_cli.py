import json
import subprocess
import sys

import cv2
import numpy as np
import pytest

from hiertext.cli import run
from hiertext.imageproc import save_png
from hiertext.synthetic import SyntheticSpec, generate_synthetic
from hiertext.training import save_corpus

SMALL = SyntheticSpec(width=200, height=150, words=(1, 2), glyph_height=(16, 22),
                      distractors=True)


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    save_corpus(d, [generate_synthetic(s, SMALL) for s in (1, 2, 3)])
    return d


@pytest.fixture
def blank(tmp_path):
    p = tmp_path / "blank.png"
    save_png(p, np.zeros((40, 50, 3), np.uint8))
    return p


def test_blank_extract(tmp_path, blank):
    out = tmp_path / "out"
    assert run(["extract", str(blank), "--out", str(out)]) == 0
    mask = cv2.imread(str(out / "blank_mask.png"), cv2.IMREAD_GRAYSCALE)
    assert mask.shape == (40, 50) and not mask.any()
    assert (out / "blank_rects.jsonl").read_text() == ""
    assert "total" in json.loads((out / "blank_timing.json").read_text())


def test_extract_optional_outputs(tmp_path, small_model_path):
    img, _ = generate_synthetic(4, SMALL)
    p = tmp_path / "a.png"
    save_png(p, img)
    out = tmp_path / "out"
    assert run(["extract", str(p), "--out", str(out), "--model", str(small_model_path),
                "--overlay", "--dump-dendrograms", "--channels", "gray"]) == 0
    assert (out / "a_overlay.png").is_file()
    lines = (out / "a_dendrograms.jsonl").read_text().splitlines()
    assert lines and all("nodes" in json.loads(line) or json.loads(line) for line in lines)
    rects = [json.loads(line) for line in (out / "a_rects.jsonl").read_text().splitlines()]
    assert rects and {"cx", "cy", "w", "h", "angle_rad"} <= set(rects[0])


def test_jobs_do_not_change_outputs(tmp_path, small_model_path):
    paths = []
    for s in (5, 6):
        p = tmp_path / f"im{s}.png"
        save_png(p, generate_synthetic(s, SMALL)[0])
        paths.append(str(p))
    common = ["--model", str(small_model_path), "--channels", "gray"]
    assert run(["extract", *paths, "--out", str(tmp_path / "a"), *common]) == 0
    assert run(["extract", *paths, "--out", str(tmp_path / "b"), "--jobs", "2", *common]) == 0
    fa = {k: v for k, v in files(tmp_path / "a").items() if "timing" not in k}
    fb = {k: v for k, v in files(tmp_path / "b").items() if "timing" not in k}
    assert fa == fb


def test_missing_input_is_io_error(tmp_path, capsys):
    assert run(["extract", str(tmp_path / "nope.png"), "--out", str(tmp_path / "o")]) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert not (tmp_path / "o").exists()


def test_corrupt_image_is_data_error(tmp_path, capsys):
    p = tmp_path / "bad.png"
    p.write_bytes(b"not a png")
    assert run(["extract", str(p), "--out", str(tmp_path / "o")]) == 3
    assert capsys.readouterr().err.startswith("error:")


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["extract", "--out", "x"],
                                  ["extract", "a.png", "--out", "x", "--level", "page"],
                                  ["sweep", "--corpus", "c", "--out", "o", "--thresholds", "1:0:1"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_sweep_needs_model(corpus, tmp_path):
    assert run(["sweep", "--corpus", str(corpus), "--out", str(tmp_path / "s"),
                "--thresholds", "0:1:0.5"]) == 1


def test_gen_synthetic_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run(["gen-synthetic", "--out", str(tmp_path / name), "--seed", "7",
                    "--count", "10"]) == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert len(a) == 31 and a == b


def test_gen_synthetic_bad_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"colour": 3}))
    assert run(["gen-synthetic", "--out", str(tmp_path / "o"), "--spec", str(spec)]) == 3


def test_evaluate_mismatched_sizes(tmp_path, corpus, capsys):
    outs = tmp_path / "outs"
    outs.mkdir()
    for k in range(3):
        save_png(outs / f"{k:05d}_mask.png", np.zeros((10, 10), np.uint8))
    assert run(["evaluate", "--outputs", str(outs), "--corpus", str(corpus),
                "--out", str(tmp_path / "r")]) == 3
    assert capsys.readouterr().err.startswith("error: data")


def test_evaluate_missing_mask(tmp_path, corpus):
    (tmp_path / "outs").mkdir()
    assert run(["evaluate", "--outputs", str(tmp_path / "outs"), "--corpus", str(corpus),
                "--out", str(tmp_path / "r")]) == 2


def test_extract_then_evaluate(tmp_path, corpus, small_model_path):
    images = sorted(str(p) for p in corpus.glob("0000?.png"))
    outs = tmp_path / "outs"
    assert run(["extract", *images, "--out", str(outs), "--model", str(small_model_path)]) == 0
    assert run(["evaluate", "--outputs", str(outs), "--corpus", str(corpus),
                "--out", str(tmp_path / "r")]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert len(report["images"]) == 3
    assert 0.0 <= report["mean_pixel_fscore"] <= 1.0
    assert "localization" in report


def test_train_weights_and_use(tmp_path, corpus):
    out = tmp_path / "w"
    assert run(["train-weights", "--corpus", str(corpus), "--out", str(out), "--n", "2",
                "--channels", "gray", "--hi", "0.5", "--coarse", "0.25", "--fine", "0.25"]) == 0
    obj = json.loads((out / "weights.json").read_text())
    assert 1 <= len(obj["configs"]) <= 2
    assert obj["combined_tgr"] >= max(obj["tgr"])
    assert "split_factor" in obj["postproc"]
    img = sorted(corpus.glob("0000?.png"))[0]
    assert run(["extract", str(img), "--out", str(tmp_path / "e"),
                "--weights", str(out / "weights.json")]) == 0


def test_train_classifier_deterministic(tmp_path, corpus):
    argv = ["train-classifier", "--corpus", str(corpus), "--channels", "gray",
            "--rounds", "10", "--hard-k", "5", "--seed", "3"]
    assert run(argv + ["--out", str(tmp_path / "a")]) == 0
    assert run(argv + ["--out", str(tmp_path / "b")]) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    model = json.loads((tmp_path / "a" / "model.json").read_text())
    assert model["stumps"]


def test_sweep_writes_csv(tmp_path, corpus, small_model_path):
    assert run(["sweep", "--corpus", str(corpus), "--out", str(tmp_path / "s"),
                "--model", str(small_model_path), "--channels", "gray",
                "--thresholds=-1:1:0.5"]) == 0
    rows = (tmp_path / "s" / "pr.csv").read_text().splitlines()
    assert len(rows) == 1 + 5


def test_nothing_written_outside_out(tmp_path, monkeypatch, blank):
    cwd = tmp_path / "cwd"
    cwd.mkdir()
    monkeypatch.chdir(cwd)
    before = files(tmp_path)
    assert run(["extract", str(blank), "--out", str(tmp_path / "o")]) == 0
    after = {k: v for k, v in files(tmp_path).items() if not k.startswith("o/")}
    assert after == before


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hiertext", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "extract" in r.stdout
