import math

import pytest

import quads


def test_size_convention():
    assert quads.model_size_mb(7.25e6, 32) == pytest.approx(27.66, abs=0.01)
    assert quads.model_size_mb(1 << 20, 8) == 1.0


def test_kmeans_two_pairs():
    cb = quads.kmeans_fit([0.0, 0.0, 10.0, 10.0], 1, seed=0, restarts=3)
    assert sorted(cb.centroids) == [0.0, 10.0]
    assert quads.codebook_sse([0.0, 0.0, 10.0, 10.0], cb) == 0.0
    assert cb.reconstruct() == [0.0, 0.0, 10.0, 10.0]


def test_centroid_gradient():
    g = quads.centroid_gradient([0.3, -0.1, 0.2, 0.4], [0, 1, 0, 1], 2)
    assert g == pytest.approx([0.5, 0.3])
    with pytest.raises(quads.QuadsError):
        quads.centroid_gradient([0.1], [3], 2)


def test_log_mel_shape_and_silence():
    n_mels, frames, values = quads.log_mel([0.0] * 16000)
    assert (n_mels, frames) == (80, 98)
    assert all(v == math.log(1e-10) for v in values)


def test_metrics():
    assert quads.accuracy([0, 1, 2, 0], [0, 1, 2, 1]) == 0.75
    assert quads.macro_f1([1, 1, 0, 1, 0, 0], [1, 1, 1, 0, 0, 0], 2) == pytest.approx(2 / 3)


def test_cli_end_to_end(tmp_path):
    ini = tmp_path / "tiny.ini"
    ini.write_text(
        "[corpus]\nn_classes = 3\nsamples_per_class = 8\nduration_s = 0.5\n"
        "[mel]\nn_mels = 20\n"
        "[teacher]\nconv = 3:8:2\nff = 8\nepochs = 2\n"
        "[student]\nconv = 3:6:2\nff = 6\npretrain_epochs = 1\n"
        "[schedule]\ncycles = 1\ndistill_epochs = 1\nquant_epochs = 1\nfinal_quant_epochs = 1\nbatch_size = 8\n"
    )
    base = ["--config", str(ini), "--run-dir", str(tmp_path / "root")]
    for sub in ("synth-data", "train-teacher"):
        code, _, err = quads.run_cli(base + [sub])
        assert code == 0, err
    code, _, err = quads.run_cli(base + ["--bits", "4", "mct"])
    assert code == 0, err
    model = tmp_path / "root" / "runs" / "mct-b4-random-seed0" / "model.qdsm"
    info = quads.inspect_model(model)
    assert info["bit_length"] == 4
    assert info["layers"]["head.weight"][1] == "codebook"
    code, out, _ = quads.run_cli(base + ["evaluate", "--model", str(model)])
    assert code == 0 and out.strip()
    assert quads.run_cli(["--bits", "5", "mct"])[0] == 1
