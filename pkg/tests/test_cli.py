import json

import numpy as np
import pytest

from slitqkd import cli
from slitqkd.channel import read_transcript
from slitqkd.export import read_pgm, read_profile_csv


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- bench ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert cli.main(["bench", "--out-dir", str(out)]) == 0
    return out


def test_bench_writes_all_cases(bench_dir):
    names = sorted(p.name for p in bench_dir.iterdir())
    assert len(names) == 16
    for prep in "xp":
        for meas in "xp":
            for bit in "01":
                for ext in ("csv", "pgm"):
                    assert f"prep-{prep}_meas-{meas}_bit-{bit}.{ext}" in names


def test_bench_line_centroid(bench_dir):
    x_mm, i = read_profile_csv(bench_dir / "prep-x_meas-x_bit-1.csv")
    assert np.dot(x_mm, i) / i.sum() == pytest.approx(1.0, abs=0.01)


def test_bench_csv_format(bench_dir):
    lines = (bench_dir / "prep-p_meas-p_bit-0.csv").read_text().splitlines()
    assert lines[0] == "x_mm,intensity"
    assert len(lines) == 4097
    # 12 significant digits
    assert lines[1].split(",")[0] == "-10"
    assert lines[2].split(",")[0] == "-9.9951171875"


def test_bench_dots_are_identical(bench_dir):
    for prep, meas in (("x", "p"), ("p", "x")):
        a = (bench_dir / f"prep-{prep}_meas-{meas}_bit-0.pgm").read_bytes()
        b = (bench_dir / f"prep-{prep}_meas-{meas}_bit-1.pgm").read_bytes()
        assert a == b


def test_bench_pgm(bench_dir):
    img = read_pgm(bench_dir / "prep-x_meas-x_bit-0.pgm")
    assert img.shape == (64, 4096)
    assert img.max() == 255
    assert (img == img[0]).all()


def test_bench_table(capsys, tmp_path):
    code, out, _ = run(capsys, "bench", "--out-dir", str(tmp_path))
    assert code == 0
    rows = {line.split()[0]: line.split()[1:] for line in out.splitlines()[1:]}
    assert rows["prep-x_meas-x_bit-1"][0] == "line_pos"
    assert rows["prep-x_meas-p_bit-0"][0] == "dot"
    assert rows["prep-p_meas-p_bit-1"][0] == "line_neg"


def test_bench_unwritable(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "bench", "--out-dir", str(blocker / "sub"))
    assert code == 2
    assert "error" in err


# -- qkd -----------------------------------------------------------------------------


def test_qkd_secure(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, out, _ = run(capsys, "qkd", "--frames", "1000", "--seed", "42", "--eve", "never", "--transcript", str(path))
    assert code == 0
    assert out.splitlines()[0] == "seed: 42"
    stats = json.loads(out[out.index("{") : out.rindex("}") + 1])
    assert stats["verdict"] == "secure"
    assert stats["key_length"] == stats["sifted_count"] - 10
    t = read_transcript(path)
    assert len(t.slots) == 1000 and t.verdict.is_secure


def test_qkd_tampered(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, out, _ = run(capsys, "qkd", "--frames", "1000", "--seed", "42", "--eve", "always", "--transcript", str(path))
    assert code == 3
    assert "tampered" in out


def test_qkd_inconclusive(capsys, tmp_path):
    code, _, _ = run(capsys, "qkd", "--frames", "10", "--seed", "1", "--transcript", str(tmp_path / "t"))
    assert code == 4


@pytest.mark.parametrize("flags", [["--eve", "prob:1.5"], ["--eve", "sometimes"], ["--frames", "5"], ["--frames", "0"]])
def test_qkd_bad_flags(capsys, tmp_path, flags):
    code, _, _ = run(capsys, "qkd", "--seed", "1", "--transcript", str(tmp_path / "t"), *flags)
    assert code == 2


def test_qkd_prints_generated_seed(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, out, _ = run(capsys, "qkd", "--frames", "50", "--transcript", str(path))
    seed = int(out.splitlines()[0].removeprefix("seed: "))
    assert read_transcript(path).seed == seed
    path2 = tmp_path / "t2.jsonl"
    code2, out2, _ = run(capsys, "qkd", "--frames", "50", "--seed", str(seed), "--transcript", str(path2))
    assert path.read_bytes() == path2.read_bytes()
    assert (code, out) == (code2, out2)


def test_qkd_reproducible_stdout(capsys, tmp_path):
    a = run(capsys, "qkd", "--frames", "200", "--seed", "9", "--eve", "prob:0.1", "--transcript", str(tmp_path / "a"))
    b = run(capsys, "qkd", "--frames", "200", "--seed", "9", "--eve", "prob:0.1", "--transcript", str(tmp_path / "b"))
    assert a == b
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_qkd_uses_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"protocol": {"verify_k": 4, "n_frames": 30}}))
    path = tmp_path / "t.jsonl"
    run(capsys, "qkd", "--config", str(cfg), "--seed", "3", "--transcript", str(path))
    t = read_transcript(path)
    assert t.protocol.verify_k == 4 and t.protocol.n_frames == 30


# -- send-text -----------------------------------------------------------------------


def test_send_hello(capsys):
    code, out, _ = run(capsys, "send-text", "--text", "hello", "--seed", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[1] == "bits: 01101000 01100101 01101100 01101100 01101111"
    assert lines[2] == "slots: 40, duration 200 s"
    assert lines[-1] == "hello"


def test_send_empty(capsys):
    assert run(capsys, "send-text", "--text", "", "--seed", "1")[0] == 2


def test_send_non_ascii(capsys):
    assert run(capsys, "send-text", "--text", "ç", "--seed", "1")[0] == 2


def test_send_realtime(capsys, monkeypatch):
    slept = []
    monkeypatch.setattr(cli.time, "sleep", slept.append)
    code, out, _ = run(capsys, "send-text", "--text", "hello", "--seed", "1", "--realtime", "true")
    assert code == 0 and out.splitlines()[-1] == "hello"
    assert len(slept) == 40 and sum(slept) == 200


def test_send_corrupted(capsys, monkeypatch):
    from slitqkd.optics import Classification, Label

    monkeypatch.setattr(cli, "measure", lambda *a, **k: Classification(Label.DOT, 0.0, 0.0, 1.0))
    assert run(capsys, "send-text", "--text", "hi", "--seed", "1")[0] == 5


# -- calibrate -----------------------------------------------------------------------


def test_calibrate_defaults(capsys):
    code, out, _ = run(capsys, "calibrate")
    assert code == 0
    d = json.loads(out)
    assert d["decode_positions_mm"] == [-1.0, 1.0]
    assert d["centroid_tol_mm"] == 0.25
    assert d["min_match_score"] == 0.9


def test_calibrate_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"protocol": {"pos_bit0": -0.5e-3, "pos_bit1": 0.5e-3}}))
    code, out, _ = run(capsys, "calibrate", "--config", str(cfg))
    assert code == 0
    assert json.loads(out)["decode_positions_mm"] == [-0.5, 0.5]


def test_calibrate_malformed(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "optics": {\n    "wavelength": ,\n  }\n}\n')
    code, _, err = run(capsys, "calibrate", "--config", str(cfg))
    assert code == 2
    assert f"{cfg}:3:" in err


@pytest.mark.parametrize(
    "content",
    ['{"optics": {"colour": 1}}', '{"lasers": {}}', '{"optics": {"wavelength": -1}}', "[]"],
)
def test_calibrate_invalid_config(capsys, tmp_path, content):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    assert run(capsys, "calibrate", "--config", str(cfg))[0] == 2


def test_missing_config_file(capsys, tmp_path):
    assert run(capsys, "calibrate", "--config", str(tmp_path / "nope.json"))[0] == 2


def test_no_subcommand(capsys):
    assert run(capsys)[0] == 2
