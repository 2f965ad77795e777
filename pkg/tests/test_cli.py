import json
import shutil
import subprocess

import numpy as np
import pytest

from sphmm_sid.cli import DEFAULTS, RunConfig, build_parser, main
from sphmm_sid.corpus import write_wav
from sphmm_sid.frontend import AudioBuffer, read_features

FAST = ["--mixtures", "2", "--supra-mixtures", "2", "--max-iter", "5", "--seed", "1"]


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    for text in ("(default: 9)", "(default: 5)", "(default: 10)", "(default: 0.5)",
                 "(default: 0)", "(default: 'both')", "(default: 50)", "(default: 0.0001)"):
        assert text in out


def test_parser_has_all_subcommands():
    parser = build_parser()
    for cmd in ("synth", "train", "evaluate", "features"):
        args = parser.parse_args([cmd] + (["x"] if cmd in ("train", "features") else [])
                                 + (["x", "y"] if cmd == "evaluate" else []))
        assert args.command == cmd


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(model="gmm")
    with pytest.raises(ValueError):
        RunConfig(n_states=2)
    with pytest.raises(ValueError):
        RunConfig(alpha=-1)
    assert DEFAULTS.models() == ("chmm2", "sphmm")
    assert RunConfig(model="sphmm").models() == ("sphmm",)


def test_features_on_silence_fails(tmp_path, capsys):
    write_wav(tmp_path / "s.wav", AudioBuffer(np.zeros(12000)))
    assert main(["features", str(tmp_path / "s.wav")]) != 0
    assert "no usable frames" in capsys.readouterr().err


def test_features_on_one_second(tmp_path, capsys):
    n = np.arange(12000)
    x = 0.3 * np.sin(2 * np.pi * 150 * n / 12000) * (1 + 0.3 * np.sin(2 * np.pi * 3 * n / 12000))
    x += 0.01 * np.random.default_rng(0).standard_normal(12000)
    write_wav(tmp_path / "v.wav", AudioBuffer(x))
    assert main(["features", str(tmp_path / "v.wav"), "--out", str(tmp_path / "v.lpcc")]) == 0
    out = capsys.readouterr().out
    kept = int(out.split("frames kept:")[1].split()[0])
    dropped = int(out.split("dropped:")[1].split()[0])
    assert kept + dropped == 195
    obs = read_features(tmp_path / "v.lpcc")
    assert len(obs) == kept <= 195 and obs.dim == 12


def test_missing_inputs_fail_cleanly(tmp_path, capsys):
    assert main(["features", str(tmp_path / "missing.wav")]) == 1
    assert main(["train", str(tmp_path / "missing.tsv"), "--out", str(tmp_path)]) == 1
    assert main(["synth"]) == 1
    err = capsys.readouterr().err
    assert err.count("sphmm-sid: error:") == 3
    assert "synth needs --out" in err


def test_config_file(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"speakers": 1, "sentences": 1, "seed": 4}))
    assert main(["synth", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "c")]) == 0
    assert "wrote 13 utterances (5 train, 8 test)" in capsys.readouterr().out
    (tmp_path / "bad.json").write_text(json.dumps({"speakerz": 1}))
    assert main(["synth", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--speakers", "2", "--sentences", "1", "--seed", "2",
                 "--out", str(root / "corpus")]) == 0
    manifest = str(root / "corpus" / "manifest.tsv")
    for name in ("m1", "m2"):
        assert main(["train", manifest, "--out", str(root / name)] + FAST) == 0
    return root, manifest


def test_train_is_deterministic(pipeline):
    root, _ = pipeline
    files = sorted(p.name for p in (root / "m1").iterdir())
    assert files == ["index.json", "s01_t1.json", "s02_t1.json"]
    for name in files:
        assert (root / "m1" / name).read_bytes() == (root / "m2" / name).read_bytes()


def test_evaluate_alpha_zero(pipeline, capsys):
    root, manifest = pipeline
    capsys.readouterr()
    assert main(["evaluate", manifest, str(root / "m1"), "--alpha", "0",
                 "--out", str(root / "r0")]) == 0
    text = capsys.readouterr().out
    assert text == (root / "r0" / "report.txt").read_text()
    report = json.loads((root / "r0" / "report.json").read_text())
    acc = report["accuracy"]
    assert set(acc) == {"chmm2", "sphmm"}
    assert set(acc["chmm2"]) == {"neutral", "shouted"}
    assert acc["sphmm"] == acc["chmm2"]
    assert report["n_utterances"] == 16


def test_evaluate_single_model(pipeline):
    root, manifest = pipeline
    assert main(["evaluate", manifest, str(root / "m1"), "--model", "chmm2",
                 "--out", str(root / "r1")]) == 0
    report = json.loads((root / "r1" / "report.json").read_text())
    assert set(report["accuracy"]) == {"chmm2"}


@pytest.mark.skipif(shutil.which("sphmm-sid") is None, reason="console script not installed")
def test_console_script():
    result = subprocess.run(["sphmm-sid", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "synth" in result.stdout and "evaluate" in result.stdout
