import argparse
import json
import subprocess
import sys

import numpy as np
import pytest

from mfwidth.audio import encode_wav, read_wav
from mfwidth.cli import build_config, build_parser, main
from mfwidth.core import AnalysisConfig, analyze_with_fallback
from mfwidth.surrogate import shuffle_test
from mfwidth.synth import powerlaw_noise, white_noise

SUBCOMMANDS = ("analyze", "batch", "synth", "shuffle-test", "report")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def cascade_wav(tmp_path, capsys):
    path = tmp_path / "cascade.wav"
    assert run(capsys, "synth", "binomial_cascade", "--a", 0.6, "--k", 16, "--out", path)[0] == 0
    return path


def _long_wav(path, seed=0, rate=1000, seconds=125):
    x = np.random.default_rng(seed).standard_normal(rate * seconds) * 0.1
    path.write_bytes(encode_wav(x, rate))
    return path


# --- help


def _subparsers():
    parser = build_parser()
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_documents_every_flag(name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([name, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for action in _subparsers()[name]._actions:
        if isinstance(action, argparse._HelpAction):
            continue
        assert action.help, f"{name}: {action.dest} lacks help"
        for opt in action.option_strings:
            assert opt in text


def test_spec_flags_exist():
    flags = {o for p in _subparsers().values() for a in p._actions for o in a.option_strings}
    for f in ("--q-min", "--q-max", "--q-step", "--scales-min", "--scales-max", "--n-scales",
              "--detrend-order", "--segmentation", "--width-method", "--parts", "--clip-start",
              "--clip-length", "--format", "--out", "--jobs", "--seed", "--config"):
        assert f in flags


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "mfwidth.cli", "--help"], capture_output=True)
    assert proc.returncode == 0 and b"shuffle-test" in proc.stdout


# --- analyze


def test_analyze_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "analyze", tmp_path / "nope.wav")
    assert code == 1 and "nope.wav" in err and out == ""


def test_analyze_empty_q_range(capsys, cascade_wav):
    code, _, err = run(capsys, "analyze", cascade_wav, "--q-max", 5, "--q-min", 5)
    assert code == 2 and "q-max" in err


def test_analyze_bad_choice_is_validation(capsys, cascade_wav):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", str(cascade_wav), "--segmentation", "sideways"])
    assert exc.value.code == 2


def test_analyze_one_row(capsys, cascade_wav):
    code, out, _ = run(capsys, "analyze", cascade_wav, "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 2
    assert lines[0].startswith("source,part_index,n_samples,W")
    assert lines[1].split(",")[2] == "65536"


def test_analyze_human_table(capsys, cascade_wav):
    code, out, _ = run(capsys, "analyze", cascade_wav)
    assert code == 0 and "quadratic_fit" in out and "65536" in out


def test_analyze_json_to_file_and_parts(capsys, tmp_path):
    wav = _long_wav(tmp_path / "long.wav")
    out = tmp_path / "o.json"
    code, stdout, _ = run(capsys, "analyze", wav, "--parts", 4, "--clip-length", 120,
                          "--format", "json", "--out", out)
    rows = json.loads(out.read_text())
    assert code == 0 and [r["part_index"] for r in rows] == [1, 2, 3, 4]
    assert all(r["n_samples"] == 30_000 for r in rows)
    assert "W" in stdout  # table still printed when output goes to a file


def test_analyze_clip_out_of_range(capsys, cascade_wav):
    assert run(capsys, "analyze", cascade_wav, "--clip-length", 120)[0] == 2


def test_analyze_byte_identical(capsys, cascade_wav, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "analyze", cascade_wav, "--out", a)
    run(capsys, "analyze", cascade_wav, "--out", b)
    assert a.read_bytes() == b.read_bytes()


# --- config precedence


def test_config_file_and_flag_precedence(tmp_path, capsys, cascade_wav):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"q_min": -2, "q_max": 2, "q_step": 0.5, "width_method": "endpoint_span"}))
    out = tmp_path / "o.json"
    run(capsys, "analyze", cascade_wav, "--config", cfg, "--q-max", 3, "--format", "json", "--out", out)
    row = json.loads(out.read_text())[0]
    assert sorted(float(q) for q in row["h_table"]) == list(np.arange(-2, 3.01, 0.5))
    assert row["width_method"] == "endpoint_span"


def test_config_unknown_key(tmp_path, capsys, cascade_wav):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"q_mni": 1}')
    assert run(capsys, "analyze", cascade_wav, "--config", cfg)[0] == 2


def test_build_config_defaults():
    assert build_config({}) == AnalysisConfig()


# --- synth


def test_synth_cascade_length(tmp_path, cascade_wav):
    clip = read_wav(cascade_wav)
    assert clip.samples.size == 65536 and clip.sample_rate_hz == 44100


def test_synth_bad_param(capsys, tmp_path):
    assert run(capsys, "synth", "binomial_cascade", "--a", 1.5, "--out", tmp_path / "x.wav")[0] == 2


def test_synth_same_seed_identical(capsys, tmp_path):
    for name in ("a", "b"):
        run(capsys, "synth", "powerlaw_noise", "--beta", 0.8, "--length", 4096, "--seed", 3,
            "--out", tmp_path / f"{name}.wav")
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


def test_synth_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "white_noise", "--length", 256, "--seed", 1, "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "value" and len(lines) == 257
    np.testing.assert_array_equal([float(v) for v in lines[1:]], white_noise(256, 1).samples)


# --- batch


def _manifest(tmp_path, entries):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(entries))
    return p


def test_batch_empty_manifest(capsys, tmp_path):
    code, out, _ = run(capsys, "batch", _manifest(tmp_path, []))
    assert code == 0 and out.strip() == "gharana,artist_id,generation,lineage,part_index,W,alpha0,quadA,quadB"


def test_batch_one_entry_four_rows(capsys, tmp_path):
    _long_wav(tmp_path / "a.wav")
    m = _manifest(tmp_path, [{"path": "a.wav", "gharana": "Agra", "artist_id": "Artist 1",
                              "generation": 1, "lineage": "agra-1", "clip_start_s": 2}])
    summary = tmp_path / "s.json"
    code, out, _ = run(capsys, "batch", m, "--jobs", 1, "--summary", summary)
    assert code == 0 and len(out.strip().splitlines()) == 5
    assert json.loads(summary.read_text())["Agra"]["1"]["n"] == 4


def test_batch_partial(capsys, tmp_path):
    _long_wav(tmp_path / "a.wav")
    (tmp_path / "b.wav").write_bytes(b"garbage")
    m = _manifest(tmp_path, [
        {"path": "a.wav", "gharana": "Agra", "artist_id": "Artist 1", "generation": 1},
        {"path": "b.wav", "gharana": "Agra", "artist_id": "Artist 2", "generation": 2}])
    code, out, err = run(capsys, "batch", m, "--jobs", 2)
    assert code == 3 and len(out.strip().splitlines()) == 5 and "b.wav" in err


def test_batch_jobs_do_not_change_output(capsys, tmp_path):
    for i in range(3):
        _long_wav(tmp_path / f"{i}.wav", seed=i)
    m = _manifest(tmp_path, [{"path": f"{i}.wav", "gharana": "Kirana", "artist_id": f"Artist {i}",
                              "generation": 2} for i in range(3)])
    outs = [run(capsys, "batch", m, "--jobs", j, "--format", "json")[1] for j in (1, 3)]
    assert outs[0] == outs[1]


# --- shuffle-test


def test_shuffle_test_zero_surrogates(capsys, cascade_wav):
    assert run(capsys, "shuffle-test", cascade_wav, "--surrogates", 0)[0] == 2


def _wav_of(series, path):
    path.write_bytes(encode_wav(series, 44100, peak=0.99))
    return path


def test_shuffle_test_matches_library(capsys, tmp_path):
    wav = _wav_of(powerlaw_noise(2 ** 16, 0.8, 0), tmp_path / "pl.wav")
    code, out, _ = run(capsys, "shuffle-test", wav, "--surrogates", 5, "--seed", 9, "--format", "json")
    doc = json.loads(out)
    ref = shuffle_test(read_wav(wav).to_series(), AnalysisConfig(), 5, 9)
    assert code == 0 and doc == ref.as_dict()
    assert doc["h2_shuffled_mean"] == pytest.approx(0.5, abs=0.05)


def test_shuffle_test_white_noise_verdict(capsys, tmp_path):
    wav = _wav_of(white_noise(2 ** 16, 4), tmp_path / "wn.wav")
    code, out, _ = run(capsys, "shuffle-test", wav, "--surrogates", 10)
    assert code == 0
    verdict = out.strip().splitlines()[-1].split()[-1]
    assert verdict in ("distribution_dominated", "mixed")


# --- report


def test_report_bundled(capsys):
    code, out, _ = run(capsys, "report")
    assert code == 0
    agra1 = next(line for line in out.splitlines() if line.startswith("Agra     Artist 1"))
    assert agra1.split()[-1] == "0.3825"


def test_report_json(capsys):
    code, out, _ = run(capsys, "report", "--format", "json")
    doc = json.loads(out)
    means = {(m["gharana"], m["artist_id"]): m["mean_W"] for m in doc["artist_means"]}
    assert means[("Kirana", "Artist 5")] == 0.895 and doc["summary"]["Gwalior"]["4"]["mean"] == 0.4375


def test_report_malformed(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("foo,bar\n1,2\n")
    assert run(capsys, "report", p)[0] == 2


def test_report_zero_matches(capsys, tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("gharana,artist_id,generation,lineage,part_index,W,alpha0,quadA,quadB\n"
                 "Bhendi,Artist 1,1,,1,0.5,,,\n")
    code, out, _ = run(capsys, "report", p, "--reference")
    assert code == 0 and "0 matched" in out


def test_report_against_reference_matches_itself(capsys, tmp_path):
    p = tmp_path / "ref.csv"
    run(capsys, "report", "--format", "csv")  # summary CSV, not records
    from mfwidth.report import emit, load_reference
    p.write_bytes(emit(load_reference()))
    code, out, _ = run(capsys, "report", p, "--reference")
    assert code == 0 and "100 matched, 0 unmatched" in out
