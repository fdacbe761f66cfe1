"""Config parsing, recipe outputs, determinism, and exit codes."""

import hashlib
import json

import pytest

from usfm_sim.cli import main, parse_config, parse_config_text, run_experiment
from usfm_sim.errors import ConfigError

MINIMAL = 'recipe = "spectral_efficiency"\nseed = 7\n'

QUICK_BER = """
recipe = "ber_awgn_rayleigh"
seed = 11
[link]
mod_order = 4
n_seq = 4
n_freq = 16
cp_len = 4
equalizer = "zf"
ebn0_db = [0, 4]
[sweep]
min_bits = 10000
max_bits = 30000
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ----------------------------------------------------------------- parsing


def test_minimal_config_defaults(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    assert spec.recipe == "spectral_efficiency"
    assert spec.seed == 7
    assert spec.link.mod_order == 4
    assert spec.link.n_seq == 64 and spec.link.n_freq == 64
    assert spec.link.cp_len == 16


def test_duplicate_key_rejected_with_line(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\nseed = 1\nseed = 2\n')
    with pytest.raises(ConfigError, match="line 3: duplicate key"):
        parse_config(path)


def test_unknown_key_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\n[link]\nbandwidth = 20\n')
    with pytest.raises(ConfigError, match="line 3: unknown key"):
        parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\n[radio]\nfreq = 1\n')
    with pytest.raises(ConfigError, match=r"unknown section \[radio\]"):
        parse_config(path)


def test_cp_at_least_block_len_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\n[link]\nn_freq = 16\ncp_len = 16\n')
    with pytest.raises(ConfigError, match="cp_len"):
        parse_config(path)


def test_unknown_recipe_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "warp_drive"\n')
    with pytest.raises(ConfigError, match="unknown recipe"):
        parse_config(path)


def test_missing_recipe_rejected(tmp_path):
    path = write(tmp_path, "seed = 3\n")
    with pytest.raises(ConfigError, match="must set a recipe"):
        parse_config(path)


def test_malformed_line_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\nthis is not toml\n')
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(path)


def test_comments_and_strings_parse():
    data = parse_config_text('a = "x # not a comment"  # real comment\n')
    assert data["a"][0] == "x # not a comment"


def test_type_errors_rejected(tmp_path):
    path = write(tmp_path, 'recipe = "papr"\n[link]\nmod_order = "four"\n')
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(path)


def test_flag_overrides(tmp_path):
    path = write(tmp_path, MINIMAL)
    spec = parse_config(path, {"seed": 99, "out": str(tmp_path / "o"), "points": 3})
    assert spec.seed == 99
    assert spec.link.ebn0_db_grid == (0.0, 10.0, 20.0)


# ----------------------------------------------------------------- running


def run_cli(args):
    return main(args)


def test_validate_exit_codes(tmp_path):
    good = write(tmp_path, MINIMAL)
    assert run_cli(["validate", "--config", str(good)]) == 0
    bad = write(tmp_path, 'recipe = "nope"\n', "bad.cfg")
    assert run_cli(["validate", "--config", str(bad)]) == 2
    assert run_cli(["validate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_spectral_efficiency_recipe(tmp_path):
    out = tmp_path / "out"
    assert run_cli(["run", "--config", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 0
    lines = (out / "efficiency.csv").read_text().splitlines()
    assert lines[0] == "scheme,mod_order,n_freq,cp_len,eta_bps_hz"
    rows = {(r.split(",")[0], r.split(",")[1]): r.split(",") for r in lines[1:]}
    assert rows[("usfm", "16")][4] == "4"  # prefix-free on flat channels
    assert rows[("ofdm", "16")][4] == "3.2"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"efficiency.csv"}
    assert manifest["seed"] == 7


def test_ber_recipe_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, QUICK_BER)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cli(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert run_cli(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    names = [
        "ber_usfm_awgn.csv",
        "ber_usfm_flat_rayleigh.csv",
        "ber_ofdm_awgn.csv",
        "ber_ofdm_flat_rayleigh.csv",
        "theory_awgn.csv",
        "theory_rayleigh.csv",
        "manifest.json",
    ]
    for name in names:
        b1 = (out1 / name).read_bytes()
        b2 = (out2 / name).read_bytes()
        assert b1 == b2, f"{name} not reproducible"
    manifest = json.loads((out1 / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out1 / name).read_bytes()).hexdigest() == digest


def test_ber_csv_schema(tmp_path):
    cfg = write(tmp_path, QUICK_BER)
    out = tmp_path / "out"
    assert run_cli(["run", "--config", str(cfg), "--out", str(out)]) == 0
    header = (out / "ber_usfm_awgn.csv").read_text().splitlines()[0]
    assert header == "scheme,channel,equalizer,ebn0_db,bits,errors,ber,ci_half_width"


def test_ml_ablation_recipe(tmp_path):
    text = """
recipe = "ml_ablation"
seed = 5
[link]
mod_order = 4
n_seq = 4
n_freq = 16
cp_len = 4
equalizer = "zf"
ebn0_db = [8]
[channel]
kind = "freq_selective"
n_taps = 3
[sweep]
min_bits = 10000
max_bits = 20000
"""
    out = tmp_path / "out"
    assert run_cli(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    for name in ("ber_optimized.csv", "ber_unoptimized.csv", "delta.csv"):
        assert (out / name).exists()
    delta_lines = (out / "delta.csv").read_text().splitlines()
    assert delta_lines[0] == "ebn0_db,ber_unoptimized,ber_optimized,delta"
    assert len(delta_lines) == 2


def test_complexity_and_latency_recipes(tmp_path):
    for recipe, fname in (("complexity", "complexity.csv"), ("latency", "latency.csv")):
        text = f'recipe = "{recipe}"\nseed = 2\n'
        out = tmp_path / recipe
        assert run_cli(["run", "--config", str(write(tmp_path, text, f"{recipe}.cfg")), "--out", str(out)]) == 0
        lines = (out / fname).read_text().splitlines()
        assert lines[0] == "scheme,n_total,butterflies,opt_iters"
        assert len(lines) == 1 + 2 * 5  # two schemes x five grid sizes


def test_papr_recipe(tmp_path):
    text = 'recipe = "papr"\nseed = 3\n[link]\nn_seq = 4\nn_freq = 64\n'
    out = tmp_path / "out"
    assert run_cli(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    lines = (out / "papr.csv").read_text().splitlines()
    assert lines[0] == "scheme,frame_index,papr_db"
    manifest = json.loads((out / "manifest.json").read_text())
    assert "papr_median_db" in manifest["notes"]
    assert "lower_papr_claim_holds" in manifest["notes"]


def test_config_file_not_mutated(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    before = cfg.read_bytes()
    run_cli(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert cfg.read_bytes() == before


def test_io_failure_exit_code(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not a directory")
    spec.output_dir = blocker
    assert run_experiment(spec) == 3
