import subprocess
import sys
from pathlib import Path

import pytest

PLOTS_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PLOTS_DIR))


def run_sim(config_text: str, out_dir: Path, tmp_path: Path, name: str) -> None:
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(config_text)
    proc = subprocess.run(
        [sys.executable, "-m", "usfm_sim.cli", "run", "--config", str(cfg), "--out", str(out_dir)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr


@pytest.fixture(scope="session")
def sim_outputs(tmp_path_factory):
    """CSV outputs from quick runs of every recipe the figures consume."""
    tmp_path = tmp_path_factory.mktemp("sim")
    out = tmp_path / "results"
    run_sim(
        'recipe = "ber_awgn_rayleigh"\nseed = 5\n'
        "[link]\nmod_order = 4\nn_seq = 4\nn_freq = 16\ncp_len = 4\n"
        'equalizer = "zf"\nebn0_db = [0, 4, 8]\n'
        "[sweep]\nmin_bits = 10000\nmax_bits = 30000\n",
        out, tmp_path, "ber",
    )
    run_sim('recipe = "spectral_efficiency"\nseed = 5\n', out, tmp_path, "eff")
    run_sim('recipe = "complexity"\nseed = 5\n', out, tmp_path, "cx")
    run_sim('recipe = "latency"\nseed = 5\n[link]\noptimize = true\n'
            '[channel]\nkind = "freq_selective"\nn_taps = 4\n', out, tmp_path, "lat")
    run_sim(
        'recipe = "ml_ablation"\nseed = 5\n'
        "[link]\nmod_order = 4\nn_seq = 8\nn_freq = 16\ncp_len = 4\n"
        'equalizer = "zf"\nebn0_db = [6, 10]\n'
        "[channel]\nkind = \"freq_selective\"\nn_taps = 3\n"
        "[sweep]\nmin_bits = 10000\nmax_bits = 20000\n",
        out, tmp_path, "abl",
    )
    return out
