import json

import numpy as np
import pytest

from bregbayes.cli import main
from bregbayes.config import load_config, parse_config_text
from bregbayes.grids import load_signal_csv
from bregbayes.sampling import load_chain

TINY_DEBLUR = """
[scenario]
name = deblur2d
seed = 3

[grid]
shape = 16 16
truth_factor = 2

[noise]
fraction = 0.05

[prior]
lambda = 2.0

[solver]
max_iters = 300
tol_residual = 1e-3

[sampler]
samples = 40
chains = 2

[deblur2d]
spots = 2
kernel_sigma = 0.05
spot_radius_range = 0.08 0.12
"""

TINY_TV = """
[scenario]
name = tv1d
seed = 9

[grid]
shape = 15
truth_factor = 4

[prior]
lambda = 2.0
rule_constant = 0.25

[solver]
max_iters = 600
tol_residual = 1e-3

[sampler]
samples = 40
chains = 2

[tv1d]
data_size = 8
sweep = 15 31
"""


def _write(tmp_path, text, name="config.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- config parsing --------------------------------------------------------------


def test_config_defaults_and_overrides():
    cfg = parse_config_text(TINY_DEBLUR)
    assert cfg.name == "deblur2d"
    assert cfg.recon_shape == (16, 16)
    assert cfg.lam == 2.0
    assert cfg.spots == 2
    assert cfg.spot_radius_range == (0.08, 0.12)
    assert cfg.n_chains == 2
    # scenario defaults fill untouched fields
    assert cfg.prior_kind == "l1"
    assert cfg.lambda_rule == "fixed"


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        parse_config_text(TINY_DEBLUR + "\nnot_a_key = 3\n")
    with pytest.raises(ValueError):
        parse_config_text("[bogus]\nx = 1\n[scenario]\nname = tv1d\n")
    with pytest.raises(ValueError):
        parse_config_text("[scenario]\nname = warp\n")


def test_config_hash_is_stable(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    _, h1 = load_config(path)
    _, h2 = load_config(path)
    assert h1 == h2 and len(h1) == 64


def test_ct_config_defaults():
    cfg = parse_config_text("[scenario]\nname = ct2d\n")
    assert cfg.lambda_rule == "s_curve"
    assert cfg.prior_kind == "besov"
    assert cfg.noise_fraction == 0.01
    assert cfg.angles == 15 and cfg.bins == 95


# -- subcommands -------------------------------------------------------------------


def test_cli_scenario(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    out = tmp_path / "out"
    assert main(["scenario", str(path), "--out-dir", str(out)]) == 0
    truth = load_signal_csv(out / "truth_recon.csv")
    data = load_signal_csv(out / "data.csv")
    assert truth.grid.shape == (16, 16)
    assert data.grid.shape == (16, 16)
    assert (out / "truth_fine.pgm").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["config_hash"]) == 64
    names = {a["path"] for a in manifest["artifacts"]}
    assert "data.csv" in names and "noise.txt" in names


def test_cli_estimate_writes_everything(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    out = tmp_path / "out"
    assert main(["estimate", str(path), "--out-dir", str(out)]) == 0
    for stem in ("map", "cm", "truth_recon", "data"):
        assert (out / f"{stem}.csv").exists()
    chain = load_chain(out / "chain_0.bbchain")
    assert chain.dim == 256
    assert len(chain) == 40
    metrics = json.loads((out / "metrics.json").read_text())
    assert "rel_l2_map" in metrics and "rel_l2_cm" in metrics
    trace = (out / "map_trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,energy,residual"
    assert trace[-1].split(",")[2] != ""  # final residual recorded


def test_cli_seed_override_changes_data(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    out1, out2, out3 = (tmp_path / d for d in ("a", "b", "c"))
    main(["scenario", str(path), "--out-dir", str(out1)])
    main(["scenario", str(path), "--out-dir", str(out2)])
    main(["scenario", str(path), "--out-dir", str(out3), "--seed", "77"])
    d1 = load_signal_csv(out1 / "data.csv").values
    d2 = load_signal_csv(out2 / "data.csv").values
    d3 = load_signal_csv(out3 / "data.csv").values
    np.testing.assert_array_equal(d1, d2)
    assert not np.array_equal(d1, d3)


def test_cli_verify_reports(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    out = tmp_path / "out"
    code = main(["verify", str(path), "--out-dir", str(out)])
    report = json.loads((out / "verify_report.json").read_text())
    checks = {entry["check"] for entry in report}
    assert {"bayes_optimality", "map_cm_inequalities", "map_centered_energy",
            "cm_average_optimality"} <= checks
    text = (out / "verify_report.txt").read_text()
    assert "PASS" in text
    assert code in (0, 1)


def test_cli_dilemma(tmp_path):
    path = _write(tmp_path, TINY_TV)
    out = tmp_path / "out"
    assert main(["dilemma", str(path), "--out-dir", str(out)]) == 0
    report = json.loads((out / "dilemma_report.json").read_text())
    assert [entry["rule"] for entry in report] == ["sqrt_n", "fixed"]
    assert [lv["n"] for lv in report[0]["levels"]] == [15, 31]


def test_cli_dilemma_rejects_non_tv(tmp_path):
    path = _write(tmp_path, TINY_DEBLUR)
    assert main(["dilemma", str(path), "--out-dir",
                 str(tmp_path / "o")]) == 2
