"""End-to-end command-line pipeline tests on a small three-city dataset."""

import json

import numpy as np
import pytest

from gravtsir.calibrate import CHAIN_COLUMNS
from gravtsir.cli import main
from gravtsir.emulator import DistanceEmulator
from gravtsir.errors import NumericalError
from gravtsir.io import (load_panel, read_chain, read_panel, read_summary,
                         read_training)
from gravtsir.summaries import summarize_panel

BASE_CONFIG = {
    "seed": "5",
    "statistic": "zero_proportion",
    "cases": "cases.csv",
    "cities": "cities.csv",
    "s0": "0.9",
    "beta": "1.3,1.15,1.0,0.9,1.05",
    "theta_prime": "0.8",
    "tau1": "1.0",
    "tau2": "1.0",
    "rho": "1.0",
    "grid_theta_prime": "3",
    "grid_rho": "2",
    "pin_tau1": "1.0",
    "pin_tau2": "1.0",
    "replicates": "1",
    "n_starts": "2",
    "chain_length": "5000",
    "burn_in": "0",
    "gamma": "0.9",
    "flux_thin": "100",
    "flux_bins": "4",
}


def _dataset(root):
    rng = np.random.default_rng(3)
    lines = ["city_id,biweek_index,cases"]
    for cid in ("ayr", "bex", "cul"):
        for t in range(1, 9):
            lines.append(f"{cid},{t},{rng.integers(0, 9)}")
    (root / "cases.csv").write_text("\n".join(lines) + "\n")
    (root / "cities.csv").write_text("\n".join([
        "city_id,name,x_km,y_km,population,births_per_biweek",
        "ayr,Ayr,0.0,0.0,80000,64",
        "bex,Bexley,10.0,0.0,50000,40",
        "cul,Cullen,10.0,15.0,60000,48",
    ]) + "\n")
    (root / "mask.csv").write_text("\n".join(
        ["biweek_index,label", "1,holiday", "2,term", "3,term",
         "4,holiday", "5,term", "6,term", "7,term", "8,holiday"]) + "\n")


def _config(root, name="run.cfg", **overrides):
    settings = {**BASE_CONFIG, **overrides}
    text = "".join(f"{k} = {v}\n" for k, v in settings.items()
                   if v is not None)
    path = root / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Shared dataset with the design and fit stages already run."""
    root = tmp_path_factory.mktemp("cli")
    _dataset(root)
    cfg = _config(root)
    assert main(["design", "--config", str(cfg),
                 "--out", str(root / "training.csv")]) == 0
    assert main(["fit", "--config", str(cfg),
                 "--training", str(root / "training.csv"),
                 "--out", str(root / "emulator.json")]) == 0
    return root


def test_simulate_panel_and_manifest(tmp_path):
    _dataset(tmp_path)
    cfg = _config(tmp_path)
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    panel = read_panel(out)
    observed, _, _ = load_panel(tmp_path / "cases.csv",
                                tmp_path / "cities.csv")
    assert panel.city_ids == ("ayr", "bex", "cul")
    assert panel.cases.shape == observed.cases.shape
    assert np.array_equal(panel.cases[:, 0], observed.cases[:, 0])
    manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 5
    assert set(manifest["inputs"]) == {"run.cfg", "cases.csv", "cities.csv"}
    assert manifest["outputs"] == [out.name]


def test_simulate_rerun_is_byte_identical(tmp_path):
    _dataset(tmp_path)
    cfg = _config(tmp_path)
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    first = out.read_bytes()
    first_manifest = (tmp_path / "sim.csv.manifest.json").read_bytes()
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_bytes() == first
    assert (tmp_path / "sim.csv.manifest.json").read_bytes() == first_manifest
    assert main(["simulate", "--config", str(cfg), "--seed", "6",
                 "--out", str(out)]) == 0
    assert out.read_bytes() != first


def test_summarize_observed_and_explicit_panel(tmp_path):
    _dataset(tmp_path)
    cfg = _config(tmp_path)
    out = tmp_path / "obs_summary.csv"
    assert main(["summarize", "--config", str(cfg), "--out", str(out)]) == 0
    observed, _, _ = load_panel(tmp_path / "cases.csv",
                                tmp_path / "cities.csv")
    expected = summarize_panel(observed, "zero_proportion")
    loaded = read_summary(out)
    assert loaded.kind == "zero_proportion"
    assert np.array_equal(loaded.values, expected.values)
    sim = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(sim)]) == 0
    out2 = tmp_path / "sim_summary.csv"
    assert main(["summarize", "--config", str(cfg), "--panel", str(sim),
                 "--out", str(out2)]) == 0
    sim_panel = read_panel(sim)
    assert np.array_equal(read_summary(out2).values,
                          summarize_panel(sim_panel, "zero_proportion").values)


def test_design_and_fit_artifacts(pipeline):
    training = read_training(pipeline / "training.csv")
    assert training.points.shape == (6, 4)  # 3 x 2 grid, taus pinned
    assert np.array_equal(np.unique(training.points[:, 1]), [1.0])
    assert training.replicates == 1 and training.root_seed == 5
    assert np.all(training.distances >= 0.0)
    emulator = DistanceEmulator.load(pipeline / "emulator.json")
    mean, var = emulator.predict(training.points)
    assert mean.shape == (6,) and np.all(var >= 0.0)
    manifest = json.loads(
        (pipeline / "training.csv.manifest.json").read_text())
    assert manifest["command"] == "design"
    assert json.loads(
        (pipeline / "emulator.json.manifest.json").read_text(
        ))["inputs"].keys() >= {"run.cfg", "training.csv"}


def test_calibrate_writes_chain_and_region(pipeline):
    cfg = pipeline / "run.cfg"
    out = pipeline / "chain.csv"
    assert main(["calibrate", "--config", str(cfg),
                 "--emulator", str(pipeline / "emulator.json"),
                 "--out", str(out)]) == 0
    chain, emulator_hash = read_chain(out)
    assert len(chain) == 5000
    assert chain.pinned == {"tau1": 1.0, "tau2": 1.0}
    assert emulator_hash == DistanceEmulator.load(
        pipeline / "emulator.json").training_hash()
    region_path = pipeline / "chain_region.csv"
    assert region_path.exists()
    text = region_path.read_text().splitlines()
    assert text[0] == "# names theta_prime,rho"
    assert "polyline,theta_prime,rho" in text
    manifest = json.loads((pipeline / "chain.csv.manifest.json").read_text())
    assert manifest["outputs"] == [out.name, region_path.name]


def test_calibrate_skips_region_for_short_chain(pipeline, capsys):
    cfg = _config(pipeline, name="short.cfg", chain_length="600")
    out = pipeline / "short_chain.csv"
    assert main(["calibrate", "--config", str(cfg),
                 "--emulator", str(pipeline / "emulator.json"),
                 "--out", str(out)]) == 0
    assert not (pipeline / "short_chain_region.csv").exists()
    assert "skipping credible region" in capsys.readouterr().err
    chain, _ = read_chain(out)
    assert len(chain) == 600


def test_calibrate_skips_region_for_pinned_axis(pipeline, capsys):
    cfg = _config(pipeline, name="pinned.cfg", grid_rho=None,
                  pin_rho="1.0")
    out = pipeline / "pinned_chain.csv"
    assert main(["calibrate", "--config", str(cfg),
                 "--emulator", str(pipeline / "emulator.json"),
                 "--out", str(out)]) == 0
    assert not (pipeline / "pinned_chain_region.csv").exists()
    assert "skipping credible region" in capsys.readouterr().err
    chain, _ = read_chain(out)
    assert len(chain) == 5000
    assert np.ptp(chain.column("rho")) == 0.0


def test_flux_summary_edges_histogram_and_mask(pipeline):
    cfg = _config(pipeline, name="flux.cfg", mask="mask.csv")
    chain = pipeline / "chain.csv"
    if not chain.exists():
        assert main(["calibrate", "--config", str(pipeline / "run.cfg"),
                     "--emulator", str(pipeline / "emulator.json"),
                     "--out", str(chain)]) == 0
    out = pipeline / "flux.csv"
    edges = pipeline / "edges.csv"
    hist = pipeline / "hist.csv"
    assert main(["flux", "--config", str(cfg), "--chain", str(chain),
                 "--out", str(out), "--edges", str(edges),
                 "--histogram", str(hist)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# gamma 0.9"
    assert lines[1] == "# n_samples 50"  # ceil(5000 / flux_thin)
    assert lines[2].startswith("city,from_median")
    assert len(lines) == 6  # two meta lines + header + three cities
    for label in ("holiday", "term"):
        assert (pipeline / f"flux_{label}.csv").exists()
    edge_rows = edges.read_text().splitlines()
    assert edge_rows[0] == "source_id,target_id,weight"
    assert len(edge_rows) == 7  # all ordered pairs of three cities
    hist_rows = hist.read_text().splitlines()
    assert hist_rows[0] == "bin_lo,bin_hi,count"
    assert len(hist_rows) == 5
    counts = [int(r.split(",")[2]) for r in hist_rows[1:]]
    assert sum(counts) == 3
    manifest = json.loads((pipeline / "flux.csv.manifest.json").read_text())
    assert set(manifest["outputs"]) >= {out.name, edges.name, hist.name}


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["unknown-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--config", "x.cfg"])  # --out missing
    assert exc.value.code == 2


def test_data_errors_exit_three(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg"),
                 "--out", str(tmp_path / "o.csv")]) == 3
    _dataset(tmp_path)
    cfg = _config(tmp_path, extra_key="1")
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "o.csv")]) == 3
    no_gravity = _config(tmp_path, name="ng.cfg", theta_prime=None)
    assert main(["simulate", "--config", str(no_gravity),
                 "--out", str(tmp_path / "o.csv")]) == 3
    no_grid = _config(tmp_path, name="nd.cfg", grid_rho=None)
    assert main(["design", "--config", str(no_grid),
                 "--out", str(tmp_path / "o.csv")]) == 3
    assert main(["fit", "--config", str(_config(tmp_path, name="ft.cfg")),
                 "--training", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "o.csv")]) == 3
    (tmp_path / "cases.csv").write_text(
        "city_id,biweek_index,cases\nayr,1,-3\n")
    assert main(["simulate", "--config", str(_config(tmp_path)),
                 "--out", str(tmp_path / "o.csv")]) == 3
    assert "error:" in capsys.readouterr().err


def test_numerical_errors_exit_four(pipeline, monkeypatch, capsys):
    def explode(*args, **kwargs):
        raise NumericalError("slice interval collapsed")

    monkeypatch.setattr("gravtsir.cli.run_mcmc", explode)
    assert main(["calibrate", "--config", str(pipeline / "run.cfg"),
                 "--emulator", str(pipeline / "emulator.json"),
                 "--out", str(pipeline / "never.csv")]) == 4
    assert "slice interval collapsed" in capsys.readouterr().err


def test_chain_columns_exposed_in_written_chain(pipeline):
    chain_path = pipeline / "chain.csv"
    if not chain_path.exists():
        assert main(["calibrate", "--config", str(pipeline / "run.cfg"),
                     "--emulator", str(pipeline / "emulator.json"),
                     "--out", str(chain_path)]) == 0
    header_line = next(
        line for line in chain_path.read_text().splitlines()
        if not line.startswith("#"))
    assert header_line.split(",") == ["iteration", *CHAIN_COLUMNS]
