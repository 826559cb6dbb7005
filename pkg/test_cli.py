"""
Tests for run configs, the raster export and the command-line entry point.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from cli.raster import rasterize
from cli.run_config import ALL_CENTERS, config_from_dict, load_run_config, parse_centers
from analytic.convergence import DEFAULT_EDGE, DEFAULT_H_VALUES
from errors import ConfigError
from main import main
from measurements.frame_io import read_csv_table, read_frame

FIXTURES = Path(__file__).parent / "fixtures"

RUN_CONFIG = {
    "boundary": {"kind": "circle", "radius": 1.0},
    "layers": {"fat_depth": 0.15},
    "conductivities": {"fat": 1.0 / 15.0, "muscle": 1.0 / 3.0},
    "electrodes": {"count": 16, "half_width": 0.05, "contact_impedance": 0.1},
    "mesh": {"u_edge": 0.025, "v_edge": 0.03, "u_interior": 0.1, "v_interior": 0.12},
    "centers": [1, 5],
    "v_model": "pem",
}


def _write_config(directory: Path, name: str = "run.json", **changes) -> Path:
    data = json.loads(json.dumps(RUN_CONFIG))
    for section, values in changes.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values
    path = directory / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def _error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    return {"config": _write_config(root), "out": root / "out", "root": root}


@pytest.fixture(scope="module")
def simulated(workspace):
    code = main(["simulate", "--config", str(workspace["config"]), "--out", str(workspace["out"])])
    assert code == 0
    return workspace


@pytest.fixture(scope="module")
def reconstructed(simulated):
    code = main(["reconstruct", "--config", str(simulated["config"]), "--out", str(simulated["out"]),
                 "--raster", "--figures"])
    assert code == 0
    return simulated


def test_simulate_writes_frames(simulated):
    out = simulated["out"]
    for name in ("frame_n1.csv", "frame_n1.json", "frame_n5.csv", "frame_n5.json", "mesh_u.json", "mesh_v.json"):
        assert (out / name).exists()
    frame = read_frame(out / "frame_n5.csv")
    assert len(frame.table) == 211
    assert (frame.combinatorial_count, frame.filtered_count) == (266, 210)
    assert frame.reference["k_plus"] == 5
    assert frame.provenance["n_electrodes"] == 16


def test_simulate_is_reproducible(simulated):
    again = simulated["root"] / "again"
    assert main(["simulate", "--config", str(simulated["config"]), "--out", str(again)]) == 0
    for name in ("frame_n1.csv", "frame_n5.csv"):
        assert (again / name).read_bytes() == (simulated["out"] / name).read_bytes()


def test_noisy_simulation_is_seeded(simulated):
    runs = []
    for label in ("a", "b"):
        out = simulated["root"] / f"noisy_{label}"
        code = main(["simulate", "--config", str(simulated["config"]), "--out", str(out),
                     "--snr-db", "15", "--seed", "7", "--centers", "1"])
        assert code == 0
        runs.append((out / "frame_n1.csv").read_bytes())
    assert runs[0] == runs[1]
    assert runs[0] != (simulated["out"] / "frame_n1.csv").read_bytes()


def test_noisy_frames_are_reconstructed_with_their_noise_level(simulated):
    out = simulated["root"] / "noisy_recon"
    args = ["--config", str(simulated["config"]), "--out", str(out), "--centers", "1"]
    assert main(["simulate", *args, "--snr-db", "15", "--seed", "7"]) == 0
    assert main(["reconstruct", *args]) == 0
    frame = read_frame(out / "frame_n1.csv")
    summary = json.loads((out / "reconstruct_summary.json").read_text(encoding="utf-8"))
    center = summary["centers"][0]
    assert center["noise_sigma"] == pytest.approx(frame.provenance["noise"]["sigma"])
    assert center["alpha"] > 0


def test_reconstruct_writes_images(reconstructed):
    out = reconstructed["out"]
    for name in ("image_n1.csv", "image_n5.csv", "system_n1.npz", "system_n5.npz", "merged.csv",
                 "border.csv", "merged.pgm", "merged.png", "reconstruct_summary.json"):
        assert (out / name).exists()
    assert (out / "merged.pgm").read_bytes().startswith(b"P5\n")
    merged = read_csv_table(out / "merged.csv")
    assert list(merged.columns) == ["element_id", "gamma", "coverage_count"]
    covered = merged["coverage_count"] > 0
    assert merged.loc[covered, "gamma"].notna().all()
    assert merged.loc[~covered, "gamma"].isna().all()
    summary = json.loads((out / "reconstruct_summary.json").read_text(encoding="utf-8"))
    assert [c["n"] for c in summary["centers"]] == [1, 5]
    assert all(c["rows"] == 210 for c in summary["centers"])
    assert all(c["noise_sigma"] is None for c in summary["centers"])
    assert 0.0 <= summary["border"]["resolved_fraction"] <= 1.0


def test_diagnostics_writes_maps(reconstructed):
    out = reconstructed["out"]
    code = main(["diagnostics", "--config", str(reconstructed["config"]), "--out", str(out),
                 "--system", str(out / "system_n1.npz")])
    assert code == 0
    table = read_csv_table(out / "correlation_n1.csv")
    assert list(table.columns) == ["i", "j", "c"]
    decay = read_csv_table(out / "decay_n1.csv")
    assert (decay["count"] > 0).all()
    summary = json.loads((out / "diagnostics_n1.json").read_text(encoding="utf-8"))
    assert set(summary["reference_elements"]) == {"near_boundary", "mid", "deep"}
    assert summary["high_correlation_components"]["near_boundary"] == 1
    assert summary["adjacent_pairs"] > 0
    assert 0.0 <= summary["adjacent_high_fraction"] <= 1.0


def test_missing_config_exits_2(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 2
    assert _error(capsys)["kind"] == "config"


def test_bad_centers_exit_2(tmp_path, capsys):
    config = _write_config(tmp_path)
    code = main(["simulate", "--config", str(config), "--out", str(tmp_path / "out"), "--centers", "0,3"])
    assert code == 2
    assert _error(capsys)["kind"] == "config"


def test_noise_without_seed_exits_2(tmp_path):
    config = _write_config(tmp_path)
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path), "--snr-db", "15"]) == 2


def test_unresolved_electrodes_exit_4(tmp_path, capsys):
    config = _write_config(tmp_path, electrodes={"half_width": 0.02})
    code = main(["simulate", "--config", str(config), "--out", str(tmp_path / "out")])
    assert code == 4
    assert _error(capsys)["kind"] == "resolution"


def test_missing_frames_exit_5(tmp_path, capsys):
    config = _write_config(tmp_path)
    code = main(["reconstruct", "--config", str(config), "--out", str(tmp_path / "empty")])
    assert code == 5
    assert _error(capsys)["kind"] == "missing-artifact"


def test_missing_system_exits_5(tmp_path):
    config = _write_config(tmp_path)
    code = main(["diagnostics", "--config", str(config), "--out", str(tmp_path),
                 "--system", str(tmp_path / "system_n1.npz")])
    assert code == 5


def test_electrode_count_mismatch_exits_3(simulated, tmp_path, capsys):
    config = _write_config(tmp_path, electrodes={"count": 20})
    code = main(["reconstruct", "--config", str(config), "--out", str(simulated["out"])])
    assert code == 3
    assert _error(capsys)["kind"] == "data-mismatch"


def test_convergence_commands(tmp_path, capsys):
    single = tmp_path / "single.json"
    single.write_text(json.dumps({"convergence": {
        "radius": 1.0, "edge": 0.02, "h_values": [0.08], "R": 0.4, "interior_edge": 0.1,
    }}), encoding="utf-8")
    assert main(["convergence", "--config", str(single), "--out", str(tmp_path / "conv")]) == 0
    report = json.loads((tmp_path / "conv" / "convergence.json").read_text(encoding="utf-8"))
    assert "note" in report
    assert report["exclusion"] == "scaled"
    assert report["r_values"] == [0.4]

    unresolved = tmp_path / "unresolved.json"
    unresolved.write_text(json.dumps({"convergence": {"edge": 0.02, "h_values": [0.01]}}), encoding="utf-8")
    assert main(["convergence", "--config", str(unresolved), "--out", str(tmp_path / "conv2")]) == 4
    assert _error(capsys)["kind"] == "resolution"


def test_config_defaults():
    config = config_from_dict({"boundary": {"kind": "circle", "radius": 0.5}, "mesh": {"u_edge": 0.01}})
    assert config.half_width == pytest.approx(0.02)
    assert config.v_edge == pytest.approx(0.01)
    assert config.electrode_count == 32
    assert config.centers == ALL_CENTERS
    assert config.center_list() == list(range(1, 33))
    config.validate()
    assert config.electrodes().count == 32


def test_config_validation():
    base = {"boundary": {"kind": "circle", "radius": 1.0}, "mesh": {"u_edge": 0.01}}
    with pytest.raises(ConfigError):
        config_from_dict({"mesh": {"u_edge": 0.01}})
    with pytest.raises(ConfigError):
        config_from_dict({**base, "noise": {"snr_db": 15.0}}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({**base, "v_model": "gap"}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"boundary": {"kind": "circle", "radius": 1.0}}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"boundary": {"kind": "star"}})


def test_parse_centers():
    assert parse_centers("1,5,9") == (1, 5, 9)
    assert parse_centers(" ALL ") == ALL_CENTERS
    assert parse_centers([2, 3]) == (2, 3)
    assert parse_centers(None) is None
    with pytest.raises(ConfigError):
        parse_centers("one,two")


@pytest.mark.parametrize("name", ["disk_homogeneous.json", "abdomen_two_layer.json"])
def test_shipped_run_configs_validate(name):
    config = load_run_config(FIXTURES / name)
    config.validate()
    assert config.source.endswith(name)


def test_shipped_convergence_config_loads():
    config = load_run_config(FIXTURES / "convergence.json")
    assert config.convergence["h_values"] == list(DEFAULT_H_VALUES)
    assert config.convergence["edge"] == DEFAULT_EDGE
    assert config.convergence["exclusion"] == "scaled"


def test_raster_marks_outside_pixels(disk_mesh):
    grid = rasterize(disk_mesh, np.full(disk_mesh.n_triangles, 2.0), pixels=64)
    assert grid.shape == (64, 64)
    assert np.isnan(grid[0, 0]) and np.isnan(grid[-1, -1])
    assert grid[32, 32] == 2.0
    assert np.isfinite(grid).mean() == pytest.approx(np.pi / 4, abs=0.03)
