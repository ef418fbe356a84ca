import json
import math

import numpy as np
import pytest

from netmimo.allocation import PolicySpec
from netmimo.cli import (
    ExperimentConfig,
    compute_size_table,
    fig1_desk_config,
    fig1_full_config,
    fig2_desk_config,
    fig2_full_config,
    main,
    parse_policy,
    report_sizes,
    resolve_layout,
    run_experiment,
)
from netmimo.topology import load_layout, place_grid


def _tiny_config(output, **overrides):
    cfg = ExperimentConfig(
        seed=77,
        layout_kind="grid",
        grid_side=2,
        gamma=0.6,
        snr_db=[30.0, 50.0],
        trials=25,
        policies=[PolicySpec("perfect"), PolicySpec("distance")],
        output=str(output),
    )
    for key, val in overrides.items():
        setattr(cfg, key, val)
    return cfg


def test_config_json_round_trip():
    cfg = _tiny_config("out", policies=[PolicySpec("distance", alpha=1.25), PolicySpec("cluster", cluster_size=4)])
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert isinstance(back.policies[0], PolicySpec)


def test_config_validation():
    cfg = _tiny_config("out")
    cfg.validate()
    bad = _tiny_config("out", gamma=1.5)
    with pytest.raises(ValueError):
        bad.validate()
    with pytest.raises(ValueError):
        _tiny_config("out", snr_db=[0.0, 30.0]).validate()
    with pytest.raises(ValueError):
        _tiny_config("out", layout_kind="file").validate()
    with pytest.raises(ValueError):
        _tiny_config("out", policies=[]).validate()


def test_parse_policy_tokens():
    assert parse_policy("perfect") == PolicySpec("perfect")
    assert parse_policy("distance:0.75") == PolicySpec("distance", alpha=0.75)
    assert parse_policy("cluster:9") == PolicySpec("cluster", cluster_size=9)
    assert parse_policy("uniform:conventional") == PolicySpec("uniform", uniform_support="conventional")
    with pytest.raises(ValueError):
        parse_policy("perfect:3")
    with pytest.raises(ValueError):
        parse_policy("nearest")


def test_run_experiment_outputs(tmp_path):
    cfg = _tiny_config(tmp_path / "out")
    run_experiment(cfg)
    csv_lines = (tmp_path / "out" / "rates.csv").read_text().splitlines()
    assert csv_lines[0] == "policy,alpha,snr_db,user,mean_rate_bits,stderr,trials,rejections"
    # 2 policies x 2 SNR points x (4 users + avg)
    assert len(csv_lines) == 1 + 2 * 2 * 5
    perfect_rows = [l for l in csv_lines[1:] if l.startswith("perfect,")]
    users = [row.split(",")[3] for row in perfect_rows]
    assert users == ["1", "2", "3", "4", "avg"] * 2
    for row in csv_lines[1:]:
        fields = row.split(",")
        assert len(fields) == 8
        float(fields[4])  # mean parses
        assert int(fields[6]) == 25
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["config"]["seed"] == 77
    assert meta["cooperation_radius"] == pytest.approx(2.5)
    # sweep shorter than fit_points still records a slope, fit over what exists
    assert set(meta["dof"]) == {"perfect", "distance(alpha=1)"}
    for entry in meta["dof"].values():
        assert np.isfinite(entry["slope"])
        assert len(entry["fit_snr_db"]) == 2
    layout = load_layout(tmp_path / "out" / "layout.txt")
    np.testing.assert_array_equal(layout.positions, place_grid(2).positions)


def test_rerun_byte_identical(tmp_path):
    a = _tiny_config(tmp_path / "a")
    b = _tiny_config(tmp_path / "b")
    run_experiment(a)
    run_experiment(b, workers=3)
    assert (tmp_path / "a" / "rates.csv").read_bytes() == (tmp_path / "b" / "rates.csv").read_bytes()


def test_main_run_and_from_metadata(tmp_path):
    out1 = tmp_path / "r1"
    rc = main(
        [
            "run", "--grid-side", "2", "--gamma", "0.6", "--policies", "perfect", "distance",
            "--snr-db", "30", "50", "--trials", "20", "--seed", "3", "--output", str(out1),
        ]
    )
    assert rc == 0
    out2 = tmp_path / "r2"
    rc = main(["run", "--from-metadata", str(out1 / "metadata.json"), "--output", str(out2)])
    assert rc == 0
    assert (out1 / "rates.csv").read_bytes() == (out2 / "rates.csv").read_bytes()


def test_main_save_config(tmp_path):
    path = tmp_path / "cfg.json"
    rc = main(
        [
            "run", "--grid-side", "2", "--policies", "uniform", "--trials", "5",
            "--save-config", str(path),
        ]
    )
    assert rc == 0
    cfg = ExperimentConfig.from_json(path.read_text())
    cfg.validate()
    assert cfg.policies == [PolicySpec("uniform")]
    assert not (tmp_path / "netmimo-out").exists()


def test_main_rejection_exit_code(tmp_path):
    cfg = _tiny_config(tmp_path / "out", cond_threshold=1.0, trials=10)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    rc = main(["run", "--config", str(cfg_path)])
    assert rc == 2
    assert not (tmp_path / "out" / "rates.csv").exists()


def test_size_table_contents():
    layout = place_grid(2)
    rows = compute_size_table(
        layout, 0.6,
        [PolicySpec("perfect"), PolicySpec("distance", alpha=0.75), PolicySpec("distance", alpha=1.25)],
        [50.0],
    )
    policies = [r["policy"] for r in rows]
    assert policies[0] == "conventional"
    assert "perfect" not in policies
    conv = rows[0]
    assert conv["ratio_to_conventional"] == pytest.approx(1.0)
    by_alpha = {r["alpha"]: r["total_bits"] for r in rows if r["policy"] == "distance"}
    assert by_alpha[0.75] > by_alpha[1.25]


def test_size_table_single_node_ratio_one():
    cfg = ExperimentConfig(
        layout_kind="grid", grid_side=1, gamma=0.6, snr_db=[40.0],
        policies=[PolicySpec("distance")], trials=1,
    )
    rows = report_sizes(cfg)
    dist_row = [r for r in rows if r["policy"] == "distance"][0]
    assert dist_row["ratio_to_conventional"] == pytest.approx(1.0)
    assert dist_row["prelog_asymptotic"] == pytest.approx(1.0)
    # finite-P prelog carries the ceiling: ceil(log2 1e4) / log2 1e4
    assert dist_row["prelog"] == pytest.approx(14.0 / math.log2(1e4))


def test_main_sizes_and_export(tmp_path, capsys):
    table = tmp_path / "sizes.csv"
    rc = main(
        [
            "sizes", "--grid-side", "2", "--gamma", "0.6",
            "--policies", "distance", "uniform", "--snr-db", "40", "60",
            "--output", str(table), "--export-bits", str(tmp_path / "bits"),
        ]
    )
    assert rc == 0
    lines = table.read_text().splitlines()
    assert lines[0].startswith("policy,alpha,snr_db,total_bits")
    assert len(lines) == 1 + 2 * 3  # conventional + 2 policies, 2 SNR points
    dumps = list((tmp_path / "bits").glob("*.csv"))
    assert len(dumps) == 4
    body = dumps[0].read_text().splitlines()
    assert body[0] == "j,k,i,bits"
    assert len(body) == 1 + 4**3  # grid side 2 means four nodes


def test_main_layout_emit_and_show(tmp_path, capsys):
    path = tmp_path / "nodes.txt"
    assert main(["layout", "--random-k", "5", "--random-side", "3", "--seed", "4", "--out", str(path)]) == 0
    layout = load_layout(path)
    assert layout.K == 5
    assert np.all(layout.positions >= 0.0) and np.all(layout.positions <= 3.0)
    assert main(["layout", "--show", str(path)]) == 0
    out = capsys.readouterr().out
    assert "nodes: 5" in out
    assert main(["layout", "--grid-side", "2"]) == 2  # missing --out


def test_main_verify_exit_zero(tmp_path, capsys):
    table = tmp_path / "verify.csv"
    rc = main(["verify", "--trials", "150", "--output", str(table)])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7
    lines = table.read_text().splitlines()
    assert lines[0] == "check,measured,bound,passed"
    assert len(lines) == 8


def test_dump_channel_flag(tmp_path):
    out = tmp_path / "out"
    dump = tmp_path / "chan.csv"
    cfg = _tiny_config(out, trials=5)
    run_experiment(cfg, dump_channel=str(dump))
    lines = dump.read_text().splitlines()
    assert lines[0] == "rx,tx,re,im"
    assert len(lines) == 1 + 16


def test_presets_are_valid():
    for factory, kind, k_or_side in (
        (fig1_desk_config, "grid", 4),
        (fig1_full_config, "grid", 6),
        (fig2_desk_config, "random", 8),
        (fig2_full_config, "random", 15),
    ):
        cfg = factory()
        cfg.validate()
        if kind == "grid":
            assert cfg.layout_kind == "grid" and cfg.grid_side == k_or_side
        else:
            assert cfg.layout_kind == "random" and cfg.random_k == k_or_side
        assert resolve_layout(cfg).K in (k_or_side**2, k_or_side)
    kinds = [s.kind for s in fig1_desk_config().policies]
    assert kinds == ["perfect", "distance", "uniform", "cluster"]
    alphas = [s.alpha for s in fig2_desk_config().policies if s.kind == "distance"]
    assert alphas == [0.75, 1.0, 1.25]


def test_preset_subcommand_runs(tmp_path):
    out = tmp_path / "f1"
    rc = main(["fig1-desk", "--trials", "8", "--output", str(out), "--workers", "2"])
    assert rc == 0
    lines = (out / "rates.csv").read_text().splitlines()
    # 4 policies x 8 SNR points x (16 users + avg)
    assert len(lines) == 1 + 4 * 8 * 17
    meta = json.loads((out / "metadata.json").read_text())
    assert len(meta["sizes"]) > 0
    assert "dof" in meta
