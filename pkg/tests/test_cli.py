import json

import pytest

from hetmoe import analytics, tasks
from hetmoe.cli import main
from hetmoe.errors import UsageError
from hetmoe.presets import (PRESETS, config_to_ini, default_config,
                            load_config_file, resolve_config)


# ---------------------------------------------------------------------------
# preset resolution, pinned against the cited constants


def test_default_config_is_desk_scale():
    cfg = default_config()
    assert cfg["encoder"]["d_embed"] == 32
    assert cfg["experts"]["d_proj"] == 16
    assert cfg["experts"]["d_hid"] == 8
    assert cfg["trainer"]["learning_rate"] == 1e-3
    assert cfg["trainer"]["epochs"] == 15
    assert cfg["gate"]["tau"] == 1.5
    assert cfg["loss"]["lambda_ent"] == 0.05
    assert cfg["loss"]["lambda_div"] == 0.08


def test_reference_preset_resolves_full_scale_constants():
    cfg = resolve_config(preset="reference")
    assert cfg["loss"]["lambda_ent"] == 0.05
    assert cfg["loss"]["lambda_div"] == 0.08
    assert cfg["gate"]["tau"] == 1.5
    assert cfg["trainer"]["batch_size"] == 16
    assert cfg["trainer"]["epochs"] == 5
    assert cfg["trainer"]["learning_rate"] == 2e-5
    assert cfg["encoder"]["d_embed"] == 768
    assert cfg["experts"]["d_proj"] == 256
    assert cfg["experts"]["d_hid"] == 128
    assert cfg["gate"]["d_hidden"] == 128
    assert len(cfg["trainer"]["seeds"]) == 3


def test_no_reg_preset_zeroes_both_weights():
    cfg = resolve_config(preset="no-reg")
    assert cfg["loss"]["lambda_ent"] == 0.0
    assert cfg["loss"]["lambda_div"] == 0.0


def test_ablation_presets_resolve_their_single_change():
    assert resolve_config(preset="frozen")["encoder"]["frozen"] is True
    assert resolve_config(preset="top2")["gate"]["policy"] == "top2"
    assert resolve_config(preset="soft-routing")["gate"]["policy"] == "soft"
    assert resolve_config(preset="gate-mean")["gate"]["input_mode"] == "mean_pool"
    assert resolve_config(preset="batch-64")["trainer"]["batch_size"] == 64
    assert resolve_config(preset="experts-1")["experts"]["pool"] == ["gru"]
    assert resolve_config(preset="experts-2")["experts"]["pool"] == ["ffnn", "gru"]
    assert resolve_config(preset="experts-4")["experts"]["pool"] == \
        ["ffnn", "ffnn", "gru", "gru"]
    assert resolve_config(preset="ffnn-tcn")["experts"]["pool"] == ["ffnn", "tcn"]
    assert resolve_config(preset="regressor")["task"]["mode"] == "regression"


def test_every_preset_resolves():
    for name in PRESETS:
        cfg = resolve_config(preset=name)
        assert set(cfg) == set(default_config())


def test_override_beats_preset():
    cfg = resolve_config(preset="reference", overrides=["trainer.epochs=9"])
    assert cfg["trainer"]["epochs"] == 9


def test_unknown_preset_and_bad_overrides():
    with pytest.raises(UsageError):
        resolve_config(preset="nope")
    with pytest.raises(UsageError):
        resolve_config(overrides=["trainer.epochs"])
    with pytest.raises(UsageError):
        resolve_config(overrides=["trainer.nope=1"])
    with pytest.raises(UsageError):
        resolve_config(overrides=["trainer.epochs=abc"])


def test_config_ini_round_trip(tmp_path):
    cfg = resolve_config(preset="reference", overrides=["trainer.seeds=4,5"])
    path = tmp_path / "config.ini"
    path.write_text(config_to_ini(cfg))
    loaded = resolve_config(config_path=str(path))
    assert loaded == cfg


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[trainer]\nwhatever = 3\n")
    with pytest.raises(UsageError):
        load_config_file(str(path))


# ---------------------------------------------------------------------------
# subcommands


def test_gen_data_writes_requested_lines(tmp_path, capsys):
    out = tmp_path / "static.jsonl"
    code = main(["gen-data", "--task", "static", "--n", "100",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    assert len(out.read_text().strip().splitlines()) == 100


def test_gen_data_same_seed_identical_files(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    main(["gen-data", "--task", "mixed", "--n", "50", "--seed", "9", "--out", str(a)])
    main(["gen-data", "--task", "mixed", "--n", "50", "--seed", "9", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_invalid_task_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--task", "nope", "--n", "10",
              "--out", str(tmp_path / "x.jsonl")])
    assert exc.value.code == 2


def run_desk_train(tmp_path, out_name="run", extra=()):
    data_path = tmp_path / "mixed.jsonl"
    if not data_path.exists():
        tasks.save_jsonl(tasks.gen_mixed(120, 0.5, seed=0), data_path)
    out_dir = tmp_path / out_name
    args = ["train", "--preset", "desk", "--dataset", str(data_path),
            "--out", str(out_dir), "--seed", "1",
            "trainer.epochs=2", "trainer.batch_size=16"]
    args.extend(extra)
    code = main(args)
    return code, out_dir


def test_train_writes_reports_checkpoint_and_echo(tmp_path, capsys):
    code, out_dir = run_desk_train(tmp_path)
    assert code == 0
    assert (out_dir / "config.ini").is_file()
    assert (out_dir / "summary.json").is_file()
    seed_dir = out_dir / "seed_1"
    for name in ("report.json", "report.csv", "checkpoint.npz",
                 "classwise_e0.csv", "classwise_e1.csv"):
        assert (seed_dir / name).is_file()
    report = json.loads((seed_dir / "report.json").read_text())
    assert report["seed"] == 1
    assert len(report["epochs"]) == 2


def test_rerun_from_config_echo_reproduces_numeric_report(tmp_path, capsys):
    code, out_dir = run_desk_train(tmp_path, "run1")
    data_path = tmp_path / "mixed.jsonl"
    rerun_dir = tmp_path / "run2"
    code2 = main(["train", "--config", str(out_dir / "config.ini"),
                  "--dataset", str(data_path), "--out", str(rerun_dir)])
    assert code2 == 0
    r1 = json.loads((out_dir / "seed_1" / "report.json").read_text())
    r2 = json.loads((rerun_dir / "seed_1" / "report.json").read_text())
    assert json.dumps(analytics.strip_timing(r1), sort_keys=True) == \
        json.dumps(analytics.strip_timing(r2), sort_keys=True)


def test_train_echo_records_override_wins(tmp_path, capsys):
    code, out_dir = run_desk_train(tmp_path, "run_echo")
    echo = (out_dir / "config.ini").read_text()
    assert "epochs = 2" in echo


def test_train_without_preset_or_config_is_usage_error(tmp_path, capsys):
    code = main(["train", "--dataset", "none.jsonl", "--out", str(tmp_path / "o")])
    assert code == 2


def test_train_unknown_override_is_usage_error(tmp_path, capsys):
    data_path = tmp_path / "d.jsonl"
    tasks.save_jsonl(tasks.gen_static(20, seed=1), data_path)
    code = main(["train", "--preset", "desk", "--dataset", str(data_path),
                 "--out", str(tmp_path / "o"), "bogus.key=1"])
    assert code == 2


def test_train_missing_dataset_is_runtime_error(tmp_path, capsys):
    code = main(["train", "--preset", "desk", "--dataset",
                 str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "o")])
    assert code == 1


def test_eval_checkpoint_round_trip(tmp_path, capsys):
    code, out_dir = run_desk_train(tmp_path, "run_eval")
    data_path = tmp_path / "mixed.jsonl"
    capsys.readouterr()
    code = main(["eval", "--model", str(out_dir / "seed_1" / "checkpoint.npz"),
                 "--dataset", str(data_path)])
    assert code == 0
    stats = json.loads(capsys.readouterr().out)
    assert set(stats) >= {"metrics", "usage_hard_pct", "usage_soft_pct",
                          "gate_entropy_nats", "gate_entropy_bits"}
    assert stats["num_samples"] == 120


def test_eval_missing_checkpoint_is_runtime_error(tmp_path, capsys):
    code = main(["eval", "--model", str(tmp_path / "none.npz"),
                 "--dataset", str(tmp_path / "none.jsonl")])
    assert code == 1


def test_eval_on_empty_dataset_is_runtime_error(tmp_path, capsys):
    code, out_dir = run_desk_train(tmp_path, "run_empty")
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code = main(["eval", "--model", str(out_dir / "seed_1" / "checkpoint.npz"),
                 "--dataset", str(empty)])
    assert code == 1


def test_report_aggregates_seed_runs(tmp_path, capsys):
    data_path = tmp_path / "mixed.jsonl"
    tasks.save_jsonl(tasks.gen_mixed(120, 0.5, seed=0), data_path)
    out_dir = tmp_path / "multi"
    code = main(["train", "--preset", "desk", "--dataset", str(data_path),
                 "--out", str(out_dir), "--seed", "1,2",
                 "trainer.epochs=2"])
    assert code == 0
    capsys.readouterr()
    code = main(["report", "--run", str(out_dir)])
    assert code == 0
    table = (out_dir / "table.csv").read_text().splitlines()
    assert table[0] == "model,accuracy_f1,usage,entropy_bits,time_ms"
    assert table[1].startswith("ffnn+gru,")
    assert "+/-" in table[1]  # seed mean with spread
    assert (out_dir / "classwise_mean_e0.csv").is_file()
    assert (out_dir / "classwise_mean_e1.csv").is_file()
    header = (out_dir / "classwise_mean_e0.csv").read_text().splitlines()[0]
    assert header == "epoch,static,temporal"


def test_report_missing_run_dir_is_runtime_error(tmp_path, capsys):
    assert main(["report", "--run", str(tmp_path / "nope")]) == 1


def test_summary_contains_mean_and_spread(tmp_path, capsys):
    data_path = tmp_path / "mixed.jsonl"
    tasks.save_jsonl(tasks.gen_mixed(120, 0.5, seed=0), data_path)
    out_dir = tmp_path / "spread"
    main(["train", "--preset", "desk", "--dataset", str(data_path),
          "--out", str(out_dir), "--seed", "1,2", "trainer.epochs=1"])
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["num_seeds"] == 2
    assert summary["seeds"] == [1, 2]
    assert {"mean", "std"} <= set(summary["final"]["accuracy"])
