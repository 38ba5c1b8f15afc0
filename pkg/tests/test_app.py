import json

from app import SUBCOMMANDS, build_parser, main
from core.report import COLUMNS

FAST = ["--replicas", "300", "--steps", "10", "--workers", "1", "--log-level", "WARNING"]


def test_every_subcommand_is_registered():
    parser = build_parser()
    for name in [*SUBCOMMANDS, "all"]:
        args = parser.parse_args([name, "--p", "0.4"])
        assert args.command == name and args.p == 0.4


def test_writes_csv_and_returns_verdict_code(tmp_path):
    out = tmp_path / "drift.csv"
    code = main(["estimate-drift", *FAST, "--out", str(out)])
    assert code in (0, 2)
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert len(lines) == 3                 # l 与 r 两行


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["estimate-branchrate", *FAST, "--seed", "5", "--out", str(a)])
    main(["estimate-branchrate", *FAST, "--seed", "5", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_json_output_to_stdout(capsys):
    code = main(["verify-duality", "--p", "0.5", "--epsilon", "0.1", "--format", "json", "--log-level", "ERROR"])
    assert code == 0
    records = json.loads(capsys.readouterr().out)
    assert {r["experiment"] for r in records} == {"duality-crossings-l", "duality-crossings-r",
                                                  "duality-branch-mismatch"}


def test_invalid_parameter_returns_one(tmp_path):
    out = tmp_path / "bad.csv"
    assert main(["estimate-drift", "--p", "1.5", "--out", str(out)]) == 1
    assert not out.exists()


def test_usage_errors_return_one():
    assert main(["no-such-command"]) == 1
    assert main(["estimate-drift", "--n", "10", "--epsilon", "0.1"]) == 1
    assert main([]) == 1


def test_lowercase_log_level_is_accepted(monkeypatch, tmp_path):
    monkeypatch.setenv("DRAINET_LOG_LEVEL", "warning")
    out = tmp_path / "rate.csv"
    assert main(["estimate-branchrate", "--replicas", "200", "--steps", "5", "--workers", "1",
                 "--out", str(out)]) in (0, 2)
    assert out.exists()
    assert main(["estimate-branchrate", "--replicas", "200", "--steps", "5", "--workers", "1",
                 "--log-level", "error", "--out", str(out)]) in (0, 2)


def test_invalid_log_level_env_returns_one(monkeypatch):
    monkeypatch.setenv("DRAINET_LOG_LEVEL", "verbose")
    assert main(["estimate-branchrate", *FAST[:6]]) == 1


def test_unwritable_output_returns_one(tmp_path):
    out = tmp_path / "missing-dir" / "drift.csv"
    assert main(["estimate-drift", *FAST, "--out", str(out)]) == 1
    assert not out.exists()


def test_simulate_path_runs_end_to_end(tmp_path):
    """标量路径接口：l/r 路径、Hausdorff 距离与对偶路径都能算出"""
    out = tmp_path / "path.csv"
    assert main(["simulate-path", "--n", "6", "--seed", "5", "--log-level", "ERROR", "--out", str(out)]) == 0
    names = [line.split(",")[0] for line in out.read_text(encoding="utf-8").splitlines()[1:]]
    assert names.count("simulate-path") == 2
    assert "simulate-path-hausdorff" in names


def test_survival_defaults_to_scale_one_hundred(capsys):
    main(["survival", "--replicas", "50", "--t", "0.01", "--workers", "1", "--log-level", "ERROR"])
    header, row = capsys.readouterr().out.splitlines()[:2]
    values = dict(zip(header.split(","), row.split(",")))
    assert values["n"] == "100"
    main(["survival", "--n", "20", "--replicas", "50", "--t", "0.01", "--workers", "1", "--log-level", "ERROR"])
    header, row = capsys.readouterr().out.splitlines()[:2]
    assert dict(zip(header.split(","), row.split(",")))["n"] == "20"


def test_config_file_is_overridden_by_flags(tmp_path, capsys):
    conf = tmp_path / "run.env"
    conf.write_text("replicas=200\nsteps=5\nseed=3\nworkers=1\n", encoding="utf-8")
    main(["estimate-variance", "--config", str(conf), "--seed", "4", "--log-level", "ERROR"])
    text = capsys.readouterr().out
    header, row = text.splitlines()[:2]
    values = dict(zip(header.split(","), row.split(",")))
    assert values["seed"] == "4"
    assert values["samples"] == "1000"


if __name__ == "__main__":
    test_usage_errors_return_one()
    print("✅ app 测试通过")
