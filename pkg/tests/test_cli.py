import csv
import json

import numpy as np
import pytest

from antisym import cli, probe
from antisym.data import Dataset, load_dataset, save_dataset
from antisym.neural import load_checkpoint


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for var in cli.PATH_ENV.values():
        monkeypatch.delenv(var, raising=False)
    return tmp_path


def gen(n=3, out="d.bin", *extra):
    return cli.main(["gen-data", "--n", str(n), "--train", "300", "--val", "60", "--test", "60",
                     "--out", out, "--threads", "1", *extra])


def test_gen_data(workdir):
    assert gen(3, "a.bin", "--csv", "a.csv") == 0
    assert gen(3, "b.bin") == 0
    assert (workdir / "a.bin").read_bytes() == (workdir / "b.bin").read_bytes()
    ds = load_dataset("a.bin")
    assert ds.counts == (300, 60, 60) and ds.seed == 7
    man = json.loads((workdir / "a.bin.manifest.json").read_text())
    assert man["command"] == "gen-data" and man["resolved"]["seed"] == 7
    assert man["resolved"]["threads"] == 1
    with open("a.csv", newline="", encoding="utf-8") as fh:
        assert sum(1 for _ in fh) == 421


@pytest.mark.parametrize("argv", [
    ["gen-data", "--n", "1"],
    ["gen-data", "--train", "0"],
    ["verify", "--n", "12"],
    ["verify", "--trials", "0"],
    ["train", "--ansatz", "transformer"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(workdir, argv, capsys):
    assert cli.main(argv) == 1


def test_train_eval_cycle(workdir):
    assert gen(3) == 0
    assert cli.main(["train", "--data", "d.bin", "--ansatz", "bilipschitz", "--epochs", "3",
                     "--hidden", "16", "16", "--out", "m.ckpt", "--threads", "1"]) == 0
    model = load_checkpoint("m.ckpt")
    assert model.net.layer_sizes == (19, 16, 16, 1)
    man = json.loads((workdir / "m.ckpt.manifest.json").read_text())
    assert man["param_count"] == model.param_count()
    r = man["resolved"]
    assert (r["feature_seed"], r["init_seed"], r["seed"], r["m"]) == (0, 1, 0, 19)
    assert r["log"] == "m.ckpt.log.csv"
    log = (workdir / "m.ckpt.log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_mae,val_mae,lr,wall_seconds" and len(log) == 4

    assert cli.main(["eval", "--checkpoint", "m.ckpt", "--data", "d.bin", "--split", "train",
                     "--check-antisym", "--results", "res.csv"]) == 0
    with open("res.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(cli.RESULT_COLUMNS)
    assert rows[0]["ansatz"] == "bilipschitz" and rows[0]["split"] == "train"
    emanifest = json.loads((workdir / "res.csv.manifest.json").read_text())
    assert emanifest["antisymmetry_gap"] <= 1e-12


def test_training_lowers_train_error(workdir):
    assert gen(3) == 0
    base = ["--data", "d.bin", "--ansatz", "mlp", "--hidden", "32", "--threads", "1"]
    assert cli.main(["train", *base, "--epochs", "1", "--lr", "1e-9", "--min-lr", "0",
                     "--out", "start.ckpt"]) == 0
    assert cli.main(["train", *base, "--epochs", "30", "--out", "fit.ckpt"]) == 0
    for name in ("start", "fit"):
        assert cli.main(["eval", "--checkpoint", f"{name}.ckpt", "--data", "d.bin",
                         "--split", "train", "--results", "res.csv", "--check-antisym"]) == 0
    with open("res.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[1]["mae"]) < float(rows[0]["mae"])


def test_train_is_reproducible(workdir):
    assert gen(3) == 0
    for out in ("a.ckpt", "b.ckpt"):
        assert cli.main(["train", "--data", "d.bin", "--ansatz", "vandermonde", "--epochs", "2",
                         "--phi-hidden", "8", "--rho-hidden", "8", "--out", out, "--threads", "1"]) == 0
    assert (workdir / "a.ckpt").read_bytes() == (workdir / "b.ckpt").read_bytes()
    assert (workdir / "a.ckpt.log.csv").read_text().splitlines()[0] == \
        (workdir / "b.ckpt.log.csv").read_text().splitlines()[0]


def test_eval_errors(workdir):
    assert gen(3) == 0
    assert cli.main(["eval", "--checkpoint", "missing.ckpt", "--data", "d.bin"]) == 1
    assert gen(4, "d4.bin") == 0
    assert cli.main(["train", "--data", "d.bin", "--ansatz", "mlp", "--epochs", "1",
                     "--hidden", "4", "--out", "m.ckpt"]) == 0
    assert cli.main(["eval", "--checkpoint", "m.ckpt", "--data", "d4.bin"]) == 1
    (workdir / "bad.ckpt").write_bytes(b"garbage")
    assert cli.main(["eval", "--checkpoint", "bad.ckpt", "--data", "d.bin"]) == 1


def test_divergence_exits_3(workdir):
    rng = np.random.default_rng(0)
    labels = np.array([1e308, -1e308] * 5)
    save_dataset(Dataset(2, (6, 2, 2), rng.random((10, 2, 2)), labels, 0), "huge.bin")
    assert cli.main(["train", "--data", "huge.bin", "--ansatz", "mlp", "--hidden", "4",
                     "--epochs", "3", "--lr", "1e300", "--min-lr", "0", "--out", "x.ckpt"]) == 3
    man = json.loads((workdir / "x.ckpt.manifest.json").read_text())
    assert "diverged" in man


def test_config_env_and_flag_precedence(workdir, monkeypatch):
    assert gen(3) == 0
    (workdir / "run.ini").write_text(
        "[train]\nansatz = vandermonde\nepochs = 5\nphi-hidden = 6 6\nrho_hidden = 4\nout = cfg.ckpt\n"
        "[eval]\nsplit = val\n")
    monkeypatch.setenv("ANTISYM_OUT", "env.ckpt")
    assert cli.main(["train", "--config", "run.ini", "--data", "d.bin", "--epochs", "1"]) == 0
    assert not (workdir / "cfg.ckpt").exists()
    r = json.loads((workdir / "env.ckpt.manifest.json").read_text())["resolved"]
    assert (r["ansatz"], r["epochs"], r["phi_hidden"], r["rho_hidden"]) == ("vandermonde", 1, [6, 6], [4])
    assert cli.main(["train", "--config", "run.ini", "--data", "d.bin", "--epochs", "1",
                     "--out", "flag.ckpt"]) == 0
    assert (workdir / "flag.ckpt").exists()
    # env vars only touch paths; a non-path variable is ignored
    monkeypatch.setenv("ANTISYM_EPOCHS", "9")
    args = cli.resolve_args(["train", "--config", "run.ini"])
    assert args.epochs == 5 and args.out == "env.ckpt"


def test_config_errors(workdir):
    (workdir / "bad.ini").write_text("[train]\nbogus = 1\n")
    assert cli.main(["train", "--config", "bad.ini"]) == 1
    assert cli.main(["train", "--config", "absent.ini"]) == 1
    (workdir / "typed.ini").write_text("[train]\nepochs = many\n")
    assert cli.main(["train", "--config", "typed.ini"]) == 1


def test_verify_quick_run(workdir):
    code = cli.main(["verify", "--n", "2", "3", "--trials", "500", "--psi-pairs", "200",
                     "--psi-seeds", "2", "--q-inputs", "200", "--grad-instances", "3",
                     "--out", "rep", "--threads", "1"])
    assert code == 0
    for name in ("theorem_1d.csv", "psi.csv", "reports.txt", "scaling.json", "manifest.json"):
        assert (workdir / "rep" / name).exists()
    with open(workdir / "rep" / "psi.csv", newline="", encoding="utf-8") as fh:
        assert len(list(csv.DictReader(fh))) == 6
    man = json.loads((workdir / "rep" / "manifest.json").read_text())
    assert man["failures"] == 0 and man["resolved"]["n"] == [2, 3]


def test_verify_failure_exits_2(workdir, monkeypatch):
    real = probe.verify_theorem_1d

    def broken(*a, **k):
        rep = real(*a, **k)
        rep.violations = 1
        return rep

    monkeypatch.setattr(probe, "verify_theorem_1d", broken)
    assert cli.main(["verify", "--n", "2", "--trials", "100", "--psi-configs", "3x2",
                     "--psi-pairs", "50", "--psi-seeds", "1", "--q-inputs", "0",
                     "--grad-instances", "0", "--out", "rep"]) == 2


def test_verify_bad_psi_config(workdir):
    assert cli.main(["verify", "--psi-configs", "3by2", "--out", "rep"]) == 1
    assert cli.main(["verify", "--psi-configs", "12x2", "--out", "rep"]) == 1
