import json

import pytest

from doublesampling.cli import ConfigError, main, parse_config, parse_value


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_value_types():
    assert parse_value("3") == 3
    assert parse_value("0.25") == 0.25
    assert parse_value("true") is True
    assert parse_value("[0.4, 0.8]") == [0.4, 0.8]
    assert parse_value("bayes-ucb") == "bayes-ucb"
    assert parse_value('"a b"') == "a b"
    with pytest.raises(ValueError):
        parse_value("[0.4,")


def test_minimal_config_gets_defaults(tmp_path):
    s = parse_config(write(tmp_path, "model = bernoulli\ntheta = [0.4, 0.8]\n"))
    assert (s["horizon"], s["realizations"], s["mc_samples"]) == (1500, 500, 1000)
    assert s.policy().floor == pytest.approx(1e-3) and s.policy().cap == 1000
    assert s.instance().theta.tolist() == [0.4, 0.8]


def test_range_error_names_line(tmp_path):
    path = write(tmp_path, "# comment\ntheta = [1.2]\n")
    with pytest.raises(ConfigError, match=r"exp.cfg:2: theta .*\[0, 1\]"):
        parse_config(path)


@pytest.mark.parametrize("text", ["horizon = 0\n", "bogus = 1\n", "seed = -3\n", "theta\n", "algorithm = greedy\n"])
def test_bad_config_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "theta = [0.4, 0.8]\n" + text))


def test_precedence(tmp_path):
    path = write(tmp_path, "theta = [0.4, 0.8]\nhorizon = 100\nseed = 5\nrealizations = 7\n")
    s = parse_config(path, {"horizon": 50}, ["horizon=70", "seed=6"])
    assert s["horizon"] == 50 and s.where("horizon") == "--horizon"
    assert s["seed"] == 6 and s["realizations"] == 7 and s["mc_samples"] == 1000


def test_gaussian_config(tmp_path):
    s = parse_config(write(tmp_path, "model = linear-gaussian\nweights = [[0.4, 0.4], [0.8, 0.8]]\nnoise_std = 0.2\n"))
    inst = s.instance()
    assert inst.context_dim == 2 and inst.noise_std.tolist() == [0.2, 0.2]
    assert s.prior() == dict(alpha0=1.0, beta0=1.0, v_scale=1.0)


def run_cli(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_run_writes_outputs(tmp_path):
    cfg = write(tmp_path, "theta = [0.4, 0.8]\nmc_samples = 50\n")
    code, out = run_cli(tmp_path, "a", "run", "--config", str(cfg), "--horizon", "30", "--realizations", "3")
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["diagnostics.csv", "manifest.json", "regret_bayes-ucb.csv",
                     "regret_double-sampling.csv", "regret_thompson.csv"]
    lines = (out / "regret_thompson.csv").read_text().splitlines()
    assert lines[0] == "t,mean_regret,std_regret" and len(lines) == 31
    assert (out / "diagnostics.csv").read_text().splitlines()[0] == "t,mean_N,mean_p_fa,mean_p_hat_0,mean_p_hat_1"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config"]["horizon"] == 30
    assert len(manifest["outputs"]) == 4


def test_run_is_byte_deterministic_across_threads(tmp_path):
    args = ["run", "--set", "theta=[0.3, 0.5, 0.6]", "--set", "mc_samples=40", "--horizon", "25",
            "--realizations", "150", "--seed", "11"]
    _, a = run_cli(tmp_path, "a", *args, "--threads", "1")
    _, b = run_cli(tmp_path, "b", *args, "--threads", "2")
    for f in a.glob("*.csv"):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_sweep_single_point(tmp_path):
    code, out = run_cli(
        tmp_path, "s", "sweep", "--set", "grid_step=0.4", "--set", "grid_lower=0.4", "--set", "grid_upper=0.8",
        "--set", "mc_samples=30", "--horizon", "20", "--realizations", "2",
    )
    assert code == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "theta_0,theta_1,kl,delta_ts,delta_bucb,defined"
    assert len(rows) == 4
    kls = [float(r.split(",")[2]) for r in rows[1:]]
    assert kls == sorted(kls)
    undefined = [r for r in rows[1:] if r.endswith(",0")]
    assert all(r.split(",")[3] == "" for r in undefined)


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "--set", "theta=[1.2, 0.3]", "--out", str(tmp_path / "x")]) == 2
    assert "theta" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--set", "theta=[0.2, 0.3]", "--horizon", "2", "--out", str(blocker / "sub")]) == 1
    with pytest.raises(SystemExit):
        main(["run", "--algorithm", "greedy"])
