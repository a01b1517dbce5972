import csv
import json
import logging

import numpy as np
import pytest

from polyq import acceptance, cli
from polyq.cli import ConfigError, main, parse_config


def run_csv(tmp_path, name, argv):
    out = tmp_path / name
    code = main(argv + ["--output", str(out)])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParsing:
    def test_enumerate_example(self):
        cfg = parse_config("enumerate --d 2 --n 8 --beta 1 --charges rademacher --seed 7".split())
        assert (cfg.d, cfg.n, cfg.beta, cfg.seed, cfg.charges) == (2, 8, 1.0, 7, "rademacher")
        spec = cfg.spec(7)
        assert spec.N == 8 and spec.law.kind == "rademacher"

    def test_missing_seed(self, capsys):
        assert main("mcmc --d 2 --n 10".split()) == 2
        assert "seed" in capsys.readouterr().err

    def test_file_then_flag(self, tmp_path, caplog):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("# experiment\nd = 3\nbeta = 2.5\nseed = 4\n")
        with caplog.at_level(logging.INFO, logger="polyq"):
            cfg = parse_config(["enumerate", "--config", str(cfgfile), "--beta", "0.5"])
        assert cfg.d == 3 and cfg.beta == 0.5 and cfg.seed == 4
        assert any("overrides" in r.getMessage() for r in caplog.records)

    def test_unknown_key_in_file(self, tmp_path):
        cfgfile = tmp_path / "bad.cfg"
        cfgfile.write_text("temperature = 3\n")
        with pytest.raises(ConfigError):
            parse_config(["enumerate", "--config", str(cfgfile), "--seed", "1"])

    @pytest.mark.parametrize("argv", [
        "enumerate --seed 1 --d 0",
        "enumerate --seed 1 --beta abc",
        "enumerate --seed 1 --charges cauchy",
        "mcmc --seed 1 --alpha 1.5",
        "enumerate --seed 1 --bogus 3",
        "sweep-beta --seed 1 --from 2 --to 1",
        "mcmc --seed 1 --d 2 --pull 1,2,3",
    ])
    def test_bad_values_exit_2(self, argv):
        assert main(argv.split()) == 2

    def test_pull_broadcast(self):
        cfg = parse_config("mcmc --seed 1 --d 3 --pull 0.5".split())
        assert cfg.spec(1).pull == (0.5, 0.5, 0.5)


class TestSubcommands:
    def test_enumerate_matches_library(self, tmp_path):
        code, out = run_csv(tmp_path, "e.csv", "enumerate --d 2 --n 6 --beta 1 --seed 3".split())
        assert code == 0
        rows = read_rows(out)
        assert rows and all(r["d"] == "2" and r["N"] == "6" and r["seed"] == "3" for r in rows)
        assert all(r["version"].startswith("polyq ") for r in rows)

    def test_budget_exit_3(self, capsys):
        assert main("enumerate --d 2 --n 20 --seed 1".split()) == 3

    def test_mcmc_json(self, tmp_path):
        out = tmp_path / "m.json"
        code = main(f"mcmc --d 2 --n 12 --beta 1 --seed 5 --sweeps 400 --replicas 2 "
                    f"--format json --output {out}".split())
        assert code == 0
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert {r["replica"] for r in recs} >= {0, 1, "mean"}

    def test_mcmc_trace(self, tmp_path):
        trace = tmp_path / "h.npy"
        code, _ = run_csv(tmp_path, "m.csv", f"mcmc --n 10 --seed 5 --sweeps 300 --burn-in 0 "
                                              f"--trace {trace}".split())
        assert code == 0 and np.load(trace).shape == (300,)

    def test_sweep_beta_columns_and_determinism(self, tmp_path):
        argv = "sweep-beta --d 2 --n 12 --seed 9 --from 0 --to 4 --steps 5 --sweeps 500 --method mcmc".split()
        c1, a = run_csv(tmp_path, "a.csv", argv)
        c2, b = run_csv(tmp_path, "b.csv", argv)
        assert c1 == c2 == 0
        assert a.read_bytes() == b.read_bytes()
        rows = read_rows(a)
        head = list(rows[0])
        assert head[:6] == ["beta", "F", "F_stderr", "EH_over_N2", "P_S_alpha", "Lstar_frac_mean"]
        assert len(rows) == 5 and float(rows[0]["F"]) == 0.0
        assert b"\r\n" in a.read_bytes()

    def test_sweep_beta_exact_with_gnuplot(self, tmp_path):
        code, out = run_csv(tmp_path, "s.csv", "sweep-beta --n 6 --seed 1 --to 2 --steps 3 "
                                               "--emit-gnuplot true".split())
        assert code == 0
        assert {r["method"] for r in read_rows(out)} == {"exact"}
        assert (tmp_path / "s.csv.gp").exists()

    def test_max_energy(self, tmp_path):
        code, out = run_csv(tmp_path, "x.csv", "max-energy --d 2 --n 8 --seed 2 --brute true".split())
        assert code == 0
        r = read_rows(out)[0]
        assert int(float(r["formula"])) == int(float(r["brute_max"])) == int(float(r["optimal_trajectory_H"]))

    def test_rate_fn(self, tmp_path):
        code, out = run_csv(tmp_path, "r.csv", "rate-fn --d 1 --eps 0.1,0.2,0.3".split())
        assert code == 0
        assert len(read_rows(out)) == 3

    def test_pulling_bounds(self, tmp_path):
        code, out = run_csv(tmp_path, "p.csv", "pulling --d 2 --lambda 0,0.5".split())
        assert code == 0 and read_rows(out)

    def test_pulling_partition_needs_seed(self):
        assert main("pulling --d 1 --n 6 --lambda 0.3".split()) == 2


class TestSelftest:
    def _fake(self, passed):
        res = acceptance.CriterionResult(1, "fake", passed, "x", 0.0, {})
        return lambda quick: [res]

    def test_exit_codes_follow_results(self, monkeypatch, capsys):
        monkeypatch.setattr(acceptance, "run_all", self._fake(True))
        assert main(["selftest"]) == 0
        assert capsys.readouterr().out.startswith("[PASS] criterion")
        monkeypatch.setattr(acceptance, "run_all", self._fake(False))
        assert main(["selftest"]) == 1
