import math
import subprocess
import sys
from pathlib import Path

import pytest

from riemcov.cli import ConfigError, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_OK, load_config, main, read_config_text

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="p.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_record(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


class TestConfigReader:
    def test_sections_and_comments(self):
        s = read_config_text('# hi\ndimension = 2\n\n[domain]\nbox = [[0, 1], [0, 1]]  # trailing\n')
        assert s[""]["dimension"] == (2, 2)
        assert s["domain"]["box"] == ([[0, 1], [0, 1]], 5)

    @pytest.mark.parametrize(
        "text, line, msg",
        [
            ("dimension = 1\nfoo = 2\n", 2, "unknown key 'foo'"),
            ("dimension = 1\n[nope]\n", 2, "unknown section"),
            ("dimension = 1\n[domain]\nbox = [[0, 1]\n", 3, "bad value"),
            ("dimension = 1\n[domain]\nbox\n", 3, "expected 'key = value'"),
            ("dimension = 1\ndimension = 2\n", 2, "duplicate key"),
            ("[domain\n", 1, "malformed section"),
        ],
    )
    def test_located_errors(self, text, line, msg):
        with pytest.raises(ConfigError) as exc:
            read_config_text(text, "x.cfg")
        assert exc.value.line == line
        assert msg in str(exc.value)
        assert str(exc.value).startswith(f"x.cfg:{line}:")

    def test_schedule_must_increase(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            load_config("dimension = 1\n[options]\ndepths = [4, 4]\n")

    def test_missing_dimension(self):
        with pytest.raises(ConfigError, match="dimension"):
            load_config("[domain]\nbox = [[0, 1]]\n")

    def test_map_arity(self):
        with pytest.raises(ConfigError, match="2 entries"):
            load_config('dimension = 2\n[map]\ncomponents = ["x1"]\n')


class TestIntegrate:
    def test_constant(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nbox = [[0, 1], [0, 1]]\n[integrand]\nf = "1"\n')
        out = str(tmp_path / "r.txt")
        assert main(["integrate", "--config", cfg, "--out", out]) == EXIT_OK
        rec = read_record(out)
        assert float(rec["result.lower"]) == 1.0 and float(rec["result.upper"]) == 1.0
        assert rec["config.integrand.f"] == '"1"'
        assert rec["exit_code"] == "0"

    def test_sqrt(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 1\n[domain]\nbox = [[0, 1]]\n[integrand]\nf = "sqrt(x1)"\n')
        out = str(tmp_path / "r.txt")
        assert main(["integrate", "--config", cfg, "--depth", "12", "--out", out]) == EXIT_INCONCLUSIVE
        rec = read_record(out)
        assert float(rec["result.lower"]) <= 2 / 3 <= float(rec["result.upper"])
        assert main(["integrate", "--config", cfg, "--depth", "12", "--tol", "1e-3"]) == EXIT_OK

    def test_dimension_error(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nbox = [[0, 1], [0, 1]]\n[integrand]\nf = "x3"\n')
        assert main(["integrate", "--config", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "DimensionError" in err and "position 0" in err and ":5:" in err

    def test_eval_fault_is_reported(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 1\n[domain]\nbox = [[0, 1]]\n[integrand]\nf = "1/x1"\n')
        assert main(["integrate", "--config", cfg]) == EXIT_INCONCLUSIVE
        assert "DivZero" in capsys.readouterr().err


class TestContent:
    def test_box(self, tmp_path, capsys):
        cfg = write(tmp_path, "dimension = 2\n[domain]\nbox = [[0, 1], [0, 1]]\n")
        assert main(["content", "--config", cfg, "--depth", "4"]) == EXIT_OK
        assert "[1, 1]" in capsys.readouterr().out

    def test_disk(self, tmp_path):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nclassify = "x1*x1+x2*x2 - 1"\nbounds = [[-1, 1], [-1, 1]]\n')
        out = str(tmp_path / "r.txt")
        assert main(["content", "--config", cfg, "--depth", "9", "--out", out]) == EXIT_OK
        rec = read_record(out)
        assert float(rec["result.inner"]) <= math.pi <= float(rec["result.outer"])

    def test_empty(self, tmp_path):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nclassify = "1"\nbounds = [[-1, 1], [-1, 1]]\n')
        out = str(tmp_path / "r.txt")
        main(["content", "--config", cfg, "--depth", "5", "--out", out])
        rec = read_record(out)
        assert float(rec["result.inner"]) == 0.0 and float(rec["result.outer"]) == 0.0


class TestCousin:
    def test_constant(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 1\n[domain]\nbox = [[0, 1]]\n[gauge]\ndelta = "0.3"\n')
        out = str(tmp_path / "r.txt")
        assert main(["cousin", "--config", cfg, "--out", out]) == EXIT_OK
        rec = read_record(out)
        assert int(rec["cells"]) <= 4 and rec["status"] == '"Verified"'

    def test_variable(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 1\n[domain]\nbox = [[0, 1]]\n[gauge]\ndelta = "0.01 + abs(x1-0.5)"\n')
        assert main(["cousin", "--config", cfg]) == EXIT_OK

    def test_vanishing(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 1\n[domain]\nbox = [[0, 1]]\n[gauge]\ndelta = "abs(x1-0.3)"\nmax_depth = 10\n')
        assert main(["cousin", "--config", cfg]) == EXIT_INCONCLUSIVE
        assert "witness" in capsys.readouterr().out

    def test_needs_cube(self, tmp_path, capsys):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nbox = [[0, 1], [0, 2]]\n[gauge]\ndelta = "1"\n')
        assert main(["cousin", "--config", cfg]) == EXIT_CONFIG


class TestSardAndCov:
    def test_sard_config(self, tmp_path):
        out = str(tmp_path / "r.txt")
        assert main(["sard", "--config", str(CONFIGS / "sard.cfg"), "--out", out]) == EXIT_OK
        rec = read_record(out)
        vals = [float(rec[f"depths.{d}.image_outer_content"]) for d in (5, 6, 7, 8)]
        assert vals == sorted(vals, reverse=True)

    def test_sard_constant(self, tmp_path):
        cfg = write(tmp_path, 'dimension = 2\n[domain]\nbox = [[0, 1], [0, 1]]\n[map]\ncomponents = ["0", "0"]\nlipschitz = 1.0\n[options]\ndepths = [3, 4, 5]\n')
        out = str(tmp_path / "r.txt")
        assert main(["sard", "--config", cfg, "--out", out]) == EXIT_OK
        rec = read_record(out)
        assert int(rec["depths.5.singular_cells"]) == 1024

    def test_cov_affine(self, tmp_path):
        cfg = write(
            tmp_path,
            'dimension = 2\n[domain]\nbox = [[0, 1], [0, 1]]\n[map]\ncomponents = ["2*x1 + x2", "x2 - x1"]\n'
            '[integrand]\nf = "1"\n[options]\ndepths = [5, 7]\n',
        )
        assert main(["cov", "--config", cfg]) == EXIT_OK

    def test_kestelman_config(self, tmp_path):
        assert main(["cov", "--config", str(CONFIGS / "kestelman1d.cfg")]) == EXIT_OK

    def test_seed_reproducible(self, tmp_path):
        cfg = str(CONFIGS / "kestelman1d.cfg")
        a, b = str(tmp_path / "a.txt"), str(tmp_path / "b.txt")
        main(["cov", "--config", cfg, "--seed", "7", "--threads", "1", "--out", a])
        main(["cov", "--config", cfg, "--seed", "7", "--threads", "1", "--out", b])
        assert Path(a).read_text() == Path(b).read_text()

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "riemcov", "content", "--config", str(CONFIGS / "sard.cfg"), "--depth", "3"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "content in [4, 4]" in proc.stdout
