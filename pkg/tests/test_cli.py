import csv

import pytest

from cirfindex import cli
from cirfindex import identify as ident


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["gen-data", "--subjects", "8", "--seed", "3", "--out-dir", str(d)]) == 0
    assert cli.main(["enroll", "--dataset", str(d / "corpus.cirfds"), "--out-dir", str(d)]) == 0
    return d


def test_gen_data_and_enroll(workspace):
    db = ident.load_database(workspace / "enrolled.cirfdb")
    assert len(db) == 8 and db.k == 2
    assert len(ident.KeyStore.load(workspace / "keys.npz").records) == 8


def _identify(d, csv_name, *extra):
    return cli.main(["identify", "--dataset", str(d / "corpus.cirfds"), "--db", str(d / "enrolled.cirfdb"),
                     "--keys", str(d / "keys.npz"), "--out-dir", str(d), "--csv", csv_name, *extra])


def test_identify_csv_columns_and_stable_hash(workspace):
    assert _identify(workspace, "a.csv") == 0
    assert _identify(workspace, "b.csv") == 0
    a, b = _rows(workspace / "a.csv"), _rows(workspace / "b.csv")
    assert len(a) == 8 and {"config_hash", "seed", "decision", "exact_computations"} <= set(a[0])
    timing = {"approx_ms", "exact_ms"}
    strip = lambda rows: [{k: v for k, v in r.items() if k not in timing} for r in rows]
    assert strip(a) == strip(b)
    assert sum(r["enrollee_id"] == r["genuine_id"] for r in a) >= 7


def test_identify_rejects_wrong_rank(workspace, capsys):
    assert _identify(workspace, "c.csv", "--k", "1") == 2
    assert "ScenarioMismatch" in capsys.readouterr().err


def test_config_hash_tracks_options():
    parse = cli.build_parser().parse_args
    base = ["identify", "--dataset", "x", "--db", "y", "--keys", "z"]
    h = cli.config_hash(parse(base))
    assert h == cli.config_hash(parse(base + ["--out-dir", "/tmp/elsewhere", "--threads", "4"]))
    assert h != cli.config_hash(parse(base + ["--threshold", "90"]))
    assert h != cli.config_hash(parse(base + ["--seed", "1"]))


def test_verify_passes(capsys):
    assert cli.main(["verify", "--k", "1", "--instances", "3"]) == 0
    out = capsys.readouterr().out
    assert out and all(line.startswith("PASS") for line in out.splitlines())


def test_verify_flags_corrupt_database(workspace, tmp_path, capsys):
    raw = bytearray((workspace / "enrolled.cirfdb").read_bytes())
    raw[-10] ^= 0x01
    bad = tmp_path / "bad.cirfdb"
    bad.write_bytes(bytes(raw))
    assert cli.main(["verify", "--k", "1", "--instances", "2", "--db", str(bad)]) == 1
    assert "FAIL\tdatabase-integrity\trecord 7" in capsys.readouterr().out


def test_bench_writes_metrics(tmp_path):
    code = cli.main(["bench", "--subjects", "10", "--timing-queries", "1", "--out-dir", str(tmp_path)])
    assert code == 0
    metrics = {r["metric"]: r for r in _rows(tmp_path / "bench.csv")}
    assert float(metrics["hit_rate_at_10"]["value"]) == 1.0
    assert metrics["subjects"]["value"] == "10"
    assert len({r["config_hash"] for r in metrics.values()}) == 1


def test_secrecy_small(capsys):
    code = cli.main(["secrecy-test", "--instances", "5", "--samples", "20000"])
    out = capsys.readouterr().out
    assert code == 0 and "underdetermined" in out


def test_errors_exit_two(tmp_path, capsys):
    assert cli.main(["enroll", "--dataset", str(tmp_path / "missing"), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["verify", "--p", "8640"]) == 2
    assert "NotPrime" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["identify"])
