import csv
import json

import pytest

from phdnet.cli import main

from conftest import RECORDS_10

REGISTRY = (
    "canonical_id,display_name,aliases,is_overseas,tags\n"
    "tsinghua_u,Tsinghua,清华大学,false,tsinghua\n"
    "peking_u,Peking,北京大学,false,peking\n"
    "nankai_u,Nankai,,false,\n"
    "fudan_u,Fudan,,false,\n"
    "harvard,Harvard,,true,\n"
    "stanford,Stanford,,true,\n"
)


@pytest.fixture
def files(tmp_path):
    (tmp_path / "records.csv").write_text(RECORDS_10, encoding="utf-8")
    (tmp_path / "registry.csv").write_text(REGISTRY, encoding="utf-8")
    return tmp_path


@pytest.fixture(scope="module")
def market(tmp_path_factory):
    out = tmp_path_factory.mktemp("market")
    code = main(["synth", "--out", str(out), "--n-records", "1500", "--seed", "3",
                 "--tiers", "3,6,12", "--years", "1995,2021"])
    assert code == 0
    return out


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


class TestIngest:
    def test_valid_fixture(self, files):
        out = files / "out"
        code = main(["ingest", "--records", str(files / "records.csv"),
                     "--registry", str(files / "registry.csv"), "--out", str(out)])
        assert code == 0
        diag = json.loads((out / "diagnostics.json").read_text())["diagnostics"]
        assert diag["total_rows"] == 10
        # non-integer year, missing employer, same-year hire under the strict rule
        assert [r["row_index"] for r in diag["rejected"]] == [3, 7, 9]
        assert diag["admitted"] == len(read_csv(out / "records_clean.csv"))

    def test_missing_file(self, tmp_path):
        out = tmp_path / "out"
        code = main(["ingest", "--records", str(tmp_path / "nope.csv"), "--out", str(out)])
        assert code == 2
        assert not out.exists() or not any(out.iterdir())

    def test_missing_out(self, files):
        assert main(["ingest", "--records", str(files / "records.csv")]) == 1

    def test_bad_flag(self, files):
        with pytest.raises(SystemExit) as info:
            main(["ingest", "--nonsense"])
        assert info.value.code == 1


class TestAnalyze:
    def args(self, files, out):
        return ["analyze", "--records", str(files / "records.csv"),
                "--registry", str(files / "registry.csv"), "--out", str(out),
                "--boundaries", "2004,2008,2013,2018", "--format", "csv,dot,graphml"]

    def test_outputs(self, files):
        out = files / "a"
        assert main(self.args(files, out)) == 0
        stats = json.loads((out / "network_stats.json").read_text())
        assert len(stats["slices"]) == 4
        assert stats["full"]["total_weight"] == 7
        rows = read_csv(out / "centrality.csv")
        assert list(rows[0]) == ["node", "ec_2004", "ec_2008", "ec_2013", "ec_2018"]
        assert (out / "network_full.graphml").exists()
        assert (out / "network_full.dot").exists()

    def test_deterministic(self, files):
        a, b = files / "a", files / "b"
        assert main(self.args(files, a)) == 0
        assert main(self.args(files, b)) == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_empty_records(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("person,degree_unit,employer_unit,graduation_year,employment_year\n")
        assert main(["analyze", "--records", str(path), "--out", str(tmp_path / "o")]) == 0
        stats = json.loads((tmp_path / "o" / "network_stats.json").read_text())
        assert stats["full"]["total_weight"] == 0
        assert read_csv(tmp_path / "o" / "centrality.csv") == []

    def test_bad_boundaries(self, files):
        args = self.args(files, files / "x")
        args[args.index("2004,2008,2013,2018")] = "2010,2005"
        assert main(args) == 1


class TestRegress:
    def subset(self, market, tmp_path, nodes=None):
        if nodes is None:
            nodes = [r["node"] for r in read_csv(market / "market_tiers.csv")]
        path = tmp_path / "subset.txt"
        path.write_text("\n".join(nodes) + "\n")
        return path

    def run(self, market, tmp_path, subset, extra=()):
        return main(["regress", "--records", str(market / "market_records.csv"),
                     "--registry", str(market / "market_registry.csv"),
                     "--subset", str(subset), "--out", str(tmp_path / "r"),
                     "--boundaries", "2006,2011,2016,2021", *extra])

    def test_report(self, market, tmp_path):
        assert self.run(market, tmp_path, self.subset(market, tmp_path)) == 0
        rep = json.loads((tmp_path / "r" / "regression_levels.json").read_text())
        for key in ("R2", "adj_R2", "F", "F_p", "DW"):
            assert key in rep
        assert set(rep["coefficients"]) == {"self_ratio", "overseas_ratio", "new_ratio", "n",
                                            "tspek_ratio"}
        for row in [rep["intercept"], *rep["coefficients"].values()]:
            assert set(row) == {"B", "SE", "Beta", "t", "p", "VIF"}
        assert rep["F_dof"] == [5, 21 - 6]
        assert (tmp_path / "r" / "regression_trend.csv").exists()
        header = (tmp_path / "r" / "regression_levels.csv").read_text().splitlines()[0]
        assert header == "term,B,SE,Beta,t,p,VIF"

    def test_single_node_subset(self, market, tmp_path):
        assert self.run(market, tmp_path, self.subset(market, tmp_path, ["t1_u000"])) == 2

    def test_collinear_panel(self, tmp_path, capsys):
        # every node hires four people, all recently: n and new_ratio are constant
        rows = ["person,degree_unit,employer_unit,graduation_year,employment_year"]
        k = 0
        trainers = ["tsinghua_u", "peking_u", "OVERSEAS", "a", "b", "c", "d", "e"]
        for i, u in enumerate("abcdefgh"):
            for j in range(4):
                t = trainers[(i + j * 3) % len(trainers)]
                rows.append(f"p{k},{t},{u},2017,2018")
                k += 1
        (tmp_path / "rec.csv").write_text("\n".join(rows) + "\n")
        (tmp_path / "reg.csv").write_text(REGISTRY)
        (tmp_path / "sub.txt").write_text("\n".join("abcdefgh"))
        code = main(["regress", "--records", str(tmp_path / "rec.csv"),
                     "--registry", str(tmp_path / "reg.csv"), "--subset", str(tmp_path / "sub.txt"),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert "intercept" in err and "n" in err and "new_ratio" in err


class TestValidate:
    def setup_validation(self, market, tmp_path, rows):
        path = tmp_path / "val.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "grade_round3", "grade_round4", "gras_score"])
            w.writerows(rows)
        return path

    def ec(self, market, tmp_path, year):
        assert main(["analyze", "--records", str(market / "market_records.csv"),
                     "--out", str(tmp_path / "a"), "--boundaries", f"2014,{year}"]) == 0
        return {r["node"]: float(r[f"ec_{year}"]) for r in read_csv(tmp_path / "a" / "centrality.csv")}

    def run(self, market, tmp_path, val, pairs=None):
        args = ["validate", "--records", str(market / "market_records.csv"),
                "--registry", str(market / "market_registry.csv"),
                "--validation", str(val), "--out", str(tmp_path / "v")]
        if pairs:
            args += ["--pairs", pairs]
        return main(args)

    def test_identity_gives_one(self, market, tmp_path):
        scores = self.ec(market, tmp_path, 2021)
        nodes = sorted(n for n in scores if n != "OVERSEAS")
        val = self.setup_validation(market, tmp_path, [[n, "B", "B", scores[n]] for n in nodes])
        # the CSV carries 4 d.p. scores so the match is to rounding
        assert self.run(market, tmp_path, val, "ec_2021:gras_score") == 0
        out = json.loads((tmp_path / "v" / "correlation.json").read_text())
        assert out["correlations"][0]["r"] == pytest.approx(1.0, abs=1e-6)

    def test_incomplete_rows_dropped(self, market, tmp_path):
        nodes = [r["node"] for r in read_csv(market / "market_tiers.csv")][:17]
        grades = ["A", "B+", "C", "A-", "B"]
        rows = [[n, grades[i % 5], grades[(i + 2) % 5], str(i)] for i, n in enumerate(nodes)]
        rows += [["", "A", "A", "1"], ["no_such_unit", "B", "B", "2"], [nodes[0], "C", "", ""]]
        val = self.setup_validation(market, tmp_path, rows)
        assert self.run(market, tmp_path, val) == 0
        out = json.loads((tmp_path / "v" / "correlation.json").read_text())
        assert out["n_rows"] == 20
        assert {c["n"] for c in out["correlations"]} == {17}
        pairs = {(c["ec_column"], c["target"]) for c in out["correlations"]}
        assert ("ec_2014", "grade_round3") in pairs
        assert ("ec_2021", "grade_round4") in pairs
        head = (tmp_path / "v" / "correlation.csv").read_text().splitlines()[0]
        assert head == "ec_column,target,r,n,t,p"

    def test_unknown_grade(self, market, tmp_path, capsys):
        nodes = [r["node"] for r in read_csv(market / "market_tiers.csv")][:5]
        rows = [[n, "A", "B", str(i)] for i, n in enumerate(nodes)]
        rows[3][1] = "Z+"
        val = self.setup_validation(market, tmp_path, rows)
        assert self.run(market, tmp_path, val) == 2
        err = capsys.readouterr().err
        assert "Z+" in err and "5" in err


class TestConfig:
    def test_config_and_override(self, files):
        cfg = files / "run.cfg"
        cfg.write_text(f"records = {files / 'records.csv'}\nboundaries = 2005,2010\n")
        out = files / "c"
        assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
        assert read_csv(out / "centrality.csv")[0].keys() >= {"ec_2005", "ec_2010"}
        out2 = files / "c2"
        assert main(["analyze", "--config", str(cfg), "--out", str(out2),
                     "--boundaries", "2012,2018"]) == 0
        assert set(read_csv(out2 / "centrality.csv")[0]) == {"node", "ec_2012", "ec_2018"}
        echo = json.loads((out2 / "network_stats.json").read_text())["provenance"]["config"]
        assert echo["boundaries"] == [2012, 2018]

    def test_unknown_key(self, files):
        cfg = files / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert main(["analyze", "--config", str(cfg), "--out", str(files / "o")]) == 1


class TestExport:
    def test_formats(self, files):
        out = files / "e"
        assert main(["export", "--records", str(files / "records.csv"),
                     "--registry", str(files / "registry.csv"), "--out", str(out),
                     "--format", "csv,graphml"]) == 0
        lines = (out / "network.csv").read_text().splitlines()
        assert lines[0] == "source,target,weight"
        assert (out / "network.graphml").exists()


class TestSynth:
    def test_outputs(self, market):
        tiers = read_csv(market / "market_tiers.csv")
        assert len(tiers) == 21
        assert len(read_csv(market / "market_records.csv")) == 1500
        reg = read_csv(market / "market_registry.csv")
        tagged = {r["canonical_id"]: r["tags"] for r in reg if r["tags"]}
        assert tagged == {"t1_u000": "tsinghua", "t1_u001": "peking"}

    def test_bad_spec(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--bias", "2"]) == 1
