import csv
import json
from pathlib import Path

import numpy as np
import pytest

from loas import cli
from loas.compression import pack_spikes
from loas.report import CSV_COLUMNS, output_digest
from loas.snn import OutputSpikes, reference_layer
from loas.workloads import load_workload

ROOT = Path(__file__).resolve().parents[1]
HW = str(ROOT / "configs" / "default.hw")
ENERGY = str(ROOT / "configs" / "energy_example.txt")


def gen_small(path, T=4, seed=1):
    assert cli.main(["gen", "--M", "9", "--K", "170", "--N", "13", "--T", str(T),
                     "--spike-sparsity", "0.7", "--silent-fraction", "0.5" if T > 1 else "0.7",
                     "--weight-sparsity", "0.7", "--v-th", "2", "--seed", str(seed),
                     "--out", str(path)]) == 0
    return path


def test_gen_preset_matches_table(tmp_path):
    out = tmp_path / "v.l8"
    assert cli.main(["gen", "--preset", "V-L8", "--seed", "7", "--out", str(out)]) == 0
    A, B, _ = load_workload(out)
    assert (A.T, A.M, B.N, A.K) == (4, 16, 512, 2304)
    assert abs(1 - A.data.mean() - 0.881) <= 0.01
    assert abs((pack_spikes(A).words == 0).mean() - 0.765) <= 0.01
    assert abs((B.data == 0).mean() - 0.968) <= 0.005
    again = tmp_path / "v2.l8"
    cli.main(["gen", "--preset", "V-L8", "--seed", "7", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_gen_inconsistent_flags(tmp_path, capsys):
    code = cli.main(["gen", "--M", "2", "--K", "2", "--N", "2", "--T", "4",
                     "--spike-sparsity", "0.3", "--silent-fraction", "0.5",
                     "--weight-sparsity", "0.5", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "silent fraction" in capsys.readouterr().err


def test_gen_missing_shape_flags(tmp_path):
    assert cli.main(["gen", "--M", "2", "--out", str(tmp_path / "x")]) == 2


def test_run_ftp_hash_equals_oracle(tmp_path):
    w = gen_small(tmp_path / "w")
    assert cli.main(["run", "--engine", "ftp", "--workload", str(w), "--hw", HW,
                     "--energy", ENERGY, "--out", str(tmp_path / "r.json"), "--seed", "1"]) == 0
    assert cli.main(["run", "--engine", "oracle", "--workload", str(w), "--hw", HW,
                     "--out", str(tmp_path / "o.json")]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    o = json.loads((tmp_path / "o.json").read_text())
    A, B, p = load_workload(w)
    assert r["output_sha256"] == o["output_sha256"] == output_digest(reference_layer(A, B, p))
    assert r["schema"] == 1 and r["seed"] == 1 and r["energy"]["total_pj"] > 0
    assert r["config_hash"] == o["config_hash"] and r["workload"] == o["workload"]
    assert "total_cycles" not in o and "dram_bytes" not in o
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(o["output_hex"]), np.uint8))
    assert np.array_equal(bits[:A.M * B.N * A.T].reshape(A.M, B.N, A.T),
                          reference_layer(A, B, p).data)


def test_run_csv(tmp_path):
    w = gen_small(tmp_path / "w")
    assert cli.main(["run", "--engine", "op-seq", "--workload", str(w), "--hw", HW,
                     "--out", str(tmp_path / "r.csv"), "--format", "csv"]) == 0
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert list(rows[0]) == CSV_COLUMNS
    assert [r["row"] for r in rows] == ["category"] * 6 + ["summary"]
    assert sum(int(r["dram_bytes"]) for r in rows[:6]) == int(rows[-1]["dram_bytes"])


def test_run_missing_hw(tmp_path):
    w = gen_small(tmp_path / "w")
    with pytest.raises(SystemExit) as e:
        cli.main(["run", "--engine", "ftp", "--workload", str(w), "--out", str(tmp_path / "r")])
    assert e.value.code == 2


def test_run_bad_inputs(tmp_path):
    w = gen_small(tmp_path / "w")
    out = str(tmp_path / "r")
    assert cli.main(["run", "--engine", "ftp", "--workload", str(tmp_path / "nope"),
                     "--hw", HW, "--out", out]) == 3
    bad = tmp_path / "bad.hw"
    bad.write_text("num_tpes = 4\n")
    assert cli.main(["run", "--engine", "ftp", "--workload", str(w), "--hw", str(bad),
                     "--out", out]) == 2
    bad.write_text("cache_capacity_bytes = 1000\n")
    assert cli.main(["run", "--engine", "ftp", "--workload", str(w), "--hw", str(bad),
                     "--out", out]) == 2
    en = tmp_path / "e.txt"
    en.write_text("dram_byte = 1\n")
    assert cli.main(["run", "--engine", "ftp", "--workload", str(w), "--hw", HW,
                     "--energy", str(en), "--out", out]) == 2
    corrupt = tmp_path / "c"
    corrupt.write_bytes(w.read_bytes()[:-3])
    assert cli.main(["run", "--engine", "ftp", "--workload", str(corrupt), "--hw", HW,
                     "--out", out]) == 3
    assert cli.main(["run", "--engine", "ftp", "--workload", str(w), "--hw", HW,
                     "--out", str(tmp_path / "missing-dir" / "r")]) == 3


def test_hw_file_parsing():
    hw = cli.hw_from_mapping(cli.parse_kv("num_tppes = 4\ntppe_bit_accurate = yes\n"
                                          "cache_line_bytes=32 # comment\n", "x"))
    assert hw.ftp.num_tppes == 4 and hw.ftp.tppe.bit_accurate
    assert hw.ftp.cache.line_bytes == 32 == hw.baseline["gust-seq"].cache.line_bytes
    assert cli.load_hw(HW) == cli.hw_from_mapping({})
    with pytest.raises(ValueError):
        cli.parse_kv("a = 1\na = 2\n", "x")
    with pytest.raises(ValueError):
        cli.hw_from_mapping({"num_pes": "many"})


def test_verify_all_pass(tmp_path, capsys):
    w = gen_small(tmp_path / "w")
    assert cli.main(["verify", "--workload", str(w)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_verify_t1(tmp_path, capsys):
    w = gen_small(tmp_path / "w", T=1)
    assert cli.main(["verify", "--workload", str(w), "--engines", "ftp,gust-seq"]) == 0
    assert capsys.readouterr().out.count("PASS") == 2


def test_verify_detects_corrupted_engine(tmp_path, capsys, monkeypatch):
    w = gen_small(tmp_path / "w")
    good = cli.ENGINES["ftp"]

    def corrupted(A, B, p, hw, e):
        r = good(A, B, p, hw, e)
        d = r.output.data.copy()
        d[2, 3, 1] ^= 1
        r.output = OutputSpikes(d)
        return r

    monkeypatch.setitem(cli.ENGINES, "ftp", corrupted)
    assert cli.main(["verify", "--workload", str(w)]) == 1
    out = capsys.readouterr().out
    assert "ftp        FAIL first mismatch at (m, n, t) = (2, 3, 1)" in out
    assert out.count("PASS") == 3


def test_verify_unknown_engine(tmp_path):
    w = gen_small(tmp_path / "w")
    assert cli.main(["verify", "--workload", str(w), "--engines", "ftp,warp"]) == 2


def test_compare_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("LOAS_SIM_THREADS", "1")
    w = gen_small(tmp_path / "w")
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--workload", str(w), "--hw", HW, "--out", str(out),
                     "--energy", ENERGY]) == 0
    summary = json.loads((out / "compare.json").read_text())
    eng = summary["engines"]
    assert set(eng) == {"ftp", "ip-seq", "op-seq", "gust-seq"}
    assert eng["ip-seq"]["speedup_vs_ip_seq"] == 1.0
    assert eng["ftp"]["dram_bytes"]["psum"] == 0 == eng["ip-seq"]["dram_bytes"]["psum"]
    assert len({e["output_sha256"] for e in eng.values()}) == 1
    rows = list(csv.DictReader((out / "compare.csv").open()))
    assert len(rows) == 4 * 7


def test_compare_small_buffer_psum_only_in_op_gust(tmp_path, monkeypatch):
    monkeypatch.setenv("LOAS_SIM_THREADS", "1")
    w = gen_small(tmp_path / "w")
    hw = tmp_path / "hw"
    hw.write_text("psum_buffer_bytes = 64\ncache_capacity_bytes = 1024\ncache_banks = 1\n"
                  "cache_associativity = 2\nmerger_ways = 2\n")
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--workload", str(w), "--hw", str(hw), "--out", str(out)]) == 0
    eng = json.loads((out / "compare.json").read_text())["engines"]
    assert eng["ftp"]["dram_bytes"]["psum"] == 0 == eng["ip-seq"]["dram_bytes"]["psum"]
    assert eng["op-seq"]["dram_bytes"]["psum"] > 0
    assert eng["gust-seq"]["sram_accesses"]["psum"] > 0


def test_compare_parallel_equals_serial(tmp_path, monkeypatch):
    w = gen_small(tmp_path / "w")
    res = []
    for threads in ("1", "2"):
        monkeypatch.setenv("LOAS_SIM_THREADS", threads)
        out = tmp_path / f"cmp{threads}"
        assert cli.main(["compare", "--workload", str(w), "--hw", HW, "--out", str(out)]) == 0
        res.append(((out / "compare.json").read_bytes(), (out / "compare.csv").read_bytes()))
    assert res[0] == res[1]


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LOAS_SIM_THREADS", "zero")
    w = gen_small(tmp_path / "w")
    assert cli.main(["compare", "--workload", str(w), "--hw", HW,
                     "--out", str(tmp_path / "c")]) == 2


def test_run_deterministic(tmp_path):
    w = gen_small(tmp_path / "w")
    outs = []
    for i in range(2):
        o = tmp_path / f"r{i}.json"
        cli.main(["run", "--engine", "gust-seq", "--workload", str(w), "--hw", HW,
                  "--energy", ENERGY, "--out", str(o), "--seed", "3"])
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]
