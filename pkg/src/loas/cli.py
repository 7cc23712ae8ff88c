"""Command-line front end: ``loas-sim {gen,run,verify,compare}``.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 I/O or input-format error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from .baselines import BaselineConfig, run_ip_seq, run_gust_seq, run_op_seq
from .engine import HwConfig, run_ftp
from .innerjoin import TppeConfig
from .memory import CacheConfig, DramConfig, EnergyTable
from .report import CSV_COLUMNS, SCHEMA, SimReport, config_hash, rows_to_csv
from .snn import ConfigError, LifParams, reference_layer
from .workloads import (PRESETS, FormatError, SpecError, WorkloadSpec, load_workload, preset,
                        make_workload, save_workload, workload_id)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


# --- hardware and energy files ----------------------------------------------

_SECTIONS = {"tppe_": TppeConfig, "cache_": CacheConfig, "dram_": DramConfig}
_TOP = {"num_tppes": int, "broadcast_latency_cycles": int, "num_pes": int,
        "psum_buffer_bytes": int, "merger_ways": int, "join_setup_cycles": int}


def _hw_keys() -> dict:
    keys = dict(_TOP)
    for prefix, cls in _SECTIONS.items():
        for f in fields(cls):
            keys[prefix + f.name] = bool if f.type in (bool, "bool") else int
    return keys


HW_KEYS = _hw_keys()


def parse_kv(text: str, where: str) -> dict:
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{no}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out:
            raise ConfigError(f"{where}:{no}: duplicate key {k!r}")
        out[k] = v
    return out


def _convert(key: str, value: str, typ):
    if typ is bool:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return typ(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}") from None


@dataclass(frozen=True)
class HwBundle:
    """All engine configurations built from one hardware file."""

    ftp: HwConfig
    baseline: dict  # engine name -> BaselineConfig

    @property
    def hash(self) -> str:
        return config_hash(self.ftp, *self.baseline.values())


def hw_from_mapping(values: dict) -> HwBundle:
    unknown = sorted(set(values) - set(HW_KEYS))
    if unknown:
        raise ConfigError(f"unknown hardware keys: {unknown}")
    v = {k: _convert(k, s, HW_KEYS[k]) if isinstance(s, str) else s for k, s in values.items()}
    sub = {prefix: {k[len(prefix):]: x for k, x in v.items() if k.startswith(prefix)}
           for prefix in _SECTIONS}
    tppe = TppeConfig(**sub["tppe_"])
    cache = CacheConfig(**sub["cache_"])
    dram = DramConfig(**sub["dram_"])
    bl = v.get("broadcast_latency_cycles", 1)
    ftp = HwConfig(num_tppes=v.get("num_tppes", 16), tppe=tppe, cache=cache, dram=dram,
                   broadcast_latency_cycles=bl)
    base = {e: BaselineConfig(e, num_pes=v.get("num_pes", 16),
                              psum_buffer_bytes=v.get("psum_buffer_bytes", 32768),
                              merger_ways=v.get("merger_ways", 16),
                              join_setup_cycles=v.get("join_setup_cycles", 0),
                              broadcast_latency_cycles=bl, cache=cache, dram=dram)
            for e in ("ip-seq", "op-seq", "gust-seq")}
    return HwBundle(ftp, base)


def load_hw(path) -> HwBundle:
    return hw_from_mapping(parse_kv(_read_text(path), str(path)))


def load_energy(path) -> EnergyTable:
    raw = parse_kv(_read_text(path), str(path))
    vals = {}
    for k, s in raw.items():
        try:
            vals[k] = float(s)
        except ValueError:
            raise ConfigError(f"{k}: expected a number, got {s!r}") from None
    return EnergyTable.from_mapping(vals)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_IO) from e


# --- engines ----------------------------------------------------------------

def _oracle(A, B, p, hw, energy):
    return SimReport(engine="oracle", output=reference_layer(A, B, p), config_hash=hw.hash)


ENGINES = {
    "ftp": lambda A, B, p, hw, e: run_ftp(A, B, p, hw.ftp, e),
    "ip-seq": lambda A, B, p, hw, e: run_ip_seq(A, B, p, hw.baseline["ip-seq"], e),
    "op-seq": lambda A, B, p, hw, e: run_op_seq(A, B, p, hw.baseline["op-seq"], e),
    "gust-seq": lambda A, B, p, hw, e: run_gust_seq(A, B, p, hw.baseline["gust-seq"], e),
    "oracle": _oracle,
}
SIM_ENGINES = ("ftp", "ip-seq", "op-seq", "gust-seq")


def run_engine(name, A, B, p, hw: HwBundle, energy=None, seed=None) -> SimReport:
    r = ENGINES[name](A, B, p, hw, energy)
    r.workload_id = workload_id(A, B, p)
    r.config_hash = hw.hash
    r.seed = seed
    return r


def _run_task(args):
    # top-level so it can be sent to worker processes
    return run_engine(*args)


def max_workers() -> int:
    raw = os.environ.get("LOAS_SIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LOAS_SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("LOAS_SIM_THREADS must be >= 1")
    return n


def run_many(names, A, B, p, hw, energy=None, seed=None) -> dict:
    tasks = [(n, A, B, p, hw, energy, seed) for n in names]
    workers = min(max_workers(), len(tasks))
    if workers <= 1:
        return {n: _run_task(t) for n, t in zip(names, tasks)}
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return dict(zip(names, ex.map(_run_task, tasks)))


# --- commands ---------------------------------------------------------------

def _load(path):
    try:
        return load_workload(path)
    except FileNotFoundError as e:
        raise CliError(f"cannot read {path}: no such file", EXIT_IO) from e
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_IO) from e
    except FormatError as e:
        raise CliError(f"{path}: {e}", EXIT_IO) from e


def _write(path, data: str | bytes):
    try:
        p = Path(path)
        if isinstance(data, bytes):
            p.write_bytes(data)
        else:
            p.write_text(data)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}", EXIT_IO) from e


def cmd_gen(args) -> int:
    lif = LifParams(args.v_th, args.tau_log2, args.u_init)
    if args.preset:
        spec = preset(args.preset, seed=args.seed, lif=lif)
        over = {k: getattr(args, k) for k in ("T", "M", "N", "K", "spike_sparsity",
                                              "silent_fraction", "weight_sparsity")
                if getattr(args, k) is not None}
        if over:
            spec = spec.with_(**over)
    else:
        need = ("T", "M", "N", "K", "spike_sparsity", "silent_fraction", "weight_sparsity")
        missing = [k for k in need if getattr(args, k) is None]
        if missing:
            raise CliError("without --preset, these flags are required: "
                           + ", ".join("--" + k.replace("_", "-") for k in missing), EXIT_USAGE)
        spec = WorkloadSpec("custom", *(getattr(args, k) for k in need), lif, args.seed)
    A, B, p = make_workload(spec)
    try:
        save_workload(A, B, p, args.out)
    except OSError as e:
        raise CliError(f"cannot write {args.out}: {e.strerror}", EXIT_IO) from e
    return EXIT_OK


def cmd_run(args) -> int:
    hw = load_hw(args.hw)
    energy = load_energy(args.energy) if args.energy else None
    A, B, p = _load(args.workload)
    r = run_engine(args.engine, A, B, p, hw, energy, args.seed)
    _write(args.out, r.to_json() if args.format == "json" else rows_to_csv(r.csv_rows()))
    return EXIT_OK


def cmd_verify(args) -> int:
    hw = load_hw(args.hw) if args.hw else hw_from_mapping({})
    A, B, p = _load(args.workload)
    names = [n.strip() for n in args.engines.split(",") if n.strip()]
    bad = [n for n in names if n not in ENGINES]
    if bad:
        raise CliError(f"unknown engines: {', '.join(bad)}", EXIT_USAGE)
    ref = reference_layer(A, B, p)
    ok = True
    for n in names:
        out = ENGINES[n](A, B, p, hw, None).output
        where = ref.first_mismatch(out)
        if where is None:
            print(f"{n:<10} PASS")
        else:
            ok = False
            print(f"{n:<10} FAIL first mismatch at (m, n, t) = {where}")
    return EXIT_OK if ok else EXIT_FAIL


def compare_rows(reports: dict) -> tuple[dict, list]:
    base = reports["ip-seq"].total_cycles
    summary = {"schema": SCHEMA, "baseline": "ip-seq", "engines": {}}
    rows = []
    for name, r in reports.items():
        d = r.to_dict()
        d.pop("output_hex", None)
        d["speedup_vs_ip_seq"] = base / r.total_cycles if r.total_cycles else None
        summary["engines"][name] = d
        for row in r.csv_rows():
            row["speedup_vs_ip_seq"] = d["speedup_vs_ip_seq"] if row["row"] == "summary" else ""
            rows.append(row)
    first = next(iter(reports.values()))
    summary.update(workload=first.workload_id, config_hash=first.config_hash, seed=first.seed)
    return summary, rows


def cmd_compare(args) -> int:
    hw = load_hw(args.hw)
    energy = load_energy(args.energy) if args.energy else None
    A, B, p = _load(args.workload)
    reports = run_many(SIM_ENGINES, A, B, p, hw, energy, args.seed)
    summary, rows = compare_rows(reports)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create {out}: {e.strerror}", EXIT_IO) from e
    _write(out / "compare.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write(out / "compare.csv", rows_to_csv(rows, CSV_COLUMNS + ["speedup_vs_ip_seq"]))
    for name, d in summary["engines"].items():
        print(f"{name:<10} cycles={d['total_cycles']:<10} speedup={d['speedup_vs_ip_seq']:.2f} "
              f"dram={d['dram_bytes_total']} sram={d['sram_accesses_total']} "
              f"miss_rate={d['miss_rate']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loas-sim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a synthetic workload file")
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    for k in ("T", "M", "N", "K"):
        g.add_argument(f"--{k}", type=int)
    for k in ("spike-sparsity", "silent-fraction", "weight-sparsity"):
        g.add_argument(f"--{k}", type=float)
    g.add_argument("--v-th", type=int, default=0)
    g.add_argument("--tau-log2", type=int, default=1)
    g.add_argument("--u-init", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one engine and write a report")
    r.add_argument("--engine", required=True, choices=list(ENGINES))
    r.add_argument("--workload", required=True)
    r.add_argument("--hw", required=True)
    r.add_argument("--energy")
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check engines against the oracle")
    v.add_argument("--workload", required=True)
    v.add_argument("--engines", default=",".join(SIM_ENGINES))
    v.add_argument("--hw")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="run all engines and compare them")
    c.add_argument("--workload", required=True)
    c.add_argument("--hw", required=True)
    c.add_argument("--energy")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ConfigError, SpecError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
