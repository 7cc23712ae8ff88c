#!/usr/bin/env python3
"""Run every engine on the layer presets and print cycles, speedup and traffic.

    python3 scripts/run_compare.py [--presets A-L4,V-L8,R-L19] [--seed 0] [--csv out.csv]
"""
import argparse
import csv
import sys

from loas.baselines import run_gust_seq, run_ip_seq, run_op_seq
from loas.engine import run_ftp
from loas.workloads import make_workload, preset

ENGINES = {"ftp": run_ftp, "ip-seq": run_ip_seq, "op-seq": run_op_seq, "gust-seq": run_gust_seq}
COLUMNS = ["preset", "engine", "total_cycles", "speedup_vs_ip_seq", "dram_bytes",
           "psum_dram_bytes", "sram_accesses", "miss_rate"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", default="A-L4,V-L8,R-L19")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    rows = []
    for name in args.presets.split(","):
        A, B, p = make_workload(preset(name, seed=args.seed))
        reports = {e: fn(A, B, p) for e, fn in ENGINES.items()}
        ip = reports["ip-seq"].total_cycles
        for e, r in reports.items():
            rows.append({"preset": name, "engine": e, "total_cycles": r.total_cycles,
                         "speedup_vs_ip_seq": round(ip / r.total_cycles, 3),
                         "dram_bytes": r.traffic.total_dram(),
                         "psum_dram_bytes": r.traffic.dram["psum"],
                         "sram_accesses": r.traffic.total_sram(),
                         "miss_rate": round(r.cache_misses / max(1, r.cache_hits + r.cache_misses), 4)})
    w = csv.DictWriter(open(args.csv, "w", newline="") if args.csv else sys.stdout, COLUMNS)
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
