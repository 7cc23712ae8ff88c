#!/usr/bin/env python3
"""Sweep T over the leading timesteps of one tensor: FTP stays flat, baselines grow.

    python3 scripts/timestep_sweep.py [--preset V-L8] [--rows 16] [--psum-buffer 1024]
"""
import argparse

from loas.baselines import BaselineConfig, run_gust_seq, run_ip_seq, run_op_seq
from loas.engine import run_ftp
from loas.snn import SpikeTensor
from loas.workloads import make_workload, preset


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="V-L8")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, default=16, help="rows of A to keep")
    ap.add_argument("--psum-buffer", type=int, default=1024, help="OP psum buffer bytes")
    args = ap.parse_args(argv)
    base = preset(args.preset, seed=args.seed)
    A8, B, p = make_workload(base.with_(T=8, M=min(args.rows, base.M)))
    op_cfg = BaselineConfig("op-seq", psum_buffer_bytes=args.psum_buffer)
    print("T,engine,total_cycles,dram_bytes,a_metadata_dram,psum_dram_bytes")
    for T in (1, 2, 4, 8):
        # the first T timesteps of one T=8 tensor
        A = SpikeTensor(A8.data[:, :, :T].copy())
        for name, r in (("ftp", run_ftp(A, B, p)), ("ip-seq", run_ip_seq(A, B, p)),
                        ("op-seq", run_op_seq(A, B, p, op_cfg)),
                        ("gust-seq", run_gust_seq(A, B, p))):
            print(f"{T},{name},{r.total_cycles},{r.traffic.total_dram()},"
                  f"{r.traffic.dram['A-metadata']},{r.traffic.dram['psum']}")


if __name__ == "__main__":
    main()
