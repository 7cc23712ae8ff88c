"""Simulation reports and their JSON/CSV encodings."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .memory import CATEGORIES, TrafficCounters
from .snn import OutputSpikes

SCHEMA = 1

CSV_COLUMNS = [
    "engine", "workload", "config_hash", "seed", "row", "category",
    "dram_bytes", "sram_accesses", "total_cycles", "cache_hits", "cache_misses",
    "miss_rate", "energy_pj", "output_sha256",
]


def config_hash(*configs) -> str:
    """Stable short hash of one or more (dataclass) configurations."""
    canon = [asdict(c) if is_dataclass(c) else c for c in configs]
    blob = json.dumps(canon, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def output_digest(out: OutputSpikes) -> str:
    h = hashlib.sha256(np.asarray(out.shape, dtype="<u4").tobytes())
    h.update(np.packbits(out.data.reshape(-1)).tobytes())
    return h.hexdigest()


@dataclass
class SimReport:
    engine: str
    output: OutputSpikes
    total_cycles: int | None = None
    traffic: TrafficCounters | None = None
    cache_hits: int = 0
    cache_misses: int = 0
    op_counts: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    energy: dict | None = None
    workload_id: str = ""
    config_hash: str = ""
    seed: int | None = None

    @property
    def miss_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_misses / total if total else 0.0

    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "engine": self.engine,
            "workload": self.workload_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "output_shape": list(self.output.shape),
            "output_sha256": output_digest(self.output),
            "output_hex": np.packbits(self.output.data.reshape(-1)).tobytes().hex(),
        }
        if self.total_cycles is not None:
            d.update({
                "total_cycles": self.total_cycles,
                "dram_bytes": dict(self.traffic.dram),
                "sram_accesses": dict(self.traffic.sram),
                "dram_bytes_total": self.traffic.total_dram(),
                "sram_accesses_total": self.traffic.total_sram(),
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "miss_rate": self.miss_rate,
                "op_counts": dict(self.op_counts),
                "stats": dict(self.stats),
            })
        if self.energy is not None:
            d["energy"] = self.energy
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list[dict]:
        base = {"engine": self.engine, "workload": self.workload_id,
                "config_hash": self.config_hash, "seed": self.seed,
                "output_sha256": output_digest(self.output)}
        rows = []
        if self.traffic is not None:
            for cat in CATEGORIES:
                e = ""
                if self.energy is not None:
                    br = self.energy["breakdown_pj"]
                    e = br.get(f"dram:{cat}", 0.0) + br.get(f"sram:{cat}", 0.0)
                rows.append({**base, "row": "category", "category": cat,
                             "dram_bytes": self.traffic.dram[cat],
                             "sram_accesses": self.traffic.sram[cat], "energy_pj": e})
        summary = {**base, "row": "summary", "category": "all"}
        if self.traffic is not None:
            summary.update({
                "dram_bytes": self.traffic.total_dram(),
                "sram_accesses": self.traffic.total_sram(),
                "total_cycles": self.total_cycles,
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "miss_rate": f"{self.miss_rate:.6f}",
                "energy_pj": "" if self.energy is None else self.energy["total_pj"],
            })
        rows.append(summary)
        return rows


def rows_to_csv(rows: list[dict], columns: list[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
