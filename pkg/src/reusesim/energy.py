"""Linear event-cost energy proxy.

Energy is a transparent sum of per-event costs times event counts plus a
static term proportional to cycles. Costs are unit-relative model parameters,
not calibrated joules; every reported energy claim is therefore directional
and carries the model alongside the numbers.
"""

from dataclasses import dataclass, asdict


@dataclass
class EnergyModel:
    icache_access: float = 4.0
    decode_op: float = 1.0
    rename_op: float = 1.0
    issue_op: float = 1.0
    int_alu: float = 1.0
    vec_fu: float = 4.0
    l1_access: float = 2.0
    l2_access: float = 12.0
    dram_access: float = 120.0
    rf_read: float = 0.5
    rf_write: float = 1.0
    scratchpad_access: float = 1.0
    static_power_per_cycle: float = 12.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"energy cost {k} must be >= 0")

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        m = EnergyModel()
        for k, v in d.items():
            if not hasattr(m, k):
                raise ValueError(f"unknown energy model field {k!r}")
            setattr(m, k, float(v))
        m.__post_init__()
        return m


def energy_account(stats, model: EnergyModel) -> dict:
    """Dynamic/static/total energy with a four-way component breakdown.

    frontend: instruction fetch, decode and rename-table events;
    backend: issue, functional units and register file traffic;
    caches_memory: L1/L2/DRAM accesses; sensor: scratchpad traffic.
    """
    s = stats.to_dict() if hasattr(stats, "to_dict") else dict(stats)
    frontend = (model.icache_access * s["icache_accesses"]
                + model.decode_op * s["decoded"]
                + model.rename_op * s["renamed"])
    backend = (model.issue_op * s["issued"]
               + model.int_alu * s["int_alu_ops"]
               + model.vec_fu * s["vec_fu_ops"]
               + model.rf_read * s["rf_reads"]
               + model.rf_write * s["rf_writes"])
    caches = (model.l1_access * s["l1d_accesses"]
              + model.l2_access * s["l2_accesses"]
              + model.dram_access * s["dram_accesses"])
    sensor = model.scratchpad_access * s["scratchpad_accesses"]
    dynamic = frontend + backend + caches + sensor
    static = model.static_power_per_cycle * s["cycles"]
    return {
        "dynamic": dynamic,
        "static": static,
        "total": dynamic + static,
        "components": {
            "frontend": frontend,
            "backend": backend,
            "caches_memory": caches,
            "sensor": sensor,
        },
    }
