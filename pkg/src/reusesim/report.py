"""Experiment orchestration and report assembly.

run_experiment wires one workload through staging, program construction, the
pipeline (plus the CRS engine for sensor variants) and energy accounting, and
returns a report dict carrying the full raw counters next to every derived
metric, so each percentage can be recomputed from the embedded counters.
"""

import json
import os
import tempfile

import numpy as np

from . import workloads
from .energy import EnergyModel, energy_account
from .isa import MachineState, run_inorder
from .kernels import KernelVariant, run_kernel
from .pipeline import MachineConfig, Pipeline
from .programs import build_program
from .sensor import ReuseSensor, functional_crs
from .similarity import measure
from .tensors import Dataflow, KernelMode, QuantTensor

REPORT_SCHEMA = "reusesim-report-v1"


def _dataflow(name):
    return Dataflow.INPUT_STATIONARY if name in ("is", Dataflow.INPUT_STATIONARY) \
        else Dataflow.OUTPUT_STATIONARY


def prepare_workload(shape, similarity, zero_frac, seed):
    spec = workloads.SyntheticSpec(input_len=shape[0], output_len=shape[1],
                                   target_similarity=similarity,
                                   zero_fraction_of_similarity=zero_frac,
                                   seed=seed)
    return workloads.generate(spec)


def run_experiment(variant, curr, prev, weights, config: MachineConfig = None,
                   energy_model: EnergyModel = None, dataflow="os",
                   check_oracle=False, inject_fault_seq=-1,
                   collect_trace=False):
    """Simulate one kernel evaluation of one layer; return the report dict."""
    variant = KernelVariant(variant)
    config = config or MachineConfig()
    energy_model = energy_model or EnergyModel()
    dataflow = _dataflow(dataflow)
    config.trace = collect_trace

    layer_mode = KernelMode.REUSE if variant.is_reuse else KernelMode.BASIC
    n_in, n_out = weights.rows, weights.cols

    # the framework owns the previous evaluation: its output seeds reuse runs
    prev_layer_out = None
    functional = None
    if variant.is_reuse:
        from .tensors import LayerSpec
        probe = LayerSpec(input_len=n_in, output_len=n_out, input_addr=0,
                          weight_addr=1 << 20, output_addr=2 << 20,
                          prev_input_addr=3 << 20)
        prev_layer_out = run_kernel(KernelVariant.SENSOR_BASIC, probe, prev,
                                    weights).output

    state = MachineState(mem_size=config.mem_size, int_prf=config.int_prf,
                         fp_prf=config.fp_prf, vec_prf=config.vec_prf)
    staged = workloads.stage_layer(state.mem, curr, prev, weights,
                                   prev_output=prev_layer_out, mode=layer_mode,
                                   dataflow=dataflow)
    program = build_program(variant, staged)

    kwargs = {}
    if variant.is_reuse:
        kwargs = dict(prev_inputs=prev, prev_output=prev_layer_out)
    functional = run_kernel(variant, staged.layer, curr, weights, **kwargs)

    sensor = None
    if variant.is_sensor:
        sensor = ReuseSensor(gen_width=config.sensor_gen_width,
                             restore_cycles=config.sensor_restore_cycles)

    oracle_branches = None
    if config.predictor in ("perfect", "perverse"):
        oracle_branches = []
        ostate = MachineState(mem_size=config.mem_size)
        workloads.stage_layer(ostate.mem, curr, prev, weights,
                              prev_output=prev_layer_out, mode=layer_mode,
                              dataflow=dataflow)
        run_inorder(program, ostate, crs_handler=functional_crs,
                    branch_trace=oracle_branches)

    pipe = Pipeline(config, state, program, sensor=sensor,
                    oracle_branches=oracle_branches,
                    inject_fault_seq=inject_fault_seq)
    stats = pipe.run()

    outputs = workloads.read_outputs(state.mem, staged)
    oracle_match = None
    if check_oracle:
        ref = MachineState(mem_size=config.mem_size)
        workloads.stage_layer(ref.mem, curr, prev, weights,
                              prev_output=prev_layer_out, mode=layer_mode,
                              dataflow=dataflow)
        run_inorder(program, ref, crs_handler=functional_crs)
        ref_out = workloads.read_outputs(ref.mem, staged)
        oracle_match = bool(np.array_equal(outputs, ref_out))

    sim = measure(curr, prev)
    report = {
        "schema": REPORT_SCHEMA,
        "variant": variant.value,
        "shape": [n_in, n_out],
        "dataflow": "is" if dataflow is Dataflow.INPUT_STATIONARY else "os",
        "config": config.to_dict(),
        "energy_model": energy_model.to_dict(),
        "similarity": sim.as_row(),
        "stats": stats.to_dict(),
        "kernel_counts": functional.op_counts,
        "energy": energy_account(stats, energy_model),
        "output_checksum": int(np.bitwise_xor.reduce(outputs.view(np.uint32))) if n_out else 0,
        "oracle_match": oracle_match,
    }
    if variant.is_sensor:
        gen = stats.sensor_mla8 + stats.sensor_mla8_skipped
        report["skipped_compute_fraction"] = (
            stats.sensor_mla8_skipped / gen if gen else 0.0)
        report["skipped_weight_load_fraction"] = (
            stats.sensor_weight_loads_skipped
            / max(1, stats.sensor_weight_loads + stats.sensor_weight_loads_skipped))
    report["_outputs"] = outputs  # stripped before serialization
    if collect_trace:
        report["_trace"] = pipe.trace_lines
    return report


def derive_metrics(report, baseline):
    """Attach metrics comparing a run against a named baseline run."""
    s, b = report["stats"], baseline["stats"]
    e, be = report["energy"], baseline["energy"]

    def pct_drop(now, ref):
        return 100.0 * (1.0 - now / ref) if ref else 0.0

    report["derived"] = {
        "baseline_variant": baseline["variant"],
        "speedup": b["cycles"] / s["cycles"] if s["cycles"] else 0.0,
        "exec_time_reduction_pct": pct_drop(s["cycles"], b["cycles"]),
        "instruction_reduction_pct": pct_drop(
            s["committed"], b["committed"]),
        "frontend_reduction_pct": pct_drop(s["decoded"], b["decoded"]),
        "icache_reduction_pct": pct_drop(s["icache_accesses"], b["icache_accesses"]),
        "dcache_reduction_pct": pct_drop(s["l1d_accesses"], b["l1d_accesses"]),
        "branch_reduction_pct": pct_drop(s["branches"], b["branches"]),
        "dynamic_energy_reduction_pct": pct_drop(e["dynamic"], be["dynamic"]),
        "total_energy_reduction_pct": pct_drop(e["total"], be["total"]),
    }
    return report


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def serializable(report):
    return {k: v for k, v in report.items() if not k.startswith("_")}


def write_report(report, out_dir, name):
    """JSON + flat CSV of the same counters; returns the JSON path."""
    data = serializable(report)
    json_path = os.path.join(out_dir, f"{name}.json")
    write_atomic(json_path, json.dumps(data, indent=1, sort_keys=True) + "\n")
    flat = flatten_report(data)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    header = ",".join(flat)
    row = ",".join(str(v) for v in flat.values())
    write_atomic(csv_path, f"schema={REPORT_SCHEMA}\n{header}\n{row}\n")
    return json_path


def flatten_report(data, prefix="", out=None):
    out = {} if out is None else out
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flatten_report(v, prefix=f"{key}.", out=out)
        elif isinstance(v, (list, tuple)):
            out[key] = "x".join(str(x) for x in v)
        else:
            out[key] = v
    return out
