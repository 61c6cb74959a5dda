"""Command-line driver.

    reusesim run        simulate one kernel evaluation and write a report
    reusesim similarity per-frame similarity CSV for a dump directory
    reusesim sweep      grid of (similarity, shape, kernel) simulations

Exit codes: 0 ok, 1 usage error, 2 simulation fault. The REUSESIM_CONFIG
environment variable supplies a default --config path. Config files are JSON
or TOML with optional "machine" and "energy" sections.
"""

import argparse
import json
import os
import sys

from .energy import EnergyModel
from .kernels import KernelVariant
from .pipeline import MachineConfig, SimulationDeadlock, SimulationFault
from . import report as report_mod
from . import workloads
from .similarity import measure_stream

CONFIG_ENV = "REUSESIM_CONFIG"
KERNEL_CHOICES = [v.value for v in KernelVariant]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(path):
    if path is None:
        return MachineConfig(), EnergyModel()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as f:
            data = tomllib.load(f)
    else:
        with open(path) as f:
            data = json.load(f)
    machine = data.get("machine", data if "energy" not in data else {})
    energy = data.get("energy", {})
    return MachineConfig.from_dict(machine), EnergyModel.from_dict(energy)


def parse_shape(text):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as e:
        raise UsageError(f"bad --shape {text!r}, expected IxO") from e


def _common_flags(p):
    p.add_argument("--config", default=os.environ.get(CONFIG_ENV),
                   help="machine/energy config (json or toml); "
                        f"default from ${CONFIG_ENV}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")


def build_parser():
    p = _Parser(prog="reusesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="simulate one kernel evaluation")
    run.add_argument("--kernel", required=True, choices=KERNEL_CHOICES)
    run.add_argument("--similarity", type=float, default=0.5)
    run.add_argument("--zero-frac", type=float, default=0.5)
    run.add_argument("--shape", default="256x128")
    run.add_argument("--dataflow", choices=["os", "is"], default="os")
    run.add_argument("--dump", help="layer dump directory (overrides synthetic flags)")
    run.add_argument("--baseline", help="baseline report.json for derived metrics")
    run.add_argument("--check-oracle", action="store_true",
                     help="also run the in-order oracle and compare outputs")
    _common_flags(run)

    sim = sub.add_parser("similarity", help="similarity analysis of a dump")
    sim.add_argument("--dump", required=True)
    _common_flags(sim)

    sweep = sub.add_parser("sweep", help="grid of simulations")
    sweep.add_argument("--kernel", default="sensor-basic,sensor-reuse",
                       help="comma-separated kernel variants")
    sweep.add_argument("--similarity", default="0.0,0.5,1.0",
                       help="comma-separated similarity grid")
    sweep.add_argument("--shape", default="256x128",
                       help="comma-separated IxO grid")
    sweep.add_argument("--zero-frac", type=float, default=0.5)
    sweep.add_argument("--dataflow", choices=["os", "is"], default="os")
    _common_flags(sweep)
    return p


def _load_pair(args):
    if args.dump:
        layers = workloads.read_dump(args.dump)
        layer = layers[0]
        frames = layer.frames()
        return frames[0], frames[1], layer.weights()
    shape = parse_shape(args.shape)
    prev, curr, w = report_mod.prepare_workload(shape, args.similarity,
                                                args.zero_frac, args.seed)
    return prev, curr, w


def cmd_run(args):
    config, energy = load_config(args.config)
    prev, curr, w = _load_pair(args)
    rep = report_mod.run_experiment(args.kernel, curr, prev, w, config=config,
                                    energy_model=energy, dataflow=args.dataflow,
                                    check_oracle=args.check_oracle)
    if args.check_oracle and rep["oracle_match"] is False:
        raise SimulationFault("pipeline output diverged from the in-order oracle")
    if args.baseline:
        with open(args.baseline) as f:
            report_mod.derive_metrics(rep, json.load(f))
    name = (f"run-{args.kernel}-{w.rows}x{w.cols}"
            f"-s{args.similarity:g}-seed{args.seed}")
    path = report_mod.write_report(rep, args.out, name)
    s = rep["stats"]
    print(f"{args.kernel}: cycles={s['cycles']} committed={s['committed']} "
          f"skipped_compute_fraction={rep.get('skipped_compute_fraction', 0.0):.4f}")
    print(f"report: {path}")
    return 0


SIM_COLUMNS = ("layer", "kind", "frame_pair", "n", "total", "zero_identical",
               "nonzero_identical", "per_subvector4_all_zero")


def cmd_similarity(args):
    layers = workloads.read_dump(args.dump)
    rows = []
    per_layer = []
    for layer in layers:
        reports = measure_stream(layer.frames())
        for k, r in enumerate(reports):
            rows.append((layer.name, "frame", f"{k}-{k + 1}", r.n, r.total,
                         r.zero_identical, r.nonzero_identical,
                         r.per_subvector4_all_zero))
        mean = [sum(getattr(r, f) for r in reports) / len(reports)
                for f in ("total", "zero_identical", "nonzero_identical",
                          "per_subvector4_all_zero")]
        per_layer.append((layer.name, reports[0].n, mean))
        rows.append((layer.name, "layer-mean", f"0-{len(reports)}",
                     reports[0].n, *mean))
    total_n = sum(n for _name, n, _m in per_layer)
    unweighted = [sum(m[i] for _l, _n, m in per_layer) / len(per_layer)
                  for i in range(4)]
    weighted = [sum(m[i] * n for _l, n, m in per_layer) / total_n
                for i in range(4)]
    rows.append(("ALL", "aggregate-unweighted", "-", total_n, *unweighted))
    rows.append(("ALL", "aggregate-size-weighted", "-", total_n, *weighted))

    lines = [",".join(SIM_COLUMNS)]
    lines += [",".join(str(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    path = os.path.join(args.out, "similarity.csv")
    report_mod.write_atomic(path, text)
    sys.stdout.write(text)
    print(f"report: {path}")
    return 0


SWEEP_COLUMNS = ("similarity", "shape", "kernel", "dataflow", "cycles",
                 "committed", "skipped_compute_pct", "exec_reduction_vs_sensor_basic_pct",
                 "speedup_vs_sdot_basic", "dcache_reduction_vs_sensor_basic_pct",
                 "dynamic_energy", "total_energy")


def cmd_sweep(args):
    config, energy = load_config(args.config)
    kernels = [k.strip() for k in args.kernel.split(",") if k.strip()]
    for k in kernels:
        if k not in KERNEL_CHOICES:
            raise UsageError(f"unknown kernel {k!r}")
    sims = [float(s) for s in args.similarity.split(",") if s.strip()]
    shapes = [parse_shape(s) for s in args.shape.split(",") if s.strip()]

    rows = []
    for shape in shapes:
        prev, curr, w = None, None, None
        refs = {}
        for sim in sims:
            prev, curr, w = report_mod.prepare_workload(
                shape, sim, args.zero_frac, args.seed)
            key = (shape, sim)
            refs[key] = {}
            for ref_kernel in ("sensor-basic", "sdot-basic"):
                try:
                    refs[key][ref_kernel] = report_mod.run_experiment(
                        ref_kernel, curr, prev, w, config=config,
                        energy_model=energy, dataflow=args.dataflow)
                except ValueError:
                    refs[key][ref_kernel] = None  # shape not kernel-aligned
            for kernel in kernels:
                if kernel in refs[key] and refs[key][kernel] is not None:
                    rep = refs[key][kernel]
                else:
                    rep = report_mod.run_experiment(
                        kernel, curr, prev, w, config=config,
                        energy_model=energy, dataflow=args.dataflow)
                sb = refs[key]["sensor-basic"]
                sd = refs[key]["sdot-basic"]
                s = rep["stats"]
                skipped = 100.0 * rep.get("skipped_compute_fraction", 0.0)
                exec_red = (100.0 * (1 - s["cycles"] / sb["stats"]["cycles"])
                            if sb else float("nan"))
                speedup = (sd["stats"]["cycles"] / s["cycles"]) if sd else float("nan")
                dcache_red = (100.0 * (1 - s["l1d_accesses"] / sb["stats"]["l1d_accesses"])
                              if sb else float("nan"))
                rows.append((sim, f"{shape[0]}x{shape[1]}", kernel, args.dataflow,
                             s["cycles"], s["committed"], skipped, exec_red,
                             speedup, dcache_red, rep["energy"]["dynamic"],
                             rep["energy"]["total"]))

    lines = [",".join(SWEEP_COLUMNS)]
    lines += [",".join(str(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    path = os.path.join(args.out, "sweep.csv")
    report_mod.write_atomic(path, text)
    sys.stdout.write(text)
    print(f"report: {path}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd == "run":
            return cmd_run(args)
        if args.cmd == "similarity":
            return cmd_similarity(args)
        return cmd_sweep(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (SimulationFault, SimulationDeadlock) as e:
        print(f"simulation fault: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
