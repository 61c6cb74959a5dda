"""reusesim: out-of-order CPU simulation of computation reuse for int8 kernels.

A numpy-backed library with four layers:

* tensors / similarity: int8 data containers and input-similarity analysis;
* kernels: bit-exact functional semantics of the six kernel variants;
* isa / programs / pipeline / sensor: the simulated machine, the software
  kernel instruction streams, the cycle-approximate out-of-order core, and
  the CRS instruction-generation engine with reuse skipping;
* workloads / energy / report / cli: workload staging, the event-cost energy
  proxy, experiment reports, and the `reusesim` command-line driver.
"""

from .energy import EnergyModel, energy_account
from .kernels import KernelVariant, run_kernel
from .pipeline import MachineConfig, Pipeline, SimStats
from .report import run_experiment
from .sensor import ReuseSensor, split_overflow
from .similarity import SimilarityReport, measure, measure_stream
from .tensors import (
    AccumTensor,
    Dataflow,
    KernelMode,
    LayerSpec,
    Layout,
    QuantTensor,
    delta,
    interleave_weights,
)
from .workloads import SyntheticSpec, generate, generate_frames, stage_layer

__version__ = "0.1.0"

__all__ = [
    "AccumTensor", "Dataflow", "EnergyModel", "KernelMode", "KernelVariant",
    "LayerSpec", "Layout", "MachineConfig", "Pipeline", "QuantTensor",
    "ReuseSensor", "SimStats", "SimilarityReport", "SyntheticSpec", "delta",
    "energy_account", "generate", "generate_frames", "interleave_weights",
    "measure", "measure_stream", "run_experiment", "run_kernel",
    "split_overflow", "stage_layer",
]
