"""Zero-bias audit laboratory for the STOA and TSA population updates."""

from .core import RandomStream, SearchBox, draw_uniform, hadamard_div, hadamard_mul
from .engines import EngineConfig, OptimizerState, Stage, make_taps, stoa_iterate, tsa_iterate
from .lab import AuditProtocol, EmpiricalDensity, bias_report, estimate_density, stage_audit
from .bench import BenchmarkProblem, CoverageModel, ExperimentSpec, make_problem, run_experiment, zero_bias_verdict

__version__ = "0.1.0"
