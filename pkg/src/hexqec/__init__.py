"""Heavy-hex code simulation toolkit.

Builds heavy-hex memory and stability patches, their syndrome-extraction
circuits (two-step flag-based and single-step low-depth variants, with or
without resets), annotates them with a six-parameter circuit noise model,
samples them with a bit-packed Pauli-frame engine validated against an
exact tableau simulator, compiles detector error models by single-fault
enumeration, decodes with exact minimum-weight matching, and fits decay
curves and noise parameters.  A per-qubit density-matrix simulator backs
the randomized-benchmarking protocols.
"""

__version__ = "0.1.0"

from .lattice import (Basis, Check, ObservableKind, ObservableSpec, Patch,
                      QubitRole, Stabilizer, build_memory_patch,
                      build_stability_patch, patch_from_json, patch_to_json,
                      validate_patch)
from .circuit import (Circuit, DurationTable, Instruction,
                      assemble_experiment, build_improved_cycle,
                      build_original_cycle, cancel_adjacent_gates,
                      circuit_from_text, circuit_to_text, decompose_nn_cx)
from .noise import (NoiseModel, NoisyCircuit, annotate, default_fitted_model,
                    scale_parameter)
from .tableau import Tableau, reference_run
from .frame import FrameBatch, Seed, sample, tableau_monte_carlo
from .density import DeviceParams, QubitParams, density_run
from .dem import (DemGraph, DetectorConvention, DetectorSpec, compile_dem,
                  define_detectors, dem_from_text, dem_to_text,
                  fault_distance)
from .decoder import Matching, MatchingDecoder, all_pairs_paths, decode_batch, match
from .experiments import (MemoryResult, StabilityResult, SweepResult,
                          fit_noise_model, run_memory, run_stability,
                          run_sweep)
from . import rb
