"""Weight-space alignment and element-wise combination of small ReLU networks."""

from .errors import ConfigError, DimensionError, DivergenceError, FormatError, ValidationError
from .nets import (Architecture, ModelWeights, PermutationSet, apply_permutation, flatten, forward,
                   hidden_outputs, layer_index_vector, unflatten)
from .training import (CosineWarmup, Dataset, DatasetSpec, StepThirds, TrainConfig, default_arch,
                       make_dataset, train, train_model)
from .align import (AlignResult, PerturbationSpec, activation_correlations, alignment_objective,
                    derange_lowest_k, random_derangement, solve_lap_max, weight_match)
from .combine import (CoefficientVector, SamplerSpec, combine_elementwise, combine_three,
                      min_max_vertex, sample_coefficients, solve_truncexp_rate)
from .evaluation import (AgreementCounts, BarrierReport, EvalMetrics, SweepResult, agreement_analysis,
                         edge_lengths, empirical_barrier, evaluate, loss_barrier, perturbation_sweep,
                         run_sweep, triangle_heatmap, width_ablation)
from .archive import load_permutation, load_weights, save_permutation, save_weights
from .config import ExperimentConfig, load_config, parse_config
from .report import emit_results

__version__ = "0.1.0"
