"""Relevance vector machine classifiers trained by Newton/Laplace or Gibbs sampling."""
__version__ = "0.1.0"

from .errors import (ConfigurationError, InputError, NumericalError, ParseError, RVMError,
                     UndefinedMetricError)
from .kernel import KernelConfig, build_test_design, build_train_design, rbf_kernel
from .algorithms import (FitResult, GibbsTrace, TrainConfig, evaluate_fit, train,
                         train_generic, train_hierarchical, train_original)
from .samplers import RngStream
from .data import (Dataset, SimSpec, SplitSpec, imbalance_index, load_csv, simulate_gaussian,
                   stratified_split)
from .evaluation import (MetricsReport, RepeatSummary, Scenario, compute_metrics, run_repeats,
                         summarize_table)
