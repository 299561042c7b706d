"""Item response theory fitting by marginal maximum likelihood EM and stochastic variational inference."""

from . import registry
from .api import fit, train
from .dataset import ResponsePatternDataset, SimulationSpec, build, simulate, split_batches
from .errors import (
    ContractError,
    ConvergenceError,
    DomainError,
    FormatError,
    IRTError,
    ParseError,
    RegistryError,
    TrainingError,
)
from .io import ParametersDocument, read_jsonlines, read_parameters, write_jsonlines, write_parameters
from .mml_em import MMLConfig, fit_mml, make_quadrature, map_ability
from .models import (
    AbilityParams,
    ItemParams,
    ModelKind,
    bernoulli_log_prob,
    dataset_log_likelihood,
    icc_1pl,
    icc_2pl,
    icc_3pl,
    icc_4pl_feasibility,
)
from .registry import ModelRegistration
from .report import FitReport
from .vi_engine import PriorSpec, TrainConfig, VariationalPosterior, fit_svi

__version__ = "0.1.0"
