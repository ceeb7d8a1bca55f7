"""OFDM peak-to-average power ratio reduction lab.

Signal synthesis and PAPR measurement, a randomized pilot-sign search, a
reproducible labelled corpus, a small neural network that learns the search's
pilot choices, and CCDF / operation-count evaluation.
"""

from .dataset import (
    DatasetMeta,
    PaprDataset,
    coverage_fraction,
    generate,
    load,
    make_meta,
    sample_space_size,
    save,
)
from .errors import BudgetError, DatasetFormatError, DomainError, IntegrityError
from .evaluation import (
    CcdfCurve,
    ComplexityReport,
    ccdf,
    compare_methods,
    complexity_report,
    mean_trials,
    papr_at_ccdf,
)
from .mcsa import (
    McsaConfig,
    McsaResult,
    PilotConfig,
    exhaustive_search,
    insert_pilots,
    mcsa_search,
)
from .neural import (
    MlpModel,
    TrainConfig,
    TrainTrace,
    backward,
    forward,
    init_model,
    load_model,
    mse_loss,
    predict_pilots,
    save_model,
    train,
)
from .signal import (
    Modulation,
    SpectrumSymbol,
    TimeSignal,
    idft,
    map_qam16,
    map_qpsk,
    mean_energy,
    papr_db,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
