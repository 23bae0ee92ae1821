"""diffwa: diffusion-based blind-watermark removal toolkit.

Train a watermark codec as the target, train conditional/unconditional
denoisers, remove embedded watermarks with distance-guided sampling, and
evaluate fidelity and payload survival.
"""

__version__ = "0.1.0"

from . import analysis, codec, diffusion, guidance  # noqa: F401
from .attack import (AttackConfig, Estimator, EstimatorTrainConfig, attack,  # noqa: F401
                     attack_with_estimator, combinatorial_attack, train_estimator)
from .errors import (ConfigurationError, DiffwaError, NumericError, ParseError,  # noqa: F401
                     StartupError, TrainingError, ValidationError)
from .seeds import SeedStreams  # noqa: F401
