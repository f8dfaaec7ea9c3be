"""Sparse, retention-regularized low-rank adaptation on a toy benchmark."""

from .adapter import (LoraAdapter, apply_masks, build_mask, delta_weight, init_adapter,
                      merge, structural_sparsity)
from .errors import (ConfigError, DimensionError, NormalizationError, ParameterError,
                     SculptError, StateError, TrainingError)
from .numcore import RandomStream, frobenius_norm, hadamard, l1_norm, matmul, sample_gaussian
from .regularizer import (RegGrad, RegularizerConfig, cmr_frobenius, cmr_frobenius_grad,
                          cmr_l1, cmr_l1_grad, total_loss)
from .retention import RetentionMask, importance_scores, retention_mask
from .theory import (SparsitySpec, TheoryReport, concentration_bound,
                     expected_product_sparsity, monte_carlo_validate,
                     product_pattern_sparsity, sample_mask_pair)
from .trainer import (EvalReport, TrainConfig, evaluate, pretrain_base, train_baseline,
                      train_lorasculpt)

__version__ = "0.1.0"
