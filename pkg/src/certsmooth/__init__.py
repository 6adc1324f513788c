"""certsmooth: L2-certified robustness via randomized smoothing, with
prompt-learned adaptation of a zero-shot classification head."""

from .smoothing import (
    ABSTAIN,
    BaseClassifier,
    CertifyOutcome,
    ClassifierError,
    NoiseSpec,
    certified_radius,
    certify,
    predict,
    sample_under_noise,
)
from .stats import (
    binom_two_sided_pvalue,
    clopper_pearson_lower,
    std_normal_cdf,
    std_normal_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "BaseClassifier",
    "CertifyOutcome",
    "ClassifierError",
    "NoiseSpec",
    "binom_two_sided_pvalue",
    "certified_radius",
    "certify",
    "clopper_pearson_lower",
    "predict",
    "sample_under_noise",
    "std_normal_cdf",
    "std_normal_quantile",
    "__version__",
]
