"""Growth rates, mu-dichotomies, mu-spectra and hull limits for linear ODEs."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    EvolutionOverflowError,
    MudichotomyError,
    ParameterError,
    UnsupportedCapabilityError,
)
from .growth_rate import (  # noqa: E402
    GrowthRate,
    Relation,
    classify,
    compare_strong,
    compare_weak,
    translated_limit_probe,
)
from .linear_system import EvolutionOperator, evolve, system_from_dict  # noqa: E402
from .dichotomy import (  # noqa: E402
    DichotomyCertificate,
    GrowthCertificate,
    Projector,
    fit_minimal_K,
    propagate_dichotomy,
    verify_dichotomy,
    verify_growth,
)
from .spectrum import estimate_spectrum, resolvent_test  # noqa: E402
from .hull import classify_limit_behavior, pointwise_limit_probe, uniform_local_integrability  # noqa: E402
