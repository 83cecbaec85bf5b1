"""f-divergences, surrogate losses and quantizer design on finite alphabets."""

from .calibration import CalibrationVerdict, calibration_check, constrained_bayes, gap_inequality_check
from .divergences import (
    Generator,
    OrderInstance,
    build_order_instance,
    f_divergence,
    f_divergence_quantized,
    generator_from_dict,
    kernel_pushforward,
    make_generator,
    perspective_eval,
    transport_matrix,
)
from .equivalence import (
    AffineFit,
    RankingReport,
    SearchResult,
    Witness,
    affine_equivalence_f,
    affine_equivalence_U,
    counterexample_search,
    ranking_compare,
)
from .experiment import (
    DiscreteExperiment,
    PosteriorTable,
    Quantizer,
    load_experiment,
    make_experiment,
    posterior,
    random_experiment,
    simplex_grid,
    validate_experiment,
    zero_one_costs,
)
from .losses import (
    BayesSolution,
    LossFamily,
    familywise_conjugate,
    generator_from_loss,
    loss_from_generator,
    loss_from_uncertainty,
    make_loss,
    pointwise_bayes,
    uncertainty_of,
)
from .quantize import (
    ConsistencyReport,
    DiscriminantTable,
    SampleSet,
    consistency_experiment,
    enumerate_quantizers,
    erm_fit,
    erm_joint,
    optimize_quantizer,
    quantized_bayes_risk,
)
from .uncertainty import (
    InformationReport,
    UncertaintyFn,
    infimal_uncertainty,
    make_uncertainty,
    statistical_information,
)

__version__ = "0.1.0"
