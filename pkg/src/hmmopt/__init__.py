"""Maximum-likelihood HMM estimation with four optimizers and a
multi-start benchmark harness."""

from .core import (
    DegeneratePosterior,
    ForwardResult,
    ModelSpec,
    NumericalUnderflow,
    ObsSequence,
    ParamVector,
    PosteriorSet,
    backward,
    forward_conditional,
    forward_joint_log,
    forward_with_gradient,
    loglik_with_gradient,
    q_value,
)
from .optim import (
    ArmijoParams,
    BfgsState,
    ModelError,
    OptimizerConfig,
    OPTIMIZERS,
    RunRecord,
    StopCriterion,
    baum_welch,
    qn_box,
    qnem,
    run_optimizer,
    should_stop,
    squarem,
    update_inverse_hessian,
)
from .models import (
    MODELS,
    MissingPositions,
    geyser_cont_spec,
    geyser_disc_spec,
    get_model,
    hbd_spec,
    stationary_distribution,
    umbrella_spec,
)
from .data import (
    DataCorrupt,
    SimConfig,
    default_sequence,
    dichotomise,
    load_faithful,
    read_sequence,
    simulate_discrete,
    simulate_hbd,
    write_sequence,
)
from .bench import BenchConfig, BenchReport, draw_starts, emit_report, run_bench, write_reports

__version__ = "0.1.0"
