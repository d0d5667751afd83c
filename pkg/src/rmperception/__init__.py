"""Reward-machine inference, perception beliefs and q-learning under noisy labels."""
__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    DomainError, EncodingError, LayoutParseError, SolverError, TractabilityError,
    ValidationError,
)
from .inference import (  # noqa: E402
    NoConsistentMachine, RewardMachineInferrer, Sample, brute_force_infer, encode_phi,
    decode_model, infer_minimal, sat_solve,
)
from .jirp import (  # noqa: E402
    JointPerceptionLearner, TrainConfig, TrainResult, evaluate, train, train_baseline_jirp,
)
from .mdp import LabeledMdp, ground_label, load_layout, office_layout, step  # noqa: E402
from .perception import (  # noqa: E402
    Belief, ObservationModel, bayes_update, estimate_label, joint_probability, jsd,
    sample_observations, signif_change,
)
from .qrm import epsilon_greedy, greedy_policy, q_update, qrm_episode_mod  # noqa: E402
from .reward_machine import (  # noqa: E402
    RewardMachine, coffee_rm, consistent_with, parse_rm, phi1_rm, phi2_rm, rm_run, rm_step,
)
