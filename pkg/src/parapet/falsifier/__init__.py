from .objective import (
    ObjectiveConfig,
    RolloutError,
    RolloutRecord,
    ScoreResult,
    Tier,
    assign_tier,
    is_counterexample,
    rollout_seed,
    score_disturbance,
)
from .search import (
    AttemptEstimate,
    CampaignConfig,
    CampaignResult,
    Evaluation,
    estimate_attempts,
    propose_next,
    run_campaign,
)
from .surrogate import Surrogate, expected_improvement, gp_fit, gp_predict
from .analysis import Comparison, compare_protections, placement_distance_m
