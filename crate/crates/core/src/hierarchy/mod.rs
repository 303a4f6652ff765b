//! Two-level control: six ways of choosing what the low-level policy
//! pursues, trained concurrently on one rollout.

pub mod config;
pub mod diayn;
pub mod rewards;
pub mod trainer;
pub mod tsp;

pub use config::{Method, TwoLevelConfig};
pub use diayn::{anova_p_value, diayn_classifier_update, skills_collapsed, SkillClassifier};
pub use rewards::{diayn_bonus, goal_shaping, select_zone_goal};
pub use trainer::{
    check_high_action, conditioning_dim, episode_tour, goal_point, low_observation, low_reward, matched_width,
    run_segment, segment_ends, tour_target, two_level_parameter_count, zone_mask, EnvSlot, HighAction, Segment,
    SegmentRun, SegmentStep, TwoLevelTrainer,
};
pub use tsp::{
    ordering_feature, path_length, plan_tour, tsp_brute_force, tsp_nearest_neighbor, tsp_or_opt, tsp_two_opt, Tour,
};
