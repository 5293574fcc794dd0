//! End-to-end chain assembly, loss, training, and Monte Carlo evaluation.

pub mod eval;
pub mod model;
pub mod train;

pub use eval::{
    eval_ber_nmse, eval_nmse_ep, overhead_ep, overhead_sp, paired_t_statistic, run_trial_method,
    wilson_half_width, EvalPlan, MetricsRecord, TrialOutcome,
};
pub use model::{
    bce_loss, classical_chain, draw_trial, forward_e2e, init_all_params, ChainConfig,
    ChainContext, E2eOutput, ModelSpec, Trainability, Trial, PARAM_CONST_IM, PARAM_CONST_RE,
    PARAM_PILOT_IM, PARAM_PILOT_RE,
};
pub use train::{train, ResumeState, TrainConfig, TrainLogRow, TrainOutcome};
