//! Experiment orchestration: training-data generation, ID/OOD test suites,
//! method evaluation, the observation-noise sweep, and numerical checks of
//! the theory.

mod config;
mod eval;
mod suite;
mod theory;

pub use config::ExperimentConfig;
pub use eval::{
    evaluate_methods, format_label, generate_training_data, run_noise_sweep, run_seed, run_simulation,
    test_cases, train_pdae, AggregateRow, EvalReport, EvalRow, Method, SeedRun, Stat, SweepPoint,
};
pub use suite::{
    evaluation_cases, in_region, make_test_suite, sample_test_label, sample_test_label_in_setting, Arity,
    Split, TestCase, TestKind,
};
pub use theory::{
    permutation_energy_test, random_dag, relative_labels, run_theory_suite, sem_equivalence_test, verify_extrapolation_linear,
    verify_identifiability, verify_reparametrization, verify_sem_equivalence, ExtrapolationReport,
    IdentifiabilityReport, PermutationTest, ReparamReport, TheoryCheck, TheoryScenario,
};
