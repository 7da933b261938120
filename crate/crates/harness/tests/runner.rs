//! Suite-runner behavior: row bookkeeping against the configured grid,
//! bitwise reproducibility, and the configuration-error path for
//! deterministic-only checks.

use rsflab_harness::checks::{run_suite, run_v5, CheckId, SuiteConfig};
use rsflab_harness::env::{generate_environment, EnvironmentSpec, GeneratorKind, PolicyKind};
use rsflab_harness::report::{render_csv, sort_rows, ReportRow};

fn small_config() -> SuiteConfig {
    SuiteConfig {
        environments: vec![
            EnvironmentSpec {
                generator: GeneratorKind::DirectedCycle { n: 5 },
                policy: PolicyKind::Uniform,
                gamma: 0.9,
                seed: 1,
            },
            EnvironmentSpec {
                generator: GeneratorKind::RandomStochastic { n: 4, m: 2 },
                policy: PolicyKind::SoftmaxRandomLogits { floor: 1e-3 },
                gamma: 0.9,
                seed: 2,
            },
        ],
        gammas: vec![0.5, 0.9],
        dims: vec![1, 2],
        n_mc: 200,
        n_competitors: 20,
        n_feature_sets: 2,
        n_reward_draws: 20,
        moment_samples: 5_000,
        ..SuiteConfig::default()
    }
}

#[test]
fn row_counts_match_the_configured_grid() {
    let config = small_config();
    // V1: 2 envs x 2 models x 2 dims x 2 sets; V8: 2 envs x 2 gammas;
    // V4: 2 envs x 2 gammas x 2 dims
    let rows = run_suite(&[CheckId::V1, CheckId::V8, CheckId::V4], &config, 0).unwrap();
    let count = |id: &str| rows.iter().filter(|r| r.check_id == id).count();
    assert_eq!(count("V1"), 2 * 2 * 2 * 2);
    assert_eq!(count("V8"), 2 * 2);
    assert_eq!(count("V4"), 2 * 2 * 2);
}

fn strip_runtime(mut rows: Vec<ReportRow>) -> String {
    sort_rows(&mut rows);
    for row in &mut rows {
        row.runtime_ms = 0.0;
    }
    render_csv(&rows).unwrap()
}

#[test]
fn identical_seed_gives_identical_report_modulo_runtime() {
    let config = small_config();
    let checks = [CheckId::V1, CheckId::V2, CheckId::V6, CheckId::V8];
    let a = run_suite(&checks, &config, 7).unwrap();
    let b = run_suite(&checks, &config, 7).unwrap();
    assert_eq!(strip_runtime(a), strip_runtime(b));

    let c = run_suite(&checks, &config, 8).unwrap();
    let b2 = run_suite(&checks, &config, 7).unwrap();
    assert_ne!(strip_runtime(c), strip_runtime(b2));
}

#[test]
fn deterministic_only_checks_reject_stochastic_environments() {
    let env = generate_environment(&EnvironmentSpec {
        generator: GeneratorKind::RandomStochastic { n: 4, m: 2 },
        policy: PolicyKind::Uniform,
        gamma: 0.9,
        seed: 3,
    })
    .unwrap();
    let err = run_v5(&env, 0.9, &[1, 2], 10, 0).unwrap_err();
    assert!(err.to_string().contains("configuration error"), "{err}");
}

#[test]
fn default_config_round_trips_through_json() {
    let config = SuiteConfig::default();
    let text = serde_json::to_string_pretty(&config).unwrap();
    let back: SuiteConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back.environments, config.environments);
    assert_eq!(back.dims, config.dims);
    // partial configs fall back to defaults
    let partial: SuiteConfig = serde_json::from_str(r#"{"n_mc": 42}"#).unwrap();
    assert_eq!(partial.n_mc, 42);
    assert_eq!(partial.environments.len(), 3);
}
