//! Compliance with and without the shot reviewer and subtitle refiner under
//! the default defect model.
//!
//! `cargo run --release --example ablation -- 200`

use std::collections::BTreeSet;

use reelwright::cli::render_ablation;
use reelwright::orchestrator::{mock_config, run_ablation, DefectModel};
use reelwright::providers::mock::MockScenario;
use reelwright::schema::UserPrompt;
use reelwright::stages::Agent;

fn main() {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let prompt = UserPrompt::new("a lighthouse keeper finds a message in a bottle", 3, 5.0).unwrap();
    let toggles: BTreeSet<Agent> = [Agent::ShotReviewer, Agent::SubtitleRefiner].into();
    let report = run_ablation(
        &mock_config(0, MockScenario::default()),
        &prompt,
        &toggles,
        trials,
        &DefectModel::default(),
    )
    .unwrap();
    print!("{}", render_ablation(&report));
}
