//! Lints a hand-written script with the structure, content and style guides.
//!
//! `cargo run --example lint_script`

use reelwright::guidelines::{lint_script, ContentRules};
use reelwright::schema::{CharacterDef, Script, Shot};

fn main() {
    let script = Script {
        title: "The Keeper".into(),
        characters: vec![CharacterDef {
            id: "mara".into(),
            name: "Mara".into(),
            appearance: "grey coat, wind-burnt cheeks".into(),
            lora_ref: None,
        }],
        shots: vec![
            Shot::new(1, "lamp room", "Mara trims the wick")
                .with_characters(["mara"])
                .with_subtitle("Another night."),
            Shot::new(2, "lamp room", "the beam sweeps the sea").with_subtitle("The light turns."),
            Shot::new(3, "harbour", "Mara runs to the pier and then rows out")
                .with_characters(["mara"])
                .with_subtitle("Someone is out there."),
        ],
        location_adjacency: Default::default(),
    };

    let checker = ContentRules::default().compile().expect("default rules compile");
    let findings = lint_script(&script, None, &checker);
    if findings.is_empty() {
        println!("clean");
    }
    for f in &findings {
        println!("{f}");
    }
}
