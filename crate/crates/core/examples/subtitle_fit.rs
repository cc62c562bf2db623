//! Fits an over-long voice-over into a five second clip.

use reelwright::guidelines::estimate_speech_seconds;
use reelwright::orchestrator::{build_context, mock_config};
use reelwright::providers::mock::MockScenario;
use reelwright::schema::Shot;
use reelwright::stages::fit_subtitle;

fn main() {
    let ctx = build_context(&mock_config(1, MockScenario::default()), None).unwrap();
    let subtitle = "The keeper climbed the hundred and twelve steps again tonight, \
                    counting each one aloud the way her father had taught her";
    let shot = Shot::new(1, "stairwell", "the keeper climbs").with_subtitle(subtitle);
    println!(
        "original: {} words, {:.1}s of speech",
        subtitle.split_whitespace().count(),
        estimate_speech_seconds(subtitle, 150.0)
    );

    let fit = fit_subtitle(&ctx, &shot, None, 5.0).unwrap();
    println!("fitted after {} attempts: {:?}", fit.attempts, fit.subtitle);
    println!("audio {:.2}s for a {:.1}s clip, fits: {}", fit.audio_seconds, fit.clip_seconds, fit.fits);
}
