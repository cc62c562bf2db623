pub const DEFAULT_WORDS_PER_MINUTE: f64 = 150.0;

/// Spoken duration of a voice-over at a constant words-per-minute rate.
pub fn estimate_speech_seconds(subtitle: &str, rate_wpm: f64) -> f64 {
    debug_assert!(rate_wpm > 0.0);
    let words = subtitle.split_whitespace().count();
    if words == 0 {
        return 0.0;
    }
    words as f64 * 60.0 / rate_wpm
}

/// Largest word count whose estimated speech is at most `seconds`.
pub fn word_capacity(seconds: f64, rate_wpm: f64) -> usize {
    if !(seconds > 0.0) {
        return 0;
    }
    let per_word = 60.0 / rate_wpm;
    let mut k = (seconds / per_word).floor() as usize;
    while k > 0 && k as f64 * per_word > seconds {
        k -= 1;
    }
    while (k + 1) as f64 * per_word <= seconds {
        k += 1;
    }
    k
}

/// Keeps at most `max_words` leading words. When a sentence ends inside the
/// kept span and cutting there keeps at least half of it, the cut moves back
/// to that sentence end.
pub fn truncate_words(subtitle: &str, max_words: usize) -> String {
    let words: Vec<&str> = subtitle.split_whitespace().collect();
    if words.len() <= max_words {
        return words.join(" ");
    }
    let ends_sentence = |w: &str| w.ends_with(['.', '!', '?']);
    let cut = (1..=max_words)
        .rev()
        .find(|&k| ends_sentence(words[k - 1]))
        .filter(|&k| 2 * k >= max_words)
        .unwrap_or(max_words);
    let mut out = words[..cut].join(" ");
    if !out.is_empty() && !ends_sentence(&out) {
        let trimmed = out.trim_end_matches([',', ';', ':', '-']).len();
        out.truncate(trimmed);
        out.push('.');
    }
    out
}

/// Offline subtitle refiner: the longest leading part whose estimated speech fits `seconds`.
pub fn truncate_to_fit(subtitle: &str, seconds: f64, rate_wpm: f64) -> String {
    truncate_words(subtitle, word_capacity(seconds, rate_wpm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_is_exact_at_the_boundary() {
        assert_eq!(word_capacity(4.0, 150.0), 10);
        assert_eq!(word_capacity(3.99, 150.0), 9);
        assert_eq!(word_capacity(5.25, 150.0), 13);
        assert_eq!(word_capacity(0.0, 150.0), 0);
        for tenths in 0..400 {
            let s = tenths as f64 / 10.0;
            let k = word_capacity(s, 150.0);
            assert!(k as f64 * 0.4 <= s + 1e-12);
            assert!((k + 1) as f64 * 0.4 > s - 1e-12);
        }
    }

    #[test]
    fn truncation_prefers_sentence_ends() {
        let s = "The tide turns. We wait here for the boats tonight";
        assert_eq!(truncate_words(s, 6), "The tide turns.");
        assert_eq!(truncate_words(s, 8), "The tide turns. We wait here for the.");
        assert_eq!(truncate_words(s, 0), "");
        assert_eq!(truncate_words(s, 50), s);
    }

    #[test]
    fn truncated_text_fits() {
        let s = vec!["word"; 20].join(" ");
        let t = truncate_to_fit(&s, 5.25, 150.0);
        assert_eq!(t.split_whitespace().count(), 13);
        assert!(estimate_speech_seconds(&t, 150.0) <= 5.25);
    }

    #[test]
    fn empty_subtitle_is_silent() {
        assert_eq!(estimate_speech_seconds("", 150.0), 0.0);
        assert_eq!(estimate_speech_seconds("   \n", 150.0), 0.0);
    }

    #[test]
    fn ten_words_at_default_rate() {
        let s = "one two three four five six seven eight nine ten";
        assert_eq!(estimate_speech_seconds(s, DEFAULT_WORDS_PER_MINUTE), 4.0);
    }

    #[test]
    fn thirty_seven_words_matches_per_word_oracle() {
        let s = vec!["word"; 37].join(" ");
        // independent oracle: 0.4 s per word at 150 wpm
        let oracle = s.split(' ').filter(|w| !w.is_empty()).count() as f64 * 0.4;
        let got = estimate_speech_seconds(&s, 150.0);
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 14.8).abs() < 1e-9);
    }
}
