//! Transport-free parts of the VLM quality score: frame selection and reply parsing.

use alloc::vec::Vec;

pub const SCORE_MAX: f64 = 10.0;

/// `budget` frame indices spread evenly over `frames`, first and last included.
pub fn evenly_spaced_frames(frames: usize, budget: usize) -> Vec<usize> {
    if frames == 0 || budget == 0 {
        return Vec::new();
    }
    if budget >= frames {
        return (0..frames).collect();
    }
    if budget == 1 {
        return alloc::vec![0];
    }
    (0..budget)
        .map(|i| crate::math::round(i as f64 * (frames - 1) as f64 / (budget - 1) as f64) as usize)
        .collect()
}

/// First numeric token of `reply` (e.g. `"Score: 7.5/10"` -> 7.5) if it lies in `[0, 10]`.
pub fn parse_score(reply: &str) -> Option<f64> {
    let bytes = reply.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = if i > 0 && bytes[i - 1] == b'-' { i - 1 } else { i };
            let mut end = i;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            let value: f64 = reply[start..end].parse().ok()?;
            return (0.0..=SCORE_MAX).contains(&value).then_some(value);
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_number() {
        assert_eq!(parse_score("9"), Some(9.0));
        assert_eq!(parse_score("Score: 7.5/10"), Some(7.5));
        assert_eq!(parse_score("  8.\n"), Some(8.0));
        assert_eq!(parse_score("looks clean"), None);
        assert_eq!(parse_score("42"), None);
        assert_eq!(parse_score("-1"), None);
    }

    #[test]
    fn frame_budget() {
        assert_eq!(evenly_spaced_frames(10, 4), alloc::vec![0, 3, 6, 9]);
        assert_eq!(evenly_spaced_frames(3, 4), alloc::vec![0, 1, 2]);
        assert_eq!(evenly_spaced_frames(5, 1), alloc::vec![0]);
    }
}
