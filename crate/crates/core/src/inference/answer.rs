use super::Verdict;

const OPEN: &str = "<answer>";
const CLOSE: &str = "</answer>";

/// Reads the first `<answer>…</answer>` tag. Tags and payload are matched
/// case-insensitively and the payload is trimmed; anything other than a
/// well-formed yes/no answer abstains.
pub fn parse_answer(text: &str) -> Verdict {
    // ASCII lowercasing keeps byte offsets aligned with `text`.
    let lower = text.to_ascii_lowercase();
    let Some(open) = lower.find(OPEN) else {
        return Verdict::Abstain;
    };
    let body_start = open + OPEN.len();
    let Some(close) = lower[body_start..].find(CLOSE) else {
        return Verdict::Abstain;
    };
    match lower[body_start..body_start + close].trim() {
        "yes" => Verdict::Positive,
        "no" => Verdict::Negative,
        _ => Verdict::Abstain,
    }
}

/// Canonical text for a verdict; abstain renders as an empty string.
pub fn render_verdict(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Positive => "<answer>Yes</answer>",
        Verdict::Negative => "<answer>No</answer>",
        Verdict::Abstain => "",
    }
}
