//! Full-text tokenization shared by the indexer and the reference evaluator.

/// Splits text into lowercased tokens: maximal runs of letters and digits,
/// where `.` and `-` are kept when they sit between two digits
/// (`13.378`, `2018-09-13`) and a leading `-` is kept before a digit.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    tokenize_into(text, |t| out.push(t.to_owned()));
    out
}

/// Calls `sink` with each lowercased token of `text`.
pub fn tokenize_into(text: &str, mut sink: impl FnMut(&str)) {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut buf = String::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let negative = c == '-'
            && i + 1 < n
            && chars[i + 1].is_ascii_digit()
            && (i == 0 || !chars[i - 1].is_alphanumeric());
        if !c.is_alphanumeric() && !negative {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n {
            let d = chars[j];
            if d.is_alphanumeric() {
                j += 1;
            } else if (d == '.' || d == '-')
                && chars[j - 1].is_ascii_digit()
                && j + 1 < n
                && chars[j + 1].is_ascii_digit()
            {
                j += 1;
            } else {
                break;
            }
        }
        buf.clear();
        for ch in &chars[i..j] {
            buf.extend(ch.to_lowercase());
        }
        sink(&buf);
        i = j;
    }
}
