/// Characters split off as standalone tokens.
const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Lowercases, splits on whitespace, detaches punctuation and apostrophe
/// suffixes: `"i'm on it"` → `["i", "'m", "on", "it"]`, `"don't"` → `["do", "n't"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let mut piece = String::new();
        for c in lower.chars() {
            if PUNCTUATION.contains(&c) {
                push_word(&mut out, &piece);
                piece.clear();
                out.push(c.to_string());
            } else {
                piece.push(c);
            }
        }
        push_word(&mut out, &piece);
    }
    out
}

fn push_word(out: &mut Vec<String>, word: &str) {
    if word.is_empty() {
        return;
    }
    if word.len() > 3 && word.ends_with("n't") {
        out.push(word[..word.len() - 3].to_string());
        out.push("n't".to_string());
        return;
    }
    match word.find('\'') {
        Some(pos) if pos > 0 => {
            out.push(word[..pos].to_string());
            out.push(word[pos..].to_string());
        }
        _ => out.push(word.to_string()),
    }
}
