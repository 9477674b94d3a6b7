/// Lowercases, splits on Unicode whitespace and emits every character that is
/// neither alphanumeric nor whitespace as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// True for tokens that carry no alphanumeric character.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

pub fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Joins tokens with single spaces, attaching closing punctuation to the
/// preceding word. Re-tokenizing the result yields the same tokens.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = matches!(t, "." | "," | "!" | "?" | ";" | ":" | ")" | "%" | "'");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
