/// Tokenization error with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("unclosed bracket starting at byte {0}")]
    UnclosedBracket(usize),
    #[error("'%' at byte {0} is not followed by two digits")]
    BadRingNumber(usize),
}

/// Splits SMILES/SMIRKS text into model tokens. Bracket atoms, `Cl`, `Br`,
/// `>>` and `%nn` stay whole; every other character is its own token.
pub fn tokenize(text: &str) -> Result<Vec<String>, TokenError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let width = match bytes[i] {
            b'[' => match bytes[i..].iter().position(|&b| b == b']') {
                Some(close) => close + 1,
                None => return Err(TokenError::UnclosedBracket(i)),
            },
            b'C' if bytes.get(i + 1) == Some(&b'l') => 2,
            b'B' if bytes.get(i + 1) == Some(&b'r') => 2,
            b'>' if bytes.get(i + 1) == Some(&b'>') => 2,
            b'%' => match bytes.get(i + 1..i + 3) {
                Some(d) if d.iter().all(u8::is_ascii_digit) => 3,
                _ => return Err(TokenError::BadRingNumber(i)),
            },
            // keep multi-byte UTF-8 characters intact
            b => match b.leading_ones() {
                0 => 1,
                n => n as usize,
            },
        };
        let end = (i + width).min(bytes.len());
        tokens.push(text[i..end].to_string());
        i = end;
    }
    Ok(tokens)
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect()
}
