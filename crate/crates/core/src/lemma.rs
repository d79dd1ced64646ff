//! Rule-based English lemmatizer shared by vocabulary construction, prompt
//! membership, and the mock backends. Deterministic by construction: a small
//! irregular-form table plus suffix stripping.

/// (surface, lemma) irregulars relevant to picture-description speech.
const IRREGULARS: &[(&str, &str)] = &[
    ("am", "be"),
    ("is", "be"),
    ("are", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("goes", "go"),
    ("went", "go"),
    ("gone", "go"),
    ("got", "get"),
    ("gotten", "get"),
    ("said", "say"),
    ("saw", "see"),
    ("seen", "see"),
    ("knew", "know"),
    ("known", "know"),
    ("thought", "think"),
    ("fell", "fall"),
    ("fallen", "fall"),
    ("took", "take"),
    ("taken", "take"),
    ("ran", "run"),
    ("running", "run"),
    ("stood", "stand"),
    ("standing", "stand"),
    ("broke", "break"),
    ("broken", "break"),
    ("gave", "give"),
    ("given", "give"),
    ("children", "child"),
    ("feet", "foot"),
    ("men", "man"),
    ("women", "woman"),
    ("cookies", "cookie"),
    ("dishes", "dish"),
    ("knives", "knife"),
    ("shelves", "shelf"),
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Consonants that English doubles before -ing/-ed.
fn undoubles(c: u8) -> bool {
    matches!(c, b'b' | b'd' | b'g' | b'm' | b'n' | b'p' | b'r' | b't')
}

/// Restore a dropped final `e` for stems shaped consonant-vowel-consonant
/// (taking -> tak -> take); skip w/x/y which never take it.
fn restore_e(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 3])
    {
        format!("{stem}e")
    } else {
        stem.to_string()
    }
}

fn strip_verbal_suffix(word: &str, suffix: &str) -> Option<String> {
    let stem = word.strip_suffix(suffix)?;
    if stem.len() < 2 || !stem.bytes().any(is_vowel) {
        return None;
    }
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && undoubles(b[n - 1]) {
        return Some(stem[..n - 1].to_string());
    }
    Some(restore_e(stem))
}

/// Lemmatize one lowercase token.
pub fn lemmatize(token: &str) -> String {
    if let Some((_, lemma)) = IRREGULARS.iter().find(|(s, _)| *s == token) {
        return (*lemma).to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = token.strip_suffix("ied") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if token.ends_with("sses") || token.ends_with("ches") || token.ends_with("shes")
        || token.ends_with("xes") || token.ends_with("zes")
    {
        return token[..token.len() - 2].to_string();
    }
    if let Some(stem) = strip_verbal_suffix(token, "ing") {
        return stem;
    }
    if let Some(stem) = strip_verbal_suffix(token, "ed") {
        return stem;
    }
    if token.len() >= 3
        && token.ends_with('s')
        && !token.ends_with("ss")
        && !token.ends_with("us")
        && !token.ends_with("is")
    {
        return token[..token.len() - 1].to_string();
    }
    token.to_string()
}
