use unicode_normalization::UnicodeNormalization;

/// Pinyin tone marks as combining characters: grave, acute, macron, caron.
fn is_tone_mark(c: char) -> bool {
    matches!(c, '\u{0300}' | '\u{0301}' | '\u{0304}' | '\u{030C}')
}

/// Lowercases, collapses whitespace and optionally strips tone diacritics.
pub fn normalize_transcript(text: &str, strip_tone_diacritics: bool) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = if strip_tone_diacritics {
        lowered.nfd().filter(|&c| !is_tone_mark(c)).nfc().collect()
    } else {
        lowered
    };
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_tone_marks() {
        assert_eq!(normalize_transcript("mā", true), "ma");
        assert_eq!(normalize_transcript("Nǐ hǎo", true), "ni hao");
        assert_eq!(normalize_transcript("mà má", true), "ma ma");
    }

    #[test]
    fn keeps_tone_marks_without_flag() {
        assert_eq!(normalize_transcript("mā", false), "mā");
    }

    #[test]
    fn keeps_umlaut() {
        assert_eq!(normalize_transcript("lǜ", true), "lü");
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(normalize_transcript("  a  b ", false), "a b");
        assert_eq!(normalize_transcript("ma", true), "ma");
    }

    #[test]
    fn keeps_digits_and_punctuation() {
        assert_eq!(
            normalize_transcript("Hola, 2 Amigos!", false),
            "hola, 2 amigos!"
        );
    }
}
