//! Rule-based post-edits applied to per-EDU translations.

use crate::treebank::{ends_sentence, Edu};

/// Placeholder text for an EDU whose every word was moved to its neighbor.
pub const EMPTY_EDU: &str = "<EMPTY>";

pub const DEFAULT_RELATIVE_PRONOUNS: [&str; 7] = ["that", "which", "who", "whom", "whose", "where", "when"];

/// Tokens whose final period belongs to the word rather than the sentence.
const ABBREVIATIONS: [&str; 16] = [
    "al.", "etc.", "fig.", "figs.", "eq.", "eqs.", "vs.", "cf.", "approx.", "resp.", "no.", "dr.", "mr.", "mrs.",
    "ms.", "prof.",
];

fn is_abbreviation(token: &str) -> bool {
    let lower = token.to_lowercase();
    let stem = &lower[..lower.len() - 1];
    ABBREVIATIONS.contains(&lower.as_str())
        || stem.contains('.')
        || (stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic))
}

/// Replaces every sentence-ending period in `text` with a comma.
///
/// A period is sentence-ending when it closes the text, or when it is
/// followed by whitespace and does not close an abbreviation token.
pub fn replace_terminal_periods(text: &str) -> String {
    let trimmed_len = text.trim_end().len();
    let mut out = String::with_capacity(text.len());
    let mut token_start = 0;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            out.push(c);
            token_start = i + c.len_utf8();
            continue;
        }
        let next = text[i + c.len_utf8()..].chars().next();
        let terminal = c == '.'
            && (i + 1 == trimmed_len
                || (next.is_some_and(char::is_whitespace) && !is_abbreviation(&text[token_start..=i])));
        out.push(if terminal { ',' } else { c });
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("cannot align {english} English EDUs with {chinese} source EDUs")]
pub struct AlignmentError {
    pub english: usize,
    pub chinese: usize,
}

fn with_text(edu: &Edu, text: String) -> Edu {
    Edu {
        ends_with_period: ends_sentence(&text),
        text,
        ..edu.clone()
    }
}

/// Lets a translated EDU end with a period only if its source EDU does.
pub fn adjust_punctuation(english: &[Edu], chinese: &[Edu]) -> Result<Vec<Edu>, AlignmentError> {
    let misaligned = english.len() != chinese.len() || english.iter().zip(chinese).any(|(e, c)| e.id != c.id);
    if misaligned {
        return Err(AlignmentError {
            english: english.len(),
            chinese: chinese.len(),
        });
    }
    Ok(english
        .iter()
        .zip(chinese)
        .map(|(e, c)| {
            if c.ends_with_period {
                e.clone()
            } else {
                with_text(e, replace_terminal_periods(&e.text))
            }
        })
        .collect())
}

/// Splits a trailing pronoun off `text`, keeping trailing punctuation on the
/// remainder.
fn split_trailing_pronoun(text: &str, pronouns: &[String]) -> Option<(String, String)> {
    let trimmed = text.trim_end();
    let body = trimmed.trim_end_matches(|c: char| c.is_ascii_punctuation());
    let punct = &trimmed[body.len()..];
    let start = body.rfind(char::is_whitespace).map_or(0, |i| i + 1);
    let word = &body[start..];
    if word.is_empty() || !pronouns.iter().any(|p| p.eq_ignore_ascii_case(word)) {
        return None;
    }
    let prefix = body[..start].trim_end();
    let rest = if prefix.ends_with(|c: char| c.is_ascii_punctuation()) {
        prefix.to_owned()
    } else {
        format!("{prefix}{punct}")
    };
    Some((rest, word.to_owned()))
}

/// Moves relative pronouns and subordinators stranded at the end of an EDU to
/// the front of the following EDU of the same sentence.
pub fn adjust_relative_pronouns<S: AsRef<str>>(english: &[Edu], pronouns: &[S]) -> Vec<Edu> {
    let pronouns: Vec<String> = pronouns.iter().map(|p| p.as_ref().to_owned()).collect();
    let mut out = english.to_vec();
    for i in 0..out.len().saturating_sub(1) {
        if out[i].sentence_index != out[i + 1].sentence_index {
            continue;
        }
        let mut rest = out[i].text.clone();
        let mut moved = Vec::new();
        while let Some((r, word)) = split_trailing_pronoun(&rest, &pronouns) {
            moved.insert(0, word);
            rest = r;
        }
        if moved.is_empty() {
            continue;
        }
        let rest = if rest
            .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
            .is_empty()
        {
            EMPTY_EDU.to_owned()
        } else {
            rest
        };
        let next = out[i + 1].text.trim_start();
        let joined = if next == EMPTY_EDU || next.is_empty() {
            moved.join(" ")
        } else {
            format!("{} {next}", moved.join(" "))
        };
        out[i] = with_text(&out[i], rest);
        out[i + 1] = with_text(&out[i + 1], joined);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edu(id: usize, text: &str, sentence: usize) -> Edu {
        Edu::new(id, text, sentence)
    }

    #[test]
    fn terminal_periods() {
        assert_eq!(replace_terminal_periods("The method works."), "The method works,");
        assert_eq!(
            replace_terminal_periods("e.g. results improve."),
            "e.g. results improve,"
        );
        assert_eq!(replace_terminal_periods("It works. It scales."), "It works, It scales,");
        assert_eq!(
            replace_terminal_periods("Smith et al. show 3.5 gains"),
            "Smith et al. show 3.5 gains"
        );
        assert_eq!(
            replace_terminal_periods("see Fig. 2 and J. Doe."),
            "see Fig. 2 and J. Doe,"
        );
        assert_eq!(replace_terminal_periods("ends here. "), "ends here, ");
        assert_eq!(replace_terminal_periods("中文。"), "中文。");
    }

    #[test]
    fn punctuation_follows_source() {
        let en = vec![edu(1, "The method works.", 1), edu(2, "It improves.", 1)];
        let zh = vec![edu(1, "该方法有效，", 1), edu(2, "它有所改进。", 1)];
        let out = adjust_punctuation(&en, &zh).unwrap();
        assert_eq!(out[0].text, "The method works,");
        assert!(!out[0].ends_with_period);
        assert_eq!(out[1], en[1]);
        assert!(adjust_punctuation(&en[..1], &zh).is_err());
    }

    #[test]
    fn pronoun_moves_forward() {
        let en = vec![
            edu(1, "Experiments show that", 1),
            edu(2, "the data augmentation effectively mitigate the problem.", 1),
        ];
        let out = adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS);
        assert_eq!(out[0].text, "Experiments show");
        assert_eq!(
            out[1].text,
            "that the data augmentation effectively mitigate the problem."
        );
        assert!(out[1].ends_with_period);
    }

    #[test]
    fn pronoun_rule_respects_sentences_and_punctuation() {
        let en = vec![edu(1, "We show", 1), edu(2, "it works.", 1)];
        assert_eq!(adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS), en);
        let en = vec![edu(1, "It is a model that.", 1), edu(2, "Next", 2)];
        assert_eq!(adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS), en);
        let en = vec![edu(1, "a parser, which,", 1), edu(2, "runs fast", 1)];
        let out = adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS);
        assert_eq!(out[0].text, "a parser,");
        assert_eq!(out[1].text, "which runs fast");
    }

    #[test]
    fn pronoun_only_edu_becomes_sentinel() {
        let en = vec![edu(1, "That", 1), edu(2, "is all", 1)];
        let out = adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS);
        assert_eq!(out[0].text, EMPTY_EDU);
        assert_eq!(out[1].text, "That is all");
        let en = vec![edu(1, "We show that", 1), edu(2, "when", 1), edu(3, "it rains", 1)];
        let out = adjust_relative_pronouns(&en, &DEFAULT_RELATIVE_PRONOUNS);
        assert_eq!(
            out.iter().map(|e| e.text.as_str()).collect::<Vec<_>>(),
            ["We show", EMPTY_EDU, "that when it rains"]
        );
        assert_eq!(adjust_relative_pronouns(&out, &DEFAULT_RELATIVE_PRONOUNS), out);
    }
}
