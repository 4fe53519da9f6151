//! Lexical baseline verifier: literal and number agreement plus token
//! overlap.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use super::{NliInput, Verdict, VerifierBackend, VerifyError, DEFAULT_THRESHOLD};

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "by", "can", "did", "do", "does", "each", "find",
    "for", "from", "give", "has", "have", "how", "in", "is", "it", "its", "list", "me", "many", "of", "on", "or",
    "return", "show", "that", "the", "their", "them", "there", "these", "this", "those", "to", "was", "were", "what",
    "when", "where", "which", "who", "whose", "with",
];

/// Entails when every number and quoted literal of the question occurs in
/// the premise; the score grows with the share of content words covered.
/// Deterministic and pure.
#[derive(Debug, Clone)]
pub struct HeuristicVerifier {
    pub threshold: f64,
}

impl Default for HeuristicVerifier {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD }
    }
}

impl HeuristicVerifier {
    /// Entailment probability for a premise/hypothesis pair.
    pub fn score(premise: &str, hypothesis: &str) -> f64 {
        let premise_lower = premise.to_lowercase();
        let premise_numbers: HashSet<String> = numbers(premise).collect();
        let numbers_agree = numbers(hypothesis).all(|n| premise_numbers.contains(&n));
        let literals_agree = quoted(hypothesis).iter().all(|l| premise_lower.contains(&l.to_lowercase()));

        let premise_stems: HashSet<String> = words(&premise_lower).map(|w| stem(&w)).collect();
        let content: Vec<String> = words(&hypothesis.to_lowercase())
            .filter(|w| w.len() > 1 && !STOPWORDS.contains(&w.as_str()) && !w.chars().all(|c| c.is_ascii_digit()))
            .map(|w| stem(&w))
            .collect();
        let overlap = if content.is_empty() {
            1.0
        } else {
            content.iter().filter(|w| premise_stems.contains(*w)).count() as f64 / content.len() as f64
        };
        if numbers_agree && literals_agree {
            0.5 + 0.5 * overlap
        } else {
            0.25 * overlap
        }
    }
}

impl VerifierBackend for HeuristicVerifier {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn verify(&self, input: &NliInput) -> Result<Verdict, VerifyError> {
        let started = Instant::now();
        let score = Self::score(&input.premise, &input.hypothesis);
        Ok(Verdict::from_score(score, self.threshold, started.elapsed().min(Duration::from_secs(3600))))
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_string)
}

/// Crude singular form so "flights" meets "flight".
fn stem(word: &str) -> String {
    if let Some(s) = word.strip_suffix("ies") {
        return format!("{s}y");
    }
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Numbers in canonical form: "5.0" and "5" both become "5".
fn numbers(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .map(|t| t.trim_matches('.'))
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v == v.trunc() && v.abs() < 1e15 => format!("{}", v as i64),
            Ok(v) => format!("{v}"),
            Err(_) => t.to_string(),
        })
}

/// Text between matching single or double quotes.
fn quoted(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for quote in ['"', '\'', '“'] {
        let close = if quote == '“' { '”' } else { quote };
        let mut rest = text;
        while let Some(start) = rest.find(quote) {
            let after = &rest[start + quote.len_utf8()..];
            // An apostrophe inside a word ("Kyle's") is not a quote.
            if start > 0 && rest[..start].ends_with(char::is_alphanumeric) {
                rest = after;
                continue;
            }
            let Some(end) = after.find(close) else { break };
            let literal = &after[..end];
            if !literal.trim().is_empty() {
                out.push(literal.to_string());
            }
            rest = &after[end + close.len_utf8()..];
        }
    }
    out
}
