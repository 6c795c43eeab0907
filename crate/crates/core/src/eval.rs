//! Word-level scoring, error listings and cross-model comparison.
//!
//! Predictions are raw tag lists, so taggers, the encoder-decoder (whose
//! output length may disagree with the word) and the baseline (empty on
//! failure) are scored by the same rule: a word is correct iff its predicted
//! tags equal the gold tags exactly.

use serde::{Deserialize, Serialize};

use crate::corpus::SyllabifiedWord;
use crate::error::{Error, Result};
use crate::phonotactics::cv_pattern;
use crate::tagging::{encode_tags, tags_to_string, Tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub word: String,
    /// Syllables joined with `+`.
    pub parse: String,
    pub cv_pattern: String,
    pub actual: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub total: usize,
    pub correct: usize,
    /// Percent, rounded half-up to two decimals.
    pub accuracy: f64,
    pub errors: Vec<ErrorRow>,
    /// Gold words in evaluation order, as corpus lines.
    pub words: Vec<String>,
    pub predicted: Vec<String>,
}

/// `100·correct/total` rounded half-up to two decimals; `0.0` when empty.
pub fn accuracy_percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let (c, t) = (correct as u128, total as u128);
    let hundredths = (20_000 * c + t) / (2 * t);
    hundredths as f64 / 100.0
}

fn error_row(gold: &SyllabifiedWord, actual: &str, predicted: &str) -> ErrorRow {
    ErrorRow {
        word: gold.surface().to_string(),
        parse: gold.plus_joined(),
        cv_pattern: cv_pattern(gold).to_string(),
        actual: actual.to_string(),
        predicted: predicted.to_string(),
    }
}

fn check_lengths(preds: usize, golds: usize) -> Result<()> {
    if preds != golds {
        return Err(Error::LengthMismatch { left: preds, right: golds });
    }
    Ok(())
}

pub fn word_accuracy(predictions: &[Vec<Tag>], golds: &[SyllabifiedWord]) -> Result<EvalReport> {
    check_lengths(predictions.len(), golds.len())?;
    let mut correct = 0;
    let mut errors = Vec::new();
    let mut predicted = Vec::with_capacity(golds.len());
    for (pred, gold) in predictions.iter().zip(golds) {
        let actual = encode_tags(gold)?;
        let p = tags_to_string(pred);
        if pred.as_slice() == actual.tags() {
            correct += 1;
        } else {
            errors.push(error_row(gold, &actual.to_string(), &p));
        }
        predicted.push(p);
    }
    Ok(EvalReport {
        model: String::new(),
        total: golds.len(),
        correct,
        accuracy: accuracy_percent(correct, golds.len()),
        errors,
        words: golds.iter().map(SyllabifiedWord::to_line).collect(),
        predicted,
    })
}

pub fn error_rows(predictions: &[Vec<Tag>], golds: &[SyllabifiedWord]) -> Result<Vec<ErrorRow>> {
    Ok(word_accuracy(predictions, golds)?.errors)
}

impl EvalReport {
    pub fn with_model(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("word,parse,cv_pattern,actual,predicted\n");
        for r in &self.errors {
            out.push_str(&format!("{},{},{},{},{}\n", r.word, r.parse, r.cv_pattern, r.actual, r.predicted));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!("model,correct,total,accuracy\n{},{},{},{:.2}\n", self.model, self.correct, self.total, self.accuracy)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub predicted: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub word: String,
    pub parse: String,
    pub actual: String,
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub models: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// One row per word that at least one model got wrong, with every model's
/// prediction flagged against the gold tags.
pub fn compare_models(reports: &[EvalReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::TooFewReports);
    }
    let first = &reports[0];
    if reports.iter().any(|r| r.words != first.words || r.predicted.len() != first.words.len()) {
        return Err(Error::MismatchedTestSets);
    }
    let mut rows = Vec::new();
    for (i, line) in first.words.iter().enumerate() {
        let gold = SyllabifiedWord::parse_line(line)?;
        let actual = encode_tags(&gold)?.to_string();
        let cells: Vec<ComparisonCell> = reports
            .iter()
            .map(|r| ComparisonCell { predicted: r.predicted[i].clone(), correct: r.predicted[i] == actual })
            .collect();
        if cells.iter().any(|c| !c.correct) {
            rows.push(ComparisonRow { word: gold.surface().to_string(), parse: gold.plus_joined(), actual, cells });
        }
    }
    Ok(Comparison { models: reports.iter().map(|r| r.model.clone()).collect(), rows })
}

impl Comparison {
    /// Columns: word, parse, actual, then `<model>,<model>_correct` pairs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("word,parse,actual");
        for m in &self.models {
            out.push_str(&format!(",{m},{m}_correct"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.word, r.parse, r.actual));
            for c in &r.cells {
                out.push_str(&format!(",{},{}", c.predicted, c.correct));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagging::TagSequence;
    use proptest::prelude::*;

    fn word(line: &str) -> SyllabifiedWord {
        SyllabifiedWord::parse_line(line).unwrap()
    }

    fn tags(s: &str) -> Vec<Tag> {
        s.parse::<TagSequence>().unwrap().tags().to_vec()
    }

    #[test]
    fn published_percentages() {
        assert_eq!(accuracy_percent(982, 1012), 97.04);
        assert_eq!(accuracy_percent(1004, 1012), 99.21);
        assert_eq!(accuracy_percent(1002, 1012), 99.01);
        assert_eq!(accuracy_percent(954, 1012), 94.27);
        assert_eq!(accuracy_percent(0, 17), 0.0);
        assert_eq!(accuracy_percent(1, 8), 12.5);
        assert_eq!(accuracy_percent(1, 3), 33.33);
        assert_eq!(accuracy_percent(2, 3), 66.67);
    }

    #[test]
    fn error_row_for_shesou() {
        let golds = vec![word("she so u"), word("ke pe")];
        let preds = vec![tags("SCCSCC"), tags("SCSC")];
        let report = word_accuracy(&preds, &golds).unwrap();
        assert_eq!((report.correct, report.total), (1, 2));
        assert_eq!(
            report.errors,
            vec![ErrorRow {
                word: "shesou".into(),
                parse: "she+so+u".into(),
                cv_pattern: "CCV CV V".into(),
                actual: "SCCSCS".into(),
                predicted: "SCCSCC".into(),
            }]
        );
        assert!(error_rows(&[tags("SCSC")], &golds[1..]).unwrap().is_empty());
        assert!(word_accuracy(&preds[..1], &golds).is_err());
    }

    #[test]
    fn wrong_length_predictions_are_errors() {
        let golds = vec![word("a"), word("ke")];
        let report = word_accuracy(&[vec![], tags("SCS")], &golds).unwrap();
        assert_eq!(report.correct, 0);
        assert_eq!(report.errors[1].predicted, "SCS");
    }

    #[test]
    fn comparison_flags_and_errors() {
        let golds = vec![word("she so u"), word("ke pe"), word("a")];
        let a = word_accuracy(&[tags("SCCSCC"), tags("SCSC"), tags("S")], &golds).unwrap().with_model("a");
        let b = word_accuracy(&[tags("SCCSCS"), tags("SCSC"), tags("S")], &golds).unwrap().with_model("b");
        let cmp = compare_models(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(cmp.rows.len(), 1);
        assert_eq!(cmp.rows[0].word, "shesou");
        assert_eq!(cmp.rows[0].cells.iter().map(|c| c.correct).collect::<Vec<_>>(), vec![false, true]);
        assert!(cmp.to_csv().starts_with("word,parse,actual,a,a_correct,b,b_correct\n"));
        assert!(matches!(compare_models(std::slice::from_ref(&a)), Err(Error::TooFewReports)));
        let c = word_accuracy(&[tags("S")], &golds[2..]).unwrap();
        assert!(matches!(compare_models(&[a, c]), Err(Error::MismatchedTestSets)));
    }

    proptest! {
        #[test]
        fn accuracy_matches_float_rounding(total in 1usize..5000, frac in 0.0f64..=1.0) {
            let correct = (frac * total as f64) as usize;
            let exact = 100.0 * correct as f64 / total as f64;
            let got = accuracy_percent(correct, total);
            prop_assert!((got - exact).abs() <= 0.005 + 1e-12);
            prop_assert!((0.0..=100.0).contains(&got));
        }
    }
}
