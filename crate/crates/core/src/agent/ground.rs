//! Lexical grounding: match a natural-language target description against
//! the structured elements of an observation.

use std::collections::BTreeSet;

use crate::guienv::{Element, Observation, Point};
use crate::provider::tokens;

pub const DEFAULT_GROUNDING_THRESHOLD: f64 = 0.5;

const STOPWORDS: &[&str] =
    &["a", "an", "and", "as", "at", "by", "for", "in", "into", "of", "on", "or", "that", "the", "this", "to", "with"];

fn content_tokens(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().filter(|t| !STOPWORDS.contains(&t.as_str())).collect()
}

/// Jaccard overlap between a description and an element's text plus role noun.
pub fn match_score(description: &str, element: &Element) -> f64 {
    let d = content_tokens(description);
    let e = content_tokens(&format!("{} {}", element.text, element.role.noun()));
    let union = d.union(&e).count();
    if union == 0 {
        return 0.0;
    }
    d.intersection(&e).count() as f64 / union as f64
}

/// The best-matching element scoring at least `threshold`; earlier elements
/// win ties.
pub fn best_element<'a>(description: &str, obs: &'a Observation, threshold: f64) -> Option<(&'a Element, f64)> {
    let mut best: Option<(&Element, f64)> = None;
    for e in &obs.elements {
        let s = match_score(description, e);
        if s >= threshold && best.is_none_or(|(_, b)| s > b) {
            best = Some((e, s));
        }
    }
    best
}

/// Center of the element the description refers to.
pub fn ground(description: &str, obs: &Observation, threshold: f64) -> Option<Point> {
    best_element(description, obs, threshold).map(|(e, _)| e.bounds.center())
}
