//! Two-level alignment of word sequences.
//!
//! Words are aligned by dynamic programming; substituting one word for
//! another costs their grapheme edit distance, and inserting or deleting a
//! word costs its grapheme length plus one for the word separator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Token, Utterance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("alignment for {0:?} does not cover the reference and hypothesis exactly")]
    AlignmentMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: OpKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
    pub cost: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub ref_id: String,
    pub ops: Vec<EditOp>,
    pub total_distance: usize,
    pub per_ref_word_distance: Vec<usize>,
}

/// Unit-cost Levenshtein distance over unicode scalar values.
pub fn grapheme_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Cost of inserting or deleting a whole word.
pub fn indel_cost(word: &Token) -> usize {
    word.len() + 1
}

/// Cost of aligning `a` against `b` in one slot; zero for equal tokens.
pub fn substitution_cost(a: &Token, b: &Token) -> usize {
    if a == b {
        0
    } else {
        grapheme_distance(a.as_str(), b.as_str())
    }
}

pub fn align_words(reference: &Utterance, hypothesis: &Utterance) -> WordAlignment {
    let r = &reference.tokens;
    let h = &hypothesis.tokens;
    let (n, m) = (r.len(), h.len());
    let width = m + 1;
    let mut table = vec![0usize; (n + 1) * width];
    for j in 1..=m {
        table[j] = table[j - 1] + indel_cost(&h[j - 1]);
    }
    for i in 1..=n {
        table[i * width] = table[(i - 1) * width] + indel_cost(&r[i - 1]);
        for j in 1..=m {
            let diag = table[(i - 1) * width + j - 1] + substitution_cost(&r[i - 1], &h[j - 1]);
            let up = table[(i - 1) * width + j] + indel_cost(&r[i - 1]);
            let left = table[i * width + j - 1] + indel_cost(&h[j - 1]);
            table[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * width + j];
        if i > 0 && j > 0 {
            let cost = substitution_cost(&r[i - 1], &h[j - 1]);
            if table[(i - 1) * width + j - 1] + cost == here {
                let kind = if cost == 0 { OpKind::Match } else { OpKind::Substitute };
                ops.push(EditOp {
                    kind,
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                    cost,
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let cost = indel_cost(&r[i - 1]);
            if table[(i - 1) * width + j] + cost == here {
                ops.push(EditOp {
                    kind: OpKind::Delete,
                    ref_index: Some(i - 1),
                    hyp_index: None,
                    cost,
                });
                i -= 1;
                continue;
            }
        }
        let cost = indel_cost(&h[j - 1]);
        ops.push(EditOp {
            kind: OpKind::Insert,
            ref_index: None,
            hyp_index: Some(j - 1),
            cost,
        });
        j -= 1;
    }
    ops.reverse();

    let mut per_ref_word_distance = vec![0; n];
    for op in &ops {
        if let Some(ri) = op.ref_index {
            per_ref_word_distance[ri] = op.cost;
        }
    }
    WordAlignment {
        ref_id: reference.id.clone(),
        ops,
        total_distance: table[n * width + m],
        per_ref_word_distance,
    }
}

/// Checks that `alignment` is a well-formed alignment of exactly these two
/// utterances.
pub fn validate(
    reference: &Utterance,
    hypothesis: &Utterance,
    alignment: &WordAlignment,
) -> Result<(), AlignError> {
    let mismatch = || AlignError::AlignmentMismatch(alignment.ref_id.clone());
    let (mut next_ref, mut next_hyp) = (0usize, 0usize);
    for op in &alignment.ops {
        match (op.kind, op.ref_index, op.hyp_index) {
            (OpKind::Match | OpKind::Substitute, Some(ri), Some(hi)) => {
                if ri != next_ref || hi != next_hyp || ri >= reference.len() || hi >= hypothesis.len() {
                    return Err(mismatch());
                }
                let equal = reference.tokens[ri] == hypothesis.tokens[hi];
                if equal != (op.kind == OpKind::Match) {
                    return Err(mismatch());
                }
                next_ref += 1;
                next_hyp += 1;
            }
            (OpKind::Delete, Some(ri), None) => {
                if ri != next_ref || ri >= reference.len() {
                    return Err(mismatch());
                }
                next_ref += 1;
            }
            (OpKind::Insert, None, Some(hi)) => {
                if hi != next_hyp || hi >= hypothesis.len() {
                    return Err(mismatch());
                }
                next_hyp += 1;
            }
            _ => return Err(mismatch()),
        }
    }
    if next_ref != reference.len() || next_hyp != hypothesis.len() {
        return Err(mismatch());
    }
    Ok(())
}

/// Character-level alignment of two words with the same operation
/// preference as the word level. `None` marks a gap.
fn align_chars(a: &[char], b: &[char]) -> Vec<(Option<char>, Option<char>)> {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut t = vec![0usize; (n + 1) * width];
    for (j, cell) in t[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        t[i * width] = i;
        for j in 1..=m {
            t[i * width + j] = (t[(i - 1) * width + j - 1] + usize::from(a[i - 1] != b[j - 1]))
                .min(t[(i - 1) * width + j] + 1)
                .min(t[i * width + j - 1] + 1);
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = t[i * width + j];
        if i > 0 && j > 0 && t[(i - 1) * width + j - 1] + usize::from(a[i - 1] != b[j - 1]) == here {
            out.push((Some(a[i - 1]), Some(b[j - 1])));
            i -= 1;
            j -= 1;
        } else if i > 0 && t[(i - 1) * width + j] + 1 == here {
            out.push((Some(a[i - 1]), None));
            i -= 1;
        } else {
            out.push((None, Some(b[j - 1])));
            j -= 1;
        }
    }
    out.reverse();
    out
}

fn hyphens(n: usize) -> String {
    "-".repeat(n)
}

/// Renders an alignment as two equal-length display lines.
///
/// Matched and substituted words are padded with `-` where their graphemes
/// do not align. An inserted or deleted word shows as a run of `-` that also
/// covers the separator after it (or before it, at the end of a line).
pub fn render_alignment(
    reference: &Utterance,
    hypothesis: &Utterance,
    alignment: &WordAlignment,
) -> Result<(String, String), AlignError> {
    validate(reference, hypothesis, alignment)?;

    // (ref piece, hyp piece, gap side) per slot; gap side is 0 for ref, 1 for hyp.
    let mut slots: Vec<(String, String, Option<usize>)> = Vec::with_capacity(alignment.ops.len());
    for op in &alignment.ops {
        match op.kind {
            OpKind::Match => {
                let w = reference.tokens[op.ref_index.unwrap()].to_string();
                slots.push((w.clone(), w, None));
            }
            OpKind::Substitute => {
                let a: Vec<char> = reference.tokens[op.ref_index.unwrap()].as_str().chars().collect();
                let b: Vec<char> = hypothesis.tokens[op.hyp_index.unwrap()].as_str().chars().collect();
                let (mut ra, mut hb) = (String::new(), String::new());
                for (x, y) in align_chars(&a, &b) {
                    ra.push(x.unwrap_or('-'));
                    hb.push(y.unwrap_or('-'));
                }
                slots.push((ra, hb, None));
            }
            OpKind::Delete => {
                let w = reference.tokens[op.ref_index.unwrap()].to_string();
                let gap = hyphens(w.chars().count());
                slots.push((w, gap, Some(1)));
            }
            OpKind::Insert => {
                let w = hypothesis.tokens[op.hyp_index.unwrap()].to_string();
                let gap = hyphens(w.chars().count());
                slots.push((gap, w, Some(0)));
            }
        }
    }

    // Separator k sits between slot k and slot k + 1.
    let n_seps = slots.len().saturating_sub(1);
    let mut sep_gap: Vec<Option<usize>> = vec![None; n_seps];
    for (k, slot) in slots.iter().enumerate() {
        let Some(side) = slot.2 else { continue };
        if k < n_seps {
            sep_gap[k] = Some(side);
        } else if k > 0 && sep_gap[k - 1].is_none() {
            sep_gap[k - 1] = Some(side);
        }
    }

    let mut lines = [String::new(), String::new()];
    for (k, (rp, hp, _)) in slots.iter().enumerate() {
        if k > 0 {
            for (side, line) in lines.iter_mut().enumerate() {
                line.push(if sep_gap[k - 1] == Some(side) { '-' } else { ' ' });
            }
        }
        lines[0].push_str(rp);
        lines[1].push_str(hp);
    }
    let [r, h] = lines;
    Ok((r, h))
}

/// One `REF:`/`HYP:` block of an alignment dump.
pub fn format_alignment_block(id: &str, ref_line: &str, hyp_line: &str) -> String {
    format!("# {id}\nREF: {ref_line}\nHYP: {hyp_line}\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize_token;

    fn utt(text: &str) -> Utterance {
        Utterance::from_text("u", text)
    }

    /// Exhaustive edit-script recursion, exponential but obviously correct.
    fn brute_distance(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = brute_distance(ra, rb) + usize::from(x != y);
                let del = brute_distance(ra, b) + 1;
                let ins = brute_distance(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn grapheme_distance_examples() {
        let oracle = brute_distance(&['k', 'l', 'a', 'p'], &"klappen".chars().collect::<Vec<_>>());
        assert_eq!(oracle, 3);
        assert_eq!(grapheme_distance("klap", "klappen"), 3);
        assert_eq!(grapheme_distance("ze", "ze"), 0);
        assert_eq!(grapheme_distance("a", "b"), 1);
        assert_eq!(grapheme_distance("ijs", "ijzer"), 3);
        assert_eq!(grapheme_distance("ë", "e"), 1);
    }

    #[test]
    fn restart_example_alignment() {
        let r = utt("wanneer ze klaar is klappen we opnieuw");
        let h = utt("wanneer uh ze k klaar is klap klappen we opnieuw");
        let a = align_words(&r, &h);
        assert_eq!(a.total_distance, 10);
        let matches = a.ops.iter().filter(|o| o.kind == OpKind::Match).count();
        let inserts: Vec<(usize, usize)> = a
            .ops
            .iter()
            .filter(|o| o.kind == OpKind::Insert)
            .map(|o| (o.hyp_index.unwrap(), o.cost))
            .collect();
        assert_eq!(matches, 7);
        assert_eq!(inserts, vec![(1, 3), (3, 2), (6, 5)]);
        assert_eq!(a.per_ref_word_distance, vec![0; 7]);
    }

    #[test]
    fn identity_and_forced_deletions() {
        let r = utt("a b c");
        let a = align_words(&r, &r);
        assert_eq!(a.total_distance, 0);
        assert!(a.ops.iter().all(|o| o.kind == OpKind::Match));

        let a = align_words(&r, &utt(""));
        assert_eq!(a.total_distance, 6);
        assert!(a.ops.iter().all(|o| o.kind == OpKind::Delete && o.cost == 2));
        assert_eq!(a.per_ref_word_distance, vec![2, 2, 2]);
    }

    #[test]
    fn substitution_is_preferred_on_ties() {
        // sub(ab, cd) = 2 vs delete 3 + insert 3.
        let a = align_words(&utt("ab"), &utt("cd"));
        assert_eq!(a.ops.len(), 1);
        assert_eq!(a.ops[0].kind, OpKind::Substitute);
        // "a" vs "b c": sub a/b (1) + insert c (2) == insert b (2) + sub a/c (1);
        // the backtrace prefers the diagonal at the last cell.
        let a = align_words(&utt("a"), &utt("b c"));
        assert_eq!(a.total_distance, 3);
        assert_eq!(a.ops[1].kind, OpKind::Substitute);
        assert_eq!(a.ops[1].hyp_index, Some(1));
    }

    #[test]
    fn render_restart_example() {
        let r = utt("wanneer ze klaar is klappen we opnieuw");
        let h = utt("wanneer uh ze k klaar is klap klappen we opnieuw");
        let a = align_words(&r, &h);
        let (rl, hl) = render_alignment(&r, &h, &a).unwrap();
        assert_eq!(rl, "wanneer ---ze --klaar is -----klappen we opnieuw");
        assert_eq!(hl, "wanneer uh ze k klaar is klap klappen we opnieuw");
        assert_eq!(rl.chars().count(), hl.chars().count());
    }

    #[test]
    fn render_identity_and_inner_gap() {
        let r = utt("de kat");
        let (rl, hl) = render_alignment(&r, &r, &align_words(&r, &r)).unwrap();
        assert_eq!((rl.as_str(), hl.as_str()), ("de kat", "de kat"));

        let (r, h) = (utt("ab"), utt("axb"));
        let (rl, hl) = render_alignment(&r, &h, &align_words(&r, &h)).unwrap();
        assert_eq!((rl.as_str(), hl.as_str()), ("a-b", "axb"));
    }

    #[test]
    fn render_trailing_deletion() {
        let (r, h) = (utt("de kat zit"), utt("de kat"));
        let (rl, hl) = render_alignment(&r, &h, &align_words(&r, &h)).unwrap();
        assert_eq!(rl, "de kat zit");
        assert_eq!(hl, "de kat----");
    }

    #[test]
    fn render_rejects_foreign_alignment() {
        let (r, h) = (utt("a b"), utt("a"));
        let a = align_words(&r, &r);
        assert_eq!(
            render_alignment(&r, &h, &a),
            Err(AlignError::AlignmentMismatch("u".into()))
        );
    }

    #[test]
    fn tokens_used_by_costs() {
        let t = normalize_token("klap").unwrap();
        assert_eq!(indel_cost(&t), 5);
        assert_eq!(substitution_cost(&t, &t), 0);
    }
}
