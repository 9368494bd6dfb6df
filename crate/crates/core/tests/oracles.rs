use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use readacc::align::align_words;
use readacc::corpus::{normalize_token, segment_tokens, Role, Token, Utterance, UtteranceSet};
use readacc::simreader::{brute_force_align, random_tokens};

/// Every way of cutting `m` tokens into `k` consecutive spans, as the
/// k - 1 inner boundaries.
fn all_cuts(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, lo: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            out.push(prefix.clone());
            return;
        }
        for c in lo..=m {
            prefix.push(c);
            rec(k - 1, c, m, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k - 1, 0, m, &mut Vec::new(), &mut out);
    out
}

fn segmentation_cost(prompts: &[Utterance], stream: &[Token], cuts: &[usize]) -> usize {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cuts);
    bounds.push(stream.len());
    prompts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let span = Utterance::new("s", stream[bounds[i]..bounds[i + 1]].to_vec());
            align_words(p, &span).total_distance
        })
        .sum()
}

#[test]
fn segmentation_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..300 {
        let n_prompts = 1 + case % 4;
        let prompts: Vec<Utterance> = (0..n_prompts)
            .map(|i| {
                let mut toks = random_tokens(&mut rng, 3, 3, &['a', 'b', 'c']);
                if toks.is_empty() {
                    toks.push(normalize_token("a").unwrap());
                }
                Utterance::new(format!("u{i}"), toks)
            })
            .collect();
        let stream = random_tokens(&mut rng, 9, 3, &['a', 'b', 'c', 'd']);
        let set = UtteranceSet::from_utterances(Role::Prompt, prompts.clone()).unwrap();

        let candidates = all_cuts(n_prompts, stream.len());
        let best = candidates
            .iter()
            .map(|c| segmentation_cost(&prompts, &stream, c))
            .min()
            .unwrap();
        // Tie rule: the last boundary as early as possible, then the one before.
        let expected = candidates
            .iter()
            .filter(|c| segmentation_cost(&prompts, &stream, c) == best)
            .min_by(|a, b| a.iter().rev().cmp(b.iter().rev()))
            .unwrap();

        let seg = segment_tokens(&stream, &set).unwrap();
        let mut cuts = Vec::new();
        let mut pos = 0;
        for (i, u) in seg.iter().enumerate() {
            pos += u.len();
            if i + 1 < n_prompts {
                cuts.push(pos);
            }
        }
        assert_eq!(segmentation_cost(&prompts, &stream, &cuts), best, "case {case}");
        assert_eq!(&cuts, expected, "case {case}");
    }
}

#[test]
fn segmentation_worked_example_by_enumeration() {
    let prompts = vec![
        Utterance::from_text("u1", "a b"),
        Utterance::from_text("u2", "c d"),
    ];
    let stream = Utterance::from_text("s", "a uh b c d").tokens;
    let costs: Vec<usize> = (0..=5).map(|c| segmentation_cost(&prompts, &stream, &[c])).collect();
    assert_eq!(costs.iter().min(), Some(&3));
    assert_eq!(costs.iter().position(|&c| c == 3), Some(3));
}

#[test]
fn dp_agrees_with_exhaustive_oracle_on_small_alphabets() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let r = Utterance::new("r", random_tokens(&mut rng, 6, 4, &['a', 'b']));
        let h = Utterance::new("h", random_tokens(&mut rng, 6, 4, &['a', 'b']));
        assert_eq!(align_words(&r, &h).total_distance, brute_force_align(&r, &h).unwrap());
    }
}
