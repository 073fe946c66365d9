use serde::Serialize;
use thiserror::Error;
use vctx_core::embed::{cosine, EmbedError, Embedder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Length of the longest common subsequence, O(n*m) time and O(m) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Token-level ROUGE-L over lowercased whitespace tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return RougeScore::ZERO;
    }
    let l = lcs_len(&c, &r) as f64;
    let precision = l / c.len() as f64;
    let recall = l / r.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeScore {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CsimScore {
    pub csim1: f64,
    pub csim3: f64,
    pub csim_h: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsimError {
    #[error("TooFewFragments: need at least 3 persona fragments, got {0}")]
    TooFewFragments(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Similarity of an opener to persona fragments (best and top-3 mean) and
/// to a human-written opener.
pub fn csim(
    opener: &str,
    fragments: &[String],
    human_opener: &str,
    embedder: &dyn Embedder,
) -> Result<CsimScore, CsimError> {
    if fragments.len() < 3 {
        return Err(CsimError::TooFewFragments(fragments.len()));
    }
    let o = embedder.embed(opener)?;
    let mut sims = fragments
        .iter()
        .map(|f| Ok(cosine(&o, &embedder.embed(f)?)))
        .collect::<Result<Vec<f64>, EmbedError>>()?;
    sims.sort_by(|a, b| b.total_cmp(a));
    Ok(CsimScore {
        csim1: sims[0],
        csim3: sims[..3].iter().sum::<f64>() / 3.0,
        csim_h: cosine(&o, &embedder.embed(human_opener)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;
    use vctx_core::embed::{words, HashedBowEmbedder};

    /// Exhaustive LCS over all subsequences of the shorter input.
    fn brute_lcs(a: &[String], b: &[String]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let is_subseq = |s: &[&String]| {
            let mut it = long.iter();
            s.iter().all(|x| it.any(|y| y == *x))
        };
        let n = short.len();
        (0u32..1 << n)
            .filter_map(|mask| {
                let s: Vec<&String> = (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| &short[i])
                    .collect();
                is_subseq(&s).then_some(s.len())
            })
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn hand_example() {
        let s = rouge_l("the cat", "the cat sat");
        assert!((s.precision - 1.0).abs() < 1e-12);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn edges() {
        assert_eq!(rouge_l("", "a"), RougeScore::ZERO);
        assert_eq!(rouge_l("a", ""), RougeScore::ZERO);
        assert_eq!(rouge_l("x y", "a b"), RougeScore::ZERO);
        let s = rouge_l("A b C", "a B c");
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn csim_identities() {
        let e = HashedBowEmbedder::default();
        let frags: Vec<String> = ["I love tea", "I sail", "I study law"]
            .map(String::from)
            .into();
        let s = csim("I sail", &frags, "I sail", &e).unwrap();
        assert!((s.csim1 - 1.0).abs() < 1e-6);
        assert!((s.csim_h - 1.0).abs() < 1e-6);
        assert_eq!(
            csim("x", &frags[..2], "y", &e),
            Err(CsimError::TooFewFragments(2))
        );
    }

    #[test]
    fn csim_orthogonal_fragments() {
        let e = HashedBowEmbedder::default();
        let frags: Vec<String> = ["coffee morning", "sailing regatta", "piano lessons"]
            .map(String::from)
            .into();
        let buckets: Vec<BTreeSet<usize>> = frags
            .iter()
            .map(|f| words(f).map(|w| e.bucket(&w)).collect())
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(
                    buckets[i].is_disjoint(&buckets[j]),
                    "fixture must be collision free"
                );
            }
        }
        let s = csim(&frags[0], &frags, "unrelated words", &e).unwrap();
        assert!((s.csim1 - 1.0).abs() < 1e-6);
        assert!((s.csim3 - 1.0 / 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(
            a in proptest::collection::vec("[abc]", 0..9),
            b in proptest::collection::vec("[abc]", 0..9),
        ) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn lcs_symmetry(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
            let x = rouge_l(&a, &b);
            let y = rouge_l(&b, &a);
            prop_assert!((x.precision - y.recall).abs() < 1e-12);
            prop_assert!((x.recall - y.precision).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x.f1));
        }

        #[test]
        fn csim_bounds(frags in proptest::collection::vec("[a-f]{1,4}( [a-f]{1,4}){0,3}", 3..8), o in "[a-f]{1,4}( [a-f]{1,4}){0,3}") {
            let s = csim(&o, &frags, &frags[0], &HashedBowEmbedder::default()).unwrap();
            prop_assert!(s.csim1 >= s.csim3);
            for v in [s.csim1, s.csim3, s.csim_h] {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
