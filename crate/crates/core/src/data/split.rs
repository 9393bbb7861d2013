//! Compositional verb-noun split and the random-graph control.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Haog};

/// Verb groups 1/2, noun groups A/B and the resulting pair sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSplit {
    pub verb_groups: [Vec<usize>; 2],
    pub noun_groups: [Vec<usize>; 2],
    /// `(verb, noun)` pairs of `1 x A` and `2 x B`.
    pub train: Vec<(usize, usize)>,
    /// `(verb, noun)` pairs of `1 x B` and `2 x A`.
    pub test: Vec<(usize, usize)>,
}

/// Randomly halves verbs and nouns (the first group takes the extra element
/// of an odd vocabulary) and crosses the groups.
pub fn make_compositional_split(verbs: usize, nouns: usize, seed: u64) -> Result<PairSplit> {
    if verbs < 2 || nouns < 2 {
        return Err(Error::Config(format!("compositional split needs >= 2 verbs and nouns, got {verbs} x {nouns}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let halve = |count: usize, rng: &mut ChaCha8Rng| {
        let mut ids: Vec<usize> = (0..count).collect();
        ids.shuffle(rng);
        let mut b = ids.split_off(count.div_ceil(2));
        ids.sort_unstable();
        b.sort_unstable();
        [ids, b]
    };
    let verb_groups = halve(verbs, &mut rng);
    let noun_groups = halve(nouns, &mut rng);
    let cross = |vs: &[usize], ns: &[usize]| -> Vec<(usize, usize)> {
        vs.iter().flat_map(|v| ns.iter().map(move |n| (*v, *n))).collect()
    };
    let mut train = cross(&verb_groups[0], &noun_groups[0]);
    train.extend(cross(&verb_groups[1], &noun_groups[1]));
    let mut test = cross(&verb_groups[0], &noun_groups[1]);
    test.extend(cross(&verb_groups[1], &noun_groups[0]));
    Ok(PairSplit { verb_groups, noun_groups, train, test })
}

/// A graph with every box uniform over valid `(cx, cy, w, h)`, existence a
/// fair coin per slot, and contact a fair coin on edges whose endpoints
/// both exist. The input only fixes the type; its content is ignored.
pub fn randomize_haog<R: Rng + ?Sized>(_haog: &Haog, rng: &mut R) -> Haog {
    let mut g = Haog::empty();
    for i in 0..4 {
        // w, h in (0, 1]
        let (w, h) = (1.0 - rng.random::<f64>(), 1.0 - rng.random::<f64>());
        g.boxes[i] = BBox { cx: rng.random(), cy: rng.random(), w, h };
        g.exists[i] = rng.random_bool(0.5);
    }
    for j in 0..2 {
        let coin = rng.random_bool(0.5);
        g.contacts[j] = g.edge_defined(j) && coin;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let s = make_compositional_split(2, 2, 5).unwrap();
        let [v1, v2] = [s.verb_groups[0][0], s.verb_groups[1][0]];
        let [na, nb] = [s.noun_groups[0][0], s.noun_groups[1][0]];
        assert_eq!(s.train, [(v1, na), (v2, nb)]);
        assert_eq!(s.test, [(v1, nb), (v2, na)]);
    }

    #[test]
    fn six_by_six_counts() {
        let s = make_compositional_split(6, 6, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (18, 18));
    }

    #[test]
    fn odd_vocabulary() {
        let s = make_compositional_split(3, 5, 0).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 15);
        assert_eq!(s.verb_groups[0].len(), 2);
    }

    #[test]
    fn too_small() {
        assert!(make_compositional_split(1, 6, 0).is_err());
        assert!(make_compositional_split(6, 1, 0).is_err());
    }

    #[test]
    fn random_graph_ignores_input() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let mut full = Haog::empty();
        full.exists = [true; 4];
        full.contacts = [true; 2];
        assert_eq!(randomize_haog(&Haog::empty(), &mut a), randomize_haog(&full, &mut b));
    }
}
