//! Set partitions of `[m] = {1, ..., m}` and the pair-partition families
//! that index the limit integrals.
//!
//! Elements are 1-based throughout the public API so that printed
//! partitions read the same way they are written by hand, e.g.
//! `{{1,3},{2,4}}`. Block ids are 0-based and follow the canonical order:
//! blocks are sorted internally and ordered by their smallest element.
//!
//! Every enumerator returns an exhaustive, canonically ordered list
//! (lexicographic on the block-label array). Ground sets larger than
//! [`MAX_GROUND_SET`] are rejected.

use std::fmt;

use crate::error::{contract, guard, Result};

/// Largest ground set any enumerator accepts. `|P2(20)| = 19!! ≈ 6.5e8`.
pub const MAX_GROUND_SET: usize = 20;

/// A partition of `[m]` in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    // Field order matters: the derived `Ord` compares `labels` first, which is
    // the canonical enumeration order.
    labels: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from an arbitrary labelling: elements `i` and `j`
    /// (1-based positions in `labels`) share a block iff their labels agree.
    pub fn from_labels<T: PartialEq>(labels: &[T]) -> Result<Self> {
        if labels.is_empty() {
            return contract("partition of an empty ground set");
        }
        let mut canon = vec![usize::MAX; labels.len()];
        let mut next = 0;
        for i in 0..labels.len() {
            if canon[i] != usize::MAX {
                continue;
            }
            for j in i..labels.len() {
                if canon[j] == usize::MAX && labels[j] == labels[i] {
                    canon[j] = next;
                }
            }
            next += 1;
        }
        Ok(Self::from_canonical_labels(canon))
    }

    /// Builds a partition from its blocks (1-based elements, any order).
    pub fn from_blocks(blocks: &[&[usize]]) -> Result<Self> {
        let m: usize = blocks.iter().map(|b| b.len()).sum();
        if m == 0 {
            return contract("partition of an empty ground set");
        }
        let mut labels = vec![usize::MAX; m];
        for (id, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return contract("empty block");
            }
            for &e in *block {
                if e == 0 || e > m {
                    return contract(format!("element {e} outside [1, {m}]"));
                }
                if labels[e - 1] != usize::MAX {
                    return contract(format!("element {e} appears twice"));
                }
                labels[e - 1] = id;
            }
        }
        Self::from_labels(&labels)
    }

    // `labels` must already be a restricted growth string.
    fn from_canonical_labels(labels: Vec<usize>) -> Self {
        let count = labels.iter().max().map_or(0, |&l| l + 1);
        let mut blocks = vec![Vec::new(); count];
        for (i, &l) in labels.iter().enumerate() {
            blocks[l].push(i + 1);
        }
        Self { labels, blocks }
    }

    /// Size of the ground set.
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Canonical block label of every element, indexed by `element - 1`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Block id of the 1-based element `e`.
    pub fn block_of(&self, e: usize) -> usize {
        self.labels[e - 1]
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of(a) == self.block_of(b)
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.m() == coarser.m()
            && self
                .blocks
                .iter()
                .all(|b| b.iter().all(|&e| coarser.same_block(e, b[0])))
    }

    fn block_sizes_are(&self, pred: impl Fn(usize) -> bool) -> bool {
        self.blocks.iter().all(|b| pred(b.len()))
    }
}

impl AsRef<Partition> for Partition {
    fn as_ref(&self) -> &Partition {
        self
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, e) in block.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// A partition whose blocks all have exactly two elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairPartition(Partition);

impl PairPartition {
    pub fn new(partition: Partition) -> Result<Self> {
        if !partition.block_sizes_are(|s| s == 2) {
            return contract(format!("{partition} is not a pair partition"));
        }
        Ok(Self(partition))
    }

    pub fn from_blocks(blocks: &[&[usize]]) -> Result<Self> {
        Self::new(Partition::from_blocks(blocks)?)
    }

    pub fn partition(&self) -> &Partition {
        &self.0
    }

    /// The element matched with `e`.
    pub fn partner(&self, e: usize) -> usize {
        let block = &self.0.blocks[self.0.block_of(e)];
        if block[0] == e {
            block[1]
        } else {
            block[0]
        }
    }

    /// Number of blocks `{i, j}` with `i <= p < j`.
    pub fn crossings(&self, p: usize) -> usize {
        self.0
            .blocks
            .iter()
            .filter(|b| b[0] <= p && b[1] > p)
            .count()
    }
}

impl AsRef<Partition> for PairPartition {
    fn as_ref(&self) -> &Partition {
        &self.0
    }
}

impl fmt::Display for PairPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A partition of `[p + q]` with one block of size four (two elements on
/// each side of the split) and all other blocks pairs that stay on one side.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FourBlockPartition {
    partition: Partition,
    four_block: usize,
    p: usize,
    q: usize,
}

impl FourBlockPartition {
    pub fn new(partition: Partition, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 || p % 2 != 0 || q % 2 != 0 {
            return contract(format!("4-block partitions need even p, q (got {p}, {q})"));
        }
        if partition.m() != p + q {
            return contract(format!("ground set {} != p + q = {}", partition.m(), p + q));
        }
        let mut four_block = None;
        for (id, block) in partition.blocks.iter().enumerate() {
            match block.len() {
                2 => {
                    if block[0] <= p && block[1] > p {
                        return contract(format!("pair {block:?} crosses the split in {partition}"));
                    }
                }
                4 => {
                    if four_block.replace(id).is_some() {
                        return contract(format!("{partition} has two 4-blocks"));
                    }
                    let left = block.iter().filter(|&&e| e <= p).count();
                    if left != 2 {
                        return contract(format!("4-block of {partition} is not split 2 + 2"));
                    }
                }
                _ => return contract(format!("{partition} has a block of size {}", block.len())),
            }
        }
        match four_block {
            Some(four_block) => Ok(Self {
                partition,
                four_block,
                p,
                q,
            }),
            None => contract(format!("{partition} has no 4-block")),
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Block id of the size-four block.
    pub fn four_block(&self) -> usize {
        self.four_block
    }

    pub fn split(&self) -> (usize, usize) {
        (self.p, self.q)
    }
}

impl AsRef<Partition> for FourBlockPartition {
    fn as_ref(&self) -> &Partition {
        &self.partition
    }
}

impl fmt::Display for FourBlockPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.partition.fmt(f)
    }
}

/// `n!!`, with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i64) -> u128 {
    if n <= 0 {
        return 1;
    }
    (1..=n as u128).rev().step_by(2).product()
}

/// All pair partitions of `[m]`; empty when `m` is odd.
pub fn enumerate_pair_partitions(m: usize) -> Result<Vec<PairPartition>> {
    if m == 0 {
        return contract("ground set size must be at least 1");
    }
    guard("ground set", m, MAX_GROUND_SET)?;
    if m % 2 == 1 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(double_factorial(m as i64 - 1) as usize);
    let mut labels = vec![usize::MAX; m];
    pair_up(&mut labels, 0, &mut |labels| {
        out.push(PairPartition(Partition::from_canonical_labels(labels.to_vec())));
    });
    out.sort();
    Ok(out)
}

// Pairs the smallest unpaired element with each larger unpaired element in turn.
fn pair_up(labels: &mut [usize], next_block: usize, emit: &mut impl FnMut(&[usize])) {
    let Some(first) = labels.iter().position(|&l| l == usize::MAX) else {
        emit(labels);
        return;
    };
    labels[first] = next_block;
    for second in first + 1..labels.len() {
        if labels[second] == usize::MAX {
            labels[second] = next_block;
            pair_up(labels, next_block + 1, emit);
            labels[second] = usize::MAX;
        }
    }
    labels[first] = usize::MAX;
}

/// Pair partitions of `[p + q]` with at least one block `{i, j}`, `i <= p < j`.
pub fn enumerate_crossing_pair_partitions(p: usize, q: usize) -> Result<Vec<PairPartition>> {
    if p == 0 || q == 0 {
        return contract("p and q must be positive");
    }
    Ok(enumerate_pair_partitions(p + q)?
        .into_iter()
        .filter(|pi| pi.crossings(p) > 0)
        .collect())
}

/// The 4-block family for the split `(p, q)`; empty unless both are even.
pub fn enumerate_p24(p: usize, q: usize) -> Result<Vec<FourBlockPartition>> {
    if p == 0 || q == 0 {
        return contract("p and q must be positive");
    }
    guard("ground set", p + q, MAX_GROUND_SET)?;
    if p % 2 == 1 || q % 2 == 1 {
        return Ok(Vec::new());
    }
    let left = enumerate_pair_partitions(p)?;
    let right = enumerate_pair_partitions(q)?;
    let mut out = Vec::new();
    for l in &left {
        for r in &right {
            for lb in 0..l.0.len() {
                for rb in 0..r.0.len() {
                    // Right-hand pairs get block ids after the left ones; the
                    // chosen right pair is relabelled into the chosen left pair.
                    let offset = l.0.len();
                    let mut labels: Vec<usize> = l.0.labels.clone();
                    labels.extend(r.0.labels.iter().map(|&b| if b == rb { lb } else { b + offset }));
                    let partition = Partition::from_labels(&labels)?;
                    let four_block = partition.block_of(l.0.blocks[lb][0]);
                    out.push(FourBlockPartition {
                        partition,
                        four_block,
                        p,
                        q,
                    });
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignKind {
    Epsilon,
    Tau,
}

/// One `±1` per element of the ground set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignAssignment {
    pub signs: Vec<i8>,
    pub kind: SignKind,
}

impl SignAssignment {
    /// Sign of the 1-based element `e`.
    pub fn sign(&self, e: usize) -> i8 {
        self.signs[e - 1]
    }
}

/// Orientation signs of a partition's elements.
///
/// `Epsilon`: in every pair the smaller element is `+1`, the larger `-1`.
/// `Tau`: pairs as for epsilon; in the single 4-block the smallest and
/// largest elements are `+1` and the middle two `-1`.
pub fn sign_assignment(partition: &Partition, kind: SignKind) -> Result<SignAssignment> {
    let fours = partition.blocks.iter().filter(|b| b.len() == 4).count();
    let valid = match kind {
        SignKind::Epsilon => partition.block_sizes_are(|s| s == 2),
        SignKind::Tau => fours == 1 && partition.block_sizes_are(|s| s == 2 || s == 4),
    };
    if !valid {
        return contract(format!("{kind:?} signs are undefined for {partition}"));
    }
    let mut signs = vec![-1i8; partition.m()];
    for block in &partition.blocks {
        signs[block[0] - 1] = 1;
        if block.len() == 4 {
            signs[block[3] - 1] = 1;
        }
    }
    Ok(SignAssignment { signs, kind })
}

/// Keeps the partitions whose blocks each lie inside one block of `coloring`.
pub fn restrict_by_color<P>(partitions: &[P], coloring: &Partition) -> Result<Vec<P>>
where
    P: AsRef<Partition> + Clone,
{
    if let Some(bad) = partitions.iter().find(|p| p.as_ref().m() != coloring.m()) {
        return contract(format!(
            "ground set {} does not match the colouring's {}",
            bad.as_ref().m(),
            coloring.m()
        ));
    }
    Ok(partitions
        .iter()
        .filter(|p| p.as_ref().refines(coloring))
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    // Every set partition of [m] as a restricted growth string; the brute-force
    // reference the filtered families are checked against.
    fn all_partitions(m: usize) -> Vec<Partition> {
        fn grow(labels: &mut Vec<usize>, m: usize, out: &mut Vec<Partition>) {
            if labels.len() == m {
                out.push(Partition::from_labels(labels).unwrap());
                return;
            }
            let max = labels.iter().max().map_or(0, |&l| l + 1);
            for l in 0..=max {
                labels.push(l);
                grow(labels, m, out);
                labels.pop();
            }
        }
        let mut out = Vec::new();
        grow(&mut Vec::new(), m, &mut out);
        out
    }

    fn brute_pairs(m: usize) -> Vec<Partition> {
        all_partitions(m)
            .into_iter()
            .filter(|p| p.blocks().iter().all(|b| b.len() == 2))
            .collect()
    }

    fn brute_p24(p: usize, q: usize) -> Vec<Partition> {
        all_partitions(p + q)
            .into_iter()
            .filter(|pi| FourBlockPartition::new(pi.clone(), p, q).is_ok())
            .collect()
    }

    fn shown<P: fmt::Display>(ps: &[P]) -> Vec<String> {
        ps.iter().map(|p| p.to_string()).collect()
    }

    #[test]
    fn small_pairings() {
        assert_eq!(shown(&enumerate_pair_partitions(2).unwrap()), ["{{1,2}}"]);
        assert!(enumerate_pair_partitions(3).unwrap().is_empty());
        assert_eq!(
            shown(&enumerate_pair_partitions(4).unwrap()),
            ["{{1,2},{3,4}}", "{{1,3},{2,4}}", "{{1,4},{2,3}}"]
        );
        assert!(enumerate_pair_partitions(0).is_err());
        assert!(matches!(
            enumerate_pair_partitions(22),
            Err(crate::Error::Guard { .. })
        ));
    }

    #[test]
    fn crossing_examples() {
        assert_eq!(shown(&enumerate_crossing_pair_partitions(1, 1).unwrap()), ["{{1,2}}"]);
        assert_eq!(
            shown(&enumerate_crossing_pair_partitions(2, 2).unwrap()),
            ["{{1,3},{2,4}}", "{{1,4},{2,3}}"]
        );
        assert!(enumerate_crossing_pair_partitions(2, 1).unwrap().is_empty());
    }

    #[test]
    fn four_block_examples() {
        assert_eq!(shown(&enumerate_p24(2, 2).unwrap()), ["{{1,2,3,4}}"]);
        assert_eq!(enumerate_p24(4, 2).unwrap().len(), 6);
        assert!(enumerate_p24(3, 3).unwrap().is_empty());
        let only = &enumerate_p24(2, 2).unwrap()[0];
        assert_eq!(only.four_block(), 0);
        assert_eq!(only.split(), (2, 2));
    }

    #[test]
    fn pair_counts_are_double_factorials() {
        let expected = [1u128, 3, 15, 105, 945, 10395];
        for k in 1..=6 {
            let n = enumerate_pair_partitions(2 * k).unwrap().len() as u128;
            assert_eq!(n, double_factorial(2 * k as i64 - 1));
            assert_eq!(n, expected[k - 1]);
        }
    }

    #[test]
    fn enumerators_match_brute_force() {
        for m in 1..=10 {
            let fast: Vec<Partition> = enumerate_pair_partitions(m)
                .unwrap()
                .into_iter()
                .map(|p| p.partition().clone())
                .collect();
            assert_eq!(fast, brute_pairs(m), "m = {m}");
        }
        for p in 1..=9 {
            for q in 1..=(10 - p) {
                let brute: Vec<Partition> = brute_pairs(p + q)
                    .into_iter()
                    .filter(|pi| pi.blocks().iter().any(|b| b[0] <= p && b[1] > p))
                    .collect();
                let fast: Vec<Partition> = enumerate_crossing_pair_partitions(p, q)
                    .unwrap()
                    .into_iter()
                    .map(|x| x.partition().clone())
                    .collect();
                assert_eq!(fast, brute, "P2({p},{q})");
                let fast24: Vec<Partition> = enumerate_p24(p, q)
                    .unwrap()
                    .into_iter()
                    .map(|x| x.partition().clone())
                    .collect();
                assert_eq!(fast24, brute_p24(p, q), "P24({p},{q})");
            }
        }
    }

    #[test]
    fn crossing_count_formula() {
        let df = |n: usize| double_factorial(n as i64 - 1);
        for p in 1..=11 {
            for q in 1..=(12 - p) {
                let n = enumerate_crossing_pair_partitions(p, q).unwrap().len() as u128;
                let expected = match (p % 2, q % 2) {
                    (0, 0) => df(p + q) - df(p) * df(q),
                    (1, 1) => df(p + q),
                    _ => 0,
                };
                assert_eq!(n, expected, "({p},{q})");
            }
        }
    }

    #[test]
    fn four_block_count_formula() {
        for p in (2..=8).step_by(2) {
            for q in (2..=8).step_by(2) {
                if p + q > MAX_GROUND_SET {
                    continue;
                }
                let n = enumerate_p24(p, q).unwrap().len() as u128;
                let expected = double_factorial(p as i64 - 1)
                    * double_factorial(q as i64 - 1)
                    * (p as u128 / 2)
                    * (q as u128 / 2);
                assert_eq!(n, expected, "({p},{q})");
            }
        }
    }

    #[test]
    fn sign_examples() {
        let pi = Partition::from_blocks(&[&[1, 3], &[2, 4]]).unwrap();
        assert_eq!(sign_assignment(&pi, SignKind::Epsilon).unwrap().signs, [1, 1, -1, -1]);
        let pi = Partition::from_blocks(&[&[1, 2]]).unwrap();
        assert_eq!(sign_assignment(&pi, SignKind::Epsilon).unwrap().signs, [1, -1]);
        let pi = Partition::from_blocks(&[&[1, 2, 3, 4]]).unwrap();
        assert_eq!(sign_assignment(&pi, SignKind::Tau).unwrap().signs, [1, -1, -1, 1]);
        assert!(sign_assignment(&pi, SignKind::Epsilon).is_err());
        let pairs = Partition::from_blocks(&[&[1, 2], &[3, 4]]).unwrap();
        assert!(sign_assignment(&pairs, SignKind::Tau).is_err());
    }

    #[test]
    fn colour_restriction_examples() {
        let all = enumerate_pair_partitions(4).unwrap();
        let one = Partition::from_labels(&[0, 0, 0, 0]).unwrap();
        assert_eq!(restrict_by_color(&all, &one).unwrap().len(), 3);
        let split = Partition::from_labels(&[1, 1, 2, 2]).unwrap();
        assert_eq!(shown(&restrict_by_color(&all, &split).unwrap()), ["{{1,2},{3,4}}"]);
        let alternating = Partition::from_labels(&[1, 2, 1, 2]).unwrap();
        assert_eq!(shown(&restrict_by_color(&all, &alternating).unwrap()), ["{{1,3},{2,4}}"]);
        let wrong = Partition::from_labels(&[1, 1]).unwrap();
        assert!(restrict_by_color(&all, &wrong).is_err());
    }

    #[test]
    fn blocks_validation() {
        assert!(Partition::from_blocks(&[&[1, 2], &[2, 3]]).is_err());
        assert!(Partition::from_blocks(&[&[1, 5]]).is_err());
        assert!(PairPartition::from_blocks(&[&[1, 2, 3]]).is_err());
        let pi = Partition::from_blocks(&[&[4, 2], &[3, 1]]).unwrap();
        assert_eq!(pi.to_string(), "{{1,3},{2,4}}");
    }

    // Substituting y_i = sign(i) * x_{block(i)} makes sum_i y_i vanish as a form
    // in the x-variables, for every enumerated partition and its signs.
    fn projected_sum(pi: &Partition, signs: &SignAssignment) -> Vec<i64> {
        let mut coeffs = vec![0i64; pi.len()];
        for e in 1..=pi.m() {
            coeffs[pi.block_of(e)] += signs.sign(e) as i64;
        }
        coeffs
    }

    proptest! {
        #[test]
        fn identical_equation_for_pairings(k in 1usize..=5, pick in any::<prop::sample::Index>()) {
            let all = enumerate_pair_partitions(2 * k).unwrap();
            let pi = pick.get(&all).partition();
            let signs = sign_assignment(pi, SignKind::Epsilon).unwrap();
            prop_assert!(projected_sum(pi, &signs).iter().all(|&c| c == 0));
            prop_assert!(PairPartition::new(pi.clone()).is_ok());
        }

        #[test]
        fn identical_equation_for_four_blocks(
            hp in 1usize..=3,
            hq in 1usize..=3,
            pick in any::<prop::sample::Index>(),
        ) {
            let all = enumerate_p24(2 * hp, 2 * hq).unwrap();
            let pi = pick.get(&all);
            let signs = sign_assignment(pi.partition(), SignKind::Tau).unwrap();
            prop_assert!(projected_sum(pi.partition(), &signs).iter().all(|&c| c == 0));
            prop_assert!(FourBlockPartition::new(pi.partition().clone(), 2 * hp, 2 * hq).is_ok());
        }

        #[test]
        fn enumerations_have_no_duplicates(p in 1usize..=6, q in 1usize..=6) {
            let crossing = enumerate_crossing_pair_partitions(p, q).unwrap();
            let unique: HashSet<_> = crossing.iter().collect();
            prop_assert_eq!(unique.len(), crossing.len());
            prop_assert!(crossing.windows(2).all(|w| w[0] < w[1]));
            let fours = enumerate_p24(p, q).unwrap();
            let unique: HashSet<_> = fours.iter().collect();
            prop_assert_eq!(unique.len(), fours.len());
        }

        #[test]
        fn labels_round_trip(labels in prop::collection::vec(0u8..4, 1..10)) {
            let pi = Partition::from_labels(&labels).unwrap();
            for i in 0..labels.len() {
                for j in 0..labels.len() {
                    prop_assert_eq!(pi.same_block(i + 1, j + 1), labels[i] == labels[j]);
                }
            }
            let blocks: Vec<&[usize]> = pi.blocks().iter().map(|b| b.as_slice()).collect();
            prop_assert_eq!(Partition::from_blocks(&blocks).unwrap(), pi);
        }
    }
}
