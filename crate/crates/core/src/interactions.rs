//! Region-pattern interaction history, train/validation/test splitting and
//! negative sampling.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name list with a reverse index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for n in names {
            let n = n.into();
            if v.get(&n).is_some() {
                return Err(Error::Vocabulary(format!("duplicate name {n:?}")));
            }
            v.intern(&n);
        }
        Ok(v)
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Sparse binary matrix of observed (user, item) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_items: usize,
    rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    pub fn new(num_users: usize, num_items: usize) -> Self {
        Self {
            num_items,
            rows: vec![Vec::new(); num_users],
        }
    }

    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut m = Self::new(num_users, num_items);
        for (u, i) in pairs {
            m.insert(u, i)?;
        }
        Ok(m)
    }

    /// Adds a pair; duplicates are ignored. Returns whether it was new.
    pub fn insert(&mut self, user: usize, item: usize) -> Result<bool> {
        if user >= self.rows.len() || item >= self.num_items {
            return Err(Error::Vocabulary(format!(
                "pair ({user}, {item}) outside {}x{}",
                self.rows.len(),
                self.num_items
            )));
        }
        let row = &mut self.rows[user];
        match row.binary_search(&item) {
            Ok(_) => Ok(false),
            Err(pos) => {
                row.insert(pos, item);
                Ok(true)
            }
        }
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Sorted items of `user`; empty for out-of-range users.
    pub fn items(&self, user: usize) -> &[usize] {
        self.rows.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.items(user).binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All pairs in (user, item) order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u, i)))
    }

    /// Training count per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for (_, i) in self.pairs() {
            counts[i] += 1;
        }
        counts
    }

    fn remove(&mut self, user: usize, item: usize) {
        if let Ok(pos) = self.rows[user].binary_search(&item) {
            self.rows[user].remove(pos);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
}

/// Per-user test share: `floor(n / 5)`, except that a user with exactly two
/// interactions gives one to test and one with a single interaction keeps it.
pub fn test_count(n: usize) -> usize {
    match n {
        0 | 1 => 0,
        2 => 1,
        _ => n / 5,
    }
}

/// Splits `y` per user into train and test, then moves a fifth of the pooled
/// training pairs to validation without emptying any user's training set.
pub fn split_interactions(y: &InteractionMatrix, seed: u64) -> DataSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, ni) = (y.num_users(), y.num_items());
    let mut train = InteractionMatrix::new(nu, ni);
    let mut test = InteractionMatrix::new(nu, ni);
    for u in 0..nu {
        let mut items = y.items(u).to_vec();
        items.shuffle(&mut rng);
        let t = test_count(items.len());
        test.rows[u] = sorted(&items[..t]);
        train.rows[u] = sorted(&items[t..]);
    }

    let mut pool: Vec<(usize, usize)> = train.pairs().collect();
    let target = pool.len() / 5;
    pool.shuffle(&mut rng);
    let mut validation = InteractionMatrix::new(nu, ni);
    let mut moved = 0;
    for (u, i) in pool {
        if moved == target {
            break;
        }
        if train.rows[u].len() > 1 {
            train.remove(u, i);
            validation.rows[u].push(i);
            moved += 1;
        }
    }
    for row in &mut validation.rows {
        row.sort_unstable();
    }
    DataSplit {
        train,
        validation,
        test,
        seed,
    }
}

fn sorted(items: &[usize]) -> Vec<usize> {
    let mut v = items.to_vec();
    v.sort_unstable();
    v
}

/// Uniformly random item `user` has not interacted with in `train`.
pub fn sample_negative<R: Rng + ?Sized>(
    train: &InteractionMatrix,
    user: usize,
    rng: &mut R,
) -> Result<usize> {
    let n = train.num_items();
    let seen = train.items(user);
    if seen.len() >= n {
        return Err(Error::Saturated(user));
    }
    if seen.len() * 2 <= n {
        loop {
            let i = rng.random_range(0..n);
            if seen.binary_search(&i).is_err() {
                return Ok(i);
            }
        }
    }
    // Dense rows: pick the k-th free item directly.
    let mut k = rng.random_range(0..n - seen.len());
    for &s in seen {
        if s <= k {
            k += 1;
        } else {
            break;
        }
    }
    Ok(k)
}

/// Reads `region<TAB>pattern` lines, skipping blanks and `#` comments.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(i), None) => out.push((u.to_owned(), i.to_owned())),
            _ => {
                return Err(Error::Input(format!(
                    "line {}: expected region<TAB>pattern",
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Maps named pairs onto `users`; unknown items are added to `items`.
pub fn matrix_from_pairs(
    rows: &[(String, String)],
    users: &Vocab,
    items: &mut Vocab,
) -> Result<Vec<(usize, usize)>> {
    rows.iter()
        .map(|(u, i)| {
            let uid = users
                .get(u)
                .ok_or_else(|| Error::Input(format!("unknown region {u:?}")))?;
            Ok((uid, items.intern(i)))
        })
        .collect()
}

pub fn write_pairs<W: Write>(
    m: &InteractionMatrix,
    users: &Vocab,
    items: &Vocab,
    mut w: W,
) -> Result<()> {
    for (u, i) in m.pairs() {
        writeln!(w, "{}\t{}", users.name(u), items.name(i))?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    items: Vec<String>,
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALIDATION_FILE: &str = "validation.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Writes the three split files and a manifest holding the seed and the
/// item vocabulary.
pub fn save_split(dir: &Path, split: &DataSplit, users: &Vocab, items: &Vocab) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, m) in [
        (TRAIN_FILE, &split.train),
        (VALIDATION_FILE, &split.validation),
        (TEST_FILE, &split.test),
    ] {
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        write_pairs(m, users, items, f)?;
    }
    let manifest = Manifest {
        seed: split.seed,
        items: items.names().to_vec(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn load_split(dir: &Path, users: &Vocab) -> Result<(DataSplit, Vocab)> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Input(format!("manifest: {e}")))?;
    let mut items = Vocab::from_names(manifest.items)?;
    let known = items.len();
    let mut load = |name: &str| -> Result<InteractionMatrix> {
        let f = std::io::BufReader::new(std::fs::File::open(dir.join(name))?);
        let pairs = matrix_from_pairs(&read_pairs(f)?, users, &mut items)?;
        InteractionMatrix::from_pairs(users.len(), known, pairs)
    };
    let train = load(TRAIN_FILE)?;
    let validation = load(VALIDATION_FILE)?;
    let test = load(TEST_FILE)?;
    if items.len() != known {
        return Err(Error::Input("split files reference items missing from the manifest".into()));
    }
    Ok((
        DataSplit {
            train,
            validation,
            test,
            seed: manifest.seed,
        },
        items,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_user(n: usize, items: usize) -> InteractionMatrix {
        InteractionMatrix::from_pairs(1, items, (0..n).map(|i| (0, i))).unwrap()
    }

    #[test]
    fn one_interaction_goes_to_train() {
        let s = split_interactions(&single_user(1, 5), 7);
        assert_eq!(s.train.items(0), &[0]);
        assert!(s.test.is_empty() && s.validation.is_empty());
    }

    #[test]
    fn two_interactions_split_one_one() {
        for seed in 0..20 {
            let s = split_interactions(&single_user(2, 5), seed);
            assert_eq!(s.train.len(), 1);
            assert_eq!(s.test.len(), 1);
            assert!(s.validation.is_empty());
        }
    }

    #[test]
    fn ten_interactions() {
        let s = split_interactions(&single_user(10, 20), 3);
        assert_eq!(s.test.len(), 2);
        assert_eq!(s.train.len() + s.validation.len(), 8);
        // 8 pooled train pairs, floor(8/5) = 1 moves to validation.
        assert_eq!(s.validation.len(), 1);
    }

    #[test]
    fn duplicates_and_range() {
        let mut m = InteractionMatrix::new(2, 3);
        assert!(m.insert(0, 1).unwrap());
        assert!(!m.insert(0, 1).unwrap());
        assert!(m.insert(2, 0).is_err());
        assert!(m.insert(0, 3).is_err());
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn forced_negative() {
        let m = InteractionMatrix::from_pairs(1, 94, (0..94).filter(|&i| i != 57).map(|i| (0, i))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_negative(&m, 0, &mut rng).unwrap(), 57);
        }
        let full = single_user(4, 4);
        assert!(matches!(sample_negative(&full, 0, &mut rng), Err(Error::Saturated(0))));
    }

    #[test]
    fn negatives_avoid_history() {
        let m = InteractionMatrix::from_pairs(1, 10, [(0, 2), (0, 5), (0, 7)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let i = sample_negative(&m, 0, &mut rng).unwrap();
            assert!(!m.contains(0, i));
        }
        // Dense branch as well.
        let dense = InteractionMatrix::from_pairs(1, 10, (0..8).map(|i| (0, i))).unwrap();
        for _ in 0..1000 {
            let i = sample_negative(&dense, 0, &mut rng).unwrap();
            assert!(i == 8 || i == 9);
        }
    }

    #[test]
    fn empty_user_negatives_are_uniform() {
        let m = InteractionMatrix::new(1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sample_negative(&m, 0, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
        // 9 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn split_persistence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let users = Vocab::from_names(["a", "b", "c"]).unwrap();
        let items = Vocab::from_names(["p0", "p1", "p2", "p3"]).unwrap();
        let y = InteractionMatrix::from_pairs(
            3,
            4,
            [(0, 0), (0, 1), (1, 2), (2, 0), (2, 1), (2, 2), (2, 3)],
        )
        .unwrap();
        let split = split_interactions(&y, 11);
        save_split(dir.path(), &split, &users, &items).unwrap();
        let (back, back_items) = load_split(dir.path(), &users).unwrap();
        assert_eq!(back, split);
        assert_eq!(back_items, items);
    }

    fn arb_matrix() -> impl Strategy<Value = InteractionMatrix> {
        (1usize..15, 1usize..20).prop_flat_map(|(nu, ni)| {
            prop::collection::vec((0..nu, 0..ni), 0..120)
                .prop_map(move |pairs| InteractionMatrix::from_pairs(nu, ni, pairs).unwrap())
        })
    }

    proptest! {
        #[test]
        fn split_partitions_input(y in arb_matrix(), seed in any::<u64>()) {
            let s = split_interactions(&y, seed);
            let mut all: Vec<_> = s.train.pairs().chain(s.validation.pairs()).chain(s.test.pairs()).collect();
            all.sort_unstable();
            let orig: Vec<_> = y.pairs().collect();
            prop_assert_eq!(all, orig);
            for u in 0..y.num_users() {
                let n = y.items(u).len();
                prop_assert_eq!(s.test.items(u).len(), test_count(n));
                if n >= 1 {
                    prop_assert!(!s.train.items(u).is_empty());
                }
            }
            prop_assert!(s.validation.len() <= (y.len() - s.test.len()) / 5);
            prop_assert_eq!(split_interactions(&y, seed), s);
        }
    }
}
