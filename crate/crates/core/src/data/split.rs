//! Seeded stratified train/test partitioning and the manifest text format.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::labels::LabelRecord;
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
const MAGIC: &str = "# split-manifest v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    pub class_name: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// One entry per class present, in class-id order.
    pub counts: Vec<ClassSplit>,
}

/// Splits `total` test slots across classes by largest remainder.
///
/// `sizes` pairs each class name with its record count. The total is
/// `round(fraction * N)`, each class first gets `floor(fraction * n_c)`, and
/// leftover slots go to the largest fractional parts, ties resolved by class
/// name. Every class then keeps at least one record on each side.
pub fn apportion(sizes: &[(&str, usize)], fraction: f64) -> Vec<usize> {
    let n: usize = sizes.iter().map(|s| s.1).sum();
    let total = (fraction * n as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&(_, c)| fraction * c as f64).collect();
    // the epsilon keeps 0.2 * 5 from flooring to 0.999..
    let mut out: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    // remainders snapped to a 1e-9 grid, so exact ties (0.2 * 43 vs 0.2 * 18)
    // are not decided by rounding noise
    let remainder: Vec<i64> = quotas
        .iter()
        .zip(&out)
        .map(|(q, &f)| ((q - f as f64) * 1e9).round() as i64)
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainder[b].cmp(&remainder[a]).then_with(|| sizes[a].0.cmp(sizes[b].0)));
    let assigned: usize = out.iter().sum();
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        out[k] += 1;
    }
    for (k, t) in out.iter_mut().enumerate() {
        *t = (*t).clamp(1, sizes[k].1 - 1);
    }
    out
}

/// Partitions records so each class contributes about `test_fraction` of
/// its members to the test side.
///
/// `class_names[c]` names class id `c`. The result depends only on the set of
/// records, the fraction and the seed; input order does not matter.
pub fn stratified_split(
    records: &[LabelRecord],
    class_names: &[&str],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::contract(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for r in records {
        if r.class_id.0 >= class_names.len() {
            return Err(Error::index(
                "stratified_split",
                format!("class id {} has no name", r.class_id.0),
            ));
        }
        by_class.entry(r.class_id.0).or_default().push(&r.image_id);
    }
    for (&c, ids) in &by_class {
        if ids.len() < 2 {
            return Err(Error::Stratification {
                class: class_names[c].to_string(),
                detail: format!("{} record(s), need at least 2", ids.len()),
            });
        }
    }
    let sizes: Vec<(&str, usize)> = by_class.iter().map(|(&c, ids)| (class_names[c], ids.len())).collect();
    let test_counts = apportion(&sizes, test_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut counts = Vec::new();
    for ((&c, ids), &n_test) in by_class.iter().zip(&test_counts) {
        let mut ids: Vec<&str> = ids.clone();
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        test.extend(ids[..n_test].iter().map(|s| s.to_string()));
        train.extend(ids[n_test..].iter().map(|s| s.to_string()));
        counts.push(ClassSplit {
            class_name: class_names[c].to_string(),
            train: ids.len() - n_test,
            test: n_test,
        });
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let manifest = SplitManifest {
        seed,
        test_fraction,
        train,
        test,
        counts,
    };
    manifest.check_disjoint()?;
    Ok(manifest)
}

impl SplitManifest {
    /// Fails if any id appears twice, on either side or across both.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.train.len() + self.test.len());
        for id in self.train.iter().chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Format(format!("image `{id}` appears twice in the split")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# seed {}", self.seed);
        let _ = writeln!(s, "# test_fraction {}", self.test_fraction);
        for c in &self.counts {
            let _ = writeln!(s, "# class {} train {} test {}", c.class_name, c.train, c.test);
        }
        for id in &self.train {
            let _ = writeln!(s, "train {id}");
        }
        for id in &self.test {
            let _ = writeln!(s, "test {id}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<SplitManifest> {
        let bad = |line: usize, what: &str| Error::Format(format!("split manifest line {line}: {what}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, "missing `# split-manifest v1` header")),
        }
        let mut seed = None;
        let mut fraction = None;
        let mut m = SplitManifest {
            seed: 0,
            test_fraction: 0.0,
            train: Vec::new(),
            test: Vec::new(),
            counts: Vec::new(),
        };
        for (no, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["#", "seed", v] => seed = Some(v.parse().map_err(|_| bad(no, "bad seed"))?),
                ["#", "test_fraction", v] => fraction = Some(v.parse().map_err(|_| bad(no, "bad fraction"))?),
                ["#", "class", name, "train", tr, "test", te] => m.counts.push(ClassSplit {
                    class_name: name.to_string(),
                    train: tr.parse().map_err(|_| bad(no, "bad count"))?,
                    test: te.parse().map_err(|_| bad(no, "bad count"))?,
                }),
                ["train", id] => m.train.push(id.to_string()),
                ["test", id] => m.test.push(id.to_string()),
                _ => return Err(bad(no, "unrecognised line")),
            }
        }
        m.seed = seed.ok_or_else(|| bad(0, "no seed recorded"))?;
        m.test_fraction = fraction.ok_or_else(|| bad(0, "no test fraction recorded"))?;
        m.check_disjoint()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<SplitManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SplitManifest::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labels::ClassId;

    fn records(sizes: &[usize]) -> Vec<LabelRecord> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| {
                (0..n).map(move |i| LabelRecord {
                    image_id: format!("c{c}_{i:03}"),
                    class_id: ClassId(c),
                })
            })
            .collect()
    }

    const NAMES: [&str; 4] = ["a", "b", "c", "d"];

    #[test]
    fn five_and_five_gives_one_each() {
        let m = stratified_split(&records(&[5, 5]), &NAMES, 0.2, 1).unwrap();
        assert_eq!(m.counts.iter().map(|c| c.test).collect::<Vec<_>>(), vec![1, 1]);
        assert_eq!(m.train.len(), 8);
    }

    #[test]
    fn tiny_class_is_named() {
        let err = stratified_split(&records(&[5, 1]), &NAMES, 0.2, 1).unwrap_err();
        assert!(matches!(err, Error::Stratification { ref class, .. } if class == "b"));
    }

    #[test]
    fn bad_fraction_rejected() {
        assert!(stratified_split(&records(&[5, 5]), &NAMES, 0.0, 1).is_err());
        assert!(stratified_split(&records(&[5, 5]), &NAMES, 1.0, 1).is_err());
    }

    #[test]
    fn seeds_change_order_not_counts() {
        let r = records(&[40, 30, 20]);
        let a = stratified_split(&r, &NAMES, 0.2, 7).unwrap();
        let b = stratified_split(&r, &NAMES, 0.2, 7).unwrap();
        let c = stratified_split(&r, &NAMES, 0.2, 8).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.train, c.train);
        assert_eq!(a.counts, c.counts);
    }

    #[test]
    fn input_order_is_irrelevant() {
        let r = records(&[12, 9]);
        let mut rev = r.clone();
        rev.reverse();
        assert_eq!(
            stratified_split(&r, &NAMES, 0.2, 3).unwrap(),
            stratified_split(&rev, &NAMES, 0.2, 3).unwrap()
        );
    }

    #[test]
    fn manifest_text_roundtrip() {
        let m = stratified_split(&records(&[7, 3]), &NAMES, 0.2, 99).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("# split-manifest v1\n# seed 99\n# test_fraction 0.2\n"));
        assert_eq!(SplitManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn manifest_with_duplicate_rejected() {
        let text = "# split-manifest v1\n# seed 1\n# test_fraction 0.2\ntrain x\ntest x\n";
        assert!(SplitManifest::parse(text).is_err());
    }

    #[test]
    fn remainder_ties_go_alphabetically() {
        // both quotas are 0.5 above their floor; one slot is left for them
        let t = apportion(&[("zeta", 5), ("alpha", 5), ("mid", 10)], 0.1);
        assert_eq!(t, vec![1, 1, 1]);
        let t = apportion(&[("zeta", 15), ("alpha", 15)], 0.1);
        assert_eq!(t, vec![1, 2]);
        // 8.6 and 3.6 leave equal remainders that differ in the last bits as floats
        assert_eq!(apportion(&[("a", 43), ("b", 18)], 0.2), vec![9, 3]);
    }
}
