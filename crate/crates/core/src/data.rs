//! Interaction logs, split protocols, noise injection and per-item signals.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::sigmoid;

/// Fraction of the catalog, by popularity, counted as long tail.
pub const LONG_TAIL_PERCENT: usize = 85;

/// Rating threshold for the clean test protocol.
pub const CLEAN_RATING_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// MovieLens-100K `u.data`: `user \t item \t rating \t timestamp`.
    Ml100kTab,
    /// MovieLens-1M `ratings.dat`: `user::item::rating::timestamp`.
    Ml1mDoublecolon,
    /// Comma-separated with header `user,item[,rating][,timestamp]`.
    GenericImplicitCsv,
}

impl FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml100k_tab" => Ok(DataFormat::Ml100kTab),
            "ml1m_doublecolon" => Ok(DataFormat::Ml1mDoublecolon),
            "generic_implicit_csv" => Ok(DataFormat::GenericImplicitCsv),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub user: u32,
    pub item: u32,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// Raw records with dense user/item ids.
#[derive(Debug, Clone, Default)]
pub struct InteractionLog {
    pub records: Vec<Record>,
    /// Raw user id for each dense id.
    pub user_ids: Vec<String>,
    /// Raw item id for each dense id.
    pub item_ids: Vec<String>,
    /// Repeated (user, item) lines dropped at load time; the first occurrence wins.
    pub duplicates_dropped: usize,
}

#[derive(Default)]
struct Remap {
    dense: HashMap<String, u32>,
    raw: Vec<String>,
}

impl Remap {
    fn get(&mut self, raw: &str) -> u32 {
        if let Some(&id) = self.dense.get(raw) {
            return id;
        }
        let id = self.raw.len() as u32;
        self.dense.insert(raw.to_owned(), id);
        self.raw.push(raw.to_owned());
        id
    }
}

impl InteractionLog {
    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn has_ratings(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.rating.is_some())
    }

    /// Builds a log from already-dense triples. Ids are used as given.
    pub fn from_dense(user_count: usize, item_count: usize, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        let n_in = records.len();
        let mut kept = Vec::with_capacity(n_in);
        for r in records {
            if r.user as usize >= user_count || r.item as usize >= item_count {
                return domain(format!("record ({}, {}) out of range", r.user, r.item));
            }
            if seen.insert((r.user, r.item)) {
                kept.push(r);
            }
        }
        let duplicates_dropped = n_in - kept.len();
        Ok(InteractionLog {
            records: kept,
            user_ids: (0..user_count).map(|u| u.to_string()).collect(),
            item_ids: (0..item_count).map(|i| i.to_string()).collect(),
            duplicates_dropped,
        })
    }

    /// Writes `raw_id,dense_id` rows for users or items.
    pub fn write_remap(&self, path: &Path, items: bool) -> Result<()> {
        let ids = if items { &self.item_ids } else { &self.user_ids };
        let mut out = String::from("raw_id,dense_id\n");
        for (dense, raw) in ids.iter().enumerate() {
            out.push_str(&format!("{raw},{dense}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn parse_field<T: FromStr>(field: Option<&str>, what: &str, path: &Path, line: usize) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        path: path.to_owned(),
        line,
        msg: format!("missing {what}"),
    })?;
    raw.trim().parse::<T>().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        msg: format!("bad {what} `{raw}`"),
    })
}

/// Loads a ratings or interaction file.
pub fn load_ratings(path: &Path, format: DataFormat) -> Result<InteractionLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(&text, path, format)
}

pub(crate) fn parse_ratings(text: &str, path: &Path, format: DataFormat) -> Result<InteractionLog> {
    let mut users = Remap::default();
    let mut items = Remap::default();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut duplicates = 0;

    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    // column positions of rating / timestamp for the csv format
    let mut csv_cols: (Option<usize>, Option<usize>) = (Some(2), Some(3));
    if format == DataFormat::GenericImplicitCsv {
        let (lineno, header) = lines
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or_else(|| Error::Domain(format!("{}: empty file", path.display())))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "user" || cols[1] != "item" {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                msg: format!("expected header `user,item[,rating][,timestamp]`, got `{header}`"),
            });
        }
        let pos = |name: &str| cols.iter().position(|c| *c == name);
        csv_cols = (pos("rating"), pos("timestamp"));
    }

    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            DataFormat::Ml100kTab => line.split('\t').collect(),
            DataFormat::Ml1mDoublecolon => line.split("::").collect(),
            DataFormat::GenericImplicitCsv => line.split(',').collect(),
        };
        let movielens = format != DataFormat::GenericImplicitCsv;
        if movielens && fields.len() < 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                msg: format!("expected at least 3 fields, got {}", fields.len()),
            });
        }
        if fields.len() < 2 || fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno,
                msg: "missing user or item".into(),
            });
        }
        let rating = match csv_cols.0 {
            Some(c) if movielens || c < fields.len() => {
                let r: f64 = parse_field(fields.get(c).copied(), "rating", path, lineno)?;
                if !r.is_finite() || (movielens && !(0.5..=5.0).contains(&r)) {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line: lineno,
                        msg: format!("rating {r} out of range"),
                    });
                }
                Some(r)
            }
            _ => None,
        };
        let timestamp = match csv_cols.1 {
            Some(c) if c < fields.len() => Some(parse_field::<i64>(fields.get(c).copied(), "timestamp", path, lineno)?),
            _ => None,
        };
        let user = users.get(fields[0].trim());
        let item = items.get(fields[1].trim());
        if !seen.insert((user, item)) {
            duplicates += 1;
            continue;
        }
        records.push(Record {
            user,
            item,
            rating,
            timestamp,
        });
    }
    if records.is_empty() {
        return domain(format!("{}: no records", path.display()));
    }
    Ok(InteractionLog {
        records,
        user_ids: users.raw,
        item_ids: items.raw,
        duplicates_dropped: duplicates,
    })
}

/// Train/test positives per user after a split protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub user_count: usize,
    pub item_count: usize,
    /// Sorted training positives per user.
    pub train: Vec<Vec<u32>>,
    /// Sorted test positives per user.
    pub test: Vec<Vec<u32>>,
    /// Users left without training positives; their test items are discarded too.
    pub dropped_users: usize,
    /// Synthetic false positives added by [`inject_noise`].
    pub injected: Vec<(u32, u32)>,
}

impl SplitBundle {
    pub fn train_positive_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_positive_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn is_train_positive(&self, user: u32, item: u32) -> bool {
        self.train[user as usize].binary_search(&item).is_ok()
    }

    pub fn is_test_positive(&self, user: u32, item: u32) -> bool {
        self.test[user as usize].binary_search(&item).is_ok()
    }

    /// Same bundle with every test set emptied.
    pub fn without_test(&self) -> SplitBundle {
        SplitBundle {
            test: vec![Vec::new(); self.user_count],
            ..self.clone()
        }
    }

    fn from_sets(user_count: usize, item_count: usize, mut train: Vec<Vec<u32>>, mut test: Vec<Vec<u32>>) -> SplitBundle {
        let mut dropped = 0;
        for (tr, te) in train.iter_mut().zip(test.iter_mut()) {
            tr.sort_unstable();
            te.sort_unstable();
            if tr.is_empty() {
                if !te.is_empty() {
                    dropped += 1;
                }
                te.clear();
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} users without training positives");
        }
        SplitBundle {
            user_count,
            item_count,
            train,
            test,
            dropped_users: dropped,
            injected: Vec::new(),
        }
    }
}

/// Per user, half (floored) of the items rated ≥ 4 go to test; everything else trains.
pub fn split_clean_test(log: &InteractionLog, seed: u64) -> Result<SplitBundle> {
    if !log.has_ratings() {
        return domain("clean-test split requires ratings on every record");
    }
    let n_users = log.user_count();
    let mut liked: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    let mut other: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for r in &log.records {
        if r.rating.unwrap_or(0.0) >= CLEAN_RATING_THRESHOLD {
            liked[r.user as usize].push(r.item);
        } else {
            other[r.user as usize].push(r.item);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_users);
    let mut test = Vec::with_capacity(n_users);
    for (mut liked, mut rest) in liked.into_iter().zip(other) {
        liked.shuffle(&mut rng);
        let n_test = liked.len() / 2;
        let kept = liked.split_off(n_test);
        rest.extend(kept);
        test.push(liked);
        train.push(rest);
    }
    Ok(SplitBundle::from_sets(n_users, log.item_count(), train, test))
}

/// Global uniform split of interactions.
pub fn split_implicit(log: &InteractionLog, test_fraction: f64, seed: u64) -> Result<SplitBundle> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return domain(format!("test fraction must lie in (0, 1), got {test_fraction}"));
    }
    let n = log.records.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_test = (test_fraction * n as f64).round() as usize;
    let n_users = log.user_count();
    let mut train = vec![Vec::new(); n_users];
    let mut test = vec![Vec::new(); n_users];
    for (k, &idx) in order.iter().enumerate() {
        let r = log.records[idx];
        if k < n_test {
            test[r.user as usize].push(r.item);
        } else {
            train[r.user as usize].push(r.item);
        }
    }
    Ok(SplitBundle::from_sets(n_users, log.item_count(), train, test))
}

const NOISE_MAX_TRIES_PER_PAIR: usize = 10_000;

/// Adds `⌊rate · |train|⌋` false positives drawn uniformly from pairs that are
/// neither train nor test positives.
pub fn inject_noise(bundle: &SplitBundle, rate: f64, seed: u64) -> Result<SplitBundle> {
    if !(0.0..1.0).contains(&rate) {
        return domain(format!("noise rate must lie in [0, 1), got {rate}"));
    }
    let mut out = bundle.clone();
    let n_noise = (rate * bundle.train_positive_count() as f64).floor() as usize;
    if n_noise == 0 {
        return Ok(out);
    }
    let active: Vec<u32> = (0..bundle.user_count as u32)
        .filter(|&u| !bundle.train[u as usize].is_empty())
        .collect();
    if active.is_empty() {
        return domain("no users with training positives");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added: HashSet<(u32, u32)> = HashSet::with_capacity(n_noise);
    let mut injected = Vec::with_capacity(n_noise);
    while injected.len() < n_noise {
        let mut tries = 0;
        loop {
            let u = active[rng.random_range(0..active.len())];
            let i = rng.random_range(0..bundle.item_count as u32);
            if !bundle.is_train_positive(u, i) && !bundle.is_test_positive(u, i) && added.insert((u, i)) {
                injected.push((u, i));
                break;
            }
            tries += 1;
            if tries >= NOISE_MAX_TRIES_PER_PAIR {
                return domain("noise injection ran out of eligible (user, item) pairs");
            }
        }
    }
    for &(u, i) in &injected {
        out.train[u as usize].push(i);
    }
    for tr in &mut out.train {
        tr.sort_unstable();
    }
    out.injected = injected;
    Ok(out)
}

/// Precomputed per-item popularity, rarity, quality and long-tail membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalBuffer {
    pub counts: Vec<u32>,
    /// `ln(1 + count) / ln(1 + max_count)` over training interactions.
    pub popularity: Vec<f64>,
    pub rarity: Vec<f64>,
    /// `σ(mean_rating − global_mean)`; `None` without ratings or for unrated items.
    pub quality: Option<Vec<Option<f64>>>,
    pub long_tail: Vec<bool>,
}

impl SignalBuffer {
    pub fn item_count(&self) -> usize {
        self.popularity.len()
    }

    pub fn quality_of(&self, item: u32) -> Option<f64> {
        self.quality.as_ref().and_then(|q| q[item as usize])
    }

    pub fn long_tail_count(&self) -> usize {
        self.long_tail.iter().filter(|&&t| t).count()
    }
}

/// Signals from training data only; ratings are looked up in `log` for training pairs.
pub fn compute_signals(bundle: &SplitBundle, log: &InteractionLog) -> SignalBuffer {
    let n_items = bundle.item_count;
    let mut counts = vec![0u32; n_items];
    for items in &bundle.train {
        for &i in items {
            counts[i as usize] += 1;
        }
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let denom = (1.0 + max_count as f64).ln();
    let popularity: Vec<f64> = counts
        .iter()
        .map(|&c| if max_count == 0 { 0.0 } else { (1.0 + c as f64).ln() / denom })
        .collect();
    let rarity = popularity.iter().map(|p| 1.0 - p).collect();

    let quality = if log.has_ratings() {
        let ratings: HashMap<(u32, u32), f64> = log.records.iter().filter_map(|r| r.rating.map(|x| ((r.user, r.item), x))).collect();
        let mut sum = vec![0.0; n_items];
        let mut n = vec![0usize; n_items];
        for (u, items) in bundle.train.iter().enumerate() {
            for &i in items {
                if let Some(&x) = ratings.get(&(u as u32, i)) {
                    sum[i as usize] += x;
                    n[i as usize] += 1;
                }
            }
        }
        let total: usize = n.iter().sum();
        if total == 0 {
            None
        } else {
            let global = sum.iter().sum::<f64>() / total as f64;
            Some(
                sum.iter()
                    .zip(&n)
                    .map(|(&s, &k)| (k > 0).then(|| sigmoid(s / k as f64 - global)))
                    .collect(),
            )
        }
    } else {
        None
    };

    // Head = most popular items (ties by ascending id); everything else is tail.
    let tail_size = (LONG_TAIL_PERCENT * n_items).div_ceil(100);
    let mut order: Vec<u32> = (0..n_items as u32).collect();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    let mut long_tail = vec![false; n_items];
    for &i in &order[n_items - tail_size..] {
        long_tail[i as usize] = true;
    }

    SignalBuffer {
        counts,
        popularity,
        rarity,
        quality,
        long_tail,
    }
}

/// Writes a bundle's train/test pairs as `user,item,split` csv (dense ids).
pub fn write_split(bundle: &SplitBundle, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::from("user,item,split\n");
    for (u, (tr, te)) in bundle.train.iter().zip(&bundle.test).enumerate() {
        for i in tr {
            buf.push_str(&format!("{u},{i},train\n"));
        }
        for i in te {
            buf.push_str(&format!("{u},{i},test\n"));
        }
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("mem")
    }

    #[test]
    fn parses_ml100k_line() {
        let log = parse_ratings("196\t242\t3\t881250949\n", &p(), DataFormat::Ml100kTab).unwrap();
        assert_eq!(log.records.len(), 1);
        let r = log.records[0];
        assert_eq!(log.user_ids[r.user as usize], "196");
        assert_eq!(log.item_ids[r.item as usize], "242");
        assert_eq!(r.rating, Some(3.0));
        assert_eq!(r.timestamp, Some(881250949));
    }

    #[test]
    fn parses_ml1m_line() {
        let log = parse_ratings("1::1193::5::978300760\n", &p(), DataFormat::Ml1mDoublecolon).unwrap();
        assert_eq!(log.records[0].rating, Some(5.0));
    }

    #[test]
    fn parses_generic_csv_with_and_without_rating() {
        let log = parse_ratings("user,item\na,x\nb,x\na,y\n", &p(), DataFormat::GenericImplicitCsv).unwrap();
        assert_eq!(log.records.len(), 3);
        assert_eq!(log.user_count(), 2);
        assert!(!log.has_ratings());
        let log = parse_ratings("user,item,rating,timestamp\na,x,4.5,10\n", &p(), DataFormat::GenericImplicitCsv).unwrap();
        assert_eq!(log.records[0].rating, Some(4.5));
        assert_eq!(log.records[0].timestamp, Some(10));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_ratings("1\t2\t3\t4\n1\tx\n", &p(), DataFormat::Ml100kTab).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = parse_ratings("1\t2\tthree\t4\n", &p(), DataFormat::Ml100kTab).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_ratings("usr,item\n", &p(), DataFormat::GenericImplicitCsv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_file_is_domain_error() {
        assert!(matches!(parse_ratings("", &p(), DataFormat::Ml100kTab), Err(Error::Domain(_))));
        assert!(matches!(
            parse_ratings("\n\n", &p(), DataFormat::GenericImplicitCsv),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn duplicates_are_dropped() {
        let log = parse_ratings("1\t2\t3\t4\n1\t2\t5\t6\n", &p(), DataFormat::Ml100kTab).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.duplicates_dropped, 1);
        assert_eq!(log.records[0].rating, Some(3.0));
    }

    fn rated_user(liked: usize, disliked: usize) -> InteractionLog {
        let mut recs = Vec::new();
        for i in 0..liked {
            recs.push(Record {
                user: 0,
                item: i as u32,
                rating: Some(4.0 + (i % 2) as f64),
                timestamp: None,
            });
        }
        for i in 0..disliked {
            recs.push(Record {
                user: 0,
                item: (liked + i) as u32,
                rating: Some(2.0),
                timestamp: None,
            });
        }
        InteractionLog::from_dense(1, liked + disliked, recs).unwrap()
    }

    #[test]
    fn clean_split_protocol_arithmetic() {
        let b = split_clean_test(&rated_user(10, 5), 7).unwrap();
        assert_eq!(b.test[0].len(), 5);
        assert_eq!(b.train[0].len(), 10);
        for i in &b.test[0] {
            assert!(*i < 10, "test item must come from the liked set");
        }
        let b = split_clean_test(&rated_user(1, 0), 7).unwrap();
        assert_eq!(b.test[0].len(), 0);
        assert_eq!(b.train[0].len(), 1);
        let a = split_clean_test(&rated_user(10, 5), 3).unwrap();
        assert_eq!(a, split_clean_test(&rated_user(10, 5), 3).unwrap());
    }

    #[test]
    fn clean_split_requires_ratings() {
        let log = InteractionLog::from_dense(
            1,
            1,
            vec![Record {
                user: 0,
                item: 0,
                rating: None,
                timestamp: None,
            }],
        )
        .unwrap();
        assert!(split_clean_test(&log, 0).is_err());
    }

    fn implicit_log(n_users: usize, n_items: usize, per_user: usize) -> InteractionLog {
        let mut recs = Vec::new();
        for u in 0..n_users {
            for k in 0..per_user {
                recs.push(Record {
                    user: u as u32,
                    item: ((u * 7 + k * 3) % n_items) as u32,
                    rating: None,
                    timestamp: None,
                });
            }
        }
        InteractionLog::from_dense(n_users, n_items, recs).unwrap()
    }

    #[test]
    fn implicit_split_counts() {
        let log = implicit_log(10, 50, 10);
        assert_eq!(log.records.len(), 100);
        let b = split_implicit(&log, 0.2, 1).unwrap();
        assert_eq!(b.test_positive_count() + b.train_positive_count(), 100);
        assert_eq!(b.test_positive_count(), 20);
        assert!(split_implicit(&log, 0.0, 1).is_err());
        assert!(split_implicit(&log, 1.0, 1).is_err());
        assert_eq!(b, split_implicit(&log, 0.2, 1).unwrap());
        for u in 0..10 {
            for i in &b.test[u] {
                assert!(!b.train[u].contains(i));
            }
        }
    }

    #[test]
    fn users_emptied_by_split_are_dropped() {
        // one user with a single interaction: with a large test fraction it
        // very likely lands in test for some seed
        let log = implicit_log(20, 50, 1);
        let dropped: usize = (0..20).map(|s| split_implicit(&log, 0.9, s).unwrap().dropped_users).sum();
        assert!(dropped > 0);
        for s in 0..20 {
            let b = split_implicit(&log, 0.9, s).unwrap();
            for u in 0..20 {
                if b.train[u].is_empty() {
                    assert!(b.test[u].is_empty());
                }
            }
        }
    }

    #[test]
    fn noise_injection_counts_and_membership() {
        let log = implicit_log(50, 200, 20);
        let b = split_implicit(&log, 0.2, 5).unwrap();
        assert_eq!(inject_noise(&b, 0.0, 1).unwrap(), b);
        assert_eq!(b.train_positive_count(), 800);
        let noisy = inject_noise(&b, 0.05, 1).unwrap();
        assert_eq!(noisy.train_positive_count(), 840);
        assert_eq!(noisy.injected.len(), 40);
        // exhaustive membership check
        for &(u, i) in &noisy.injected {
            assert!(!b.is_train_positive(u, i));
            assert!(!b.is_test_positive(u, i));
            assert!(noisy.is_train_positive(u, i));
        }
        for u in 0..50 {
            for i in &b.train[u] {
                assert!(noisy.train[u].contains(i));
            }
            assert_eq!(noisy.test[u], b.test[u]);
        }
        assert!(inject_noise(&b, 1.0, 1).is_err());
        assert_eq!(noisy, inject_noise(&b, 0.05, 1).unwrap());
    }

    #[test]
    fn signals_endpoints_and_long_tail_size() {
        let recs = vec![
            Record {
                user: 0,
                item: 0,
                rating: Some(5.0),
                timestamp: None,
            },
            Record {
                user: 1,
                item: 0,
                rating: Some(1.0),
                timestamp: None,
            },
            Record {
                user: 2,
                item: 0,
                rating: Some(3.0),
                timestamp: None,
            },
            Record {
                user: 0,
                item: 1,
                rating: Some(3.0),
                timestamp: None,
            },
            Record {
                user: 1,
                item: 2,
                rating: Some(3.0),
                timestamp: None,
            },
        ];
        let log = InteractionLog::from_dense(3, 4, recs).unwrap();
        let b = SplitBundle::from_sets(3, 4, vec![vec![0, 1], vec![0, 2], vec![0]], vec![vec![]; 3]);
        let s = compute_signals(&b, &log);
        assert_eq!(s.popularity[0], 1.0);
        assert_eq!(s.popularity[3], 0.0);
        assert!((s.popularity[1] - 2f64.ln() / 4f64.ln()).abs() < 1e-15);
        assert_eq!(s.rarity[0], 0.0);
        // global mean = 3, item 0 mean = 3 → σ(0)
        assert!((s.quality_of(0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.quality_of(3), None);
        assert_eq!(s.long_tail_count(), 4); // ⌈0.85·4⌉
        assert!(!s.long_tail.iter().all(|t| !t));

        let n = 1682;
        assert_eq!((LONG_TAIL_PERCENT * n).div_ceil(100), 1430);
    }

    #[test]
    fn long_tail_ties_break_by_id() {
        let log = implicit_log(1, 20, 0);
        let b = SplitBundle::from_sets(1, 20, vec![vec![]], vec![vec![]]);
        let s = compute_signals(&b, &log);
        // all counts tie: head = lowest ids
        assert_eq!(s.long_tail_count(), 17);
        assert!(!s.long_tail[0] && !s.long_tail[2] && s.long_tail[3]);
    }
}
