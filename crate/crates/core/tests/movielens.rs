//! Checks on the MovieLens 100K ratings. Skipped when the data is not present
//! (see the README for where to put it).

use std::collections::BTreeMap;
use std::path::PathBuf;

use erbm::dataset::{load_ratings, temporal_split, DEFAULT_SCALE};
use erbm::neighborhood::explainability_matrix;
use erbm::rbm::{train, TrainConfig};

fn ratings_path() -> Option<PathBuf> {
    let dir = std::env::var_os("ML100K_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k"));
    let path = dir.join("u.data");
    if path.exists() {
        Some(path)
    } else {
        eprintln!("skipping: {} not found", path.display());
        None
    }
}

#[test]
fn split_invariants_hold_on_the_full_dataset() {
    let Some(path) = ratings_path() else { return };
    let table = load_ratings(&path, '\t', DEFAULT_SCALE).unwrap();
    assert_eq!(table.len(), 100_000);
    assert_eq!((table.n_users(), table.n_items()), (943, 1682));
    let split = temporal_split(&table, 0.1).unwrap();
    assert_eq!(split.train.n_ratings() + split.test.len(), 100_000);

    let mut per_user: BTreeMap<usize, (usize, Vec<(i64, usize)>, Vec<(i64, usize)>)> = BTreeMap::new();
    for r in table.records() {
        per_user.entry(r.user).or_default().0 += 1;
    }
    for r in split.train_table.records() {
        per_user.entry(r.user).or_default().1.push((r.timestamp, r.item));
    }
    for r in split.test.records() {
        assert!(!split.train.is_rated(r.user, r.item));
        per_user.entry(r.user).or_default().2.push((r.timestamp, r.item));
    }
    for (total, train, test) in per_user.values() {
        assert_eq!(train.len() + test.len(), *total);
        assert_eq!(test.len(), total.div_ceil(10));
        let latest_train = train.iter().max().unwrap();
        let earliest_test = test.iter().min().unwrap();
        assert!(latest_train < earliest_test);
    }
}

#[test]
fn reconstruction_error_falls_during_training() {
    let Some(path) = ratings_path() else { return };
    let table = load_ratings(&path, '\t', DEFAULT_SCALE).unwrap();
    let split = temporal_split(&table, 0.1).unwrap();
    let expl = explainability_matrix(&split.train, 50).unwrap();
    let (params, log) = train(&split, &expl, &TrainConfig::default()).unwrap();
    assert!(params.is_finite());
    let rmse: Vec<f64> = log.epochs.iter().map(|e| e.reconstruction_rmse).collect();
    assert_eq!(rmse.len(), 30);
    for w in rmse[..5].windows(2) {
        assert!(w[1] <= w[0], "{rmse:?}");
    }
    assert!(rmse[29] < rmse[0], "{rmse:?}");
}
