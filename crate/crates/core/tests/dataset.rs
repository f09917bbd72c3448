use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dcrgan::dataset::{self, generate, synth_generate, Split, SynthConfig, ZslDataset, MANIFEST_FILE};
use proptest::prelude::*;

/// Writes a benchmark-shaped dataset with `per_class` instances per class.
/// Seen classes contribute to train and test_seen, unseen ones to test_unseen.
fn write_shaped(dir: &Path, d_v: usize, d_a: usize, seen: usize, unseen: usize, per_class: usize) {
    let classes = seen + unseen;
    let mut features = String::new();
    let mut labels = String::new();
    let mut splits = String::new();
    let mut i = 0;
    for c in 0..classes {
        for k in 0..per_class {
            let row: Vec<String> = (0..d_v).map(|j| format!("{}", (c * 7 + k + j) % 11)).collect();
            writeln!(features, "{}", row.join(",")).unwrap();
            writeln!(labels, "{c}").unwrap();
            let split = match (c < seen, k) {
                (true, 0) => "test_seen",
                (true, _) => "train",
                (false, _) => "test_unseen",
            };
            writeln!(splits, "{i},{split}").unwrap();
            i += 1;
        }
    }
    let mut attributes = String::new();
    for c in 0..classes {
        let row: Vec<String> = (0..d_a).map(|j| format!("{}", ((c + j) % 5) as f64 / 4.0)).collect();
        writeln!(attributes, "{}", row.join(",")).unwrap();
    }
    fs::write(dir.join("features.csv"), features).unwrap();
    fs::write(dir.join("labels.csv"), labels).unwrap();
    fs::write(dir.join("splits.csv"), splits).unwrap();
    fs::write(dir.join("attributes.csv"), attributes).unwrap();
    fs::write(
        dir.join(MANIFEST_FILE),
        format!(
            "features = features.csv\nlabels = labels.csv\nattributes = attributes.csv\nsplits = splits.csv\n\
             d_v = {d_v}\nd_a = {d_a}\nnum_seen = {seen}\nnum_unseen = {unseen}\n"
        ),
    )
    .unwrap();
}

#[test]
fn awa1_shaped_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // 27 train + 13 validation classes are all seen.
    write_shaped(dir.path(), 16, 85, 27 + 13, 10, 3);
    let ds = dataset::load(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ds.d_a(), 85);
    assert_eq!(ds.seen_classes().len(), 40);
    assert_eq!(ds.unseen_classes().len(), 10);
}

#[test]
fn cub_shaped_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_shaped(dir.path(), 8, 312, 150, 50, 2);
    let ds = dataset::load(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ds.d_a(), 312);
    assert_eq!(ds.seen_classes().len(), 150);
    assert_eq!(ds.unseen_classes().len(), 50);
}

#[test]
fn test_unseen_with_seen_class_is_rejected_by_id() {
    let dir = tempfile::tempdir().unwrap();
    write_shaped(dir.path(), 4, 3, 3, 2, 3);
    let path = dir.path().join("splits.csv");
    // Instance 4 belongs to seen class 1.
    let text = fs::read_to_string(&path).unwrap().replace("4,train", "4,test_unseen");
    fs::write(&path, text).unwrap();
    let err = dataset::load(dir.path().join(MANIFEST_FILE)).unwrap_err();
    assert!(err.to_string().contains("class 1"), "{err}");
}

#[test]
fn min_prototype_distance_monte_carlo() {
    let mut ok = 0;
    for seed in 0..100 {
        let cfg = SynthConfig {
            d_v: 64,
            visual_noise_sigma: 1.0,
            unseen_overlap: 0.0,
            instances_per_class: 2,
            seed,
            ..SynthConfig::default()
        };
        let s = generate(&cfg).unwrap();
        let c = s.dataset.num_classes();
        let mut min = f64::INFINITY;
        for i in 0..c {
            for j in i + 1..c {
                let d: f64 = s
                    .prototype(i)
                    .iter()
                    .zip(s.prototype(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min = min.min(d);
            }
        }
        if min > 4.0 * cfg.visual_noise_sigma {
            ok += 1;
        }
    }
    assert!(ok >= 99, "{ok}/100 seeds separated");
}

#[test]
fn overlap_one_property() {
    for seed in 0..10 {
        let s = generate(&SynthConfig {
            unseen_overlap: 1.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(s.overlap_pairs.len(), 1);
        let (mut vis, mut sem) = (0.0, 0.0);
        for &(a, b) in &s.overlap_pairs {
            assert!(s.dataset.is_unseen(a) && s.dataset.is_unseen(b));
            vis += s.prototype(a).iter().zip(s.prototype(b)).map(|(x, y)| (x - y).abs()).sum::<f64>();
            sem += s
                .dataset
                .semantic(a)
                .iter()
                .zip(s.dataset.semantic(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
        let k = s.overlap_pairs.len() as f64;
        assert_eq!(vis / k, 0.0);
        assert!(sem / k >= 1.0);
    }
}

fn bytes_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_is_bit_exact() {
    let cfg = SynthConfig {
        seed: 42,
        unseen_overlap: 1.0,
        ..SynthConfig::default()
    };
    let (a, b) = (synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
    let (pa, pb) = (a.to_parts(), b.to_parts());
    assert_eq!(
        pa.visual.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        pb.visual.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(pa.semantics, pb.semantics);
    assert_eq!(pa.train, pb.train);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    dataset::save(&a, d1.path()).unwrap();
    dataset::save(&b, d2.path()).unwrap();
    assert_eq!(bytes_of(d1.path()), bytes_of(d2.path()));
}

#[test]
fn generated_dataset_round_trips_through_files() {
    let ds = synth_generate(&SynthConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let back = dataset::load(dataset::save(&ds, dir.path()).unwrap()).unwrap();
    assert_eq!(back.to_parts().visual, ds.to_parts().visual);
    assert_eq!(back.to_parts().semantics, ds.to_parts().semantics);
    assert_eq!(back.seen_classes(), ds.seen_classes());
}

fn assert_split_integrity(ds: &ZslDataset) {
    let n = ds.len();
    let mut seen_idx = vec![false; n];
    for s in [Split::Train, Split::TestSeen, Split::TestUnseen] {
        for &i in ds.split(s) {
            assert!(i < n);
            assert!(!seen_idx[i], "index {i} in two splits");
            seen_idx[i] = true;
            let c = ds.label(i);
            match s {
                Split::TestUnseen => assert!(ds.unseen_classes().contains(&c)),
                _ => assert!(ds.seen_classes().contains(&c)),
            }
        }
    }
    for c in ds.seen_classes() {
        assert!(!ds.unseen_classes().contains(c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_datasets_keep_split_integrity(
        num_seen in 2usize..8,
        num_unseen in 1usize..6,
        per_class in 2usize..12,
        overlap in 0.0f64..1.0,
        frac in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let cfg = SynthConfig {
            num_seen,
            num_unseen,
            instances_per_class: per_class,
            d_v: 6,
            d_a: 4,
            unseen_overlap: if num_unseen >= 2 { overlap } else { 0.0 },
            seen_test_fraction: frac,
            seed,
            ..SynthConfig::default()
        };
        let s = generate(&cfg).unwrap();
        assert_split_integrity(&s.dataset);
        for &(a, b) in &s.overlap_pairs {
            prop_assert!(s.dataset.is_unseen(a) && s.dataset.is_unseen(b));
            prop_assert_eq!(s.prototype(a), s.prototype(b));
        }
    }
}
