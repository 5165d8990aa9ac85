use std::sync::Arc;

use proptest::prelude::*;
use synrisk::io;
use synrisk_core::synthesis::{fit_cart, generate_mixture_release, GibbsConfig};
use synrisk_core::{Cell, Dataset, Schema, Target, TargetFile, VariableDef};

fn schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(vec![
            VariableDef::categorical("area", &["n", "s", "e, w"], false, true),
            VariableDef::continuous("wage", -50.0, 5000.0, true, true),
            VariableDef::categorical("flag", &["no", "yes"], true, false),
        ])
        .unwrap(),
    )
}

fn rows() -> impl Strategy<Value = Vec<(u32, f64, u32)>> {
    proptest::collection::vec((0u32..3, -50.0f64..5000.0, 0u32..2), 0..40)
}

proptest! {
    #[test]
    fn dataset_csv_roundtrip(rows in rows()) {
        let s = schema();
        let cells: Vec<Vec<Cell>> = rows.iter().map(|&(a, w, f)| vec![Cell::Level(a), Cell::Real(w), Cell::Level(f)]).collect();
        let d = Dataset::from_rows(s.clone(), &cells).unwrap();
        let mut buf = Vec::new();
        io::write_dataset_to(&mut buf, &d).unwrap();
        let back = io::read_dataset(buf.as_slice(), s).unwrap();
        prop_assert_eq!(back.n_rows(), d.n_rows());
        for j in 0..3 {
            prop_assert_eq!(back.column(j), d.column(j));
        }
    }

    #[test]
    fn target_csv_roundtrip(rows in rows(), truth in proptest::collection::vec(proptest::option::of(1usize..100), 0..40)) {
        let s = schema();
        let targets: Vec<Target> = rows
            .iter()
            .zip(truth.iter().chain(std::iter::repeat(&None)))
            .enumerate()
            .map(|(i, (&(a, w, _), &t))| {
                let mut known = vec![(0, Cell::Level(a))];
                if i % 3 != 0 {
                    known.push((1, Cell::Real(w)));
                }
                Target { id: format!("t{i}"), known, true_row_id: t }
            })
            .collect();
        let file = TargetFile::new(&s, targets).unwrap();
        let mut buf = Vec::new();
        io::write_targets_to(&mut buf, &file, &s).unwrap();
        let back = io::read_targets(buf.as_slice(), &s).unwrap();
        prop_assert_eq!(back, file);
    }
}

#[test]
fn release_directory_roundtrip() {
    let s = Arc::new(
        Schema::new(vec![
            VariableDef::categorical("u", &["a", "b"], false, true),
            VariableDef::categorical("x", &["p", "q", "r"], true, true),
            VariableDef::categorical("y", &["0", "1"], true, false),
        ])
        .unwrap(),
    );
    let cells: Vec<Vec<Cell>> = (0..30).map(|i| vec![Cell::Level(i % 2), Cell::Level(i % 3), Cell::Level((i / 3) % 2)]).collect();
    let d = Dataset::from_rows(s.clone(), &cells).unwrap();
    let cfg = GibbsConfig { classes: 3, burn_in: 20, thin: 1, draws: 4 };
    let model = synrisk_core::synthesis::fit_mixture(&d, &cfg, 3).unwrap();
    let release = generate_mixture_release(&model, &d, 2, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = io::write_release(dir.path(), &release).unwrap();
    let back = io::load_release(&manifest, Some(&s)).unwrap();
    assert_eq!(back, release);

    let cart = fit_cart(&d, &[1, 2], 3).unwrap();
    let release = synrisk_core::synthesis::cart_generate(&cart, &d, 2, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = io::write_release(dir.path(), &release).unwrap();
    assert_eq!(io::load_release(&manifest, None).unwrap(), release);

    let other = Arc::new(Schema::new(vec![VariableDef::categorical("u", &["a", "b"], true, true)]).unwrap());
    assert!(io::load_release(&manifest, Some(&other)).is_err());
}
