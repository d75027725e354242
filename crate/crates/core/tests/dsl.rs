mod support;

use featloop_core::data::Dataset;
use featloop_core::dsl::{fit, parse, render};
use featloop_core::seed;
use rand::Rng;
use support::gen;

#[test]
fn random_programs_round_trip() {
    let mut rng = seed::rng(11);
    for _ in 0..2000 {
        let p = gen::program(&mut rng, 4);
        let text = render(&p);
        let back = parse(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert!(back.structurally_eq(&p), "{text}");
        assert_eq!(render(&back), text);
    }
}

fn with_val_mutated(d: &Dataset, val: &[usize], rng: &mut impl Rng) -> Dataset {
    let mut rows: Vec<Vec<_>> = (0..d.n_rows())
        .map(|r| d.feature_names().iter().map(|c| d.cell(r, c).unwrap()).collect())
        .collect();
    for &r in val {
        for (i, cell) in rows[r].iter_mut().enumerate() {
            if i < gen::NUMERIC.len() + 3 {
                *cell = gen::value(rng);
            }
        }
    }
    Dataset::from_rows(d.schema().clone(), rows, d.labels().to_vec()).unwrap()
}

#[test]
fn fitted_statistics_ignore_validation_rows() {
    let mut rng = seed::rng(12);
    let train: Vec<usize> = (0..24).collect();
    let val: Vec<usize> = (24..40).collect();
    let mut fitted = 0;
    for _ in 0..300 {
        let d = gen::table(&mut rng, 40);
        let p = gen::program(&mut rng, 3);
        let mutated = with_val_mutated(&d, &val, &mut rng);
        match (fit(&p, &d, &train), fit(&p, &mutated, &train)) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.fitted_stats(), b.fitted_stats(), "{p}");
                fitted += 1;
            }
            (Err(_), Err(_)) => {}
            _ => panic!("fit outcome depends on validation rows: {p}"),
        }
    }
    assert!(fitted > 150, "{fitted}");
}

#[test]
fn outputs_are_finite_or_missing() {
    let mut rng = seed::rng(13);
    let train: Vec<usize> = (0..20).collect();
    for _ in 0..2000 {
        let d = gen::table(&mut rng, 30);
        let p = gen::program(&mut rng, 4);
        if let Ok(f) = fit(&p, &d, &train) {
            for v in f.apply(&d).unwrap().into_iter().flatten() {
                assert!(v.is_finite(), "{p}");
            }
        }
    }
}

#[test]
fn label_references_are_rejected() {
    let mut rng = seed::rng(14);
    let d = gen::table(&mut rng, 20);
    let all: Vec<usize> = (0..20).collect();
    for _ in 0..500 {
        let p = gen::label_program(&mut rng, 3);
        assert!(fit(&p, &d, &all).is_err(), "{p}");
        assert!(fit(&parse(&render(&p)).unwrap(), &d, &all).is_err());
    }
}
