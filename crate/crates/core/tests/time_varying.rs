use std::collections::BTreeSet;

use nalgebra::DMatrix;
use sbl_core::datagen::{add_noise, gen_dictionary, gen_tv_signal, RowSet, TvEvent, TvSignalSpec};
use sbl_core::{solve_time_varying, BsblOptions, TvProblem, TvSolver};

#[test]
fn supports_match_nonzero_pattern_and_schedule() {
    let spec = TvSignalSpec::default();
    for seed in 0..10 {
        let sig = gen_tv_signal(&spec, seed).unwrap();
        // Recount from the matrix itself.
        for (c, sup) in sig.supports.iter().enumerate() {
            let nz: Vec<usize> = (0..spec.m).filter(|&r| sig.x[(r, c)] != 0.0).collect();
            assert_eq!(&nz, sup, "column {c}");
            let want = match c {
                0..=14 => 15,
                15..=24 => 25,
                _ => 20,
            };
            assert_eq!(sup.len(), want, "column {c}");
        }
        // Removed rows were active before column 25 and never come back.
        let before: BTreeSet<_> = sig.supports[24].iter().collect();
        let after: BTreeSet<_> = sig.supports[25].iter().collect();
        assert_eq!(before.difference(&after).count(), 5);
        assert!(after.is_subset(&before));
    }
}

fn small_spec() -> TvSignalSpec {
    TvSignalSpec {
        m: 40,
        t: 12,
        initial: RowSet::Random(4),
        events: vec![TvEvent {
            start: 6,
            added: RowSet::Random(2),
            removed: RowSet::Random(1),
        }],
        ar_coeff_range: (0.7, 0.99),
        max_duration: 20,
    }
}

fn window_nmse(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    dict: &sbl_core::Dictionary,
    w: usize,
    solver: TvSolver,
) -> f64 {
    let r = solve_time_varying(
        &TvProblem::new(dict.clone(), y.clone(), w).unwrap(),
        solver,
        &BsblOptions::default(),
    );
    assert_eq!(r.failed_windows().count(), 0);
    (&r.x_hat - x).norm_squared() / x.norm_squared()
}

#[test]
fn removing_noise_lowers_error() {
    let spec = small_spec();
    let dict = gen_dictionary(16, 40, 2).unwrap();
    let mut noisy_total = [0.0; 4];
    let mut clean_total = [0.0; 4];
    for seed in 0..4 {
        let sig = gen_tv_signal(&spec, seed).unwrap();
        let y = dict.matrix() * &sig.x;
        let (yn, _) = add_noise(&y, 20.0, 100 + seed).unwrap();
        let configs = [
            (2, TvSolver::Tmsbl),
            (2, TvSolver::Msbl),
            (4, TvSolver::Tmsbl),
            (4, TvSolver::Msbl),
        ];
        for (i, &(w, s)) in configs.iter().enumerate() {
            noisy_total[i] += window_nmse(&yn, &sig.x, &dict, w, s);
            clean_total[i] += window_nmse(&y, &sig.x, &dict, w, s);
        }
    }
    for i in 0..4 {
        assert!(
            clean_total[i] < noisy_total[i],
            "config {i}: {} vs {}",
            clean_total[i],
            noisy_total[i]
        );
    }
}
