mod common;

use causal_testbed::covariates::{generate_preset, standardize, Preset, Standardized};
use causal_testbed::dgp::{
    build_dgp, realize, rescale_assignment, satt, Alignment, Basis, DgpConfig, DgpSpec,
    Heterogeneity, Knobs, Overlap, RealizeOptions, ResponseModel, TreatedShare, TreatmentModel,
    PROPENSITY_BAND, SETTINGS,
};
use causal_testbed::stats::{mean, pop_sd, sd};
use causal_testbed::Error;
use common::setting_table;
use nalgebra::DMatrix;

fn desk(seed: u64) -> Standardized {
    standardize(&generate_preset(Preset::Desk, seed).unwrap())
}

fn knobs(id: usize) -> Knobs {
    Knobs::setting(id).unwrap()
}

fn build(k: Knobs, x: &Standardized, seed: u64) -> DgpSpec {
    build_dgp(k, x, seed, &DgpConfig::default()).unwrap()
}

#[test]
fn canonical_settings_match_the_table() {
    let table = setting_table();
    assert_eq!(table.len(), 77);
    for (id, names) in table {
        let k = knobs(id);
        let got = [
            k.treatment_model.name(),
            k.treated_share.name(),
            k.overlap.name(),
            k.response_model.name(),
            k.alignment.name(),
            k.heterogeneity.name(),
        ];
        assert_eq!(got.to_vec(), names, "setting {id}");
        assert_eq!(SETTINGS[id - 1], k);
    }
    assert!(Knobs::setting(0).is_err());
    assert!(Knobs::setting(78).is_err());
}

#[test]
fn setting_three_has_a_constant_effect() {
    let x = desk(1);
    let k = knobs(3);
    assert_eq!(k.heterogeneity, Heterogeneity::None);
    let spec = build(k, &x, 7);
    let s = spec.surfaces(&x.matrix);
    let d: Vec<f64> = s.mu1.iter().zip(&s.mu0).map(|(a, b)| a - b).collect();
    assert!(d.iter().all(|v| (v - d[0]).abs() < 1e-12));
    assert_eq!(pop_sd(&s.cate), 0.0);
}

#[test]
fn low_heterogeneity_interacts_a_few_terms() {
    let x = desk(1);
    let k = Knobs {
        heterogeneity: Heterogeneity::Low,
        ..knobs(1)
    };
    let counts: Vec<usize> = (0..30).map(|s| build(k, &x, s).response.effect_terms.len()).collect();
    assert!(counts.iter().all(|c| (1..=5).contains(c)), "{counts:?}");
    let k_high = Knobs {
        heterogeneity: Heterogeneity::High,
        ..knobs(1)
    };
    let high: Vec<usize> = (0..30).map(|s| build(k_high, &x, s).response.effect_terms.len()).collect();
    let avg = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
    assert!(avg(&high) > avg(&counts));
}

#[test]
fn building_is_deterministic() {
    let x = desk(2);
    for id in [1, 20, 77] {
        let a = build(knobs(id), &x, 99).to_json().unwrap();
        let b = build(knobs(id), &x, 99).to_json().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn too_few_columns_are_rejected() {
    let mut x = desk(1);
    x.matrix = x.matrix.columns(0, 3).into_owned();
    x.columns.truncate(3);
    assert!(build_dgp(knobs(1), &x, 1, &DgpConfig::default()).is_err());
}

#[test]
fn low_share_full_overlap_hits_the_target() {
    let x = desk(3);
    for id in 1..=77 {
        let k = knobs(id);
        if k.treated_share != TreatedShare::Low || k.overlap != Overlap::Full {
            continue;
        }
        let spec = build(k, &x, id as u64);
        let m = mean(&spec.propensity(&x.matrix));
        assert!((0.33..=0.37).contains(&m), "setting {id}: {m}");
    }
}

#[test]
fn zero_assignment_terms_give_a_constant_propensity() {
    let x = desk(4);
    let mut spec = build(knobs(20), &x, 5);
    spec.assignment.penalty_regions.clear();
    for t in &mut spec.assignment.terms {
        t.coefficient = 0.0;
    }
    rescale_assignment(&mut spec, &x, &DgpConfig::default()).unwrap();
    let target = spec.assignment.target_share;
    assert!(spec.propensity(&x.matrix).iter().all(|e| (e - target).abs() < 1e-12));
}

#[test]
fn propensities_stay_in_band_outside_penalty_regions() {
    let x = desk(5);
    let (lo, hi) = PROPENSITY_BAND;
    for id in 1..=77 {
        let spec = build(knobs(id), &x, 1000 + id as u64);
        let s = spec.surfaces(&x.matrix);
        let free: Vec<f64> = s
            .propensity
            .iter()
            .zip(&s.penalized)
            .filter(|(_, &p)| !p)
            .map(|(&e, _)| e)
            .collect();
        let inside = free.iter().filter(|&&e| (lo..=hi).contains(&e)).count() as f64;
        assert!(inside / free.len() as f64 >= 0.9, "setting {id}");
        for (e, p) in s.propensity.iter().zip(&s.penalized) {
            if *p {
                assert_eq!(*e, 0.0);
            }
        }
    }
}

#[test]
fn outcome_sd_is_near_one() {
    let x = desk(6);
    let k = Knobs {
        response_model: ResponseModel::Linear,
        ..knobs(1)
    };
    let mut sds = Vec::new();
    for s in 0..100 {
        let spec = build(k, &x, 2000 + s);
        let r = realize(&spec, &x, s, RealizeOptions::default()).unwrap();
        sds.push(sd(&r.observed.y));
    }
    let inside = sds.iter().filter(|v| (0.7..=1.4).contains(*v)).count();
    assert!(inside >= 95, "{inside} of 100 in band; {sds:?}");
}

#[test]
fn exponential_response_has_one_exponential_term() {
    let x = desk(7);
    for id in 1..=77 {
        let k = knobs(id);
        let spec = build(k, &x, id as u64);
        let n = spec
            .response
            .terms
            .iter()
            .filter(|t| matches!(t.basis, Basis::Exponential { .. }))
            .count();
        let want = usize::from(k.response_model == ResponseModel::Exponential);
        assert_eq!(n, want, "setting {id}");
    }
}

#[test]
fn zero_target_effect_without_heterogeneity_gives_zero_satt() {
    let x = desk(8);
    let cfg = DgpConfig {
        effect_center: 0.0,
        effect_spread: 0.0,
        ..DgpConfig::default()
    };
    let spec = build_dgp(knobs(3), &x, 3, &cfg).unwrap();
    let r = realize(&spec, &x, 4, RealizeOptions { noise: false }).unwrap();
    assert!(r.satt().unwrap().abs() < 1e-10);
}

#[test]
fn treated_units_never_fall_in_penalty_regions() {
    let x = desk(9);
    for id in (1..=77).filter(|&id| knobs(id).overlap == Overlap::Penalize).take(10) {
        let spec = build(knobs(id), &x, id as u64);
        assert!(!spec.assignment.penalty_regions.is_empty());
        for rep in 0..5 {
            let r = realize(&spec, &x, rep, RealizeOptions::default()).unwrap();
            for i in 0..r.n() {
                if r.penalized[i] {
                    assert!(!r.observed.z[i]);
                    assert_eq!(r.truth.e[i], 0.0);
                }
                if r.observed.z[i] {
                    assert!(r.truth.e[i] > 0.0);
                }
            }
        }
    }
}

#[test]
fn penalty_regions_are_small_conjunctions() {
    let x = desk(10);
    for id in (1..=77).filter(|&id| knobs(id).overlap == Overlap::Penalize) {
        let spec = build(knobs(id), &x, id as u64);
        for region in &spec.assignment.penalty_regions {
            assert!((1..=3).contains(&region.conditions.len()));
        }
        assert!(spec.penalized(&x.matrix).iter().any(|&p| p), "setting {id}");
    }
}

#[test]
fn realizations_are_consistent_and_reproducible() {
    let x = desk(11);
    let spec = build(knobs(30), &x, 1);
    let a = realize(&spec, &x, 77, RealizeOptions::default()).unwrap();
    let b = realize(&spec, &x, 77, RealizeOptions::default()).unwrap();
    assert_eq!(a, b);
    for i in 0..a.n() {
        let want = if a.observed.z[i] { a.truth.y1[i] } else { a.truth.y0[i] };
        assert_eq!(a.observed.y[i], want);
        assert_eq!(a.truth.tau[i], a.truth.y1[i] - a.truth.y0[i]);
    }
}

#[test]
fn assignment_ignores_the_noise_stream() {
    let x = desk(12);
    let spec = build(knobs(40), &x, 2);
    let noisy = realize(&spec, &x, 5, RealizeOptions { noise: true }).unwrap();
    let clean = realize(&spec, &x, 5, RealizeOptions { noise: false }).unwrap();
    assert_eq!(noisy.observed.z, clean.observed.z);
    assert_ne!(noisy.observed.y, clean.observed.y);
}

#[test]
fn no_heterogeneity_means_zero_effect_spread() {
    let x = desk(13);
    for id in (1..=77).filter(|&id| knobs(id).heterogeneity == Heterogeneity::None) {
        let spec = build(knobs(id), &x, id as u64);
        let r = realize(&spec, &x, 1, RealizeOptions::default()).unwrap();
        assert_eq!(pop_sd(&r.truth.cate), 0.0, "setting {id}");
    }
}

#[test]
fn alignment_controls_the_copied_fraction() {
    let x = desk(14);
    let base = Knobs {
        treatment_model: TreatmentModel::Polynomial,
        ..knobs(1)
    };
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for s in 0..50 {
        let l = build(Knobs { alignment: Alignment::Low, ..base }, &x, 3000 + s);
        let h = build(Knobs { alignment: Alignment::High, ..base }, &x, 3000 + s);
        assert!((l.copied_fraction() - 0.25).abs() <= 0.15, "{}", l.copied_fraction());
        assert!((h.copied_fraction() - 0.75).abs() <= 0.15, "{}", h.copied_fraction());
        low.push(l.shared_terms() as f64);
        high.push(h.shared_terms() as f64);
    }
    assert!(mean(&high) > mean(&low));
    let none = build(Knobs { alignment: Alignment::None, ..base }, &x, 1);
    assert_eq!(none.shared_terms(), 0);
}

#[test]
fn spec_json_round_trip_preserves_surfaces() {
    let x = desk(15);
    let probe = DMatrix::from_fn(50, x.cols(), |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
    for id in [2, 8, 41, 77] {
        let spec = build(knobs(id), &x, 5);
        let back = DgpSpec::from_json(&spec.to_json().unwrap()).unwrap();
        let (a, b) = (spec.surfaces(&probe), back.surfaces(&probe));
        for i in 0..probe.nrows() {
            assert!((a.mu0[i] - b.mu0[i]).abs() < 1e-12);
            assert!((a.mu1[i] - b.mu1[i]).abs() < 1e-12);
            assert!((a.propensity[i] - b.propensity[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn satt_arithmetic() {
    assert_eq!(satt(&[true, false, true], &[1.0, 1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(satt(&[true, true, false], &[0.5, 1.5, 9.0]).unwrap(), 1.0);
    assert!(matches!(satt(&[false, false], &[1.0, 2.0]), Err(Error::NoTreated)));
}

#[test]
fn realized_low_share_fractions_fall_in_range() {
    let x = desk(16);
    let k = Knobs {
        treated_share: TreatedShare::Low,
        overlap: Overlap::Penalize,
        ..knobs(1)
    };
    let mut inside = 0;
    for s in 0..40 {
        let spec = build(k, &x, 4000 + s);
        let r = realize(&spec, &x, s, RealizeOptions::default()).unwrap();
        if (0.20..=0.38).contains(&r.treated_fraction()) {
            inside += 1;
        }
    }
    assert!(inside >= 36, "{inside} of 40");
}
