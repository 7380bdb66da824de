//! Property tests for the measure distances: metric axioms, translation
//! equivariance, the bounded-Lipschitz sandwich ordering, and equality
//! with an exhaustive-assignment oracle on small inputs.

use proptest::prelude::*;

use ermf::measure::{dbl_sandwich, w1, EmpiricalMeasure};
use ermf::model::Geometry;

const PERIOD: f64 = std::f64::consts::TAU;

fn emp(samples: &[f64], geometry: Geometry) -> EmpiricalMeasure {
    EmpiricalMeasure::new(samples.to_vec(), geometry).unwrap()
}

/// Minimum mean matching cost over all assignments (exact optimal
/// transport for equal-size empirical measures).
fn assignment_oracle(a: &[f64], b: &[f64], geometry: Geometry) -> f64 {
    fn go(
        a: &[f64],
        b: &[f64],
        used: &mut Vec<bool>,
        i: usize,
        acc: f64,
        best: &mut f64,
        geometry: Geometry,
    ) {
        if acc >= *best {
            return;
        }
        if i == a.len() {
            *best = acc;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, i + 1, acc + geometry.distance(a[i], b[j]), best, geometry);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut used = vec![false; b.len()];
    go(a, b, &mut used, 0, 0.0, &mut best, geometry);
    best / a.len() as f64
}

fn small_samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn w1_matches_assignment_oracle_on_line(mut a in small_samples(), mut b in small_samples()) {
        let n = a.len().min(b.len());
        a.truncate(n);
        b.truncate(n);
        let d = w1(&emp(&a, Geometry::Line), &emp(&b, Geometry::Line)).unwrap();
        let oracle = assignment_oracle(&a, &b, Geometry::Line);
        prop_assert!((d - oracle).abs() <= 1e-12, "{d} vs {oracle}");
    }

    #[test]
    fn w1_matches_assignment_oracle_on_circle(mut a in small_samples(), mut b in small_samples()) {
        let n = a.len().min(b.len());
        a.truncate(n);
        b.truncate(n);
        let g = Geometry::Circle { period: PERIOD };
        let aw: Vec<f64> = a.iter().map(|x| g.wrap(*x)).collect();
        let bw: Vec<f64> = b.iter().map(|x| g.wrap(*x)).collect();
        let d = w1(&emp(&aw, g), &emp(&bw, g)).unwrap();
        let oracle = assignment_oracle(&aw, &bw, g);
        prop_assert!((d - oracle).abs() <= 1e-12, "{d} vs {oracle}");
    }

    #[test]
    fn w1_is_a_metric(a in small_samples(), b in small_samples(), c in small_samples()) {
        let n = a.len().min(b.len()).min(c.len());
        let (a, b, c) = (&a[..n], &b[..n], &c[..n]);
        for g in [Geometry::Line, Geometry::Circle { period: PERIOD }] {
            let (ea, eb, ec) = (emp(a, g), emp(b, g), emp(c, g));
            let dab = w1(&ea, &eb).unwrap();
            let dba = w1(&eb, &ea).unwrap();
            prop_assert_eq!(dab, dba);
            let dac = w1(&ea, &ec).unwrap();
            let dcb = w1(&ec, &eb).unwrap();
            prop_assert!(dab <= dac + dcb + 1e-12);
            prop_assert!(dab >= 0.0);
            // zero iff equal multisets
            let mut sa: Vec<f64> = ea.samples().to_vec();
            let mut sb: Vec<f64> = eb.samples().to_vec();
            sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
            sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
            if sa == sb {
                prop_assert_eq!(dab, 0.0);
            } else if dab == 0.0 {
                // distinct multisets at distance zero would break identity
                let gap: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
                prop_assert!(gap <= 1e-12);
            }
        }
    }

    #[test]
    fn w1_translation_equivariant_on_line(a in small_samples(), b in small_samples(), shift in -50.0f64..50.0) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let d0 = w1(&emp(a, Geometry::Line), &emp(b, Geometry::Line)).unwrap();
        let at: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let bt: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let d1 = w1(&emp(&at, Geometry::Line), &emp(&bt, Geometry::Line)).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0), "{d0} vs {d1}");
    }

    #[test]
    fn sandwich_orders_and_upper_matches_w1(a in small_samples(), b in small_samples(), seed in 0u64..1000) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        for g in [Geometry::Line, Geometry::Circle { period: PERIOD }] {
            let (ea, eb) = (emp(a, g), emp(b, g));
            let (lo, hi) = dbl_sandwich(&ea, &eb, 32, seed).unwrap();
            prop_assert!(lo <= hi + 1e-15);
            prop_assert_eq!(hi, w1(&ea, &eb).unwrap().min(1.0));
            let (lo2, _) = dbl_sandwich(&ea, &eb, 64, seed).unwrap();
            prop_assert!(lo2 >= lo - 1e-15);
        }
    }
}
