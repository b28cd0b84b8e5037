//! Synthesized marginals against the configured distributions.

use rentsim_core::population::{synthesize_population, Household, IncomeClass};
use rentsim_core::synthcity;
use statrs::distribution::{Binomial, DiscreteCDF};

const N: usize = 100_000;
const ALPHA: f64 = 0.01;

/// Two-sided binomial test p-value for `k` successes in `n` trials at rate `p`.
fn binomial_p(k: u64, n: u64, p: f64) -> f64 {
    let b = Binomial::new(p, n).unwrap();
    let lower = b.cdf(k);
    let upper = if k == 0 { 1.0 } else { 1.0 - b.cdf(k - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

fn check(name: &str, hs: &[Household], expected: &[f64], class_of: impl Fn(&Household) -> usize) {
    let mut counts = vec![0u64; expected.len()];
    for h in hs {
        counts[class_of(h)] += 1;
    }
    for (k, (c, p)) in counts.iter().zip(expected).enumerate() {
        let pv = binomial_p(*c, hs.len() as u64, *p);
        assert!(
            pv >= ALPHA,
            "{name}[{k}]: {c}/{} vs expected {p:.4}, p = {pv:.2e}",
            hs.len()
        );
    }
}

#[test]
fn marginals_match_the_parameters() {
    let city = synthcity::generate(60, 7).unwrap();
    let (world, params) = (&city.world, &city.synthesis);
    let hs = synthesize_population(world, params, N, 123).unwrap();
    assert_eq!(hs.len(), N);

    // households are placed by residential area; income shares vary by zone
    let total_res: f64 = world.zones().iter().map(|z| z.residential_area).sum();
    let mut income = vec![0.0; params.income.bins.len()];
    for z in world.zones() {
        let row = params
            .income
            .zones
            .get(&z.id.to_string())
            .unwrap_or(&params.income.probs);
        for (k, p) in row.iter().enumerate() {
            income[k] += z.residential_area / total_res * p;
        }
    }
    // the fixture's income bins coincide with the three income classes
    check("income", &hs, &income, |h| IncomeClass::of(h.income) as usize);

    assert!(params.size.zones.is_empty());
    check("size", &hs, &params.size.probs, |h| h.size as usize - 1);

    let rows = &params.cars.by_income_class;
    let cars: Vec<f64> = (0..rows[0].len())
        .map(|c| (0..3).map(|k| income[k] * rows[k][c]).sum())
        .collect();
    check("cars", &hs, &cars, |h| h.n_cars as usize);

    let months = params.relocation_months.to_vec();
    check("month", &hs, &months, |h| h.relocation_month as usize - 1);

    for h in &hs {
        h.validate().unwrap();
        assert_eq!(h.workplaces.len(), h.n_employees as usize);
        assert_eq!(h.member_ages.len(), h.size as usize);
    }
}

#[test]
fn synthesis_is_reproducible() {
    let city = synthcity::generate(60, 7).unwrap();
    let a = synthesize_population(&city.world, &city.synthesis, 500, 9).unwrap();
    let b = synthesize_population(&city.world, &city.synthesis, 500, 9).unwrap();
    let c = synthesize_population(&city.world, &city.synthesis, 500, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
