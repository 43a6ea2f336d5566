//! End-to-end acceptance checks. Runs without the test harness so that every
//! criterion prints one line; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spdval::distributions::{check_fsd, joint_grid, Distribution};
use spdval::metrics::{relative_entropy, relative_entropy_with, symmetric_distance, EntropyKind, MeasurePair};
use spdval::option_surface::model::LognormalModel;
use spdval::option_surface::{
    detect_default_mass, fit_call_curve, implied_short_rate, reconstruct_call_price, recover_bond, recover_spot,
    state_price_density, CallCurve, Quote, StatePriceDensity,
};
use spdval::valuation::{
    convergence_study, sharpean_operation, value_closed_form, value_closed_form_with,
    ValuationInputs, ValuationOptions,
};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> LognormalModel {
    LognormalModel::new(
        rng.random_range(50.0..150.0),
        rng.random_range(0.0..0.08),
        rng.random_range(0.1..0.5),
        rng.random_range(0.25..2.0),
    )
    .unwrap()
}

fn fixture_quotes(m: &LognormalModel) -> Vec<Quote> {
    m.quotes(&m.strikes(15, -5.0, 4.5))
}

fn fit(m: &LognormalModel) -> CallCurve {
    fit_call_curve(&fixture_quotes(m), &m.context()).unwrap()
}

fn analytic_inputs(m: &LognormalModel, phi1: Distribution) -> ValuationInputs {
    let spd = StatePriceDensity::from_measure(&m.risk_neutral(), m.discount()).unwrap();
    ValuationInputs::new(phi1, m.physical(), spd, m.context()).unwrap()
}

fn fast() -> ValuationOptions {
    ValuationOptions {
        preservation_intervals: 0,
        ..ValuationOptions::default()
    }
}

fn bond_identity(curves: &[(LognormalModel, CallCurve)], fit_secs: f64) -> Outcome {
    let start = Instant::now();
    let worst = curves
        .iter()
        .map(|(m, c)| {
            let spd = state_price_density(c).unwrap();
            (recover_bond(&spd).unwrap() - m.discount()).abs() / m.discount()
        })
        .fold(0.0, f64::max);
    let secs = fit_secs + start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-3 && secs < 10.0,
        format!("max rel bond error {worst:.2e}, {secs:.2} s"),
    )
}

fn spot_identity(curves: &[(LognormalModel, CallCurve)]) -> Outcome {
    let (mut by_integral, mut by_limit) = (0.0f64, 0.0f64);
    for (m, c) in curves {
        let spd = state_price_density(c).unwrap();
        let s = recover_spot(&spd, Some(c)).unwrap();
        by_integral = by_integral.max((s.from_integral - m.spot).abs() / m.spot);
        by_limit = by_limit.max((s.from_limit.unwrap() - m.spot).abs() / m.spot);
    }
    Outcome::new(
        by_integral < 5e-3 && by_limit < 5e-3,
        format!("max rel error: integral {by_integral:.2e}, C(0+) {by_limit:.2e}"),
    )
}

fn idempotency(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let base = random_model(rng);
        let m = LognormalModel::with_drift(base.spot, base.rate, base.sigma, base.tau, rng.random_range(0.0..0.15))
            .unwrap();
        let spd = state_price_density(&fit(&m)).unwrap();
        let inputs = ValuationInputs::new(m.physical(), m.physical(), spd, m.context()).unwrap();
        let v = value_closed_form_with(&inputs, &fast()).unwrap().value;
        worst = worst.max((v - m.spot).abs() / m.spot);
    }
    Outcome::new(worst < 1e-3, format!("max rel error {worst:.2e} over 20 fitted benchmarks"))
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let m = LognormalModel::with_drift(100.0, 0.03, 0.25, 1.0, 0.08).unwrap();
    let phi1 = Distribution::lognormal(100f64.ln() + 0.05, 2.0 * m.sigma).unwrap();
    let inputs = analytic_inputs(&m, phi1);
    let table = convergence_study(&inputs, &[10, 100, 1000, 10000]).unwrap();
    let errs: Vec<f64> = table.rows.iter().map(|r| r.rel_error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        decreasing && last < 1e-3 && secs < 30.0,
        format!(
            "rel errors {}; {secs:.2} s",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" > ")
        ),
    )
}

fn random_cash_flow(rng: &mut ChaCha8Rng) -> Distribution {
    match rng.random_range(0..4) {
        0 => Distribution::lognormal(rng.random_range(3.0..5.0), rng.random_range(0.1..0.6)).unwrap(),
        1 => {
            let lo = rng.random_range(0.0..50.0);
            Distribution::uniform(lo, lo + rng.random_range(1.0..100.0)).unwrap()
        }
        2 => Distribution::exponential(rng.random_range(0.01..0.2)).unwrap(),
        _ => {
            let mean = rng.random_range(60.0..140.0);
            Distribution::normal(mean, rng.random_range(2.0..15.0)).unwrap()
        }
    }
}

fn fsd_monotonicity(rng: &mut ChaCha8Rng) -> Outcome {
    let benches: Vec<LognormalModel> = (0..4).map(|_| random_model(rng)).collect();
    let (mut pairs, mut strict_pairs, mut failures) = (0, 0, 0);
    let mut worst = f64::NEG_INFINITY;
    while pairs < 200 {
        let a = random_cash_flow(rng);
        let b = if rng.random_bool(0.5) {
            a.affine(1.0, rng.random_range(0.0..5.0)).unwrap()
        } else {
            a.affine(rng.random_range(1.0..1.5), 0.0).unwrap()
        };
        let grid = joint_grid(&a, &b, 512);
        if !check_fsd(&a, &b, &grid).dominates {
            continue;
        }
        let gap = grid.iter().map(|t| a.cdf(*t) - b.cdf(*t)).fold(0.0, f64::max);
        let m = &benches[pairs % benches.len()];
        let va = value_closed_form_with(&analytic_inputs(m, a), &fast()).unwrap().value;
        let vb = value_closed_form_with(&analytic_inputs(m, b), &fast()).unwrap().value;
        worst = worst.max(va - vb);
        let ok = if gap > 0.01 {
            strict_pairs += 1;
            va < vb
        } else {
            va <= vb + 1e-9
        };
        if !ok {
            failures += 1;
        }
        pairs += 1;
    }
    Outcome::new(
        failures == 0,
        format!("{pairs} pairs ({strict_pairs} strict), {failures} failures, max V_a - V_b {worst:.2e}"),
    )
}

fn separation_and_scaling(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let m = random_model(rng);
        let inputs = analytic_inputs(&m, random_cash_flow(rng));
        let v = value_closed_form_with(&inputs, &fast()).unwrap().value;
        for c in [0.5, 1.0, 2.0] {
            for a in [-5.0, 0.0, 10.0] {
                let shifted = inputs.with_phi1(inputs.phi1.affine(c, a).unwrap());
                let w = value_closed_form_with(&shifted, &fast()).unwrap().value;
                let expected = c * v + a * m.discount();
                worst = worst.max((w - expected).abs() / (1.0 + v.abs()));
            }
        }
    }
    Outcome::new(worst < 1e-6, format!("max scaled gap {worst:.2e}"))
}

fn short_rate(curves: &[(LognormalModel, CallCurve)]) -> Outcome {
    let worst = curves
        .iter()
        .map(|(m, c)| (implied_short_rate(c).unwrap() - m.rate).abs())
        .fold(0.0, f64::max);
    Outcome::new(worst < 1e-3, format!("max |r̂ - r| {worst:.2e}"))
}

fn default_mass() -> Outcome {
    let m = LognormalModel::new(100.0, 0.03, 0.25, 1.0).unwrap();
    let mut worst = 0.0f64;
    for p in [0.05, 0.1, 0.5] {
        let quotes: Vec<Quote> = fixture_quotes(&m)
            .into_iter()
            .map(|q| Quote {
                price: (1.0 - p) * q.price,
                ..q
            })
            .collect();
        let curve = fit_call_curve(&quotes, &m.context()).unwrap();
        let d = detect_default_mass(&curve, m.rate).unwrap();
        worst = worst.max((d.probability - p).abs());
    }
    Outcome::new(worst < 0.01, format!("max |p̂ - p| {worst:.2e}"))
}

fn sharpean() -> Outcome {
    let ctx = LognormalModel::new(100.0, 0.03, 0.25, 1.0).unwrap().context();
    let fixtures = vec![
        Distribution::uniform(2.0, 4.0).unwrap(),
        Distribution::uniform(-1.0, 7.0).unwrap(),
        Distribution::exponential(0.5).unwrap(),
        Distribution::exponential(3.0).unwrap(),
        Distribution::normal(0.0, 1.0).unwrap(),
        Distribution::normal(100.0, 15.0).unwrap(),
        Distribution::lognormal(0.0, 0.25).unwrap(),
        Distribution::lognormal(4.6, 0.5).unwrap(),
        Distribution::lognormal(1.0, 0.9).unwrap(),
        Distribution::mixture(vec![
            (0.6, Distribution::normal(0.0, 1.0).unwrap()),
            (0.4, Distribution::normal(0.5, 1.2).unwrap()),
        ])
        .unwrap(),
    ];
    let mut worst = 0.0f64;
    for cf in &fixtures {
        let s = sharpean_operation(cf, &ctx).unwrap().score;
        for c in [0.5, 2.0] {
            for a in [-1.0, 3.0] {
                let t = sharpean_operation(&cf.affine(c, a).unwrap(), &ctx).unwrap().score;
                worst = worst.max((s - t).abs());
            }
        }
    }
    let bimodal = Distribution::mixture(vec![
        (0.5, Distribution::normal(-3.0, 1.0).unwrap()),
        (0.5, Distribution::normal(3.0, 1.0).unwrap()),
    ])
    .unwrap();
    let rejected = matches!(
        sharpean_operation(&bimodal, &ctx),
        Err(spdval::Error::NotUnimodal { .. })
    );
    Outcome::new(
        worst < 1e-9 && rejected,
        format!("max score drift {worst:.2e}, bimodal rejected: {rejected}"),
    )
}

fn metric_properties(rng: &mut ChaCha8Rng) -> Outcome {
    let mut asym = 0.0f64;
    for _ in 0..50 {
        let a = Distribution::lognormal(rng.random_range(3.0..5.0), rng.random_range(0.1..0.6)).unwrap();
        let b = Distribution::lognormal(rng.random_range(3.0..5.0), rng.random_range(0.1..0.6)).unwrap();
        let ab = symmetric_distance(&MeasurePair::new(&a, &b).unwrap()).unwrap();
        let ba = symmetric_distance(&MeasurePair::new(&b, &a).unwrap()).unwrap();
        asym = asym.max((ab - ba).abs());
    }
    let mut identical = 0.0f64;
    for d in [
        Distribution::lognormal(4.6, 0.3).unwrap(),
        Distribution::normal(0.0, 1.0).unwrap(),
        Distribution::exponential(2.0).unwrap(),
    ] {
        let pair = MeasurePair::new(&d, &d).unwrap();
        identical = identical
            .max(relative_entropy(&pair).unwrap())
            .max(symmetric_distance(&pair).unwrap());
    }
    let gauss = MeasurePair::new(&Distribution::normal(0.0, 1.0).unwrap(), &Distribution::normal(1.0, 1.0).unwrap())
        .unwrap();
    let kl = relative_entropy_with(&gauss, EntropyKind::Standard).unwrap();
    Outcome::new(
        asym < 1e-12 && identical < 1e-10 && (kl - 0.5).abs() < 1e-6,
        format!("asymmetry {asym:.2e}, identical {identical:.2e}, Gaussian KL {kl:.12}"),
    )
}

fn cross_world() -> Outcome {
    let m = LognormalModel::with_drift(100.0, 0.03, 0.25, 1.0, 0.07).unwrap();
    let spd = state_price_density(&fit(&m)).unwrap();
    let mut worst = 0.0f64;
    for c in [0.5, 2.0] {
        // S₂(T) = c S₁(T) in law.
        let phi1 = m.physical().affine(1.0 / c, 0.0).unwrap();
        let inputs = ValuationInputs::new(phi1, m.physical(), spd.clone(), m.context()).unwrap();
        let v = value_closed_form(&inputs).unwrap().value;
        let target = m.spot / c;
        worst = worst.max((v - target).abs() / target);
    }
    Outcome::new(worst < 1e-3, format!("max rel error {worst:.2e}"))
}

fn round_trip(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let m = random_model(rng);
        let spd = StatePriceDensity::from_measure(&m.risk_neutral(), m.discount()).unwrap();
        for k in m.strikes(41, -4.0, 4.0) {
            worst = worst.max((reconstruct_call_price(&spd, k).unwrap() - m.call(k)).abs());
        }
    }
    Outcome::new(worst < 1e-6, format!("sup-norm call gap {worst:.2e}"))
}

fn main() -> ExitCode {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = Instant::now();
    let curves: Vec<(LognormalModel, CallCurve)> = (0..20)
        .map(|_| {
            let m = random_model(&mut rng);
            (m, fit(&m))
        })
        .collect();
    let fit_secs = start.elapsed().as_secs_f64();

    let results: Vec<(&str, Outcome)> = vec![
        ("bond identity", bond_identity(&curves, fit_secs)),
        ("spot identity", spot_identity(&curves)),
        ("idempotency", idempotency(&mut rng)),
        ("convergence", convergence()),
        ("FSD monotonicity", fsd_monotonicity(&mut rng)),
        ("MM separation and scaling", separation_and_scaling(&mut rng)),
        ("implied short rate", short_rate(&curves)),
        ("default mass", default_mass()),
        ("Sharpean invariance", sharpean()),
        ("metric properties", metric_properties(&mut rng)),
        ("cross-world consistency", cross_world()),
        ("round trip", round_trip(&mut rng)),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {:<28} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        println!("all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria fail", results.len());
        ExitCode::FAILURE
    }
}
