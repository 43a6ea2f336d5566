use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use spdval::option_surface::model::LognormalModel;
use spdval::option_surface::write_quotes_csv;
use tempfile::TempDir;

fn spdval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdval"))
        .args(args)
        .env("SPDVAL_LOG", "error")
        .output()
        .unwrap()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.display().to_string()
}

fn read_report(path: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
    model: LognormalModel,
    quotes: String,
    phi: String,
    ctx: String,
}

impl Fixture {
    fn out(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

/// Lognormal benchmark: 15 quotes, its physical law and context.
fn lognormal_fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let m = LognormalModel::with_drift(100.0, 0.02, 0.2, 1.0, 0.07).unwrap();
    let quotes = dir.path().join("q.csv");
    write_quotes_csv(fs::File::create(&quotes).unwrap(), &m.quotes(&m.strikes(15, -5.0, 4.5))).unwrap();
    let mu = m.spot.ln() + (m.drift - 0.5 * m.sigma * m.sigma) * m.tau;
    let phi = write_json(
        dir.path(),
        "phi.json",
        &json!({"family": "lognormal", "params": {"mu": mu, "sigma": m.sigma * m.tau.sqrt()}}),
    );
    let ctx = write_json(dir.path(), "ctx.json", &serde_json::to_value(m.context()).unwrap());
    Fixture {
        quotes: quotes.display().to_string(),
        dir,
        model: m,
        phi,
        ctx,
    }
}

fn value_args<'a>(f: &'a Fixture, quotes: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "value", "--quotes", quotes, "--phi1", &f.phi, "--phi2", &f.phi, "--ctx", &f.ctx, "--out", out,
    ]
}

#[test]
fn value_on_idempotent_fixture_returns_spot() {
    let f = lognormal_fixture();
    let out = f.out("report.json");
    let o = spdval(&value_args(&f, &f.quotes, &out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&out);
    let v = r["result"]["value"].as_f64().unwrap();
    assert!((v - f.model.spot).abs() < 0.1, "value {v}");
    assert_eq!(r["result"]["method"], "closed-form");
    assert_eq!(r["errors"], json!([]));
    assert!(PathBuf::from(f.out("report.binding.csv")).exists());
    assert!(PathBuf::from(f.out("report.integrand.csv")).exists());
}

#[test]
fn reports_are_byte_identical() {
    let f = lognormal_fixture();
    let (a, b) = (f.out("a.json"), f.out("b.json"));
    for out in [&a, &b] {
        let mut args = value_args(&f, &f.quotes, out);
        args.extend(["--seed", "7", "--shift", "-5", "--scale", "2"]);
        assert_eq!(spdval(&args).status.code(), Some(0));
    }
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    // The echoed output path differs; everything else must match.
    assert_eq!(ta.replace(&a, ""), tb.replace(&b, ""));
    let r = read_report(&a);
    let v = r["result"]["value"].as_f64().unwrap();
    let b_t = f.model.discount();
    assert!((r["result"]["mm_separated_value"]["value"].as_f64().unwrap() - (v - 5.0 * b_t)).abs() < 1e-8);
    assert!((r["result"]["scaled_value"]["value"].as_f64().unwrap() - 2.0 * v).abs() < 1e-8);
}

#[test]
fn pipeline_matches_single_invocation() {
    let f = lognormal_fixture();
    let fit = f.out("fit.json");
    assert_eq!(spdval(&["fit", "--quotes", &f.quotes, "--ctx", &f.ctx, "--out", &fit]).status.code(), Some(0));
    let spd = f.out("spd.json");
    assert_eq!(spdval(&["spd", "--quotes", &fit, "--ctx", &f.ctx, "--out", &spd]).status.code(), Some(0));
    let s = read_report(&spd);
    assert!(s["result"]["bond_error"].as_f64().unwrap().abs() < 1e-3);

    let (staged, direct) = (f.out("staged.json"), f.out("direct.json"));
    assert_eq!(spdval(&value_args(&f, &fit, &staged)).status.code(), Some(0));
    assert_eq!(spdval(&value_args(&f, &f.quotes, &direct)).status.code(), Some(0));
    let a = read_report(&staged)["result"]["value"].as_f64().unwrap();
    let b = read_report(&direct)["result"]["value"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
}

#[test]
fn concave_quotes_fail_the_arbitrage_check() {
    let f = lognormal_fixture();
    let bad = f.dir.path().join("bad.csv");
    fs::write(&bad, "strike,price\n80,25\n90,15\n100,9\n110,1\n120,0.5\n").unwrap();
    let out = f.out("arb.json");
    let o = spdval(&["check-arb", "--quotes", bad.to_str().unwrap(), "--ctx", &f.ctx, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let r = read_report(&out);
    let kinds: Vec<&str> = r["result"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"butterfly"), "{kinds:?}");
    assert_eq!(r["errors"].as_array().unwrap().len(), 1);
}

#[test]
fn converge_on_uniform_fixture_is_exact() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let uniform = json!({"family": "uniform", "params": {"low": 0.0, "high": 1.0}});
    let law = write_json(p, "u.json", &uniform);
    let ctx = write_json(p, "ctx.json", &json!({"t": 0.0, "T": 1.0, "bond_price": 0.95, "spot": 0.475}));
    let out = p.join("conv.json").display().to_string();
    let o = spdval(&[
        "converge", "--quotes", &law, "--phi1", &law, "--phi2", &law, "--ctx", &ctx, "--ns", "10,100,1000", "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&out);
    let rows = r["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row["abs_error"].as_f64().unwrap() < 1e-12, "{row}");
    }
    assert!((r["result"]["reference"].as_f64().unwrap() - 0.475).abs() < 1e-12);
    assert!(p.join("conv.convergence.csv").exists());
}

#[test]
fn sharpean_and_metrics() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let u = write_json(p, "u.json", &json!({"family": "uniform", "params": {"low": 2.0, "high": 4.0}}));
    let ctx = write_json(p, "ctx.json", &json!({"t": 0.0, "T": 1.0, "bond_price": 0.95, "spot": 1.0}));
    let out = p.join("s.json").display().to_string();
    assert_eq!(spdval(&["sharpean", "--phi1", &u, "--ctx", &ctx, "--out", &out]).status.code(), Some(0));
    let r = read_report(&out);
    assert!((r["result"]["score"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-12);
    assert!((r["result"]["shift_value"].as_f64().unwrap() - 1.9).abs() < 1e-12);

    let n0 = write_json(p, "n0.json", &json!({"family": "normal", "params": {"mean": 0.0, "sd": 1.0}}));
    let n1 = write_json(p, "n1.json", &json!({"family": "normal", "params": {"mean": 1.0, "sd": 1.0}}));
    let out = p.join("m.json").display().to_string();
    assert_eq!(spdval(&["metrics", "--phi1", &n0, "--phi2", &n1, "--out", &out]).status.code(), Some(0));
    let r = read_report(&out);
    assert!((r["result"]["standard_kl"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!(r["result"]["symmetric_distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn bimodal_cash_flow_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let mix = write_json(
        p,
        "mix.json",
        &json!({"family": "mixture", "params": {"components": [
            {"weight": 0.5, "family": "normal", "params": {"mean": -3.0, "sd": 1.0}},
            {"weight": 0.5, "family": "normal", "params": {"mean": 3.0, "sd": 1.0}}]}}),
    );
    let ctx = write_json(p, "ctx.json", &json!({"t": 0.0, "T": 1.0, "bond_price": 0.95, "spot": 1.0}));
    let out = p.join("s.json").display().to_string();
    assert_eq!(spdval(&["sharpean", "--phi1", &mix, "--ctx", &ctx, "--out", &out]).status.code(), Some(1));
    let r = read_report(&out);
    assert!(r["errors"][0].as_str().unwrap().contains("unimodal"));
    assert_eq!(r["result"], Value::Null);
}

#[test]
fn io_and_config_errors_exit_with_2() {
    let f = lognormal_fixture();
    let out = f.out("e.json");
    let missing = f.out("missing.csv");
    let o = spdval(&["spd", "--quotes", &missing, "--ctx", &f.ctx, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(read_report(&out)["errors"][0].as_str().unwrap().contains("missing.csv"));

    assert_eq!(spdval(&["spd", "--quotes", &f.quotes, "--out", &out]).status.code(), Some(2));
    assert!(read_report(&out)["errors"][0].as_str().unwrap().contains("--ctx"));

    let o = spdval(&["value", "--tol-quad", "-1", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(spdval(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn inconsistent_context_is_rejected() {
    let f = lognormal_fixture();
    let ctx = write_json(
        f.dir.path(),
        "bad_ctx.json",
        &json!({"t": 0.0, "T": 1.0, "bond_price": 0.9, "spot": 100.0}),
    );
    let out = f.out("v.json");
    let o = spdval(&["value", "--quotes", &f.quotes, "--phi1", &f.phi, "--phi2", &f.phi, "--ctx", &ctx, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!read_report(&out)["errors"].as_array().unwrap().is_empty());
}
