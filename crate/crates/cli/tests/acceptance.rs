//! Acceptance suite: one PASS / FAIL / SKIPPED line per criterion on stdout,
//! progress on stderr. Set `RTMIX_ACCEPTANCE=1,2,8` to run a subset. The
//! real-data criteria run only when `RTMIX_ORIGINAL_CSV` or
//! `RTMIX_REPLICATION_CSV` names a data file. FAIL lines do not change the
//! exit status unless `RTMIX_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use rand::Rng;
use rand_distr::StandardNormal;
use rtmix::crossval::{compare, log_mean_exp, run_kfold, ElpdComparison, ElpdReport};
use rtmix::data::{make_folds, Dataset};
use rtmix::model::{grad_log_posterior, mixture_lognormal_lpdf, ModelError, ModelKind, Posterior};
use rtmix::sampler::{ess, sample, sample_target, LogDensity, SamplerConfig};
use rtmix::seeds::{derive_seed, rng_from_seed, REPLICATE_STREAM};
use rtmix::simulate::{gen_linear, gen_mixture, recovery_check, DesignSpec, LinearTruth, MixtureTruth};

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

const PARTICIPANTS: usize = 37;
const ITEMS: usize = 15;
const SEEDS: u64 = 10;
/// Master seeds of the simulated datasets; seed `s` of a suite generates and
/// fits with `derive_seed(master, 4000 + s)`, as `rtmix recover` does.
const MIXTURE_MASTER: u64 = 1;
const LINEAR_MASTER: u64 = 2;

fn fit_config(seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_warmup: 500,
        n_samples: 500,
        seed,
        ..Default::default()
    }
}

fn cv_config(seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_warmup: 300,
        n_samples: 250,
        seed,
        ..Default::default()
    }
}

fn replicate_seed(master: u64, s: u64) -> u64 {
    derive_seed(master, REPLICATE_STREAM + s)
}

fn mixture_dataset(s: u64) -> Dataset {
    let seed = replicate_seed(MIXTURE_MASTER, s);
    gen_mixture(&MixtureTruth::reference(), &DesignSpec::new(PARTICIPANTS, ITEMS, seed)).unwrap()
}

fn linear_dataset(s: u64) -> Dataset {
    let seed = replicate_seed(LINEAR_MASTER, s);
    gen_linear(&LinearTruth::reference(), &DesignSpec::new(PARTICIPANTS, ITEMS, seed)).unwrap()
}

/// K = 10 cross-validation of both models on one dataset, with the
/// mixture − linear comparison.
fn kfold_comparison(data: &Dataset, seed: u64) -> Result<(ElpdReport, ElpdReport, ElpdComparison), String> {
    let plan = make_folds(data, 10, seed).map_err(|e| e.to_string())?;
    let config = cv_config(seed);
    let linear = run_kfold(ModelKind::Linear, data, &plan, &config).map_err(|e| e.to_string())?;
    let mixture = run_kfold(ModelKind::Mixture, data, &plan, &config).map_err(|e| e.to_string())?;
    let comparison = compare(&mixture, &linear).map_err(|e| e.to_string())?;
    Ok((linear, mixture, comparison))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn gradient_correctness() -> Outcome {
    let mut r = rng_from_seed(101);
    let mut worst = Vec::new();
    for model in [ModelKind::Linear, ModelKind::Mixture] {
        // ten trials: five participants by two items
        let data = gen_mixture(&MixtureTruth::reference(), &DesignSpec::new(5, 2, 7)).unwrap();
        let post = Posterior::new(model, &data);
        let mut max_err: f64 = 0.0;
        for _ in 0..100 {
            let mut theta: Vec<f64> = (0..post.dim()).map(|_| r.random_range(-1.5..1.5)).collect();
            theta[0] = r.random_range(5.0..7.0);
            let grad = grad_log_posterior(model, &theta, &data).unwrap();
            for c in 0..theta.len() {
                let h = 1e-5;
                let (mut up, mut down) = (theta.clone(), theta.clone());
                up[c] += h;
                down[c] -= h;
                let fd = (post.log_density(&up).unwrap() - post.log_density(&down).unwrap()) / (2.0 * h);
                max_err = max_err.max(rel_err(grad[c], fd));
            }
        }
        worst.push((model, max_err));
    }
    let detail = worst
        .iter()
        .map(|(m, e)| format!("{m} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if worst.iter().all(|(_, e)| *e < 1e-5) {
        Outcome::Pass(format!("max relative error {detail} (< 1e-5)"))
    } else {
        Outcome::Fail(format!("max relative error {detail} (limit 1e-5)"))
    }
}

/// `y_i ~ N(mu, 1)`, `mu ~ N(0, 2)`.
struct NormalNormal(Vec<f64>);

impl LogDensity for NormalNormal {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        let mu = x[0];
        let mut lp = -mu * mu / 8.0;
        grad[0] = -mu / 4.0;
        for y in &self.0 {
            lp -= 0.5 * (y - mu).powi(2);
            grad[0] += y - mu;
        }
        Ok(lp)
    }
}

fn sampler_oracle() -> Outcome {
    let mut r = rng_from_seed(202);
    let y: Vec<f64> = (0..20).map(|_| 0.8 + r.sample::<f64, _>(StandardNormal)).collect();
    let precision = 0.25 + y.len() as f64;
    let (mean, sd) = (y.iter().sum::<f64>() / precision, precision.recip().sqrt());
    let target = NormalNormal(y);
    let config = SamplerConfig {
        seed: 3,
        ..Default::default()
    };
    let init = |r: &mut rtmix::seeds::Rng| vec![r.random_range(-2.0..2.0)];
    let draws = sample_target(&target, vec!["mu".into()], &config, init, |x| Ok(x.to_vec())).unwrap();
    let v = draws.coordinate(0);
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let n_eff = ess(&draws.coordinate_chains(0)).unwrap();
    let (mcse_mean, mcse_sd) = (s / n_eff.sqrt(), s / (2.0 * n_eff).sqrt());
    let detail = format!(
        "S={}, mean {m:.4} vs {mean:.4} (|Δ|/MCSE {:.2}), sd {s:.4} vs {sd:.4} (|Δ|/MCSE {:.2})",
        v.len(),
        (m - mean).abs() / mcse_mean,
        (s - sd).abs() / mcse_sd
    );
    if v.len() == 4000 && (m - mean).abs() < 4.0 * mcse_mean && (s - sd).abs() < 4.0 * mcse_sd {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn parameter_recovery() -> Outcome {
    let truth = MixtureTruth::reference().named();
    let mut covered: BTreeMap<String, u64> = truth.iter().map(|(n, _)| (n.clone(), 0)).collect();
    for s in 0..SEEDS {
        let data = mixture_dataset(s);
        let draws = match sample(ModelKind::Mixture, &data, &fit_config(replicate_seed(MIXTURE_MASTER, s))) {
            Ok(d) => d,
            Err(e) => return Outcome::Fail(format!("seed {s}: {e}")),
        };
        let report = recovery_check(&truth, &draws, 0.95).unwrap();
        let missed: Vec<&str> = report
            .parameters
            .iter()
            .filter(|p| !p.covered)
            .map(|p| p.name.as_str())
            .collect();
        eprintln!(
            "  recovery seed {s}: max R-hat {:.3}, missed {missed:?}",
            draws.diagnostics().max_rhat()
        );
        for p in report.parameters.iter().filter(|p| p.covered) {
            *covered.get_mut(&p.name).unwrap() += 1;
        }
    }
    let detail = truth
        .iter()
        .map(|(n, _)| format!("{n} {}/{SEEDS}", covered[n]))
        .collect::<Vec<_>>()
        .join(", ");
    if covered.values().all(|&c| c >= 8) {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail} (need 8/{SEEDS} each)"))
    }
}

fn selection_suite(
    label: &str,
    master: u64,
    dataset: fn(u64) -> Dataset,
    ok: fn(&ElpdComparison) -> bool,
    needed: u64,
) -> Outcome {
    let mut hits = 0;
    let mut diffs = Vec::new();
    for s in 0..SEEDS {
        let c = match kfold_comparison(&dataset(s), replicate_seed(master, s)) {
            Ok((_, _, c)) => c,
            Err(e) => return Outcome::Fail(format!("seed {s}: {e}")),
        };
        eprintln!("  {label} seed {s}: diff {:.1} (se {:.1})", c.diff, c.se_diff);
        diffs.push(format!("{:.0}({:.0})", c.diff, c.se_diff));
        if ok(&c) {
            hits += 1;
        }
    }
    let detail = format!("{hits}/{SEEDS} seeds; diff(se): {}", diffs.join(" "));
    if hits >= needed {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; need {needed}/{SEEDS}"))
    }
}

fn mixture_truth_selection() -> Outcome {
    selection_suite("mixture truth", MIXTURE_MASTER, mixture_dataset, |c| c.diff > 2.0 * c.se_diff, 9)
}

fn linear_truth_selection() -> Outcome {
    selection_suite("linear truth", LINEAR_MASTER, linear_dataset, |c| c.diff.abs() <= 4.0 * c.se_diff, 8)
}

/// Published posterior means and cross-validation results for one dataset.
struct Published {
    linear: [(&'static str, f64); 5],
    mixture: [(&'static str, f64); 8],
    elpd_linear: (f64, f64),
    elpd_mixture: (f64, f64),
}

const ORIGINAL: Published = Published {
    linear: [("beta0", 6.06), ("beta1", -0.07), ("sigma_e", 0.52), ("sigma_u", 0.25), ("sigma_w", 0.20)],
    mixture: [
        ("beta", 5.85),
        ("delta", 0.93),
        ("p_sr", 0.25),
        ("p_or", 0.21),
        ("sigma_e", 0.22),
        ("sigma_ep", 0.64),
        ("sigma_u", 0.24),
        ("sigma_w", 0.09),
    ],
    elpd_linear: (-3761.0, 38.0),
    elpd_mixture: (-3614.0, 35.0),
};

const REPLICATION: Published = Published {
    linear: [("beta0", 6.00), ("beta1", -0.09), ("sigma_e", 0.44), ("sigma_u", 0.25), ("sigma_w", 0.16)],
    mixture: [
        ("beta", 5.86),
        ("delta", 0.75),
        ("p_sr", 0.23),
        ("p_or", 0.16),
        ("sigma_e", 0.21),
        ("sigma_ep", 0.69),
        ("sigma_u", 0.22),
        ("sigma_w", 0.07),
    ],
    elpd_linear: (-3959.0, 53.0),
    elpd_mixture: (-3801.0, 38.0),
};

fn real_data(var: &str, published: &Published) -> Outcome {
    let Some(path) = std::env::var_os(var) else {
        return Outcome::Skipped(format!("{var} not set"));
    };
    let data = match Dataset::load_csv(&path) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("{}: {e}", Path::new(&path).display())),
    };
    let mut problems = Vec::new();
    for (model, expected) in [
        (ModelKind::Linear, &published.linear[..]),
        (ModelKind::Mixture, &published.mixture[..]),
    ] {
        let draws = match sample(model, &data, &SamplerConfig::default()) {
            Ok(d) => d,
            Err(e) => return Outcome::Fail(format!("{model} fit: {e}")),
        };
        let summary = draws.summary();
        for (name, value) in expected {
            let mean = summary.iter().find(|s| s.name == *name).unwrap().mean;
            let tol = if name.starts_with("p_") { 0.03 } else { 0.05 };
            if (mean - value).abs() > tol {
                problems.push(format!("{model} {name} {mean:.3} vs {value}"));
            }
        }
    }
    let (linear, mixture, c) = match kfold_comparison(&data, 1) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    for (r, (total, se)) in [(&linear, published.elpd_linear), (&mixture, published.elpd_mixture)] {
        if (r.total - total).abs() > 2.0 * se {
            problems.push(format!("{} elpd {:.0} ({:.0}) vs {total} ({se})", r.model, r.total, r.se));
        }
    }
    if !(c.diff > 2.0 * c.se_diff) {
        problems.push(format!("diff {:.0} ({:.0}) not above 2 se", c.diff, c.se_diff));
    }
    let detail = format!("diff {:.0} ({:.0})", c.diff, c.se_diff);
    if problems.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; {}", problems.join("; ")))
    }
}

type Big = FBig<HalfEven, 2>;

fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(256).value()
}

fn big_lognormal_lpdf(log_y: f64, mu: f64, sigma: f64) -> Big {
    let two_pi = big(2.0) * big(std::f64::consts::PI);
    let z = (big(log_y) - big(mu)) / big(sigma);
    // π enters only through ln(2π)/2, where the f64 rounding of π costs < 1e-16
    -big(log_y) - big(sigma).ln() - two_pi.ln() / big(2.0) - big(0.5) * z.clone() * z
}

fn numerical_stability() -> Outcome {
    let mut r = rng_from_seed(808);
    let mut worst_lme: f64 = 0.0;
    for _ in 0..300 {
        let n = r.random_range(1..50);
        let centre = r.random_range(-700.0..700.0);
        let v: Vec<f64> = (0..n).map(|_| centre + r.random_range(-40.0..40.0)).collect();
        let sum = v.iter().fold(big(0.0), |acc, &x| acc + big(x).exp());
        let want = (sum / big(n as f64)).ln().to_f64().value();
        worst_lme = worst_lme.max(rel_err(log_mean_exp(&v).unwrap(), want));
    }
    let mut worst_mix: f64 = 0.0;
    for _ in 0..300 {
        let mu = r.random_range(-5.0..5.0);
        let delta = r.random_range(0.01..3.0);
        let sigma_e = (-r.random_range(0.0..690.0f64)).exp();
        let sigma_ep = (-r.random_range(0.0..690.0f64)).exp();
        let (anchor, scale) = if r.random::<bool>() { (mu, sigma_e) } else { (mu + delta, sigma_ep) };
        let log_y = anchor + scale * r.random_range(-37.0..37.0);
        let p = r.random_range(0.001..0.999);
        let got = mixture_lognormal_lpdf(log_y, mu, delta, sigma_e, sigma_ep, p).unwrap();
        let f = big_lognormal_lpdf(log_y, mu + delta, sigma_ep).exp();
        let s = big_lognormal_lpdf(log_y, mu, sigma_e).exp();
        let want = (big(p) * f + (big(1.0) - big(p)) * s).ln().to_f64().value();
        worst_mix = worst_mix.max(rel_err(got, want));
    }
    let detail = format!("max relative error log-mean-exp {worst_lme:.1e}, mixture {worst_mix:.1e}");
    if worst_lme < 1e-12 && worst_mix < 1e-12 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail} (limit 1e-12)"))
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn reproducibility() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("rtmix-acceptance-{}", std::process::id()));
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_rtmix"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
        }
    };
    let data = tmp.join("sim").join("data.csv");
    let dir = |name: &str| tmp.join(name).to_string_lossy().into_owned();
    let quick = ["--chains", "2", "--warmup", "150", "--samples", "100", "--seed", "9"];
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("sim", vec!["simulate".into(), "--participants".into(), "12".into(), "--items".into(), "8".into()]),
        ("fit", vec!["fit".into(), "--data".into(), data.to_string_lossy().into_owned()]),
        ("compare", vec!["compare".into(), "--k".into(), "3".into(), "--data".into(), data.to_string_lossy().into_owned()]),
        ("ppc", vec!["ppc".into(), "--data".into(), data.to_string_lossy().into_owned(), "--ppc-draws".into(), "50".into()]),
        ("recover", vec!["recover".into(), "--participants".into(), "8".into(), "--items".into(), "6".into(), "--replicates".into(), "2".into()]),
    ];
    let mut checked = Vec::new();
    for (name, args) in &runs {
        let out = dir(name);
        let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
        full.extend(quick);
        full.extend(["--out", &out]);
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            if let Err(e) = run(&full) {
                let _ = fs::remove_dir_all(&tmp);
                return Outcome::Fail(e);
            }
            snapshots.push(snapshot(Path::new(&out)));
        }
        let replay = Path::new(&out).join("config.toml");
        if let Err(e) = run(&[args[0].as_str(), "--config", &replay.to_string_lossy()]) {
            let _ = fs::remove_dir_all(&tmp);
            return Outcome::Fail(e);
        }
        snapshots.push(snapshot(Path::new(&out)));
        if snapshots[0] != snapshots[1] || snapshots[0] != snapshots[2] {
            let _ = fs::remove_dir_all(&tmp);
            return Outcome::Fail(format!("`{}` outputs differ between identical runs", args[0]));
        }
        checked.push(format!("{} ({} files)", args[0], snapshots[0].len()));
    }
    let _ = fs::remove_dir_all(&tmp);
    Outcome::Pass(format!("byte-identical on repeat and config replay: {}", checked.join(", ")))
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("RTMIX_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "sampler oracle", sampler_oracle),
        (3, "parameter recovery", parameter_recovery),
        (4, "model selection, mixture truth", mixture_truth_selection),
        (5, "model selection, linear truth", linear_truth_selection),
        (6, "original data", || real_data("RTMIX_ORIGINAL_CSV", &ORIGINAL)),
        (7, "replication data", || real_data("RTMIX_REPLICATION_CSV", &REPLICATION)),
        (8, "numerical stability", numerical_stability),
        (9, "reproducibility", reproducibility),
    ];
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (id, name, check) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        eprintln!("criterion {id} ({name}) running");
        let start = Instant::now();
        let (status, detail) = match check() {
            Outcome::Pass(d) => {
                passed += 1;
                ("PASS", d)
            }
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skipped(d) => {
                skipped += 1;
                ("SKIPPED", d)
            }
        };
        println!(
            "criterion {id} ({name}): {status} [{:.0} s] {detail}",
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    let strict = std::env::var("RTMIX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
