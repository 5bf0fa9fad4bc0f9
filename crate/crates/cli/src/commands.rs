use std::fs::{self, File};
use std::path::PathBuf;

use rtmix::crossval::{compare, format_table, run_kfold};
use rtmix::data::{make_folds, Condition, Dataset};
use rtmix::model::{Layout, ModelKind};
use rtmix::sampler::{sample, PosteriorDraws};
use rtmix::seeds::{derive_seed, REPLICATE_STREAM};
use rtmix::simulate::{gen_linear, gen_mixture, posterior_predictive, recovery_check, ConditionStats, RecoveryReport};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// Output directory of one run.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(config: &RunConfig) -> Result<Self, CliError> {
        let dir = config.out.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let out = Output { dir };
        out.text("config.toml", &config.to_toml())?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn file(&self, name: &str) -> Result<(File, PathBuf), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok((file, path))
    }

    fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    fn json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.text(name, &text)
    }
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    config.validate()?;
    match config.command.as_str() {
        "fit" => fit(config),
        "compare" => compare_models(config),
        "simulate" => simulate(config),
        "recover" => recover(config),
        "ppc" => ppc(config),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn load(config: &RunConfig) -> Result<Dataset, CliError> {
    let path = config.data_path()?;
    Ok(Dataset::load_csv(path)?)
}

fn report_warnings(context: &str, warnings: &[String]) {
    for w in warnings {
        eprintln!("warning ({context}): {w}");
    }
}

/// Aligned `parameter mean 2.5% 97.5%` table of the population parameters.
fn summary_table(draws: &PosteriorDraws, layout: &Layout) -> String {
    let population = layout.population_names();
    let rows: Vec<_> = draws
        .summary()
        .into_iter()
        .filter(|s| population.contains(&s.name.as_str()))
        .collect();
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "parameter", "mean", "2.5%", "97.5%");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}\n",
            r.name, r.mean, r.lower, r.upper
        ));
    }
    out
}

fn fit(config: &RunConfig) -> Result<(), CliError> {
    let data = load(config)?;
    let out = Output::create(config)?;
    let model = config.model;
    eprintln!(
        "fitting the {model} model to {} trials: {} chains, {} warmup + {} samples",
        data.len(),
        config.sampler.chains,
        config.sampler.warmup,
        config.sampler.samples
    );
    let draws = sample(model, &data, &config.sampler_config(config.seed))?;
    let layout = Layout::new(model, data.n_participants(), data.n_items());

    let (file, path) = out.file("draws.csv")?;
    draws.write_csv(file).map_err(|e| CliError::io(&path, e))?;
    let diagnostics = draws.diagnostics();
    report_warnings("diagnostics", &diagnostics.warnings);
    out.json("diagnostics.json", &diagnostics.to_json())?;

    let mut csv = String::from("parameter,mean,sd,q2.5,q97.5\n");
    for s in draws.summary() {
        csv.push_str(&format!("{},{},{},{},{}\n", s.name, s.mean, s.sd, s.lower, s.upper));
    }
    out.text("summary.csv", &csv)?;
    let table = summary_table(&draws, &layout);
    out.text("summary.txt", &table)?;
    out.json("coordinates.json", &coordinate_labels(&data, &layout))?;
    print!("{table}");
    Ok(())
}

/// Maps each random-effect coordinate to the participant or item label it
/// stands for in the input file.
fn coordinate_labels(data: &Dataset, layout: &Layout) -> Value {
    let names = layout.names();
    let mut map = serde_json::Map::new();
    for (i, label) in data.participant_labels().iter().enumerate() {
        map.insert(names[layout.u_offset() + i].clone(), json!({ "participant": label }));
    }
    for (j, label) in data.item_labels().iter().enumerate() {
        map.insert(names[layout.w_offset() + j].clone(), json!({ "item": label }));
    }
    Value::Object(map)
}

fn compare_models(config: &RunConfig) -> Result<(), CliError> {
    let data = load(config)?;
    let plan = make_folds(&data, config.k, config.seed)?;
    let out = Output::create(config)?;
    let (file, path) = out.file("folds.csv")?;
    plan.write_csv(file).map_err(|e| CliError::io(&path, e))?;

    let sampler = config.sampler_config(config.seed);
    let mut reports = Vec::new();
    for model in [ModelKind::Linear, ModelKind::Mixture] {
        eprintln!("{}-fold cross-validation of the {model} model on {} trials", config.k, data.len());
        let report = run_kfold(model, &data, &plan, &sampler)?;
        report_warnings(model.label(), &report.warnings);
        out.json(&format!("elpd_{model}.json"), &report.to_json())?;
        reports.push(report);
    }
    let (linear, mixture) = (&reports[0], &reports[1]);
    let comparison = compare(mixture, linear)?;
    out.json("comparison.json", &comparison.to_json())?;
    let text = format!(
        "{}winner: {}\n",
        format_table(&[linear, mixture], Some(&comparison)),
        comparison.winner
    );
    out.text("comparison.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn generate(config: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
    let design = config.design(seed);
    Ok(match config.model {
        ModelKind::Linear => gen_linear(&config.linear, &design)?,
        ModelKind::Mixture => gen_mixture(&config.mixture, &design)?,
    })
}

fn simulate(config: &RunConfig) -> Result<(), CliError> {
    let data = generate(config, config.seed)?;
    let out = Output::create(config)?;
    let (file, path) = out.file("data.csv")?;
    data.write_csv(file).map_err(|e| CliError::io(&path, e))?;
    println!("wrote {} simulated {} trials to {}", data.len(), config.model, path.display());
    Ok(())
}

fn recover(config: &RunConfig) -> Result<(), CliError> {
    let out = Output::create(config)?;
    let truth = match config.model {
        ModelKind::Linear => config.linear.named(),
        ModelKind::Mixture => config.mixture.named(),
    };
    let mut reports: Vec<RecoveryReport> = Vec::new();
    let mut runs = Vec::new();
    for r in 0..config.replicates {
        let seed = derive_seed(config.seed, REPLICATE_STREAM + r as u64);
        let data = generate(config, seed)?;
        let draws = sample(config.model, &data, &config.sampler_config(seed))?;
        let diagnostics = draws.diagnostics();
        let report = recovery_check(&truth, &draws, config.level)?;
        eprintln!(
            "replicate {}/{}: {:.0}% of intervals cover the truth",
            r + 1,
            config.replicates,
            100.0 * report.coverage_rate
        );
        runs.push(json!({
            "replicate": r + 1,
            "seed": seed,
            "max_rhat": diagnostics.max_rhat(),
            "divergences": diagnostics.divergences.iter().sum::<usize>(),
            "report": report,
        }));
        reports.push(report);
    }

    let mut per_parameter = Vec::new();
    let mut table = format!("{:<9}  {:>8}  {:>8}\n", "parameter", "true", "covered");
    let mut covered_total = 0;
    for (p, (name, value)) in truth.iter().enumerate() {
        let covered = reports.iter().filter(|r| r.parameters[p].covered).count();
        covered_total += covered;
        table.push_str(&format!("{name:<9}  {value:>8.2}  {:>8}\n", format!("{covered}/{}", reports.len())));
        per_parameter.push(json!({ "name": name, "true_value": value, "covered": covered, "runs": reports.len() }));
    }
    let coverage_rate = covered_total as f64 / (truth.len() * reports.len()) as f64;
    table.push_str(&format!("coverage rate {coverage_rate:.3}\n"));
    out.json(
        "recovery.json",
        &json!({
            "model": config.model,
            "level": config.level,
            "replicates": runs,
            "aggregate": { "coverage_rate": coverage_rate, "parameters": per_parameter },
        }),
    )?;
    out.text("recovery.txt", &table)?;
    print!("{table}");
    Ok(())
}

fn ppc(config: &RunConfig) -> Result<(), CliError> {
    let data = load(config)?;
    let out = Output::create(config)?;
    let model = config.model;
    let draws = sample(model, &data, &config.sampler_config(config.seed))?;
    report_warnings("diagnostics", &draws.diagnostics().warnings);
    let layout = Layout::new(model, data.n_participants(), data.n_items());
    let summary = posterior_predictive(&draws, &layout, &data, config.ppc_draws, config.seed)?;

    out.json("ppc.json", &serde_json::to_value(&summary).expect("ppc serializes"))?;
    let (file, path) = out.file("ppc_replicates.csv")?;
    summary.write_replicates_csv(file).map_err(|e| CliError::io(&path, e))?;

    let mut table = format!(
        "{:<4} {:<10} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        "cond", "statistic", "observed", "2.5%", "50%", "97.5%", "p_upper"
    );
    for condition in Condition::ALL {
        for stat in ConditionStats::NAMES {
            if let Some(c) = summary.check(condition, stat) {
                table.push_str(&format!(
                    "{:<4} {:<10} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>8.3}{}\n",
                    condition.label(),
                    stat,
                    c.observed,
                    c.replicate_lower,
                    c.replicate_median,
                    c.replicate_upper,
                    c.p_upper,
                    if c.extreme { "  *" } else { "" }
                ));
            }
        }
    }
    out.text("ppc.txt", &table)?;
    print!("{table}");
    Ok(())
}
