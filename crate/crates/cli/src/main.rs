//! `staylor`: train tree ensembles, attribute predictions and export
//! decomposition artifacts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 exact
//! enumeration cap exceeded (retry with `--sampled`), 4 `verify` found a
//! failed identity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use staylor::attribution::{attribute_cohort, attribute_cohort_sampled};
use staylor::export::{
    importance_variants_csv, parse_terms_csv, render_importance, render_summary, shap_dependence,
    summary_rows, term_dependence, terms_csv, Dependence, Format, Scale, Variant,
};
use staylor::importance::{feature_importance, term_importance};
use staylor::interaction::{interactions_for_cohort, interactions_for_cohort_sampled, InteractionMethod};
use staylor::synthetic::{self, Manifest};
use staylor::treemodel::{load_model, save_model, train_gbdt, TrainConfig};
use staylor::{CohortAttributions, CohortInteractions, Error, Explainer, FeatureTable, TreeEnsemble};

#[derive(Parser)]
#[command(name = "staylor", version, about = "Shapley and Shapley-Taylor explanations for tree ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Background table for absent features (defaults to the data itself)
    #[arg(long, global = true, value_name = "PATH")]
    background: Option<PathBuf>,
    /// Use the sampled estimators with this many samples
    #[arg(long, global = true, value_name = "N")]
    sampled: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    format: Format,
    /// Output file (directory for `synth`); stdout when omitted
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Interaction scale: full = Φ(x_i, x_j), half = ½Φ(x_i, x_j)
    #[arg(long, global = true, value_parser = parse_scale)]
    scale: Option<Scale>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a squared-loss GBDT and write the model JSON
    Train {
        #[arg(long)]
        data: PathBuf,
        /// One-column CSV of targets
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long = "learning-rate", default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long = "min-leaf", default_value_t = 1)]
        min_leaf: usize,
    },
    /// Centered SHAP values per instance
    Explain {
        #[command(flatten)]
        input: ModelInput,
    },
    /// Main and interaction terms per instance, or one pair's dependence rows
    Interact {
        #[command(flatten)]
        input: ModelInput,
        #[arg(long, default_value = "taylor", value_parser = parse_method)]
        method: InteractionMethod,
        /// Emit dependence rows for FEATURE,PARTNER instead of all terms
        #[arg(long, value_name = "FEATURE,PARTNER")]
        pair: Option<String>,
    },
    /// Importance ranking of features or of main and interaction terms
    Importance {
        /// Long-form terms written by `interact`
        #[arg(long, conflicts_with_all = ["model", "data"])]
        terms: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "taylor", value_parser = parse_method)]
        method: InteractionMethod,
        /// Rank single features by SHAP spread instead of decomposition terms
        #[arg(long)]
        features: bool,
    },
    /// Dependence-plot rows for one feature
    Dependence {
        #[command(flatten)]
        input: ModelInput,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value = "shap", value_parser = parse_variant)]
        variant: Variant,
        /// Interaction partner (also the coloring feature)
        #[arg(long)]
        partner: Option<String>,
    },
    /// Summary-plot rows: features by importance, one row per instance
    Summary {
        #[command(flatten)]
        input: ModelInput,
    },
    /// Generate a synthetic data set with known structure
    Synth {
        #[arg(long, value_parser = ["eq5", "threshold"])]
        preset: String,
        /// Rows for the threshold preset (eq5 always writes its 8-point grid)
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Coefficients a,b,c,d,e of the eq5 preset
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [1.0, 0.5, -0.75, 0.8, -0.4])]
        coef: Vec<f64>,
    },
    /// Check the separation identities on a generated data set
    Verify {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Distinct rows checked
        #[arg(long, default_value_t = 64)]
        rows: usize,
    },
}

#[derive(Args)]
struct ModelInput {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<InteractionMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical_cap() { 3 } else { 2 })
        }
        Err(Failure::Verify(report)) => {
            eprint!("{report}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Train {
            data,
            targets,
            trees,
            depth,
            learning_rate,
            min_leaf,
        } => {
            let table = FeatureTable::load_csv(data)?;
            let targets = load_targets(targets)?;
            let config = TrainConfig {
                num_trees: *trees,
                max_depth: *depth,
                learning_rate: *learning_rate,
                min_samples_leaf: *min_leaf,
                seed: g.seed,
            };
            let model = train_gbdt(&table, &targets, &config)?;
            emit(g.out.as_deref(), &save_model(&model)?)
        }
        Command::Explain { input } => {
            let (model, table, background) = load_inputs(g, input)?;
            let explainer = Explainer::new(&model, &background)?;
            let cohort = attributions(g, &explainer, &table)?;
            let text = match g.format {
                Format::Csv => explain_csv(&cohort),
                Format::Json => explain_json(&cohort)?,
                Format::Svg => return Err(usage("explain writes csv or json; use `summary` for a plot")),
            };
            emit(g.out.as_deref(), &text)
        }
        Command::Interact { input, method, pair } => {
            let (model, table, background) = load_inputs(g, input)?;
            let explainer = Explainer::new(&model, &background)?;
            let terms = interactions(g, &explainer, &table, *method)?;
            match pair {
                Some(spec) => {
                    let (a, b) = spec
                        .split_once(',')
                        .ok_or_else(|| usage(format!("--pair expects FEATURE,PARTNER, got {spec:?}")))?;
                    let i = feature(&table, a.trim())?;
                    let j = feature(&table, b.trim())?;
                    let scale = g.scale.unwrap_or(Variant::Interaction.default_scale());
                    let rows = term_dependence(&table, &terms, i, Variant::Interaction, Some(j), scale)?;
                    emit(g.out.as_deref(), &rows.render(g.format)?)
                }
                None => match g.format {
                    Format::Csv => emit(g.out.as_deref(), &terms_csv(&terms)),
                    _ => Err(usage("interact without --pair writes csv")),
                },
            }
        }
        Command::Importance {
            terms,
            model,
            data,
            method,
            features,
        } => {
            if *features {
                let input = match (model, data) {
                    (Some(model), Some(data)) => ModelInput {
                        model: model.clone(),
                        data: data.clone(),
                    },
                    _ => return Err(usage("--features needs --model and --data")),
                };
                let (model, table, background) = load_inputs(g, &input)?;
                let explainer = Explainer::new(&model, &background)?;
                let cohort = attributions(g, &explainer, &table)?;
                return emit(g.out.as_deref(), &render_importance(&feature_importance(&cohort), g.format)?);
            }
            let cohort = match (terms, model, data) {
                (Some(path), _, _) => parse_terms_csv(&fs::read_to_string(path)?, *method)?,
                (None, Some(model), Some(data)) => {
                    let input = ModelInput {
                        model: model.clone(),
                        data: data.clone(),
                    };
                    let (model, table, background) = load_inputs(g, &input)?;
                    let explainer = Explainer::new(&model, &background)?;
                    interactions(g, &explainer, &table, *method)?
                }
                _ => return Err(usage("importance needs --terms, or --model and --data")),
            };
            emit(g.out.as_deref(), &render_importance(&term_importance(&cohort), g.format)?)?;
            if let Some(out) = &g.out {
                fs::write(sidecar(out), importance_variants_csv(&cohort))?;
            }
            Ok(())
        }
        Command::Dependence {
            input,
            feature: name,
            variant,
            partner,
        } => {
            let (model, table, background) = load_inputs(g, input)?;
            let i = feature(&table, name)?;
            let j = partner.as_deref().map(|p| feature(&table, p)).transpose()?;
            if variant.needs_partner() && j.is_none() {
                return Err(usage(format!("variant {} needs --partner", variant.label())));
            }
            let explainer = Explainer::new(&model, &background)?;
            let rows: Dependence = if *variant == Variant::Shap {
                let cohort = attributions(g, &explainer, &table)?;
                shap_dependence(&table, &cohort, i, j)?
            } else {
                let terms = interactions(g, &explainer, &table, InteractionMethod::Taylor)?;
                let scale = g.scale.unwrap_or(variant.default_scale());
                term_dependence(&table, &terms, i, *variant, j, scale)?
            };
            emit(g.out.as_deref(), &rows.render(g.format)?)
        }
        Command::Summary { input } => {
            let (model, table, background) = load_inputs(g, input)?;
            let explainer = Explainer::new(&model, &background)?;
            let cohort = attributions(g, &explainer, &table)?;
            let ranking = feature_importance(&cohort);
            let rows = summary_rows(&table, &cohort, &ranking)?;
            emit(g.out.as_deref(), &render_summary(&rows, g.format)?)
        }
        Command::Synth { preset, n, coef } => {
            let dir = g.out.as_deref().ok_or_else(|| usage("synth needs --out DIR"))?;
            synth(dir, preset, *n, g.seed, coef)
        }
        Command::Verify { dir, tolerance, rows } => verify(g.out.as_deref(), dir, *tolerance, *rows),
    }
}

fn load_targets(path: &Path) -> Result<Vec<f64>, Failure> {
    let table = FeatureTable::load_csv(path)?;
    if table.num_features() != 1 {
        return Err(Error::Schema(format!(
            "targets file must have one column, found {}",
            table.num_features()
        ))
        .into());
    }
    table
        .column(0)
        .enumerate()
        .map(|(r, c)| c.ok_or_else(|| Error::Schema(format!("target in data row {} is missing", r + 1)).into()))
        .collect()
}

fn load_inputs(g: &Global, input: &ModelInput) -> Result<(TreeEnsemble, FeatureTable, FeatureTable), Failure> {
    let model: TreeEnsemble = load_model(&fs::read_to_string(&input.model)?)?;
    let table = FeatureTable::load_csv(&input.data)?;
    let background = match &g.background {
        Some(path) => FeatureTable::load_csv(path)?,
        None => table.clone(),
    };
    if table.names() != model.feature_names() {
        return Err(Error::Schema(format!(
            "data columns {:?} do not match model features {:?}",
            table.names(),
            model.feature_names()
        ))
        .into());
    }
    Ok((model, table, background))
}

fn feature(table: &FeatureTable, name: &str) -> Result<usize, Failure> {
    table
        .feature_index(name)
        .ok_or_else(|| usage(format!("unknown feature {name:?}; columns are {:?}", table.names())))
}

fn attributions(g: &Global, explainer: &Explainer<'_, f64>, table: &FeatureTable) -> Result<CohortAttributions, Failure> {
    Ok(match g.sampled {
        Some(samples) => attribute_cohort_sampled(explainer, table, samples, g.seed)?,
        None => attribute_cohort(explainer, table)?,
    })
}

fn interactions(
    g: &Global,
    explainer: &Explainer<'_, f64>,
    table: &FeatureTable,
    method: InteractionMethod,
) -> Result<CohortInteractions, Failure> {
    Ok(match (g.sampled, method) {
        (Some(samples), InteractionMethod::Taylor) => {
            interactions_for_cohort_sampled(explainer, table, samples, g.seed)?
        }
        (Some(_), InteractionMethod::Siv) => return Err(usage("--sampled supports the taylor method only")),
        (None, _) => interactions_for_cohort(explainer, table, method)?,
    })
}

fn explain_csv(cohort: &CohortAttributions) -> String {
    let mut out = String::from("id,prediction,baseline");
    for name in &cohort.feature_names {
        out.push_str(&format!(",phi:{name}"));
    }
    let sampled = cohort.rows.iter().any(|r| r.std_errors.is_some());
    if sampled {
        for name in &cohort.feature_names {
            out.push_str(&format!(",se:{name}"));
        }
    }
    out.push('\n');
    for (id, r) in cohort.rows.iter().enumerate() {
        out.push_str(&format!("{id},{},{}", r.prediction, r.baseline));
        for v in &r.centered {
            out.push_str(&format!(",{v}"));
        }
        if let Some(se) = &r.std_errors {
            for v in se {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    out
}

fn explain_json(cohort: &CohortAttributions) -> Result<String, Failure> {
    let rows: Vec<serde_json::Value> = cohort
        .rows
        .iter()
        .enumerate()
        .map(|(id, r)| {
            serde_json::json!({
                "id": id,
                "prediction": r.prediction,
                "raw": r.raw,
                "centered": r.centered,
                "std_errors": r.std_errors,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "features": cohort.feature_names,
        "baseline": cohort.baseline,
        "rows": rows,
    });
    Ok(serde_json::to_string_pretty(&doc).map_err(Error::from)? + "\n")
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::from(e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `ranking.csv` → `ranking.variants.csv`.
fn sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.variants.csv"))
}

fn synth(dir: &Path, preset: &str, n: usize, seed: u64, coef: &[f64]) -> Outcome {
    if coef.len() != 5 {
        return Err(usage(format!("--coef takes 5 comma-separated values, got {}", coef.len())));
    }
    fs::create_dir_all(dir)?;
    let (table, targets, manifest) = match preset {
        "eq5" => {
            let spec = synthetic::make_eq5_function(coef[0], coef[1], coef[2], coef[3], coef[4]);
            let table = spec.grid()?;
            let targets = table.rows().map(|r| spec.evaluate(r)).collect::<Result<Vec<_>, _>>()?;
            let mut manifest = Manifest::describe(
                &spec,
                "eq5",
                "F(x, y, z) = a*x + b*y + c*z + d*x*y + e*x*z on the uniform {-1, 1}^3 cube",
                seed,
                table.num_rows(),
            );
            manifest.coefficients = coef.to_vec();
            (table, targets, manifest)
        }
        _ => {
            let cohort = synthetic::make_threshold_cohort(n, seed)?;
            let mut manifest =
                Manifest::describe(&cohort.spec, "threshold", synthetic::THRESHOLD_EQUATION, seed, n);
            manifest.noise_std = synthetic::THRESHOLD_NOISE_STD;
            manifest.threshold = Some(synthetic::THRESHOLD);
            (cohort.table, cohort.targets, manifest)
        }
    };
    table.write_csv(dir.join("data.csv"))?;
    let mut text = String::from("target\n");
    for t in &targets {
        text.push_str(&format!("{t}\n"));
    }
    fs::write(dir.join("targets.csv"), text)?;
    fs::write(dir.join("manifest.json"), manifest.to_json()?)?;
    Ok(())
}

fn verify(out: Option<&Path>, dir: &Path, tolerance: f64, rows: usize) -> Outcome {
    let manifest = Manifest::from_json(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let spec = manifest.spec()?;
    let table = FeatureTable::load_csv(dir.join("data.csv"))?;
    let targets = load_targets(&dir.join("targets.csv"))?;
    let bound = if manifest.noise_std > 0.0 { 6.0 * manifest.noise_std } else { 1e-12 };
    let checks = synthetic::verify_spec(&spec, &table, Some((&targets, bound)), rows, 2, tolerance)?;
    let mut report = format!("preset {} ({} rows)\n", manifest.preset, table.num_rows());
    for c in &checks {
        report.push_str(&format!(
            "{} {} deviation {:e} tolerance {:e}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.deviation,
            c.tolerance
        ));
    }
    emit(out, &report)?;
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Verify(report))
    }
}
