use locus_core::connmat;
use locus_core::model_io;
use locus_core::synth::{self, LoadingDist, Scenario, SyntheticSpec};

use super::create_dir;
use crate::args::SimulateArgs;
use crate::config::ConfigFile;
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_DIR: &str = "truth";

fn parse_loadings(text: &str) -> Result<LoadingDist, CliError> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| CliError::Usage(format!("loadings: '{s}' is not a number")))
    };
    match parts.as_slice() {
        ["split_uniform"] => Ok(LoadingDist::default()),
        ["split_uniform", low, high] => Ok(LoadingDist::SplitUniform {
            low: num(low)?,
            high: num(high)?,
        }),
        ["gaussian", sd] => Ok(LoadingDist::Gaussian { sd: num(sd)? }),
        _ => Err(CliError::Usage(format!(
            "unknown loading distribution '{text}' (split_uniform[:LOW:HIGH] or gaussian:SD)"
        ))),
    }
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let defaults = SyntheticSpec::scenario_one(100, 1.0, 0);
    let scenario = match cfg.pick(args.scenario, "scenario")? {
        Some(s) => s.parse::<Scenario>()?,
        None => defaults.scenario.clone(),
    };
    let loading_dist = match cfg.pick(args.loadings, "loadings")? {
        Some(s) => parse_loadings(&s)?,
        None => defaults.loading_dist.clone(),
    };
    let spec = SyntheticSpec {
        nodes: cfg.pick(args.nodes, "V")?.unwrap_or(defaults.nodes),
        q: cfg.pick(args.q, "q")?.unwrap_or(defaults.q),
        subjects: cfg.pick(args.subjects, "N")?.unwrap_or(defaults.subjects),
        sigma: cfg.pick(args.sigma, "sigma")?.unwrap_or(defaults.sigma),
        scenario,
        seed: cfg.pick(args.seed, "seed")?.unwrap_or(defaults.seed),
        loading_dist,
    };
    let (dataset, truth) = synth::generate(&spec)?;

    create_dir(&args.out)?;
    connmat::save_edge_csv(&dataset, &args.out.join(DATA_FILE))?;
    model_io::write_truth(&args.out.join(TRUTH_DIR), &truth, &spec)?;

    let mut manifest = RunManifest::new("simulate");
    manifest
        .setting("scenario", spec.scenario.label())
        .setting("V", spec.nodes)
        .setting("q", spec.q)
        .setting("N", spec.subjects)
        .setting("sigma", spec.sigma);
    manifest.seed = Some(spec.seed);
    manifest.write(&args.out)?;
    log::info!("wrote {} subjects × {} edges to {}", dataset.subjects(), dataset.edges(), args.out.display());
    Ok(())
}
