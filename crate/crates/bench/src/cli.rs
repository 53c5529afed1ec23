//! Command-line front end. Flags override the matching config-file keys.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{BenchError, BenchResult};
use crate::experiments::{run_ablation, run_avedit, run_edit_experiment, run_generate, run_oracle_check, run_train};
use crate::report::{emit_report, Report, MANIFEST_FILE, SUMMARY_FILE};

#[derive(Debug, Parser)]
#[command(name = "flowlab", version, about = "Training-free flow editing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy conditional velocity model.
    Train(TrainArgs),
    /// Euler generation from noise with the analytic field or a model.
    Generate(GenerateArgs),
    /// Seed sweep of one edit configuration.
    Edit(EditArgs),
    /// Joint video/audio class-swap edits with a trained model.
    Avedit(AvEditArgs),
    /// 2x2 sweep over sequence mode and noise mode.
    Ablation(AblationArgs),
    /// Closed-form marginal velocity against Monte Carlo estimates.
    OracleCheck(OracleArgs),
    /// Verify an output directory against its manifest and print the summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of seeds in the sweep.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed of the sweep.
    #[arg(long)]
    pub seed_offset: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    /// Gaussian pair as `src=MEAN,VAR tar=MEAN,VAR` (isotropic).
    #[arg(long, num_args = 1..=2, value_name = "ROLE=MEAN,VAR")]
    pub analytic: Vec<String>,
    /// State dimension of the analytic pair.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Number of schedule steps.
    #[arg(long = "T", value_name = "T")]
    pub steps: Option<usize>,
    /// Skipped steps (meaning set by --skip-convention).
    #[arg(long)]
    pub skip: Option<usize>,
    /// `from-noise` (n_max = T - skip) or `as-index` (n_max = skip).
    #[arg(long)]
    pub skip_convention: Option<String>,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub analytic: AnalyticArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Sequence mode: `edit` or `target`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Noise mode: `random` or `estimated`.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub cfg_scale: Option<f64>,
    /// Source class.
    #[arg(long)]
    pub src_cond: Option<usize>,
    /// Target class.
    #[arg(long)]
    pub tar_cond: Option<usize>,
    /// Trained model used as the velocity field.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AvEditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub cfg_scale: Option<f64>,
    #[arg(long)]
    pub src_cond: Option<usize>,
    #[arg(long)]
    pub tar_cond: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Edit without the source audio.
    #[arg(long)]
    pub drop_audio: bool,
    #[arg(long)]
    pub test_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub analytic: AnalyticArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub src_cond: Option<usize>,
    #[arg(long)]
    pub tar_cond: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub analytic: AnalyticArgs,
    /// Dataset kind: `av` or `analytic`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Dataset size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub model_file: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub analytic: AnalyticArgs,
    #[arg(long = "T", value_name = "T")]
    pub steps: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub cond: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub analytic: AnalyticArgs,
    /// Monte Carlo draws per query point.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub points_2d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier run.
    #[arg(long)]
    pub out: PathBuf,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_base(common: &CommonArgs, experiment: Experiment) -> BenchResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = experiment;
    set(&mut cfg.run.out, common.out.clone());
    set(&mut cfg.run.seeds, common.seeds);
    set(&mut cfg.run.seed_offset, common.seed_offset);
    cfg.run.plot |= common.plot;
    Ok(cfg)
}

fn apply_analytic(cfg: &mut ExperimentConfig, args: &AnalyticArgs) -> BenchResult<()> {
    for item in &args.analytic {
        match item.split_once('=') {
            Some(("src", v)) => cfg.analytic.src = v.to_string(),
            Some(("tar", v)) => cfg.analytic.tar = v.to_string(),
            _ => {
                return Err(BenchError::config(format!(
                    "--analytic expects src=MEAN,VAR or tar=MEAN,VAR, got {item:?}"
                )))
            }
        }
    }
    set(&mut cfg.analytic.dim, args.dim);
    Ok(())
}

/// Effective config of a parsed command line (`None` for `report`).
pub fn effective_config(command: &Command) -> BenchResult<Option<ExperimentConfig>> {
    let cfg = match command {
        Command::Edit(a) => {
            let mut cfg = load_base(&a.common, Experiment::Edit)?;
            apply_analytic(&mut cfg, &a.analytic)?;
            let e = &mut cfg.edit;
            set(&mut e.steps, a.schedule.steps);
            set(&mut e.skip, a.schedule.skip);
            set(&mut e.skip_convention, a.schedule.skip_convention.clone());
            set(&mut e.mode, a.mode.clone());
            set(&mut e.noise, a.noise.clone());
            set(&mut e.cfg_scale, a.cfg_scale);
            set(&mut e.src_cond, a.src_cond);
            set(&mut e.tar_cond, a.tar_cond);
            if a.model.is_some() {
                e.model = a.model.clone();
            }
            cfg
        }
        Command::Avedit(a) => {
            let mut cfg = load_base(&a.common, Experiment::Avedit)?;
            let e = &mut cfg.avedit;
            set(&mut e.steps, a.schedule.steps);
            set(&mut e.skip, a.schedule.skip);
            set(&mut e.skip_convention, a.schedule.skip_convention.clone());
            set(&mut e.noise, a.noise.clone());
            set(&mut e.cfg_scale, a.cfg_scale);
            set(&mut e.src_class, a.src_cond);
            set(&mut e.tar_class, a.tar_cond);
            set(&mut e.test_seed, a.test_seed);
            e.drop_audio |= a.drop_audio;
            if a.model.is_some() {
                e.model = a.model.clone();
            }
            cfg
        }
        Command::Ablation(a) => {
            let mut cfg = load_base(&a.common, Experiment::Ablation)?;
            apply_analytic(&mut cfg, &a.analytic)?;
            let e = &mut cfg.ablation;
            set(&mut e.steps, a.schedule.steps);
            set(&mut e.skip, a.schedule.skip);
            set(&mut e.skip_convention, a.schedule.skip_convention.clone());
            set(&mut e.src_cond, a.src_cond);
            set(&mut e.tar_cond, a.tar_cond);
            if a.model.is_some() {
                e.model = a.model.clone();
            }
            cfg
        }
        Command::Train(a) => {
            let mut cfg = load_base(&a.common, Experiment::Train)?;
            apply_analytic(&mut cfg, &a.analytic)?;
            set(&mut cfg.dataset.kind, a.dataset.clone());
            set(&mut cfg.dataset.n, a.n);
            let t = &mut cfg.train;
            set(&mut t.epochs, a.epochs);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.learning_rate, a.learning_rate);
            set(&mut t.hidden, a.hidden.clone());
            set(&mut t.model_file, a.model_file.clone());
            cfg
        }
        Command::Generate(a) => {
            let mut cfg = load_base(&a.common, Experiment::Generate)?;
            apply_analytic(&mut cfg, &a.analytic)?;
            let g = &mut cfg.generate;
            set(&mut g.steps, a.steps);
            set(&mut g.samples, a.samples);
            set(&mut g.cond, a.cond);
            if a.model.is_some() {
                g.model = a.model.clone();
            }
            cfg
        }
        Command::OracleCheck(a) => {
            let mut cfg = load_base(&a.common, Experiment::OracleCheck)?;
            apply_analytic(&mut cfg, &a.analytic)?;
            let o = &mut cfg.oracle;
            set(&mut o.samples, a.samples);
            set(&mut o.grid, a.grid);
            set(&mut o.points_2d, a.points_2d);
            cfg
        }
        Command::Report(_) => return Ok(None),
    };
    Ok(Some(cfg))
}

/// Runs the experiment of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> BenchResult<Report> {
    Ok(match cfg.experiment {
        Experiment::Edit => run_edit_experiment(cfg)?,
        Experiment::Ablation => run_ablation(cfg)?.report,
        Experiment::Train => run_train(cfg)?.0,
        Experiment::Generate => run_generate(cfg)?,
        Experiment::Avedit => run_avedit(cfg)?.0,
        Experiment::OracleCheck => run_oracle_check(cfg)?.0,
    })
}

/// Checks every output listed in the manifest of `dir` against its recorded
/// SHA-256 and returns the summary CSV text.
pub fn verify_report(dir: &Path) -> BenchResult<String> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&manifest_path).map_err(|e| BenchError::path(&manifest_path, e))?;
    let manifest: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| BenchError::config(format!("manifest: {e}")))?;
    let outputs = manifest["outputs"]
        .as_array()
        .ok_or_else(|| BenchError::config("manifest has no outputs list"))?;
    for entry in outputs {
        let (Some(file), Some(sha)) = (entry["file"].as_str(), entry["sha256"].as_str()) else {
            return Err(BenchError::config("malformed manifest output entry"));
        };
        let path = dir.join(file);
        let data = std::fs::read(&path).map_err(|e| BenchError::path(&path, e))?;
        if hex::encode(Sha256::digest(&data)) != sha {
            return Err(BenchError::config(format!("{file} does not match its manifest checksum")));
        }
    }
    let summary = dir.join(SUMMARY_FILE);
    std::fs::read_to_string(&summary).map_err(|e| BenchError::path(&summary, e))
}

fn execute(command: &Command, stdout: &mut dyn Write) -> BenchResult<()> {
    let io = |e: std::io::Error| BenchError::path("<stdout>", e);
    let Some(cfg) = effective_config(command)? else {
        let Command::Report(args) = command else { unreachable!() };
        let summary = verify_report(&args.out)?;
        write!(stdout, "{summary}").map_err(io)?;
        return Ok(());
    };
    let report = run_experiment(&cfg)?;
    let files = emit_report(&report, &cfg, &cfg.run.out, cfg.run.plot)?;
    for f in files {
        writeln!(stdout, "{}", f.display()).map_err(io)?;
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 2 on usage, config or path errors,
/// 3 on numerical failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("flowlab: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> ExperimentConfig {
        let cli = Cli::try_parse_from(std::iter::once("flowlab").chain(args.iter().copied())).unwrap();
        effective_config(&cli.command).unwrap().unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = parse(&[
            "edit", "--analytic", "src=0,1", "tar=3,0.5", "--T", "30", "--skip", "10", "--mode", "edit", "--noise",
            "random", "--seeds", "7", "--src-cond", "1", "--tar-cond", "1", "--dim", "3",
        ]);
        assert_eq!(cfg.experiment, Experiment::Edit);
        assert_eq!(cfg.analytic.tar, "3,0.5");
        assert_eq!(cfg.analytic.dim, 3);
        assert_eq!((cfg.edit.steps, cfg.edit.skip), (30, 10));
        assert_eq!((cfg.edit.mode.as_str(), cfg.edit.noise.as_str()), ("edit", "random"));
        assert_eq!((cfg.edit.src_cond, cfg.edit.tar_cond), (1, 1));
        assert_eq!(cfg.run.seeds, 7);
    }

    #[test]
    fn flags_override_file_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[run]\nseeds = 5\n[ablation]\nsteps = 10\nskip = 2\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["ablation", "--config", p]);
        assert_eq!((cfg.run.seeds, cfg.ablation.steps, cfg.ablation.skip), (5, 10, 2));
        let cfg = parse(&["ablation", "--config", p, "--T", "12", "--seeds", "9"]);
        assert_eq!((cfg.run.seeds, cfg.ablation.steps, cfg.ablation.skip), (9, 12, 2));
    }

    #[test]
    fn bad_analytic_flag_is_config_error() {
        let cli = Cli::try_parse_from(["flowlab", "edit", "--analytic", "mid=0,1"]).unwrap();
        assert_eq!(effective_config(&cli.command).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cli_main(["flowlab", "edit", "--bogus"]), 2);
        assert_eq!(cli_main(["flowlab", "frobnicate"]), 2);
        assert_eq!(cli_main(["flowlab"]), 2);
        assert_eq!(cli_main(["flowlab", "--help"]), 0);
    }

    #[test]
    fn missing_config_file_exits_2() {
        assert_eq!(cli_main(["flowlab", "edit", "--config", "/nonexistent/flowlab.toml"]), 2);
    }
}
