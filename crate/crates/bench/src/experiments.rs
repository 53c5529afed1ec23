//! Experiment runners. Each returns a [`Report`]; nothing here touches disk
//! except model loading.
//!
//! Seed conventions: the sampler of seed `s` uses `Rng64::new(s)` (through
//! `EditConfig::seed`), and its source sample is drawn from
//! `Rng64::with_stream(s, 1)`. Sweeps run in parallel and are merged in seed
//! order, so thread count never changes the output.

use std::path::Path;

use flowlab_core::gaussian::{
    default_bandwidth, gaussian_marginal_velocity, mc_conditional_velocity, sample_gaussian, GaussianConditionalField,
    GaussianSpec,
};
use flowlab_core::metrics::{
    exact_edit_reference, fitted_w2, mean_stderr, smoothness, structure_distance, truncation_bias, Stream,
    REFERENCE_STEPS,
};
use flowlab_core::model::{
    load_model, model_to_bytes, synth_av_dataset, train, CoupledAvParams, MlpModel, Optimizer, TrainConfig,
};
use flowlab_core::sampler::{av_edit, generate, run_edit, EditConfig, NoiseMode, SequenceMode, Trajectory};
use flowlab_core::{make_schedule, Condition, JointField, Rng64, ScheduleKind, TensorState, VelocityField};
use rayon::prelude::*;

use crate::config::{AnalyticPair, Experiment, ExperimentConfig};
use crate::error::{BenchError, BenchResult};
use crate::report::{fmt_f64, Cell, Report, Table};
use crate::svg::{Chart, Series};

/// Metric names, in summary order.
pub const FITTED_W2: &str = "fitted_w2";
pub const BIAS_NORM: &str = "bias_norm";
pub const SMOOTHNESS: &str = "smoothness";
pub const STRUCTURE_DISTANCE: &str = "structure_distance";

/// Ablation cells in table order.
pub const ABLATION_CELLS: [(SequenceMode, NoiseMode); 4] = [
    (SequenceMode::Edit, NoiseMode::Random),
    (SequenceMode::Edit, NoiseMode::Estimated),
    (SequenceMode::Target, NoiseMode::Random),
    (SequenceMode::Target, NoiseMode::Estimated),
];

/// Parallel map over `items`, merged in input order. The first error in
/// input order wins, so failures are reproducible too.
fn par_map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> BenchResult<R> + Sync + Send) -> BenchResult<Vec<R>> {
    let results: Vec<BenchResult<R>> = items.par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Conditional field with class 0 = source spec, class 1 = target spec and the
/// source spec as the unconditional (null) entry.
pub fn analytic_field(pair: &AnalyticPair) -> BenchResult<GaussianConditionalField> {
    Ok(GaussianConditionalField::new(2, pair.dim())
        .with_spec(&Condition::one_hot(0, 2)?, pair.src.clone())?
        .with_spec(&Condition::one_hot(1, 2)?, pair.tar.clone())?
        .with_null_spec(pair.src.clone())?)
}

/// Source sample of seed `seed`.
pub fn source_sample(spec: &GaussianSpec, seed: u64) -> BenchResult<TensorState> {
    let mut rng = Rng64::with_stream(seed, 1);
    Ok(sample_gaussian(spec, 1, &mut rng)?.remove(0))
}

pub fn load_model_checked(path: &Path) -> BenchResult<MlpModel> {
    if !path.is_file() {
        return Err(BenchError::config(format!("model file {} does not exist", path.display())));
    }
    Ok(load_model(path)?)
}

/// Velocity field of an experiment: the analytic pair or a trained model.
enum Field {
    Analytic(GaussianConditionalField),
    Model(MlpModel),
}

impl Field {
    fn open(pair: &AnalyticPair, model: Option<&Path>) -> BenchResult<Self> {
        match model {
            None => Ok(Field::Analytic(analytic_field(pair)?)),
            Some(path) => {
                let m = load_model_checked(path)?;
                if m.state_dim() != pair.dim() {
                    return Err(BenchError::config(format!(
                        "model state dimension {} differs from analytic.dim {}",
                        m.state_dim(),
                        pair.dim()
                    )));
                }
                if m.condition_dim() < 2 {
                    return Err(BenchError::config("model needs a condition of dimension >= 2"));
                }
                Ok(Field::Model(m))
            }
        }
    }

    fn as_dyn(&self) -> &(dyn VelocityField + Sync) {
        match self {
            Field::Analytic(f) => f,
            Field::Model(m) => m,
        }
    }

    fn condition(&self, class: usize) -> BenchResult<Condition> {
        Ok(Condition::one_hot(class, self.as_dyn().condition_dim())?)
    }
}

/// One seed of an edit sweep.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub x_src: TensorState,
    pub output: TensorState,
    /// Noise the source path was initialized with.
    pub eps0: TensorState,
    /// `output - exact_edit_reference(x_src, eps0)`.
    pub bias: TensorState,
    pub smoothness: f64,
    pub structure_distance: f64,
    pub trajectory: Trajectory,
}

/// Editing task of a sweep: classes, analytic reference and sources.
pub struct EditTask<'a> {
    pub pair: &'a AnalyticPair,
    pub src_class: usize,
    pub tar_class: usize,
}

fn sweep(
    field: &(dyn VelocityField + Sync),
    task: &EditTask<'_>,
    c_src: &Condition,
    c_tar: &Condition,
    cfg: &EditConfig,
    seeds: &[u64],
) -> BenchResult<Vec<SeedRun>> {
    let src_spec = task.pair.spec(task.src_class)?;
    let tar_spec = task.pair.spec(task.tar_class)?;
    par_map_ordered(seeds, |&seed| {
        let x_src = source_sample(src_spec, seed)?;
        let res = run_edit(field, &x_src, c_src, c_tar, &cfg.clone().with_seed(seed))?;
        let eps0 = res.trajectory.records[0].eps.clone();
        let exact = exact_edit_reference(src_spec, tar_spec, &x_src, &eps0, REFERENCE_STEPS)?;
        Ok(SeedRun {
            seed,
            bias: res.output.sub(&exact)?,
            smoothness: smoothness(&res.trajectory, Stream::Source)?,
            structure_distance: structure_distance(&x_src, &res.output)?,
            x_src,
            output: res.output,
            eps0,
            trajectory: res.trajectory,
        })
    })
}

/// Jackknife standard error of a statistic over leave-one-out subsets.
fn jackknife<T: Clone>(items: &[T], stat: impl Fn(&[T]) -> BenchResult<f64>) -> BenchResult<f64> {
    let n = items.len();
    if n < 3 {
        return Ok(0.0);
    }
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let mut rest = items.to_vec();
            rest.remove(i);
            stat(&rest)
        })
        .collect::<BenchResult<_>>()?;
    let mean = loo.iter().sum::<f64>() / n as f64;
    let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(((n - 1) as f64 / n as f64 * ss).sqrt())
}

fn push_sweep_metrics(report: &mut Report, cell: usize, runs: &[SeedRun], target: &GaussianSpec) -> BenchResult<()> {
    let outputs: Vec<TensorState> = runs.iter().map(|r| r.output.clone()).collect();
    if outputs.len() >= 2 {
        let w2 = fitted_w2(&outputs, target)?;
        let se = jackknife(&outputs, |s| Ok(fitted_w2(s, target)?))?;
        report.push_metric(cell, FITTED_W2, w2, se)?;
    }
    for (name, values) in [
        (BIAS_NORM, runs.iter().map(|r| r.bias.norm()).collect::<Vec<_>>()),
        (SMOOTHNESS, runs.iter().map(|r| r.smoothness).collect()),
        (STRUCTURE_DISTANCE, runs.iter().map(|r| r.structure_distance).collect()),
    ] {
        let (m, se) = mean_stderr(&values)?;
        report.push_metric(cell, name, m, se)?;
    }
    Ok(())
}

fn runs_header(with_modes: bool, dim: usize) -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    if with_modes {
        h.extend(["seq_mode".into(), "noise_mode".into()]);
    }
    h.push("seed".into());
    for prefix in ["x_src", "output", "eps0", "bias"] {
        h.extend((0..dim).map(|i| format!("{prefix}_{i}")));
    }
    h.extend([SMOOTHNESS.into(), STRUCTURE_DISTANCE.into()]);
    h
}

fn runs_row(run: &SeedRun, modes: Option<&EditConfig>) -> Vec<String> {
    let mut row = Vec::new();
    if let Some(cfg) = modes {
        row.extend([cfg.sequence_mode.name().to_string(), cfg.noise_mode.name().to_string()]);
    }
    row.push(run.seed.to_string());
    for s in [&run.x_src, &run.output, &run.eps0, &run.bias] {
        row.extend(s.data().iter().map(|v| fmt_f64(*v)));
    }
    row.extend([fmt_f64(run.smoothness), fmt_f64(run.structure_distance)]);
    row
}

fn edit_cell(cfg: &EditConfig, seeds: &[u64]) -> Cell {
    Cell {
        seq_mode: cfg.sequence_mode.name().into(),
        noise_mode: cfg.noise_mode.name().into(),
        steps: Some(cfg.steps),
        n_max: Some(cfg.n_max),
        seeds: seeds.to_vec(),
    }
}

fn require_smoothable(cfg: &EditConfig) -> BenchResult<()> {
    if cfg.n_max < 2 {
        return Err(BenchError::config(format!(
            "n_max = {} leaves fewer than 3 trajectory points for the smoothness metric",
            cfg.n_max
        )));
    }
    Ok(())
}

fn trajectory_chart(title: &str, traj: &Trajectory, current: &str) -> Chart {
    let times = traj.times();
    let coord0 = |states: Vec<&TensorState>| -> Vec<(f64, f64)> {
        times.iter().zip(states).map(|(t, s)| (*t, s.data()[0])).collect()
    };
    Chart::new(title, "t", "coordinate 0")
        .with_series(Series::line("source stream", coord0(traj.source_stream())))
        .with_series(Series::line(current, coord0(traj.current_stream())))
}

fn stream_label(mode: SequenceMode) -> &'static str {
    match mode {
        SequenceMode::Edit => "edit stream",
        SequenceMode::Target => "target stream",
    }
}

/// Seed sweep of one sampler configuration.
pub fn run_edit_experiment(cfg: &ExperimentConfig) -> BenchResult<Report> {
    let seeds = cfg.seed_list()?;
    let edit = cfg.edit_config()?;
    require_smoothable(&edit)?;
    let pair = cfg.analytic_pair()?;
    let field = Field::open(&pair, cfg.edit.model.as_deref())?;
    let task = EditTask {
        pair: &pair,
        src_class: cfg.edit.src_cond,
        tar_class: cfg.edit.tar_cond,
    };
    let (c_src, c_tar) = (field.condition(task.src_class)?, field.condition(task.tar_class)?);
    let runs = sweep(field.as_dyn(), &task, &c_src, &c_tar, &edit, &seeds)?;

    let mut report = Report::new(Experiment::Edit);
    let cell = report.push_cell(edit_cell(&edit, &seeds));
    push_sweep_metrics(&mut report, cell, &runs, pair.spec(task.tar_class)?)?;
    let mut table = Table::new("runs.csv", runs_header(false, pair.dim()));
    table.rows = runs.iter().map(|r| (Some(cell), runs_row(r, None))).collect();
    report.tables.push(table);
    let first = &runs[0];
    report.plots.push((
        "edit_trajectory.svg".into(),
        trajectory_chart(
            &format!("{} / {} (seed {})", edit.sequence_mode.name(), edit.noise_mode.name(), first.seed),
            &first.trajectory,
            stream_label(edit.sequence_mode),
        ),
    ));
    Ok(report)
}

/// Result of the 2x2 ablation: the report plus the raw runs per cell.
pub struct Ablation {
    pub report: Report,
    pub runs: Vec<(EditConfig, Vec<SeedRun>)>,
}

/// Runs every (sequence mode, noise mode) cell over the seed list with the
/// `[ablation]` schedule. Metrics per cell: fitted W2 of the outputs to the
/// target spec, bias norm against the full-horizon reference, source-stream
/// smoothness and structure distance.
pub fn run_ablation(cfg: &ExperimentConfig) -> BenchResult<Ablation> {
    let seeds = cfg.seed_list()?;
    if seeds.len() < 2 {
        return Err(BenchError::config("ablation needs at least 2 seeds for the fitted W2"));
    }
    let base = cfg.ablation_config()?;
    require_smoothable(&base)?;
    let pair = cfg.analytic_pair()?;
    let field = Field::open(&pair, cfg.ablation.model.as_deref())?;
    let task = EditTask {
        pair: &pair,
        src_class: cfg.ablation.src_cond,
        tar_class: cfg.ablation.tar_cond,
    };
    let (c_src, c_tar) = (field.condition(task.src_class)?, field.condition(task.tar_class)?);
    let target = pair.spec(task.tar_class)?;

    let mut report = Report::new(Experiment::Ablation);
    let mut table = Table::new("runs.csv", runs_header(true, pair.dim()));
    let mut all = Vec::new();
    for (seq, noise) in ABLATION_CELLS {
        let edit = base.clone().with_modes(seq, noise);
        let runs = sweep(field.as_dyn(), &task, &c_src, &c_tar, &edit, &seeds)?;
        let cell = report.push_cell(edit_cell(&edit, &seeds));
        push_sweep_metrics(&mut report, cell, &runs, target)?;
        table.rows.extend(runs.iter().map(|r| (Some(cell), runs_row(r, Some(&edit)))));
        all.push((edit, runs));
    }
    report.tables.push(table);
    report.plots.push(("bias_vs_tmax.svg".into(), bias_chart(&pair, &task, &c_src, &c_tar, &base, &field, &all)?));
    let mut streams = Chart::new(format!("source streams (seed {})", seeds[0]), "t", "coordinate 0");
    for (edit, runs) in all.iter().filter(|(e, _)| e.sequence_mode == SequenceMode::Target) {
        let traj = &runs[0].trajectory;
        let pts = traj.times().into_iter().zip(traj.source_stream()).map(|(t, s)| (t, s.data()[0])).collect();
        streams = streams.with_series(Series::line(format!("{} noise", edit.noise_mode.name()), pts));
    }
    report.plots.push(("source_streams.svg".into(), streams));
    Ok(Ablation { report, runs: all })
}

/// Bias norm against the truncation start: the dense-grid oracle and the
/// target-sequence sampler at every `n_max` of the schedule, for the first seed.
fn bias_chart(
    pair: &AnalyticPair,
    task: &EditTask<'_>,
    c_src: &Condition,
    c_tar: &Condition,
    base: &EditConfig,
    field: &Field,
    runs: &[(EditConfig, Vec<SeedRun>)],
) -> BenchResult<Chart> {
    let first = &runs[0].1[0];
    let (src, tar) = (pair.spec(task.src_class)?, pair.spec(task.tar_class)?);
    let levels: Vec<usize> = (1..=base.steps).collect();
    let dense = par_map_ordered(&levels, |&n| {
        let t_max = n as f64 / base.steps as f64;
        Ok((t_max, truncation_bias(src, tar, &first.x_src, t_max, &first.eps0)?.norm()))
    })?;
    let sampled = par_map_ordered(&levels, |&n| {
        let cfg = EditConfig {
            n_max: n,
            seed: first.seed,
            ..base.clone().with_modes(SequenceMode::Target, NoiseMode::Estimated)
        };
        let res = run_edit(field.as_dyn(), &first.x_src, c_src, c_tar, &cfg)?;
        let eps0 = &res.trajectory.records[0].eps;
        let exact = exact_edit_reference(src, tar, &first.x_src, eps0, REFERENCE_STEPS)?;
        Ok((cfg.t_max(), res.output.sub(&exact)?.norm()))
    })?;
    Ok(Chart::new(format!("bias vs t_max (seed {})", first.seed), "t_max", "bias norm")
        .with_series(Series::line("dense-grid oracle", dense))
        .with_series(Series::line(format!("target / estimated, T = {}", base.steps), sampled)))
}

/// Euler generation from standard-normal draws with one condition.
pub fn run_generate(cfg: &ExperimentConfig) -> BenchResult<Report> {
    let g = &cfg.generate;
    if g.samples < 2 {
        return Err(BenchError::config("generate.samples must be >= 2"));
    }
    let pair = cfg.analytic_pair()?;
    let field = Field::open(&pair, g.model.as_deref())?;
    let c = field.condition(g.cond)?;
    let target = pair.spec(g.cond)?;
    let schedule = make_schedule(g.steps, ScheduleKind::Linear)?;
    let seed = cfg.run.seed_offset;
    let mut rng = Rng64::new(seed);
    let noise: Vec<TensorState> = (0..g.samples)
        .map(|_| rng.normal_state(&[pair.dim()], flowlab_core::Modality::Generic))
        .collect();
    let samples = par_map_ordered(&noise, |x1| Ok(generate(field.as_dyn(), x1, &c, &schedule)?))?;

    let mut report = Report::new(Experiment::Generate);
    let cell = report.push_cell(Cell {
        steps: Some(g.steps),
        n_max: Some(g.steps),
        ..Cell::untimed(vec![seed])
    });
    report.push_metric(cell, FITTED_W2, fitted_w2(&samples, target)?, 0.0)?;
    let dim = pair.dim();
    for k in 0..dim {
        let col: Vec<f64> = samples.iter().map(|s| s.data()[k]).collect();
        let (m, se) = mean_stderr(&col)?;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        report.push_metric(cell, &format!("mean_{k}"), m, se)?;
        report.push_metric(cell, &format!("var_{k}"), var, 0.0)?;
    }
    let mut header = vec!["index".to_string()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    let mut table = Table::new("samples.csv", header);
    table.rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![i.to_string()];
            row.extend(s.data().iter().map(|v| fmt_f64(*v)));
            (Some(cell), row)
        })
        .collect();
    report.tables.push(table);
    let pts = samples
        .iter()
        .enumerate()
        .map(|(i, s)| if dim >= 2 { (s.data()[0], s.data()[1]) } else { (i as f64, s.data()[0]) })
        .collect();
    let (xl, yl) = if dim >= 2 { ("x_0", "x_1") } else { ("index", "x_0") };
    report.plots.push((
        "generate_samples.svg".into(),
        Chart::new(format!("samples (condition {}, T = {})", g.cond, g.steps), xl, yl)
            .with_series(Series::scatter("samples", pts)),
    ));
    Ok(report)
}

fn av_params(cfg: &ExperimentConfig) -> CoupledAvParams {
    let d = &cfg.dataset;
    CoupledAvParams::two_class(d.video_dim, d.audio_dim, d.separation, d.video_std, d.noise_scale)
}

/// Training pairs of the `[dataset]` table and the condition dimension.
fn training_data(cfg: &ExperimentConfig) -> BenchResult<(Vec<(TensorState, Condition)>, usize, usize)> {
    let d = &cfg.dataset;
    if d.n == 0 {
        return Err(BenchError::config("dataset.n must be >= 1"));
    }
    match d.kind.as_str() {
        "av" => {
            let params = av_params(cfg);
            let data = synth_av_dataset(&params, d.n, d.seed)?;
            Ok((data.flow_pairs(), params.video_dim() + params.audio_dim(), params.classes()))
        }
        "analytic" => {
            let pair = cfg.analytic_pair()?;
            let mut rng = Rng64::with_stream(d.seed, 2);
            let pairs = (0..d.n)
                .map(|i| {
                    let class = i % 2;
                    let x = sample_gaussian(pair.spec(class)?, 1, &mut rng)?.remove(0);
                    Ok((x, Condition::one_hot(class, 2)?))
                })
                .collect::<BenchResult<_>>()?;
            Ok((pairs, pair.dim(), 2))
        }
        other => Err(BenchError::config(format!("dataset.kind must be av or analytic, got {other:?}"))),
    }
}

/// Trains the toy model on the `[dataset]` table; the model bytes are
/// returned as an artifact named `train.model_file`.
pub fn run_train(cfg: &ExperimentConfig) -> BenchResult<(Report, MlpModel)> {
    let t = &cfg.train;
    let (data, state_dim, cond_dim) = training_data(cfg)?;
    let mut widths = vec![state_dim + flowlab_core::model::TIME_FEATURES];
    widths.extend(&t.hidden);
    widths.push(state_dim);
    let mut model = MlpModel::init(&widths, cond_dim, cfg.activation()?, t.init_seed)?;
    let optimizer = match t.optimizer.as_str() {
        "adam" => Optimizer::default(),
        "sgd" => Optimizer::Sgd,
        other => return Err(BenchError::config(format!("train.optimizer must be adam or sgd, got {other:?}"))),
    };
    let tc = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed: t.seed,
        optimizer,
    };
    let rep = train(&mut model, &data, &tc)?;

    let mut report = Report::new(Experiment::Train);
    let cell = report.push_cell(Cell::untimed(vec![t.seed]));
    report.push_metric(cell, "initial_loss", rep.initial_loss, 0.0)?;
    report.push_metric(cell, "final_loss", rep.final_loss, 0.0)?;
    report.push_metric(cell, "steps", rep.steps as f64, 0.0)?;
    let mut table = Table::new("loss.csv", vec!["epoch".into(), "eval_loss".into()]);
    table.rows = rep
        .loss_curve
        .iter()
        .enumerate()
        .map(|(e, l)| (Some(cell), vec![e.to_string(), fmt_f64(*l)]))
        .collect();
    report.tables.push(table);
    let curve = rep.loss_curve.iter().enumerate().map(|(e, l)| (e as f64, *l)).collect();
    report.plots.push((
        "loss_curve.svg".into(),
        Chart::new("evaluation loss", "epoch", "loss").with_series(Series::line("eval loss", curve)),
    ));
    if t.model_file.is_empty() || t.model_file.contains(['/', '\\']) {
        return Err(BenchError::config("train.model_file must be a plain file name"));
    }
    report.artifacts.push((t.model_file.clone(), model_to_bytes(&model)));
    Ok((report, model))
}

/// Per-edit record of the joint video/audio class swap.
#[derive(Debug, Clone)]
pub struct AvRun {
    pub seed: u64,
    pub video_src: TensorState,
    pub audio_src: TensorState,
    pub video_out: TensorState,
    pub audio_out: TensorState,
    pub target_distance: f64,
    pub hit: bool,
}

/// Class-swap edits of held-out samples with a trained joint model. An edit
/// hits when its video lands within 3 within-class standard deviations
/// (Euclidean) of the target-class mean.
pub fn run_avedit(cfg: &ExperimentConfig) -> BenchResult<(Report, Vec<AvRun>)> {
    let a = &cfg.avedit;
    let path = a
        .model
        .as_deref()
        .ok_or_else(|| BenchError::config("avedit needs a model (avedit.model or --model)"))?;
    let model = load_model_checked(path)?;
    run_avedit_with(cfg, &model)
}

pub fn run_avedit_with(cfg: &ExperimentConfig, model: &MlpModel) -> BenchResult<(Report, Vec<AvRun>)> {
    let a = &cfg.avedit;
    let seeds = cfg.seed_list()?;
    let edit = cfg.avedit_config()?;
    let params = av_params(cfg);
    params.validate()?;
    let classes = params.classes();
    if a.src_class >= classes || a.tar_class >= classes {
        return Err(BenchError::config(format!("avedit classes must be < {classes}")));
    }
    let (vd, ad) = (params.video_dim(), params.audio_dim());
    if model.state_dim() != vd + ad || model.condition_dim() != classes {
        return Err(BenchError::config(format!(
            "model (state {}, condition {}) does not match the dataset (state {}, classes {classes})",
            model.state_dim(),
            model.condition_dim(),
            vd + ad
        )));
    }
    let field = JointField::new(model, vd)?;
    let test = synth_av_dataset(&params, seeds.len() * classes, a.test_seed)?;
    let sources: Vec<_> = test.samples.iter().filter(|s| s.class == a.src_class).collect();
    let (c_src, c_tar) = (Condition::one_hot(a.src_class, classes)?, Condition::one_hot(a.tar_class, classes)?);
    let target_mean = &params.class_means[a.tar_class];
    let radius = 3.0 * params.video_std;
    let indices: Vec<usize> = (0..seeds.len()).collect();
    let runs = par_map_ordered(&indices, |&i| {
        let s = sources[i];
        let audio = (!a.drop_audio).then_some(&s.audio);
        let res = av_edit(&field, &s.video, audio, &c_src, &c_tar, &edit.clone().with_seed(seeds[i]))?;
        let dist = res
            .output
            .video
            .data()
            .iter()
            .zip(target_mean)
            .map(|(v, m)| (v - m).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(AvRun {
            seed: seeds[i],
            video_src: s.video.clone(),
            audio_src: s.audio.clone(),
            video_out: res.output.video,
            audio_out: res.output.audio,
            target_distance: dist,
            hit: dist <= radius,
        })
    })?;

    let mut report = Report::new(Experiment::Avedit);
    let cell = report.push_cell(edit_cell(&edit, &seeds));
    let coupling = |r: &AvRun| -> f64 {
        let expect = params.coupled_audio(r.video_out.data(), a.tar_class);
        let ss: f64 = expect.iter().zip(r.audio_out.data()).map(|(e, o)| (e - o).powi(2)).sum();
        (ss / ad as f64).sqrt()
    };
    let metrics: Vec<(&str, Vec<f64>)> = vec![
        ("hit_rate", runs.iter().map(|r| if r.hit { 1.0 } else { 0.0 }).collect()),
        ("target_distance", runs.iter().map(|r| r.target_distance).collect()),
        (
            "video_structure_distance",
            runs.iter()
                .map(|r| structure_distance(&r.video_src, &r.video_out))
                .collect::<flowlab_core::Result<_>>()?,
        ),
        ("audio_coupling_residual", runs.iter().map(coupling).collect()),
    ];
    for (name, values) in metrics {
        let (m, se) = mean_stderr(&values)?;
        report.push_metric(cell, name, m, se)?;
    }
    let mut header = vec!["seed".to_string()];
    for (prefix, n) in [("video_src", vd), ("audio_src", ad), ("video_out", vd), ("audio_out", ad)] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(["target_distance".into(), "hit".into()]);
    let mut table = Table::new("runs.csv", header);
    table.rows = runs
        .iter()
        .map(|r| {
            let mut row = vec![r.seed.to_string()];
            for s in [&r.video_src, &r.audio_src, &r.video_out, &r.audio_out] {
                row.extend(s.data().iter().map(|v| fmt_f64(*v)));
            }
            row.extend([fmt_f64(r.target_distance), u8::from(r.hit).to_string()]);
            (Some(cell), row)
        })
        .collect();
    report.tables.push(table);
    if vd >= 2 {
        let pts = |f: fn(&AvRun) -> &TensorState| runs.iter().map(|r| (f(r).data()[0], f(r).data()[1])).collect();
        report.plots.push((
            "avedit_video.svg".into(),
            Chart::new("video class swap", "video_0", "video_1")
                .with_series(Series::scatter("source video", pts(|r| &r.video_src)))
                .with_series(Series::scatter("edited video", pts(|r| &r.video_out))),
        ));
    }
    Ok((report, runs))
}

/// One point of the Monte Carlo oracle comparison.
#[derive(Debug, Clone)]
pub struct OraclePoint {
    pub dim: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub exact: Vec<f64>,
    pub estimate: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl OraclePoint {
    /// Largest per-coordinate `|estimate - exact| / std_err`.
    pub fn max_abs_z(&self) -> f64 {
        self.exact
            .iter()
            .zip(&self.estimate)
            .zip(&self.std_err)
            .map(|((e, m), s)| ((m - e) / s).abs())
            .fold(0.0, f64::max)
    }
}

/// Query points: a `grid x grid` lattice in 1D (times at cell centres of
/// `[0, 1]`, positions at marginal mean `+- 1.5` marginal sd) and
/// `points_2d` random points in 2D.
pub fn oracle_points(spec_1d: &GaussianSpec, spec_2d: &GaussianSpec, grid: usize, points_2d: usize, seed: u64) -> Vec<(usize, f64, Vec<f64>)> {
    let marginal = |spec: &GaussianSpec, k: usize, t: f64, z: f64| {
        let var = (1.0 - t).powi(2) * spec.cov()[(k, k)] + t * t;
        (1.0 - t) * spec.mean()[k] + z * var.sqrt()
    };
    let mut pts = Vec::new();
    for i in 0..grid {
        let t = (i as f64 + 0.5) / grid as f64;
        for j in 0..grid {
            let z = if grid == 1 { 0.0 } else { -1.5 + 3.0 * j as f64 / (grid - 1) as f64 };
            pts.push((1, t, vec![marginal(spec_1d, 0, t, z)]));
        }
    }
    let mut rng = Rng64::with_stream(seed, 3);
    for _ in 0..points_2d {
        let t = 0.1 + 0.8 * rng.uniform();
        let x = (0..2).map(|k| marginal(spec_2d, k, t, rng.normal().clamp(-1.5, 1.5))).collect();
        pts.push((2, t, x));
    }
    pts
}

/// Compares the closed-form marginal velocity with the kernel Monte Carlo
/// estimate (`samples` draws, default bandwidth) at every query point.
pub fn oracle_check(spec_1d: &GaussianSpec, spec_2d: &GaussianSpec, grid: usize, points_2d: usize, samples: usize, seed: u64) -> BenchResult<Vec<OraclePoint>> {
    let pts = oracle_points(spec_1d, spec_2d, grid, points_2d, seed);
    let indexed: Vec<(usize, &(usize, f64, Vec<f64>))> = pts.iter().enumerate().collect();
    par_map_ordered(&indexed, |&(i, (dim, t, x))| {
        let spec = if *dim == 1 { spec_1d } else { spec_2d };
        let state = TensorState::vector(x.clone())?;
        let exact = gaussian_marginal_velocity(spec, &state, *t)?;
        let mut rng = Rng64::with_stream(seed, 100 + i as u64);
        let est = mc_conditional_velocity(spec, &state, *t, samples, default_bandwidth(*t), &mut rng)?;
        Ok(OraclePoint {
            dim: *dim,
            t: *t,
            x: x.clone(),
            exact: exact.into_data(),
            estimate: est.value.into_data(),
            std_err: est.std_err,
        })
    })
}

pub fn run_oracle_check(cfg: &ExperimentConfig) -> BenchResult<(Report, Vec<OraclePoint>)> {
    let o = &cfg.oracle;
    if o.grid == 0 {
        return Err(BenchError::config("oracle.grid must be >= 1"));
    }
    let (m, v) = crate::config::parse_moments(&cfg.analytic.tar)?;
    let spec_1d = GaussianSpec::isotropic(1, m, v)?;
    let spec_2d = GaussianSpec::isotropic(2, m, v)?;
    let points = oracle_check(&spec_1d, &spec_2d, o.grid, o.points_2d, o.samples, o.seed)?;

    let mut report = Report::new(Experiment::OracleCheck);
    let mut table = Table::new(
        "oracle.csv",
        ["dim", "t", "x", "exact", "estimate", "std_err", "max_abs_z"].map(String::from).to_vec(),
    );
    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
    for dim in [1, 2] {
        let sel: Vec<&OraclePoint> = points.iter().filter(|p| p.dim == dim).collect();
        if sel.is_empty() {
            continue;
        }
        let cell = report.push_cell(Cell {
            seq_mode: String::new(),
            noise_mode: String::new(),
            steps: None,
            n_max: None,
            seeds: vec![o.seed],
        });
        let z: Vec<f64> = sel.iter().map(|p| p.max_abs_z()).collect();
        let within = z.iter().filter(|z| **z < 3.0).count() as f64 / z.len() as f64;
        report.push_metric(cell, &format!("max_abs_z_{dim}d"), z.iter().cloned().fold(0.0, f64::max), 0.0)?;
        report.push_metric(cell, &format!("within_3se_{dim}d"), within, 0.0)?;
        for p in sel {
            table.rows.push((
                Some(cell),
                vec![
                    dim.to_string(),
                    fmt_f64(p.t),
                    join(&p.x),
                    join(&p.exact),
                    join(&p.estimate),
                    join(&p.std_err),
                    fmt_f64(p.max_abs_z()),
                ],
            ));
        }
    }
    report.tables.push(table);
    Ok((report, points))
}
