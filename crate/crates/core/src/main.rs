use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dsrkit::curation::{curation_summary, pair_manifest, PairStrategy, ScoredSample};
use dsrkit::denoiser::ToyDenoiser;
use dsrkit::error::{Error, Result};
use dsrkit::geometry::BBox;
use dsrkit::io::{
    fixed6, fmt6, load_trajectories, parse_grid, read_json, read_jsonl, to_csv, write_json,
    write_jsonl, write_text, AnswerRecord, BatchPair, EmbeddingRecord, IdConsistencyRecord, RunConfig,
};
use dsrkit::loss::{combined_loss, LossConfig, LossMode, WeightMode};
use dsrkit::metrics::{
    answer_score_bins, camap_group_similarity, correctness_curve, id_consistency, uniform_edges, AttentionGroups,
};
use dsrkit::prompts::{generate_corpus, PromptStructure, SlotLists};
use dsrkit::synth::{simulate_trajectory, MotionSpec, PathKind};
use dsrkit::toy::{
    curve_summary, gradient_check, make_synthetic_pairs_scaled, train, ModelKind, TrainConfig, REF_DIM, REF_LR,
    REF_MU_GAP, REF_PAIRS, REF_SEED, REF_SIGNAL_SCALE, REF_STEPS,
};
use dsrkit::trajectory::{dsr_score, DsrScoreReport, DsrType, ScoringConfig};

#[derive(Parser)]
#[command(name = "dsrkit", version, about = "Relation scoring, pair curation and preference-loss tools")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InOut {
    /// Input file, `-` for stdin.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file, `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Out {
    /// Output file, `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score trajectories, one report per sample.
    Score {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        min_frames: Option<usize>,
    },
    /// Winner/loser counts at a training threshold.
    Curate {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Preference pairs per prompt.
    Pairs {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        strategy: Option<PairStrategy>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Correctness over a threshold grid, written as CSV plus a JSON sibling.
    Curve {
        #[command(flatten)]
        io: InOut,
        /// Grid as lo:hi:step.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Identity consistency per sample.
    Idcons {
        #[command(flatten)]
        io: InOut,
    },
    /// Yes/no answer rates by relation-score bin.
    VlmBin {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        hi: f64,
    },
    /// Group similarity of a cross-attention map.
    Camap {
        #[command(flatten)]
        io: InOut,
    },
    /// Loss diagnostics for one winner/loser batch pair.
    Loss {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value = "dpo")]
        mode: LossMode,
        #[command(flatten)]
        loss: LossFlags,
    },
    /// Analytic versus finite-difference gradients on a seeded toy model.
    Gradcheck {
        #[command(flatten)]
        out: Out,
        #[arg(long, default_value = "linear")]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[command(flatten)]
        loss: LossFlags,
    },
    /// Gradient descent on synthetic pairs; one curve record per step.
    ToyTrain {
        #[command(flatten)]
        out: Out,
        #[arg(long, default_value = "dpo")]
        mode: LossMode,
        #[arg(long, default_value_t = REF_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = REF_LR)]
        lr: f64,
        /// Data seed, also used for minibatch sampling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = REF_PAIRS)]
        pairs: usize,
        #[arg(long, default_value_t = REF_DIM)]
        dim: usize,
        #[arg(long, default_value_t = REF_MU_GAP)]
        mu_gap: f64,
        #[arg(long, default_value_t = REF_SIGNAL_SCALE)]
        signal_scale: f64,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Summary file; defaults to `<out>.summary.json` beside a file output.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        loss: LossFlags,
    },
    /// Template prompt corpus.
    Prompts {
        #[command(flatten)]
        out: Out,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "default")]
        structure: PromptStructure,
        /// Types to cycle through, e.g. ABCDEF.
        #[arg(long, default_value = "ABCDEF")]
        types: String,
        /// JSON slot lists replacing the built-in vocabulary.
        #[arg(long)]
        slots: Option<PathBuf>,
    },
    /// Synthetic trajectories with known motion.
    Simulate {
        #[command(flatten)]
        out: Out,
        /// Comma-separated transition types.
        #[arg(long = "type", default_value = "D")]
        types: String,
        #[arg(long, default_value_t = 81)]
        frames: usize,
        /// Comma-separated paths: linear, arc, hold, reversed.
        #[arg(long, default_value = "linear")]
        path: String,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        /// Comma-separated frame indices with two animal detections.
        #[arg(long, default_value = "")]
        multi_frames: String,
        /// Samples per (type, path).
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct LossFlags {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    timesteps: Option<u32>,
    #[arg(long)]
    lambda_sft: Option<f64>,
    #[arg(long)]
    lambda_zo: Option<f64>,
    /// Comma-separated per-timestep weights.
    #[arg(long)]
    weights: Option<String>,
}

impl LossFlags {
    fn resolve(&self, base: Option<&LossConfig>, sft_default: f64) -> Result<LossConfig> {
        let mut cfg = base.cloned().unwrap_or(LossConfig {
            lambda_sft: sft_default,
            ..LossConfig::default()
        });
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(t) = self.timesteps {
            cfg.timesteps = t;
        }
        if let Some(l) = self.lambda_sft {
            cfg.lambda_sft = l;
        }
        if let Some(l) = self.lambda_zo {
            cfg.lambda_zo = l;
        }
        if let Some(w) = &self.weights {
            cfg.weight = WeightMode::Table(parse_list(w, "weights")?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::InvalidConfig(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn input(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.cfg.input.clone())
            .ok_or_else(|| Error::InvalidConfig("no input file (use --in)".into()))
    }

    fn output(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("-"))
    }

    fn seed(&self, flag: Option<u64>, default: u64) -> u64 {
        flag.or(self.cfg.seed).unwrap_or(default)
    }
}

fn load_reports(path: &Path) -> Result<Vec<ScoredSample>> {
    let reports: Vec<DsrScoreReport> = read_jsonl(path, "report")?;
    Ok(reports.iter().map(ScoredSample::from).collect())
}

fn sibling(path: &Path, suffix: &str) -> Option<PathBuf> {
    if path == Path::new("-") {
        return None;
    }
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    Some(path.with_file_name(format!("{stem}{suffix}")))
}

#[derive(Serialize)]
struct CurvePoint {
    #[serde(serialize_with = "fixed6")]
    tau: f64,
    #[serde(serialize_with = "fixed6")]
    correctness: f64,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { cfg };
    match cli.command {
        Command::Score { io, m, min_frames } => {
            let sc = ScoringConfig::new(
                m.unwrap_or(ctx.cfg.window()),
                min_frames.unwrap_or(ctx.cfg.min_frames()),
            )?;
            let trajs = load_trajectories(&ctx.input(&io.input)?)?;
            let mut reports: Vec<DsrScoreReport> = trajs.iter().map(|t| dsr_score(t, &sc)).collect();
            reports.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            write_jsonl(&ctx.output(&io.out), &reports)?;
        }
        Command::Curate { io, tau } => {
            let samples = load_reports(&ctx.input(&io.input)?)?;
            let summary = curation_summary(&samples, tau.unwrap_or(ctx.cfg.tau_train()))?;
            write_json(&ctx.output(&io.out), &summary)?;
        }
        Command::Pairs {
            io,
            tau,
            strategy,
            cap,
            seed,
        } => {
            let samples = load_reports(&ctx.input(&io.input)?)?;
            let pairs = pair_manifest(
                &samples,
                tau.unwrap_or(ctx.cfg.tau_train()),
                strategy.or(ctx.cfg.pair_strategy).unwrap_or(PairStrategy::AllCross),
                cap.unwrap_or(ctx.cfg.pair_cap()),
                ctx.seed(seed, 0),
            )?;
            write_jsonl(&ctx.output(&io.out), &pairs)?;
        }
        Command::Curve { io, grid } => {
            let grid = grid
                .or_else(|| ctx.cfg.tau_grid.clone())
                .unwrap_or_else(|| "0:1:0.05".into());
            let samples = load_reports(&ctx.input(&io.input)?)?;
            let curve = correctness_curve(&samples, &parse_grid(&grid)?)?;
            let rows: Vec<Vec<String>> = curve
                .thresholds
                .iter()
                .zip(&curve.fractions)
                .map(|(t, f)| vec![fmt6(*t), fmt6(*f)])
                .collect();
            let out = ctx.output(&io.out);
            write_text(&out, &to_csv(&["tau", "correctness"], &rows)?)?;
            if let Some(json) = sibling(&out, ".json") {
                let points: Vec<CurvePoint> = curve
                    .thresholds
                    .iter()
                    .zip(&curve.fractions)
                    .map(|(&tau, &correctness)| CurvePoint { tau, correctness })
                    .collect();
                write_json(&json, &points)?;
            }
        }
        Command::Idcons { io } => {
            let recs: Vec<EmbeddingRecord> = read_jsonl(&ctx.input(&io.input)?, "embedding")?;
            let mut out = recs
                .iter()
                .map(|r| {
                    Ok(IdConsistencyRecord {
                        sample_id: r.sample_id.clone(),
                        frames: r.embeddings.frames().len(),
                        id_consistency: id_consistency(&r.embeddings)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            write_jsonl(&ctx.output(&io.out), &out)?;
        }
        Command::VlmBin { io, bins, lo, hi } => {
            let recs: Vec<AnswerRecord> = read_jsonl(&ctx.input(&io.input)?, "answer")?;
            let pairs: Vec<(f64, bool)> = recs.iter().map(|r| (r.score, r.answer.0)).collect();
            let result = answer_score_bins(&pairs, &uniform_edges(lo, hi, bins)?)?;
            let rows: Vec<Vec<String>> = result
                .iter()
                .map(|b| {
                    vec![
                        fmt6(b.lo),
                        fmt6(b.hi),
                        b.count.to_string(),
                        b.yes.to_string(),
                        b.no().to_string(),
                        b.yes_fraction.map(fmt6).unwrap_or_default(),
                    ]
                })
                .collect();
            write_text(
                &ctx.output(&io.out),
                &to_csv(&["lo", "hi", "count", "yes", "no", "yes_fraction"], &rows)?,
            )?;
        }
        Command::Camap { io } => {
            let ag: AttentionGroups = read_json(&ctx.input(&io.input)?)?;
            let sim = camap_group_similarity(&ag)?;
            let mut header = vec!["group".to_string()];
            header.extend(sim.groups.iter().map(|g| g.to_string()));
            let rows: Vec<Vec<String>> = sim
                .groups
                .iter()
                .zip(&sim.matrix)
                .map(|(g, row)| std::iter::once(g.to_string()).chain(row.iter().map(|v| fmt6(*v))).collect())
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_text(&ctx.output(&io.out), &to_csv(&header, &rows)?)?;
        }
        Command::Loss { io, mode, loss } => {
            let lc = loss.resolve(ctx.cfg.loss.as_ref(), 0.0)?;
            let pair: BatchPair = read_json(&ctx.input(&io.input)?)?;
            let (_, diag) = combined_loss(&pair.winner, &pair.loser, &lc, mode)?;
            write_json(&ctx.output(&io.out), &diag)?;
        }
        Command::Gradcheck {
            out,
            model,
            seed,
            tol,
            loss,
        } => {
            let lc = loss.resolve(ctx.cfg.loss.as_ref(), 1.0)?;
            let report = gradient_check(model, seed, &lc, tol)?;
            write_json(&ctx.output(&out.out), &report)?;
            if !report.pass {
                return Err(Error::OutOfRange(format!(
                    "gradient check failed at tolerance {tol}"
                )));
            }
        }
        Command::ToyTrain {
            out,
            mode,
            steps,
            lr,
            seed,
            pairs,
            dim,
            mu_gap,
            signal_scale,
            batch_size,
            summary,
            loss,
        } => {
            let lc = loss.resolve(ctx.cfg.loss.as_ref(), 1.0)?;
            let seed = ctx.seed(seed, REF_SEED);
            let data = make_synthetic_pairs_scaled(seed, pairs, dim, mu_gap, signal_scale)?;
            let tc = TrainConfig {
                steps,
                lr,
                seed,
                batch_size,
            };
            let (_, curves) = train(&ToyDenoiser::linear_zeros(dim), &data, &lc, mode, &tc)?;
            let out_path = ctx.output(&out.out);
            write_jsonl(&out_path, &curves.records)?;
            if let Some(p) = summary.or_else(|| sibling(&out_path, ".summary.json")) {
                write_json(&p, &curve_summary(&curves.records)?)?;
            }
        }
        Command::Prompts {
            out,
            n,
            seed,
            structure,
            types,
            slots,
        } => {
            let slots = match slots {
                Some(p) => read_json(&p)?,
                None => SlotLists::builtin(),
            };
            let types = parse_types(&types)?;
            let corpus = generate_corpus(&slots, &types, n, ctx.seed(seed, 0), structure)?;
            write_jsonl(&ctx.output(&out.out), &corpus)?;
        }
        Command::Simulate {
            out,
            types,
            frames,
            path,
            jitter,
            dropout,
            multi_frames,
            samples,
            seed,
        } => {
            let types = parse_types(&types)?;
            let paths: Vec<PathKind> = parse_list(&path, "path")?;
            if paths.is_empty() || samples == 0 {
                return Err(Error::InvalidConfig("need at least one path and one sample".into()));
            }
            let multi: BTreeSet<u32> = parse_list::<u32>(&multi_frames, "multi_frames")?.into_iter().collect();
            let base_seed = ctx.seed(seed, 0);
            let mut trajs = Vec::new();
            for &t in &types {
                for &p in &paths {
                    for i in 0..samples {
                        let spec = MotionSpec {
                            sample_id: format!("{t}-{}-{i:03}", path_tag(p)),
                            prompt_id: format!("prompt-{t}"),
                            dsr_type: t,
                            frames,
                            object: BBox::from_center(50.0, 50.0, 20.0, 20.0)?,
                            animal_size: (20.0, 20.0),
                            path: p,
                            jitter,
                            dropout,
                            multi_instance_frames: multi.clone(),
                            seed: base_seed.wrapping_add(i as u64),
                        };
                        trajs.push(simulate_trajectory(&spec)?);
                    }
                }
            }
            trajs.sort_by(|a, b| a.sample_id().cmp(b.sample_id()));
            write_jsonl(&ctx.output(&out.out), &trajs)?;
        }
    }
    Ok(())
}

fn path_tag(p: PathKind) -> &'static str {
    match p {
        PathKind::Linear => "linear",
        PathKind::Arc => "arc",
        PathKind::Hold => "hold",
        PathKind::Reversed => "reversed",
    }
}

fn parse_types(s: &str) -> Result<Vec<DsrType>> {
    let parts: Vec<String> = if s.contains(',') {
        s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
    } else {
        s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    };
    if parts.is_empty() {
        return Err(Error::InvalidConfig("no dsr types given".into()));
    }
    parts.iter().map(|p| p.parse()).collect()
}

fn report_error(kind: &str, message: &str) {
    let doc = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
