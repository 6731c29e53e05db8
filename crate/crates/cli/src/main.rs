use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use induction_lens::csvio;
use induction_lens::reference;
use induction_lens::report::{self, Selection};
use induction_lens::svg;
use induction_lens::sweep::{run_sweep, SweepManifest};
use induction_lens_core::corpus::{
    self, gen_dependency_corpus, gen_kg_corpus, load_corpus, save_corpus, strip_function_words,
    substitute_entities, Relation,
};
use induction_lens_core::icl::{
    self, gen_instances, LossReductionSpec, TaskKind, TaskPools,
};
use induction_lens_core::metrics::{
    self, AnalysisConfig, AttentionSource, HeadOccurrenceTable, RelationIndexTable,
};
use induction_lens_core::model::{load_weights, ModelConfig, ModelWeights, Variant};
use induction_lens_core::probe;
use induction_lens_core::trainer::{self, grad_check, TrainConfig};
use induction_lens_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "induction-lens",
    version,
    about = "Train desk-scale transformers and analyze attention-head circuits, relation induction, and in-context learning"
)]
struct Cli {
    /// Worker threads (also INDUCTION_LENS_THREADS); deterministic mode
    /// forces 1.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sequential execution and byte-stable outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an annotated corpus file (JSONL).
    BuildCorpus {
        #[arg(long, value_parser = ["dep", "kg", "mixed"])]
        kind: String,
        /// Documents to generate (per component for mixed).
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Keep KG passages raw (skip letter substitution and stopword
        /// removal).
        #[arg(long)]
        raw: bool,
    },
    /// Train the full-variant model on a corpus file.
    Train(TrainArgs),
    /// Check analytic gradients against central finite differences on
    /// tiny models.
    GradCheck {
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Head-level analyses on a checkpoint.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// In-context-learning measurements on a checkpoint.
    Icl {
        #[command(subcommand)]
        what: IclCommand,
    },
    /// Attention-and-words probing classifier.
    Probe {
        #[command(subcommand)]
        what: ProbeCommand,
    },
    /// Run a checkpoint sweep from a JSON manifest.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Render figures from CSV artifacts.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus JSONL; generated internally for --preset reference when
    /// omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// "reference" selects the desk-scale recipe (L=4 H=4 d=128, ~5M
    /// tokens).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 1337)]
    seed: u64,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_tokens: Option<usize>,
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    floor_lr: Option<f64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    clip: Option<f64>,
    /// Resume from ckpt_<step>.ilw in the output directory.
    #[arg(long)]
    resume: Option<u64>,
    /// Model shape overrides (ignored with --preset reference).
    #[arg(long, default_value_t = 2)]
    n_layers: usize,
    #[arg(long, default_value_t = 2)]
    n_heads: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 128)]
    max_seq_len: usize,
    #[arg(long, value_parser = ["attention-only", "full"], default_value = "full")]
    variant: String,
}

#[derive(Args, Clone)]
struct AnalyzeOpts {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_TAU)]
    tau: f64,
    /// Keep only the argmax condition of the gate.
    #[arg(long)]
    no_tau_gate: bool,
    /// Softmax over the full vocabulary, then extract prefix tokens.
    #[arg(long)]
    fullvocab_softmax: bool,
    #[arg(long, default_value_t = 9)]
    baseline_pos: usize,
    #[arg(long, value_parser = ["forward-capture", "circuit"], default_value = "forward-capture")]
    attention_source: String,
    /// Drop the 1/sqrt(d_head) scaling in circuit attention.
    #[arg(long)]
    no_qk_scale: bool,
    #[arg(long)]
    normalize_embeddings: bool,
    /// Count undefined scores as zero instead of excluding them.
    #[arg(long)]
    undefined_as_zero: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl AnalyzeOpts {
    fn config(&self) -> Result<AnalysisConfig> {
        let cfg = AnalysisConfig {
            tau: self.tau,
            require_tau_gate: !self.no_tau_gate,
            attention_source: match self.attention_source.as_str() {
                "circuit" => AttentionSource::Circuit,
                _ => AttentionSource::ForwardCapture,
            },
            fullvocab_softmax: self.fullvocab_softmax,
            baseline_pos: self.baseline_pos,
            undefined_as_zero: self.undefined_as_zero,
            normalize_embeddings: self.normalize_embeddings,
            qk_scale: !self.no_qk_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Average relation index per head for one relation.
    RelationIndex {
        #[command(flatten)]
        opts: AnalyzeOpts,
        #[arg(long)]
        relation: String,
        /// Score the reverse triplets instead.
        #[arg(long)]
        reverse: bool,
    },
    /// Control table with every tail forced to a fixed early position.
    Baseline {
        #[command(flatten)]
        opts: AnalyzeOpts,
    },
    /// Reverse-direction relation table (same as relation-index
    /// --reverse).
    Reverse {
        #[command(flatten)]
        opts: AnalyzeOpts,
        #[arg(long)]
        relation: String,
    },
    /// Occurrences of each head having the largest per-triplet mean.
    Grouping {
        #[command(flatten)]
        opts: AnalyzeOpts,
        #[arg(long)]
        relation: String,
    },
    /// Histogram of attention ratios at head-token positions.
    TauDist {
        #[command(flatten)]
        opts: AnalyzeOpts,
    },
    /// Copying score of every head over a token sample.
    Copying {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        sample_size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Prefix-matching score of every head on doubled random sequences.
    PrefixMatch {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        n_seqs: usize,
        #[arg(long, default_value_t = 64)]
        seq_len: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum IclCommand {
    /// Format and prediction accuracy over a shot grid.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,20")]
        shots: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest shot count reaching 80% format accuracy.
    MinShots {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long, default_value_t = 20)]
        cap: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Windowed loss difference (later minus early).
    LossReduction {
        #[arg(long)]
        ckpt: PathBuf,
        /// Corpus JSONL of texts; generated from the seed when omitted.
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        i: usize,
        #[arg(long, default_value_t = 50)]
        j: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ProbeCommand {
    Train {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 2.0)]
        lr: f64,
        /// Use the first N sentences for training.
        #[arg(long, default_value_t = 200)]
        take: usize,
    },
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Skip the first N sentences (training split).
        #[arg(long, default_value_t = 200)]
        skip: usize,
        #[arg(long, default_value_t = 100)]
        take: usize,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Layers-by-heads heatmap from a table CSV.
    Heatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-head metric curves over checkpoints from sweep CSVs.
    Curves {
        /// Files or directories of sweep-cell CSVs.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value = "all")]
        select: String,
        /// Color-reference step (defaults to the last step).
        #[arg(long)]
        ref_step: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("INDUCTION_LENS_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&n| n > 0);
    let threads = if cli.deterministic { Some(1) } else { threads };
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) | Error::Diverged { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildCorpus {
            kind,
            n,
            seed,
            out,
            raw,
        } => {
            let docs = match kind.as_str() {
                "dep" => gen_dependency_corpus(seed, n)?,
                "kg" => {
                    let mut docs = Vec::new();
                    for p in gen_kg_corpus(seed, n)? {
                        if raw {
                            docs.push(p);
                        } else {
                            let (stripped, _) = strip_function_words(&substitute_entities(&p)?);
                            docs.push(stripped);
                        }
                    }
                    docs
                }
                _ => reference::build_mixed_corpus(
                    seed,
                    reference::MixSpec {
                        n_dependency: n,
                        n_kg: n / 6,
                        n_format: n / 25,
                    },
                )?,
            };
            save_corpus(&docs, &out)?;
            println!("wrote {} documents to {}", docs.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Train(args) => {
            let reference_preset = args.preset.as_deref() == Some("reference");
            let model_config = if reference_preset {
                reference::reference_model_config()
            } else {
                ModelConfig {
                    n_layers: args.n_layers,
                    n_heads: args.n_heads,
                    d_model: args.d_model,
                    d_head: args.d_model / args.n_heads.max(1),
                    vocab_size: corpus::Vocab::standard().len(),
                    max_seq_len: args.max_seq_len,
                    variant: if args.variant == "attention-only" {
                        Variant::AttentionOnly
                    } else {
                        Variant::Full
                    },
                }
            };
            let base = if reference_preset {
                reference::reference_train_config(args.seed)
            } else {
                TrainConfig {
                    seed: args.seed,
                    batch_tokens: 4 * model_config.max_seq_len,
                    warmup_steps: 20,
                    peak_lr: 1e-3,
                    floor_lr: 1e-4,
                    total_steps: 200,
                    checkpoint_interval: 50,
                    grad_clip: 1.0,
                }
            };
            let config = TrainConfig {
                seed: args.seed,
                batch_tokens: args.batch_tokens.unwrap_or(base.batch_tokens),
                warmup_steps: args.warmup.unwrap_or(base.warmup_steps),
                peak_lr: args.peak_lr.unwrap_or(base.peak_lr),
                floor_lr: args.floor_lr.unwrap_or(base.floor_lr),
                total_steps: args.steps.unwrap_or(base.total_steps),
                checkpoint_interval: args.interval.unwrap_or(base.checkpoint_interval),
                grad_clip: args.clip.unwrap_or(base.grad_clip),
            };
            let docs = match &args.corpus {
                Some(path) => load_corpus(path)?,
                None if reference_preset => {
                    reference::build_mixed_corpus(args.seed, reference::MixSpec::reference())?
                }
                None => {
                    return Err(Error::Input(
                        "either --corpus or --preset reference is required".into(),
                    ))
                }
            };
            let sequences = reference::pack_corpus(&docs, model_config.max_seq_len);
            println!(
                "training {} steps x {} tokens on {} packed sequences (|V|={})",
                config.total_steps,
                config.batch_tokens,
                sequences.len(),
                model_config.vocab_size
            );
            let report = trainer::train_with_resume(
                &config,
                model_config,
                &sequences,
                &args.out_dir,
                args.resume,
            )?;
            let (first, last) = (
                report.loss_log.first().map(|x| x.1).unwrap_or(f64::NAN),
                report.loss_log.last().map(|x| x.1).unwrap_or(f64::NAN),
            );
            println!(
                "done: loss {first:.4} -> {last:.4}; {} checkpoints in {}",
                report.checkpoints.len(),
                args.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::GradCheck { seed, epsilon } => {
            let batch = vec![vec![0, 3, 7, 1, 4, 2, 6, 5], vec![0, 2, 2, 5, 1, 7, 3, 4]];
            let mut worst = 0.0f64;
            for variant in [Variant::AttentionOnly, Variant::Full] {
                let cfg = ModelConfig {
                    n_layers: 2,
                    n_heads: 2,
                    d_model: 16,
                    d_head: 8,
                    vocab_size: 9,
                    max_seq_len: 8,
                    variant,
                };
                let w = ModelWeights::random(cfg, seed)?;
                let r = grad_check(&w, &batch, epsilon)?;
                println!(
                    "{variant:?}: max relative error {:.3e} over {} parameters",
                    r.max_rel_err, r.checked
                );
                worst = worst.max(r.max_rel_err);
            }
            if worst >= 1e-3 {
                return Err(Error::Numeric(format!(
                    "gradient check failed: max relative error {worst:.3e}"
                )));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Analyze { what } => {
            analyze(what)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Icl { what } => {
            run_icl(what)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Probe { what } => {
            run_probe(what)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Sweep { manifest } => {
            let text = std::fs::read_to_string(&manifest)?;
            let mut m: SweepManifest = serde_json::from_str(&text)?;
            if cli.deterministic {
                m.deterministic = true;
            }
            let outcome = run_sweep(&m)?;
            println!(
                "sweep: {} cells ({} run, {} skipped, {} failed); summary at {}",
                outcome.cells_total,
                outcome.cells_run,
                outcome.cells_skipped,
                outcome.failures.len(),
                outcome.summary_path.display()
            );
            if outcome.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }

        Command::Report { what } => {
            match what {
                ReportCommand::Heatmap { input, out } => {
                    let grid = report::heatmap_from_csv(&input)?;
                    svg::emit_heatmap(&grid, &out)?;
                    println!("wrote {}", out.display());
                }
                ReportCommand::Curves {
                    input,
                    metric,
                    select,
                    ref_step,
                    out,
                } => {
                    let selection: Selection = select.parse()?;
                    let series = report::curves_from_sweep(&input, &metric, selection)?;
                    let ref_step = ref_step.unwrap_or_else(|| report::last_step(&series));
                    svg::emit_curves(&series, &metric, ref_step, 0, &out)?;
                    println!("wrote {}", out.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_index_table(table: &RelationIndexTable, out: &PathBuf, seed: u64) -> Result<()> {
    let mut rows = Vec::new();
    for l in 0..table.n_layers {
        for h in 0..table.n_heads {
            let mean = table.mean(l, h).map(|m| m.to_string()).unwrap_or_default();
            rows.push(format!("{l},{h},{mean},{}", table.count(l, h)));
        }
    }
    let direction = if table.reversed { "reverse" } else { "forward" };
    csvio::write_csv(
        out,
        "relation-table-v1",
        seed,
        &[
            ("relation", table.relation.clone()),
            ("direction", direction.into()),
        ],
        "layer,head,mean,count",
        &rows,
    )
}

fn write_occurrence_table(table: &HeadOccurrenceTable, out: &PathBuf, seed: u64) -> Result<()> {
    let mut rows = Vec::new();
    for l in 0..table.n_layers {
        for h in 0..table.n_heads {
            rows.push(format!("{l},{h},{}", table.count(l, h)));
        }
    }
    csvio::write_csv(
        out,
        "occurrence-table-v1",
        seed,
        &[("relation", table.relation.clone())],
        "layer,head,count",
        &rows,
    )
}

fn analyze(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::RelationIndex {
            opts,
            relation,
            reverse,
        } => index_table(opts, &relation, reverse),
        AnalyzeCommand::Reverse { opts, relation } => index_table(opts, &relation, true),
        AnalyzeCommand::Baseline { opts } => {
            let config = opts.config()?;
            let weights = load_weights(&opts.ckpt)?;
            let corpus = load_corpus(&opts.corpus)?;
            let table = metrics::baseline_table(&weights, &corpus, &config)?;
            print_table_summary(&table);
            if let Some(out) = &opts.out {
                write_index_table(&table, out, opts.seed)?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        AnalyzeCommand::Grouping { opts, relation } => {
            let rel: Relation = relation.parse()?;
            let config = opts.config()?;
            let weights = load_weights(&opts.ckpt)?;
            let corpus = load_corpus(&opts.corpus)?;
            let table = metrics::head_grouping(&weights, &corpus, rel, &config)?;
            println!(
                "grouping {rel}: {} triplets attributed",
                table.total()
            );
            if let Some(out) = &opts.out {
                write_occurrence_table(&table, out, opts.seed)?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        AnalyzeCommand::TauDist { opts } => {
            let config = opts.config()?;
            let weights = load_weights(&opts.ckpt)?;
            let corpus = load_corpus(&opts.corpus)?;
            let hist = metrics::tau_ratio_distribution(&weights, &corpus, &config)?;
            println!(
                "{} ratios; fraction above tau={}: {:.4}; overflow (>10): {}",
                hist.total(),
                config.tau,
                hist.fraction_above(config.tau),
                hist.overflow
            );
            if let Some(out) = &opts.out {
                let mut rows: Vec<String> = hist
                    .bins
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        format!(
                            "{:.1},{:.1},{c}",
                            i as f64 * 0.1,
                            (i + 1) as f64 * 0.1
                        )
                    })
                    .collect();
                rows.push(format!("10.0,inf,{}", hist.overflow));
                csvio::write_csv(
                    out,
                    "tau-histogram-v1",
                    opts.seed,
                    &[(
                        "frac_above_tau",
                        format!("{}", hist.fraction_above(config.tau)),
                    )],
                    "bin_lo,bin_hi,count",
                    &rows,
                )?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        AnalyzeCommand::Copying {
            ckpt,
            out,
            sample_size,
            seed,
        } => {
            let weights = load_weights(&ckpt)?;
            let mut sample = induction_lens::sweep::copying_sample(&weights, seed);
            sample.truncate(sample_size.max(16));
            let mut rows = Vec::new();
            for l in 0..weights.config.n_layers {
                for h in 0..weights.config.n_heads {
                    let s = metrics::copying_score(&weights, l, h, &sample)?;
                    println!(
                        "L{l}H{h}: copying {} ({}/{} defined)",
                        s.mean.map(|m| format!("{m:.4}")).unwrap_or("-".into()),
                        s.defined,
                        s.total
                    );
                    rows.push(format!(
                        "{l},{h},{},{}",
                        s.mean.map(|m| m.to_string()).unwrap_or_default(),
                        s.defined
                    ));
                }
            }
            if let Some(out) = out {
                csvio::write_csv(
                    &out,
                    "copying-table-v1",
                    seed,
                    &[],
                    "layer,head,mean,count",
                    &rows,
                )?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        AnalyzeCommand::PrefixMatch {
            ckpt,
            out,
            n_seqs,
            seq_len,
            seed,
        } => {
            let weights = load_weights(&ckpt)?;
            let seq_len = seq_len
                .min(weights.config.max_seq_len / 2)
                .min(weights.config.vocab_size);
            let table = metrics::prefix_matching_table(&weights, n_seqs, seq_len, seed)?;
            let mut rows = Vec::new();
            for l in 0..weights.config.n_layers {
                for h in 0..weights.config.n_heads {
                    let s = table[l * weights.config.n_heads + h];
                    println!("L{l}H{h}: prefix matching {s:.4}");
                    rows.push(format!("{l},{h},{s},{n_seqs}"));
                }
            }
            if let Some(out) = out {
                csvio::write_csv(
                    &out,
                    "prefix-table-v1",
                    seed,
                    &[("seq_len", seq_len.to_string())],
                    "layer,head,mean,count",
                    &rows,
                )?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
    }
}

fn index_table(opts: AnalyzeOpts, relation: &str, reversed: bool) -> Result<()> {
    let rel: Relation = relation.parse()?;
    let config = opts.config()?;
    let weights = load_weights(&opts.ckpt)?;
    let corpus = load_corpus(&opts.corpus)?;
    let table = if reversed {
        metrics::reverse_table(&weights, &corpus, rel, &config)?
    } else {
        metrics::relation_index_table(&weights, &corpus, rel, &config)?
    };
    print_table_summary(&table);
    if let Some(out) = &opts.out {
        write_index_table(&table, out, opts.seed)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_table_summary(table: &RelationIndexTable) {
    let direction = if table.reversed { "reverse" } else { "forward" };
    println!(
        "relation {} ({direction}): {} contributions",
        table.relation,
        table.total_count()
    );
    for l in 0..table.n_layers {
        let row: Vec<String> = (0..table.n_heads)
            .map(|h| {
                table
                    .mean(l, h)
                    .map(|m| format!("{m:.3}"))
                    .unwrap_or_else(|| "  -  ".into())
            })
            .collect();
        println!("  L{l}: {}", row.join(" "));
    }
}

fn run_icl(cmd: IclCommand) -> Result<()> {
    match cmd {
        IclCommand::Eval {
            ckpt,
            task,
            shots,
            trials,
            seed,
            out,
        } => {
            let weights = load_weights(&ckpt)?;
            let kind = TaskKind::parse(&task)?;
            let pools = TaskPools::default_for(kind);
            let step = step_from_path(&ckpt);
            let mut rows = Vec::new();
            for &s in &shots {
                let instances = gen_instances(kind, &pools, s, trials, seed)?;
                let (fmt, pred) = icl::eval_format_and_prediction(&weights, &instances)?;
                println!("{task} shots={s}: format {fmt:.3}, prediction {pred:.3}");
                rows.push(format!("{step},{task},{s},{fmt},{pred},{trials}"));
            }
            if let Some(out) = out {
                csvio::write_csv(
                    &out,
                    "icl-results-v1",
                    seed,
                    &[],
                    "step,task,shots,format_acc,pred_acc,n",
                    &rows,
                )?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        IclCommand::MinShots {
            ckpt,
            task,
            threshold,
            cap,
            trials,
            seed,
        } => {
            let weights = load_weights(&ckpt)?;
            let kind = TaskKind::parse(&task)?;
            let pools = TaskPools::default_for(kind);
            let shots =
                icl::min_shots_for_format(&weights, kind, &pools, threshold, cap, trials, seed)?;
            println!("{task}: minimum shots for format accuracy > {threshold}: {shots}");
            Ok(())
        }
        IclCommand::LossReduction {
            ckpt,
            texts,
            i,
            j,
            seed,
        } => {
            let weights = load_weights(&ckpt)?;
            let spec = LossReductionSpec::new(i, j)?;
            let window = weights.config.max_seq_len;
            let texts: Vec<Vec<u32>> = match texts {
                Some(path) => load_corpus(&path)?
                    .iter()
                    .map(|s| {
                        let mut t = s.tokens.clone();
                        t.truncate(window);
                        t
                    })
                    .collect(),
                None => reference::eval_texts(seed, 100, window)?,
            };
            let outcome = icl::loss_reduction(&weights, &texts, spec)?;
            println!(
                "loss reduction (i={i}, j={j}): {:.6} over {} texts ({} skipped)",
                outcome.mean_diff, outcome.used, outcome.skipped
            );
            Ok(())
        }
    }
}

fn run_probe(cmd: ProbeCommand) -> Result<()> {
    match cmd {
        ProbeCommand::Train {
            ckpt,
            corpus,
            out,
            epochs,
            lr,
            take,
        } => {
            let weights = load_weights(&ckpt)?;
            let window = weights.config.max_seq_len;
            let sentences: Vec<_> = load_corpus(&corpus)?
                .into_iter()
                .filter(|s| s.len() <= window && !s.triplets.is_empty())
                .take(take)
                .collect();
            let model = probe::train_probe(&weights, &sentences, epochs, lr)?;
            let loss = probe::probe_loss(&model, &weights, &sentences)?;
            probe::save_probe(&model, &out)?;
            println!(
                "trained probe on {} sentences (loss {loss:.4}); wrote {}",
                sentences.len(),
                out.display()
            );
            Ok(())
        }
        ProbeCommand::Eval {
            probe: probe_path,
            ckpt,
            corpus,
            skip,
            take,
        } => {
            let weights = load_weights(&ckpt)?;
            let model = probe::load_probe(&probe_path)?;
            let window = weights.config.max_seq_len;
            let sentences: Vec<_> = load_corpus(&corpus)?
                .into_iter()
                .filter(|s| s.len() <= window && !s.triplets.is_empty())
                .skip(skip)
                .take(take)
                .collect();
            let acc = probe::eval_probe(&model, &weights, &sentences)?;
            let chance = probe::chance_rate(&sentences);
            println!(
                "probe accuracy {acc:.3} on {} sentences (chance {chance:.3})",
                sentences.len()
            );
            Ok(())
        }
    }
}

fn step_from_path(path: &PathBuf) -> u64 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("ckpt_"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}
