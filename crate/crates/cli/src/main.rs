//! Command-line front end: one binary whose subcommands cover training,
//! translation, scoring, the teacher-forced error rate, the
//! gradient-propagation probe, finite-difference gradient validation, and
//! synthetic corpus generation.
//!
//! Exit codes are stable: 0 ok, 2 input/parse/io, 3 configuration, 4 numeric.
//! Every subcommand is deterministic given its inputs and `--seed`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use deeptrans::checkpoint;
use deeptrans::config::{BeamSettings, RunConfig};
use deeptrans::corpus::{build_vocab, load_parallel, synth_task, TaskKind, Vocabulary, SPECIALS};
use deeptrans::error::io_error;
use deeptrans::evaluator;
use deeptrans::generator::{translate_corpus, WordMap};
use deeptrans::model::{ModelConfig, ModelParams, Variant};
use deeptrans::trainer::{train, TrainJob};
use deeptrans::{Error, Result};

#[derive(Parser)]
#[command(
    name = "deeptrans",
    version,
    about = "Deep recurrent sequence-to-sequence translation"
)]
struct Cli {
    /// Configuration file (key = value sections); falls back to the
    /// DEEPTRANS_CONFIG environment variable, then to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set model.cell_width=64.
    /// Repeatable; applied after the file.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,

    /// Seed override (shorthand for --set train.seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads; 0 uses one per processor.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from the configured corpora and write checkpoints.
    Train,

    /// Translate a file line by line; several checkpoints form an ensemble.
    Translate {
        /// Checkpoint files; more than one averages their predictions.
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Source text, one sentence per line.
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Beam width override.
        #[arg(long)]
        beam: Option<usize>,
        /// Replace unknown-word outputs through the configured word map
        /// using the attention alignment (attention models only).
        #[arg(long)]
        posunk: bool,
    },

    /// Corpus BLEU of a candidate file against a reference file, with
    /// optional length buckets and the full-vocabulary subset score.
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Source file; enables BLEU by source-length bucket.
        #[arg(long)]
        sources: Option<PathBuf>,
        /// Bucket width in source tokens.
        #[arg(long, default_value_t = 10)]
        bucket_width: usize,
        /// Target vocabulary; enables the subset score over references
        /// free of unknown-producing tokens.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },

    /// Teacher-forced token error rate of a checkpoint on a parallel corpus.
    Ter {
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },

    /// Compare gradient propagation with and without the linear
    /// input-projection path; emits per-layer norms as CSV.
    Probe {
        #[arg(long, default_value_t = 9)]
        depth: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 20)]
        seq_len: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Validate full-model gradients against central finite differences at
    /// a small configuration.
    Gradcheck {
        /// Random (parameters, sentence) instances per variant.
        #[arg(long, default_value_t = 5)]
        instances: usize,
        #[arg(long, default_value_t = 4)]
        cell_width: usize,
        #[arg(long, default_value_t = 4)]
        emb_dim: usize,
        #[arg(long, default_value_t = 20)]
        vocab: usize,
    },

    /// Generate a synthetic parallel corpus (copy, reverse, lexicon_swap).
    MakeTask {
        /// Task kind: copy, reverse, or lexicon_swap.
        task: String,
        #[arg(long, default_value_t = 16)]
        vocab_size: usize,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Output prefix; writes PREFIX.src and PREFIX.tgt.
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // the pool is process-global; a failure here only means it was
        // already built, which cannot happen before the first use below
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var("DEEPTRANS_CONFIG").ok().map(PathBuf::from));
    let text = match &path {
        Some(p) => fs::read_to_string(p).map_err(|e| io_error(p, &e))?,
        None => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("train.seed={seed}"));
    }
    RunConfig::parse(&text, &overrides)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, &e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_error(path, &e))
}

/// Load a vocabulary from `path`, or build one from `fallback_lines` under
/// the size budget and save it to `save_as` so later commands can reuse it.
fn vocab_or_build(
    path: &str,
    budget: usize,
    fallback_lines: &[String],
    save_as: &Path,
) -> Result<Vocabulary> {
    if !path.is_empty() {
        return Vocabulary::load(Path::new(path));
    }
    let vocab = build_vocab(
        fallback_lines.iter().map(String::as_str),
        budget.saturating_sub(SPECIALS).max(1),
    )?;
    vocab.save(save_as)?;
    Ok(vocab)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train => cmd_train(cli),
        Command::Translate { checkpoints, input, output, beam, posunk } => {
            cmd_translate(cli, checkpoints, input, output.as_deref(), *beam, *posunk)
        }
        Command::Score { candidates, references, sources, bucket_width, vocab } => {
            cmd_score(candidates, references, sources.as_deref(), *bucket_width, vocab.as_deref())
        }
        Command::Ter { checkpoint, source, target } => cmd_ter(cli, checkpoint, source, target),
        Command::Probe { depth, width, seq_len, trials, out } => {
            cmd_probe(cli, *depth, *width, *seq_len, *trials, out.as_deref())
        }
        Command::Gradcheck { instances, cell_width, emb_dim, vocab } => {
            cmd_gradcheck(cli, *instances, *cell_width, *emb_dim, *vocab)
        }
        Command::MakeTask { task, vocab_size, min_len, max_len, count, out_prefix } => {
            cmd_make_task(cli, task, *vocab_size, *min_len, *max_len, *count, out_prefix)
        }
    }
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let rc = load_config(cli)?;
    let need = |name: &str, v: &str| -> Result<PathBuf> {
        if v.is_empty() {
            Err(Error::Config(format!("paths.{name} is required for train")))
        } else {
            Ok(PathBuf::from(v))
        }
    };
    let (train_corpus, dropped) =
        load_parallel(&need("train_source", &rc.paths.train_source)?, &need("train_target", &rc.paths.train_target)?)?;
    let (dev_corpus, _) =
        load_parallel(&need("dev_source", &rc.paths.dev_source)?, &need("dev_target", &rc.paths.dev_target)?)?;

    let out_dir = PathBuf::from(&rc.paths.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, &e))?;
    let src_vocab = vocab_or_build(
        &rc.paths.src_vocab,
        rc.model.src_vocab,
        &train_corpus.source_lines(),
        &out_dir.join("src.vocab"),
    )?;
    let tgt_vocab = vocab_or_build(
        &rc.paths.tgt_vocab,
        rc.model.tgt_vocab,
        &train_corpus.target_lines(),
        &out_dir.join("tgt.vocab"),
    )?;

    // the effective model always matches the actual vocabularies; the
    // configured sizes act as budgets when vocabularies are built here
    let model = ModelConfig {
        src_vocab: src_vocab.size(),
        tgt_vocab: tgt_vocab.size(),
        ..rc.model.clone()
    };

    if dropped > 0 {
        println!("dropped {dropped} pairs with an empty side");
    }
    println!(
        "training {:?} n_e={} n_d={} columns={} d={} on {} pairs ({} dev)",
        model.variant,
        model.n_e,
        model.n_d,
        model.columns,
        model.cell_width,
        train_corpus.len(),
        dev_corpus.len()
    );

    let report = train(&TrainJob {
        model: &model,
        tc: &rc.train,
        beam: &rc.beam,
        train_corpus: &train_corpus,
        dev_corpus: &dev_corpus,
        src_vocab: &src_vocab,
        tgt_vocab: &tgt_vocab,
        out_dir: &out_dir,
    })?;

    println!(
        "done: {} steps over {} epochs, {} non-finite events, {} over-length pairs skipped",
        report.steps, report.epochs_run, report.events, report.skipped_too_long
    );
    println!("final train token accuracy {:.4}", report.final_train_accuracy);
    if let Some(best) = report.best_dev_bleu {
        println!("best dev BLEU {best:.2}");
    }
    if report.stopped_early {
        println!("stopped early: dev loss failed to improve");
    }
    for p in &report.dev_points {
        println!(
            "  step {:>6}  dev loss {:.4}  ter {:.4}  bleu {:.2}",
            p.step, p.loss, p.ter, p.bleu
        );
    }
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

fn cmd_translate(
    cli: &Cli,
    checkpoints: &[PathBuf],
    input: &Path,
    output: Option<&Path>,
    beam_width: Option<usize>,
    posunk: bool,
) -> Result<()> {
    let rc = load_config(cli)?;
    let models: Vec<ModelParams> =
        checkpoints.iter().map(|p| checkpoint::load(p)).collect::<Result<_>>()?;
    let model_refs: Vec<&ModelParams> = models.iter().collect();

    let vocab_path = |name: &str, v: &str| -> Result<PathBuf> {
        if v.is_empty() {
            Err(Error::Config(format!("paths.{name} is required for translate")))
        } else {
            Ok(PathBuf::from(v))
        }
    };
    let src_vocab = Vocabulary::load(&vocab_path("src_vocab", &rc.paths.src_vocab)?)?;
    let tgt_vocab = Vocabulary::load(&vocab_path("tgt_vocab", &rc.paths.tgt_vocab)?)?;
    for m in &models {
        if m.config.src_vocab != src_vocab.size() || m.config.tgt_vocab != tgt_vocab.size() {
            return Err(Error::Config(format!(
                "checkpoint expects vocabularies of {}x{}, files have {}x{}",
                m.config.src_vocab,
                m.config.tgt_vocab,
                src_vocab.size(),
                tgt_vocab.size()
            )));
        }
    }

    let word_map = if posunk {
        if rc.paths.word_map.is_empty() {
            return Err(Error::Config("--posunk needs paths.word_map".to_string()));
        }
        Some(WordMap::load(Path::new(&rc.paths.word_map))?)
    } else {
        None
    };

    let beam = BeamSettings { width: beam_width.unwrap_or(rc.beam.width), ..rc.beam };
    let lines = read_lines(input)?;
    let translations =
        translate_corpus(&model_refs, &src_vocab, &tgt_vocab, &lines, &beam, word_map.as_ref())?;
    match output {
        Some(path) => write_lines(path, &translations)?,
        None => {
            let stdout = std::io::stdout();
            let mut handle = stdout.lock();
            for line in &translations {
                writeln!(handle, "{line}")
                    .map_err(|e| Error::Io(format!("stdout: {e}")))?;
            }
        }
    }
    Ok(())
}

fn print_bleu(report: &evaluator::BleuReport) {
    println!("BLEU {:.2}", report.bleu);
    println!(
        "precisions {:.4}/{:.4}/{:.4}/{:.4}  brevity penalty {:.4}",
        report.precisions[0],
        report.precisions[1],
        report.precisions[2],
        report.precisions[3],
        report.brevity_penalty
    );
    println!(
        "candidate length {}  reference length {}",
        report.candidate_len, report.reference_len
    );
}

fn cmd_score(
    candidates: &Path,
    references: &Path,
    sources: Option<&Path>,
    bucket_width: usize,
    vocab: Option<&Path>,
) -> Result<()> {
    let cand_lines = read_lines(candidates)?;
    let ref_lines = read_lines(references)?;
    let report = evaluator::bleu(&cand_lines, &ref_lines)?;
    print_bleu(&report);

    if let Some(src_path) = sources {
        let src_lines = read_lines(src_path)?;
        let buckets =
            evaluator::length_bucket_bleu(&cand_lines, &ref_lines, &src_lines, bucket_width)?;
        println!("\nBLEU by source length:");
        for b in &buckets {
            match &b.report {
                Some(r) => println!(
                    "  [{:>3}, {:>3})  {:>5} sentences  BLEU {:.2}",
                    b.lo, b.hi, b.count, r.bleu
                ),
                None => println!("  [{:>3}, {:>3})  {:>5} sentences", b.lo, b.hi, b.count),
            }
        }
    }

    if let Some(vocab_path) = vocab {
        let tgt_vocab = Vocabulary::load(vocab_path)?;
        let (subset, ratio) = evaluator::unk_subset_score(&cand_lines, &ref_lines, &tgt_vocab)?;
        match subset {
            Some(r) => println!(
                "\nfully-in-vocabulary subset ({:.1}% of lines): BLEU {:.2}",
                ratio * 100.0,
                r.bleu
            ),
            None => println!("\nfully-in-vocabulary subset is empty"),
        }
    }
    Ok(())
}

fn cmd_ter(cli: &Cli, ckpt: &Path, source: &Path, target: &Path) -> Result<()> {
    let rc = load_config(cli)?;
    let model = checkpoint::load(ckpt)?;
    let need = |name: &str, v: &str| -> Result<PathBuf> {
        if v.is_empty() {
            Err(Error::Config(format!("paths.{name} is required for ter")))
        } else {
            Ok(PathBuf::from(v))
        }
    };
    let src_vocab = Vocabulary::load(&need("src_vocab", &rc.paths.src_vocab)?)?;
    let tgt_vocab = Vocabulary::load(&need("tgt_vocab", &rc.paths.tgt_vocab)?)?;
    let (corpus, dropped) = load_parallel(source, target)?;
    if dropped > 0 {
        println!("dropped {dropped} pairs with an empty side");
    }
    let pairs = deeptrans::trainer::encode_pairs(&corpus, &src_vocab, &tgt_vocab);
    let ter = evaluator::token_error_rate(&model, &pairs)?;
    println!("teacher-forced token error rate {ter:.4} over {} pairs", pairs.len());
    Ok(())
}

fn cmd_probe(
    cli: &Cli,
    depth: usize,
    width: usize,
    seq_len: usize,
    trials: usize,
    out: Option<&Path>,
) -> Result<()> {
    let pc = evaluator::ProbeConfig {
        depth,
        cell_width: width,
        seq_len,
        trials,
        seed: cli.seed.unwrap_or(1),
    };
    let report = evaluator::gradient_probe(&pc)?;
    eprintln!(
        "median bottom-layer gradient-norm ratio (with/without projection path): {:.4}",
        report.median_bottom_ratio
    );
    eprintln!("non-finite norms: {}", report.nonfinite_events);
    let csv = report.to_csv();
    match out {
        Some(path) => fs::write(path, csv).map_err(|e| io_error(path, &e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_gradcheck(
    cli: &Cli,
    instances: usize,
    cell_width: usize,
    emb_dim: usize,
    vocab: usize,
) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    let mut worst: f64 = 0.0;
    for variant in [Variant::DeepEd, Variant::DeepAtt] {
        let cfg = ModelConfig {
            variant,
            n_e: 2,
            n_d: 2,
            columns: 2,
            emb_dim,
            cell_width,
            src_vocab: vocab,
            tgt_vocab: vocab,
            p_drop: 0.0,
            ff_enabled: true,
            attention_hidden: cell_width,
            projection_factor: 4,
        };
        let out = evaluator::model_grad_check(&cfg, instances, seed)?;
        println!(
            "{variant:?}: {} instances, {} coordinates, max relative error {:.3e} (at {})",
            out.instances, out.coords, out.max_rel_err, out.worst
        );
        worst = worst.max(out.max_rel_err);
    }
    if worst > deeptrans::numerics::FD_TOLERANCE {
        return Err(Error::Numeric(format!(
            "worst relative error {worst:.3e} exceeds {}",
            deeptrans::numerics::FD_TOLERANCE
        )));
    }
    println!("gradients match finite differences (tolerance {})", deeptrans::numerics::FD_TOLERANCE);
    Ok(())
}

fn cmd_make_task(
    cli: &Cli,
    task: &str,
    vocab_size: usize,
    min_len: usize,
    max_len: usize,
    count: usize,
    out_prefix: &Path,
) -> Result<()> {
    let kind = TaskKind::parse(task)?;
    let corpus = synth_task(kind, vocab_size, min_len, max_len, count, cli.seed.unwrap_or(1))?;
    if let Some(parent) = out_prefix.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, &e))?;
        }
    }
    let src = out_prefix.with_extension("src");
    let tgt = out_prefix.with_extension("tgt");
    corpus.save(&src, &tgt)?;
    println!(
        "wrote {count} {task} pairs over {vocab_size} tokens to {} / {}",
        src.display(),
        tgt.display()
    );
    Ok(())
}
