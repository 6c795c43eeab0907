//! `syllab`: corpus statistics, synthesis, splitting, training, evaluation,
//! syllabification and model comparison.

mod manifest;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use syllab_core::alphabet::normalize;
use syllab_core::baseline::{build_inventory, segment, SyllableInventory};
use syllab_core::corpus::{corpus_stats, format_corpus, parse_corpus, split, SplitSpec, SyllabifiedWord};
use syllab_core::corpus::{synthesize_corpus, SynthesisConfig};
use syllab_core::eval::{compare_models, word_accuracy, EvalReport};
use syllab_core::model::Syllabifier;
use syllab_core::nn::checkpoint::MAGIC;
use syllab_core::nn::tagger::ModelKind;
use syllab_core::nn::train::{metrics_csv, prepare, train_tagger_with, EpochMetrics, TrainConfig};
use syllab_core::nn::vocab::Vocabulary;
use syllab_core::phonotactics::{positional_histogram, ranked, syllable_type_histogram, top_syllables};
use syllab_core::seq2seq::{prepare_seq2seq, train_seq2seq};
use syllab_core::tagging::{encode_tags, Tag};
use syllab_core::Error as CoreError;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "syllab", version, about = "Tenyidie syllabification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics: length and CV histograms, ranked syllables.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        top: usize,
    },
    /// Generate a synthetic corpus from a syllable frequency table.
    Synth {
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        words: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle and split a corpus into train/valid/test files.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "80:10:10")]
        split: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a corpus, train a model and score it on the test part.
    Train(TrainArgs),
    /// Score a checkpoint or inventory against a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Attention traces written per class (errors, correct) for seq2seq.
        #[arg(long, default_value_t = 5)]
        traces: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
    },
    /// Syllabify words read from standard input, one per line.
    Syllabify {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare evaluation reports (report.json) over one test set.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// lstm, blstm, blstm-crf, seq2seq or baseline.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Defaults to 128, or 16 for seq2seq.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "80:10:10")]
    split: String,
    #[arg(long, default_value_t = 128)]
    embedding_dim: usize,
    /// Defaults to 256, or 512 for seq2seq.
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err.chain().any(|e| e.downcast_ref::<CoreError>().is_some_and(CoreError::is_validation));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats { corpus, out, top } => cmd_stats(&corpus, &out, top),
        Command::Synth { synth_config, words, seed, out } => cmd_synth(synth_config.as_deref(), words, seed, &out),
        Command::Split { corpus, split, seed, out } => cmd_split(&corpus, &split, seed, &out),
        Command::Train(args) => cmd_train(&args),
        Command::Eval { checkpoint, corpus, out, traces, batch_size } => {
            cmd_eval(&checkpoint, &corpus, &out, traces, batch_size)
        }
        Command::Syllabify { checkpoint } => cmd_syllabify(&checkpoint),
        Command::Compare { reports, out } => cmd_compare(&reports, &out),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<SyllabifiedWord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_corpus(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn counts_csv(header: &str, rows: &[(String, usize)]) -> String {
    let mut s = format!("{header}\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn cmd_stats(corpus: &Path, out: &Path, top: usize) -> Result<()> {
    let started = Instant::now();
    let words = read_corpus(corpus)?;
    let stats = corpus_stats(&words)?;
    create_out(out)?;
    let mut lengths = std::collections::BTreeMap::<usize, usize>::new();
    for w in &words {
        *lengths.entry(w.len_chars()).or_default() += 1;
    }
    let syllables: usize = words.iter().map(SyllabifiedWord::syllable_count).sum();
    let summary = json!({
        "word_count": stats.word_count,
        "min_len": stats.min_len,
        "max_len": stats.max_len,
        "mean_len": stats.mean_len,
        "syllable_count": syllables,
    });
    let mut outputs = vec![write(&out.join("stats.json"), serde_json::to_string_pretty(&summary)?)?];
    let mut len_csv = String::from("length,count\n");
    for (l, c) in &lengths {
        len_csv.push_str(&format!("{l},{c}\n"));
    }
    outputs.push(write(&out.join("length_histogram.csv"), len_csv)?);
    let cv = ranked(&syllable_type_histogram(&words));
    outputs.push(write(&out.join("cv_histogram.csv"), counts_csv("template,count", &cv))?);
    let pos = positional_histogram(&words);
    let mut pos_csv = String::from("position,template,count\n");
    for (name, hist) in [("beginning", &pos.beginning), ("middle", &pos.middle), ("end", &pos.end)] {
        for (t, c) in ranked(hist) {
            pos_csv.push_str(&format!("{name},{t},{c}\n"));
        }
    }
    outputs.push(write(&out.join("positional_histogram.csv"), pos_csv)?);
    let mut top_csv = String::from("rank,syllable,count\n");
    for (i, (s, c)) in top_syllables(&words, top).iter().enumerate() {
        top_csv.push_str(&format!("{},{s},{c}\n", i + 1));
    }
    outputs.push(write(&out.join("top_syllables.csv"), top_csv)?);
    println!(
        "{} words, {} syllables, length {}..{} (mean {:.2})",
        stats.word_count, syllables, stats.min_len, stats.max_len, stats.mean_len
    );
    RunManifest::new("stats", json!({ "top": top }), None, vec![corpus.into()], outputs, started).write(out)
}

fn cmd_synth(config: Option<&Path>, words: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthesisConfig>(&text)
                .map_err(|e| CoreError::InvalidSynthesis(format!("{}: {e}", p.display())))?
        }
        None => SynthesisConfig::published(words, 0),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let corpus = synthesize_corpus(&cfg)?;
    create_out(out)?;
    let path = write(&out.join("corpus.txt"), format_corpus(&corpus))?;
    println!("{} words written to {}", corpus.len(), path.display());
    let inputs = config.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    RunManifest::new("synth", serde_json::to_value(&cfg)?, Some(cfg.seed), inputs, vec![path], started).write(out)
}

fn write_split(words: &[SyllabifiedWord], spec: &SplitSpec, out: &Path) -> Result<(Vec<PathBuf>, [Vec<SyllabifiedWord>; 3])> {
    let parts = split(words, spec)?;
    create_out(out)?;
    let mut paths = Vec::new();
    for (name, part) in [("train", &parts.train), ("valid", &parts.valid), ("test", &parts.test)] {
        paths.push(write(&out.join(format!("{name}.txt")), format_corpus(part))?);
    }
    Ok((paths, [parts.train, parts.valid, parts.test]))
}

fn cmd_split(corpus: &Path, ratio: &str, seed: u64, out: &Path) -> Result<()> {
    let started = Instant::now();
    let words = read_corpus(corpus)?;
    let spec = SplitSpec::parse_ratio(ratio, seed)?;
    let (paths, [train, valid, test]) = write_split(&words, &spec, out)?;
    println!("train {} / valid {} / test {}", train.len(), valid.len(), test.len());
    RunManifest::new("split", json!({ "split": ratio }), Some(seed), vec![corpus.into()], paths, started).write(out)
}

/// Tag-level curves as CSV; the JSON copy adds validation word accuracy.
fn write_metrics(out: &Path, history: &[EpochMetrics]) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(&out.join("metrics.csv"), metrics_csv(history))?,
        write(&out.join("metrics.json"), serde_json::to_string_pretty(history)?)?,
    ])
}

fn print_epoch(m: &EpochMetrics) {
    eprintln!(
        "epoch {:>3}  train loss {:.4} acc {:.4}  valid loss {:.4} acc {:.4} word {:.4}",
        m.epoch, m.train_loss, m.train_acc, m.valid_loss, m.valid_acc, m.valid_word_acc
    );
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let kind = (args.model != "baseline").then(|| args.model.parse::<ModelKind>()).transpose()?;
    let words = read_corpus(&args.corpus)?;
    let spec = SplitSpec::parse_ratio(&args.split, args.seed)?;
    let seq2seq = kind == Some(ModelKind::Seq2seq);
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size.unwrap_or(if seq2seq { 16 } else { 128 }),
        learning_rate: args.lr,
        embedding_dim: args.embedding_dim,
        hidden_dim: args.hidden_dim.unwrap_or(if seq2seq { 512 } else { 256 }),
        seed: args.seed,
    };
    if kind.is_some() {
        cfg.validate()?;
    }
    let (mut outputs, [train, valid, test]) = write_split(&words, &spec, &args.out)?;
    let vocab = Vocabulary::standard();
    let test_preds: Vec<Vec<Tag>> = match kind {
        None => {
            let inventory = build_inventory(&train)?;
            let lines: String = inventory.iter().map(|s| format!("{s}\n")).collect();
            outputs.push(write(&args.out.join("inventory.txt"), lines)?);
            test.iter().map(|w| baseline_tags(&inventory, w.surface())).collect::<Result<_>>()?
        }
        Some(kind) => {
            let model = if seq2seq {
                let outcome = train_seq2seq(
                    &prepare_seq2seq(&train, &vocab)?,
                    &prepare_seq2seq(&valid, &vocab)?,
                    &cfg,
                    print_epoch,
                )?;
                outputs.extend(write_metrics(&args.out, &outcome.history)?);
                eprintln!("best epoch {}", outcome.best_epoch);
                Syllabifier::Seq2Seq(outcome.model)
            } else {
                let outcome =
                    train_tagger_with(kind, &prepare(&train, &vocab)?, &prepare(&valid, &vocab)?, &cfg, print_epoch)?;
                outputs.extend(write_metrics(&args.out, &outcome.history)?);
                eprintln!("best epoch {}", outcome.best_epoch);
                Syllabifier::Tagger(outcome.model)
            };
            let path = args.out.join("model.ckpt");
            model.save(&vocab, &path)?;
            outputs.push(path);
            let surfaces: Vec<&str> = test.iter().map(SyllabifiedWord::surface).collect();
            model.predict(&vocab, &surfaces, cfg.batch_size)?.into_iter().map(|p| p.tags).collect()
        }
    };
    let report = word_accuracy(&test_preds, &test)?.with_model(&args.model);
    outputs.push(write(&args.out.join("test_report.json"), report.to_json()?)?);
    println!("test word accuracy {:.2}% ({}/{})", report.accuracy, report.correct, report.total);
    let config = json!({
        "model": args.model,
        "split": args.split,
        "train": cfg,
        "sizes": [train.len(), valid.len(), test.len()],
    });
    RunManifest::new("train", config, Some(args.seed), vec![args.corpus.clone()], outputs, started).write(&args.out)
}

/// Baseline tags for one word; an unparseable word yields no tags.
fn baseline_tags(inventory: &SyllableInventory, surface: &str) -> Result<Vec<Tag>> {
    Ok(match segment(surface, inventory)?.word() {
        Some(w) => encode_tags(w)?.tags().to_vec(),
        None => Vec::new(),
    })
}

enum Loaded {
    Neural(Syllabifier, Vocabulary),
    Baseline(SyllableInventory),
}

fn load_model(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        let (model, vocab) = Syllabifier::load(path).with_context(|| format!("loading {}", path.display()))?;
        return Ok(Loaded::Neural(model, vocab));
    }
    let text = String::from_utf8(bytes).context("inventory is not UTF-8")?;
    let entries = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(normalize);
    Ok(Loaded::Baseline(SyllableInventory::new(entries)?))
}

fn cmd_eval(checkpoint: &Path, corpus: &Path, out: &Path, k: usize, batch_size: usize) -> Result<()> {
    let started = Instant::now();
    let golds = read_corpus(corpus)?;
    let surfaces: Vec<&str> = golds.iter().map(SyllabifiedWord::surface).collect();
    create_out(out)?;
    let mut outputs = Vec::new();
    let (name, report) = match load_model(checkpoint)? {
        Loaded::Baseline(inv) => {
            let preds = surfaces.iter().map(|s| baseline_tags(&inv, s)).collect::<Result<Vec<_>>>()?;
            ("baseline".to_string(), word_accuracy(&preds, &golds)?)
        }
        Loaded::Neural(model, vocab) => {
            let preds = model.predict(&vocab, &surfaces, batch_size)?;
            let tags: Vec<Vec<Tag>> = preds.iter().map(|p| p.tags.clone()).collect();
            let report = word_accuracy(&tags, &golds)?;
            if preds.iter().any(|p| p.trace.is_some()) {
                let dir = out.join("traces");
                create_out(&dir)?;
                let (mut wrong, mut right) = (0, 0);
                for (gold, pred) in golds.iter().zip(&preds) {
                    let correct = pred.tags == encode_tags(gold)?.tags();
                    let (label, n) = if correct { ("correct", &mut right) } else { ("error", &mut wrong) };
                    if *n < k {
                        let trace = pred.trace.as_ref().expect("seq2seq trace");
                        let path = dir.join(format!("{label}_{}_{}.csv", *n + 1, pred.surface));
                        outputs.push(write(&path, trace.to_csv())?);
                    }
                    *n += 1;
                }
            }
            (model.kind().to_string(), report)
        }
    };
    let report = report.with_model(&name);
    outputs.push(write(&out.join("report.json"), report.to_json()?)?);
    outputs.push(write(&out.join("summary.csv"), report.summary_csv())?);
    outputs.push(write(&out.join("errors.csv"), report.errors_csv())?);
    println!("{name}: {:.2}% ({}/{})", report.accuracy, report.correct, report.total);
    let inputs = vec![checkpoint.into(), corpus.into()];
    RunManifest::new("eval", json!({ "traces": k, "batch_size": batch_size }), None, inputs, outputs, started).write(out)
}

fn cmd_syllabify(checkpoint: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let words: Vec<String> = io::stdin()
        .lock()
        .lines()
        .collect::<io::Result<Vec<_>>>()?
        .iter()
        .map(|l| normalize(l.trim()))
        .filter(|l| !l.is_empty())
        .collect();
    let lines: Vec<String> = match &model {
        Loaded::Baseline(inv) => words
            .iter()
            .map(|w| Ok(segment(w, inv)?.word().map_or_else(|| format!("?{w}"), SyllabifiedWord::to_line)))
            .collect::<Result<_>>()?,
        Loaded::Neural(model, vocab) => {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            model
                .predict(vocab, &refs, 128)?
                .into_iter()
                .map(|p| p.word.as_ref().map_or_else(|| format!("?{}", p.surface), SyllabifiedWord::to_line))
                .collect()
        }
    };
    let mut stdout = io::stdout().lock();
    for line in lines {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], out: &Path) -> Result<()> {
    let started = Instant::now();
    let reports = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<EvalReport>(&text)
                .map_err(|e| CoreError::Config(format!("{}: not an evaluation report: {e}", p.display())).into())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != reports.len() {
        bail!(CoreError::Config("reports must come from distinctly named models".into()));
    }
    let cmp = compare_models(&reports)?;
    create_out(out)?;
    let outputs = vec![
        write(&out.join("comparison.csv"), cmp.to_csv())?,
        write(&out.join("comparison.json"), serde_json::to_string_pretty(&cmp)?)?,
    ];
    for r in &reports {
        println!("{}: {:.2}% ({}/{})", r.model, r.accuracy, r.correct, r.total);
    }
    println!("{} words missed by at least one model", cmp.rows.len());
    RunManifest::new("compare", json!({}), None, paths.to_vec(), outputs, started).write(out)
}
