use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bankaug::augment::{choose_multiplier, class_quotas, filter_synthetic, AugmentConfig};
use bankaug::bank::{
    build_bank, load_bank, read_vectors, remove_overlap, save_bank, segment, vectors_path,
    write_vectors, EmbeddingMatrix, SegmentConfig, DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKENS,
};
use bankaug::classifier::{
    self, annotate, annotate_embedded, load_jsonl, save_jsonl, Architecture, Classifier, LossKind, Targets,
    TrainSpec,
};
use bankaug::data::{read_pairs_tsv, read_sts_tsv, LabeledDataset};
use bankaug::embed::{train_projection, BackendKind, Encoder, ProjectionEncoder, TripletConfig, WordVectorTable};
use bankaug::index::FlatIndex;
use bankaug::pipeline::config::KvConfig;
use bankaug::pipeline::{
    eval_accuracy, eval_sts, generate_synthetic_task, presets, run_distillation, run_few_shot, run_self_training,
    ExperimentReport, FewShotSpec, PreparedBank, RunConfig, UnlabeledSource,
};
use bankaug::queries::{build_queries, QueryMode};

#[derive(Parser)]
#[command(name = "bankaug", version, about = "Sentence-bank retrieval augmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and inspect sentence banks.
    #[command(subcommand)]
    Bank(BankCmd),
    /// Embed banks and train the projection encoder.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Nearest-neighbour search over an embedded bank.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Task query embeddings.
    #[command(subcommand)]
    Query(QueryCmd),
    /// Train and apply the teacher classifier.
    #[command(subcommand)]
    Teacher(TeacherCmd),
    /// Train a student on teacher-labeled data.
    #[command(subcommand)]
    Student(StudentCmd),
    /// Select the synthetic training set.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// End-to-end experiment protocols.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Score models and encoders.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Args, Clone)]
struct EncoderArgs {
    /// Word vector text file (`count dim` header, then `token v1 .. vd`).
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long, default_value = "avg")]
    backend: BackendKind,
    /// Projection model written by `embed train-proj`.
    #[arg(long)]
    proj_model: Option<PathBuf>,
    /// SIF parameters written by `embed bank --backend sif`.
    #[arg(long)]
    sif_params: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BankCmd {
    /// Segment documents into sentences, deduplicate and save.
    Build {
        /// A text file or a directory of text files (one document per file).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_TOKENS)]
        min_tokens: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
        /// Treat the input as running text instead of one sentence per line.
        #[arg(long)]
        segment: bool,
        #[arg(long)]
        source: Option<String>,
    },
    /// Duplicate counts for a sentence-per-line file without writing a bank.
    DedupStats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Drop bank sentences that match test sentences.
    RemoveOverlap {
        #[arg(long)]
        bank: PathBuf,
        /// Test sentences, one per line; for `label<TAB>text` lines the text is used.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Writes `old_id<TAB>new_id` (or `-` for removed rows).
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// Embed every bank sentence and store the vectors next to the bank.
    Bank {
        #[arg(long)]
        bank: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
        #[arg(long, default_value = "f32")]
        dtype: String,
    },
    /// Train the projection encoder on paraphrase pairs with the triplet loss.
    TrainProj {
        #[arg(long)]
        vectors: PathBuf,
        /// `sentence<TAB>paraphrase` lines.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        margin: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long)]
        d_out: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    /// Top-k bank rows for every query vector; writes `query<TAB>rank<TAB>id<TAB>score`.
    Search {
        #[arg(long)]
        bank: PathBuf,
        /// Query vectors as written by `query build`.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        quantized: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum QueryCmd {
    /// Average, per-label average or per-sentence query vectors from a labeled TSV.
    Build {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "label")]
        mode: QueryMode,
        #[command(flatten)]
        enc: EncoderArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TeacherCmd {
    /// Fit a classifier on a labeled TSV.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
        /// Comma-separated hidden widths; empty for a linear model.
        #[arg(long, default_value = "256")]
        hidden: String,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label sentences with a trained model; writes JSONL.
    Annotate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
        /// Sentences, one per line.
        #[arg(long, conflicts_with_all = ["bank", "hits"])]
        sentences: Option<PathBuf>,
        #[arg(long, requires = "hits")]
        bank: Option<PathBuf>,
        /// Search output of `index search`.
        #[arg(long, requires = "bank")]
        hits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct FitArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn spec(&self, loss: LossKind) -> TrainSpec {
        TrainSpec {
            loss,
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum StudentCmd {
    /// Fit a classifier on soft or hard labels from JSONL.
    Train {
        /// Teacher-labeled JSONL.
        #[arg(long)]
        synthetic: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
        #[arg(long, default_value = "kl")]
        loss: LossKind,
        #[arg(long, default_value = "256")]
        hidden: String,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AugmentCmd {
    /// Keep the most confident candidates per class in proportion to the train set.
    Filter {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "auto")]
        multiplier: String,
        /// Fail instead of warning when a class runs short.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Teacher, retrieval, annotation and a same-size student.
    SelfTrain(PipelineArgs),
    /// Like self-train with a smaller student and a choice of candidate source.
    Distill(PipelineArgs),
    /// Small train sets, many seeds, best models by validation accuracy.
    FewShot(PipelineArgs),
    /// Write a generated benchmark task and a matching config.
    SynthTask {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "self-train")]
        preset: String,
        #[arg(long)]
        bank_size: Option<usize>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Cosine similarity against gold scores (`s1<TAB>s2<TAB>score`).
    Sts {
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
    },
    /// Test accuracy of a saved model on a labeled TSV.
    Accuracy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        enc: EncoderArgs,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Bank(c) => bank_cmd(c),
        Cmd::Embed(c) => embed_cmd(c),
        Cmd::Index(IndexCmd::Search {
            bank,
            queries,
            k,
            quantized,
            out,
        }) => search(&bank, &queries, k, quantized, out.as_deref()),
        Cmd::Query(QueryCmd::Build { train, mode, enc, out }) => {
            let encoder = load_encoder(&enc)?;
            let data = LabeledDataset::load(&train)?;
            let qs = build_queries(&data, mode, &encoder)?;
            let rows: Vec<Option<&[f32]>> = qs.queries.iter().map(|q| Some(q.vector.as_slice())).collect();
            write_vectors(&EmbeddingMatrix::from_rows(encoder.dim(), &rows)?, &out)?;
            println!("{} queries ({} sentences skipped)", qs.len(), qs.skipped);
            Ok(())
        }
        Cmd::Teacher(c) => teacher_cmd(c),
        Cmd::Student(StudentCmd::Train {
            synthetic,
            enc,
            loss,
            hidden,
            fit,
            out,
        }) => {
            let encoder = load_encoder(&enc)?;
            let examples = load_jsonl(&synthetic)?;
            let Some(first) = examples.first() else {
                bail!("{} has no examples", synthetic.display());
            };
            let classes = first.probs.len();
            let mut x = Vec::new();
            let mut soft = Vec::new();
            let mut hard = Vec::new();
            for ex in &examples {
                if let Some(e) = encoder.encode(&ex.text) {
                    x.push(e);
                    hard.push(ex.assigned_class);
                    soft.push(ex.probs.clone());
                }
            }
            let targets = match loss {
                LossKind::Kl => Targets::Soft(&soft),
                LossKind::CrossEntropy => Targets::Hard(&hard),
            };
            let arch = Architecture::new(encoder.dim(), parse_hidden(&hidden)?, classes);
            let (model, summary) = classifier::train(&arch, &x, targets, &fit.spec(loss))?;
            model.save(&out)?;
            println!("trained on {} examples, final loss {:.6}", x.len(), summary.final_loss);
            Ok(())
        }
        Cmd::Augment(AugmentCmd::Filter {
            pool,
            train,
            multiplier,
            strict,
            out,
        }) => {
            let pool = load_jsonl(&pool)?;
            let train = LabeledDataset::load(&train)?;
            let cfg = AugmentConfig {
                multiplier: match multiplier.as_str() {
                    "auto" => None,
                    m => Some(m.parse().context("multiplier")?),
                },
                allow_shortfall: !strict,
                ..AugmentConfig::default()
            };
            let m = choose_multiplier(train.len(), &cfg);
            let quotas = class_quotas(&train.counts(), m * train.len())?;
            let texts: Vec<&str> = train.texts().collect();
            let (kept, report) = filter_synthetic(&pool, &quotas, &texts, cfg.allow_shortfall)?;
            if !report.shortfalls.is_empty() {
                eprintln!("{}", serde_json::to_string(&report.shortfalls)?);
            }
            save_jsonl(&kept, &out)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Cmd::Pipeline(c) => pipeline_cmd(c),
        Cmd::Eval(EvalCmd::Sts { pairs, enc }) => {
            let encoder = load_encoder(&enc)?;
            let rows = read_sts_tsv(open(&pairs)?, &pairs.display().to_string())?;
            println!("{}", serde_json::to_string_pretty(&eval_sts(&encoder, &rows)?)?);
            Ok(())
        }
        Cmd::Eval(EvalCmd::Accuracy { model, test, enc }) => {
            let encoder = load_encoder(&enc)?;
            let model = Classifier::load(&model)?;
            let test = LabeledDataset::load(&test)?;
            println!("{:.6}", eval_accuracy(&model, &test, &encoder)?);
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("hidden width {t:?}")))
        .collect()
}

fn load_encoder(a: &EncoderArgs) -> Result<Encoder> {
    encoder_from(a.backend, &a.vectors, a.proj_model.as_deref(), a.sif_params.as_deref(), None)
}

/// SIF without saved parameters is fit on `corpus` when one is given.
fn encoder_from(
    backend: BackendKind,
    vectors: &Path,
    proj: Option<&Path>,
    sif: Option<&Path>,
    corpus: Option<&[String]>,
) -> Result<Encoder> {
    let mut table = WordVectorTable::load(vectors)?;
    Ok(match backend {
        BackendKind::Avg => Encoder::Avg(Arc::new(table)),
        BackendKind::Projection => {
            let p = proj.context("--proj-model is required for the projection backend")?;
            Encoder::projection(Arc::new(table), ProjectionEncoder::load(p)?)?
        }
        BackendKind::Sif => match (sif, corpus) {
            (Some(p), _) => Encoder::load_sif(table, p)?,
            (None, Some(c)) => {
                table.estimate_unigram(c);
                Encoder::fit_sif(Arc::new(table), c, bankaug::embed::DEFAULT_SIF_A, 100_000)?
            }
            (None, None) => bail!("--sif-params is required for the sif backend"),
        },
    })
}

fn input_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file());
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn bank_cmd(c: BankCmd) -> Result<()> {
    match c {
        BankCmd::Build {
            input,
            out,
            min_tokens,
            max_tokens,
            segment: seg,
            source,
        } => {
            let cfg = SegmentConfig {
                min_tokens,
                max_tokens,
            };
            let mut sentences = Vec::new();
            for f in input_files(&input)? {
                if seg {
                    let doc = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
                    sentences.extend(segment(&doc, &cfg));
                } else {
                    sentences.extend(read_lines(&f)?.into_iter().filter(|s| cfg.accepts(s)));
                }
            }
            let source = source.unwrap_or_else(|| input.display().to_string());
            let (bank, stats) = build_bank(&sentences, &source);
            save_bank(&bank, &out)?;
            println!("{}", serde_json::to_string(&stats)?);
            Ok(())
        }
        BankCmd::DedupStats { input } => {
            let sentences = read_lines(&input)?;
            let (_, stats) = build_bank(&sentences, "");
            println!("{}", serde_json::to_string(&stats)?);
            Ok(())
        }
        BankCmd::RemoveOverlap {
            bank,
            test,
            out,
            mapping,
        } => {
            let b = load_bank(&bank)?;
            let test: Vec<String> = read_lines(&test)?
                .into_iter()
                .map(|l| match l.split_once('\t') {
                    Some((_, t)) => t.to_string(),
                    None => l,
                })
                .collect();
            let before = b.len();
            let (b, map) = remove_overlap(b, &test);
            save_bank(&b, &out)?;
            if let Some(p) = mapping {
                let mut w = BufWriter::new(File::create(&p)?);
                for (old, new) in map.iter().enumerate() {
                    match new {
                        Some(n) => writeln!(w, "{old}\t{n}")?,
                        None => writeln!(w, "{old}\t-")?,
                    }
                }
                w.flush()?;
            }
            println!("removed {} of {before} sentences", before - b.len());
            Ok(())
        }
    }
}

fn embed_cmd(c: EmbedCmd) -> Result<()> {
    match c {
        EmbedCmd::Bank { bank, enc, dtype } => {
            let b = load_bank(&bank)?;
            let texts: Vec<String> = b.texts().map(str::to_string).collect();
            let encoder = encoder_from(
                enc.backend,
                &enc.vectors,
                enc.proj_model.as_deref(),
                enc.sif_params.as_deref(),
                Some(&texts),
            )?;
            if enc.backend == BackendKind::Sif && enc.sif_params.is_none() {
                let p = bank.with_extension("sif.json");
                encoder.save_sif(&p)?;
                println!("SIF parameters: {}", p.display());
            }
            let m = encoder.embed_all(&texts);
            let m = match dtype.as_str() {
                "f32" => m,
                "int8" => bankaug::index::quantize(&m)?,
                other => bail!("unknown dtype {other:?} (f32 or int8)"),
            };
            drop(b);
            write_vectors(&m, vectors_path(&bank))?;
            println!("{} rows, {} null", m.count(), m.null_count());
            Ok(())
        }
        EmbedCmd::TrainProj {
            vectors,
            pairs,
            margin,
            epochs,
            seed,
            lr,
            batch,
            d_out,
            out,
        } => {
            let table = WordVectorTable::load(&vectors)?;
            let pairs = read_pairs_tsv(open(&pairs)?, &pairs.display().to_string())?;
            let cfg = TripletConfig {
                margin,
                batch_size: batch,
                learning_rate: lr,
                epochs,
                seed,
                d_out,
            };
            let (enc, log) = train_projection(&pairs, &table, &cfg)?;
            enc.save(&out)?;
            for (e, l) in log.epoch_losses.iter().enumerate() {
                println!("epoch {e}: loss {l:.6}");
            }
            Ok(())
        }
    }
}

fn search(bank: &Path, queries: &Path, k: usize, quantized: bool, out: Option<&Path>) -> Result<()> {
    let mut b = load_bank(bank)?;
    let m = b.take_vectors().context("bank has no vectors; run `embed bank` first")?;
    let index = FlatIndex::from_matrix(m, quantized)?;
    let q = read_vectors(queries)?;
    let qs: Vec<Vec<f32>> = (0..q.count()).filter_map(|i| q.get(i)).collect();
    let hits = index.top_k_multi(&qs, k)?;
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for (qi, hs) in hits.iter().enumerate() {
        for (r, h) in hs.iter().enumerate() {
            writeln!(w, "{qi}\t{r}\t{}\t{:.6}", h.id, h.score)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn teacher_cmd(c: TeacherCmd) -> Result<()> {
    match c {
        TeacherCmd::Train {
            train,
            enc,
            hidden,
            fit,
            out,
        } => {
            let encoder = load_encoder(&enc)?;
            let data = LabeledDataset::load(&train)?;
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (t, l) in data.examples() {
                if let Some(e) = encoder.encode(t) {
                    x.push(e);
                    y.push(*l);
                }
            }
            let arch = Architecture::new(encoder.dim(), parse_hidden(&hidden)?, data.num_classes());
            let (model, summary) = classifier::train(&arch, &x, Targets::Hard(&y), &fit.spec(LossKind::CrossEntropy))?;
            model.save(&out)?;
            println!(
                "trained on {} of {} examples, final loss {:.6}",
                x.len(),
                data.len(),
                summary.final_loss
            );
            Ok(())
        }
        TeacherCmd::Annotate {
            model,
            enc,
            sentences,
            bank,
            hits,
            out,
        } => {
            let encoder = load_encoder(&enc)?;
            let model = Classifier::load(&model)?;
            let (examples, stats) = match (sentences, bank, hits) {
                (Some(s), _, _) => annotate(&model, &read_lines(&s)?, &encoder)?,
                (None, Some(b), Some(h)) => {
                    let b = load_bank(&b)?;
                    let mut ids: Vec<u32> = Vec::new();
                    for line in read_lines(&h)? {
                        let id = line
                            .split('\t')
                            .nth(2)
                            .and_then(|s| s.parse().ok())
                            .with_context(|| format!("bad search line {line:?}"))?;
                        ids.push(id);
                    }
                    ids.sort_unstable();
                    ids.dedup();
                    let mut items = Vec::with_capacity(ids.len());
                    for id in ids {
                        if id as usize >= b.len() {
                            bail!("hit id {id} is outside the bank");
                        }
                        let text = b.text(id as usize).to_string();
                        let e = encoder.encode(&text);
                        items.push((Some(id), text, e));
                    }
                    annotate_embedded(&model, items)?
                }
                _ => bail!("give --sentences or --bank with --hits"),
            };
            save_jsonl(&examples, &out)?;
            println!("{}", serde_json::to_string(&stats)?);
            Ok(())
        }
    }
}

fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = Path::new(v);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn pipeline_cmd(c: PipelineCmd) -> Result<()> {
    let (name, args) = match c {
        PipelineCmd::SelfTrain(a) => ("self-train", a),
        PipelineCmd::Distill(a) => ("distill", a),
        PipelineCmd::FewShot(a) => ("few-shot", a),
        PipelineCmd::SynthTask {
            seed,
            out,
            preset,
            bank_size,
        } => return synth_task(seed, &out, &preset, bank_size),
    };
    let mut kv = KvConfig::load(&args.config)?;
    for o in &args.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override {o:?} is not key=value"))?;
        kv.set(k.trim(), v.trim());
    }
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let path = |key: &str| -> Result<PathBuf> {
        let v = kv.raw(key).with_context(|| format!("config is missing `{key}`"))?;
        Ok(resolve(&base, v))
    };
    let opt_path = |key: &str| kv.raw(key).map(|v| resolve(&base, v));

    let train = LabeledDataset::load(&path("train")?)?;
    let test = LabeledDataset::load(&path("test")?)?.align_to(train.labels())?;
    let valid = if name == "few-shot" {
        Some(LabeledDataset::load(&path("valid")?)?.align_to(train.labels())?)
    } else {
        None
    };
    let backend: BackendKind = kv.get_or("backend", BackendKind::Avg)?;
    let quantized: bool = kv.get_or("quantized", false)?;
    let limit: Option<usize> = kv.get("bank_limit")?;
    let report_path = args.report.clone().or_else(|| opt_path("report"));
    let bank_prefix = opt_path("bank");
    let bank_text = opt_path("bank_text");
    let sentences = match (&bank_prefix, &bank_text) {
        (Some(_), Some(_)) => bail!("set only one of `bank` and `bank_text`"),
        (None, Some(p)) => Some(read_lines(p)?),
        (Some(_), None) => None,
        (None, None) => bail!("config needs `bank` (a saved bank) or `bank_text` (one sentence per line)"),
    };
    let bank = match &bank_prefix {
        Some(p) => Some(load_bank(p)?),
        None => None,
    };
    let corpus: Vec<String> = match (&sentences, &bank) {
        (Some(s), _) => s.clone(),
        (None, Some(b)) if backend == BackendKind::Sif => b.texts().map(str::to_string).collect(),
        _ => Vec::new(),
    };
    let encoder = encoder_from(
        backend,
        &path("vectors")?,
        opt_path("proj_model").as_deref(),
        opt_path("sif_params").as_deref(),
        Some(&corpus),
    )?;
    let source = kv.raw("source").unwrap_or("retrieved").to_string();
    let gt_pool = opt_path("gt_pool");
    let test_texts: Vec<&str> = test.texts().collect();

    let config_text = kv.text().to_string();
    let report: ExperimentReport = match name {
        "few-shot" => {
            let spec = FewShotSpec::from_kv(&kv)?;
            kv.check_unused()?;
            let prepared = prepare(bank, sentences, &test_texts, &encoder, quantized, limit)?;
            run_few_shot(&train, valid.as_ref().unwrap(), &test, &prepared, &encoder, &spec, Some(&config_text))?
        }
        _ => {
            let cfg = RunConfig::from_kv(&kv)?;
            kv.check_unused()?;
            let prepared = prepare(bank, sentences, &test_texts, &encoder, quantized, limit)?;
            if name == "self-train" {
                run_self_training(&train, &test, &prepared, &encoder, &cfg, Some(&config_text))?
            } else {
                let pool;
                let src = match source.as_str() {
                    "retrieved" | "sa" => UnlabeledSource::Retrieved,
                    "random" | "rd" => UnlabeledSource::Random,
                    "ground_truth" | "gt" => {
                        pool = read_lines(&gt_pool.context("source = ground_truth needs `gt_pool`")?)?;
                        UnlabeledSource::GroundTruth(&pool)
                    }
                    other => bail!("unknown source {other:?} (retrieved, random or ground_truth)"),
                };
                run_distillation(&train, &test, &prepared, &encoder, &cfg, src, Some(&config_text))?
            }
        }
    };
    print!("{}", report.summary_table());
    if let Some(p) = report_path {
        report.save(&p)?;
        println!("report: {}", p.display());
    }
    if !report.is_ok() {
        bail!("run failed");
    }
    Ok(())
}

fn prepare(
    bank: Option<bankaug::bank::SentenceBank>,
    sentences: Option<Vec<String>>,
    test: &[&str],
    encoder: &Encoder,
    quantized: bool,
    limit: Option<usize>,
) -> Result<PreparedBank> {
    Ok(match (bank, sentences) {
        (Some(b), _) => PreparedBank::from_bank(b, test, encoder, quantized, limit)?,
        (None, Some(s)) => PreparedBank::from_texts(&s, "bank_text", test, encoder, quantized, limit)?,
        (None, None) => unreachable!("checked by the caller"),
    })
}

fn synth_task(seed: u64, out: &Path, preset: &str, bank_size: Option<usize>) -> Result<()> {
    let (mut spec, protocol) = match preset {
        "self-train" => {
            let (s, c) = presets::self_training(seed);
            (s, c.to_config_text())
        }
        "distill" => {
            let (s, c) = presets::distillation(seed);
            (s, c.to_config_text())
        }
        "few-shot" => {
            let (s, f) = presets::few_shot(seed);
            (s, f.to_config_text())
        }
        other => bail!("unknown preset {other:?} (self-train, distill or few-shot)"),
    };
    if let Some(n) = bank_size {
        spec.bank_size = n;
    }
    let task = generate_synthetic_task(&spec)?;
    std::fs::create_dir_all(out)?;
    task.train.save(&out.join("train.tsv"))?;
    task.valid.save(&out.join("valid.tsv"))?;
    task.test.save(&out.join("test.tsv"))?;
    write_lines(&out.join("bank.txt"), &task.bank_text)?;
    write_lines(&out.join("in_domain.txt"), &task.in_domain)?;
    let mut w = BufWriter::new(File::create(out.join("vectors.txt"))?);
    task.word_vectors.write_text(&mut w)?;
    w.flush()?;
    let pairs: Vec<String> = task
        .language
        .paraphrase_pairs(2000, seed)
        .into_iter()
        .map(|(a, b)| format!("{a}\t{b}"))
        .collect();
    write_lines(&out.join("paraphrases.tsv"), &pairs)?;
    let data = "train = train.tsv\ntest = test.tsv\nbank_text = bank.txt\nvectors = vectors.txt\n";
    let data = if preset == "few-shot" {
        format!("{data}valid = valid.tsv\n")
    } else if preset == "distill" {
        format!("{data}source = retrieved\ngt_pool = in_domain.txt\n")
    } else {
        data.to_string()
    };
    std::fs::write(out.join("config.txt"), format!("{data}{protocol}"))?;
    println!(
        "wrote {} (train {}, test {}, bank {})",
        out.display(),
        task.train.len(),
        task.test.len(),
        task.bank_text.len()
    );
    Ok(())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}
