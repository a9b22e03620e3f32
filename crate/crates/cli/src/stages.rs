//! One function per subcommand. Stages communicate only through files in
//! the run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use xvqa::analysis::{
    bin_by_quality, dissect, evaluate as evaluate_records, explain_all, records_to_csv,
    AccuracyRow, AccuracyTable, RelevanceSource, ResultRecord,
};
use xvqa::checkpoint::Checkpoint;
use xvqa::diagnostics::gradcheck_all;
use xvqa::explainers::{CaptionGenerator, WordPredictor};
use xvqa::metrics::{IdfTable, QualityField};
use xvqa::pipeline::{self, Explainers, Prepared, RunConfig, SweepModels};
use xvqa::reasoner::{AblationMode, AnswerCandidates, ReasonerModel};
use xvqa::synthworld::{
    generate_dataset, read_instances, write_instances, CaptionSource, Instance, QuestionType,
};
use xvqa::text::{build_word_list, word_label_vector, StopWords, Vocabulary, WordList};
use xvqa::train::TrainLog;

use crate::errors::{CheckFailed, MissingInput};

const TRAIN: &str = "data/train.jsonl";
const VAL: &str = "data/val.jsonl";
const WORD_LIST: &str = "data/word_list.txt";
const VOCAB: &str = "text/vocab.txt";
const ANSWERS: &str = "text/answers.txt";
const IDF: &str = "text/idf.txt";
const WORD_CKPT: &str = "explain/word_predictor.ckpt";
const CAPTION_CKPT: &str = "explain/captioner.ckpt";
const TRAIN_EXPLAINED: &str = "explain/train.jsonl";
const VAL_EXPLAINED: &str = "explain/val.jsonl";

fn reasoner_ckpt(mode: AblationMode) -> String {
    format!("reasoner/{mode}.ckpt")
}

/// Every path a stage touches is resolved through here, so nothing is
/// written outside the run directory.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path for an output file, with its parent created.
    pub fn output(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.output(rel)?;
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn input(&self, rel: &str, hint: &'static str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(MissingInput { path: p, hint }.into())
        }
    }

    pub fn read(&self, rel: &str, hint: &'static str) -> Result<String> {
        let p = self.input(rel, hint)?;
        fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    }
}

fn write_json<T: serde::Serialize>(run: &RunDir, rel: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    run.write(rel, s)?;
    Ok(())
}

fn instances(run: &RunDir, rel: &str, hint: &'static str) -> Result<Vec<Instance>> {
    let p = run.input(rel, hint)?;
    read_instances(&p).with_context(|| format!("reading {}", p.display()))
}

fn save_instances(run: &RunDir, rel: &str, items: &[Instance]) -> Result<()> {
    let p = run.output(rel)?;
    write_instances(&p, items).with_context(|| format!("writing {}", p.display()))
}

fn data_summary(train: &[Instance], val: &[Instance], list: &WordList) -> String {
    let mut s = String::new();
    for (name, split) in [("train", train), ("val", val)] {
        let _ = write!(s, "{name}: {} instances;", split.len());
        for t in QuestionType::ALL {
            let n = split.iter().filter(|i| i.question_type == t).count();
            let _ = write!(s, " {} {n}", t.label());
        }
        let yn: Vec<&Instance> = split.iter().filter(|i| i.question_type == QuestionType::YesNo).collect();
        let yes = yn
            .iter()
            .filter(|i| i.answers.iter().filter(|a| *a == "yes").count() * 2 > i.answers.len())
            .count();
        let share = if yn.is_empty() { 0.0 } else { 100.0 * yes as f64 / yn.len() as f64 };
        let _ = writeln!(s, "; yes share {share:.1}%");
    }
    let _ = writeln!(
        s,
        "word list: {} words, coverage {:.1}% of all caption tokens, {:.1}% of content tokens",
        list.len(),
        100.0 * list.coverage.all_tokens,
        100.0 * list.coverage.content_tokens
    );
    s
}

pub fn gen_data(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let (mut train, mut val, list) = match &cfg.input {
        Some(dir) => {
            let read = |name: &str| -> Result<Vec<Instance>> {
                let p = dir.join(name);
                if !p.is_file() {
                    return Err(MissingInput { path: p, hint: "gen-data (in the input run)" }.into());
                }
                read_instances(&p).with_context(|| format!("reading {}", p.display()))
            };
            let train = read("train.jsonl")?;
            let val = read("val.jsonl")?;
            let caps: Vec<Vec<String>> = train.iter().flat_map(Instance::caption_tokens).collect();
            let list = build_word_list(&caps, cfg.data.word_list_top_n, &StopWords::default())?;
            (train, val, list)
        }
        None => {
            let d = generate_dataset(&cfg.data)?;
            (d.train, d.val, d.word_list)
        }
    };
    for inst in train.iter_mut().chain(val.iter_mut()) {
        inst.word_labels = word_label_vector(&inst.caption_tokens(), &list)
            .into_iter()
            .map(|x| x as u8)
            .collect();
    }
    save_instances(run, TRAIN, &train)?;
    save_instances(run, VAL, &val)?;
    run.write(WORD_LIST, list.to_text())?;
    let summary = data_summary(&train, &val, &list);
    run.write("data/summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn build_vocab(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let train = instances(run, TRAIN, "gen-data")?;
    let val = instances(run, VAL, "gen-data")?;
    let list = WordList::from_text(&run.read(WORD_LIST, "gen-data")?);
    let prep = Prepared::from_splits(train, val, list, &cfg.text)?;
    run.write(VOCAB, prep.vocab.to_text())?;
    run.write(ANSWERS, prep.candidates.to_text())?;
    run.write(IDF, prep.idf.to_text())?;
    println!(
        "vocabulary {} tokens, {} answer candidates, idf over {} documents",
        prep.vocab.len(),
        prep.candidates.len(),
        prep.idf.doc_count()
    );
    Ok(())
}

/// Splits plus the text tables; `explained` picks the splits with
/// explanations attached.
fn prepared(run: &RunDir, explained: bool) -> Result<Prepared> {
    let (train, val) = if explained {
        (
            instances(run, TRAIN_EXPLAINED, "train-explainers")?,
            instances(run, VAL_EXPLAINED, "train-explainers")?,
        )
    } else {
        (instances(run, TRAIN, "gen-data")?, instances(run, VAL, "gen-data")?)
    };
    let word_list = WordList::from_text(&run.read(WORD_LIST, "gen-data")?);
    let vocab = Vocabulary::from_text(&run.read(VOCAB, "build-vocab")?)?;
    let candidates = AnswerCandidates::from_text(&run.read(ANSWERS, "build-vocab")?)?;
    let idf = IdfTable::from_text(&run.read(IDF, "build-vocab")?)?;
    Ok(Prepared {
        train,
        val,
        word_list,
        vocab,
        candidates,
        idf,
    })
}

fn mean_quality(records: &[ResultRecord]) -> String {
    let n = records.len().max(1) as f64;
    QualityField::ALL
        .iter()
        .map(|&f| {
            let m = records.iter().map(|r| r.quality.get(f)).sum::<f64>() / n;
            format!("{} {m:.3}", f.label())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn train_explainers(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let mut prep = prepared(run, false)?;
    let ex = pipeline::train_explainers(&prep, cfg)?;
    ex.words.save(&run.output(WORD_CKPT)?)?;
    ex.captioner.to_checkpoint().save(&run.output(CAPTION_CKPT)?)?;
    write_json(run, "explain/word_predictor.log.json", &ex.word_log)?;
    write_json(run, "explain/captioner.log.json", &ex.caption_log)?;
    pipeline::attach_explanations(&mut prep.train, &ex, cfg)?;
    pipeline::attach_explanations(&mut prep.val, &ex, cfg)?;
    save_instances(run, TRAIN_EXPLAINED, &prep.train)?;
    save_instances(run, VAL_EXPLAINED, &prep.val)?;

    // explanation quality on the validation split, independent of any reasoner
    let items = explain_all(&prep.val, CaptionSource::Generated, &prep.vocab)?;
    let ctx = prep.context();
    let q: Vec<ResultRecord> = items
        .iter()
        .map(|i| {
            Ok(ResultRecord {
                id: i.id,
                predicted: String::new(),
                probability: 0.0,
                accuracy: 0.0,
                quality: xvqa::analysis::quality_scores(i, &ctx)?,
                question_type: i.question_type,
            })
        })
        .collect::<Result<_, xvqa::analysis::AnalysisError>>()?;
    let fmt_loss = |l: &TrainLog| {
        format!(
            "{:.4} -> {:.4}",
            l.initial_loss().unwrap_or(f64::NAN),
            l.final_loss().unwrap_or(f64::NAN)
        )
    };
    let summary = format!(
        "word predictor loss {}\ncaptioner loss {}\nvalidation explanation quality: {}\n",
        fmt_loss(&ex.word_log),
        fmt_loss(&ex.caption_log),
        mean_quality(&q)
    );
    run.write("explain/summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn load_reasoner(run: &RunDir, mode: AblationMode, vocab: &Vocabulary) -> Result<ReasonerModel> {
    let p = run.input(&reasoner_ckpt(mode), "train-reasoner --mode <mode>` or `xvqa ablate")?;
    ReasonerModel::load(&p, vocab.clone()).with_context(|| format!("loading {}", p.display()))
}

fn save_reasoner(run: &RunDir, model: &ReasonerModel, log: &TrainLog) -> Result<()> {
    model.save(&run.output(&reasoner_ckpt(model.mode))?)?;
    write_json(run, &format!("reasoner/{}.log.json", model.mode), log)
}

pub fn train_reasoner(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let mode = cfg.reasoner.mode;
    let (model, log) = pipeline::train_reasoner_mode(&prep, cfg, mode)?;
    save_reasoner(run, &model, &log)?;
    println!(
        "{mode} reasoner: {} epochs, loss {:.4} -> {:.4}, {} training instances skipped",
        log.epoch_losses.len(),
        log.initial_loss().unwrap_or(f64::NAN),
        log.final_loss().unwrap_or(f64::NAN),
        log.skipped
    );
    Ok(())
}

fn bins_text(records: &[ResultRecord], edges: &[f64]) -> Result<(String, String)> {
    let (mut text, mut csv) = (String::new(), String::new());
    for f in QualityField::ALL {
        let t = bin_by_quality(records, f, edges)?;
        text.push_str(&t.to_text());
        text.push('\n');
        csv.push_str(&t.to_csv());
    }
    Ok((text, csv))
}

fn source_key(s: CaptionSource) -> &'static str {
    match s {
        CaptionSource::Null => "null",
        CaptionSource::Generated => "generated",
        CaptionSource::RelevantGroundTruth => "gt",
    }
}

pub fn evaluate(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let mode = cfg.reasoner.mode;
    let source = cfg.analysis.caption_source;
    let model = load_reasoner(run, mode, &prep.vocab)?;
    let items = explain_all(&prep.val, source, &prep.vocab)?;
    let records = evaluate_records(&model, &items, &prep.context())?;
    let dir = format!("eval/{mode}-{}", source_key(source));
    let table = AccuracyTable {
        title: "Model".into(),
        rows: vec![AccuracyRow::from_records(
            &format!("{mode} ({})", source.label()),
            &records,
        )],
    };
    let (bins, bins_csv) = bins_text(&records, &cfg.analysis.bins)?;
    run.write(&format!("{dir}/records.csv"), records_to_csv(&records))?;
    run.write(&format!("{dir}/accuracy.txt"), table.to_text())?;
    run.write(&format!("{dir}/accuracy.csv"), table.to_csv())?;
    run.write(&format!("{dir}/bins.txt"), &bins)?;
    run.write(&format!("{dir}/bins.csv"), bins_csv)?;
    print!("{}", table.to_text());
    println!("mean quality: {}", mean_quality(&records));
    Ok(())
}

pub fn ablate(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let ab = pipeline::ablation(&prep, cfg)?;
    for r in &ab.runs {
        save_reasoner(run, &r.model, &r.log)?;
        run.write(&format!("ablation/{}.records.csv", r.mode), records_to_csv(&r.records))?;
    }
    run.write("ablation/table.txt", ab.table.to_text())?;
    run.write("ablation/table.csv", ab.table.to_csv())?;
    print!("{}", ab.table.to_text());
    Ok(())
}

pub fn control(_cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let model = load_reasoner(run, AblationMode::Sentence, &prep.vocab)?;
    let c = pipeline::control(&prep, &model)?;
    for (source, records) in &c.records {
        run.write(&format!("control/{}.records.csv", source_key(*source)), records_to_csv(records))?;
    }
    run.write("control/table.txt", c.table.to_text())?;
    run.write("control/table.csv", c.table.to_csv())?;
    print!("{}", c.table.to_text());
    Ok(())
}

fn load_explainers(run: &RunDir, vocab: &Vocabulary) -> Result<Explainers> {
    let hint = "train-explainers";
    let words = WordPredictor::load(&run.input(WORD_CKPT, hint)?)?;
    let ck = Checkpoint::load(&run.input(CAPTION_CKPT, hint)?)?;
    let captioner = CaptionGenerator::from_checkpoint(&ck, vocab.clone())?;
    Ok(Explainers {
        words,
        captioner,
        word_log: TrainLog::default(),
        caption_log: TrainLog::default(),
    })
}

pub fn sweep(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let ex = load_explainers(run, &prep.vocab)?;
    let word = load_reasoner(run, AblationMode::Word, &prep.vocab)?;
    let sentence = load_reasoner(run, AblationMode::Sentence, &prep.vocab)?;
    let full = load_reasoner(run, AblationMode::Full, &prep.vocab)?;
    let models = SweepModels {
        word: &word,
        sentence: &sentence,
        full: &full,
    };
    let reports = pipeline::quality_sweep(&prep, cfg, &ex, &models)?;
    let mut summary = String::new();
    for r in &reports {
        let key = r.knob.key();
        run.write(&format!("sweep/{key}.txt"), r.to_text())?;
        let csv: String = r.tables.iter().map(|t| t.to_csv()).collect();
        run.write(&format!("sweep/{key}.csv"), csv)?;
        for t in &r.tables {
            let gap = t.gap().map_or("-".to_owned(), |g| format!("{g:+.2}"));
            let _ = writeln!(
                summary,
                "{key:<20} {:<18} non-decreasing {:<3} top-bottom gap {gap}",
                t.field.label(),
                if t.is_non_decreasing() { "yes" } else { "no" },
            );
        }
    }
    run.write("sweep/summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn dissect_stage(cfg: &RunConfig, run: &RunDir) -> Result<()> {
    let prep = prepared(run, true)?;
    let mode = cfg.reasoner.mode;
    let model = load_reasoner(run, mode, &prep.vocab)?;
    let items = explain_all(&prep.val, cfg.analysis.caption_source, &prep.vocab)?;
    let records = evaluate_records(&model, &items, &prep.context())?;
    let d = dissect(&records, RelevanceSource::for_mode(mode), &cfg.analysis.thresholds);
    if !d.root.is_partition() {
        return Err(CheckFailed("dissection tree is not a partition".into()).into());
    }
    run.write(&format!("dissect/{mode}.txt"), d.to_text())?;
    write_json(run, &format!("dissect/{mode}.json"), &d)?;
    print!("{}", d.to_text());
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, run: &RunDir, seeds: usize) -> Result<()> {
    let s = gradcheck_all(cfg.seed, seeds)?;
    run.write("gradcheck/summary.txt", s.to_text())?;
    print!("{}", s.to_text());
    if s.passed() {
        Ok(())
    } else {
        Err(CheckFailed(format!(
            "gradient check max relative error {:.3e} exceeds {:.0e}",
            s.max_rel_error(),
            s.tolerance
        ))
        .into())
    }
}

/// Runs every stage in order and collects their text outputs.
pub fn report(cfg: &RunConfig, run: &RunDir, gradcheck_seeds: usize) -> Result<()> {
    gen_data(cfg, run)?;
    build_vocab(cfg, run)?;
    train_explainers(cfg, run)?;
    ablate(cfg, run)?;
    evaluate(cfg, run)?;
    control(cfg, run)?;
    sweep(cfg, run)?;
    dissect_stage(cfg, run)?;
    let grad = gradcheck(cfg, run, gradcheck_seeds);

    let mode = cfg.reasoner.mode;
    let sections = [
        ("Data", "data/summary.txt".to_owned()),
        ("Explainers", "explain/summary.txt".to_owned()),
        ("Ablation", "ablation/table.txt".to_owned()),
        ("Caption sources", "control/table.txt".to_owned()),
        (
            "Quality bins",
            format!("eval/{mode}-{}/bins.txt", source_key(cfg.analysis.caption_source)),
        ),
        ("Quality sweep", "sweep/summary.txt".to_owned()),
        ("Dissection", format!("dissect/{mode}.txt")),
        ("Gradient check", "gradcheck/summary.txt".to_owned()),
    ];
    let mut md = format!("# Run report\n\nseed {}, reasoner mode {mode}\n", cfg.seed);
    for (title, rel) in sections {
        let body = fs::read_to_string(run.path(&rel)).unwrap_or_else(|_| "(missing)\n".into());
        let _ = write!(md, "\n## {title}\n\n```\n{body}```\n");
    }
    for k in ["detector_noise", "caption_corruption", "relevance_drop"] {
        let body = fs::read_to_string(run.path(&format!("sweep/{k}.txt"))).unwrap_or_default();
        let _ = write!(md, "\n### {k}\n\n```\n{body}```\n");
    }
    run.write("report.md", md)?;
    println!("report written to {}", run.path("report.md").display());
    grad
}
