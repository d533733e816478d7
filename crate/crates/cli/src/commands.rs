use std::path::{Path, PathBuf};

use bogcn::bench::{
    eval_predictor as eval_predictor_core, generate_bench, seeded_split, train_predictor as train_predictor_core,
    write_bench, PredictorEvalConfig, PredictorKind, TabularOracle,
};
use bogcn::dataset::{infer_vocabulary, load_dataset, read_vocabulary, DatasetRecord};
use bogcn::search::{
    run, run_evolution_baseline, run_random_baseline, run_resumable, SearchConfig, SearchSpace, SurrogateKind,
};
use bogcn::surrogate::{save_checkpoint, TrainConfig};
use bogcn::{ObjectiveSpec, OpVocabulary};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::{
    Baseline, Common, DataArgs, EvalArgs, Failure, GenBenchArgs, ModelArg, PredictorArgs, SearchArgs, TrainArgs,
};

/// Refuses to clobber any of `files` inside `dir` unless forced.
fn prepare_output(common: &Common, files: &[&str]) -> Result<(), Failure> {
    if !common.force {
        for f in files {
            let p = common.out.join(f);
            if p.exists() {
                return Err(Failure::Usage(format!("{} exists (use --force to overwrite)", p.display())));
            }
        }
    }
    std::fs::create_dir_all(&common.out).map_err(|e| Failure::Core(e.into()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Core(e.into()))? + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Core(e.into()))
}

fn load(data: &DataArgs) -> Result<(OpVocabulary, Vec<DatasetRecord>), Failure> {
    if !data.data.is_file() {
        return Err(Failure::Usage(format!("dataset {} not found", data.data.display())));
    }
    let beside: Option<PathBuf> = data.data.parent().map(|d| d.join("vocab.json")).filter(|p| p.is_file());
    let vocab = match (&data.vocab, beside) {
        (Some(v), _) => {
            if !v.is_file() {
                return Err(Failure::Usage(format!("vocabulary {} not found", v.display())));
            }
            read_vocabulary(v)?
        }
        (None, Some(v)) => read_vocabulary(&v)?,
        (None, None) => infer_vocabulary(&data.data)?,
    };
    let records = load_dataset(&data.data, &vocab)?;
    Ok((vocab, records))
}

fn apply_train(cfg: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
        cfg.patience = cfg.patience.min(v);
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
}

fn predictor_config(a: &PredictorArgs) -> Result<PredictorEvalConfig, Failure> {
    let mut cfg = ConfigFile::load(a.common.config.as_deref())?.predictor;
    apply_train(&mut cfg.train, &a.train);
    if let Some(v) = a.common.seed {
        cfg.seed = v;
        cfg.train.seed = v;
    }
    if let Some(v) = &a.objective {
        cfg.objective = v.clone();
    }
    if let Some(v) = a.loss {
        cfg.loss = v.into();
    }
    if let Some(v) = a.model {
        cfg.kind = match v {
            ModelArg::Gcn => PredictorKind::Gcn,
            ModelArg::Mlp => PredictorKind::Mlp,
        };
    }
    if let Some(v) = a.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = a.layers {
        cfg.layers = v;
    }
    if let Some(v) = a.train_n {
        cfg.train_n = v;
    }
    if let Some(v) = a.val_n {
        cfg.val_n = v;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn gen_bench(a: GenBenchArgs) -> Result<(), Failure> {
    let mut spec = ConfigFile::load(a.common.config.as_deref())?.bench;
    if let Some(v) = a.common.seed {
        spec.seed = v;
    }
    if let Some(v) = a.size {
        spec.space_size = v;
    }
    if let Some(v) = a.min_nodes {
        spec.node_range[0] = v;
    }
    if let Some(v) = a.max_nodes {
        spec.node_range[1] = v;
    }
    spec.validate()?;
    prepare_output(&a.common, &["bench.jsonl", "bench.meta.json", "vocab.json"])?;
    let bench = generate_bench(&spec)?;
    let meta = write_bench(&a.common.out, &bench)?;
    println!("{}  {}", meta.sha256, a.common.out.join("bench.jsonl").display());
    Ok(())
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    config: &'a PredictorEvalConfig,
    scaling: bogcn::objective::TargetScaling,
    train_n: usize,
    val_n: usize,
    best_epoch: usize,
    epochs_run: usize,
}

pub fn train_predictor(a: PredictorArgs) -> Result<(), Failure> {
    let cfg = predictor_config(&a)?;
    let (vocab, records) = load(&a.data)?;
    prepare_output(&a.common, &["model.ckpt", "training.json"])?;
    let [train, val] = seeded_split(&records, [cfg.train_n, cfg.val_n], cfg.seed)?;
    let validation = (!val.is_empty()).then_some(val.as_slice());
    let (model, scaling, best_epoch, epochs_run) = train_predictor_core(&train, validation, &vocab, &cfg)?;
    save_checkpoint(&a.common.out.join("model.ckpt"), &model.into_model())?;
    let summary =
        TrainingSummary { config: &cfg, scaling, train_n: train.len(), val_n: val.len(), best_epoch, epochs_run };
    write_json(&a.common.out.join("training.json"), &summary)?;
    println!("trained on {} records, best epoch {best_epoch} of {epochs_run}", train.len());
    Ok(())
}

pub fn eval_predictor(a: EvalArgs) -> Result<(), Failure> {
    let mut cfg = predictor_config(&a.predictor)?;
    if let Some(v) = a.test_n {
        cfg.test_n = v;
    }
    cfg.test_on_train = a.test_on_train;
    let (vocab, records) = load(&a.predictor.data)?;
    prepare_output(&a.predictor.common, &["metrics.json"])?;
    let metrics = eval_predictor_core(&records, &vocab, &cfg)?;
    write_json(&a.predictor.common.out.join("metrics.json"), &metrics)?;
    println!("pearson {:.4}  spearman {:.4}", metrics.pearson, metrics.spearman);
    Ok(())
}

fn search_config(a: &SearchArgs, file: &ConfigFile) -> SearchConfig {
    let mut cfg = file.search.clone();
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.init_samples {
        cfg.init_samples = v;
    }
    if let Some(v) = a.pool_size {
        cfg.pool_size = v;
    }
    if let Some(v) = a.batch_l {
        cfg.batch_size_l = v;
    }
    if let Some(v) = a.retrain_k {
        cfg.retrain_period_k = v;
    }
    if let Some(v) = a.budget {
        cfg.max_evaluations = Some(v);
    }
    if let Some(v) = a.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = a.loss {
        cfg.loss_kind = v.into();
    }
    if let Some(v) = a.surrogate {
        cfg.surrogate = match v {
            ModelArg::Gcn => SurrogateKind::Gcn,
            ModelArg::Mlp => SurrogateKind::Mlp,
        };
    }
    if a.point_estimate_only {
        cfg.point_estimate_only = true;
    }
    cfg
}

pub fn search(a: SearchArgs) -> Result<(), Failure> {
    let file = ConfigFile::load(a.common.config.as_deref())?;
    let cfg = search_config(&a, &file);
    let mut evo = file.evolution;
    if let Some(v) = a.population {
        evo.population = v;
    }
    if let Some(v) = a.sample_size {
        evo.sample_size = v;
    }
    cfg.validate()?;
    let objectives = ObjectiveSpec::parse(&a.objectives)?;
    if a.checkpoint.is_some() && a.baseline != Baseline::Bogcn {
        return Err(Failure::Usage("--checkpoint applies to the bogcn search only".into()));
    }
    let (vocab, records) = load(&a.data)?;
    let oracle = TabularOracle::new(&records, objectives)?;
    let space = SearchSpace::from_records(&records, vocab)?;
    cfg.validate_for(space.len())?;
    prepare_output(&a.common, &["report.json", "trace.csv"])?;

    let report = match a.baseline {
        Baseline::Bogcn => match &a.checkpoint {
            Some(path) => run_resumable(&cfg, &oracle, &space, path)?,
            None => run(&cfg, &oracle, &space)?,
        },
        Baseline::Random => run_random_baseline(&cfg, &oracle, &space)?,
        Baseline::Evolution => run_evolution_baseline(&cfg, &evo, &oracle, &space)?,
    };
    report.write_to(&a.common.out)?;
    let eto = report.evaluations_to_optimum.map_or_else(|| "not reached".to_string(), |n| n.to_string());
    println!(
        "{}: {} evaluations, optimum after {eto}, front of {}",
        report.method,
        report.evaluations_used,
        report.final_front.len()
    );
    Ok(())
}
