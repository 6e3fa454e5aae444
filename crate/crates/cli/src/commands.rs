//! Subcommand implementations. Each writes its results to `out`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use erbm::baselines::{MostPopular, UserKnn};
use erbm::dataset::{load_ratings, temporal_split, DatasetSplit};
use erbm::eval::{evaluate as evaluate_model, run_experiment, Metrics, MetricsReport, ModelTag, Recommender, ReportRow};
use erbm::neighborhood::{k_nearest_neighbors, ExplainabilityMatrix, NeighborModel, DEFAULT_K};
use erbm::rbm::{read_model, train as train_model, write_model, ExplainabilityMode, ModelFile, RbmRecommender, TrainConfig};

use crate::config::{parse_separator, ConfigFile, SweepSettings};
use crate::explain::render_explanation;
use crate::{CliError, DataArgs, EvaluateArgs, ExplainArgs, IngestArgs, RecommendArgs, SweepArgs, TrainArgs};

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn load_split(args: &DataArgs) -> Result<DatasetSplit, CliError> {
    DatasetSplit::load(&args.data, args.scale)
        .map_err(|e| CliError::Data(format!("cannot load split from {}: {e}", args.data.display())))
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_model(BufReader::new(file))?)
}

fn neighborhoods(split: &DatasetSplit, k: usize) -> Result<(NeighborModel, ExplainabilityMatrix), CliError> {
    let nbrs = k_nearest_neighbors(&split.train, k)?;
    let expl = ExplainabilityMatrix::from_neighbors(&split.train, &nbrs);
    Ok((nbrs, expl))
}

/// `--k`, else the model's recorded k, else the default.
fn resolve_k(flag: Option<usize>, model: Option<&ModelFile>) -> Result<usize, CliError> {
    if let Some(k) = flag {
        return Ok(k);
    }
    match model.and_then(|m| m.metadata.get("k")) {
        Some(v) => v.parse().map_err(|_| CliError::Data(format!("model metadata has bad k {v:?}"))),
        None => Ok(DEFAULT_K),
    }
}

fn user_index(split: &DatasetSplit, user: u64) -> Result<usize, CliError> {
    split
        .users()
        .index(user)
        .ok_or_else(|| CliError::Usage(format!("unknown user {user}")))
}

fn item_index(split: &DatasetSplit, item: u64) -> Result<usize, CliError> {
    split
        .items()
        .index(item)
        .ok_or_else(|| CliError::Usage(format!("unknown item {item}")))
}

pub fn ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let sep = parse_separator(&args.separator)?;
    let table = load_ratings(&args.ratings, sep, args.scale)?;
    let split = temporal_split(&table, args.test_fraction)?;
    split.save(&args.out)?;
    writeln!(
        out,
        "users={} items={} ratings={} train={} test={}",
        table.n_users(),
        table.n_items(),
        table.len(),
        split.train.n_ratings(),
        split.test.len()
    )?;
    Ok(())
}

pub fn train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    Ok(TrainConfig {
        hidden_units: args.hidden,
        epochs: args.epochs,
        learning_rate_w: args.learning_rate,
        learning_rate_d: args.learning_rate_d.unwrap_or(args.learning_rate),
        cd_steps: args.cd_steps,
        batch_size: args.batch_size,
        momentum_initial: args.momentum_initial,
        momentum_final: args.momentum_final,
        momentum_switch_epoch: args.momentum_switch_epoch,
        weight_decay: args.weight_decay,
        init_std: args.init_std,
        seed: args.seed,
        explainability_mode: args.mode.parse().map_err(usage)?,
        m_treatment: args.m_treatment.parse().map_err(usage)?,
        hidden_statistics: args.hidden_statistics.parse().map_err(usage)?,
    })
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = train_config(args)?;
    config.validate()?;
    let split = load_split(&args.data)?;
    let (_, expl) = neighborhoods(&split, args.k)?;
    if let Some(path) = &args.explainability_out {
        let mut w = BufWriter::new(File::create(path)?);
        expl.write(&mut w, split.users(), split.items())?;
        w.flush()?;
    }
    let (params, log) = train_model(&split, &expl, &config)?;
    for e in &log.epochs {
        writeln!(out, "epoch {} reconstruction_rmse {}", e.epoch, e.reconstruction_rmse)?;
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("k".to_string(), args.k.to_string());
    metadata.insert("seed".to_string(), config.seed.to_string());
    metadata.insert("epochs".to_string(), config.epochs.to_string());
    metadata.insert("m_treatment".to_string(), config.m_treatment.as_str().to_string());
    metadata.insert("test_fraction".to_string(), split.test_fraction.to_string());
    let mut w = BufWriter::new(File::create(&args.model)?);
    write_model(&params, &metadata, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = load_split(&args.data)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    let k = resolve_k(args.k, model.as_ref())?;
    let (nbrs, expl) = neighborhoods(&split, k)?;
    let expl = expl.with_threshold(args.theta);

    let (tag, f, run, metrics): (ModelTag, Option<usize>, usize, Metrics) = match (&model, &args.baseline) {
        (Some(m), _) => {
            let rec = RbmRecommender {
                params: &m.params,
                split: &split,
                expl: &expl,
            };
            let tag = match m.params.mode() {
                ExplainabilityMode::Conditioned => ModelTag::Erbm,
                ExplainabilityMode::Disabled => ModelTag::Rbm,
            };
            let run = m.metadata.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
            let metrics = evaluate_model(&rec, &split, &expl, args.top_n, args.theta)?;
            (tag, Some(m.params.hidden()), run, metrics)
        }
        (None, Some(name)) => {
            let tag: ModelTag = name.parse().map_err(usage)?;
            let knn = UserKnn {
                matrix: &split.train,
                neighbors: &nbrs,
            };
            let pop = MostPopular::new(&split.train);
            let rec: &dyn Recommender = match tag {
                ModelTag::UserKnn => &knn,
                ModelTag::MostPopular => &pop,
                _ => return Err(usage(format!("{name} is not a baseline; train it and pass --model"))),
            };
            (tag, None, 0, evaluate_model(rec, &split, &expl, args.top_n, args.theta)?)
        }
        (None, None) => return Err(usage("pass --model or --baseline")),
    };
    let report = MetricsReport {
        metadata: Vec::new(),
        rows: vec![ReportRow {
            model: tag,
            f,
            k,
            run,
            metrics,
        }],
        failures: Vec::new(),
    };
    report.write_csv(out)?;
    Ok(())
}

pub fn recommend(args: &RecommendArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = load_split(&args.data)?;
    let model = load_model(&args.model)?;
    let user = user_index(&split, args.user)?;
    let k = resolve_k(None, Some(&model))?;
    let (_, expl) = neighborhoods(&split, k)?;
    let rec = RbmRecommender {
        params: &model.params,
        split: &split,
        expl: &expl,
    };
    let scores = rec.predict_user(user)?;
    for (rank, item) in rec.top_n(user, args.n)?.into_iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{:.2}\t{:.3}",
            rank + 1,
            split.items().external(item),
            scores[item],
            expl.score(user, item)
        )?;
    }
    Ok(())
}

/// Item titles from a `id|title|...` file; bytes are read as Latin-1.
pub fn read_titles(path: &Path) -> Result<BTreeMap<u64, String>, CliError> {
    let bytes = std::fs::read(path)?;
    let text: String = bytes.iter().map(|&b| char::from(b)).collect();
    let mut titles = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('|');
        let id = fields.next().and_then(|f| f.trim().parse::<u64>().ok());
        match (id, fields.next()) {
            (Some(id), Some(title)) => {
                titles.insert(id, title.to_string());
            }
            _ => return Err(CliError::Data(format!("{}:{}: expected id|title", path.display(), idx + 1))),
        }
    }
    Ok(titles)
}

pub fn explain(args: &ExplainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = load_split(&args.data)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    let user = user_index(&split, args.user)?;
    let k = resolve_k(args.k, model.as_ref())?;
    let (nbrs, expl) = neighborhoods(&split, k)?;
    let titles = args.titles.as_deref().map(read_titles).transpose()?.unwrap_or_default();
    let name = |item: usize| {
        let id = split.items().external(item);
        titles.get(&id).cloned().unwrap_or_else(|| id.to_string())
    };

    if let Some(item) = args.item {
        let item = item_index(&split, item)?;
        let statement = render_explanation(user, item, &split.train, &nbrs)?;
        writeln!(out, "{}\t{statement}", name(item))?;
        return Ok(());
    }

    let model = model.ok_or_else(|| usage("pass --item or --model"))?;
    let mut rated: Vec<(usize, u8)> = split.train.row(user).to_vec();
    rated.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let top_rated: Vec<String> = rated.iter().take(3).map(|&(i, r)| format!("{} ({r})", name(i))).collect();
    writeln!(out, "user {} top rated: {}", args.user, top_rated.join("; "))?;
    let rec = RbmRecommender {
        params: &model.params,
        split: &split,
        expl: &expl,
    };
    for (rank, item) in rec.top_n(user, args.n)?.into_iter().enumerate() {
        let text = match render_explanation(user, item, &split.train, &nbrs) {
            Ok(s) => s.to_string(),
            Err(e) => format!("({e})"),
        };
        writeln!(out, "{}\t{}\t{text}", rank + 1, name(item))?;
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut file = ConfigFile::load(&args.config)?;
    for o in &args.overrides {
        file.set(o)?;
    }
    let settings = SweepSettings::from_config(&file)?;
    let split = match (&settings.ratings, &settings.split_dir) {
        (Some(path), _) => {
            let table = load_ratings(path, settings.separator, settings.scale)?;
            temporal_split(&table, settings.test_fraction)?
        }
        (None, Some(dir)) => load_split(&DataArgs {
            data: dir.clone(),
            scale: settings.scale,
        })?,
        (None, None) => unreachable!("settings require a data source"),
    };
    let quiet = args.quiet;
    let report = run_experiment(&split, &settings.experiment, |msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    })?;
    match args.out.as_ref().or(settings.output.as_ref()) {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            report.write_csv(&mut w)?;
            w.flush()?;
        }
        None => report.write_csv(&mut *out)?,
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialGrid {
            failed: report.failures.len(),
            total: report.failures.len() + report.rows.len(),
        })
    }
}
