//! Subcommand implementations: train, evaluate, gridsearch, discover, apply.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rfne_core::{
    apply_rule, chi_square, cross_validate, discover_rule, encode, fit_encoding, fit_forest,
    fit_knn, fit_logistic, fit_rfne, knn_score, load_csv, load_model, predict_logistic,
    predict_proba, save_model, split, transform, ChiSquareTest, Column, ContingencyTable,
    Dataset, Discovery, DiscoveryReport, EncodedDataset, Error, ForestParams, Result, RfneConfig,
    RfneModel, SegmentRule,
};

use crate::config::RunConfig;
use crate::report::{fmt4, fmt_full, fmt_p, inference_tables, write_file, write_report, Table};
use crate::rulefile;

/// Methods `evaluate` knows how to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Rf,
    Knn,
    Logistic,
    Rfne,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::Knn => "knn",
            Method::Logistic => "logistic",
            Method::Rfne => "rfne",
        }
    }
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let csv = &config.data.csv;
    if !csv.is_file() {
        return Err(Error::data(format!("data file {} does not exist", csv.display())));
    }
    load_csv(csv, &config.schema_mode()?)
}

fn load_encoded(config: &RunConfig) -> Result<(Dataset, EncodedDataset)> {
    let dataset = load_dataset(config)?;
    let map = fit_encoding(&dataset)?;
    let encoded = encode(&dataset, &map)?;
    Ok((dataset, encoded))
}

fn out_dir(config: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| config.output.dir.clone())
}

fn describe_forest(p: &ForestParams) -> String {
    let fps = match p.features_per_split {
        Some(m) => m.to_string(),
        None => "sqrt".to_string(),
    };
    format!(
        "trees={} max_depth={} min_samples_leaf={} features_per_split={fps}",
        p.k, p.max_depth, p.min_samples_leaf
    )
}

/// Fits the pipeline on the whole dataset and writes the model file.
pub fn cmd_train(
    config: &RunConfig,
    model_path: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let out = out_dir(config, out);
    let master_seed = seed.unwrap_or(config.seed);
    let rfne_config = config.rfne.config(master_seed);

    let (_, encoded) = load_encoded(config)?;
    let model = fit_rfne(&encoded, &rfne_config)?;
    let model_path = model_path.unwrap_or_else(|| out.join("model.rfne"));
    if let Some(parent) = model_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_model(&model, &model_path)?;
    let model_bytes = std::fs::metadata(&model_path)?.len();

    let width = model.embedding_width();
    let total_width =
        width + if rfne_config.include_original { model.encoding.width() } else { 0 };
    let mut pairs: Vec<(&str, String)> = vec![
        ("rows", encoded.n_rows().to_string()),
        ("encoded_width", model.encoding.width().to_string()),
        ("forest", describe_forest(&rfne_config.forest)),
        (
            "walks",
            format!(
                "length={} per_node={} p={} q={}",
                rfne_config.walk.l, rfne_config.walk.r, rfne_config.walk.p, rfne_config.walk.q
            ),
        ),
        (
            "embedding",
            format!(
                "d={} window={} negatives={} epochs={} lr={}->{}",
                rfne_config.embed.d,
                rfne_config.embed.window,
                rfne_config.embed.negatives,
                rfne_config.embed.epochs,
                rfne_config.embed.lr_start,
                rfne_config.embed.lr_end
            ),
        ),
        ("master_seed", master_seed.to_string()),
        ("include_original", rfne_config.include_original.to_string()),
        ("embedding_width", format!("{} (trees x d = {} x {})", width, rfne_config.forest.k, rfne_config.embed.d)),
        ("feature_width", total_width.to_string()),
        ("model_file", format!("{} ({model_bytes} bytes)", model_path.display())),
        ("elapsed_seconds", format!("{:.1}", started.elapsed().as_secs_f64())),
    ];
    let human: String =
        pairs.iter().map(|(k, v)| format!("{k}: {v}\n")).collect::<Vec<_>>().join("");
    pairs.retain(|(k, _)| *k != "elapsed_seconds");
    let machine: String =
        pairs.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect::<Vec<_>>().join("");
    print!("{human}");
    write_file(&out, "train.log", &human)?;
    write_file(&out, "train.tsv", &machine)?;
    Ok(())
}

fn rf_auc(train: &EncodedDataset, test: &EncodedDataset, params: &ForestParams, seed: u64) -> Result<f64> {
    let forest = fit_forest(&train.matrix, &train.target, params, seed)?;
    let scores: Vec<f64> = (0..test.n_rows())
        .into_par_iter()
        .map(|i| predict_proba(&forest, test.matrix.row(i)))
        .collect::<Result<_>>()?;
    rfne_core::auc(&scores, &test.target)
}

fn rfne_auc(
    train: &EncodedDataset,
    test: &EncodedDataset,
    rfne_config: &RfneConfig,
    config: &RunConfig,
) -> Result<(f64, usize)> {
    let model = fit_rfne(train, rfne_config)?;
    let features_train = transform(&model, train)?;
    let features_test = transform(&model, test)?;
    let downstream = fit_logistic(
        &features_train.matrix,
        &train.target,
        config.logistic.regularization()?,
        config.logistic.max_iter,
    )?;
    let scores = predict_logistic(&downstream, &features_test.matrix)?;
    Ok((rfne_core::auc(&scores, &test.target)?, features_train.matrix.n_cols()))
}

/// Scores the configured methods on a stratified 80/20 split.
pub fn cmd_evaluate(
    config: &RunConfig,
    method: Option<Method>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let started = Instant::now();
    let out = out_dir(config, out);
    let master_seed = seed.unwrap_or(config.seed);
    let (_, encoded) = load_encoded(config)?;
    let (train, test) = split(&encoded, config.split.train_fraction, config.split.seed)?;

    let methods: Vec<Method> = match method {
        Some(m) => vec![m],
        None => vec![Method::Rf, Method::Knn, Method::Logistic, Method::Rfne],
    };

    let mut human = Table::new(&["method", "auc", "details"]);
    let mut machine = Table::new(&["method", "auc", "details"]);
    for m in methods {
        let (auc, details) = match m {
            Method::Rf => {
                let params = config.rf.params();
                let auc = rf_auc(&train, &test, &params, master_seed)?;
                (auc, describe_forest(&params))
            }
            Method::Knn => {
                let model = fit_knn(&train.matrix, &train.target, config.knn.k)?;
                let scores = knn_score(&model, &test.matrix)?;
                (rfne_core::auc(&scores, &test.target)?, format!("k={}", config.knn.k))
            }
            Method::Logistic => {
                let model = fit_logistic(
                    &train.matrix,
                    &train.target,
                    config.logistic.regularization()?,
                    config.logistic.max_iter,
                )?;
                let scores = predict_logistic(&model, &test.matrix)?;
                let details = format!(
                    "regularization={} lambda={} iterations={} converged={}",
                    config.logistic.regularization,
                    config.logistic.lambda,
                    model.iterations,
                    model.converged
                );
                (rfne_core::auc(&scores, &test.target)?, details)
            }
            Method::Rfne => {
                let rfne_config = config.rfne.config(master_seed);
                let (auc, width) = rfne_auc(&train, &test, &rfne_config, config)?;
                let details = format!(
                    "trees={} d={} width={width} include_original={}",
                    rfne_config.forest.k, rfne_config.embed.d, rfne_config.include_original
                );
                (auc, details)
            }
        };
        human.row(vec![m.name().to_string(), fmt4(auc), details.clone()]);
        machine.row(vec![m.name().to_string(), fmt_full(auc), details]);
    }

    let header = format!(
        "evaluate: {} train rows, {} test rows (split seed {}), model seed {master_seed}\n",
        train.n_rows(),
        test.n_rows(),
        config.split.seed
    );
    let text = format!(
        "{header}{}elapsed: {:.1}s\n",
        human.aligned(),
        started.elapsed().as_secs_f64()
    );
    print!("{text}");
    write_report(&out, "evaluate", &text, &machine.tsv())?;
    Ok(())
}

/// Cross-validated grid search on the training split.
pub fn cmd_gridsearch(config: &RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let grid = config
        .gridsearch
        .as_ref()
        .ok_or_else(|| Error::config("config has no [gridsearch] section".to_string()))?;
    let out = out_dir(config, out);
    let gs_seed = seed.unwrap_or(grid.seed);
    let (_, encoded) = load_encoded(config)?;
    let (train, _) = split(&encoded, config.split.train_fraction, config.split.seed)?;

    let (labels, report) = match grid.method.as_str() {
        "rf" => {
            let trees = grid.trees.clone().unwrap_or_else(|| vec![config.rf.trees]);
            let depths = grid.max_depth.clone().unwrap_or_else(|| vec![config.rf.max_depth]);
            let mut points = Vec::new();
            for &k in &trees {
                for &depth in &depths {
                    points.push(ForestParams {
                        k,
                        max_depth: depth,
                        ..config.rf.params()
                    });
                }
            }
            let labels: Vec<String> =
                points.iter().map(|p| format!("trees={} max_depth={}", p.k, p.max_depth)).collect();
            let report = cross_validate(&train, &points, grid.folds, gs_seed, |tr, te, p| {
                rf_auc(tr, te, p, gs_seed)
            })?;
            (labels, report)
        }
        "knn" => {
            let points = grid.k.clone().unwrap_or_else(|| vec![config.knn.k]);
            let labels: Vec<String> = points.iter().map(|k| format!("k={k}")).collect();
            let report = cross_validate(&train, &points, grid.folds, gs_seed, |tr, te, &k| {
                let model = fit_knn(&tr.matrix, &tr.target, k)?;
                rfne_core::auc(&knn_score(&model, &te.matrix)?, &te.target)
            })?;
            (labels, report)
        }
        "logistic" => {
            let points = grid.lambda.clone().unwrap_or_else(|| vec![config.logistic.lambda]);
            let labels: Vec<String> = points.iter().map(|l| format!("lambda={l}")).collect();
            let max_iter = config.logistic.max_iter;
            let report = cross_validate(&train, &points, grid.folds, gs_seed, |tr, te, &l| {
                let reg = if l == 0.0 {
                    rfne_core::Regularization::None
                } else {
                    rfne_core::Regularization::L2 { lambda: l }
                };
                let model = fit_logistic(&tr.matrix, &tr.target, reg, max_iter)?;
                rfne_core::auc(&predict_logistic(&model, &te.matrix)?, &te.target)
            })?;
            (labels, report)
        }
        "rfne" => {
            let base = config.rfne.config(gs_seed);
            let trees = grid.trees.clone().unwrap_or_else(|| vec![base.forest.k]);
            let depths = grid.max_depth.clone().unwrap_or_else(|| vec![base.forest.max_depth]);
            let ds = grid.d.clone().unwrap_or_else(|| vec![base.embed.d]);
            let lengths = grid.walk_length.clone().unwrap_or_else(|| vec![base.walk.l]);
            let walks = grid.walks_per_node.clone().unwrap_or_else(|| vec![base.walk.r]);
            let mut points = Vec::new();
            for &k in &trees {
                for &depth in &depths {
                    for &d in &ds {
                        for &l in &lengths {
                            for &r in &walks {
                                let mut c = base;
                                c.forest.k = k;
                                c.forest.max_depth = depth;
                                c.embed.d = d;
                                c.walk.l = l;
                                c.walk.r = r;
                                points.push(c);
                            }
                        }
                    }
                }
            }
            let labels: Vec<String> = points
                .iter()
                .map(|c| {
                    format!(
                        "trees={} max_depth={} d={} walk_length={} walks_per_node={}",
                        c.forest.k, c.forest.max_depth, c.embed.d, c.walk.l, c.walk.r
                    )
                })
                .collect();
            let report = cross_validate(&train, &points, grid.folds, gs_seed, |tr, te, c| {
                Ok(rfne_auc(tr, te, c, config)?.0)
            })?;
            (labels, report)
        }
        other => {
            return Err(Error::config(format!(
                "unknown gridsearch method {other:?}; available: rf, knn, logistic, rfne"
            )))
        }
    };

    let fold_headers: Vec<String> = (1..=grid.folds).map(|f| format!("fold_{f}")).collect();
    let mut headers: Vec<&str> = vec!["point"];
    headers.extend(fold_headers.iter().map(String::as_str));
    headers.extend(["mean", "sd", "best"]);
    let mut human = Table::new(&headers);
    let mut machine = Table::new(&headers);
    for (i, label) in labels.iter().enumerate() {
        let best = if i == report.best { "*" } else { "" };
        let mut hrow = vec![label.clone()];
        let mut mrow = vec![label.clone()];
        for &a in &report.fold_aucs[i] {
            hrow.push(fmt4(a));
            mrow.push(fmt_full(a));
        }
        hrow.extend([fmt4(report.mean_auc[i]), fmt4(report.sd_auc[i]), best.to_string()]);
        mrow.extend([
            fmt_full(report.mean_auc[i]),
            fmt_full(report.sd_auc[i]),
            u8::from(i == report.best).to_string(),
        ]);
        human.row(hrow);
        machine.row(mrow);
    }

    let text = format!(
        "gridsearch: method {} over {} points, {}-fold, seed {gs_seed}, {} train rows\n{}best: {} (mean AUC {}, sd {})\n",
        grid.method,
        labels.len(),
        grid.folds,
        train.n_rows(),
        human.aligned(),
        labels[report.best],
        fmt4(report.mean_auc[report.best]),
        fmt4(report.sd_auc[report.best]),
    );
    print!("{text}");
    write_report(&out, "gridsearch", &text, &machine.tsv())?;
    Ok(())
}

fn percent(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn contingency_text(table: &ContingencyTable) -> String {
    let mut t = Table::new(&["", "target=0", "target=1"]);
    t.row(vec![
        "out".to_string(),
        table.counts[0][0].to_string(),
        table.counts[0][1].to_string(),
    ]);
    t.row(vec![
        "in".to_string(),
        table.counts[1][0].to_string(),
        table.counts[1][1].to_string(),
    ]);
    t.aligned()
}

fn found_report(report: &DiscoveryReport, model: &RfneModel, alpha: f64, rows: usize) -> String {
    let schema = &model.encoding.schema;
    let mut text = String::new();
    text.push_str(&format!(
        "significant features (p < {alpha}, positive log odds): {} of {} tested\n",
        report.candidates.len(),
        report.kept_features.len()
    ));
    text.push_str(&format!(
        "selected tree: {} (summed log odds {})\n",
        report.tree,
        fmt4(report.tree_score)
    ));
    text.push_str(&format!(
        "nearest leaf to positive center of mass: node {} (distance {})\n",
        report.leaf,
        fmt4(report.leaf_distance)
    ));
    text.push_str(&format!("rule: {}\n", report.rule.render(schema)));
    text.push_str(&format!(
        "segment: {} of {rows} rows in ({})\n",
        report.n_in,
        percent(report.n_in as f64 / rows as f64)
    ));
    text.push_str(&format!(
        "rate in segment: {}  rate outside: {}  overall: {}  lift: {:.2}\n",
        percent(report.rate_in),
        percent(report.rate_out),
        percent(report.rate_overall),
        report.lift
    ));
    text.push_str("contingency (segment x target):\n");
    text.push_str(&contingency_text(&report.table));
    text.push_str(&format!(
        "chi-square: {} (p-value {})\n",
        fmt4(report.chi_square),
        fmt_p(report.p_value)
    ));
    text
}

/// Discovers a segment rule for a column of the data. Without a model file
/// the pipeline is fitted around the discovery target itself.
pub fn cmd_discover(
    config: &RunConfig,
    model_path: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let section = config
        .discover
        .as_ref()
        .ok_or_else(|| Error::config("config has no [discover] section".to_string()))?;
    let out = out_dir(config, out);
    let master_seed = seed.unwrap_or(section.seed);
    let raw = load_dataset(config)?;

    let (model, encoded, target) = match model_path {
        Some(path) => {
            let model = load_model(&path)?;
            let target = raw.with_feature_as_target(&section.target, &section.positive)?.target;
            let encoded = encode(&raw, &model.encoding)?;
            (model, encoded, target)
        }
        None => {
            let retargeted = raw.with_feature_as_target(&section.target, &section.positive)?;
            let map = fit_encoding(&retargeted)?;
            let encoded = encode(&retargeted, &map)?;
            let model = fit_rfne(&encoded, &section.config(master_seed))?;
            let target = encoded.target.clone();
            (model, encoded, target)
        }
    };

    let discovery = discover_rule(&model, &encoded, &target, section.alpha)?;
    let rows = encoded.n_rows();

    let header = format!(
        "discover: target {:?} (positive {:?}), alpha {}, {} rows, seed {master_seed}\n",
        section.target, section.positive, section.alpha, rows
    );
    let mut pairs: Vec<(&str, String)> = vec![
        ("target", section.target.clone()),
        ("positive", section.positive.clone()),
        ("alpha", fmt_full(section.alpha)),
        ("rows", rows.to_string()),
        ("seed", master_seed.to_string()),
    ];

    match &discovery {
        Discovery::NoSignificantTree { inference } => {
            let (inference_text, inference_tsv) = inference_tables(inference);
            let text = format!(
                "{header}no significant tree at alpha {}: no embedding feature reaches \
                 p < alpha with positive log odds\ninference table:\n{inference_text}",
                section.alpha
            );
            pairs.push(("status", "no_significant_tree".to_string()));
            pairs.push(("features_tested", (inference.rows.len() - 1).to_string()));
            pairs.push(("candidates", "0".to_string()));
            let machine: String =
                pairs.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect::<Vec<_>>().join("");
            print!("{text}");
            write_report(&out, "discovery", &text, &machine)?;
            write_file(&out, "inference.tsv", &inference_tsv)?;
        }
        Discovery::Found(report) => {
            let (inference_text, inference_tsv) = inference_tables(&report.inference);
            let body = found_report(report, &model, section.alpha, rows);
            let rule_path = out.join("rule.json");
            let text = format!(
                "{header}{body}rule written to {}\ninference table:\n{inference_text}",
                rule_path.display()
            );
            let n_out = rows - report.n_in;
            pairs.extend([
                ("status", "found".to_string()),
                ("features_tested", report.kept_features.len().to_string()),
                ("candidates", report.candidates.len().to_string()),
                ("tree", report.tree.to_string()),
                ("tree_score", fmt_full(report.tree_score)),
                ("leaf", report.leaf.to_string()),
                ("leaf_distance", fmt_full(report.leaf_distance)),
                ("rule", report.rule.render(&model.encoding.schema)),
                ("n_in", report.n_in.to_string()),
                ("n_out", n_out.to_string()),
                ("rate_in", fmt_full(report.rate_in)),
                ("rate_out", fmt_full(report.rate_out)),
                ("rate_overall", fmt_full(report.rate_overall)),
                ("lift", fmt_full(report.lift)),
                ("chi_square", fmt_full(report.chi_square)),
                ("p_value", fmt_full(report.p_value)),
            ]);
            let machine: String =
                pairs.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect::<Vec<_>>().join("");
            print!("{text}");
            std::fs::create_dir_all(&out)?;
            rulefile::write_rule(&rule_path, &report.rule, &model.encoding.schema)?;
            write_report(&out, "discovery", &text, &machine)?;
            write_file(&out, "inference.tsv", &inference_tsv)?;
        }
    }
    Ok(())
}

fn format_cell(dataset: &Dataset, feature: usize, row: usize) -> String {
    match &dataset.columns[feature] {
        Column::Numeric(values) => values[row].map(|v| v.to_string()).unwrap_or_default(),
        Column::Categorical(values) => values[row]
            .map(|c| dataset.schema.features[feature].categories[c as usize].clone())
            .unwrap_or_default(),
    }
}

/// Writes the raw rows of the segment. The binarized outcome is appended
/// only when its raw values are not already among the feature columns.
fn write_segment_csv(
    path: &Path,
    dataset: &Dataset,
    mask: &[bool],
    outcome_name: &str,
    outcome: &[u8],
) -> Result<()> {
    let append_outcome = dataset.schema.feature_index(outcome_name).is_none();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    let mut header: Vec<String> =
        dataset.schema.features.iter().map(|f| f.name.clone()).collect();
    if append_outcome {
        header.push(outcome_name.to_string());
    }
    writer.write_record(&header).map_err(|e| Error::data(e.to_string()))?;
    for row in 0..dataset.n_rows() {
        if !mask[row] {
            continue;
        }
        let mut record: Vec<String> = (0..dataset.schema.features.len())
            .map(|f| format_cell(dataset, f, row))
            .collect();
        if append_outcome {
            record.push(outcome[row].to_string());
        }
        writer.write_record(&record).map_err(|e| Error::data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Applies one or more rule files (conjunction) and summarizes an outcome
/// column over the selected segment.
pub fn cmd_apply(config: &RunConfig, rules: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let out = out_dir(config, out);
    let raw = load_dataset(config)?;

    let (outcome_name, positive_name, outcome) = match &config.apply {
        Some(section) if section.outcome != raw.schema.target_name => {
            let positive = section.positive.as_ref().ok_or_else(|| {
                Error::config(format!(
                    "apply.positive is required for outcome column {:?}",
                    section.outcome
                ))
            })?;
            let target = raw.with_feature_as_target(&section.outcome, positive)?.target;
            (section.outcome.clone(), positive.clone(), target)
        }
        Some(section) => {
            if section
                .positive
                .as_ref()
                .is_some_and(|p| *p != raw.schema.positive_label)
            {
                return Err(Error::config(format!(
                    "the target column was binarized at load with positive label {:?}",
                    raw.schema.positive_label
                )));
            }
            (raw.schema.target_name.clone(), raw.schema.positive_label.clone(), raw.target.clone())
        }
        None => {
            (raw.schema.target_name.clone(), raw.schema.positive_label.clone(), raw.target.clone())
        }
    };

    let mut mask = vec![true; raw.n_rows()];
    let mut rule_lines = String::new();
    for (i, path) in rules.iter().enumerate() {
        let rule: SegmentRule = rulefile::read_rule(path, &raw.schema)?;
        rule_lines.push_str(&format!(
            "rule {} ({}): {}\n",
            i + 1,
            path.display(),
            rule.render(&raw.schema)
        ));
        for (m, r) in mask.iter_mut().zip(apply_rule(&raw, &rule)?) {
            *m &= r;
        }
    }

    let n_in = mask.iter().filter(|&&m| m).count();
    let n_out = raw.n_rows() - n_in;
    let pos_in = mask.iter().zip(&outcome).filter(|(&m, &t)| m && t == 1).count();
    let pos_out = outcome.iter().filter(|&&t| t == 1).count() - pos_in;
    let rate_in = if n_in > 0 { pos_in as f64 / n_in as f64 } else { f64::NAN };
    let rate_out = if n_out > 0 { pos_out as f64 / n_out as f64 } else { f64::NAN };
    let rate_overall = (pos_in + pos_out) as f64 / raw.n_rows() as f64;
    let lift = rate_in / rate_overall;

    let table = ContingencyTable::from_masks(&mask, &outcome)?;
    let chi: Option<ChiSquareTest> = match chi_square(&table) {
        Ok(test) => Some(test),
        Err(Error::Data(_)) => None,
        Err(e) => return Err(e),
    };

    let segment_path = out.join("segment.csv");
    std::fs::create_dir_all(&out)?;
    write_segment_csv(&segment_path, &raw, &mask, &outcome_name, &outcome)?;

    let fmt_rate = |r: f64| if r.is_nan() { "-".to_string() } else { percent(r) };
    let mut text = format!(
        "apply: {} rule file(s) over {} rows, outcome {outcome_name:?} (positive {positive_name:?})\n{rule_lines}",
        rules.len(),
        raw.n_rows()
    );
    text.push_str(&format!(
        "segment: {n_in} rows in ({})\n",
        percent(n_in as f64 / raw.n_rows() as f64)
    ));
    text.push_str(&format!(
        "rate in segment: {}  rate outside: {}  overall: {}  lift: {:.2}\n",
        fmt_rate(rate_in),
        fmt_rate(rate_out),
        percent(rate_overall),
        lift
    ));
    text.push_str("contingency (segment x outcome):\n");
    text.push_str(&contingency_text(&table));
    match &chi {
        Some(test) => text.push_str(&format!(
            "chi-square: {} (p-value {})\n",
            fmt4(test.statistic),
            fmt_p(test.p_value)
        )),
        None => text.push_str("chi-square: undefined (a contingency marginal is zero)\n"),
    }
    text.push_str(&format!("segment rows written to {}\n", segment_path.display()));

    let nan_full = |v: f64| if v.is_nan() { "NA".to_string() } else { fmt_full(v) };
    let mut pairs: Vec<(&str, String)> = vec![
        ("rules", rules.len().to_string()),
        ("rows", raw.n_rows().to_string()),
        ("outcome", outcome_name.clone()),
        ("positive", positive_name.clone()),
        ("n_in", n_in.to_string()),
        ("n_out", n_out.to_string()),
        ("rate_in", nan_full(rate_in)),
        ("rate_out", nan_full(rate_out)),
        ("rate_overall", fmt_full(rate_overall)),
        ("lift", nan_full(lift)),
    ];
    match &chi {
        Some(test) => pairs.extend([
            ("chi_square", fmt_full(test.statistic)),
            ("p_value", fmt_full(test.p_value)),
        ]),
        None => pairs.extend([("chi_square", "NA".to_string()), ("p_value", "NA".to_string())]),
    }
    let machine: String =
        pairs.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect::<Vec<_>>().join("");
    print!("{text}");
    write_report(&out, "apply", &text, &machine)?;
    Ok(())
}
