//! Grid of architecture and loss ablations evaluated on one task.

use serde::{Deserialize, Serialize};

use crate::data::TaggingTask;
use crate::error::Result;
use crate::eval::{evaluate, train_baseline, BaselineMode, EvalSplit, ReportMeta, SubsetReport};
use crate::training::{train, TrainConfig};

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub config_hash: String,
    pub epochs: usize,
    pub without_tags: SubsetReport,
    pub partial_tags: SubsetReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split: EvalSplit,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Named configurations derived from `base`: dual loss off, tag names off,
/// shared update matrix, GAT-style propagation and 1 to 4 layers.
pub fn ablation_grid(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut grid = vec![
        ("taggnn".to_string(), base.clone()),
        (
            "w/o L2".into(),
            TrainConfig {
                gamma: 0.0,
                ..base.clone()
            },
        ),
        (
            "w/o L2 & TNE".into(),
            TrainConfig {
                gamma: 0.0,
                tag_name_embeddings: false,
                ..base.clone()
            },
        ),
        (
            "homogeneous".into(),
            TrainConfig {
                heterogeneous: false,
                ..base.clone()
            },
        ),
        (
            "gat".into(),
            TrainConfig {
                heterogeneous: false,
                gated: false,
                ..base.clone()
            },
        ),
    ];
    for n in 1..=4 {
        grid.push((
            format!("layers={n}"),
            TrainConfig {
                n_layers: n,
                ..base.clone()
            },
        ));
    }
    grid
}

/// Trains and evaluates every grid row, plus both bag-of-words baselines
/// when `baselines` is set.
pub fn run_ablation(
    task: &TaggingTask,
    base: &TrainConfig,
    split: EvalSplit,
    ks: &[usize],
    baselines: bool,
    mut progress: impl FnMut(&str),
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let mut push = |name: String, cfg: &TrainConfig, epochs: usize, report: crate::eval::EvalReport| {
        rows.push(AblationRow {
            name,
            config_hash: cfg.hash(),
            epochs,
            without_tags: report.without_tags,
            partial_tags: report.partial_tags,
        });
    };
    let meta = |name: &str, cfg: &TrainConfig, epochs: usize| ReportMeta {
        model: name.to_string(),
        split,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        epochs,
    };
    for (name, cfg) in ablation_grid(base) {
        progress(&name);
        let (model, log) = train(task, &cfg)?;
        let epochs = log.epochs.len();
        let report = evaluate(&model, task, None, ks, meta(&name, &cfg, epochs))?;
        push(name, &cfg, epochs, report);
    }
    if baselines {
        for (name, mode) in [
            ("fasttext-i", BaselineMode::ItemOnly),
            ("fasttext-qi", BaselineMode::ItemPlusQueries),
        ] {
            progress(name);
            let (model, log) = train_baseline(task, mode, base)?;
            let epochs = log.epochs.len();
            let report = evaluate(&model, task, None, ks, meta(name, base, epochs))?;
            push(name.to_string(), base, epochs, report);
        }
    }
    Ok(AblationReport {
        split,
        seed: base.seed,
        rows,
    })
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text table, one row per configuration.
    pub fn to_table(&self, ks: &[usize]) -> String {
        let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut head = format!("{:<16}", "model");
        for part in ["without", "partial"] {
            for k in ks {
                head.push_str(&format!(" {:>9}", format!("{part}@{k}")));
            }
        }
        let mut out = vec![head];
        for r in &self.rows {
            let mut line = format!("{:<16}", r.name);
            for sub in [&r.without_tags, &r.partial_tags] {
                for &k in ks {
                    line.push_str(&format!(" {:>9}", cell(sub.at(k))));
                }
            }
            out.push(line);
        }
        out.join("\n") + "\n"
    }
}
