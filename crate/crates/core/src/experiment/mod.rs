//! Config files, sweep grids and the line-delimited JSON result format.
//!
//! A results file starts with a header line, followed by `round` lines (one per
//! federated round, tagged with the run's config hash) and one `result` line per run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::AlphaMode;
use crate::data::{filter_and_split, load_dataset, DatasetFormat, InteractionDataset, SplitParams};
use crate::error::{Error, Result};
use crate::federation::{run_experiment_with, RoundRecord, RunConfig, RunReport};

pub const RESULTS_FORMAT: &str = "fedgraph-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub format: DatasetFormat,
}

impl DatasetSpec {
    pub fn resolve(&self, base: Option<&Path>) -> PathBuf {
        match base {
            Some(dir) if self.path.is_relative() => dir.join(&self.path),
            _ => self.path.clone(),
        }
    }
}

/// Optional lists of values to take the cartesian product over.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_strategy: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_strategy: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_mode: Option<Vec<AlphaMode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clients_per_round: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Vec<u64>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self == &SweepAxes::default()
    }

    fn validate(&self) -> Result<()> {
        let lens = [
            ("user_strategy", self.user_strategy.as_ref().map(Vec::len)),
            ("item_strategy", self.item_strategy.as_ref().map(Vec::len)),
            ("alpha_mode", self.alpha_mode.as_ref().map(Vec::len)),
            ("clients_per_round", self.clients_per_round.as_ref().map(Vec::len)),
            ("seed", self.seed.as_ref().map(Vec::len)),
        ];
        match lens.iter().find(|(_, len)| *len == Some(0)) {
            Some((name, _)) => Err(Error::Config(format!("sweep.{name} must not be empty"))),
            None => Ok(()),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub dataset: DatasetSpec,
    pub preprocess: SplitParams,
    pub run: RunConfig,
}

impl CellConfig {
    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub preprocess: SplitParams,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            preprocess: SplitParams::default(),
            run: RunConfig::default(),
            sweep: SweepAxes::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.sweep.validate()?;
        for cell in self.cells() {
            cell.run.validate()?;
        }
        Ok(())
    }

    /// Number of runs in the grid: the product of the axis lengths.
    pub fn n_cells(&self) -> usize {
        let len = |n: Option<usize>| n.unwrap_or(1);
        len(self.sweep.user_strategy.as_ref().map(Vec::len))
            * len(self.sweep.item_strategy.as_ref().map(Vec::len))
            * len(self.sweep.alpha_mode.as_ref().map(Vec::len))
            * len(self.sweep.clients_per_round.as_ref().map(Vec::len))
            * len(self.sweep.seed.as_ref().map(Vec::len))
    }

    /// The grid in row-major order over user strategy, item strategy, alpha mode,
    /// clients per round and seed.
    pub fn cells(&self) -> Vec<CellConfig> {
        let base = &self.run;
        let axis = |values: &Option<Vec<_>>, default| values.clone().unwrap_or_else(|| vec![default]);
        let users = axis(&self.sweep.user_strategy, base.aggregation.user_strategy.clone());
        let items = axis(&self.sweep.item_strategy, base.aggregation.item_strategy.clone());
        let modes = self.sweep.alpha_mode.clone().unwrap_or_else(|| vec![base.aggregation.alpha_mode]);
        let counts = self.sweep.clients_per_round.clone().unwrap_or_else(|| vec![base.clients_per_round]);
        let seeds = self.sweep.seed.clone().unwrap_or_else(|| vec![base.seed]);

        let mut cells = Vec::with_capacity(self.n_cells());
        for user in &users {
            for item in &items {
                for &mode in &modes {
                    for &clients in &counts {
                        for &seed in &seeds {
                            let mut run = base.clone();
                            run.aggregation.user_strategy = user.clone();
                            run.aggregation.item_strategy = item.clone();
                            run.aggregation.alpha_mode = mode;
                            run.clients_per_round = clients;
                            run.seed = seed;
                            cells.push(CellConfig {
                                dataset: self.dataset.clone(),
                                preprocess: self.preprocess.clone(),
                                run,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// Loads and splits the dataset named by `dataset`.
pub fn prepare_dataset(dataset: &DatasetSpec, preprocess: &SplitParams, base: Option<&Path>) -> Result<InteractionDataset> {
    let raw = load_dataset(dataset.resolve(base), dataset.format)?;
    filter_and_split(&raw, preprocess)
}

/// Final numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub user_strategy: String,
    pub item_strategy: String,
    pub alpha_mode: AlphaMode,
    pub clients_per_round: usize,
    pub seed: u64,
    pub k: usize,
    pub test_ndcg: f64,
    pub test_ndcg_ci95: f64,
    pub test_hr: f64,
    pub test_hr_ci95: f64,
    pub best_round: usize,
    pub best_valid_ndcg: f64,
    pub rounds_run: usize,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
    pub config: CellConfig,
}

impl ResultRecord {
    pub fn from_report(cell: &CellConfig, report: &RunReport, wall_time_secs: f64) -> Self {
        let run = &cell.run;
        Self {
            config_hash: cell.hash(),
            user_strategy: run.aggregation.user_strategy.clone(),
            item_strategy: run.aggregation.item_strategy.clone(),
            alpha_mode: run.aggregation.alpha_mode,
            clients_per_round: run.clients_per_round,
            seed: run.seed,
            k: run.eval.k,
            test_ndcg: report.test.ndcg.mean,
            test_ndcg_ci95: report.test.ndcg.ci95_halfwidth,
            test_hr: report.test.hr.mean,
            test_hr_ci95: report.test.hr.ci95_halfwidth,
            best_round: report.best_round,
            best_valid_ndcg: report.best_valid.ndcg.mean,
            rounds_run: report.rounds.len(),
            stopped_early: report.stopped_early,
            wall_time_secs,
            config: cell.clone(),
        }
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResultLine {
    Header { format: String, version: u32 },
    Round {
        config_hash: String,
        #[serde(flatten)]
        record: RoundRecord,
    },
    Result(ResultRecord),
}

impl ResultLine {
    pub fn header() -> Self {
        ResultLine::Header {
            format: RESULTS_FORMAT.to_string(),
            version: RESULTS_VERSION,
        }
    }
}

/// Serializes appends to one results file; every line is flushed as written.
pub struct ResultWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl ResultWriter {
    /// Creates (or truncates) `path` and writes the header line.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let writer = Self {
            path,
            out: Mutex::new(BufWriter::new(file)),
        };
        writer.append(&ResultLine::header())?;
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, line: &ResultLine) -> Result<()> {
        let json = serde_json::to_string(line).map_err(|e| Error::Serialize(e.to_string()))?;
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(out, "{json}")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes a header followed by `records`, replacing any existing file.
pub fn write_results(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let writer = ResultWriter::create(path)?;
    for r in records {
        writer.append(&ResultLine::Result(r.clone()))?;
    }
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultLine>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        lines.push(parsed);
    }
    Ok(lines)
}

/// Runs one cell, streaming its round log to `writer` and appending the result line.
pub fn run_cell(ds: &InteractionDataset, cell: &CellConfig, writer: Option<&ResultWriter>) -> Result<(ResultRecord, RunReport)> {
    let hash = cell.hash();
    let started = Instant::now();
    let mut write_err = None;
    let report = run_experiment_with(ds, &cell.run, |record| {
        if let (Some(w), None) = (writer, &write_err) {
            let line = ResultLine::Round {
                config_hash: hash.clone(),
                record: record.clone(),
            };
            write_err = w.append(&line).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let record = ResultRecord::from_report(cell, &report, started.elapsed().as_secs_f64());
    if let Some(w) = writer {
        w.append(&ResultLine::Result(record.clone()))?;
    }
    Ok((record, report))
}

/// Runs every cell of the grid in order over one prepared dataset.
pub fn run_sweep(
    ds: &InteractionDataset,
    spec: &ExperimentSpec,
    writer: Option<&ResultWriter>,
) -> Result<Vec<ResultRecord>> {
    spec.cells()
        .iter()
        .map(|cell| run_cell(ds, cell, writer).map(|(record, _)| record))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
[dataset]
path = "ratings.tsv"
format = "movielens-tab"

[preprocess]
min_interactions = 5

[run]
rounds = 3
clients_per_round = 4

[run.aggregation]
alpha_mode = "geometric"
alpha0 = 0.9

[run.expansion]
max_neighbors = "unbounded"

[sweep]
user_strategy = ["fedavg", "simpleavg", "fedmedian", "fedatt", "dist-fedavg"]
item_strategy = ["fedavg", "simpleavg", "fedmedian", "fedatt"]
"#;

    #[test]
    fn parses_with_defaults() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        assert_eq!(spec.dataset.format, DatasetFormat::MovielensTab);
        assert_eq!(spec.preprocess.min_interactions, 5);
        assert_eq!(spec.preprocess.rating_threshold, 3.0);
        assert_eq!(spec.run.rounds, 3);
        assert_eq!(spec.run.patience, 5);
        assert_eq!(spec.run.aggregation.alpha_mode, AlphaMode::Geometric);
        assert_eq!(spec.run.expansion.max_neighbors, None);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        let text = spec.to_toml().unwrap();
        let again = ExperimentSpec::from_toml_str(&text).unwrap();
        assert_eq!(again, spec);
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = SPEC.replace("clients_per_round = 4", "client_per_round = 4");
        let err = ExperimentSpec::from_toml_str(&typo).unwrap_err();
        assert!(err.to_string().contains("client_per_round"), "{err}");
        let typo = SPEC.replace("[sweep]", "[sweep]\nalpha_modes = [\"fixed\"]");
        assert!(ExperimentSpec::from_toml_str(&typo).is_err());
    }

    #[test]
    fn invalid_values_are_reported() {
        let bad = SPEC.replace("rounds = 3", "rounds = 0");
        assert!(ExperimentSpec::from_toml_str(&bad).unwrap_err().to_string().contains("rounds"));
        let bad = SPEC.replace("\"fedatt\", \"dist-fedavg\"]", "\"krum\"]");
        assert!(matches!(ExperimentSpec::from_toml_str(&bad), Err(Error::UnknownStrategy { .. })));
        let bad = SPEC.replace(
            "item_strategy = [\"fedavg\", \"simpleavg\", \"fedmedian\", \"fedatt\"]",
            "item_strategy = []",
        );
        assert!(ExperimentSpec::from_toml_str(&bad).is_err());
    }

    #[test]
    fn strategy_grid_has_twenty_cells() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        let cells = spec.cells();
        assert_eq!(spec.n_cells(), 20);
        assert_eq!(cells.len(), 20);
        assert_eq!(cells[0].run.aggregation.user_strategy, "fedavg");
        assert_eq!(cells[19].run.aggregation.user_strategy, "dist-fedavg");
        assert_eq!(cells[19].run.aggregation.item_strategy, "fedatt");
        let mut hashes: Vec<String> = cells.iter().map(CellConfig::hash).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 20);
    }

    #[test]
    fn grid_size_is_the_product_of_axes() {
        let mut spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        spec.sweep.clients_per_round = Some(vec![5, 10, 20]);
        spec.sweep.seed = Some(vec![1, 2]);
        assert_eq!(spec.n_cells(), 120);
        assert_eq!(spec.cells().len(), 120);
        spec.sweep = SweepAxes::default();
        assert_eq!(spec.cells().len(), 1);
    }

    #[test]
    fn relative_dataset_paths_follow_the_config() {
        let ds = DatasetSpec {
            path: "data/u.data".into(),
            format: DatasetFormat::MovielensTab,
        };
        assert_eq!(ds.resolve(Some(Path::new("/cfg"))), PathBuf::from("/cfg/data/u.data"));
        assert_eq!(ds.resolve(None), PathBuf::from("data/u.data"));
    }

    #[test]
    fn empty_results_file_has_only_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_results(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\"kind\":\"header\",\"format\":\"fedgraph-results\",\"version\":1}\n");
        assert_eq!(read_results(&path).unwrap(), vec![ResultLine::header()]);
    }

    #[test]
    fn round_lines_round_trip() {
        let line = ResultLine::Round {
            config_hash: "ab".into(),
            record: RoundRecord {
                round: 2,
                alpha: Some(0.5),
                selected: vec![1, 4],
                mean_loss: Some(0.25),
                valid_ndcg: None,
                valid_hr: None,
            },
        };
        let json = serde_json::to_string(&line).unwrap();
        assert!(json.starts_with("{\"kind\":\"round\",\"config_hash\":\"ab\",\"round\":2"), "{json}");
        assert_eq!(serde_json::from_str::<ResultLine>(&json).unwrap(), line);
    }
}
