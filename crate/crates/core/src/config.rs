//! Run configuration for the coordinator and the data partners.
//!
//! Coordinator keys use the parameter names of the original analysis-center
//! macro verbatim (`RunID`, `dp_cd_list`, `regr_type_cd`, ...), so an existing
//! macro call translates line for line into a TOML file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::error::{DraError, Result};
use crate::model::Family;

pub const INTERCEPT_LABEL: &str = "Intercept";

pub const DEFAULT_XCONV: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 20;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_GROUPS: usize = 10;
pub const DEFAULT_WAIT_MIN_SECS: f64 = 3.0;
pub const DEFAULT_WAIT_MAX_SECS: f64 = 7200.0;
pub const DEFAULT_RUN_DEADLINE_SECS: f64 = 4.0 * 3600.0;
pub const DEFAULT_MAX_GROUPS: usize = 10_000;
pub const DEFAULT_MIN_COUNT: u64 = 6;
pub const DEFAULT_REQUEST_ID: &str = "request_1";

/// Full description of one regression run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub run_id: String,
    pub request_id: String,
    pub reg_ds_in: String,
    pub dp_cd_list: Vec<u32>,
    pub family: Family,
    pub dependent_var: String,
    pub independent_vars: Vec<String>,
    pub intercept: bool,
    pub freq_var: Option<String>,
    pub weight_var: Option<String>,
    pub initial_estimates: Option<String>,
    pub xconv: f64,
    pub max_iter_nb: usize,
    pub alpha: f64,
    pub groups: usize,
    pub wait_time_min: f64,
    pub wait_time_max: f64,
    pub run_deadline: f64,
    pub test_env: bool,
    pub max_numb_of_grp: usize,
    pub min_count_per_grp_glob: u64,
}

impl ModelSpec {
    /// Minimal spec with every optional parameter at its default.
    pub fn new(
        run_id: impl Into<String>,
        family: Family,
        dependent_var: impl Into<String>,
        independent_vars: &[&str],
    ) -> Self {
        Self {
            run_id: run_id.into(),
            request_id: DEFAULT_REQUEST_ID.to_string(),
            reg_ds_in: "analytic".to_string(),
            dp_cd_list: vec![1],
            family,
            dependent_var: dependent_var.into(),
            independent_vars: independent_vars.iter().map(|s| s.to_string()).collect(),
            intercept: true,
            freq_var: None,
            weight_var: None,
            initial_estimates: None,
            xconv: DEFAULT_XCONV,
            max_iter_nb: DEFAULT_MAX_ITER,
            alpha: DEFAULT_ALPHA,
            groups: DEFAULT_GROUPS,
            wait_time_min: DEFAULT_WAIT_MIN_SECS,
            wait_time_max: DEFAULT_WAIT_MAX_SECS,
            run_deadline: DEFAULT_RUN_DEADLINE_SECS,
            test_env: false,
            max_numb_of_grp: DEFAULT_MAX_GROUPS,
            min_count_per_grp_glob: DEFAULT_MIN_COUNT,
        }
    }

    /// Coefficient labels in design-column order.
    pub fn parameter_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.independent_vars.len() + 1);
        if self.intercept {
            labels.push(INTERCEPT_LABEL.to_string());
        }
        labels.extend(self.independent_vars.iter().cloned());
        labels
    }

    pub fn n_params(&self) -> usize {
        self.independent_vars.len() + usize::from(self.intercept)
    }

    pub fn prefix(&self) -> &str {
        &self.run_id
    }

    pub fn poll_interval_min(&self) -> Duration {
        Duration::from_secs_f64(self.wait_time_min)
    }

    pub fn poll_interval_max(&self) -> Duration {
        Duration::from_secs_f64(self.wait_time_max)
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_secs_f64(self.run_deadline)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DraError::Config(m));
        if self.run_id.is_empty() {
            return bad("RunID must not be empty".into());
        }
        if self.dp_cd_list.is_empty() {
            return bad("dp_cd_list must name at least one data partner".into());
        }
        let mut sorted = self.dp_cd_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.dp_cd_list.len() {
            return bad("dp_cd_list contains duplicates".into());
        }
        if let Some(dp) = self.dp_cd_list.iter().find(|&&d| d == 0 || d > 999) {
            return bad(format!("data partner code {dp} must be in 1..=999"));
        }
        if self.dependent_var.is_empty() {
            return bad("dependent_vars is required".into());
        }
        if self.n_params() == 0 {
            return bad("model has no parameters (NOINT with no independent_vars)".into());
        }
        let mut names: Vec<String> = self.independent_vars.iter().map(|v| v.to_lowercase()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.independent_vars.len() {
            return bad("independent_vars contains duplicates".into());
        }
        if !(self.xconv > 0.0) {
            return bad("xconv must be positive".into());
        }
        if self.max_iter_nb == 0 {
            return bad("max_iter_nb must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)".into());
        }
        if self.groups == 0 || self.max_numb_of_grp == 0 {
            return bad("groups and max_numb_of_grp must be positive".into());
        }
        if self.min_count_per_grp_glob == 0 {
            return bad("min_count_per_grp_glob must be at least 1".into());
        }
        if !(self.wait_time_min > 0.0 && self.wait_time_max >= self.wait_time_min) {
            return bad("need 0 < wait_time_min <= wait_time_max".into());
        }
        if !(self.run_deadline > 0.0) {
            return bad("run_deadline must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawRunConfig =
            toml::from_str(text).map_err(|e| DraError::Config(format!("run configuration: {e}")))?;
        let spec = raw.into_spec()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DraError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ListValue {
    Text(String),
    Numbers(Vec<u32>),
    Names(Vec<String>),
}

impl ListValue {
    fn items(&self) -> Vec<String> {
        match self {
            ListValue::Text(s) => s.split_whitespace().map(str::to_string).collect(),
            ListValue::Numbers(v) => v.iter().map(u32::to_string).collect(),
            ListValue::Names(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FlagValue {
    Flag(bool),
    Text(String),
    Number(i64),
}

impl FlagValue {
    fn is_set(&self, keyword: &str) -> bool {
        match self {
            FlagValue::Flag(b) => *b,
            FlagValue::Text(s) => s.eq_ignore_ascii_case(keyword) || s == "1",
            FlagValue::Number(n) => *n != 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    #[serde(rename = "RunID")]
    run_id: String,
    #[serde(rename = "MSReqID")]
    request_id: Option<String>,
    reg_ds_in: String,
    dp_cd_list: ListValue,
    regr_type_cd: u32,
    dependent_vars: String,
    independent_vars: ListValue,
    #[serde(rename = "NOINT")]
    noint: Option<FlagValue>,
    #[serde(alias = "Freq")]
    freq: Option<String>,
    #[serde(alias = "Weight")]
    weight: Option<String>,
    #[serde(alias = "tbl_initial_est")]
    tbl_intial_est: Option<String>,
    xconv: Option<f64>,
    max_iter_nb: Option<usize>,
    alpha: Option<f64>,
    groups: Option<usize>,
    wait_time_min: Option<f64>,
    wait_time_max: Option<f64>,
    run_deadline: Option<f64>,
    test_env_cd: Option<FlagValue>,
    max_numb_of_grp: Option<usize>,
    min_count_per_grp_glob: Option<u64>,
}

impl RawRunConfig {
    fn into_spec(self) -> Result<ModelSpec> {
        let family = Family::from_code(self.regr_type_cd)?;
        let dp_cd_list = self
            .dp_cd_list
            .items()
            .iter()
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| DraError::Config(format!("dp_cd_list entry `{s}` is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dependent: Vec<&str> = self.dependent_vars.split_whitespace().collect();
        if dependent.len() != 1 {
            return Err(DraError::Config("dependent_vars must name exactly one variable".into()));
        }
        let non_empty = |o: Option<String>| o.filter(|s| !s.trim().is_empty());
        Ok(ModelSpec {
            run_id: self.run_id,
            request_id: self.request_id.unwrap_or_else(|| DEFAULT_REQUEST_ID.to_string()),
            reg_ds_in: self.reg_ds_in,
            dp_cd_list,
            family,
            dependent_var: dependent[0].to_string(),
            independent_vars: self.independent_vars.items(),
            intercept: !self.noint.is_some_and(|f| f.is_set("NOINT")),
            freq_var: non_empty(self.freq),
            weight_var: non_empty(self.weight),
            initial_estimates: non_empty(self.tbl_intial_est),
            xconv: self.xconv.unwrap_or(DEFAULT_XCONV),
            max_iter_nb: self.max_iter_nb.unwrap_or(DEFAULT_MAX_ITER),
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            groups: self.groups.unwrap_or(DEFAULT_GROUPS),
            wait_time_min: self.wait_time_min.unwrap_or(DEFAULT_WAIT_MIN_SECS),
            wait_time_max: self.wait_time_max.unwrap_or(DEFAULT_WAIT_MAX_SECS),
            run_deadline: self.run_deadline.unwrap_or(DEFAULT_RUN_DEADLINE_SECS),
            test_env: self.test_env_cd.is_some_and(|f| f.is_set("1")),
            max_numb_of_grp: self.max_numb_of_grp.unwrap_or(DEFAULT_MAX_GROUPS),
            min_count_per_grp_glob: self.min_count_per_grp_glob.unwrap_or(DEFAULT_MIN_COUNT),
        })
    }
}

/// Site-side settings: the three values a data partner edits by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    pub dp_cd: u32,
    pub data_in_dir: PathBuf,
    pub min_count_per_grp: Option<u64>,
    pub request_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkerConfig {
    dp_cd: u32,
    data_in_dir: PathBuf,
    min_count_per_grp: Option<u64>,
    #[serde(rename = "MSReqID")]
    request_id: Option<String>,
}

impl WorkerConfig {
    pub fn new(dp_cd: u32, data_in_dir: impl Into<PathBuf>) -> Self {
        Self {
            dp_cd,
            data_in_dir: data_in_dir.into(),
            min_count_per_grp: None,
            request_id: DEFAULT_REQUEST_ID.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dp_cd == 0 || self.dp_cd > 999 {
            return Err(DraError::Config(format!(
                "dp_cd {} must be a positive code of at most 3 digits",
                self.dp_cd
            )));
        }
        if self.min_count_per_grp == Some(0) {
            return Err(DraError::Config("min_count_per_grp must be at least 1".into()));
        }
        Ok(())
    }

    /// Site override wins over the coordinator's global floor.
    pub fn effective_min_count(&self, global: u64) -> u64 {
        self.min_count_per_grp.unwrap_or(global)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawWorkerConfig =
            toml::from_str(text).map_err(|e| DraError::Config(format!("worker configuration: {e}")))?;
        let cfg = Self {
            dp_cd: raw.dp_cd,
            data_in_dir: raw.data_in_dir,
            min_count_per_grp: raw.min_count_per_grp,
            request_id: raw.request_id.unwrap_or_else(|| DEFAULT_REQUEST_ID.to_string()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DraError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
