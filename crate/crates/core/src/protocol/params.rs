use crate::config::ModelSpec;
use crate::error::{DraError, Result};
use crate::model::Family;
use crate::wire;

pub const PARAMS_FILE: &str = "vars_nm_value_pairs.csv";
pub const NAME_COLUMN: &str = "M_var_nm";
pub const VALUE_COLUMN: &str = "M_var_value";

pub const REQUIRED_KEYS: [&str; 7] = [
    "reg_ds_in",
    "independent_vars",
    "dependent_vars",
    "regr_type_cd",
    "iter_nb",
    "last_iter_in",
    "end_job_dp_in",
];

const FLAG_KEYS: [&str; 4] = ["last_iter_in", "end_job_dp_in", "NOINT", "test_env_cd"];

/// Ordered name/value pairs sent from the coordinator to every partner.
/// Values are kept verbatim; lists are space separated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamSet {
    pairs: Vec<(String, String)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a value, replacing an existing entry in place.
    pub fn set(&mut self, name: &str, value: impl Into<String>) -> &mut Self {
        let value = value.into();
        match self.pairs.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((name.to_string(), value)),
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, name: &str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| DraError::Protocol(format!("parameter `{name}` is missing")))
    }

    pub fn flag(&self, name: &str) -> Result<bool> {
        match self.require(name)? {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(DraError::Protocol(format!("flag `{name}` has value `{other}`"))),
        }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut rows = vec![vec![NAME_COLUMN.to_string(), VALUE_COLUMN.to_string()]];
        rows.extend(self.pairs.iter().map(|(k, v)| vec![k.clone(), v.clone()]));
        wire::write_rows(&rows)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let rows = wire::read_rows(bytes)?;
        match rows.first() {
            Some(h) if h.len() == 2 && h[0] == NAME_COLUMN && h[1] == VALUE_COLUMN => {}
            _ => {
                return Err(DraError::Protocol(format!(
                    "parameter file must start with `{NAME_COLUMN},{VALUE_COLUMN}`"
                )))
            }
        }
        let mut out = ParamSet::new();
        for r in &rows[1..] {
            if r.len() != 2 {
                return Err(DraError::Protocol("parameter row must have two fields".into()));
            }
            if out.get(&r[0]).is_some() {
                return Err(DraError::Protocol(format!("parameter `{}` appears twice", r[0])));
            }
            out.pairs.push((r[0].clone(), r[1].clone()));
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for key in REQUIRED_KEYS {
            self.require(key)?;
        }
        for key in FLAG_KEYS {
            if self.get(key).is_some() {
                self.flag(key)?;
            }
        }
        match self.require("regr_type_cd")? {
            "1" | "2" => {}
            other => return Err(DraError::Protocol(format!("regr_type_cd `{other}` is not 1 or 2"))),
        }
        self.require("iter_nb")?
            .parse::<usize>()
            .map_err(|_| DraError::Protocol("iter_nb is not a non-negative integer".into()))?;
        Ok(())
    }
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl ParamSet {
    /// Parameters describing `spec` for iteration `iter_nb`.
    pub fn for_spec(spec: &ModelSpec, iter_nb: usize, last_iter: bool) -> Self {
        let mut p = ParamSet::new();
        p.set("RunID", spec.run_id.as_str())
            .set("reg_ds_in", spec.reg_ds_in.as_str())
            .set("independent_vars", spec.independent_vars.join(" "))
            .set("dependent_vars", spec.dependent_var.as_str())
            .set("regr_type_cd", spec.family.code().to_string())
            .set("NOINT", bit(!spec.intercept))
            .set("freq", spec.freq_var.clone().unwrap_or_default())
            .set("weight", spec.weight_var.clone().unwrap_or_default())
            .set("groups", spec.groups.to_string())
            .set("max_numb_of_grp", spec.max_numb_of_grp.to_string())
            .set("min_count_per_grp_glob", spec.min_count_per_grp_glob.to_string())
            .set("test_env_cd", bit(spec.test_env))
            .set("iter_nb", iter_nb.to_string())
            .set("last_iter_in", bit(last_iter))
            .set("end_job_dp_in", bit(last_iter));
        p
    }

    /// The model description a data partner needs, rebuilt from the wire.
    pub fn to_spec(&self) -> Result<ModelSpec> {
        self.validate()?;
        let code: u32 = self.require("regr_type_cd")?.parse().expect("validated");
        let indep: Vec<&str> = self.require("independent_vars")?.split_whitespace().collect();
        let mut spec = ModelSpec::new(
            self.get("RunID").unwrap_or("run"),
            Family::from_code(code)?,
            self.require("dependent_vars")?.trim(),
            &indep,
        );
        spec.reg_ds_in = self.require("reg_ds_in")?.to_string();
        let opt = |k: &str| self.get(k).map(str::trim).filter(|v| !v.is_empty()).map(str::to_string);
        spec.freq_var = opt("freq");
        spec.weight_var = opt("weight");
        if self.get("NOINT").is_some() {
            spec.intercept = !self.flag("NOINT")?;
        }
        if self.get("test_env_cd").is_some() {
            spec.test_env = self.flag("test_env_cd")?;
        }
        let num = |k: &str| -> Result<Option<u64>> {
            self.get(k)
                .map(|v| {
                    v.parse::<u64>()
                        .map_err(|_| DraError::Protocol(format!("parameter `{k}` is not a count")))
                })
                .transpose()
        };
        if let Some(g) = num("groups")? {
            spec.groups = g as usize;
        }
        if let Some(g) = num("max_numb_of_grp")? {
            spec.max_numb_of_grp = g as usize;
        }
        if let Some(m) = num("min_count_per_grp_glob")? {
            spec.min_count_per_grp_glob = m;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.set("reg_ds_in", "linear_karr_2005")
            .set("independent_vars", "crim indus dis dummy_dp_var2 dummy_dp_var3")
            .set("dependent_vars", "medv_high_flag")
            .set("regr_type_cd", "2")
            .set("iter_nb", "1")
            .set("last_iter_in", "0")
            .set("end_job_dp_in", "0");
        p
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let back = ParamSet::decode(&p.encode()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.get("regr_type_cd"), Some("2"));
        assert_eq!(
            back.get("independent_vars"),
            Some("crim indus dis dummy_dp_var2 dummy_dp_var3")
        );
    }

    #[test]
    fn spec_survives_the_wire() {
        let mut spec = ModelSpec::new("dr1", Family::Logistic, "y", &["a", "b"]);
        spec.weight_var = Some("w".into());
        spec.intercept = false;
        spec.min_count_per_grp_glob = 9;
        let p = ParamSet::decode(&ParamSet::for_spec(&spec, 3, false).encode()).unwrap();
        let back = p.to_spec().unwrap();
        assert_eq!(back.independent_vars, spec.independent_vars);
        assert_eq!(back.weight_var.as_deref(), Some("w"));
        assert_eq!(back.freq_var, None);
        assert!(!back.intercept);
        assert_eq!(back.min_count_per_grp_glob, 9);
        assert_eq!(p.get("iter_nb"), Some("3"));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ParamSet::decode(&ParamSet::new().encode()).is_err());
        let mut dup = sample().encode();
        dup.extend_from_slice(b"iter_nb,2\n");
        assert!(ParamSet::decode(&dup).is_err());
        let mut p = sample();
        p.set("end_job_dp_in", "yes");
        assert!(ParamSet::decode(&p.encode()).is_err());
        assert!(ParamSet::decode(b"name,value\n").is_err());
    }
}
