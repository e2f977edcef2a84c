//! Serialized report shapes shared by the CLI commands, plus the provenance
//! header every output carries.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::{EciEvaluation, RlofValue};
use crate::design::{Design, DofAccount};

/// Tool version, seed, and a hash of the governing configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config_bytes: &[u8]) -> Self {
        let digest = Sha256::digest(config_bytes);
        Provenance {
            tool: "screenopt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }

    /// One-line form used as a `#` comment atop CSV outputs.
    pub fn csv_comment(&self) -> String {
        match self.seed {
            Some(s) => format!(
                "# {} {} seed={} config_sha256={}\n",
                self.tool, self.version, s, self.config_sha256
            ),
            None => {
                format!("# {} {} config_sha256={}\n", self.tool, self.version, self.config_sha256)
            }
        }
    }
}

/// `evaluate` output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionReport {
    pub provenance: Provenance,
    pub design_id: String,
    pub n: usize,
    pub k: usize,
    pub dof: DofAccount,
    pub eci: EciEvaluation,
    pub alias: AliasReport,
    pub sqrt_v: Vec<f64>,
    pub d_efficiency: f64,
    /// Gilmour-Trinca criteria; absent when the design has no pure error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<GtReport>,
    /// The rLOF criterion value.
    pub rlof: f64,
    pub rlof_detail: RlofValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AliasReport {
    pub row_norms: Vec<f64>,
    pub mean_abs: f64,
    pub max_abs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GtReport {
    pub modified_d: f64,
    pub modified_a: f64,
    pub alpha: f64,
}

/// Serialized design embedded in pool files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignJson {
    pub factor_names: Vec<String>,
    pub settings: Vec<Vec<f64>>,
    pub replicate_of: Vec<Option<usize>>,
    pub levels: Vec<Vec<f64>>,
}

impl DesignJson {
    pub fn from_design(d: &Design) -> Self {
        DesignJson {
            factor_names: d.factor_names().to_vec(),
            settings: (0..d.n()).map(|i| d.settings().row(i).to_vec()).collect(),
            replicate_of: d.replicate_of().to_vec(),
            levels: d.levels().to_vec(),
        }
    }

    pub fn to_design(&self) -> crate::error::Result<Design> {
        let settings = crate::numerics::Mat::from_rows(&self.settings)?;
        Design::new(
            settings,
            self.factor_names.clone(),
            self.replicate_of.clone(),
            self.levels.clone(),
        )
    }
}
