use bandcert::certify::{Certificate, GridScan, ProbeEntry, SearchSummary};
use bandcert::suites::{SuiteReport, TimeReversalStats};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum AngleConvention {
    /// Components in (−π, π].
    #[value(name = "pi")]
    #[serde(rename = "pi")]
    SymmetricPi,
    /// Components in [0, 2π).
    #[value(name = "0..2pi")]
    #[serde(rename = "0..2pi")]
    ZeroTwoPi,
}

impl AngleConvention {
    pub fn apply(self, q: &bandcert::lattice::Quasimomentum) -> Vec<f64> {
        match self {
            AngleConvention::SymmetricPi => q.components().to_vec(),
            AngleConvention::ZeroTwoPi => q.to_zero_two_pi(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputIdentity {
    /// `example`, `file`, `stdin` or `random`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub example_parameters: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportedCertificate {
    /// `alpha_star` in the requested angle convention.
    pub alpha: Vec<f64>,
    #[serde(flatten)]
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOutput {
    pub band: usize,
    pub flat_band: Option<f64>,
    pub searches: Vec<SearchSummary>,
    pub grid: Option<GridScan>,
    pub probe: Vec<ProbeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub suites: Vec<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_reversal: Option<TimeReversalStats>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: InputIdentity,
    pub parameters: serde_json::Value,
    pub certificates: Vec<ReportedCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyOutput>,
    pub timing: Timing,
    pub warnings: Vec<String>,
}
