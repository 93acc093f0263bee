//! Machine report (stable JSON schema) and the human tables printed to
//! stdout. The JSON is the source of truth for tests; identical inputs must
//! produce byte-identical JSON apart from the suppressible timestamp.

use serde::Serialize;

#[derive(Serialize)]
pub struct Report {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<Vec<QueryReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guidance: Option<GuidanceSummary>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl Report {
    pub fn new(scenario: impl Into<String>) -> Self {
        Report {
            scenario: scenario.into(),
            queries: None,
            dynamics: None,
            guidance: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

#[derive(Serialize)]
pub struct QueryReport {
    pub query: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Serialize)]
pub struct DynamicsReport {
    pub rule: String,
    pub n: usize,
    pub seed: u64,
    pub estimates: Vec<EstimateRow>,
    pub equivariance: Vec<EquivarianceRow>,
}

#[derive(Serialize)]
pub struct EstimateRow {
    pub query: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Serialize)]
pub struct EquivarianceRow {
    pub epoch: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Serialize)]
pub struct GuidanceSummary {
    pub n: usize,
    pub seed: u64,
    pub frames: usize,
    pub escaped: usize,
    pub crossing_fraction: f64,
    pub p_box1_start: f64,
    pub p_box1_end: f64,
    pub p_box1_throughout: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub norm_drift: f64,
    pub overlap_bound: f64,
}

/// Widest query string, for table alignment.
fn query_width<'a>(queries: impl Iterator<Item = &'a str>) -> usize {
    queries.map(str::len).max().unwrap_or(0).max(5)
}

pub fn render_human(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("scenario: {}\n", report.scenario));
    if let Some(queries) = &report.queries {
        out.push_str("\nborn queries\n");
        let w = query_width(queries.iter().map(|q| q.query.as_str()));
        for q in queries {
            match q.value {
                Some(v) => out.push_str(&format!("  {:<w$}  {:>13.6}\n", q.query, v)),
                None => out.push_str(&format!("  {:<w$}  {:>13}\n", q.query, "INDETERMINATE")),
            }
            if let Some(reason) = &q.reason {
                out.push_str(&format!("    reason: {reason}\n"));
            }
        }
    }
    if let Some(dyn_) = &report.dynamics {
        out.push_str(&format!(
            "\ndynamics: {}  n={}  seed={}\n",
            dyn_.rule, dyn_.n, dyn_.seed
        ));
        let w = query_width(dyn_.estimates.iter().map(|e| e.query.as_str()));
        out.push_str(&format!("  {:<w$}  {:>13}  {:>10}\n", "query", "estimate", "std.err"));
        for e in &dyn_.estimates {
            out.push_str(&format!(
                "  {:<w$}  {:>13.6}  {:>10.6}\n",
                e.query, e.estimate, e.std_error
            ));
        }
        out.push_str("  equivariance vs Born weights (chi-square per epoch)\n");
        out.push_str(&format!(
            "  {:>5}  {:>12}  {:>4}  {:>10}\n",
            "epoch", "statistic", "dof", "p-value"
        ));
        for row in &dyn_.equivariance {
            out.push_str(&format!(
                "  {:>5}  {:>12.6}  {:>4}  {:>10.6}\n",
                row.epoch, row.statistic, row.dof, row.p_value
            ));
        }
    }
    if let Some(g) = &report.guidance {
        out.push_str(&format!(
            "\nguidance: n={}  seed={}  frames={}\n",
            g.n, g.seed, g.frames
        ));
        out.push_str(&format!("  {:<22}{:>13.6}\n", "P(box1 start)", g.p_box1_start));
        out.push_str(&format!("  {:<22}{:>13.6}\n", "P(box1 end)", g.p_box1_end));
        out.push_str(&format!(
            "  {:<22}{:>13.6}\n",
            "P(box1 throughout)", g.p_box1_throughout
        ));
        out.push_str(&format!(
            "  {:<22}{:>13.6}\n",
            "crossing fraction", g.crossing_fraction
        ));
        out.push_str(&format!("  {:<22}{:>13}\n", "escaped", g.escaped));
        out.push_str(&format!(
            "  {:<22}{:>13.6}  (p = {:.6})\n",
            "KS statistic", g.ks_statistic, g.ks_p_value
        ));
        out.push_str(&format!("  {:<22}{:>13.3e}\n", "norm drift", g.norm_drift));
        out.push_str(&format!("  {:<22}{:>13.3e}\n", "overlap bound", g.overlap_bound));
    }
    out
}
