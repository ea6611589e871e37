//! Flat key-value report and gain files.
//!
//! One `name = value` per line, `#` comment header carrying the tool
//! version and run configuration, floats at 17 significant digits.
//! Diff-friendly and trivially parseable from any language.

use std::collections::HashMap;
use std::fmt;

use nlbound::bounds::GammaReport;
use nlbound::matfun::Mat;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The quoted second constant that circulates for the eps1 = 1e5,
/// eps2 = 0.1 configuration. It does not satisfy `gamma_q2 = eps2 - eps1`
/// and the report flags it whenever that configuration is requested.
pub const QUOTED_INCONSISTENT_GAMMA_Q2: f64 = -9999.89;

fn fnum(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug)]
pub struct ReportParseError(pub String);

impl fmt::Display for ReportParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "report: {}", self.0)
    }
}

impl std::error::Error for ReportParseError {}

/// Serialize a bounds report. Identical inputs produce identical bytes.
pub fn write_report(report: &GammaReport, system_path: &str, tol: f64, budget: u64) -> String {
    let mut out = String::new();
    out.push_str(&format!("# nlbound {TOOL_VERSION} bounds report\n"));
    out.push_str(&format!("# system = {system_path}\n"));
    out.push_str(&format!("# tol = {}\n", fnum(tol)));
    out.push_str(&format!("# budget = {budget}\n"));
    out.push_str(&format!("gamma_l = {}\n", fnum(report.gamma_l)));
    out.push_str(&format!("gamma_s = {}\n", fnum(report.gamma_s)));
    out.push_str(&format!("gamma_s_lb = {}\n", fnum(report.gamma_s_enclosure.lb)));
    out.push_str(&format!("gamma_s_ub = {}\n", fnum(report.gamma_s_enclosure.ub)));
    out.push_str(&format!("gamma_bar = {}\n", fnum(report.gamma_bar)));
    out.push_str(&format!("gamma_lower = {}\n", fnum(report.gamma_lower)));
    out.push_str(&format!(
        "gamma_lower_lb = {}\n",
        fnum(report.gamma_lower_enclosure.lb)
    ));
    out.push_str(&format!(
        "gamma_lower_ub = {}\n",
        fnum(report.gamma_lower_enclosure.ub)
    ));
    out.push_str(&format!("gamma_m = {}\n", fnum(report.gamma_m)));
    out.push_str(&format!("gamma_m_lb = {}\n", fnum(report.gamma_m_enclosure.lb)));
    out.push_str(&format!("gamma_m_ub = {}\n", fnum(report.gamma_m_enclosure.ub)));
    out.push_str(&format!("gamma_q1 = {}\n", fnum(report.gamma_q1)));
    out.push_str(&format!("gamma_q2 = {}\n", fnum(report.gamma_q2)));
    out.push_str(&format!("eps1 = {}\n", fnum(report.eps1)));
    out.push_str(&format!("eps2 = {}\n", fnum(report.eps2)));
    out.push_str(&format!("method = {}\n", report.method.name()));
    out.push_str(&format!(
        "necessity_eq9 = {}\n",
        if report.necessity_ok { "ok" } else { "violated" }
    ));
    for (method, gs) in &report.gamma_s_by_method {
        out.push_str(&format!("gamma_s_{} = {}\n", method.name(), fnum(*gs)));
    }
    if report.eps1 == 1e5 && report.eps2 == 1e-1 {
        out.push_str(
            "# note: gamma_q2 is eps2 - eps1 by definition; the widely quoted value\n",
        );
        out.push_str(&format!(
            "# {QUOTED_INCONSISTENT_GAMMA_Q2} for this epsilon pair does not satisfy that formula and is\n",
        ));
        out.push_str("# flagged as inconsistent.\n");
        out.push_str(&format!(
            "gamma_q2_quoted_inconsistent = {}\n",
            fnum(QUOTED_INCONSISTENT_GAMMA_Q2)
        ));
    }
    out
}

/// The subset of report keys the design and verify commands consume.
#[derive(Debug, Clone)]
pub struct ParsedReport {
    pub values: HashMap<String, f64>,
    pub method: Option<String>,
    pub necessity_ok: Option<bool>,
}

impl ParsedReport {
    pub fn get(&self, key: &str) -> Result<f64, ReportParseError> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| ReportParseError(format!("missing key `{key}`")))
    }
}

pub fn parse_report(content: &str) -> Result<ParsedReport, ReportParseError> {
    let mut values = HashMap::new();
    let mut method = None;
    let mut necessity_ok = None;
    for raw in content.lines() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ReportParseError(format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "method" => method = Some(value.to_string()),
            "necessity_eq9" => necessity_ok = Some(value == "ok"),
            _ => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| ReportParseError(format!("invalid number for `{key}`")))?;
                values.insert(key.to_string(), v);
            }
        }
    }
    Ok(ParsedReport {
        values,
        method,
        necessity_ok,
    })
}

/// Serialize an observer gain with its eigen-certificates.
pub fn write_gain(
    gain: &Mat,
    kind: &str,
    delta: f64,
    lambda_lmi_max: f64,
    lambda_p_min: f64,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("# nlbound {TOOL_VERSION} gain file\n"));
    out.push_str(&format!("# kind = {kind}\n"));
    out.push_str(&format!("# delta = {}\n", fnum(delta)));
    let rows: Vec<String> = (0..gain.rows)
        .map(|i| {
            let cols: Vec<String> = (0..gain.cols).map(|j| fnum(gain.get(i, j))).collect();
            format!("[{}]", cols.join(", "))
        })
        .collect();
    out.push_str(&format!("L = [{}]\n", rows.join(", ")));
    out.push_str(&format!("lambda_lmi_max = {}\n", fnum(lambda_lmi_max)));
    out.push_str(&format!("lambda_p_min = {}\n", fnum(lambda_p_min)));
    out
}

/// Parse a gain file back into the gain matrix and its certificates.
pub fn parse_gain(content: &str) -> Result<(Mat, f64, f64), ReportParseError> {
    let mut l_rows: Option<Vec<Vec<f64>>> = None;
    let mut lmi_max = None;
    let mut p_min = None;
    for raw in content.lines() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ReportParseError(format!("expected `key = value`, found `{line}`")))?;
        match key.trim() {
            "L" => l_rows = Some(parse_nested(value.trim())?),
            "lambda_lmi_max" => {
                lmi_max = Some(value.trim().parse().map_err(|_| {
                    ReportParseError("invalid number for `lambda_lmi_max`".into())
                })?)
            }
            "lambda_p_min" => {
                p_min = Some(value.trim().parse().map_err(|_| {
                    ReportParseError("invalid number for `lambda_p_min`".into())
                })?)
            }
            other => return Err(ReportParseError(format!("unexpected key `{other}`"))),
        }
    }
    let rows = l_rows.ok_or_else(|| ReportParseError("missing key `L`".into()))?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(ReportParseError("L must be a nonempty rectangular matrix".into()));
    }
    let mut gain = Mat::zeros(rows.len(), rows[0].len());
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            gain.set(i, j, *v);
        }
    }
    let lmi_max = lmi_max.ok_or_else(|| ReportParseError("missing key `lambda_lmi_max`".into()))?;
    let p_min = p_min.ok_or_else(|| ReportParseError("missing key `lambda_p_min`".into()))?;
    Ok((gain, lmi_max, p_min))
}

fn parse_nested(src: &str) -> Result<Vec<Vec<f64>>, ReportParseError> {
    let trimmed = src.trim();
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ReportParseError("L must be a nested list".into()))?;
    let mut rows = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let start = rest
            .find('[')
            .ok_or_else(|| ReportParseError("expected `[` starting a row".into()))?;
        let end = rest[start..]
            .find(']')
            .ok_or_else(|| ReportParseError("unterminated row".into()))?
            + start;
        let row: Result<Vec<f64>, _> = rest[start + 1..end]
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ReportParseError(format!("invalid number `{}`", s.trim())))
            })
            .collect();
        rows.push(row?);
        rest = rest[end + 1..].trim_start_matches([',', ' ']);
    }
    Ok(rows)
}
