//! EVAL1 reports and their JSON, CSV and HTML renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BalanceProtocol, Confusion, CorrelationMatrix};
use crate::data::Split;
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "EVAL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class: String,
    pub ap: f64,
    pub accuracy: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub model: String,
    pub split: Split,
    pub seed: u64,
    pub protocol: BalanceProtocol,
    pub subset_size: usize,
    pub mean_ap: f64,
    pub mean_accuracy: f64,
    pub classes: Vec<ClassResult>,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationMatrix>,
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &str,
        split: Split,
        seed: u64,
        protocol: BalanceProtocol,
        subset_size: usize,
        classes: Vec<ClassResult>,
        confusion: Confusion,
        correlation: Option<CorrelationMatrix>,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("report has no classes".into()));
        }
        for c in &classes {
            if !(0.0..=1.0).contains(&c.ap) || !(0.0..=1.0).contains(&c.accuracy) {
                return Err(Error::Validation(format!("class `{}` has a metric outside [0, 1]", c.class)));
            }
        }
        for row in &confusion.matrix {
            let sum: f64 = row.iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("confusion row does not sum to 1".into()));
            }
        }
        let n = classes.len() as f64;
        Ok(EvalReport {
            format: REPORT_FORMAT.into(),
            model: model.into(),
            split,
            seed,
            protocol,
            subset_size,
            mean_ap: classes.iter().map(|c| c.ap).sum::<f64>() / n,
            mean_accuracy: classes.iter().map(|c| c.accuracy).sum::<f64>() / n,
            classes,
            confusion,
            correlation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Html,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Html => "html",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "html" => Ok(ReportFormat::Html),
            other => Err(Error::Validation(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Html => render_html(report),
    }
}

fn render_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "ap", "accuracy", "threshold"]).expect("in-memory write");
    for c in &report.classes {
        w.write_record([c.class.clone(), c.ap.to_string(), c.accuracy.to_string(), c.threshold.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn heat_cell(v: f64) -> String {
    let shade = (255.0 - 200.0 * v.clamp(0.0, 1.0)).round() as u8;
    format!("<td style=\"background:rgb({shade},{shade},255);text-align:right\">{v:.2}</td>")
}

fn render_html(report: &EvalReport) -> String {
    let mut h = String::new();
    let title = format!("Evaluation of {}", escape(&report.model));
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title></head>\n\
         <body style=\"font-family:sans-serif;margin:2em\">\n<h1>{title}</h1>\n\
         <p>Split: {} &middot; seed {} &middot; protocol {} &middot; subset size {}</p>\n\
         <p><b>Mean AP {:.4}</b> &middot; mean balanced accuracy {:.4}</p>\n",
        report.split,
        report.seed,
        report.protocol.name(),
        report.subset_size,
        report.mean_ap,
        report.mean_accuracy
    );

    h.push_str("<h2>Per-class results</h2>\n<table style=\"border-collapse:collapse\">\n");
    h.push_str("<tr><th style=\"text-align:left\">class</th><th>AP</th><th></th><th>accuracy</th></tr>\n");
    for c in &report.classes {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td style=\"text-align:right\">{:.3}</td>\
             <td><div style=\"background:#4a7;height:0.8em;width:{:.0}px\"></div></td>\
             <td style=\"text-align:right\">{:.3}</td></tr>",
            escape(&c.class),
            c.ap,
            200.0 * c.ap,
            c.accuracy
        );
    }
    h.push_str("</table>\n");

    let conf = &report.confusion;
    h.push_str("<h2>Confusion matrix</h2>\n<table style=\"border-collapse:collapse;font-size:small\">\n<tr><th></th>");
    for c in &conf.classes {
        let _ = write!(h, "<th>{}</th>", escape(c));
    }
    h.push_str("<th>prior</th></tr>\n");
    for (i, row) in conf.matrix.iter().enumerate() {
        let _ = write!(h, "<tr><th style=\"text-align:left\">{}</th>", escape(&conf.classes[i]));
        for &v in row {
            h.push_str(&heat_cell(v));
        }
        h.push_str(&heat_cell(conf.prior[i]));
        h.push_str("</tr>\n");
    }
    h.push_str("</table>\n");

    if let Some(corr) = &report.correlation {
        h.push_str("<h2>Content and style correlation</h2>\n<table style=\"border-collapse:collapse;font-size:small\">\n<tr><th></th>");
        for c in &corr.columns {
            let _ = write!(h, "<th>{}</th>", escape(c));
        }
        h.push_str("</tr>\n");
        for (name, row) in corr.rows.iter().zip(&corr.values) {
            let _ = write!(h, "<tr><th style=\"text-align:left\">{}</th>", escape(name));
            for &v in row {
                h.push_str(&heat_cell(v.abs()).replace(&format!("{:.2}", v.abs()), &format!("{v:.2}")));
            }
            h.push_str("</tr>\n");
        }
        h.push_str("</table>\n");
    }
    h.push_str("</body></html>\n");
    h
}
