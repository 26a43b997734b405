use std::fmt::Write as _;

use serde::Serialize;
use stylerec_core::data::{load_manifest, Manifest};
use stylerec_core::eval::ScoreTable;
use stylerec_core::features::{extract_channel, FeatureChannel};
use stylerec_core::Error;

use crate::args::{CrossRank, FeatureSource, Search};
use crate::failure::{write_file, CliResult};
use crate::run::{load_channels, load_content, load_run, predictors, LoadedRun, Predictor};

fn corpus_channels(corpus: &Manifest, source: &FeatureSource) -> CliResult<Vec<FeatureChannel>> {
    match source {
        FeatureSource::Files(paths) => load_channels(paths),
        FeatureSource::Extract(kind) => {
            let out = extract_channel(corpus, *kind)?;
            for (id, msg) in &out.failures {
                eprintln!("warning: skipping {id}: {msg}");
            }
            Ok(vec![out.channel])
        }
    }
}

/// The fusion model when all its channels are present, else the first
/// channel model with features.
fn choose<'a>(run: &'a LoadedRun, channels: &'a [FeatureChannel]) -> CliResult<Predictor<'a>> {
    let mut preds = predictors(run, channels);
    match preds.pop() {
        Some(p @ Predictor::Fused(..)) => Ok(p),
        Some(last) => {
            preds.push(last);
            Ok(preds.swap_remove(0))
        }
        None => Err(Error::Validation(format!(
            "none of the model channels {:?} is available for this corpus",
            run.desc.channels
        ))
        .into()),
    }
}

/// Ids covered by every channel the predictor needs.
fn covered<'a>(pred: &Predictor<'_>, ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let chans: Vec<&FeatureChannel> = match pred {
        Predictor::Channel(_, c) => vec![*c],
        Predictor::Fused(_, cs) => cs.clone(),
    };
    let mut out = Vec::new();
    for id in ids {
        if chans.iter().all(|c| c.get(id).is_some()) {
            out.push(id.to_string());
        } else {
            eprintln!("warning: no features for {id}; skipped");
        }
    }
    out
}

/// `(id, score)` for column `k`, by descending score then ascending id.
fn ranked(table: &ScoreTable, k: usize) -> Vec<(String, f64)> {
    let mut rows: Vec<(String, f64)> = table.iter().map(|(id, r)| (id.to_string(), r[k])).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

#[derive(Serialize)]
struct Hit {
    rank: usize,
    id: String,
    score: f64,
    path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
}

#[derive(Serialize)]
struct SearchOutput<'a> {
    model: &'a str,
    style: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    top_k: usize,
    results: Vec<Hit>,
}

fn emit(out: Option<&std::path::Path>, json: String) -> CliResult {
    match out {
        Some(path) => write_file(path, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn gallery(style: &str, hits: &[Hit]) -> String {
    let mut h = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{0}</title></head>\n\
         <body style=\"font-family:sans-serif;margin:2em\">\n<h1>{0}</h1>\n\
         <div style=\"display:flex;flex-wrap:wrap;gap:1em\">\n",
        escape(style)
    );
    for hit in hits {
        let _ = writeln!(
            h,
            "<figure style=\"margin:0;width:220px\"><img src=\"{}\" style=\"width:220px;height:220px;object-fit:cover\" alt=\"{}\">\
             <figcaption>#{} {} ({:.3}){}</figcaption></figure>",
            escape(&hit.path),
            escape(&hit.id),
            hit.rank,
            escape(&hit.id),
            hit.score,
            hit.caption.as_deref().map(|c| format!("<br>{}", escape(c))).unwrap_or_default()
        );
    }
    h.push_str("</div>\n</body></html>\n");
    h
}

pub fn run(args: Search) -> CliResult {
    let run = load_run(&args.models)?;
    let corpus = load_manifest(&args.manifest)?;
    let k = run
        .desc
        .classes
        .iter()
        .position(|c| *c == args.style)
        .ok_or_else(|| Error::UnknownClass(args.style.clone()))?;
    let channels = corpus_channels(&corpus, &args.source)?;
    let content = load_content(args.content.as_deref())?;
    let pred = choose(&run, &channels)?;

    let needle = args.text.as_ref().map(|t| t.to_lowercase());
    let matching = corpus.records().iter().filter(|r| match &needle {
        Some(n) => r.caption.as_ref().is_some_and(|c| c.to_lowercase().contains(n.as_str())),
        None => true,
    });
    let ids = covered(&pred, matching.map(|r| r.id.as_str()));
    let hits: Vec<Hit> = if ids.is_empty() {
        eprintln!("warning: no candidate images matched the query");
        Vec::new()
    } else {
        let table = pred.score_table(&ids, content.as_ref())?;
        ranked(&table, k)
            .into_iter()
            .filter(|(_, s)| args.min_score.is_none_or(|m| *s >= m))
            .take(args.top_k)
            .enumerate()
            .map(|(i, (id, score))| {
                let rec = corpus.record(&id).expect("candidate comes from the corpus");
                Hit {
                    rank: i + 1,
                    path: corpus.resolve_path(rec).display().to_string(),
                    caption: rec.caption.clone(),
                    id,
                    score,
                }
            })
            .collect()
    };
    if let Some(path) = &args.html {
        write_file(path, gallery(&args.style, &hits))?;
    }
    let output = SearchOutput {
        model: pred.name(),
        style: &args.style,
        text: args.text.as_deref(),
        top_k: args.top_k,
        results: hits,
    };
    let mut json = serde_json::to_string_pretty(&output).expect("search output serializes");
    json.push('\n');
    emit(args.out.as_deref(), json)
}

#[derive(Serialize)]
struct Ranking {
    style: String,
    results: Vec<Hit>,
}

#[derive(Serialize)]
struct CrossOutput<'a> {
    model: &'a str,
    top_k: usize,
    rankings: Vec<Ranking>,
}

pub fn cross_rank(args: CrossRank) -> CliResult {
    let run = load_run(&args.models)?;
    let corpus = load_manifest(&args.manifest)?;
    let channels = corpus_channels(&corpus, &args.source)?;
    let content = load_content(args.content.as_deref())?;
    let pred = choose(&run, &channels)?;
    let ids = covered(&pred, corpus.records().iter().map(|r| r.id.as_str()));
    let table = if ids.is_empty() {
        None
    } else {
        Some(pred.score_table(&ids, content.as_ref())?)
    };
    let rankings = pred
        .classes()
        .into_iter()
        .enumerate()
        .map(|(k, style)| Ranking {
            style,
            results: table
                .as_ref()
                .map(|t| {
                    ranked(t, k)
                        .into_iter()
                        .take(args.top_k)
                        .enumerate()
                        .map(|(i, (id, score))| {
                            let rec = corpus.record(&id).expect("id comes from the corpus");
                            Hit {
                                rank: i + 1,
                                path: corpus.resolve_path(rec).display().to_string(),
                                caption: rec.caption.clone(),
                                id,
                                score,
                            }
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();
    let output = CrossOutput {
        model: pred.name(),
        top_k: args.top_k,
        rankings,
    };
    let mut json = serde_json::to_string_pretty(&output).expect("ranking output serializes");
    json.push('\n');
    emit(args.out.as_deref(), json)
}
