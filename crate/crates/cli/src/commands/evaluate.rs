use std::collections::BTreeMap;

use stylerec_core::data::Split;
use stylerec_core::eval::{content_style_correlation, evaluate, render_report, EvalSetup};
use stylerec_core::fusion::CONTENT_GROUP_NAMES;
use stylerec_core::Error;

use crate::args::Evaluate;
use crate::failure::{create_dir, write_file, CliResult};
use crate::run::{load_channels, load_content, load_run, manifest_for_run, predictors};

pub fn run(args: Evaluate) -> CliResult {
    let run = load_run(&args.models)?;
    let manifest = manifest_for_run(&args.manifest, &run)?;
    if manifest.classes() != run.desc.classes.as_slice() {
        return Err(Error::Validation("manifest classes differ from the trained classes".into()).into());
    }
    let channels = load_channels(&args.features)?;
    let content = load_content(args.content.as_deref())?;
    let preds = predictors(&run, &channels);
    if preds.is_empty() {
        return Err(Error::Validation("no model matches the given feature files".into()).into());
    }

    let correlation = match &content {
        Some(c) => {
            let rows: Vec<String> = CONTENT_GROUP_NAMES.iter().map(|s| s.to_string()).collect();
            let series: BTreeMap<String, Vec<f64>> = c.iter().map(|(id, s)| (id.clone(), s.0.to_vec())).collect();
            Some(content_style_correlation(&rows, &series, &manifest, Some(Split::Test))?)
        }
        None => None,
    };

    create_dir(&args.out)?;
    let test_ids = manifest.ids_in(Some(Split::Test));
    let val_ids = manifest.ids_in(Some(Split::Val));
    for p in &preds {
        let scores = p.score_table(&test_ids, content.as_ref())?;
        let validation = if val_ids.is_empty() {
            None
        } else {
            Some(p.score_table(&val_ids, content.as_ref())?)
        };
        let setup = EvalSetup {
            manifest: &manifest,
            scores: &scores,
            split: Split::Test,
            validation: validation.as_ref(),
            seed: args.seed,
            protocol: args.protocol,
            model: p.name(),
        };
        let report = evaluate(&setup, correlation.clone())?;
        for &format in &args.formats {
            let path = args.out.join(format!("{}.{}", p.name(), format.extension()));
            write_file(&path, render_report(&report, format))?;
        }
        println!(
            "{}: mean AP {:.4}, mean balanced accuracy {:.4}",
            p.name(),
            report.mean_ap,
            report.mean_accuracy
        );
    }
    Ok(())
}
