use std::fmt::Write as _;
use std::path::Path;

use stylerec_core::data::{load_manifest, split_dataset, Split, SplitFractions};
use stylerec_core::eval::{balanced_mean_ap, BalanceProtocol};
use stylerec_core::features::FeatureChannel;
use stylerec_core::fusion::{train_fusion, FusionMode};
use stylerec_core::learner::{save_multi_model, select_hyperparams, select_with, train_one_vs_all, Selection};
use stylerec_core::seed::derive_seed;

use crate::args::{Train, TrainMode};
use crate::failure::{create_dir, write_file, CliResult};
use crate::run::{load_channels, load_content, RunDescriptor, FUSION_DIR, RUN_FILE, RUN_FORMAT, SPLIT_MANIFEST};

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn validation_table(sel: &Selection) -> String {
    let mut out = String::from("lambda1,lambda2,loss,eta0,epochs,val_mean_ap,error\n");
    for row in &sel.table {
        let h = &row.hyperparams;
        let (metric, error) = match &row.outcome {
            Ok(v) => (v.to_string(), String::new()),
            Err(e) => (String::new(), csv_field(e)),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{metric},{error}",
            h.lambda1,
            h.lambda2,
            h.loss.name(),
            h.eta0,
            h.epochs
        );
    }
    out
}

fn report(name: &str, sel: &Selection) {
    let h = &sel.best;
    println!(
        "{name}: lambda1={} lambda2={} loss={} validation mean AP {:.4}",
        h.lambda1,
        h.lambda2,
        h.loss.name(),
        sel.best_metric
    );
}

pub fn run(args: Train) -> CliResult {
    create_dir(&args.out)?;
    let mut manifest = load_manifest(&args.manifest)?;
    let mut split_manifest = None;
    if !manifest.is_split() {
        manifest = split_dataset(&manifest, derive_seed(args.seed, "split"), SplitFractions::default())?;
        manifest.write(args.out.join(SPLIT_MANIFEST))?;
        split_manifest = Some(SPLIT_MANIFEST.to_string());
    }
    let channels = load_channels(&args.features)?;

    let mut stage1 = Vec::with_capacity(channels.len());
    for ch in &channels {
        let sel = select_hyperparams(&args.grid, &manifest, ch, args.seed)?;
        report(ch.name(), &sel);
        let model = train_one_vs_all(&manifest, ch, &sel.best)?;
        let dir = args.out.join(ch.name());
        save_multi_model(&model, &dir)?;
        write_file(&dir.join("validation.csv"), validation_table(&sel))?;
        stage1.push(model);
    }

    let mode_name = match args.mode {
        TrainMode::Single => "single".to_string(),
        TrainMode::Fusion(mode) => {
            train_fused(&args, &manifest, &channels, stage1, mode)?;
            mode.name().to_string()
        }
    };

    let desc = RunDescriptor {
        format: RUN_FORMAT.into(),
        mode: mode_name,
        channels: channels.iter().map(|c| c.name().to_string()).collect(),
        classes: manifest.classes().to_vec(),
        seed: args.seed,
        split_manifest,
    };
    let mut text = serde_json::to_string_pretty(&desc).expect("run descriptor serializes");
    text.push('\n');
    write_file(&args.out.join(RUN_FILE), text)
}

fn train_fused(
    args: &Train,
    manifest: &stylerec_core::data::Manifest,
    channels: &[FeatureChannel],
    stage1: Vec<stylerec_core::learner::MultiModel>,
    mode: FusionMode,
) -> CliResult {
    let content = load_content(args.content.as_deref())?;
    let refs: Vec<&FeatureChannel> = channels.iter().collect();
    let val_ids = manifest.ids_in(Some(Split::Val));
    let subset_seed = derive_seed(args.seed, "select:val-subset");
    let sel = select_with(&args.grid, |h| {
        let f = train_fusion(manifest, stage1.clone(), &refs, mode, content.as_ref(), h)?;
        let table = f.score_table(&refs, &val_ids, content.as_ref())?;
        Ok(balanced_mean_ap(&table, manifest, Some(Split::Val), subset_seed, BalanceProtocol::ClassUniform)?.mean_ap)
    })?;
    report(mode.name(), &sel);
    let fused = train_fusion(manifest, stage1, &refs, mode, content.as_ref(), &sel.best)?;
    let dir = args.out.join(FUSION_DIR);
    fused.save(&dir)?;
    write_file(&Path::new(&dir).join("validation.csv"), validation_table(&sel))
}
