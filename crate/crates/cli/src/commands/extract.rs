use stylerec_core::data::load_manifest;
use stylerec_core::features::{extract_channel, write_channel};
use stylerec_core::Error;

use crate::args::Extract;
use crate::failure::CliResult;

pub fn run(args: Extract) -> CliResult {
    let manifest = load_manifest(&args.manifest)?;
    if manifest.is_empty() {
        return Err(Error::Empty(format!("{} lists no images", args.manifest.display())).into());
    }
    let out = extract_channel(&manifest, args.channel)?;
    for (id, msg) in &out.failures {
        eprintln!("warning: {id}: {msg}");
    }
    if out.channel.is_empty() {
        return Err(Error::Empty("no image could be processed".into()).into());
    }
    write_channel(&out.channel, &args.out)?;
    println!(
        "{}: dim {}, {} rows, {} failures -> {}",
        args.channel,
        out.channel.dim(),
        out.channel.len(),
        out.failures.len(),
        args.out.display()
    );
    Ok(())
}
