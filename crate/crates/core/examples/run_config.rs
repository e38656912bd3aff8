//! Layered run configuration: preset, then a JSON document, then dotted
//! `KEY=VALUE` overrides. Unknown keys are errors.

use cyclefree::cli::RunConfig;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = json!({"preset": "desk", "train": {"eta": 5.0}});
    let cfg = RunConfig::resolve(
        Some(&doc),
        None,
        &["train.total_iters=500".into(), "data.sim.alpha=0.2".into()],
    )?;
    println!("{}", serde_json::to_string_pretty(&cfg)?);

    let err = RunConfig::resolve(None, None, &["train.etaa=1".into()]).unwrap_err();
    println!("typo rejected: {err}");
    Ok(())
}
