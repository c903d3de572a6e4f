//! Regenerates the bundled example data under `data/`.
//!
//! cargo run -p rankforge-core --example generate_fixtures -- [out_dir]

use std::fs;
use std::path::{Path, PathBuf};

use rankforge_core::persist::{profile_to_value, value_to_canonical_json, write_ipd_csv, write_schema_config};
use rankforge_core::synth::Scenario;
use rankforge_core::CovariateProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    fs::create_dir_all(&out)?;
    let out = out.canonicalize()?;

    let profile = |p: &CovariateProfile| value_to_canonical_json(&profile_to_value(p));

    let flip = Scenario::sign_flip();
    fs::write(out.join("signflip_schema.json"), write_schema_config(&flip.network)?)?;
    fs::write(out.join("signflip_ipd.csv"), write_ipd_csv(&flip.simulate(1))?)?;
    fs::write(out.join("signflip_x0.json"), profile(&CovariateProfile::new().with("biomarker", 0.0))?)?;
    fs::write(out.join("signflip_x1.json"), profile(&CovariateProfile::new().with("biomarker", 1.0))?)?;

    let demo = Scenario::depression_demo();
    let (a, b) = Scenario::depression_patients();
    fs::write(out.join("depression_schema.json"), write_schema_config(&demo.network)?)?;
    fs::write(out.join("depression_ipd.csv"), write_ipd_csv(&demo.simulate(1))?)?;
    fs::write(out.join("patient_a.json"), profile(&a)?)?;
    fs::write(out.join("patient_b.json"), profile(&b)?)?;

    println!("fixtures written to {}", out.display());
    Ok(())
}
