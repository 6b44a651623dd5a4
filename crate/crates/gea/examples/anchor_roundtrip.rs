//! Matrix serialization: exact float round-trips and family validation.
//!
//! Fitted matrices travel as JSON with 17-significant-digit floats, which
//! reconstruct the original `f64` bits exactly. The family tag is enforced
//! on the way back in: a file claiming `scalar` but carrying off-diagonal
//! weight is rejected rather than silently reinterpreted.
//!
//! Run: cargo run -p gea --example anchor_roundtrip

use std::fs;
use std::path::PathBuf;

use gea::report::to_json_string;
use gea::synth::textured_rgb;
use gea::{apply_anchor, fit_anchor, AnchorMatrix, Family, ImageBuffer};

fn main() -> gea::Result<()> {
    let out_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../target/example-output/anchor_roundtrip");
    fs::create_dir_all(&out_dir)?;
    let out_dir = out_dir.canonicalize()?;

    let low = textured_rgb(64, 64, 3);
    let lifted: Vec<f64> = low
        .data()
        .chunks(3)
        .flat_map(|px| {
            [
                2.7 * px[0] + 0.021 * px[1] + 0.013,
                0.04 * px[0] + 3.2 * px[1] - 0.008,
                3.05 * px[2] + 0.017,
            ]
        })
        .collect();
    let gt = ImageBuffer::new(64, 64, 3, lifted)?;

    let matrix = fit_anchor(&low, &gt, Family::Affine12)?;
    let json = to_json_string(&matrix)?;
    let path = out_dir.join("matrix_affine12.json");
    fs::write(&path, &json)?;
    println!("wrote {}", path.display());
    println!("{json}");

    let restored: AnchorMatrix = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(gea::Error::from)?;
    assert_eq!(matrix, restored);
    println!("round trip reproduced all 12 parameters bit for bit");

    // Applying the restored matrix must match the original application
    // everywhere, not merely approximately.
    let a = apply_anchor(&matrix, &low)?;
    let b = apply_anchor(&restored, &low)?;
    assert_eq!(a.data(), b.data());
    println!("anchored outputs agree sample for sample");

    // Family tags are validated against the coefficients they carry.
    let bogus = r#"{"family":"scalar","a":[2.0,0.5,0.0,0.0,2.0,0.0,0.0,0.0,2.0],"b":[0.0,0.0,0.0]}"#;
    match serde_json::from_str::<AnchorMatrix>(bogus) {
        Err(e) => println!("mislabeled family rejected: {e}"),
        Ok(_) => unreachable!("a scalar tag with cross-channel weight must not parse"),
    }

    // Identity matrices exist for every family and leave pixels untouched.
    for family in Family::ALL {
        let id = AnchorMatrix::identity(family);
        let out = apply_anchor(&id, &low)?;
        assert_eq!(out.data(), low.data());
    }
    println!("identity matrices are exact no-ops for all {} families", Family::ALL.len());
    Ok(())
}
