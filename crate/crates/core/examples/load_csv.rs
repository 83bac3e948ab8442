//! Load points from a CSV file with a label column, then cluster and embed
//! them. The constant third column is dropped.

use std::io::Write;

use gp_isomap::data::{load_csv, CsvSchema, Normalize};
use gp_isomap::manifold::{batch_phase, BatchParams};

fn main() -> gp_isomap::Result<()> {
    let path = std::env::temp_dir().join("gp_isomap_example.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "a,b,c,label")?;
    for i in 0..400 {
        let t = (i / 2) as f64 * 0.015;
        let (side, shift) = if i % 2 == 0 { ("left", 0.0) } else { ("right", 20.0) };
        writeln!(f, "{},{},{},{side}", t.cos() * 3.0 + shift, t.sin() * 3.0, 0.5)?;
    }
    writeln!(f, "1.0,,2.0,left")?;
    drop(f);

    let schema = CsvSchema { features: vec![0, 1, 2], label: Some(3), has_header: true, normalize: Normalize::Mean };
    let (ds, report) = load_csv(&path, &schema)?;
    println!("{} rows, {} modes, dropped {} invalid rows and constant columns {:?}", ds.len(), ds.mode_count(), report.dropped_invalid, report.dropped_features);

    let atlas = batch_phase(&ds.cloud, &BatchParams { eps: Some(0.3), ..Default::default() })?;
    println!("clusters {:?}", atlas.assignment.sizes());
    Ok(())
}
