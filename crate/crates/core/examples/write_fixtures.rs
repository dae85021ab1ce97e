//! Writes the synthetic fixture datasets as CSV plus schema JSON.
//!
//! Usage: cargo run -p mspn --example write_fixtures -- <out_dir> [rows] [seed]

use std::path::PathBuf;

use mspn::data::write_csv;
use mspn::synth::fixtures;

fn main() -> mspn::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let rows = args.next().map_or(2000, |s| s.parse().expect("rows must be an integer"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    std::fs::create_dir_all(&dir)?;
    for (name, data) in fixtures(rows, seed) {
        write_csv(&data, std::fs::File::create(dir.join(format!("{name}.csv")))?)?;
        std::fs::write(dir.join(format!("{name}.schema.json")), data.schema().to_json())?;
        println!("{name}: {} rows x {} columns", data.n_rows(), data.n_vars());
    }
    Ok(())
}
