//! Parse and validate a run configuration, print its parameter constraints,
//! then hand it to the command-line driver. Pass an output directory as the
//! first argument (default `mpdsa-example-out`).

use mpdsa::config::RunConfig;

const CONFIG: &str = r#"{
  "schema_version": 1,
  "geometry": {"kind": "lattice", "dim": 1},
  "n_particles": 2,
  "g": 10.0,
  "interaction": {"kind": "step", "amplitude": 1.0, "range": 1},
  "seed": 17,
  "trials": 30,
  "experiments": [
    {"kind": "spectrum", "center": [[1], [0]], "radius": 3, "trials": 2},
    {"kind": "probability", "event": {"kind": "non_loc"}, "center": [[1], [0]], "radius": 6}
  ]
}"#;

fn main() -> mpdsa::Result<()> {
    let cfg = RunConfig::from_json(CONFIG)?;
    cfg.validate()?;
    for c in cfg.constraint_report()? {
        println!("{:<40} {:>10.4} vs {:>10.4}  {}", c.name, c.lhs, c.rhs, if c.passed { "ok" } else { "violated" });
    }
    let out = std::env::args().nth(1).unwrap_or_else(|| "mpdsa-example-out".into());
    let path = std::env::temp_dir().join("mpdsa-example-config.json");
    std::fs::write(&path, CONFIG)?;
    let code = mpdsa::cli::main_with_args(["mpdsa", "run", "--config", path.to_str().unwrap(), "--out", &out]);
    println!("exit code {code}; results in {out}");
    Ok(())
}
