//! Writes a synthetic corpus: `make_fixture <dir> <per-origin> <seed> [--tints] [--no-markers]`.

use std::path::PathBuf;
use std::process::ExitCode;

use promptprint::dataset::Origin;
use promptprint::synthetic::{write_fixture, FixtureSpec};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let positional: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let (Some(dir), Some(n), Some(seed)) = (positional.first(), positional.get(1), positional.get(2)) else {
        eprintln!("usage: make_fixture <dir> <per-origin> <seed> [--tints] [--no-markers]");
        return ExitCode::from(2);
    };
    let (Ok(n), Ok(seed)) = (n.parse::<usize>(), seed.parse::<u64>()) else {
        eprintln!("per-origin and seed must be integers");
        return ExitCode::from(2);
    };
    let origins = [Origin::Real, Origin::SD, Origin::LD, Origin::Glide, Origin::Dalle2];
    let spec = FixtureSpec {
        tints: args.iter().any(|a| a == "--tints"),
        markers: !args.iter().any(|a| a == "--no-markers"),
        ..FixtureSpec::new(origins.into_iter().map(|o| (o, n)).collect(), seed)
    };
    match write_fixture(&PathBuf::from(dir), &spec) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
