//! The full command-line workflow in one process: optimize, simulate the
//! result, and compare it with an equal-weight mix. Outputs land in a
//! temporary directory that is listed at the end.
//!
//! ```text
//! cargo run --release --example cli_pipeline
//! ```

use std::path::Path;

use stablecoin_collateral::cli;
use stablecoin_collateral::synthetic::demo_history;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let prices = dir.path().join("prices.csv");
    demo_history(600, 9)?.write_csv(std::fs::File::create(&prices)?)?;
    let equal = dir.path().join("equal.csv");
    std::fs::write(
        &equal,
        "symbol,weight,cap\nBAT,0.2,1\nETH,0.2,1\nLINK,0.2,1\nMATIC,0.2,1\nWBTC,0.2,1\n",
    )?;
    let out = dir.path().join("out");
    let (p, o) = (prices.to_str().unwrap(), out.to_str().unwrap());
    let optimized = out.join("optimize/latest/weights.csv");
    let opt = optimized.to_str().unwrap();
    let cmp_opt = format!("optimized={opt}");
    let cmp_eq = format!("equal={}", equal.display());

    let runs: [&[&str]; 3] = [
        &["optimize", "--prices", p, "--objective", "semivariance", "--caps", "0.25"],
        &["simulate", "--prices", p, "--portfolio", opt, "--mode", "gbm", "--runs", "2000", "--seed", "7"],
        &["compare", "--prices", p, "--portfolio", &cmp_opt, "--portfolio", &cmp_eq, "--runs", "1000"],
    ];
    for args in runs {
        let argv = std::iter::once("collateral").chain(args.iter().copied()).chain(["--out", o]);
        let code = cli::run(argv);
        if code != 0 {
            return Err(format!("{} exited with {code}", args[0]).into());
        }
    }
    list(&out, &out)?;
    Ok(())
}

fn list(root: &Path, dir: &Path) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            list(root, &path)?;
        } else {
            println!("{}", path.strip_prefix(root).unwrap().display());
        }
    }
    Ok(())
}
