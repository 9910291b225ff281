//! Write the bundled synthetic two-platform corpora to disk, so the full
//! pipeline can be driven from the command line without any external data.
//!
//! ```bash
//! cargo run --release -p textomet --example generate_fixtures -- OUTDIR [SEED]
//! ```

use textomet::corpus::write_starred_corpus;
use textomet::fixture::{two_platform_fixture, TwoPlatformSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "fixtures".to_string());
    let seed: u64 = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(42);

    let spec = TwoPlatformSpec { seed, ..Default::default() };
    let (labeled, target) = two_platform_fixture(&spec);

    std::fs::create_dir_all(&out).expect("cannot create output directory");
    let labeled_path = format!("{out}/labeled.txt");
    let target_path = format!("{out}/target.txt");
    std::fs::write(&labeled_path, write_starred_corpus(&labeled).expect("serializable"))
        .expect("cannot write labeled corpus");
    std::fs::write(&target_path, write_starred_corpus(&target).expect("serializable"))
        .expect("cannot write target corpus");
    println!(
        "wrote {labeled_path} ({} documents) and {target_path} ({} documents)",
        labeled.len(),
        target.len()
    );
}
