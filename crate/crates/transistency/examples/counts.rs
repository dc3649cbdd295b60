//! Prints per-axiom suite sizes by instruction bound, for eyeballing the
//! synthesis engine against the reference growth curves.

use transistency::model::x86t_elt;
use transistency::synth::{synthesize, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_bound: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let only: Option<&str> = args.get(2).map(|s| s.as_str());
    for axiom in ["sc_per_loc", "rmw_atomicity", "causality", "remap_order", "tlb_causality"] {
        if let Some(o) = only {
            if o != axiom {
                continue;
            }
        }
        print!("{axiom:>15}:");
        let lo = 3;
        for bound in lo..=max_bound {
            let cfg = SynthConfig::new(x86t_elt(), axiom, bound);
            let t = std::time::Instant::now();
            let suite = synthesize(&cfg).unwrap();
            print!("  {bound}->{} ({:.1}s)", suite.programs.len(), t.elapsed().as_secs_f64());
            use std::io::Write;
            std::io::stdout().flush().unwrap();
        }
        println!();
    }
}
