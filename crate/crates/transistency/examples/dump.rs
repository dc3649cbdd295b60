//! Dumps the canonical form and witness verdict of every suite member at
//! one bound, for debugging synthesis coverage.

use transistency::canon::canonical_form;
use transistency::model::{check_unvalidated, x86t_elt};
use transistency::synth::{synthesize, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let axiom = args.get(1).map(|s| s.as_str()).unwrap_or("sc_per_loc");
    let bound: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = SynthConfig::new(x86t_elt(), axiom, bound);
    let suite = synthesize(&cfg).unwrap();
    println!("{} programs for {axiom} at bound {bound}:", suite.programs.len());
    for (p, w) in &suite.programs {
        let v = check_unvalidated(w, &x86t_elt());
        println!(
            "  {}  [{} events]  violates {:?}",
            canonical_form(p),
            p.len(),
            v.violated_names()
        );
    }
}
