//! Scratch experiment runner.
fn main() {
    let name = std::env::args().nth(1).unwrap();
    let seed: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(7);
    let a = incsfa::experiments::run_named(&name, seed).unwrap();
    for (k, v) in &a.metrics {
        println!("{k} = {v:.6}");
    }
}
