use incprune::dpupdate::{dp_update, UpdateVariant};
use incprune::model::parse_pomdp;
use incprune::pwlc::{AlphaVector, VectorSet};
use std::time::Instant;

#[test]
fn growth_and_timing() {
    let m = parse_pomdp(include_str!("../problems/tiny.pomdp")).unwrap();
    let mut current = VectorSet::new(vec![AlphaVector::zero(2)]);
    let start = Instant::now();
    for stage in 1..=60 {
        let t0 = Instant::now();
        let (next, stats) = dp_update(&m, &current, &UpdateVariant::ip()).unwrap();
        println!(
            "stage {stage}: |V| = {} lp = {} wall = {:.3}s (sza {:.3} sa {:.3} union {:.3}) (total {:.1}s)",
            next.len(),
            stats.total_lp_count(),
            t0.elapsed().as_secs_f64(),
            stats.sza_build.wall.as_secs_f64(),
            stats.sa_build.wall.as_secs_f64(),
            stats.union_purge.wall.as_secs_f64(),
            start.elapsed().as_secs_f64(),
        );
        current = next;
        if start.elapsed().as_secs_f64() > 90.0 {
            println!("stopping early");
            break;
        }
    }
}
