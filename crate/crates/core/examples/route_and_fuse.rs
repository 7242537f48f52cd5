//! Encodes one clip of every task with the whole pool, routes it with both
//! routers, fuses, and shows the shape of each stage down to the audio tokens.
//!
//! `cargo run --release --example route_and_fuse`

use anyhow::Result;
use wee::encoders::{EncoderPool, PoolConfig};
use wee::routing::{
    adapt_project, fuse, mix_experts, route_dep, route_indep, AdapterParams, RouterParams, RoutingMode,
};
use wee::taskbench::{gen_task, Task};

fn main() -> Result<()> {
    let cfg = PoolConfig::default();
    let pool = EncoderPool::new(&cfg)?;
    let m = pool.num_experts();
    let names: Vec<&str> = pool.experts().iter().map(|e| e.kind().name()).collect();
    let mut prior = vec![0.0; m];
    prior[0] = 1.0;
    let router = RouterParams::init(cfg.d_base, m, Some(&prior), 1.0, 7)?;
    let d_fused = cfg.d_base + 2 * cfg.d_w;
    let adapter = AdapterParams::init(d_fused, 3, 64, 48, 11)?;

    let indep = route_indep(&router)?;
    println!("independent router: soft {:.3?} → {}", indep.soft, names[indep.chosen_index]);
    for task in Task::ALL {
        let ex = &gen_task(task, 1, 3)?.examples[0];
        let enc = pool.encode_all(&ex.audio)?;
        let experts: Vec<_> = enc.experts.iter().collect();
        let dep = route_dep(&enc.base, &router)?;
        let z_dep = mix_experts(&dep, &experts, RoutingMode::HardSt)?;
        let z_indep = mix_experts(&indep, &experts, RoutingMode::HardSt)?;
        let fused = fuse(&enc.base, &z_dep, &z_indep)?;
        let tokens = adapt_project(&fused, 3, &adapter)?;
        println!(
            "{task:<4} base {:?}  dep soft {:.3?} → {:<16} fused {:?}  audio tokens {:?}",
            enc.base.shape(),
            dep.soft,
            names[dep.chosen_index],
            fused.shape(),
            tokens.shape()
        );
    }
    Ok(())
}
