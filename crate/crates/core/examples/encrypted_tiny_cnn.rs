//! Encrypted tiny-cnn inference at desk-B against the plaintext pipeline.

use std::time::Instant;

use hcnn::ckks::{CkksContext, CkksParams, KeyGenOptions, RefreshMode};
use hcnn::graph::{
    build_graph, decrypt_output, encrypt_input, execute, gen_fixture, plaintext_forward, plan_levels, required_rotations, ConvMode,
    PlanOptions, Topology,
};
use hcnn::packing::{CkksBackend, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_b();
    let model = gen_fixture(Topology::TinyCnn, 42, &params.digest_hex(), 1)?;
    let graph = build_graph(&model, params.slots(), ConvMode::Alternating)?;
    let depth = graph.total_cost();
    let plan = plan_levels(&graph, PlanOptions { start_level: Some(depth), ..PlanOptions::new(depth) })?;

    let t = Instant::now();
    let ctx = CkksContext::new(params.clone())?;
    let opts = KeyGenOptions { rotations: required_rotations(&graph, &plan, &params)?, max_level: Some(depth) };
    println!("{} rotation keys", opts.rotations.len());
    let keys = ctx.keygen(&opts, &mut ChaCha20Rng::seed_from_u64(1))?;
    println!("keygen: {:.1} s", t.elapsed().as_secs_f64());

    let backend = CkksBackend::new(&ctx, &keys.public, 2).with_secret_key(&keys.sk, RefreshMode::Disabled).with_plaintext_cache();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let shape = model.input_shape();
    let input = Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let (want, _) = plaintext_forward(&graph, &plan, &params, RefreshMode::Disabled, &input)?;

    let runs: usize = std::env::args().nth(1).map_or(Ok(1), |a| a.parse())?;
    for _ in 1..runs {
        let t = Instant::now();
        let x = encrypt_input(&backend, &graph, &plan, &input)?;
        execute(&graph, &plan, &backend, "ckks", x)?;
        println!("warm-up inference: {:.1} s", t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let x = encrypt_input(&backend, &graph, &plan, &input)?;
    let (out, report) = execute(&graph, &plan, &backend, "ckks", x)?;
    let got = decrypt_output(&backend, &out)?;
    println!("inference: {:.1} s", t.elapsed().as_secs_f64());
    for l in &report.layers {
        println!("{:>2} {:<12} level {:>2} -> {:>2}  {:>8.1} ms  rot {:>3}", l.index, l.kind, l.entry_level, l.exit_level, l.wall_ms, l.tally.rotations);
    }
    let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max abs diff vs plaintext: {diff:.3e}");
    Ok(())
}
