//! Per-layer rotation counts of the alternating layout against the fixed one, as JSON.

use hcnn::ckks::CkksParams;
use hcnn::graph::{cost_report_compare, gen_fixture, Topology};
use hcnn::packing::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_b();
    for topology in [Topology::TinyCnn, Topology::BasicBlockStack(2)] {
        let model = gen_fixture(topology, 42, &params.digest_hex(), 0)?;
        let shape = model.input_shape();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let cmp = cost_report_compare(&model, &params, &x)?;
        println!("{}", serde_json::to_string_pretty(&cmp)?);
    }
    Ok(())
}
