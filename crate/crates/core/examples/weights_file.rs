//! Writes seeded weights in the shared JSON schema, reads them back and replays the golden pairs.

use hcnn::ckks::CkksParams;
use hcnn::graph::{gen_fixture, reference_forward, ModelWeights, Topology};
use hcnn::packing::Tensor3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_b();
    let model = gen_fixture(Topology::TinyCnn, 42, &params.digest_hex(), 3)?;
    let path = std::env::temp_dir().join("tiny-cnn-seed42.json");
    std::fs::write(&path, model.to_json())?;
    println!("wrote {} ({} bytes), weights digest {}", path.display(), std::fs::metadata(&path)?.len(), model.digest_hex()?);

    let back = ModelWeights::from_json(&std::fs::read_to_string(&path)?)?;
    back.check_params(&params.digest_hex())?;
    println!("read back: digest {}", back.digest_hex()?);
    match back.check_params(&CkksParams::desk_a().digest_hex()) {
        Ok(()) => println!("unexpected: desk-A accepted"),
        Err(e) => println!("desk-A rejected: {e}"),
    }

    for (i, pair) in back.golden.as_ref().map(|g| g.pairs()).unwrap_or_default().iter().enumerate() {
        let out = reference_forward(&back, &Tensor3::from_vec(back.input_shape(), pair.input.clone())?)?;
        let diff = out.iter().zip(&pair.logits).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("golden pair {i}: max diff {diff:.1e}");
    }
    Ok(())
}
