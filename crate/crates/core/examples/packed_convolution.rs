//! One convolution on packed slot vectors in both layouts, with rotation counts and the dense result.

use hcnn::ckks::{CkksParams, RefreshMode};
use hcnn::packing::{
    conv2d, conv2d_fixed_baseline, decrypt_tensor, dense_conv2d, encrypt_tensor, ConvLayerSpec, Ops, PackingFormat, PlainBackend,
    Shape, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_a();
    let backend = PlainBackend::new(&params, RefreshMode::Disabled);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (cin, cout, k) = (16, 16, 3);
    let shape = Shape::new(cin, 8, 8);
    let x = Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let w: Vec<f64> = (0..cout * cin * k * k).map(|_| rng.random_range(-0.1..0.1)).collect();
    let b: Vec<f64> = (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect();

    // alternating: lane-interleaved input over two ciphertexts, block-interleaved output
    let lanes = 8;
    let (fa, fb) = (PackingFormat::a(8, 1, lanes), PackingFormat::b(lanes, 1));
    let spec = ConvLayerSpec::new(cin, cout, k, 1, w.clone(), b.clone(), fa, fb)?;
    let want = dense_conv2d(&x, &spec);
    let ops = Ops::new(&backend);
    let y = conv2d(&ops, &encrypt_tensor(&backend, &x, fa, 4)?, &spec)?;
    let alt = ops.tally();
    println!("alternating A -> B: {} rotations, {} plaintext products, level 4 -> {}", alt.rotations, alt.pmults, y.level(&backend));
    println!("  max diff to dense: {:.1e}", max_diff(&decrypt_tensor(&backend, &y)?, &want));

    // fixed: channel blocks in and out
    let f = PackingFormat::a(16, 1, 1);
    let spec = ConvLayerSpec::new(cin, cout, k, 1, w, b, f, f)?;
    let ops = Ops::new(&backend);
    let y = conv2d_fixed_baseline(&ops, &encrypt_tensor(&backend, &x, f, 4)?, &spec)?;
    let fixed = ops.tally();
    println!("fixed layout:       {} rotations, {} plaintext products", fixed.rotations, fixed.pmults);
    println!("  max diff to dense: {:.1e}", max_diff(&decrypt_tensor(&backend, &y)?, &want));
    println!("rotation ratio fixed / alternating: {:.2}", fixed.rotations as f64 / alt.rotations as f64);
    Ok(())
}

fn max_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
