use std::sync::OnceLock;

use hcnn::ckks::{CkksContext, CkksParams, KeyGenOptions, KeySet, RefreshMode};
use hcnn::packing::{
    avgpool_global, conv2d, conv2d_fixed_baseline, decrypt_tensor, dense_conv2d, dense_linear, downsample, encrypt_tensor,
    flatten, fully_connected, pack, slot_map, unpack, CkksBackend, ConvLayerSpec, LinearSpec, Ops, PackingError,
    PackingFormat, PlainBackend, Shape, SlotBackend, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn plain() -> PlainBackend {
    PlainBackend::new(&CkksParams::desk_a(), RefreshMode::Disabled)
}

fn random_tensor(shape: Shape, rng: &mut impl Rng) -> Tensor3 {
    Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_conv(cin: usize, cout: usize, k: usize, stride: usize, fi: PackingFormat, fo: PackingFormat, rng: &mut impl Rng) -> ConvLayerSpec {
    let w = (0..cout * cin * k * k).map(|_| rng.random_range(-1.0..1.0) / (cin * k * k) as f64).collect();
    let b = (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect();
    ConvLayerSpec::new(cin, cout, k, stride, w, b, fi, fo).unwrap()
}

fn parse_golden(text: &str) -> (PackingFormat, Shape, Vec<(usize, usize)>) {
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    let kv = |k: &str| head.iter().find_map(|t| t.strip_prefix(&format!("{k}="))).unwrap().parse::<usize>().unwrap();
    let format = match head[2] {
        "A" => PackingFormat::a(kv("multiplex"), kv("gap"), kv("lanes")),
        _ => PackingFormat::b(kv("multiplex"), kv("gap")),
    };
    let dims: Vec<usize> = lines.next().unwrap().split_whitespace().skip(2).map(|t| t.parse().unwrap()).collect();
    let shape = Shape::new(dims[0], dims[1], dims[2]);
    let entries = lines
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split_whitespace().map(|e| {
            let (c, s) = e.split_once(':').unwrap();
            (c.parse().unwrap(), s.parse().unwrap())
        }).collect::<Vec<_>>())
        .collect();
    (format, shape, entries)
}

#[test]
fn slot_maps_match_golden_tables() {
    for text in [include_str!("golden/slot_map_b_m4_g1_4x2x2.txt"), include_str!("golden/slot_map_a_m2_g2_l2_3x2x2.txt")] {
        let (format, shape, want) = parse_golden(text);
        assert_eq!(slot_map(format, shape), want);
    }
}

#[test]
fn pack_round_trips_and_zero_gaps() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for shape in [Shape::new(4, 8, 8), Shape::new(16, 8, 8), Shape::new(8, 4, 4)] {
        for f in [PackingFormat::a(4, 1, 4), PackingFormat::a(8, 2, 2), PackingFormat::b(4, 1), PackingFormat::b(8, 2)] {
            let t = random_tensor(shape, &mut rng);
            let v = pack(&t, f, 4096).unwrap();
            assert_eq!(unpack(&v, f, shape).unwrap(), t);
            let used: usize = v.iter().map(|s| s.iter().filter(|x| **x != 0.0).count()).sum();
            assert_eq!(used, shape.len());
            let z = pack(&Tensor3::zeros(shape), f, 4096).unwrap();
            assert!(z.iter().flatten().all(|x| *x == 0.0));
        }
    }
    assert!(matches!(
        pack(&Tensor3::zeros(Shape::new(16, 32, 32)), PackingFormat::b(16, 1), 4096),
        Err(PackingError::ShapeOverflow { .. })
    ));
}

fn run_conv(b: &PlainBackend, spec: &ConvLayerSpec, t: &Tensor3, fixed: bool) -> (Tensor3, u64, usize) {
    let ops = Ops::new(b);
    let x = encrypt_tensor(b, t, spec.in_format, 6).unwrap();
    let y = if fixed { conv2d_fixed_baseline(&ops, &x, spec) } else { conv2d(&ops, &x, spec) }.unwrap();
    assert_eq!(y.format, spec.out_format);
    (decrypt_tensor(b, &y).unwrap(), ops.tally().rotations, y.level(b))
}

#[test]
fn identity_and_zero_kernels() {
    let b = plain();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let shape = Shape::new(4, 8, 8);
    let t = random_tensor(shape, &mut rng);
    let mut w = vec![0.0; 16];
    for c in 0..4 {
        w[c * 4 + c] = 1.0;
    }
    let fa = PackingFormat::a(4, 1, 4);
    let fb = PackingFormat::b(4, 1);
    for (fi, fo, fixed) in [(fa, fb, false), (fb, fa, false), (fa, fa, true), (fb, fb, true)] {
        let id = ConvLayerSpec::new(4, 4, 1, 1, w.clone(), vec![0.0; 4], fi, fo).unwrap();
        let (y, _, level) = run_conv(&b, &id, &t, fixed);
        assert!(y.max_abs_diff(&t) < 1e-12);
        assert_eq!(level, 4);
        let zero = ConvLayerSpec::new(4, 4, 3, 1, vec![0.0; 144], vec![0.25; 4], fi, fo).unwrap();
        let (y, _, _) = run_conv(&b, &zero, &t, fixed);
        assert!(y.data.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}

#[test]
fn random_convolutions_match_dense_reference() {
    let b = plain();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let cases = [
        (4, 8, 3, 1, PackingFormat::a(4, 1, 8), PackingFormat::b(8, 1)),
        (8, 4, 3, 1, PackingFormat::b(8, 1), PackingFormat::a(4, 1, 8)),
        (4, 16, 3, 2, PackingFormat::a(4, 1, 4), PackingFormat::b(4, 2)),
        (16, 16, 3, 1, PackingFormat::b(4, 1), PackingFormat::a(16, 1, 4)),
        (16, 8, 5, 2, PackingFormat::a(16, 1, 4), PackingFormat::b(4, 2)),
        (3, 5, 3, 1, PackingFormat::a(2, 1, 8), PackingFormat::b(8, 1)),
    ];
    for (cin, cout, k, s, fi, fo) in cases {
        let t = random_tensor(Shape::new(cin, 8, 8), &mut rng);
        let mut spec = random_conv(cin, cout, k, s, fi, fo, &mut rng);
        spec.pre_scale = (0..cin).map(|_| rng.random_range(0.5..1.5)).collect();
        spec.input_offset = (0..cin).map(|_| rng.random_range(-0.5..0.5)).collect();
        let want = dense_conv2d(&t, &spec);
        let (alt, r_alt, _) = run_conv(&b, &spec, &t, false);
        assert!(alt.max_abs_diff(&want) < 1e-9, "alternating {cin}->{cout} k{k} s{s}");
        let fixed_spec = ConvLayerSpec { out_format: fi.strided(s), ..spec.clone() };
        let (fix, r_fix, _) = run_conv(&b, &fixed_spec, &t, true);
        assert!(fix.max_abs_diff(&want) < 1e-9, "fixed {cin}->{cout} k{k} s{s}");
        if cin >= 8 && cout >= 8 {
            assert!(r_alt < r_fix, "{r_alt} vs {r_fix}");
        }
    }
}

#[test]
fn alternating_uses_fewer_rotations_on_16x8x8() {
    let b = plain();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let shape = Shape::new(16, 8, 8);
    let t = random_tensor(shape, &mut rng);
    for (fi, fo) in [(PackingFormat::a(16, 1, 4), PackingFormat::b(4, 1)), (PackingFormat::b(16, 1), PackingFormat::a(4, 1, 16))] {
        let spec = random_conv(16, 16, 3, 1, fi, fo, &mut rng);
        let (alt, r_alt, _) = run_conv(&b, &spec, &t, false);
        let fixed = ConvLayerSpec { out_format: fi, ..spec.clone() };
        let (fix, r_fix, _) = run_conv(&b, &fixed, &t, true);
        assert!(alt.max_abs_diff(&fix) < 1e-9);
        eprintln!("{:?}->{:?}: alternating {r_alt}, fixed {r_fix}", fi.variant, fo.variant);
        assert!(r_alt < r_fix, "{r_alt} vs {r_fix}");
    }
}

#[test]
fn downsample_pool_and_dense_layers() {
    let b = plain();
    let ops = Ops::new(&b);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let shape = Shape::new(8, 8, 8);
    let t = random_tensor(shape, &mut rng);
    for f in [PackingFormat::a(8, 1, 4), PackingFormat::b(8, 1), PackingFormat::a(2, 1, 8), PackingFormat::b(4, 1)] {
        let x = encrypt_tensor(&b, &t, f, 5).unwrap();
        let d = downsample(&ops, &x, f.strided(2)).unwrap();
        assert_eq!(d.level(&b), 4);
        let got = decrypt_tensor(&b, &d).unwrap();
        for c in 0..8 {
            for i in 0..4 {
                for j in 0..4 {
                    assert!((got.get(c, i, j) - t.get(c, 2 * i, 2 * j)).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(downsample(&ops, &x, f), Err(PackingError::FormatMismatch { .. })));

        let pooled = avgpool_global(&ops, &d).unwrap();
        assert_eq!(b.level(&pooled.ct), 4);
        let v = b.decrypt(&pooled.ct).unwrap();
        for c in 0..8 {
            let mean: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| t.get(c, 2 * i, 2 * j)).sum::<f64>() / 16.0;
            assert!((v[pooled.slots[c]] - mean).abs() < 1e-12);
        }
        let constant = encrypt_tensor(&b, &Tensor3::from_vec(shape, vec![0.75; shape.len()]).unwrap(), f, 3).unwrap();
        let p = avgpool_global(&ops, &constant).unwrap();
        let v = b.decrypt(&p.ct).unwrap();
        assert!(p.slots.iter().all(|&s| (v[s] - 0.75).abs() < 1e-12));
    }
}

#[test]
fn dense_layer_identity_and_random() {
    let b = plain();
    let ops = Ops::new(&b);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let t = random_tensor(Shape::new(4, 4, 4), &mut rng);
    let x = encrypt_tensor(&b, &t, PackingFormat::b(4, 1), 3).unwrap();
    let flat = flatten(&x).unwrap();
    let mut eye = vec![0.0; 64 * 64];
    for i in 0..64 {
        eye[i * 64 + i] = 1.0;
    }
    let id = fully_connected(&ops, &flat, &LinearSpec::new(64, 64, eye, vec![0.0; 64]).unwrap()).unwrap();
    assert_eq!(b.level(&id.ct), 2);
    assert!(id.slots == (0..64).collect::<Vec<_>>());
    let v = b.decrypt(&id.ct).unwrap();
    assert!((0..64).all(|i| (v[i] - t.data[i]).abs() < 1e-12));

    let w: Vec<f64> = (0..640).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut spec = LinearSpec::new(64, 10, w, bias).unwrap();
    spec.pre_scale = (0..64).map(|_| rng.random_range(0.5..1.5)).collect();
    spec.input_offset = (0..64).map(|_| rng.random_range(-0.5..0.5)).collect();
    let y = fully_connected(&ops, &flat, &spec).unwrap();
    let got = b.decrypt(&y.ct).unwrap();
    let want = dense_linear(&t.data, &spec);
    assert!((0..10).all(|o| (got[o] - want[o]).abs() < 1e-9));
    assert!(got[10..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn level_exhaustion_is_reported() {
    let b = plain();
    let ops = Ops::new(&b);
    let fa = PackingFormat::a(4, 1, 4);
    let spec = ConvLayerSpec::new(4, 4, 1, 1, vec![0.0; 16], vec![0.0; 4], fa, PackingFormat::b(4, 1)).unwrap();
    let x = encrypt_tensor(&b, &Tensor3::zeros(Shape::new(4, 4, 4)), fa, 1).unwrap();
    assert!(matches!(conv2d(&ops, &x, &spec), Err(PackingError::LevelExhausted { needed: 2, available: 1 })));
    let wrong = encrypt_tensor(&b, &Tensor3::zeros(Shape::new(4, 4, 4)), PackingFormat::b(4, 1), 3).unwrap();
    assert!(matches!(conv2d(&ops, &wrong, &spec), Err(PackingError::FormatMismatch { .. })));
}

struct Enc {
    ctx: CkksContext,
    keys: KeySet,
}

fn enc() -> &'static Enc {
    static E: OnceLock<Enc> = OnceLock::new();
    E.get_or_init(|| {
        let ctx = CkksContext::new(CkksParams::desk_a()).unwrap();
        let opts = KeyGenOptions { rotations: KeyGenOptions::power_of_two_rotations(ctx.slots()), max_level: Some(6) };
        let keys = ctx.keygen(&opts, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        Enc { ctx, keys }
    })
}

#[test]
fn encrypted_layers_match_plaintext() {
    let e = enc();
    let cb = CkksBackend::new(&e.ctx, &e.keys.public, 1).with_secret_key(&e.keys.sk, RefreshMode::Disabled);
    let pb = plain();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let shape = Shape::new(4, 8, 8);
    let t = random_tensor(shape, &mut rng);
    let spec = random_conv(4, 8, 3, 1, PackingFormat::a(4, 1, 8), PackingFormat::b(8, 1), &mut rng);
    let want = dense_conv2d(&t, &spec);
    let cops = Ops::new(&cb);
    let x = encrypt_tensor(&cb, &t, spec.in_format, 6).unwrap();
    let y = conv2d(&cops, &x, &spec).unwrap();
    assert_eq!(y.level(&cb), 4);
    assert!(decrypt_tensor(&cb, &y).unwrap().max_abs_diff(&want) < 1e-3);

    let fixed = ConvLayerSpec { out_format: spec.in_format, ..spec.clone() };
    let fops = Ops::new(&cb);
    let z = conv2d_fixed_baseline(&fops, &x, &fixed).unwrap();
    assert!(decrypt_tensor(&cb, &z).unwrap().max_abs_diff(&want) < 1e-3);

    let pops = Ops::new(&pb);
    conv2d(&pops, &encrypt_tensor(&pb, &t, spec.in_format, 6).unwrap(), &spec).unwrap();
    assert_eq!(pops.tally(), cops.tally());

    let pooled = avgpool_global(&cops, &y).unwrap();
    let fc = LinearSpec::new(8, 3, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![0.1, 0.2, 0.3]).unwrap();
    let out = fully_connected(&cops, &pooled, &fc).unwrap();
    assert_eq!(cb.level(&out.ct), 3);
    let means: Vec<f64> = (0..8).map(|c| (0..64).map(|p| want.get(c, p / 8, p % 8)).sum::<f64>() / 64.0).collect();
    let got = cb.decrypt(&out.ct).unwrap();
    let ref_out = dense_linear(&means, &fc);
    assert!((0..3).all(|o| (got[o] - ref_out[o]).abs() < 1e-3));
}
