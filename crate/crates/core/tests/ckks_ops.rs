use std::sync::OnceLock;

use hcnn::ckks::{CkksContext, CkksError, CkksParams, KeyGenOptions, KeySet, RefreshMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Fixture {
    ctx: CkksContext,
    keys: KeySet,
}

fn desk_a() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let ctx = CkksContext::new(CkksParams::desk_a()).unwrap();
        let keys = ctx.keygen(&KeyGenOptions::with_rotations([1, -1, 3, 16]), &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        Fixture { ctx, keys }
    })
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn encode_decode_example() {
    let f = desk_a();
    let v = [1.5, -2.25, 0.0, 3.0];
    let pt = f.ctx.encode(&v, f.ctx.params().scale(), f.ctx.max_level()).unwrap();
    let back = f.ctx.decode(&pt).unwrap();
    assert!(max_err(&v, &back[..4]) < 1e-6);
    assert!(back[4..].iter().all(|x| x.abs() < 1e-6));
}

#[test]
fn encrypt_decrypt_and_additions() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let d = f.ctx.params().scale();
    let l = f.ctx.max_level();
    let x = f.ctx.encrypt(&f.ctx.encode(&[1.0, 2.0], d, l).unwrap(), &f.keys.public, &mut rng).unwrap();
    let y = f.ctx.encrypt(&f.ctx.encode(&[3.0, 4.0], d, l).unwrap(), &f.keys.public, &mut rng).unwrap();
    let s = f.ctx.decrypt_real(&f.ctx.hadd(&x, &y).unwrap(), &f.keys.sk).unwrap();
    assert!(max_err(&s[..2], &[4.0, 6.0]) < 1e-5);
    let dif = f.ctx.decrypt_real(&f.ctx.hsub(&x, &y).unwrap(), &f.keys.sk).unwrap();
    assert!(max_err(&dif[..2], &[-2.0, -2.0]) < 1e-5);
    let p = f.ctx.padd(&x, &f.ctx.encode(&[0.5, 0.5], d, l).unwrap()).unwrap();
    assert!(max_err(&f.ctx.decrypt_real(&p, &f.keys.sk).unwrap()[..2], &[1.5, 2.5]) < 1e-5);
}

#[test]
fn multiply_and_rescale() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let d = f.ctx.params().scale();
    let l = f.ctx.max_level();
    let x = f.ctx.encrypt(&f.ctx.encode(&[2.0, 3.0], d, l).unwrap(), &f.keys.public, &mut rng).unwrap();
    let y = f.ctx.encrypt(&f.ctx.encode(&[4.0, 5.0], d, l).unwrap(), &f.keys.public, &mut rng).unwrap();
    let z = f.ctx.rescale(&f.ctx.hmult(&x, &y, &f.keys.public).unwrap()).unwrap();
    assert_eq!(z.level, l - 1);
    assert!((z.scale.log2() - 40.0).abs() < 1.0);
    let out = f.ctx.decrypt_real(&z, &f.keys.sk).unwrap();
    assert!(max_err(&out[..2], &[8.0, 15.0]) < 1e-4);

    let w = f.ctx.pmult(&x, &f.ctx.encode(&[0.5, -1.0], f.ctx.rescale_prime(l) as f64, l).unwrap()).unwrap();
    let w = f.ctx.rescale(&w).unwrap();
    assert_eq!(w.scale, x.scale);
    assert!(max_err(&f.ctx.decrypt_real(&w, &f.keys.sk).unwrap()[..2], &[1.0, -3.0]) < 1e-5);
}

#[test]
fn rotation_moves_slots_left() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let slots = f.ctx.slots();
    let v: Vec<f64> = (1..=8).map(f64::from).collect();
    let x = f.ctx.encrypt(&f.ctx.encode(&v, f.ctx.params().scale(), 4).unwrap(), &f.keys.public, &mut rng).unwrap();
    let r = f.ctx.decrypt_real(&f.ctx.rotate(&x, 1, &f.keys.public).unwrap(), &f.keys.sk).unwrap();
    assert!(max_err(&r[..7], &v[1..]) < 1e-5);
    assert!((r[slots - 1] - 1.0).abs() < 1e-5 && r[7].abs() < 1e-5);
    let back = f.ctx.rotate(&f.ctx.rotate(&x, 3, &f.keys.public).unwrap(), -3, &f.keys.public).unwrap();
    assert!(max_err(&f.ctx.decrypt_real(&back, &f.keys.sk).unwrap()[..8], &v) < 1e-5);
    let composed = f.ctx.rotate(&x, 5, &f.keys.public).unwrap();
    assert!(max_err(&f.ctx.decrypt_real(&composed, &f.keys.sk).unwrap()[..3], &v[5..]) < 1e-5);
}

#[test]
fn hoisted_rotations_match_single_rotations() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let v: Vec<f64> = (0..f.ctx.slots()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = f.ctx.encrypt(&f.ctx.encode(&v, f.ctx.params().scale(), 6).unwrap(), &f.keys.public, &mut rng).unwrap();
    // keyed, identity, composed and right rotations in one batch
    let steps = [1, 0, 16, 5, -1, 3];
    let many = f.ctx.rotate_hoisted(&x, &steps, &f.keys.public).unwrap();
    for (&s, r) in steps.iter().zip(&many) {
        let one = f.ctx.decrypt_real(&f.ctx.rotate(&x, s, &f.keys.public).unwrap(), &f.keys.sk).unwrap();
        let got = f.ctx.decrypt_real(r, &f.keys.sk).unwrap();
        assert!(max_err(&got, &one) < 1e-5, "step {s}");
        let mut want = v.clone();
        want.rotate_left(s.rem_euclid(v.len() as i64) as usize);
        assert!(max_err(&got, &want) < 1e-5, "step {s}");
    }
}

#[test]
fn error_cases() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let d = f.ctx.params().scale();
    let x = f.ctx.encrypt(&f.ctx.encode(&[1.0], d, 3).unwrap(), &f.keys.public, &mut rng).unwrap();
    let y = f.ctx.encrypt(&f.ctx.encode(&[1.0], d, 2).unwrap(), &f.keys.public, &mut rng).unwrap();
    assert!(matches!(f.ctx.hadd(&x, &y), Err(CkksError::LevelMismatch { .. })));
    let mut z = x.clone();
    z.scale *= 2.0;
    assert!(matches!(f.ctx.hadd(&x, &z), Err(CkksError::ScaleMismatch { .. })));
    let bottom = f.ctx.mod_drop(&x, 0).unwrap();
    assert!(matches!(f.ctx.rescale(&bottom), Err(CkksError::LevelExhausted)));
    let too_many = vec![0.0; f.ctx.slots() + 1];
    assert!(matches!(f.ctx.encode(&too_many, d, 1), Err(CkksError::TooManyValues { .. })));
    assert!(matches!(f.ctx.encode(&vec![1e9; f.ctx.slots()], d, 0), Err(CkksError::ScaleOverflow(_))));
    let sparse = f.ctx.keygen(&KeyGenOptions::with_rotations([2]), &mut rng).unwrap();
    assert!(matches!(f.ctx.rotate(&x, 1, &sparse.public), Err(CkksError::MissingKey(1))));
}

#[test]
fn debug_refresh_is_gated_and_marked() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let x = f.ctx.encrypt(&f.ctx.encode(&[0.25, -0.5], f.ctx.params().scale(), 1).unwrap(), &f.keys.public, &mut rng).unwrap();
    assert!(matches!(
        f.ctx.debug_refresh(&x, &f.keys.sk, 9, RefreshMode::Disabled, &mut rng),
        Err(CkksError::RefreshDisabled)
    ));
    let r = f.ctx.debug_refresh(&x, &f.keys.sk, 9, RefreshMode::InsecureDebug, &mut rng).unwrap();
    assert_eq!(r.level, 9);
    assert!(r.refreshed && !x.refreshed);
    assert!(max_err(&f.ctx.decrypt_real(&r, &f.keys.sk).unwrap()[..2], &[0.25, -0.5]) < 1e-5);
    assert!(f.ctx.hadd(&r, &f.ctx.mod_drop(&f.ctx.encrypt(&f.ctx.encode(&[1.0], f.ctx.params().scale(), 9).unwrap(), &f.keys.public, &mut rng).unwrap(), 9).unwrap()).unwrap().refreshed);
}

#[test]
fn containers_round_trip_and_check_digest() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let x = f.ctx.encrypt(&f.ctx.encode(&[1.0, 2.0], f.ctx.params().scale(), 5).unwrap(), &f.keys.public, &mut rng).unwrap();
    let bytes = f.ctx.serialize_ciphertexts(std::slice::from_ref(&x), b"meta");
    assert_eq!(&bytes[..4], b"HCNK");
    let (cts, meta) = f.ctx.deserialize_ciphertexts(&bytes).unwrap();
    assert_eq!(meta, b"meta");
    assert_eq!(cts[0].b, x.b);
    assert_eq!(cts[0].level, 5);

    let sk = f.ctx.deserialize_secret_key(&f.ctx.serialize_secret_key(&f.keys.sk)).unwrap();
    let pks = f.ctx.deserialize_public_keys(&f.ctx.serialize_public_keys(&f.keys.public)).unwrap();
    assert_eq!(pks.rotation_steps(), f.keys.public.rotation_steps());
    let r = f.ctx.rotate(&cts[0], 1, &pks).unwrap();
    assert!((f.ctx.decrypt_real(&r, &sk).unwrap()[0] - 2.0).abs() < 1e-5);

    let other = CkksContext::new(CkksParams::desk_b()).unwrap();
    assert!(matches!(other.deserialize_ciphertexts(&bytes), Err(CkksError::DigestMismatch { .. })));
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(matches!(f.ctx.deserialize_ciphertexts(&corrupt), Err(CkksError::Format(_))));
}

#[test]
fn homomorphism_on_random_vectors() {
    let f = desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let d = f.ctx.params().scale();
    for _ in 0..5 {
        let a: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = f.ctx.encrypt(&f.ctx.encode(&a, d, 6).unwrap(), &f.keys.public, &mut rng).unwrap();
        let y = f.ctx.encrypt(&f.ctx.encode(&b, d, 6).unwrap(), &f.keys.public, &mut rng).unwrap();
        let prod = f.ctx.rescale(&f.ctx.hmult(&x, &y, &f.keys.public).unwrap()).unwrap();
        let want: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
        assert!(max_err(&f.ctx.decrypt_real(&prod, &f.keys.sk).unwrap()[..64], &want) < 1e-4);
        let sum = f.ctx.hadd(&x, &y).unwrap();
        let want: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        assert!(max_err(&f.ctx.decrypt_real(&sum, &f.keys.sk).unwrap()[..64], &want) < 1e-5);
    }
}
