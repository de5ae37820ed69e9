//! Slot-vector backends shared by the encrypted and plaintext executors.
//!
//! Layer code is written once against [`SlotBackend`]. The plaintext backend tracks the
//! same level and scale bookkeeping as CKKS, with the real rescale primes, so level
//! errors and op tallies are identical in both modes.

use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{OpTally, PackingError};
use crate::ckks::{Ciphertext, CkksContext, CkksError, CkksParams, Plaintext, PublicKeySet, RefreshMode, SecretKey, SCALE_TOLERANCE};

pub trait SlotBackend: Sync {
    type Ct: Clone + Send + Sync;

    fn slots(&self) -> usize;
    /// Scale fresh encryptions and layer outputs are normalized to.
    fn nominal_scale(&self) -> f64;
    /// Prime removed by a rescale at `level`.
    fn rescale_prime(&self, level: usize) -> f64;
    fn level(&self, x: &Self::Ct) -> usize;
    fn scale(&self, x: &Self::Ct) -> f64;
    fn is_refreshed(&self, x: &Self::Ct) -> bool;

    fn encrypt(&self, values: &[f64], level: usize) -> Result<Self::Ct, PackingError>;
    fn decrypt(&self, x: &Self::Ct) -> Result<Vec<f64>, PackingError>;

    fn add(&self, x: &Self::Ct, y: &Self::Ct) -> Result<Self::Ct, PackingError>;
    /// Adds a plaintext vector encoded at the ciphertext's own scale.
    fn add_plain(&self, x: &Self::Ct, values: &[f64]) -> Result<Self::Ct, PackingError>;
    /// Slotwise product with a plaintext encoded so that the next rescale yields `target_scale`.
    fn mul_plain(&self, x: &Self::Ct, values: &[f64], target_scale: f64) -> Result<Self::Ct, PackingError>;
    /// Ciphertext product with relinearization, not rescaled.
    fn mul(&self, x: &Self::Ct, y: &Self::Ct) -> Result<Self::Ct, PackingError>;
    fn rescale(&self, x: &Self::Ct) -> Result<Self::Ct, PackingError>;
    /// Left rotation; negative steps rotate right.
    fn rotate(&self, x: &Self::Ct, step: i64) -> Result<Self::Ct, PackingError>;
    /// Several rotations of one ciphertext; backends may share work between them.
    fn rotate_many(&self, x: &Self::Ct, steps: &[i64]) -> Result<Vec<Self::Ct>, PackingError> {
        steps.iter().map(|&s| self.rotate(x, s)).collect()
    }
    fn drop_to(&self, x: &Self::Ct, level: usize) -> Result<Self::Ct, PackingError>;
    /// Divides every message by `divisor` by reinterpreting the scale; free and exact.
    fn divide_by_scale(&self, x: &Self::Ct, divisor: f64) -> Self::Ct;
    /// Brings the ciphertext back to `level` at nominal scale.
    fn refresh(&self, x: &Self::Ct, level: usize) -> Result<Self::Ct, PackingError>;
}

/// Plaintext scale that makes `x·pt` rescale to `target` at `level`.
fn plain_scale<B: SlotBackend + ?Sized>(b: &B, x_scale: f64, level: usize, target: f64) -> f64 {
    b.rescale_prime(level) * target / x_scale
}

/// Cleartext slot vectors with CKKS level and scale bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainCt {
    pub values: Vec<f64>,
    pub level: usize,
    pub scale: f64,
    pub refreshed: bool,
}

pub struct PlainBackend {
    slots: usize,
    scale: f64,
    chain: Vec<f64>,
    refresh: RefreshMode,
}

impl PlainBackend {
    pub fn new(params: &CkksParams, refresh: RefreshMode) -> Self {
        Self {
            slots: params.slots(),
            scale: params.scale(),
            chain: params.q_chain.iter().map(|&q| q as f64).collect(),
            refresh,
        }
    }

    fn check_pair(x: &PlainCt, y: &PlainCt) -> Result<(), PackingError> {
        if x.level != y.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: y.level }.into());
        }
        if (x.scale / y.scale - 1.0).abs() > SCALE_TOLERANCE {
            return Err(CkksError::ScaleMismatch { left: x.scale, right: y.scale }.into());
        }
        Ok(())
    }

    fn check_len(&self, values: &[f64]) -> Result<(), PackingError> {
        if values.len() > self.slots {
            return Err(CkksError::TooManyValues { given: values.len(), slots: self.slots }.into());
        }
        Ok(())
    }

    fn padded(&self, values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        v.resize(self.slots, 0.0);
        v
    }
}

impl SlotBackend for PlainBackend {
    type Ct = PlainCt;

    fn slots(&self) -> usize {
        self.slots
    }

    fn nominal_scale(&self) -> f64 {
        self.scale
    }

    fn rescale_prime(&self, level: usize) -> f64 {
        self.chain[level]
    }

    fn level(&self, x: &PlainCt) -> usize {
        x.level
    }

    fn scale(&self, x: &PlainCt) -> f64 {
        x.scale
    }

    fn is_refreshed(&self, x: &PlainCt) -> bool {
        x.refreshed
    }

    fn encrypt(&self, values: &[f64], level: usize) -> Result<PlainCt, PackingError> {
        self.check_len(values)?;
        if level >= self.chain.len() {
            return Err(CkksError::LevelOutOfRange { level, max: self.chain.len() - 1 }.into());
        }
        Ok(PlainCt { values: self.padded(values), level, scale: self.scale, refreshed: false })
    }

    fn decrypt(&self, x: &PlainCt) -> Result<Vec<f64>, PackingError> {
        Ok(x.values.clone())
    }

    fn add(&self, x: &PlainCt, y: &PlainCt) -> Result<PlainCt, PackingError> {
        Self::check_pair(x, y)?;
        let values = x.values.iter().zip(&y.values).map(|(a, b)| a + b).collect();
        Ok(PlainCt { values, level: x.level, scale: x.scale, refreshed: x.refreshed || y.refreshed })
    }

    fn add_plain(&self, x: &PlainCt, values: &[f64]) -> Result<PlainCt, PackingError> {
        self.check_len(values)?;
        let mut r = x.clone();
        for (a, b) in r.values.iter_mut().zip(values) {
            *a += b;
        }
        Ok(r)
    }

    fn mul_plain(&self, x: &PlainCt, values: &[f64], target: f64) -> Result<PlainCt, PackingError> {
        self.check_len(values)?;
        let v = self.padded(values);
        let values = x.values.iter().zip(&v).map(|(a, b)| a * b).collect();
        let scale = x.scale * plain_scale(self, x.scale, x.level, target);
        Ok(PlainCt { values, level: x.level, scale, refreshed: x.refreshed })
    }

    fn mul(&self, x: &PlainCt, y: &PlainCt) -> Result<PlainCt, PackingError> {
        if x.level != y.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: y.level }.into());
        }
        let values = x.values.iter().zip(&y.values).map(|(a, b)| a * b).collect();
        Ok(PlainCt { values, level: x.level, scale: x.scale * y.scale, refreshed: x.refreshed || y.refreshed })
    }

    fn rescale(&self, x: &PlainCt) -> Result<PlainCt, PackingError> {
        if x.level == 0 {
            return Err(CkksError::LevelExhausted.into());
        }
        Ok(PlainCt { values: x.values.clone(), level: x.level - 1, scale: x.scale / self.chain[x.level], refreshed: x.refreshed })
    }

    fn rotate(&self, x: &PlainCt, step: i64) -> Result<PlainCt, PackingError> {
        let k = step.rem_euclid(self.slots as i64) as usize;
        let mut values = x.values.clone();
        values.rotate_left(k);
        Ok(PlainCt { values, level: x.level, scale: x.scale, refreshed: x.refreshed })
    }

    fn drop_to(&self, x: &PlainCt, level: usize) -> Result<PlainCt, PackingError> {
        if level > x.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: level }.into());
        }
        Ok(PlainCt { values: x.values.clone(), level, scale: x.scale, refreshed: x.refreshed })
    }

    fn divide_by_scale(&self, x: &PlainCt, divisor: f64) -> PlainCt {
        PlainCt { values: x.values.iter().map(|v| v / divisor).collect(), level: x.level, scale: x.scale * divisor, refreshed: x.refreshed }
    }

    fn refresh(&self, x: &PlainCt, level: usize) -> Result<PlainCt, PackingError> {
        if self.refresh != RefreshMode::InsecureDebug {
            return Err(CkksError::RefreshDisabled.into());
        }
        if level >= self.chain.len() {
            return Err(CkksError::LevelOutOfRange { level, max: self.chain.len() - 1 }.into());
        }
        Ok(PlainCt { values: x.values.clone(), level, scale: self.scale, refreshed: true })
    }
}

/// Encrypted backend over a CKKS context and public key set.
pub struct CkksBackend<'a> {
    ctx: &'a CkksContext,
    keys: &'a PublicKeySet,
    sk: Option<&'a SecretKey>,
    refresh: RefreshMode,
    rng: Mutex<ChaCha20Rng>,
    cache: Option<Mutex<HashMap<u64, Vec<CachedPlain>>>>,
}

struct CachedPlain {
    values: Vec<f64>,
    level: usize,
    scale: f64,
    pt: Plaintext,
}

impl<'a> CkksBackend<'a> {
    pub fn new(ctx: &'a CkksContext, keys: &'a PublicKeySet, seed: u64) -> Self {
        Self { ctx, keys, sk: None, refresh: RefreshMode::Disabled, rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)), cache: None }
    }

    /// Enables decryption and, with `RefreshMode::InsecureDebug`, debug refresh.
    pub fn with_secret_key(mut self, sk: &'a SecretKey, refresh: RefreshMode) -> Self {
        self.sk = Some(sk);
        self.refresh = refresh;
        self
    }

    /// Reuses encoded plaintexts across calls; worthwhile when one network runs many inputs.
    pub fn with_plaintext_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn context(&self) -> &CkksContext {
        self.ctx
    }

    fn secret(&self) -> Result<&SecretKey, PackingError> {
        self.sk.ok_or(PackingError::SecretKeyRequired)
    }

    fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext, PackingError> {
        let Some(cache) = &self.cache else {
            return Ok(self.ctx.encode(values, scale, level)?);
        };
        let mut h = std::collections::hash_map::DefaultHasher::new();
        level.hash(&mut h);
        scale.to_bits().hash(&mut h);
        for v in values {
            v.to_bits().hash(&mut h);
        }
        let key = h.finish();
        if let Some(hit) = cache.lock().unwrap().get(&key).and_then(|bucket| {
            bucket.iter().find(|c| c.level == level && c.scale == scale && c.values == values).map(|c| c.pt.clone())
        }) {
            return Ok(hit);
        }
        let pt = self.ctx.encode(values, scale, level)?;
        cache.lock().unwrap().entry(key).or_default().push(CachedPlain { values: values.to_vec(), level, scale, pt: pt.clone() });
        Ok(pt)
    }
}

impl SlotBackend for CkksBackend<'_> {
    type Ct = Ciphertext;

    fn slots(&self) -> usize {
        self.ctx.slots()
    }

    fn nominal_scale(&self) -> f64 {
        self.ctx.params().scale()
    }

    fn rescale_prime(&self, level: usize) -> f64 {
        self.ctx.rescale_prime(level) as f64
    }

    fn level(&self, x: &Ciphertext) -> usize {
        x.level
    }

    fn scale(&self, x: &Ciphertext) -> f64 {
        x.scale
    }

    fn is_refreshed(&self, x: &Ciphertext) -> bool {
        x.refreshed
    }

    fn encrypt(&self, values: &[f64], level: usize) -> Result<Ciphertext, PackingError> {
        let pt = self.ctx.encode(values, self.nominal_scale(), level)?;
        Ok(self.ctx.encrypt(&pt, self.keys, &mut *self.rng.lock().unwrap())?)
    }

    fn decrypt(&self, x: &Ciphertext) -> Result<Vec<f64>, PackingError> {
        Ok(self.ctx.decrypt_real(x, self.secret()?)?)
    }

    fn add(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, PackingError> {
        Ok(self.ctx.hadd(x, y)?)
    }

    fn add_plain(&self, x: &Ciphertext, values: &[f64]) -> Result<Ciphertext, PackingError> {
        let pt = self.encode(values, x.scale, x.level)?;
        Ok(self.ctx.padd(x, &pt)?)
    }

    fn mul_plain(&self, x: &Ciphertext, values: &[f64], target: f64) -> Result<Ciphertext, PackingError> {
        let pt = self.encode(values, plain_scale(self, x.scale, x.level, target), x.level)?;
        Ok(self.ctx.pmult(x, &pt)?)
    }

    fn mul(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, PackingError> {
        Ok(self.ctx.hmult(x, y, self.keys)?)
    }

    fn rescale(&self, x: &Ciphertext) -> Result<Ciphertext, PackingError> {
        Ok(self.ctx.rescale(x)?)
    }

    fn rotate(&self, x: &Ciphertext, step: i64) -> Result<Ciphertext, PackingError> {
        Ok(self.ctx.rotate(x, step, self.keys)?)
    }

    fn rotate_many(&self, x: &Ciphertext, steps: &[i64]) -> Result<Vec<Ciphertext>, PackingError> {
        Ok(self.ctx.rotate_hoisted(x, steps, self.keys)?)
    }

    fn drop_to(&self, x: &Ciphertext, level: usize) -> Result<Ciphertext, PackingError> {
        Ok(self.ctx.mod_drop(x, level)?)
    }

    fn divide_by_scale(&self, x: &Ciphertext, divisor: f64) -> Ciphertext {
        let mut r = x.clone();
        r.scale *= divisor;
        r
    }

    fn refresh(&self, x: &Ciphertext, level: usize) -> Result<Ciphertext, PackingError> {
        let sk = self.sk.ok_or(CkksError::RefreshDisabled)?;
        Ok(self.ctx.debug_refresh(x, sk, level, self.refresh, &mut *self.rng.lock().unwrap())?)
    }
}

#[derive(Default, Debug)]
struct AtomicTally([AtomicU64; 6]);

/// Backend wrapper that counts every operation it forwards.
pub struct Ops<'b, B: SlotBackend> {
    pub backend: &'b B,
    counts: AtomicTally,
    steps: Mutex<BTreeSet<usize>>,
}

impl<'b, B: SlotBackend> Ops<'b, B> {
    pub fn new(backend: &'b B) -> Self {
        Self { backend, counts: AtomicTally::default(), steps: Mutex::default() }
    }

    fn bump(&self, i: usize, n: u64) {
        self.counts.0[i].fetch_add(n, Ordering::Relaxed);
    }

    pub fn tally(&self) -> OpTally {
        let c = |i: usize| self.counts.0[i].load(Ordering::Relaxed);
        OpTally { rotations: c(0), hmults: c(1), pmults: c(2), hadds: c(3), rescales: c(4), refreshes: c(5) }
    }

    pub fn slots(&self) -> usize {
        self.backend.slots()
    }

    pub fn nominal_scale(&self) -> f64 {
        self.backend.nominal_scale()
    }

    pub fn level(&self, x: &B::Ct) -> usize {
        self.backend.level(x)
    }

    pub fn scale(&self, x: &B::Ct) -> f64 {
        self.backend.scale(x)
    }

    /// Distinct left-rotation amounts used so far, in `[1, slots)`.
    pub fn rotation_steps(&self) -> Vec<usize> {
        self.steps.lock().unwrap().iter().copied().collect()
    }

    /// Counts and records a rotation; false when it is the identity.
    fn note_rotation(&self, step: i64) -> bool {
        let s = step.rem_euclid(self.slots() as i64) as usize;
        if s != 0 {
            self.bump(0, 1);
            self.steps.lock().unwrap().insert(s);
        }
        s != 0
    }

    pub fn rotate(&self, x: &B::Ct, step: i64) -> Result<B::Ct, PackingError> {
        if !self.note_rotation(step) {
            return Ok(x.clone());
        }
        self.backend.rotate(x, step)
    }

    pub fn rotate_many(&self, x: &B::Ct, steps: &[i64]) -> Result<Vec<B::Ct>, PackingError> {
        for &s in steps {
            self.note_rotation(s);
        }
        self.backend.rotate_many(x, steps)
    }

    pub fn mul(&self, x: &B::Ct, y: &B::Ct) -> Result<B::Ct, PackingError> {
        self.bump(1, 1);
        self.backend.mul(x, y)
    }

    pub fn mul_plain(&self, x: &B::Ct, values: &[f64], target_scale: f64) -> Result<B::Ct, PackingError> {
        self.bump(2, 1);
        self.backend.mul_plain(x, values, target_scale)
    }

    pub fn add(&self, x: &B::Ct, y: &B::Ct) -> Result<B::Ct, PackingError> {
        self.bump(3, 1);
        self.backend.add(x, y)
    }

    pub fn add_plain(&self, x: &B::Ct, values: &[f64]) -> Result<B::Ct, PackingError> {
        self.bump(3, 1);
        self.backend.add_plain(x, values)
    }

    /// Adds `y` into an optional accumulator.
    pub fn accumulate(&self, acc: Option<B::Ct>, y: B::Ct) -> Result<Option<B::Ct>, PackingError> {
        Ok(Some(match acc {
            None => y,
            Some(a) => self.add(&a, &y)?,
        }))
    }

    pub fn rescale(&self, x: &B::Ct) -> Result<B::Ct, PackingError> {
        self.bump(4, 1);
        self.backend.rescale(x)
    }

    pub fn refresh(&self, x: &B::Ct, level: usize) -> Result<B::Ct, PackingError> {
        self.bump(5, 1);
        self.backend.refresh(x, level)
    }

    pub fn drop_to(&self, x: &B::Ct, level: usize) -> Result<B::Ct, PackingError> {
        if self.level(x) == level {
            return Ok(x.clone());
        }
        self.backend.drop_to(x, level)
    }

    pub fn divide_by_scale(&self, x: &B::Ct, divisor: f64) -> B::Ct {
        self.backend.divide_by_scale(x, divisor)
    }
}
