//! Command-line front end. Failures map to exit codes 2 (usage), 3 (I/O, schema or
//! digest) and 4 (verification), each reported on one stderr line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ckks::{write_atomic, Ciphertext, CkksContext, CkksError, CkksParams, KeyGenOptions, RefreshMode};
use crate::graph::{
    build_graph, decrypt_output, encrypt_input, execute, gen_fixture, plaintext_forward, plan_levels, reference_forward,
    required_rotations, ConvMode, CostReport, GraphError, HcnnGraph, LevelPlan, ModelWeights, PlanOptions, Topology,
};
use crate::packing::{CkksBackend, PackedTensor, PackingError, SlotVector, Tensor3};

pub const TEST_MODE_ENV: &str = "HCNN_TEST_MODE";
pub const SECRET_KEY_FILE: &str = "secret.key";
pub const PUBLIC_KEYS_FILE: &str = "public.keys";
pub const BENCH_VERSION: u32 = 1;
const TIMING_NOTE: &str = "CPU timings of this implementation; not comparable to published GPU or ASIC latencies";

/// Prints one result to stdout; a closed pipe is not an error.
macro_rules! emit {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", message: m.into() }
    }

    pub fn io(m: impl Into<String>) -> Self {
        Self { code: 3, kind: "io", message: m.into() }
    }

    pub fn verify(m: impl Into<String>) -> Self {
        Self { code: 4, kind: "verify", message: m.into() }
    }

    /// `error kind=<kind> code=<code>: <message>` with newlines flattened.
    pub fn line(&self) -> String {
        format!("error kind={} code={}: {}", self.kind, self.code, self.message.replace('\n', " "))
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::DigestMismatch { .. } | GraphError::Schema(_) => Self::io(e.to_string()),
            GraphError::Ckks(c) => c.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<CkksError> for CliError {
    fn from(e: CkksError) -> Self {
        match e {
            CkksError::DigestMismatch { .. } | CkksError::Format(_) | CkksError::Io(_) => Self::io(e.to_string()),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<PackingError> for CliError {
    fn from(e: PackingError) -> Self {
        GraphError::from(e).into()
    }
}

#[derive(Parser, Debug)]
#[command(name = "hcnn", version, about = "Encrypted CNN inference over RNS-CKKS")]
pub struct Cli {
    /// Worker threads for limb-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a secret key and public key set.
    Keygen(KeygenArgs),
    /// Pack and encrypt an input image.
    Encrypt(EncryptArgs),
    /// Run the network on an encrypted input.
    Infer(InferArgs),
    /// Decrypt logits produced by `infer`.
    Decrypt(DecryptArgs),
    /// Median timings of single CKKS operations.
    BenchOps(BenchArgs),
    /// Per-layer levels and refresh placement.
    Plan(PlanArgs),
    /// Encrypted against plaintext inference on seeded inputs.
    Verify(VerifyArgs),
    /// Seeded random weights in the weights JSON schema.
    GenFixture(FixtureArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ParamsArg {
    /// Parameter preset: desk-A or desk-B.
    #[arg(long, default_value = "desk-A")]
    pub params: String,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// Weights JSON.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value = "alternating")]
    pub conv_mode: ModeArg,
    /// Top level to plan with (default: the parameter set's).
    #[arg(long)]
    pub max_level: Option<usize>,
    /// Level of the fresh input (default: the network depth when it fits, else the top level).
    #[arg(long)]
    pub start_level: Option<usize>,
    /// Level a refresh restores (default: one below the top level).
    #[arg(long)]
    pub refresh_target: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Alternating,
    Fixed,
}

impl From<ModeArg> for ConvMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Alternating => ConvMode::Alternating,
            ModeArg::Fixed => ConvMode::Fixed,
        }
    }
}

#[derive(Args, Debug)]
pub struct KeygenArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    /// Extra rotation steps, comma separated (negative rotates right). Without `--weights`
    /// the ±2^k steps are always added so that any rotation can be composed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rots: Vec<i64>,
    /// Also add every rotation this network needs.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "alternating")]
    pub conv_mode: ModeArg,
    /// Highest level the switching keys support (default: the parameter set's).
    #[arg(long)]
    pub max_level: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving the key files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncryptArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub keys: PathBuf,
    /// JSON array of input values in `(c, h, w)` order, or an object with an `input` array.
    #[arg(long, conflicts_with = "golden_index")]
    pub input: Option<PathBuf>,
    /// Use the input of this golden pair from the weights file.
    #[arg(long)]
    pub golden_index: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub keys: PathBuf,
    /// Ciphertext written by `encrypt`.
    #[arg(long)]
    pub input: PathBuf,
    /// Encrypted logits.
    #[arg(long)]
    pub out: PathBuf,
    /// Cost report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecryptArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Logits JSON (default: stdout only).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Level the operands sit at (default: the top level).
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value = "desk-B")]
    pub params: String,
    /// Network shape for generated weights; ignored with `--weights`.
    #[arg(long, default_value = "tiny-cnn")]
    pub topology: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "alternating")]
    pub conv_mode: ModeArg,
    /// Number of random inputs.
    #[arg(long, default_value_t = 1)]
    pub inputs: usize,
    /// Largest tolerated logit difference.
    #[arg(long, default_value_t = 1e-2)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long)]
    pub topology: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub golden_count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).line());
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        // the pool can only be set once per process; later calls keep the first size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Infer(a) => infer(a),
        Command::Decrypt(a) => decrypt(a),
        Command::BenchOps(a) => bench_ops(a),
        Command::Plan(a) => plan(a),
        Command::Verify(a) => verify(a),
        Command::GenFixture(a) => gen_fixture_cmd(a),
    }
}

fn load_params(name: &str) -> Result<CkksParams, CliError> {
    let p = CkksParams::preset(name).map_err(|e| CliError::usage(e.to_string()))?;
    if p.is_insecure() {
        eprintln!("warning: parameter set {name} is insecure and meant for development only");
    }
    Ok(p)
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn load_weights(path: &Path, params: &CkksParams) -> Result<ModelWeights, CliError> {
    let text = String::from_utf8(read(path)?).map_err(|_| CliError::io(format!("{}: not UTF-8", path.display())))?;
    let m = ModelWeights::from_json(&text)?;
    m.check_params(&params.digest_hex())?;
    Ok(m)
}

/// Level the fresh input starts at: the network depth when it fits, else the top level.
pub fn default_plan_options(graph: &HcnnGraph, max_level: usize) -> PlanOptions {
    PlanOptions { start_level: Some(graph.total_cost().min(max_level)), ..PlanOptions::new(max_level) }
}

fn graph_and_plan(params: &CkksParams, model: &ModelWeights, g: &GraphArgs) -> Result<(HcnnGraph, LevelPlan), CliError> {
    let graph = build_graph(model, params.slots(), g.conv_mode.into())?;
    let max = g.max_level.unwrap_or(params.max_level());
    let mut opts = default_plan_options(&graph, max);
    if g.start_level.is_some() {
        opts.start_level = g.start_level;
    }
    opts.refresh_target = g.refresh_target;
    let plan = plan_levels(&graph, opts)?;
    Ok((graph, plan))
}

fn test_mode() -> bool {
    std::env::var(TEST_MODE_ENV).is_ok_and(|v| v == "1")
}

/// Refresh mode for a plan; refresh points need the test-mode switch.
fn refresh_mode(plan: &LevelPlan) -> Result<RefreshMode, CliError> {
    if plan.refresh_points.is_empty() {
        return Ok(RefreshMode::Disabled);
    }
    if !test_mode() {
        return Err(CliError::usage(format!(
            "plan refreshes before layers {:?}; set {TEST_MODE_ENV}=1 to allow the insecure debug refresh",
            plan.refresh_points
        )));
    }
    eprintln!("warning: debug refresh decrypts with the secret key; this run is insecure");
    Ok(RefreshMode::InsecureDebug)
}

fn keygen(a: KeygenArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let ctx = CkksContext::new(params.clone())?;
    let mut rots = a.rots.clone();
    let mut max_level = a.max_level;
    if let Some(w) = &a.weights {
        let model = load_weights(w, &params)?;
        let graph = build_graph(&model, params.slots(), a.conv_mode.into())?;
        let max = a.max_level.unwrap_or(params.max_level());
        let plan = plan_levels(&graph, default_plan_options(&graph, max))?;
        rots.extend(required_rotations(&graph, &plan, &params)?);
        // keys above the input level are never used and dominate the key size
        if plan.refresh_points.is_empty() {
            max_level.get_or_insert(plan.start_level);
        }
    }
    if a.weights.is_none() {
        // explicit steps alone can force long key chains; the ±2^k basis bounds any rotation to log2(slots) hops
        rots.extend(KeyGenOptions::power_of_two_rotations(ctx.slots()));
    }
    let opts = KeyGenOptions { rotations: rots, max_level };
    let keys = ctx.keygen(&opts, &mut ChaCha20Rng::seed_from_u64(a.seed))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(format!("{}: {e}", a.out_dir.display())))?;
    write(&a.out_dir.join(SECRET_KEY_FILE), &ctx.serialize_secret_key(&keys.sk))?;
    write(&a.out_dir.join(PUBLIC_KEYS_FILE), &ctx.serialize_public_keys(&keys.public))?;
    emit!(
        "{}",
        serde_json::json!({
            "params": params.name,
            "rotation_keys": keys.public.rotation_steps(),
            "max_level": opts.max_level.unwrap_or(params.max_level()),
            "insecure": params.is_insecure(),
        })
    );
    Ok(())
}

/// Metadata stored next to ciphertexts.
#[derive(Serialize, Deserialize, Debug, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CtMeta {
    Input { weights_digest: String, conv_mode: ConvMode, level: usize },
    Logits { slots: Vec<usize>, insecure: bool },
}

fn read_cts(ctx: &CkksContext, path: &Path) -> Result<(Vec<Ciphertext>, CtMeta), CliError> {
    let (cts, meta) = ctx.deserialize_ciphertexts(&read(path)?)?;
    let meta = serde_json::from_slice(&meta).map_err(|e| CliError::io(format!("{}: bad metadata: {e}", path.display())))?;
    Ok((cts, meta))
}

fn write_cts(ctx: &CkksContext, path: &Path, cts: &[Ciphertext], meta: &CtMeta) -> Result<(), CliError> {
    write(path, &ctx.serialize_ciphertexts(cts, &serde_json::to_vec(meta).expect("metadata serializes")))
}

fn read_input(path: &Path) -> Result<Vec<f64>, CliError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Input {
        Values(Vec<f64>),
        Object { input: Vec<f64> },
    }
    match serde_json::from_slice(&read(path)?).map_err(|e| CliError::io(format!("{}: {e}", path.display())))? {
        Input::Values(v) | Input::Object { input: v } => Ok(v),
    }
}

fn encrypt(a: EncryptArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let ctx = CkksContext::new(params.clone())?;
    let model = load_weights(&a.graph.weights, &params)?;
    let (graph, plan) = graph_and_plan(&params, &model, &a.graph)?;
    let values = match (&a.input, a.golden_index) {
        (Some(p), None) => read_input(p)?,
        (None, Some(i)) => model
            .golden
            .as_ref()
            .and_then(|g| g.pairs().get(i))
            .map(|p| p.input.clone())
            .ok_or_else(|| CliError::usage(format!("weights file has no golden pair {i}")))?,
        _ => return Err(CliError::usage("pass --input or --golden-index")),
    };
    let input = Tensor3::from_vec(graph.input_shape, values)?;
    let keys = ctx.deserialize_public_keys(&read(&a.keys.join(PUBLIC_KEYS_FILE))?)?;
    let backend = CkksBackend::new(&ctx, &keys, a.seed);
    let x = encrypt_input(&backend, &graph, &plan, &input)?;
    let meta = CtMeta::Input { weights_digest: model.digest_hex()?, conv_mode: graph.mode, level: plan.start_level };
    write_cts(&ctx, &a.out, &x.cts, &meta)
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let ctx = CkksContext::new(params.clone())?;
    let model = load_weights(&a.graph.weights, &params)?;
    let (graph, plan) = graph_and_plan(&params, &model, &a.graph)?;
    let (cts, meta) = read_cts(&ctx, &a.input)?;
    match meta {
        CtMeta::Input { weights_digest, conv_mode, level } => {
            let digest = model.digest_hex()?;
            if weights_digest != digest {
                return Err(CliError::io(format!("input was packed for weights {weights_digest}, got {digest}")));
            }
            if conv_mode != graph.mode || level != plan.start_level {
                return Err(CliError::usage(format!(
                    "input was packed for {conv_mode:?} at level {level}; this run uses {:?} at level {}",
                    graph.mode, plan.start_level
                )));
            }
        }
        CtMeta::Logits { .. } => return Err(CliError::usage("input holds logits, not an encrypted image")),
    }
    let refresh = refresh_mode(&plan)?;
    let keys = ctx.deserialize_public_keys(&read(&a.keys.join(PUBLIC_KEYS_FILE))?)?;
    let sk;
    let mut backend = CkksBackend::new(&ctx, &keys, 0);
    if refresh == RefreshMode::InsecureDebug {
        sk = ctx.deserialize_secret_key(&read(&a.keys.join(SECRET_KEY_FILE))?)?;
        backend = backend.with_secret_key(&sk, refresh);
    }
    let x = PackedTensor { cts, format: graph.input_format, shape: graph.input_shape };
    let (out, mut report) = execute(&graph, &plan, &backend, "ckks", x)?;
    report.insecure |= params.is_insecure();
    write_cts(&ctx, &a.out, std::slice::from_ref(&out.ct), &CtMeta::Logits { slots: out.slots, insecure: report.insecure })?;
    let json = report.to_json();
    match &a.report {
        Some(p) => write(p, json.as_bytes())?,
        None => emit!("{json}"),
    }
    Ok(())
}

fn decrypt(a: DecryptArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let ctx = CkksContext::new(params.clone())?;
    let (cts, meta) = read_cts(&ctx, &a.input)?;
    let CtMeta::Logits { slots, insecure } = meta else {
        return Err(CliError::usage("input is not a logits ciphertext"));
    };
    let ct = cts.into_iter().next().ok_or_else(|| CliError::io("empty ciphertext container"))?;
    let keys = ctx.deserialize_public_keys(&read(&a.keys.join(PUBLIC_KEYS_FILE))?)?;
    let sk = ctx.deserialize_secret_key(&read(&a.keys.join(SECRET_KEY_FILE))?)?;
    let backend = CkksBackend::new(&ctx, &keys, 0).with_secret_key(&sk, RefreshMode::Disabled);
    let logits = decrypt_output(&backend, &SlotVector { ct, slots })?;
    let json = serde_json::json!({ "logits": logits, "argmax": argmax(&logits), "insecure": insecure || params.is_insecure() });
    emit!("{json}");
    if let Some(p) = &a.out {
        write(p, serde_json::to_string_pretty(&json).expect("json").as_bytes())?;
    }
    Ok(())
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

/// Median and interquartile range in milliseconds.
#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub reps: usize,
}

impl Timing {
    pub fn from_samples(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (ms.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            ms[lo] + (ms[hi] - ms[lo]) * (pos - lo as f64)
        };
        Self { median_ms: q(0.5), iqr_ms: q(0.75) - q(0.25), reps: ms.len() }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub version: u32,
    pub params: String,
    pub level: usize,
    pub threads: usize,
    pub insecure: bool,
    pub note: String,
    pub ops: std::collections::BTreeMap<String, Timing>,
}

/// Times `hadd`, `pmult`, `hmult` (with relinearization), `rescale`, `rotate` and `encode`.
pub fn bench_ops_report(params: &CkksParams, reps: usize, level: Option<usize>, seed: u64) -> Result<BenchReport, CliError> {
    if reps == 0 {
        return Err(CliError::usage("--reps must be positive"));
    }
    let ctx = CkksContext::new(params.clone())?;
    let level = level.unwrap_or(params.max_level());
    ctx.check_level(level)?;
    if level == 0 {
        return Err(CliError::usage("rescale needs a level above 0"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keys = ctx.keygen(&KeyGenOptions { rotations: vec![1], max_level: Some(level) }, &mut rng)?;
    let v: Vec<f64> = (0..ctx.slots()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = params.scale();
    let pt = ctx.encode(&v, scale, level)?;
    let x = ctx.encrypt(&pt, &keys.public, &mut rng)?;
    let y = ctx.encrypt(&pt, &keys.public, &mut rng)?;
    let prod = ctx.pmult(&x, &pt)?;
    let time = |f: &mut dyn FnMut() -> Result<(), CkksError>| -> Result<Timing, CliError> {
        let mut ms = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            f()?;
            ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok(Timing::from_samples(ms))
    };
    let mut ops = std::collections::BTreeMap::new();
    ops.insert("hadd".to_string(), time(&mut || ctx.hadd(&x, &y).map(drop))?);
    ops.insert("pmult".to_string(), time(&mut || ctx.pmult(&x, &pt).map(drop))?);
    ops.insert("hmult".to_string(), time(&mut || ctx.hmult(&x, &y, &keys.public).map(drop))?);
    ops.insert("rescale".to_string(), time(&mut || ctx.rescale(&prod).map(drop))?);
    ops.insert("rotate".to_string(), time(&mut || ctx.rotate(&x, 1, &keys.public).map(drop))?);
    ops.insert("encode".to_string(), time(&mut || ctx.encode(&v, scale, level).map(drop))?);
    Ok(BenchReport {
        version: BENCH_VERSION,
        params: params.name.clone(),
        level,
        threads: rayon::current_num_threads(),
        insecure: params.is_insecure(),
        note: TIMING_NOTE.into(),
        ops,
    })
}

fn bench_ops(a: BenchArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let report = bench_ops_report(&params, a.reps, a.level, a.seed)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit!("{json}");
    if let Some(p) = &a.out {
        write(p, json.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub version: u32,
    pub topology: String,
    pub conv_mode: ConvMode,
    pub max_level: usize,
    pub start_level: usize,
    pub refresh_target: usize,
    pub total_cost: usize,
    pub refresh_points: Vec<usize>,
    pub layers: Vec<PlanRow>,
    pub insecure: bool,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub index: usize,
    pub kind: String,
    pub level_cost: usize,
    pub entry_level: usize,
    pub live_cts: usize,
    pub refresh_allowed: bool,
}

fn plan(a: PlanArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let model = load_weights(&a.graph.weights, &params)?;
    let (graph, plan) = graph_and_plan(&params, &model, &a.graph)?;
    let report = PlanReport {
        version: 1,
        topology: graph.topology.name(),
        conv_mode: graph.mode,
        max_level: a.graph.max_level.unwrap_or(params.max_level()),
        start_level: plan.start_level,
        refresh_target: plan.refresh_target,
        total_cost: graph.total_cost(),
        refresh_points: plan.refresh_points.clone(),
        layers: graph
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| PlanRow {
                index: i,
                kind: l.node.kind().into(),
                level_cost: l.node.level_cost(),
                entry_level: plan.entry_level[i],
                live_cts: l.live_cts,
                refresh_allowed: graph.refresh_allowed(i),
            })
            .collect(),
        insecure: params.is_insecure(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit!("{json}");
    if let Some(p) = &a.out {
        write(p, json.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub version: u32,
    pub topology: String,
    pub params: String,
    pub inputs: usize,
    pub max_abs_diff: f64,
    pub argmax_agreement: usize,
    /// Largest gap between the packed plaintext pipeline and the dense reference.
    pub reference_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub insecure: bool,
    pub cost: CostReport,
}

/// Encrypts `inputs` seeded images, runs the network and compares with the plaintext pipeline.
pub fn verify_run(
    params: &CkksParams,
    model: &ModelWeights,
    mode: ConvMode,
    inputs: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VerifyReport, CliError> {
    let graph = build_graph(model, params.slots(), mode)?;
    let plan = plan_levels(&graph, default_plan_options(&graph, params.max_level()))?;
    let refresh = refresh_mode(&plan)?;
    let ctx = CkksContext::new(params.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let opts = KeyGenOptions { rotations: required_rotations(&graph, &plan, params)?, max_level: Some(plan.start_level) };
    let keys = ctx.keygen(&opts, &mut rng)?;
    let backend = CkksBackend::new(&ctx, &keys.public, seed).with_secret_key(&keys.sk, refresh).with_plaintext_cache();
    let (mut worst, mut ref_worst, mut agree) = (0.0f64, 0.0f64, 0);
    let mut last = None;
    for _ in 0..inputs.max(1) {
        let shape = graph.input_shape;
        let x = Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let (want, _) = plaintext_forward(&graph, &plan, params, RefreshMode::InsecureDebug, &x)?;
        let dense = reference_forward(model, &x)?;
        let ct = encrypt_input(&backend, &graph, &plan, &x)?;
        let (out, report) = execute(&graph, &plan, &backend, "ckks", ct)?;
        let got = decrypt_output(&backend, &out)?;
        worst = worst.max(max_abs_diff(&got, &want));
        ref_worst = ref_worst.max(max_abs_diff(&want, &dense));
        agree += usize::from(argmax(&got) == argmax(&want));
        last = Some(report);
    }
    let mut cost = last.expect("at least one input");
    cost.insecure |= params.is_insecure();
    Ok(VerifyReport {
        version: 1,
        topology: graph.topology.name(),
        params: params.name.clone(),
        inputs: inputs.max(1),
        max_abs_diff: worst,
        argmax_agreement: agree,
        reference_diff: ref_worst,
        tolerance,
        passed: worst < tolerance,
        insecure: cost.insecure,
        cost,
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let params = load_params(&a.params)?;
    let model = match &a.weights {
        Some(p) => load_weights(p, &params)?,
        None => gen_fixture(Topology::parse(&a.topology)?, a.seed, &params.digest_hex(), 0)?,
    };
    let report = verify_run(&params, &model, a.conv_mode.into(), a.inputs, a.seed, a.tolerance)?;
    emit!(
        "max_abs_diff={:.3e} argmax_agreement={}/{} tolerance={:e}",
        report.max_abs_diff, report.argmax_agreement, report.inputs, report.tolerance
    );
    if let Some(p) = &a.out {
        write(p, serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    }
    if !report.passed {
        return Err(CliError::verify(format!("max_abs_diff {:.3e} exceeds tolerance {:e}", report.max_abs_diff, report.tolerance)));
    }
    Ok(())
}

fn gen_fixture_cmd(a: FixtureArgs) -> Result<(), CliError> {
    let params = load_params(&a.params.params)?;
    let model = gen_fixture(Topology::parse(&a.topology)?, a.seed, &params.digest_hex(), a.golden_count)?;
    write(&a.out, model.to_json().as_bytes())?;
    emit!("{}", serde_json::json!({ "topology": model.topology, "digest": model.digest_hex()?, "golden": a.golden_count }));
    Ok(())
}
