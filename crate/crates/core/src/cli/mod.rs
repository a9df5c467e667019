//! Operator commands behind the `coma` binary.
//!
//! Exit codes: 0 ok, 1 output i/o, 2 configuration, 3 protocol or
//! authentication failure, 4 network, 5 timeout.

use std::ffi::OsString;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::attacks::{self, affine_recover, AffineOutcome};
use crate::bits::{self, Bits};
use crate::costmodel::{self, CostParams};
use crate::protocol::{
    self, activate_over, dal_entry, parse_transcript, provision_pair, transcript_dal, transcript_jsonl, Link,
    ProtocolConfig, ProtocolError, TranscriptEntry,
};
use crate::puf::{self, ArbiterPuf, PseudoPuf, DEFAULT_NOISE};
use crate::remote::{self, AuthServer, DeviceSpec, Registry, RemoteError, ServerOptions};
use crate::rng::{apt_cutoff, rct_cutoff, EntropySourceModel, HealthEvent, SourceFault, Trng, APT_WINDOW};
use crate::switchnet::{csn_forward, rcsn_backward, Trn};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("network: {0}")]
    Network(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Network(_) => 4,
            CliError::Timeout(_) => 5,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(m) => CliError::Config(m),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<RemoteError> for CliError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Network(m) => CliError::Network(m),
            RemoteError::Timeout(m) => CliError::Timeout(m),
            RemoteError::Protocol(p) => p.into(),
            RemoteError::Registry(m) => CliError::Config(format!("registry: {m}")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coma", version, about = "Chip activation, secure links, attacks and cost models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enroll, activate and exchange one message in-process; prints a JSONL transcript.
    Activate(ActivateArgs),
    /// SAT key extraction sweep, or affine recovery with `--kind affine`.
    Attack(AttackArgs),
    /// Cycle and energy sweep over message sizes.
    Cost(CostArgs),
    /// Entropy-source and PUF health checks.
    Health(HealthArgs),
    /// Run the authentication server.
    Serve(ServeArgs),
    /// Activate one device against a running server.
    Device(DeviceArgs),
    /// Fabricate and enroll a simulated device into a registry.
    Enroll(EnrollArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Built-in profile (coma1 or coma2).
    #[arg(long, default_value = "coma2")]
    pub profile: String,
    /// TOML file with `[[profile]]` tables; `--profile` picks one by name.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
    /// CSN width in bits.
    #[arg(long)]
    pub n: Option<u64>,
    /// TRN update period in blocks.
    #[arg(long)]
    pub u: Option<u64>,
    /// Use the blocking Omega network.
    #[arg(long)]
    pub blocking: bool,
}

impl ProfileArgs {
    fn cost(&self) -> Result<CostParams, CliError> {
        let mut p = match &self.profile_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                costmodel::load_profiles(&text)
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .into_iter()
                    .find(|p| p.profile == self.profile)
                    .ok_or_else(|| CliError::Config(format!("profile {:?} not in file", self.profile)))?
            }
            None => CostParams::builtin(&self.profile).map_err(|e| CliError::Config(e.to_string()))?,
        };
        if let Some(n) = self.n {
            p = p.with_n(n);
        }
        if let Some(u) = self.u {
            p = p.with_u(u);
        }
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    fn config(&self) -> Result<ProtocolConfig, CliError> {
        let mut cfg = ProtocolConfig::for_profile(self.cost()?)?;
        cfg.blocking = self.blocking;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dcc,
    Lcc,
}

#[derive(Debug, Args)]
pub struct ActivateArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, value_enum, default_value = "dcc")]
    pub mode: Mode,
    /// Size of the message sent after activation.
    #[arg(long, default_value_t = 256)]
    pub bytes: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Flip one bit of frame N in transit: `frame:N`, counting from 0.
    #[arg(long)]
    pub tamper: Option<String>,
    /// Transcript whose DAL is replayed under a fresh activation.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// CSN sizes for the SAT sweep.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub sizes: Vec<usize>,
    /// blk, nonblk, or affine.
    #[arg(long, alias = "kind", value_delimiter = ',', default_value = "blk,nonblk")]
    pub kinds: Vec<String>,
    /// Affine attack: CSN width.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Affine attack: observed blocks.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Affine attack: rotate the TRN by one bit per block.
    #[arg(long)]
    pub shift: bool,
    /// Affine attack: network kind (blk or nonblk).
    #[arg(long, default_value = "nonblk")]
    pub network: String,
    /// Per-attack timeout in seconds.
    #[arg(long, default_value_t = 600)]
    pub timeout: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report zero seconds so output is byte-identical across runs.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Built-in profiles to sweep.
    #[arg(long, value_delimiter = ',', default_value = "coma1,coma2")]
    pub profiles: Vec<String>,
    /// TOML profile file; replaces the built-ins.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub min: u64,
    #[arg(long, default_value_t = 65536)]
    pub max: u64,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub u: Option<u64>,
    /// Print per-profile anchors and the crossover instead of the sweep.
    #[arg(long)]
    pub summary: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HealthArgs {
    /// Entropy-source fault: none, stuck0, stuck1, or bias:P.
    #[arg(long, default_value = "none")]
    pub inject: String,
    /// PUF oracle under test: genuine, pseudo, or constant.
    #[arg(long, default_value = "genuine")]
    pub puf: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub bits: u64,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = remote::PORT_ENV, default_value_t = remote::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = remote::REGISTRY_ENV, default_value = "registry.json")]
    pub registry: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Exit after this many sessions.
    #[arg(long)]
    pub max_sessions: Option<usize>,
    /// Session log (JSONL); stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = remote::PORT_ENV, default_value_t = remote::DEFAULT_PORT)]
    pub port: u16,
    /// Device description written by `coma enroll`.
    #[arg(long)]
    pub spec: PathBuf,
    /// Claim a different device id than the spec's.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub timeout: u64,
    /// Transcript (JSONL) of the session.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long, env = remote::REGISTRY_ENV, default_value = "registry.json")]
    pub registry: PathBuf,
    #[arg(long)]
    pub id: String,
    /// Selects the simulated device (PUF and circuit).
    #[arg(long)]
    pub seed: u64,
    /// Where to write the device spec (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Activate(a) => cmd_activate(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Health(a) => cmd_health(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Device(a) => cmd_device(a),
        Command::Enroll(a) => cmd_enroll(a),
    }
}

/// Output paths must point into an existing directory.
fn check_out(path: &Option<PathBuf>) -> Result<(), CliError> {
    if let Some(p) = path {
        check_parent(p)?;
    }
    Ok(())
}

fn check_parent(p: &Path) -> Result<(), CliError> {
    let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CliError::Config(format!("no directory for {}", p.display())));
    }
    Ok(())
}

fn emit(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

const REPLAY_STREAM: u64 = 0x7265_706c_6179;

fn parse_tamper(spec: &str) -> Result<usize, CliError> {
    spec.strip_prefix("frame:")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| CliError::Config(format!("--tamper expects frame:N, got {spec:?}")))
}

fn cmd_activate(a: ActivateArgs) -> Result<(), CliError> {
    let cfg = a.profile.config()?;
    if a.mode == Mode::Lcc {
        cfg.validate_lcc()?;
    }
    let tamper = a.tamper.as_deref().map(parse_tamper).transpose()?;
    let replay = match &a.replay {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let entries = parse_transcript(&text).map_err(|e| CliError::Config(e.to_string()))?;
            let dal = transcript_dal(&entries, cfg.cost.n as usize)
                .ok_or_else(|| CliError::Config("transcript has no DAL record".into()))?;
            Some(dal)
        }
        None => None,
    };
    check_out(&a.out)?;

    let (mut t, mut u) = provision_pair(&cfg, a.seed)?;
    if replay.is_some() {
        // a later session: the trusted TRNG has moved on
        let source = EntropySourceModel::unbiased(a.seed ^ REPLAY_STREAM);
        *t.trng_mut() = Trng::new(source, cfg.min_entropy);
    }
    let mut link = tamper.map(Link::with_tamper).unwrap_or_default();
    let expected = costmodel::activation_cycles(&cfg.cost, u.circuit().key_bits() as u64);
    let outcome = activate_over(&mut t, &mut u, &mut link).and_then(|r| {
        if let Some(dal) = &replay {
            let trn = u.current_trn().cloned().ok_or(ProtocolError::NotActivated)?;
            u.unlock_from_dal(&trn, dal)?;
        }
        Ok(r)
    });
    let mut entries = link.transcript;
    let result = match outcome {
        Ok(r) => {
            entries.push(dal_entry(u.current_trn().expect("activated"), u.captured_dal()));
            entries.push(exercise_channel(&mut t, &mut u, a.mode, a.bytes)?);
            entries.push(TranscriptEntry::Result {
                success: true,
                cycles_spent: r.cycles_spent,
                expected_cycles: expected,
                error: None,
            });
            Ok(())
        }
        Err(e) => {
            entries.push(TranscriptEntry::Result {
                success: false,
                cycles_spent: 0,
                expected_cycles: expected,
                error: Some(e.to_string()),
            });
            Err(CliError::from(e))
        }
    };
    emit(&a.out, &transcript_jsonl(&entries))?;
    result
}

/// Sends one message of `bytes` in the chosen mode starting at a fresh TRN
/// epoch and reports the sender's cycles against the closed form.
fn exercise_channel(
    t: &mut protocol::TrustedChip,
    u: &mut protocol::UntrustedChip,
    mode: Mode,
    bytes: usize,
) -> Result<TranscriptEntry, CliError> {
    let msg: Vec<u8> = (0..bytes).map(|i| i as u8).collect();
    let p = t.config().cost.clone();
    let (frames, cycles, expected) = match mode {
        Mode::Dcc => {
            u.dcc_recv(&t.refresh_trn()?)?;
            let before = t.meter().total();
            let frames = t.dcc_send(&msg)?;
            (frames, t.meter().total() - before, costmodel::dcc_message_cycles(&p, bytes as u64))
        }
        Mode::Lcc => {
            u.lcc_accept(&t.lcc_init()?)?;
            let before = t.meter().total();
            let frames = t.lcc_send(&msg)?;
            (frames, t.meter().total() - before, costmodel::lcc_message_cycles(&p, bytes as u64))
        }
    };
    let mut got = None;
    for f in &frames {
        got = match mode {
            Mode::Dcc => u.dcc_recv(f)?,
            Mode::Lcc => u.lcc_recv(f)?,
        };
    }
    if got.as_deref() != Some(&msg[..]) {
        return Err(CliError::Protocol("channel round-trip mismatch".into()));
    }
    let mode = match mode {
        Mode::Dcc => "dcc",
        Mode::Lcc => "lcc",
    };
    Ok(TranscriptEntry::Channel { mode: mode.into(), bytes: bytes as u64, cycles, expected_cycles: expected })
}

#[derive(Debug, Serialize)]
struct AffineRow {
    n: usize,
    network: String,
    blocks: usize,
    shift: bool,
    outcome: String,
    rank: Option<usize>,
    verified: Option<usize>,
}

fn cmd_attack(a: AttackArgs) -> Result<(), CliError> {
    let affine = a.kinds.iter().any(|k| k == "affine");
    for k in &a.kinds {
        if !matches!(k.as_str(), "blk" | "nonblk" | "affine") {
            return Err(CliError::Config(format!("unknown kind {k:?}")));
        }
    }
    if affine && a.kinds.len() > 1 {
        return Err(CliError::Config("affine cannot be mixed with SAT kinds".into()));
    }
    check_out(&a.out)?;
    if affine {
        if !(4..=attacks::MAX_AFFINE_N).contains(&a.n) || !a.n.is_power_of_two() {
            return Err(CliError::Config(format!("affine n = {} must be a power of two in 4..=64", a.n)));
        }
        if !matches!(a.network.as_str(), "blk" | "nonblk") {
            return Err(CliError::Config(format!("unknown network {:?}", a.network)));
        }
        let row = affine_row(a.n, &a.network, a.blocks.unwrap_or(a.n + 1), a.shift, a.seed)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
        return emit(&a.out, &String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8"));
    }
    for &n in &a.sizes {
        if !(4..=64).contains(&n) || !n.is_power_of_two() {
            return Err(CliError::Config(format!("size {n} must be a power of two in 4..=64")));
        }
    }
    let kinds: Vec<&str> = a.kinds.iter().map(String::as_str).collect();
    let mut rows = attacks::sweep(&a.sizes, &kinds, a.seed, Duration::from_secs(a.timeout))
        .map_err(|e| CliError::Config(e.to_string()))?;
    if a.no_timing {
        rows.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    emit(&a.out, &attacks::sweep_csv(&rows))
}

/// Observes `blocks` chosen-plaintext pairs (0, unit vectors, then random)
/// and tries to recover the CSN as an affine map.
fn affine_row(n: usize, network: &str, blocks: usize, shift: bool, seed: u64) -> Result<AffineRow, CliError> {
    let topo = attacks::topology_for(network, n).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let trn = Trn::random(&topo, &mut rng);
    let pairs: Vec<(Bits, Bits)> = (0..blocks)
        .map(|i| {
            let x = match i {
                0 => bits::zeros(n),
                i if i <= n => bits::from_u64(1 << (i - 1), n),
                _ => bits::random(&mut rng, n),
            };
            let key = if shift { trn.shifted(i) } else { trn.clone() };
            let y = csn_forward(&topo, &key, &x).expect("sized input");
            (x, y)
        })
        .collect();
    let (outcome, rank, verified) = match affine_recover(n, &pairs) {
        AffineOutcome::Recovered(m) => {
            let ok = (0..1000)
                .filter(|_| {
                    let x = bits::random(&mut rng, n);
                    let y = csn_forward(&topo, &trn, &x).expect("sized input");
                    m.invert(&y).as_ref() == Some(&x) && rcsn_backward(&topo, &trn, &y).expect("sized") == x
                })
                .count();
            ("recovered", None, Some(ok))
        }
        AffineOutcome::Underdetermined { rank } => ("underdetermined", Some(rank), None),
        AffineOutcome::Inconsistent => ("inconsistent", None, None),
    };
    Ok(AffineRow { n, network: network.into(), blocks, shift, outcome: outcome.into(), rank, verified })
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    profile: String,
    metric: String,
    value: String,
}

fn cmd_cost(a: CostArgs) -> Result<(), CliError> {
    let mut profiles = match &a.profile_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            costmodel::load_profiles(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => a
            .profiles
            .iter()
            .map(|p| CostParams::builtin(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    for p in &mut profiles {
        if let Some(n) = a.n {
            *p = p.clone().with_n(n);
        }
        if let Some(u) = a.u {
            *p = p.clone().with_u(u);
        }
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if a.min == 0 || a.min > a.max {
        return Err(CliError::Config(format!("bad size range {}..{}", a.min, a.max)));
    }
    check_out(&a.out)?;
    if !a.summary {
        return emit(&a.out, &costmodel::sweep_csv(&costmodel::sweep(&profiles, a.min, a.max)));
    }
    let mut rows = Vec::new();
    let mut push = |profile: &str, metric: &str, value: String| {
        rows.push(SummaryRow { profile: profile.into(), metric: metric.into(), value })
    };
    for p in &profiles {
        let c_byte = costmodel::c_byte_lcc(p).map_err(|e| CliError::Config(e.to_string()))?;
        push(&p.profile, "c_byte_lcc", c_byte.to_string());
        push(&p.profile, "c_prng", costmodel::c_prng(p).to_string());
        push(&p.profile, "lcc_init_cycles", costmodel::lcc_init_cycles(p).to_string());
        push(&p.profile, "activation_cycles", costmodel::activation_cycles(p, 128).to_string());
    }
    if let [x, y, ..] = &profiles[..] {
        if let Some(c) = costmodel::crossover(x, y) {
            let pair = format!("{}/{}", x.profile, y.profile);
            push(&pair, "crossover_bytes", c.computed_bytes.to_string());
            push(&pair, "stated_crossover_bytes", c.stated_bytes.to_string());
            push(&pair, "crossover_discrepancy", c.discrepancy.to_string());
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    emit(&a.out, &String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8"))
}

#[derive(Debug, Serialize)]
struct TrngReport {
    inject: String,
    bits_requested: u64,
    bits_delivered: u64,
    rct_cutoff: usize,
    apt_cutoff: usize,
    apt_windows: u64,
    status: &'static str,
    events: Vec<HealthEvent>,
}

#[derive(Debug, Serialize)]
struct HealthReport {
    trng: TrngReport,
    puf_oracle: String,
    puf: puf::PufHealthReport,
}

fn parse_fault(s: &str) -> Result<SourceFault, CliError> {
    Ok(match s {
        "none" => SourceFault::None,
        "stuck0" => SourceFault::StuckAt0,
        "stuck1" => SourceFault::StuckAt1,
        _ => {
            let p: f64 = s
                .strip_prefix("bias:")
                .and_then(|p| p.parse().ok())
                .filter(|p| (0.0..=1.0).contains(p))
                .ok_or_else(|| CliError::Config(format!("--inject expects none|stuck0|stuck1|bias:P, got {s:?}")))?;
            SourceFault::Bias(p)
        }
    })
}

fn cmd_health(a: HealthArgs) -> Result<(), CliError> {
    let fault = parse_fault(&a.inject)?;
    if !matches!(a.puf.as_str(), "genuine" | "pseudo" | "constant") {
        return Err(CliError::Config(format!("--puf expects genuine|pseudo|constant, got {:?}", a.puf)));
    }
    if a.pairs == 0 {
        return Err(CliError::Config("--pairs must be positive".into()));
    }
    check_out(&a.out)?;

    let mut source = EntropySourceModel::unbiased(a.seed);
    source.set_fault(fault);
    let mut trng = Trng::new(source, 1.0);
    let mut delivered = 0;
    while delivered < a.bits && trng.next_bit().is_ok() {
        delivered += 1;
    }
    let trng_report = TrngReport {
        inject: a.inject.clone(),
        bits_requested: a.bits,
        bits_delivered: delivered,
        rct_cutoff: rct_cutoff(1.0),
        apt_cutoff: apt_cutoff(APT_WINDOW, 1.0),
        apt_windows: trng.monitor().apt_windows(),
        status: if trng.monitor().status().is_ok() { "pass" } else { "alarm" },
        events: trng.monitor().events().to_vec(),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let puf = match a.puf.as_str() {
        "genuine" => {
            let mut dev = ArbiterPuf::new(rng.gen(), DEFAULT_NOISE);
            puf::puf_health_check(|c| dev.eval(c), a.pairs, &mut rng)
        }
        "pseudo" => {
            let fake = PseudoPuf::new(rng.gen());
            puf::puf_health_check(|c| fake.eval(c), a.pairs, &mut rng)
        }
        _ => puf::puf_health_check(|_| true, a.pairs, &mut rng),
    };
    let report = HealthReport { trng: trng_report, puf_oracle: a.puf, puf };
    emit(&a.out, &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"))
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    let cfg = a.profile.config()?;
    check_out(&a.log)?;
    check_parent(&a.registry)?;
    let registry = Registry::open(&a.registry)?;
    let listener =
        TcpListener::bind((a.bind.as_str(), a.port)).map_err(|e| CliError::Network(format!("bind {}:{}: {e}", a.bind, a.port)))?;
    let server = AuthServer::new(registry, ServerOptions::new(cfg, a.seed));
    let sink: Box<dyn Write + Send> = match &a.log {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    server.set_log_sink(sink);
    eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Network(e.to_string()))?);
    match a.max_sessions {
        None => {
            server.serve(listener, &std::sync::atomic::AtomicBool::new(false));
            Ok(())
        }
        Some(max) => {
            let mut workers = Vec::new();
            for stream in listener.incoming().take(max) {
                let stream = stream.map_err(|e| CliError::Network(e.to_string()))?;
                let s = std::sync::Arc::clone(&server);
                workers.push(std::thread::spawn(move || s.handle(stream)));
            }
            for w in workers {
                let _ = w.join();
            }
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct DeviceReport {
    device_id: String,
    success: bool,
    cycles_spent: u64,
    self_check: bool,
}

fn cmd_device(a: DeviceArgs) -> Result<(), CliError> {
    let cfg = a.profile.config()?;
    let text = std::fs::read_to_string(&a.spec).map_err(|e| CliError::Config(format!("{}: {e}", a.spec.display())))?;
    let spec: DeviceSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("device spec: {e}")))?;
    check_out(&a.out)?;
    let mut chip = spec.build(&cfg)?;
    let id = a.id.unwrap_or(spec.device_id);
    let mut link = Link::new();
    let outcome = remote::device_run_recorded(&mut chip, &id, (a.host.as_str(), a.port), Duration::from_secs(a.timeout), &mut link);
    if let Some(path) = &a.out {
        emit(&Some(path.clone()), &transcript_jsonl(&link.transcript))?;
    }
    let r = outcome?;
    let report = DeviceReport {
        device_id: id,
        success: r.success,
        cycles_spent: r.cycles_spent,
        self_check: chip.circuit().self_check(),
    };
    emit(&None, &(serde_json::to_string(&report).expect("serializable") + "\n"))
}

fn cmd_enroll(a: EnrollArgs) -> Result<(), CliError> {
    let cfg = a.profile.config()?;
    if a.id.is_empty() || a.id.len() > 256 {
        return Err(CliError::Config("device id must be 1..=256 bytes".into()));
    }
    check_parent(&a.registry)?;
    check_parent(&a.out)?;
    let mut registry = Registry::open(&a.registry)?;
    if registry.get(&a.id).is_some() {
        return Err(CliError::Config(format!("device {:?} already enrolled", a.id)));
    }
    let spec = remote::enroll_device(&cfg, &mut registry, &a.id, a.seed)?;
    emit(&Some(a.out.clone()), &(serde_json::to_string_pretty(&spec).expect("serializable") + "\n"))
}
