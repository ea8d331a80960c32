//! In-memory client/server exchange with scripted fault injection.
//!
//! A scenario opens a session, authenticates, then plays a list of client
//! sends over a FIFO channel. Faults from a plan act on single deliveries:
//! flip a raster bit, drop, replay the previous message, or substitute a
//! forged frame built from a guessed key. The client re-delivers a pending
//! message after any non-processed outcome, up to a retry limit, which is
//! how retransmission verdicts and injected faults resolve in transcripts.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::crypto::{encrypt, CipherMode};
use crate::error::{Error, Result};
use crate::formula::{
    derive_next_key, derive_request_id, mix64, KeyMode, KeystreamState, TransactionKey,
};
use crate::protocol::{
    open_session, receive_message, send_message, Frame, ReceiverVerdict, SessionState,
    VerdictKind, FRAME_OVERHEAD_BITS,
};
use crate::raster::Raster;
use crate::stego::{self, StegoParams};

/// Deterministic synthetic cover: dimensions plus a seed for the noise
/// fill. Message `n` uses `seed + n` so every send gets a fresh cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverSpec {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub seed: u64,
}

impl Default for CoverSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            channels: 3,
            seed: 1,
        }
    }
}

impl CoverSpec {
    pub fn synthesize(&self) -> Result<Raster> {
        let len = self.width as usize * self.height as usize * usize::from(self.channels);
        let mut stream = KeystreamState::from_seed(self.seed);
        let bytes = (0..len).map(|_| stream.next_word() as u8).collect();
        Raster::new(self.width, self.height, self.channels, bytes)
    }

    fn for_message(&self, ordinal: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(ordinal),
            ..*self
        }
    }

    fn for_attacker(&self, ordinal: u64) -> Self {
        Self {
            seed: mix64(self.seed ^ ordinal),
            ..*self
        }
    }

    pub fn total_slots(&self) -> usize {
        self.width as usize * self.height as usize * usize::from(self.channels)
    }
}

/// Outcome of one delivery attempt as seen in a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Processed,
    RejectSession,
    RejectRequest,
    Retransmit,
    DecodeFailure,
    Dropped,
    GaveUp,
}

impl From<VerdictKind> for Outcome {
    fn from(kind: VerdictKind) -> Self {
        match kind {
            VerdictKind::Processed => Outcome::Processed,
            VerdictKind::RejectSession => Outcome::RejectSession,
            VerdictKind::RejectRequest => Outcome::RejectRequest,
            VerdictKind::Retransmit => Outcome::Retransmit,
            VerdictKind::DecodeFailure => Outcome::DecodeFailure,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Processed => "processed",
            Outcome::RejectSession => "reject-session",
            Outcome::RejectRequest => "reject-request",
            Outcome::Retransmit => "retransmit",
            Outcome::DecodeFailure => "decode-failure",
            Outcome::Dropped => "dropped",
            Outcome::GaveUp => "giveup",
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "processed" => Outcome::Processed,
            "reject-session" => Outcome::RejectSession,
            "reject-request" => Outcome::RejectRequest,
            "retransmit" => Outcome::Retransmit,
            "decode-failure" => Outcome::DecodeFailure,
            "dropped" => Outcome::Dropped,
            "giveup" => Outcome::GaveUp,
            other => {
                return Err(Error::Script(format!("unknown outcome {other:?}")));
            }
        })
    }
}

/// One scripted client send with the outcome sequence it should produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendStep {
    pub plaintext: Vec<u8>,
    pub expect: Vec<Outcome>,
}

/// Parsed scenario script: shared keys, cover configuration, embedding
/// parameters, and the ordered client sends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub default_key: TransactionKey,
    pub auth_key: TransactionKey,
    pub cover: CoverSpec,
    pub params: StegoParams,
    pub mode: CipherMode,
    pub sends: Vec<SendStep>,
}

impl ScenarioScript {
    /// Parses the line-oriented script format. `#` starts a comment.
    ///
    /// ```text
    /// default-key 000000B7
    /// auth-key 00000001
    /// cover 128 128 3
    /// cover-seed 11
    /// usage 1/100
    /// bit-planes 3
    /// mode stream
    /// send "PAY 100" expect processed
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut default_key = None;
        let mut auth_key = None;
        let mut cover = CoverSpec::default();
        let mut params = StegoParams::default();
        let mut mode = CipherMode::default();
        let mut sends = Vec::new();

        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Script(format!("line {}: {what}: {line}", number + 1));
            let (directive, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match directive {
                "default-key" => default_key = Some(TransactionKey::from_hex(rest)?),
                "auth-key" => auth_key = Some(TransactionKey::from_hex(rest)?),
                "cover" => {
                    let dims: Vec<&str> = rest.split_whitespace().collect();
                    if dims.len() != 3 {
                        return Err(bad("cover takes <width> <height> <channels>"));
                    }
                    cover.width = dims[0].parse().map_err(|_| bad("bad width"))?;
                    cover.height = dims[1].parse().map_err(|_| bad("bad height"))?;
                    cover.channels = dims[2].parse().map_err(|_| bad("bad channels"))?;
                }
                "cover-seed" => cover.seed = rest.parse().map_err(|_| bad("bad seed"))?,
                "usage" => params.usage = rest.parse()?,
                "bit-planes" => {
                    params.bit_planes = rest.parse().map_err(|_| bad("bad bit-planes"))?
                }
                "mode" => mode = rest.parse()?,
                "send" => {
                    let (payload, tail) = take_payload(rest)
                        .ok_or_else(|| bad("send needs a payload token or quoted string"))?;
                    let expect = match tail {
                        "" => vec![Outcome::Processed],
                        tail => {
                            let list = tail
                                .strip_prefix("expect")
                                .ok_or_else(|| bad("trailing text is not an expect clause"))?
                                .trim();
                            list.split(',')
                                .map(|token| token.trim().parse())
                                .collect::<Result<Vec<Outcome>>>()?
                        }
                    };
                    sends.push(SendStep {
                        plaintext: payload.into_bytes(),
                        expect,
                    });
                }
                _ => return Err(bad("unknown directive")),
            }
        }

        Ok(Self {
            default_key: default_key
                .ok_or_else(|| Error::Script("script is missing default-key".into()))?,
            auth_key: auth_key.ok_or_else(|| Error::Script("script is missing auth-key".into()))?,
            cover,
            params,
            mode,
            sends,
        })
    }
}

/// Splits a payload token (quoted or bare) off the front of a line rest.
fn take_payload(rest: &str) -> Option<(String, &str)> {
    if let Some(stripped) = rest.strip_prefix('"') {
        let close = stripped.find('"')?;
        Some((stripped[..close].to_string(), stripped[close + 1..].trim()))
    } else if rest.is_empty() {
        None
    } else {
        let (token, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        Some((token.to_string(), tail.trim()))
    }
}

/// Single injected fault. Each fault acts on exactly one delivery of its
/// target ordinal, in plan order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultKind {
    /// XOR one bit of one raster byte in transit.
    FlipBit { slot: usize, bit: u8 },
    /// Deliver a copy of the previous message instead.
    ReplayPrevious,
    /// The delivery never arrives.
    Drop,
    /// Deliver a frame built from a guessed key instead.
    Forge {
        key: TransactionKey,
        plaintext: Vec<u8>,
    },
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::FlipBit { slot, bit } => write!(f, "flip-bit({slot},{bit})"),
            FaultKind::ReplayPrevious => f.write_str("replay-previous"),
            FaultKind::Drop => f.write_str("drop"),
            FaultKind::Forge { key, .. } => write!(f, "forge({key})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultAction {
    /// 1-based message ordinal the fault acts on.
    pub target: u64,
    pub kind: FaultKind,
}

/// Ordered fault plan for a scenario run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub actions: Vec<FaultAction>,
}

impl FaultPlan {
    /// Parses the line-oriented fault format:
    ///
    /// ```text
    /// flip-bit 2 9131 1
    /// replay-previous 3
    /// drop 1
    /// forge 2 DEADBEEF "FAKE 999"
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut actions = Vec::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Script(format!("line {}: {what}: {line}", number + 1));
            let fields: Vec<&str> = line.splitn(2, char::is_whitespace).collect();
            let rest = fields.get(1).copied().unwrap_or("").trim();
            let mut args = rest.split_whitespace();
            let mut target_arg = || -> Result<u64> {
                args.next()
                    .ok_or_else(|| bad("missing target ordinal"))?
                    .parse()
                    .map_err(|_| bad("bad target ordinal"))
            };
            let action = match fields[0] {
                "flip-bit" => {
                    let target = target_arg()?;
                    let slot = args
                        .next()
                        .ok_or_else(|| bad("missing slot"))?
                        .parse()
                        .map_err(|_| bad("bad slot"))?;
                    let bit: u8 = args
                        .next()
                        .ok_or_else(|| bad("missing bit"))?
                        .parse()
                        .map_err(|_| bad("bad bit"))?;
                    if bit > 7 {
                        return Err(bad("bit must be 0..=7"));
                    }
                    FaultAction {
                        target,
                        kind: FaultKind::FlipBit { slot, bit },
                    }
                }
                "replay-previous" => FaultAction {
                    target: target_arg()?,
                    kind: FaultKind::ReplayPrevious,
                },
                "drop" => FaultAction {
                    target: target_arg()?,
                    kind: FaultKind::Drop,
                },
                "forge" => {
                    let target = target_arg()?;
                    let key = TransactionKey::from_hex(
                        args.next().ok_or_else(|| bad("missing forged key"))?,
                    )?;
                    let tail = rest
                        .splitn(3, char::is_whitespace)
                        .nth(2)
                        .unwrap_or("")
                        .trim();
                    let (payload, leftover) =
                        take_payload(tail).ok_or_else(|| bad("missing forged payload"))?;
                    if !leftover.is_empty() {
                        return Err(bad("unexpected trailing text"));
                    }
                    FaultAction {
                        target,
                        kind: FaultKind::Forge {
                            key,
                            plaintext: payload.into_bytes(),
                        },
                    }
                }
                _ => return Err(bad("unknown fault kind")),
            };
            if action.target == 0 {
                return Err(bad("target ordinal is 1-based"));
            }
            actions.push(action);
        }
        Ok(Self { actions })
    }
}

/// FIFO client-to-server channel carrying stego rasters, with the fault
/// plan it applies. Each fault is consumed by exactly one delivery.
#[derive(Debug)]
pub struct Channel {
    in_flight: VecDeque<Raster>,
    faults: Vec<FaultAction>,
    consumed: Vec<bool>,
}

impl Channel {
    pub fn new(plan: &FaultPlan) -> Self {
        Self {
            in_flight: VecDeque::new(),
            faults: plan.actions.clone(),
            consumed: vec![false; plan.actions.len()],
        }
    }

    pub fn push(&mut self, stego: Raster) {
        self.in_flight.push_back(stego);
    }

    pub fn front(&self) -> Option<&Raster> {
        self.in_flight.front()
    }

    pub fn pop(&mut self) -> Option<Raster> {
        self.in_flight.pop_front()
    }

    /// Consumes and returns the first unconsumed fault targeting `ordinal`.
    pub fn take_fault(&mut self, ordinal: u64) -> Option<FaultKind> {
        for (i, action) in self.faults.iter().enumerate() {
            if !self.consumed[i] && action.target == ordinal {
                self.consumed[i] = true;
                return Some(action.kind.clone());
            }
        }
        None
    }
}

/// Where per-message key entropy comes from when keys are not chained
/// deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySource {
    Deterministic,
    /// Reproducible entropy from a seeded stream.
    Seeded(u64),
    /// Operating-system randomness; transcripts will differ between runs.
    Os,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub key_source: KeySource,
    /// Delivery attempts per message before the client gives up.
    pub retry_limit: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            key_source: KeySource::Deterministic,
            retry_limit: 5,
        }
    }
}

/// Result of a scenario run: the transcript plus expectation bookkeeping.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub transcript: Vec<String>,
    pub mismatches: usize,
    pub processed: usize,
}

impl ScenarioReport {
    pub fn render(&self) -> String {
        let mut out = self.transcript.join("\n");
        out.push('\n');
        out
    }
}

fn validate(script: &ScenarioScript, faults: &FaultPlan) -> Result<()> {
    let total_slots = script.cover.total_slots();
    let budget = script.params.used_slots(total_slots);
    for (i, step) in script.sends.iter().enumerate() {
        let frame_bits = FRAME_OVERHEAD_BITS + 8 * step.plaintext.len();
        if frame_bits > budget {
            return Err(Error::Script(format!(
                "send {} needs {frame_bits} frame bits but the cover budget is {budget}",
                i + 1
            )));
        }
    }
    for action in &faults.actions {
        if action.target as usize > script.sends.len() {
            return Err(Error::Script(format!(
                "fault targets message {} but the script sends only {}",
                action.target,
                script.sends.len()
            )));
        }
        match &action.kind {
            FaultKind::ReplayPrevious if action.target < 2 => {
                return Err(Error::Script(
                    "replay-previous needs a preceding message, target must be >= 2".into(),
                ));
            }
            FaultKind::FlipBit { slot, .. } if *slot >= total_slots => {
                return Err(Error::Script(format!(
                    "flip-bit slot {slot} is outside the cover's {total_slots} slots"
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn flip_bit(stego: &Raster, slot: usize, bit: u8) -> Result<Raster> {
    let mut bytes = stego.bytes().to_vec();
    bytes[slot] ^= 1 << bit;
    Raster::new(stego.width(), stego.height(), stego.channels(), bytes)
}

/// Builds a frame the way an attacker holding `forged_key` (and the public
/// session id, but not the chained transaction key) would.
pub fn forge_frame(
    session_id: u32,
    forged_key: TransactionKey,
    plaintext: &[u8],
    cover: &Raster,
    params: &StegoParams,
    mode: CipherMode,
) -> Result<Raster> {
    let next_key = derive_next_key(forged_key, KeyMode::Deterministic, None)?;
    let frame = Frame::assemble(
        session_id,
        derive_request_id(forged_key),
        next_key,
        encrypt(plaintext, forged_key, mode),
    )?;
    stego::embed(cover, forged_key, &frame.to_bits(), params)
}

/// Delivers a forged frame to the server. Possession of the current chain
/// key is the security boundary: anything else must be rejected.
pub fn inject_forgery(
    server: &mut SessionState,
    forged_key: TransactionKey,
    plaintext: &[u8],
    cover: &Raster,
    params: &StegoParams,
    mode: CipherMode,
) -> Result<ReceiverVerdict> {
    let stego = forge_frame(server.session_id, forged_key, plaintext, cover, params, mode)?;
    Ok(receive_message(server, &stego, params, mode))
}

/// Runs a scripted exchange, applying faults at their target ordinals, and
/// returns the ordered transcript. Identical inputs produce identical
/// transcript bytes unless `KeySource::Os` is selected.
pub fn run_scenario(
    script: &ScenarioScript,
    faults: &FaultPlan,
    config: &SimConfig,
) -> Result<ScenarioReport> {
    validate(script, faults)?;

    let mut transcript = Vec::new();
    let mut mismatches = 0usize;
    let mut processed = 0usize;

    let (mut client, mut server) = open_session(script.default_key);
    transcript.push(format!("open temp-session={:08X}", client.session_id));
    client.authenticate(script.auth_key)?;
    server.authenticate(script.auth_key)?;
    transcript.push(format!("authenticate session={:08X}", client.session_id));

    let mut channel = Channel::new(faults);
    let mut entropy_stream = match config.key_source {
        KeySource::Seeded(seed) => Some(KeystreamState::from_seed(seed)),
        _ => None,
    };
    let mut sent: Vec<Raster> = Vec::new();

    for (idx, step) in script.sends.iter().enumerate() {
        let ordinal = idx as u64 + 1;
        let cover = script.cover.for_message(ordinal).synthesize()?;
        let (key_mode, entropy) = match config.key_source {
            KeySource::Deterministic => (KeyMode::Deterministic, None),
            KeySource::Seeded(_) => (
                KeyMode::Random,
                Some(entropy_stream.as_mut().expect("seeded stream").next_word() as u32),
            ),
            KeySource::Os => (KeyMode::Random, Some(rand::random::<u32>())),
        };
        let stego = send_message(
            &mut client,
            &step.plaintext,
            &cover,
            &script.params,
            script.mode,
            key_mode,
            entropy,
        )?;
        sent.push(stego.clone());
        channel.push(stego);

        let mut outcomes = Vec::new();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if attempt > config.retry_limit {
                transcript.push(format!(
                    "msg {ordinal} gave up after {} attempts",
                    attempt - 1
                ));
                outcomes.push(Outcome::GaveUp);
                channel.pop();
                break;
            }
            let fault = channel.take_fault(ordinal);
            let fault_label = fault
                .as_ref()
                .map_or_else(|| "none".to_string(), |f| f.to_string());
            let delivered = match &fault {
                None => Some(channel.front().expect("message in flight").clone()),
                Some(FaultKind::Drop) => None,
                Some(FaultKind::FlipBit { slot, bit }) => Some(flip_bit(
                    channel.front().expect("message in flight"),
                    *slot,
                    *bit,
                )?),
                Some(FaultKind::ReplayPrevious) => Some(sent[idx - 1].clone()),
                Some(FaultKind::Forge { key, plaintext }) => {
                    let attacker_cover = script.cover.for_attacker(ordinal).synthesize()?;
                    Some(forge_frame(
                        server.session_id,
                        *key,
                        plaintext,
                        &attacker_cover,
                        &script.params,
                        script.mode,
                    )?)
                }
            };

            let outcome = match delivered {
                None => Outcome::Dropped,
                Some(raster) => {
                    match receive_message(&mut server, &raster, &script.params, script.mode) {
                        ReceiverVerdict::Processed { plaintext } => {
                            let intact = plaintext == step.plaintext;
                            transcript.push(format!(
                                "msg {ordinal} attempt {attempt} fault={fault_label} \
                                 outcome=processed plaintext={}",
                                if intact { "ok" } else { "CORRUPT" }
                            ));
                            if !intact {
                                mismatches += 1;
                            }
                            Outcome::Processed
                        }
                        verdict => Outcome::from(verdict.kind()),
                    }
                }
            };
            if outcome != Outcome::Processed {
                transcript.push(format!(
                    "msg {ordinal} attempt {attempt} fault={fault_label} outcome={outcome}"
                ));
            }
            outcomes.push(outcome);
            if outcome == Outcome::Processed {
                channel.pop();
                processed += 1;
                break;
            }
        }

        let expected = join_outcomes(&step.expect);
        let actual = join_outcomes(&outcomes);
        let ok = outcomes == step.expect;
        if !ok {
            mismatches += 1;
        }
        transcript.push(format!(
            "msg {ordinal} expected={expected} actual={actual} {}",
            if ok { "ok" } else { "MISMATCH" }
        ));
    }

    transcript.push(format!(
        "end messages={} processed={processed} mismatches={mismatches}",
        script.sends.len()
    ));
    Ok(ScenarioReport {
        transcript,
        mismatches,
        processed,
    })
}

fn join_outcomes(outcomes: &[Outcome]) -> String {
    outcomes
        .iter()
        .map(Outcome::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
