use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use stegochan::crypto::{decrypt, encrypt};
use stegochan::formula::{
    derive_next_key, derive_request_id, derive_session_id, KeyMode, TransactionKey,
};
use stegochan::protocol::{Frame, FrameHeader, FRAME_OVERHEAD_BITS, HEADER_BITS, HEADER_BYTES};
use stegochan::raster::{load_raster, save_raster};
use stegochan::sim::{run_scenario, FaultPlan, KeySource, ScenarioScript, SimConfig};
use stegochan::stego::{self, bits_to_bytes, capacity_chars};
use stegochan::{CipherMode, StegoParams, UsageFraction};

#[derive(Parser)]
#[command(
    name = "stegochan",
    version,
    about = "Hide framed, integrity-checked messages in PNG images using keyed slot selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frame around a payload and embed it in a PNG cover
    Embed {
        /// Cover image (lossless PNG)
        #[arg(long)]
        cover: PathBuf,
        /// Transaction key, exactly 8 hex digits
        #[arg(long)]
        key: TransactionKey,
        /// Read the payload from a file
        #[arg(long, conflicts_with = "text")]
        payload: Option<PathBuf>,
        /// Use a literal string payload
        #[arg(long)]
        text: Option<String>,
        /// Output stego PNG path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        bit_planes: u8,
        #[arg(long, default_value_t = UsageFraction::default())]
        usage: UsageFraction,
        /// Payload cipher: stream | inversion
        #[arg(long, default_value_t = CipherMode::default())]
        mode: CipherMode,
    },
    /// Recover and decrypt a payload from a stego PNG
    Extract {
        #[arg(long)]
        stego: PathBuf,
        #[arg(long)]
        key: TransactionKey,
        /// Write the payload here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read exactly this many frame bits instead of the two-phase
        /// header-then-body read
        #[arg(long)]
        frame_bits: Option<usize>,
        #[arg(long, default_value_t = 3)]
        bit_planes: u8,
        #[arg(long, default_value_t = UsageFraction::default())]
        usage: UsageFraction,
        #[arg(long, default_value_t = CipherMode::default())]
        mode: CipherMode,
    },
    /// Report slot counts and character capacity
    Inspect {
        #[arg(long, required_unless_present = "used_slots")]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = UsageFraction::default())]
        usage: UsageFraction,
        #[arg(long, default_value_t = FRAME_OVERHEAD_BITS)]
        header_bits: usize,
        /// Override the used-slot count instead of deriving it from the image
        #[arg(long)]
        used_slots: Option<usize>,
    },
    /// Compare a cover and a stego image byte by byte
    Diff {
        #[arg(long)]
        cover: PathBuf,
        #[arg(long)]
        stego: PathBuf,
    },
    /// Run a scripted client/server exchange with optional fault injection
    Simulate {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        faults: Option<PathBuf>,
        /// Draw per-message keys from OS randomness instead of
        /// deterministic chaining
        #[arg(long)]
        random_keys: bool,
    },
}

/// One-shot frame for batch embed/extract: session and request ids are
/// derived from the key itself, the next key chains deterministically.
fn standalone_frame(key: TransactionKey, payload: &[u8], mode: CipherMode) -> Result<Frame> {
    let next_key = derive_next_key(key, KeyMode::Deterministic, None)?;
    Ok(Frame::assemble(
        derive_session_id(key),
        derive_request_id(key),
        next_key,
        encrypt(payload, key, mode),
    )?)
}

fn cmd_embed(
    cover: PathBuf,
    key: TransactionKey,
    payload: Option<PathBuf>,
    text: Option<String>,
    out: PathBuf,
    params: StegoParams,
    mode: CipherMode,
) -> Result<()> {
    let cover = load_raster(&cover)?;
    let payload = match (payload, text) {
        (Some(path), None) => {
            fs::read(&path).with_context(|| format!("reading payload {}", path.display()))?
        }
        (None, Some(text)) => text.into_bytes(),
        _ => bail!("provide exactly one of --payload or --text"),
    };
    let frame = standalone_frame(key, &payload, mode)?;
    let bits = frame.to_bits();
    let stego = stego::embed(&cover, key, &bits, &params)?;
    save_raster(&stego, &out)?;
    println!("total slots: {}", cover.total_slots());
    println!("frame bits: {}", bits.len());
    println!("data slots: {}", bits.len());
    println!("decoy slots: {}", bits.len());
    println!("wrote {}", out.display());
    Ok(())
}

/// Session and request ids must match what the extraction key derives;
/// checked before the payload is trusted, in the receiver's order.
fn check_ids(header: &FrameHeader, key: TransactionKey) -> Result<()> {
    let expected_session = derive_session_id(key);
    if header.session_id != expected_session {
        bail!(
            "session id mismatch: frame carries {:08X}, key derives {expected_session:08X}",
            header.session_id
        );
    }
    let expected_request = derive_request_id(key);
    if header.request_id != expected_request {
        bail!(
            "request id mismatch: frame carries {:08X}, key derives {expected_request:08X}",
            header.request_id
        );
    }
    Ok(())
}

fn cmd_extract(
    stego: PathBuf,
    key: TransactionKey,
    out: Option<PathBuf>,
    frame_bits: Option<usize>,
    params: StegoParams,
    mode: CipherMode,
) -> Result<()> {
    let stego = load_raster(&stego)?;
    let frame = match frame_bits {
        Some(count) => {
            let frame = Frame::parse(&bits_to_bytes(&stego::extract(&stego, key, count, &params)?))?;
            check_ids(&frame.header, key)?;
            frame
        }
        None => {
            // Two-phase read: the header names the payload length, then the
            // full frame is extracted along the same prefix-stable walk.
            // Identifier checks run before the body read so a wrong key is
            // reported as a session mismatch, not a capacity failure.
            let header_bits = stego::extract(&stego, key, HEADER_BITS, &params)?;
            let header_bytes: [u8; HEADER_BYTES] =
                bits_to_bytes(&header_bits).try_into().expect("14 bytes");
            let header = FrameHeader::from_bytes(&header_bytes);
            check_ids(&header, key)?;
            let total = FRAME_OVERHEAD_BITS + 8 * usize::from(header.payload_len);
            Frame::parse(&bits_to_bytes(&stego::extract(&stego, key, total, &params)?))?
        }
    };
    if !frame.verify() {
        bail!("integrity check failed: stored check 0x{:08X} does not match the frame", frame.check);
    }
    let payload = decrypt(&frame.ciphertext, key, mode);
    match out {
        Some(path) => {
            fs::write(&path, &payload)?;
            println!("extracted {} bytes to {}", payload.len(), path.display());
        }
        None => {
            std::io::stdout().write_all(&payload)?;
        }
    }
    Ok(())
}

fn cmd_inspect(
    image: Option<PathBuf>,
    usage: UsageFraction,
    header_bits: usize,
    used_slots: Option<usize>,
) -> Result<()> {
    let total = image.map(load_raster).transpose()?.map(|r| r.total_slots());
    let used = match (used_slots, total) {
        (Some(count), _) => count,
        (None, Some(total)) => usage.used_slots(total),
        (None, None) => bail!("provide --image or --used-slots"),
    };
    if let Some(total) = total {
        println!("total slots: {total}");
    }
    println!("used slots: {used}");
    println!("header bits: {header_bits}");
    println!("capacity chars: {}", capacity_chars(used, header_bits)?);
    Ok(())
}

fn cmd_diff(cover: PathBuf, stego: PathBuf) -> Result<()> {
    let a = load_raster(&cover)?;
    let b = load_raster(&stego)?;
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        bail!(
            "images differ in shape: {}x{}x{} vs {}x{}x{}",
            a.width(), a.height(), a.channels(),
            b.width(), b.height(), b.channels()
        );
    }
    let mut differing = 0usize;
    let mut histogram = [0usize; 8];
    for (&x, &y) in a.bytes().iter().zip(b.bytes()) {
        let delta = x ^ y;
        if delta != 0 {
            differing += 1;
            for (bit, count) in histogram.iter_mut().enumerate() {
                if (delta >> bit) & 1 == 1 {
                    *count += 1;
                }
            }
        }
    }
    println!("differing bytes: {differing}");
    for (bit, count) in histogram.iter().enumerate() {
        println!("bit {bit}: {count}");
    }
    Ok(())
}

fn cmd_simulate(script: PathBuf, faults: Option<PathBuf>, random_keys: bool) -> Result<()> {
    let script_text =
        fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
    let script = ScenarioScript::parse(&script_text)?;
    let plan = match faults {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            FaultPlan::parse(&text)?
        }
        None => FaultPlan::default(),
    };
    let config = SimConfig {
        key_source: if random_keys {
            KeySource::Os
        } else {
            KeySource::Deterministic
        },
        ..SimConfig::default()
    };
    let report = run_scenario(&script, &plan, &config)?;
    print!("{}", report.render());
    if report.mismatches > 0 {
        bail!("{} unexpected verdicts", report.mismatches);
    }
    Ok(())
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Embed {
            cover,
            key,
            payload,
            text,
            out,
            bit_planes,
            usage,
            mode,
        } => cmd_embed(
            cover,
            key,
            payload,
            text,
            out,
            StegoParams { usage, bit_planes },
            mode,
        ),
        Command::Extract {
            stego,
            key,
            out,
            frame_bits,
            bit_planes,
            usage,
            mode,
        } => cmd_extract(
            stego,
            key,
            out,
            frame_bits,
            StegoParams { usage, bit_planes },
            mode,
        ),
        Command::Inspect {
            image,
            usage,
            header_bits,
            used_slots,
        } => cmd_inspect(image, usage, header_bits, used_slots),
        Command::Diff { cover, stego } => cmd_diff(cover, stego),
        Command::Simulate {
            script,
            faults,
            random_keys,
        } => cmd_simulate(script, faults, random_keys),
    }
}
