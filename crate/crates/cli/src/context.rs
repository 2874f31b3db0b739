//! Shared set-up: resolving the presentation, automaton, growth data, and
//! frames from the command-line configuration, plus small I/O helpers.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shelling_core::ball::estimate_delta;
use shelling_core::error::{Error, Result};
use shelling_core::fsa::{build_shortlex_fsa, ShortlexFsa};
use shelling_core::growth::{analyze_growth, GrowthData};
use shelling_core::presentation::standard;
use shelling_core::shelling::{shell_scan_picks, LocalFrame};
use shelling_core::{GroupOracle, Presentation, Word};

use crate::{Preset, RunArgs};

pub struct Context {
    pub oracle: GroupOracle,
    pub args_fingerprint: String,
}

impl Context {
    pub fn pres(&self) -> &Presentation {
        self.oracle.presentation()
    }
}

pub fn load_context(run: &RunArgs) -> Result<Context> {
    if run.precision_bits < 64 {
        return Err(Error::Config(format!(
            "precision must be at least 64 bits, got {}",
            run.precision_bits
        )));
    }
    let pres = match (&run.preset, &run.presentation) {
        (Some(Preset::Line), _) => standard::line(),
        (Some(Preset::Free2), _) => standard::free2(),
        (Some(Preset::Genus2), _) => standard::genus2(),
        (None, Some(path)) => Presentation::parse(&read_text(path)?)?,
        (None, None) => {
            return Err(Error::Config(
                "no group given; pass --preset or --presentation".into(),
            ))
        }
    };
    let fp = format!("{:016x}", pres.fingerprint());
    let oracle = GroupOracle::new(pres)?;
    Ok(Context {
        oracle,
        args_fingerprint: fp,
    })
}

/// Load the automaton from `--fsa`, or construct it with the configured
/// (or default) lookahead.
pub fn load_fsa(ctx: &Context, run: &RunArgs) -> Result<ShortlexFsa> {
    if let Some(path) = &run.fsa {
        return ShortlexFsa::parse(ctx.pres(), &read_text(path)?);
    }
    let lookahead = run.lookahead.unwrap_or_else(|| default_lookahead(ctx.pres()));
    build_shortlex_fsa(&ctx.oracle, lookahead, run.max_states)
}

/// Free presentations close at lookahead 1; one-relator small-cancellation
/// presentations close at half the relator length minus one (the longest
/// stretch a relator can shorten).
pub fn default_lookahead(pres: &Presentation) -> usize {
    pres.relators()
        .iter()
        .map(|r| (r.len() / 2).saturating_sub(1))
        .max()
        .unwrap_or(1)
        .max(1)
}

pub fn load_growth(fsa: &ShortlexFsa) -> Result<GrowthData> {
    analyze_growth(fsa)
}

/// δ from the command line, or surveyed on a ball of `--delta-radius`.
pub fn resolve_delta(ctx: &Context, run: &RunArgs) -> Result<usize> {
    match run.delta {
        Some(d) => Ok(d),
        None => Ok(estimate_delta(&ctx.oracle, run.delta_radius)?.delta),
    }
}

pub fn build_frame(ctx: &Context, run: &RunArgs, radius: usize) -> Result<LocalFrame> {
    LocalFrame::build(&ctx.oracle, radius, run.budget)
}

/// The basepoint from the command line, or a seeded sample from the shell
/// at distance `radius + 1` (the closest distance a patch admits). Sampled
/// basepoints are drawn from the deterministic dictionary-scan picks of
/// that shell, so a later `verify` with the same `--dict-samples` certifies
/// them; an explicit `--basepoint` may sit outside the scanned set.
pub fn resolve_basepoint(
    ctx: &Context,
    run: &RunArgs,
    fsa: &ShortlexFsa,
    given: &Option<String>,
    radius: usize,
    dict_samples: usize,
) -> Result<Word> {
    if let Some(text) = given {
        let w = ctx.pres().parse_word(text)?;
        return ctx.oracle.canonical_form(&w);
    }
    let shell = fsa.enumerate_level(radius + 1, run.budget)?;
    let picks = shell_scan_picks(&shell, dict_samples);
    if picks.is_empty() {
        return Err(Error::Degenerate(format!(
            "no words at distance {}",
            radius + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    Ok(picks[rng.gen_range(0..picks.len())].clone())
}

pub fn parse_rational(text: &str, what: &str) -> Result<BigRational> {
    BigRational::from_str(text.trim())
        .map_err(|_| Error::Input(format!("{what}: `{text}` is not a rational (p or p/q)")))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

/// Write an artifact to `--out`, or into `--out-dir` under a default name.
/// Without either, the artifact is only reported, not stored.
pub fn write_artifact(
    run: &RunArgs,
    out: &Option<PathBuf>,
    default_name: &str,
    content: &str,
) -> Result<Option<PathBuf>> {
    let path = match (out, &run.out_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(default_name),
        (None, None) => return Ok(None),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::Input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(&path, content)
        .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(Some(path))
}

/// Report header. Everything below this line is deterministic for a fixed
/// configuration and inputs; the timestamp is the one permitted exception.
pub fn print_header(ctx: &Context, command: &str) {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    println!("# timestamp: {now}");
    println!("command: {command}");
    println!("presentation: {}", ctx.args_fingerprint);
}
