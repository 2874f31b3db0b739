//! One function per subcommand. Each returns the number of violations
//! found (0 = clean); hard failures propagate as errors.

use std::path::PathBuf;

use num_traits::ToPrimitive;

use shelling_core::ball::{build_ball, estimate_delta};
use shelling_core::divergence::{
    build_divergence_graph, check_divergence_properties, parse_graph,
    render_divergence_report, serialize_graph,
};
use shelling_core::error::{Error, Result};
use shelling_core::fsa::{validate_fsa, ShortlexFsa};
use shelling_core::growth::{check_incommensurable, render_report, StateClass};
use shelling_core::population::{
    analyze_growth_sequence, balanced_sequence, check_populated_rules,
    parse_populated_patch, rebuild_support, serialize_populated_patch,
    BalancedSequence, PopulationConfig,
};
use shelling_core::sft::{check_coloring, torsion_coloring};
use shelling_core::shelling::{
    build_rule_dictionary, check_preshelling, check_shortlex_local_rules,
    generate_shelling_patch, local_data, parse_patch, serialize_patch, LocalFrame,
    PatchAnnotations, RuleDictionary,
};
use shelling_core::{Presentation, Word};

use crate::context::{
    build_frame, load_context, load_fsa, load_growth, parse_rational, print_header,
    read_text, resolve_basepoint, resolve_delta, write_artifact, Context,
};
use crate::{Cli, Command, FsaAction, ShellAction};

pub fn run(cli: &Cli) -> Result<usize> {
    let run = &cli.run;
    let ctx = load_context(run)?;
    match &cli.command {
        Command::Ball { radius } => cmd_ball(&ctx, cli, *radius),
        Command::Delta { radius } => cmd_delta(&ctx, cli, *radius),
        Command::Fsa { action } => match action {
            FsaAction::Build { out } => cmd_fsa_build(&ctx, cli, out),
            FsaAction::Validate { radius } => cmd_fsa_validate(&ctx, cli, *radius),
        },
        Command::Growth { q, inc_bound } => cmd_growth(&ctx, cli, *q, *inc_bound),
        Command::Shell { action } => match action {
            ShellAction::Generate {
                radius,
                basepoint,
                dict_samples,
                out,
            } => cmd_shell_generate(&ctx, cli, *radius, basepoint, *dict_samples, out),
            ShellAction::Check {
                input,
                no_dict,
                dict_samples,
            } => cmd_check_file(&ctx, cli, input, *no_dict, *dict_samples),
        },
        Command::Divergence {
            radius,
            basepoint,
            dict_samples,
            level,
            depth,
            out,
        } => cmd_divergence(&ctx, cli, *radius, basepoint, *dict_samples, *level, *depth, out),
        Command::Populate {
            radius,
            basepoint,
            dict_samples,
            q,
            nu0,
            star,
            depth,
            l_bound,
            max_level_cells,
            inc_bound,
            out,
        } => cmd_populate(
            &ctx,
            cli,
            *radius,
            basepoint,
            *dict_samples,
            *q,
            nu0,
            star,
            *depth,
            *l_bound,
            *max_level_cells,
            *inc_bound,
            out,
        ),
        Command::Verify {
            input,
            no_dict,
            dict_samples,
        } => cmd_check_file(&ctx, cli, input, *no_dict, *dict_samples),
        Command::Analyze {
            input,
            q,
            a,
            nu0,
            length,
            max_period,
            inc_bound,
        } => cmd_analyze(&ctx, cli, input, *q, a, nu0, *length, *max_period, *inc_bound),
        Command::Color { radius, n, out } => cmd_color(&ctx, cli, *radius, *n, out),
        Command::ExportDot { input, out } => cmd_export_dot(&ctx, cli, input, out),
    }
}

fn cmd_ball(ctx: &Context, cli: &Cli, radius: usize) -> Result<usize> {
    print_header(ctx, "ball");
    let table = build_ball(&ctx.oracle, radius, cli.run.budget)?;
    println!("radius: {radius}");
    for (n, size) in table.sphere_sizes().iter().enumerate() {
        println!("sphere: {n} {size}");
    }
    println!("ball-size: {}", table.ball_size());
    Ok(0)
}

fn cmd_delta(ctx: &Context, cli: &Cli, radius: usize) -> Result<usize> {
    let _ = cli;
    print_header(ctx, "delta");
    let report = estimate_delta(&ctx.oracle, radius)?;
    println!("radius: {}", report.radius);
    println!("triangles: {}", report.triangles);
    println!("delta: {}", report.delta);
    println!(
        "caveat: slimness surveyed on the radius-{} ball only; larger \
         triangles could exceed this value",
        report.radius
    );
    Ok(0)
}

fn cmd_fsa_build(ctx: &Context, cli: &Cli, out: &Option<PathBuf>) -> Result<usize> {
    print_header(ctx, "fsa build");
    let sc = ctx.pres().small_cancellation();
    println!(
        "small-cancellation: max-piece={} min-relator={} c'(1/6)={}",
        sc.max_piece, sc.min_relator, sc.c_one_sixth
    );
    let fsa = load_fsa(ctx, &cli.run)?;
    println!("states: {}", fsa.num_states());
    println!("lookahead: {}", fsa.lookahead());
    let spheres: Vec<String> = (0..=6)
        .map(|n| fsa.sphere_count(n).map(|c| c.to_string()))
        .collect::<Result<_>>()?;
    println!("spheres-0-6: {}", spheres.join(" "));
    if let Some(path) = write_artifact(&cli.run, out, "automaton.fsa", &fsa.serialize())? {
        println!("wrote: {}", path.display());
    }
    Ok(0)
}

fn cmd_fsa_validate(ctx: &Context, cli: &Cli, radius: usize) -> Result<usize> {
    print_header(ctx, "fsa validate");
    let fsa = load_fsa(ctx, &cli.run)?;
    let report = validate_fsa(&ctx.oracle, &fsa, radius)?;
    let mut mismatches = 0usize;
    for lc in &report.levels {
        let ok = lc.missing.is_empty() && lc.extra.is_empty() && lc.enumerated == lc.accepted;
        println!(
            "level: {} enumerated={} accepted={} {}",
            lc.n,
            lc.enumerated,
            lc.accepted,
            if ok { "ok" } else { "MISMATCH" }
        );
        if !ok {
            mismatches += 1;
            for w in lc.missing.iter().take(3) {
                println!("  missing: {}", ctx.pres().format_word(w));
            }
            for w in lc.extra.iter().take(3) {
                println!("  extra: {}", ctx.pres().format_word(w));
            }
        }
    }
    println!("unreachable-states: {}", report.unreachable_states);
    println!("agreement: {}", report.agreement());
    println!(
        "caveat: the automaton is validated against enumeration up to \
         radius {radius} only"
    );
    Ok(mismatches + report.unreachable_states)
}

fn cmd_growth(ctx: &Context, cli: &Cli, q: u64, inc_bound: u32) -> Result<usize> {
    print_header(ctx, "growth");
    let fsa = load_fsa(ctx, &cli.run)?;
    let growth = load_growth(&fsa)?;
    let inc = check_incommensurable(&growth, q, inc_bound)?;
    print!("{}", render_report(&growth, std::slice::from_ref(&inc)));
    Ok(0)
}

fn cmd_shell_generate(
    ctx: &Context,
    cli: &Cli,
    radius: usize,
    basepoint: &Option<String>,
    dict_samples: usize,
    out: &Option<PathBuf>,
) -> Result<usize> {
    print_header(ctx, "shell generate");
    let fsa = load_fsa(ctx, &cli.run)?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let bp = resolve_basepoint(ctx, &cli.run, &fsa, basepoint, radius, dict_samples)?;
    println!("radius: {radius}");
    println!("basepoint: {}", ctx.pres().format_word(&bp));
    let patch = generate_shelling_patch(&ctx.oracle, &fsa, &frame, &bp)?;
    let data = local_data(&frame, &patch)?;
    let violations = check_preshelling(ctx.pres(), &frame, &data)?;
    print_violations(
        ctx.pres(),
        &frame,
        violations.iter().map(|v| (v.cell, format!("{}: {}", v.kind, v.detail))),
    );
    let text = serialize_patch(
        ctx.pres(),
        &frame,
        &patch,
        &PatchAnnotations {
            pop: None,
            marks: None,
        },
    )?;
    if let Some(path) = write_artifact(&cli.run, out, "patch.shell", &text)? {
        println!("wrote: {}", path.display());
    }
    Ok(violations.len())
}

/// Default dictionary: two shells just beyond the window reach, plus the
/// shell of the anchors we intend to certify (when given).
fn default_dictionary(
    ctx: &Context,
    cli: &Cli,
    fsa: &ShortlexFsa,
    delta: usize,
    extra_shell: Option<usize>,
    samples: usize,
) -> Result<RuleDictionary> {
    let base = 2 * delta + 2;
    let mut shells = vec![(base, samples), (base + 1, samples)];
    if let Some(s) = extra_shell {
        if s > base + 1 {
            shells.push((s, samples));
        }
    }
    build_rule_dictionary(&ctx.oracle, fsa, delta, &shells, cli.run.budget)
}

fn print_dictionary_caveats(dict: &RuleDictionary, basepoint: Option<&Word>) {
    for scan in &dict.report.scans {
        println!(
            "dictionary-scan: shell={} sampled={} new-patterns={}",
            scan.shell, scan.sampled, scan.new_patterns
        );
    }
    println!(
        "dictionary: states={} patterns={} saturated={}",
        dict.report.states_seen,
        dict.pattern_count(),
        dict.report.saturated
    );
    if !dict.report.saturated {
        println!(
            "caveat: the dictionary scan did not saturate; legitimate \
             patterns may be flagged"
        );
    }
    if let Some(bp) = basepoint {
        if !dict.scanned_basepoints.contains(bp) {
            println!(
                "caveat: the patch basepoint was not among the scanned \
                 dictionary basepoints; pattern flags may be spurious"
            );
        }
    }
}

/// `verify` / `shell check`: re-check a stored artifact. The file kind is
/// detected from its header line.
fn cmd_check_file(
    ctx: &Context,
    cli: &Cli,
    input: &PathBuf,
    no_dict: bool,
    dict_samples: usize,
) -> Result<usize> {
    print_header(ctx, "verify");
    println!("input: {}", input.display());
    let text = read_text(input)?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim();
    if first == "populated-patch" {
        verify_populated(ctx, cli, &text, no_dict, dict_samples)
    } else if first.starts_with("presentation:") {
        verify_plain_patch(ctx, cli, &text, no_dict, dict_samples)
    } else {
        Err(Error::Input(format!(
            "unrecognized artifact header `{first}`; expected a patch or \
             populated-patch file"
        )))
    }
}

/// The `radius:` header of a patch-like file, needed to build the frame
/// before the full parse.
fn peek_radius(text: &str) -> Result<usize> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("radius:"))
        .ok_or_else(|| Error::Input("artifact has no `radius:` line".into()))?
        .trim()
        .parse()
        .map_err(|_| Error::Input("unreadable `radius:` line".into()))
}

fn verify_plain_patch(
    ctx: &Context,
    cli: &Cli,
    text: &str,
    no_dict: bool,
    dict_samples: usize,
) -> Result<usize> {
    let radius = peek_radius(text)?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let parsed = parse_patch(ctx.pres(), &frame, text)?;
    let patch = &parsed.patch;
    println!("kind: patch");
    println!("radius: {radius}");
    if let Some(bp) = &patch.basepoint {
        println!("basepoint: {}", ctx.pres().format_word(bp));
    }
    let data = local_data(&frame, patch)?;
    let mut all: Vec<(u32, String)> = check_preshelling(ctx.pres(), &frame, &data)?
        .into_iter()
        .map(|v| (v.cell, format!("{}: {}", v.kind, v.detail)))
        .collect();
    if no_dict {
        println!("caveat: window-pattern dictionary clause skipped (--no-dict)");
    } else {
        let fsa = load_fsa(ctx, &cli.run)?;
        let delta = resolve_delta(ctx, &cli.run)?;
        println!("delta: {delta}");
        let bp_dist = patch.basepoint.as_ref().map(|b| b.len());
        let dict = default_dictionary(ctx, cli, &fsa, delta, bp_dist, dict_samples)?;
        print_dictionary_caveats(&dict, patch.basepoint.as_ref());
        all.extend(
            check_shortlex_local_rules(ctx.pres(), &fsa, &frame, &data, &dict, delta)?
                .into_iter()
                .map(|v| (v.cell, format!("{}: {}", v.kind, v.detail))),
        );
    }
    print_violations(ctx.pres(), &frame, all.iter().cloned());
    Ok(all.len())
}

fn verify_populated(
    ctx: &Context,
    cli: &Cli,
    text: &str,
    no_dict: bool,
    dict_samples: usize,
) -> Result<usize> {
    let radius = peek_radius(text)?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let fsa = load_fsa(ctx, &cli.run)?;
    let growth = load_growth(&fsa)?;
    let mut pp = parse_populated_patch(ctx.pres(), &frame, text)?;
    rebuild_support(&ctx.oracle, &frame, &growth, &mut pp)?;
    println!("kind: populated-patch");
    println!("radius: {radius}");
    if let Some(bp) = &pp.base.basepoint {
        println!("basepoint: {}", ctx.pres().format_word(bp));
    }
    println!(
        "levels: {}",
        pp.levels
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let dict = if no_dict {
        println!("caveat: window-pattern dictionary clause skipped (--no-dict)");
        None
    } else {
        let delta = resolve_delta(ctx, &cli.run)?;
        println!("delta: {delta}");
        let bp_dist = pp.base.basepoint.as_ref().map(|b| b.len());
        let dict = default_dictionary(ctx, cli, &fsa, delta, bp_dist, dict_samples)?;
        print_dictionary_caveats(&dict, pp.base.basepoint.as_ref());
        Some(dict)
    };
    let violations =
        check_populated_rules(ctx.pres(), &fsa, &frame, &growth, &pp, dict.as_ref())?;
    println!(
        "caveat: populated rules certified on graph depth {} and jump bound {}",
        pp.params.depth, pp.params.l_bound
    );
    print_violations(
        ctx.pres(),
        &frame,
        violations
            .iter()
            .map(|v| (v.cell, format!("{}: {}", v.kind, v.detail))),
    );
    Ok(violations.len())
}

fn print_violations(
    pres: &Presentation,
    frame: &LocalFrame,
    violations: impl Iterator<Item = (u32, String)>,
) {
    let mut count = 0usize;
    for (cell, detail) in violations {
        count += 1;
        if count <= 20 {
            let w = frame.word(cell);
            let name = if w.is_empty() {
                "1".to_string()
            } else {
                pres.format_word(w)
            };
            println!("violation: cell={name} {detail}");
        }
    }
    if count > 20 {
        println!("violation: ... {} more", count - 20);
    }
    println!("violations: {count}");
}

#[allow(clippy::too_many_arguments)]
fn cmd_divergence(
    ctx: &Context,
    cli: &Cli,
    radius: usize,
    basepoint: &Option<String>,
    dict_samples: usize,
    level: i32,
    depth: usize,
    out: &Option<PathBuf>,
) -> Result<usize> {
    print_header(ctx, "divergence");
    let fsa = load_fsa(ctx, &cli.run)?;
    let growth = load_growth(&fsa)?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let bp = resolve_basepoint(ctx, &cli.run, &fsa, basepoint, radius, dict_samples)?;
    let delta = resolve_delta(ctx, &cli.run)?;
    println!("radius: {radius}");
    println!("basepoint: {}", ctx.pres().format_word(&bp));
    let patch = generate_shelling_patch(&ctx.oracle, &fsa, &frame, &bp)?;
    let mask: Vec<bool> = (0..fsa.num_states() as u32)
        .map(|s| growth.partition[s as usize] != StateClass::Min)
        .collect();
    let abs_level = patch.h[0] + level;
    let graph = build_divergence_graph(
        &ctx.oracle,
        &frame,
        &patch,
        &mask,
        abs_level,
        depth,
        delta,
    )?;
    let ball_2delta = frame.cells_at_level((2 * delta).min(frame.radius())).end as usize;
    let report = check_divergence_properties(
        &ctx.oracle,
        &frame,
        &patch,
        &graph,
        None,
        None,
        ball_2delta,
    )?;
    print!("{}", render_divergence_report(&report));
    if let Some(path) = write_artifact(
        &cli.run,
        out,
        "divergence.graph",
        &serialize_graph(ctx.pres(), &frame, &graph),
    )? {
        println!("wrote: {}", path.display());
    }
    Ok(usize::from(!report.all_hold()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_populate(
    ctx: &Context,
    cli: &Cli,
    radius: usize,
    basepoint: &Option<String>,
    dict_samples: usize,
    q: u32,
    nu0: &Option<String>,
    star: &str,
    depth: usize,
    l_bound: Option<usize>,
    max_level_cells: usize,
    inc_bound: u32,
    out: &Option<PathBuf>,
) -> Result<usize> {
    print_header(ctx, "populate");
    let fsa = load_fsa(ctx, &cli.run)?;
    let growth = load_growth(&fsa)?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let bp = resolve_basepoint(ctx, &cli.run, &fsa, basepoint, radius, dict_samples)?;
    let delta = resolve_delta(ctx, &cli.run)?;
    println!("radius: {radius}");
    println!("basepoint: {}", ctx.pres().format_word(&bp));
    println!("q: {q}  delta: {delta}  depth: {depth}");
    let cfg = PopulationConfig {
        q,
        nu0: nu0.as_deref().map(|t| parse_rational(t, "nu0")).transpose()?,
        star: parse_rational(star, "star")?,
        depth,
        delta_param: delta,
        l_bound,
        max_level_cells,
        incommensurability_bound: inc_bound,
    };
    let pp = shelling_core::population::build_populated_patch(
        &ctx.oracle,
        &fsa,
        &growth,
        &frame,
        &bp,
        &cfg,
    )?;
    println!(
        "window-base-a: {}  population-cap: {}  jump-bound: {}",
        pp.params.a, pp.params.n_cap, pp.params.l_bound
    );
    for (i, &lvl) in pp.levels.iter().enumerate() {
        let nu = pp.nu_exact[i].to_f64().unwrap_or(f64::NAN);
        println!(
            "level: {lvl} delta-exp={} nu={:.6} cover-paths={} matched={}",
            pp.delta_per_level[i],
            nu,
            pp.covers[i].paths.len(),
            if i < pp.matchings.len() {
                pp.matchings[i].assignments.len().to_string()
            } else {
                "-".to_string()
            }
        );
    }
    for w in &pp.warnings {
        println!("warning: {w}");
    }
    let violations = check_populated_rules(ctx.pres(), &fsa, &frame, &growth, &pp, None)?;
    print_violations(
        ctx.pres(),
        &frame,
        violations
            .iter()
            .map(|v| (v.cell, format!("{}: {}", v.kind, v.detail))),
    );
    let text = serialize_populated_patch(ctx.pres(), &frame, &pp)?;
    if let Some(path) = write_artifact(&cli.run, out, "populated.shell", &text)? {
        println!("wrote: {}", path.display());
    }
    Ok(violations.len())
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    ctx: &Context,
    cli: &Cli,
    input: &Option<PathBuf>,
    q: u32,
    a: &str,
    nu0: &Option<String>,
    length: usize,
    max_period: usize,
    inc_bound: u32,
) -> Result<usize> {
    print_header(ctx, "analyze");
    let fsa = load_fsa(ctx, &cli.run)?;
    let growth = load_growth(&fsa)?;
    let inc = check_incommensurable(&growth, q as u64, inc_bound)?;
    println!(
        "incommensurable: {} (q={}, exponent bound {})",
        inc.incommensurable, q, inc_bound
    );
    if let Some((m, n)) = inc.witness {
        println!("witness: q^{m} = lambda^{n}");
    }
    let lambda = growth.lambda_f64();

    let delta_seq: Vec<u32> = match input {
        Some(path) => {
            let text = read_text(path)?;
            let radius = peek_radius(&text)?;
            let frame = build_frame(ctx, &cli.run, radius)?;
            let pp = parse_populated_patch(ctx.pres(), &frame, &text)?;
            println!("source: populated patch with {} levels", pp.levels.len());
            if pp.params.q != q {
                println!(
                    "caveat: patch was built with q={}, analysis requested q={q}",
                    pp.params.q
                );
            }
            pp.delta_per_level.clone()
        }
        None => {
            let a = parse_rational(a, "a")?;
            let nu0 = match nu0 {
                Some(t) => parse_rational(t, "nu0")?,
                None => a.clone(),
            };
            let seq: BalancedSequence = balanced_sequence(
                growth.lambda.lo(),
                growth.lambda.hi(),
                q,
                &a,
                &nu0,
                length,
            )?;
            println!(
                "source: balanced sequence of length {length} (A={a}, nu0={nu0})"
            );
            if seq.commensurable {
                println!("note: lambda is a power of q; the sequence is constant");
            }
            seq.delta
        }
    };
    let report = analyze_growth_sequence(
        &delta_seq,
        q,
        lambda,
        max_period,
        Some(inc.incommensurable),
    );
    match report.period {
        Some(p) => println!(
            "period: {p} (exponent sum {})",
            report
                .period_exponent_sum
                .map(|s| s.to_string())
                .unwrap_or_else(|| "?".into())
        ),
        None => println!("period: none up to {max_period}"),
    }
    println!(
        "mean-delta: {:.9}  log_q(lambda): {:.9}  deviation: {:.3e}",
        report.final_mean_delta, report.log_q_lambda, report.final_deviation
    );
    println!("max-prefix-deviation: {:.3e}", report.max_prefix_deviation);
    println!("verdict: {}", report.verdict);
    println!(
        "caveat: periodicity scanned up to period {max_period} over {} terms",
        delta_seq.len()
    );
    // A detected period together with certified incommensurability is the
    // contradiction the analysis exists to surface.
    Ok(usize::from(report.period.is_some() && inc.incommensurable))
}

fn cmd_color(
    ctx: &Context,
    cli: &Cli,
    radius: usize,
    n: usize,
    out: &Option<PathBuf>,
) -> Result<usize> {
    print_header(ctx, "color");
    let frame = build_frame(ctx, &cli.run, radius)?;
    let coloring = torsion_coloring(&ctx.oracle, &frame, n)?;
    let bound = frame.cells_at_level(n).end as usize;
    println!("radius: {radius}");
    println!("distance: {n}");
    println!("cells: {}", frame.len());
    println!("colors: {} (bound {bound})", coloring.colors_used);
    let bad = check_coloring(&ctx.oracle, &frame, &coloring, n)?;
    for &(x, y) in bad.iter().take(20) {
        println!(
            "violation: {} and {} share a color within distance {n}",
            ctx.pres().format_word(frame.word(x)),
            ctx.pres().format_word(frame.word(y))
        );
    }
    println!("violations: {}", bad.len());
    if coloring.colors_used > bound {
        println!("violation: color count exceeds the ball bound");
    }
    let mut text = String::new();
    text.push_str("coloring\n");
    text.push_str(&format!("presentation: {}\n", ctx.args_fingerprint));
    text.push_str(&format!("distance: {n}\n"));
    text.push_str(&format!("colors: {}\n", coloring.colors_used));
    for c in 0..frame.len() as u32 {
        let w = frame.word(c);
        let name = if w.is_empty() {
            "1".to_string()
        } else {
            ctx.pres().format_word(w)
        };
        text.push_str(&format!("cell: {name} {}\n", coloring.color[c as usize]));
    }
    if let Some(path) = write_artifact(&cli.run, out, "ball.coloring", &text)? {
        println!("wrote: {}", path.display());
    }
    Ok(bad.len() + usize::from(coloring.colors_used > bound))
}

fn cmd_export_dot(
    ctx: &Context,
    cli: &Cli,
    input: &PathBuf,
    out: &Option<PathBuf>,
) -> Result<usize> {
    print_header(ctx, "export-dot");
    let text = read_text(input)?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim();
    let dot = if first == "divergence-graph" {
        graph_dot(ctx, cli, &text)?
    } else if first.starts_with("states:") {
        fsa_dot(ctx, &text)?
    } else {
        return Err(Error::Input(format!(
            "unrecognized artifact header `{first}`; expected an automaton \
             or divergence-graph file"
        )));
    };
    match write_artifact(&cli.run, out, "export.dot", &dot)? {
        Some(path) => println!("wrote: {}", path.display()),
        None => print!("{dot}"),
    }
    Ok(0)
}

/// DOT for a divergence graph. The frame is rebuilt only to re-validate the
/// file; labels come from the stored words.
fn graph_dot(ctx: &Context, cli: &Cli, text: &str) -> Result<String> {
    // The file's vertex words bound the frame radius needed to resolve them.
    let radius = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix("vertex:"))
        .filter_map(|rest| rest.split_whitespace().next())
        .map(|w| if w == "1" { 0 } else { w.chars().count() })
        .max()
        .ok_or_else(|| Error::Input("graph file has no vertices".into()))?;
    let frame = build_frame(ctx, &cli.run, radius)?;
    let graph = parse_graph(ctx.pres(), &frame, text)?;
    let mut dot = String::new();
    dot.push_str("graph divergence {\n  node [shape=circle fontsize=10];\n");
    for (i, &v) in graph.vertices.iter().enumerate() {
        let w = frame.word(v);
        let name = if w.is_empty() {
            "1".to_string()
        } else {
            ctx.pres().format_word(w)
        };
        dot.push_str(&format!(
            "  \"{name}\"{};\n",
            if graph.interior[i] {
                " [style=filled fillcolor=lightblue]"
            } else {
                ""
            }
        ));
    }
    for &(a, b) in &graph.edges {
        dot.push_str(&format!(
            "  \"{}\" -- \"{}\";\n",
            ctx.pres().format_word(frame.word(a)),
            ctx.pres().format_word(frame.word(b))
        ));
    }
    dot.push_str("}\n");
    Ok(dot)
}

fn fsa_dot(ctx: &Context, text: &str) -> Result<String> {
    let fsa = ShortlexFsa::parse(ctx.pres(), text)?;
    let mut dot = String::new();
    dot.push_str("digraph automaton {\n  rankdir=LR;\n  node [shape=circle];\n");
    dot.push_str(&format!("  {} [shape=doublecircle];\n", fsa.start()));
    for st in 0..fsa.num_states() as u32 {
        for g in 0..fsa.alphabet_len() as u8 {
            if let Some(t) = fsa.transition(st, g) {
                dot.push_str(&format!(
                    "  {st} -> {t} [label=\"{}\"];\n",
                    ctx.pres().symbol(g)
                ));
            }
        }
    }
    dot.push_str("}\n");
    Ok(dot)
}
