use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::{
    write_meta, BuildQArgs, Cli, DecodeArgs, DecoderArgs, EvalArgs, InspectArgs, SplitArgs,
    SvdArgs, SweepArgs, TrainArgs,
};
use crate::cca::{self, read_model, write_model, CcaModel};
use crate::decoder::{decode_batch, BatchItem, DecoderConfig, InitMode};
use crate::error::{Error, Result};
use crate::eval::{self, Hypotheses, ReferenceSet};
use crate::ingest::{self, Split, SplitManifest};
use crate::linalg::{SecondMoments, SparseVec, SvdOptions};
use crate::phrase::{
    estimate_context_table, extract_phrases, load_phrase_inventory, read_context_table,
    write_context_table, write_phrase_inventory, Caption, ContextTable, PhraseInventory,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_split(args: &SplitArgs) -> Result<Option<(SplitManifest, Split)>> {
    match (&args.manifest, args.split) {
        (Some(m), Some(s)) => Ok(Some((ingest::load_manifest(m)?, s.into()))),
        (Some(_), None) => Err(Error::InvalidParameter("--manifest needs --split".into())),
        _ => Ok(None),
    }
}

fn restrict<V>(map: BTreeMap<String, V>, ids: &[String]) -> BTreeMap<String, V> {
    let keep: std::collections::BTreeSet<&String> = ids.iter().collect();
    map.into_iter()
        .filter(|(id, _)| keep.contains(id))
        .collect()
}

fn restrict_opt<V>(
    map: BTreeMap<String, V>,
    split: &Option<(SplitManifest, Split)>,
) -> BTreeMap<String, V> {
    match split {
        Some((manifest, s)) => restrict(map, manifest.get(*s)),
        None => map,
    }
}

fn flatten(captions: &BTreeMap<String, Vec<Caption>>) -> Vec<Caption> {
    captions.values().flatten().cloned().collect()
}

fn svd_options(a: &SvdArgs) -> SvdOptions {
    SvdOptions {
        power_iters: a.power_iters,
        oversample: a.oversample,
        dense_limit: a.dense_limit,
    }
}

fn check_vocab(model: &CcaModel, inventory: &PhraseInventory) -> Result<()> {
    match model.output_vocab_digest() {
        Some(d) if d != inventory.digest() => Err(Error::InvalidInput(
            "phrase inventory does not match the one the model was trained with".into(),
        )),
        _ => Ok(()),
    }
}

pub(super) fn build_q(cli: &Cli, a: &BuildQArgs) -> Result<()> {
    let split = load_split(&a.split)?;
    let captions = restrict_opt(ingest::load_captions(&a.captions, cli.strict)?, &split);
    let corpus = flatten(&captions);
    let inventory = match &a.inventory {
        Some(p) => load_phrase_inventory(p)?,
        None => extract_phrases(&corpus, a.max_phrase_len)?,
    };
    if let Some(p) = &a.inventory_out {
        write_phrase_inventory(&inventory, p)?;
    }
    let q = estimate_context_table(&corpus, &inventory)?;
    write_context_table(&q, &a.output)?;
    println!(
        "inventory size {}, Q domain size {}, contexts {}",
        inventory.len(),
        q.domain_size(),
        q.total_contexts()
    );

    let mut inputs = vec![a.captions.as_path()];
    inputs.extend(a.inventory.as_deref());
    inputs.extend(a.split.manifest.as_deref());
    let mut outputs = vec![a.output.as_path()];
    outputs.extend(a.inventory_out.as_deref());
    write_meta(
        cli,
        &a.output,
        &inputs,
        &outputs,
        json!({
            "captions": corpus.len(),
            "inventory_size": inventory.len(),
            "q_domain_size": q.domain_size(),
            "contexts": q.total_contexts(),
        }),
    )
}

pub(super) fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let split = load_split(&a.split)?;
    let features = ingest::load_visual_features(&a.features, a.dim)?;
    let captions = restrict_opt(ingest::load_captions(&a.captions, cli.strict)?, &split);
    let inventory = load_phrase_inventory(&a.inventory)?;
    let pairs = ingest::build_training_pairs(&features, &captions, &inventory, cli.strict)?;
    log::info!("{} training pairs", pairs.len());
    let model = cca::train_with(&pairs, a.m, cli.seed, &svd_options(&a.svd))?
        .with_output_vocab_digest(inventory.digest());
    log::info!("singular values: {:?}", model.sigma());
    write_model(&model, &a.output)?;
    println!(
        "trained m = {} on {} pairs; retained dims {} x {}; sigma[0] = {:.6}, sigma[m-1] = {:.6}",
        model.m(),
        pairs.len(),
        model.retained_input().len(),
        model.retained_output().len(),
        model.sigma()[0],
        model.sigma()[model.m() - 1],
    );

    let mut inputs = vec![
        a.features.as_path(),
        a.captions.as_path(),
        a.inventory.as_path(),
    ];
    inputs.extend(a.split.manifest.as_deref());
    write_meta(
        cli,
        &a.output,
        &inputs,
        &[a.output.as_path()],
        json!({
            "pairs": pairs.len(),
            "retained_input": model.retained_input().len(),
            "retained_output": model.retained_output().len(),
            "sigma": model.sigma(),
        }),
    )
}

/// Loads the initialization pool: captions of the manifest's train split, or
/// every caption when no manifest is given.
fn init_pool(cli: &Cli, d: &DecoderArgs, manifest: Option<&SplitManifest>) -> Result<Vec<Caption>> {
    if d.config(0, false).init == InitMode::Greedy {
        return Ok(Vec::new());
    }
    let path = d.init_captions.as_ref().ok_or_else(|| {
        Error::InvalidParameter("--init training-caption needs --init-captions".into())
    })?;
    let mut captions = ingest::load_captions(path, cli.strict)?;
    if let Some(m) = manifest {
        captions = restrict(captions, &m.train);
    }
    Ok(flatten(&captions))
}

/// `scene_id<TAB>caption<TAB>score` for every decoded scene, in input order.
/// Failed scenes are left out.
pub fn format_decode_output(items: &[BatchItem]) -> String {
    let mut out = String::new();
    for item in items {
        if let Ok(r) = &item.result {
            writeln!(out, "{}\t{}\t{}", item.id, r.caption, r.score.total()).unwrap();
        }
    }
    out
}

fn format_trace(items: &[BatchItem]) -> String {
    let mut out =
        String::from("scene_id\tstep\ttemp\tcurrent_score\tbest_score\tproposed\taccepted\n");
    for item in items {
        if let Ok(r) = &item.result {
            for s in &r.trace {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    item.id,
                    s.step,
                    s.temp,
                    s.current_score,
                    s.best_score,
                    s.proposed as u8,
                    s.accepted as u8
                )
                .unwrap();
            }
        }
    }
    out
}

fn hypotheses(items: &[BatchItem]) -> Hypotheses {
    items
        .iter()
        .filter_map(|i| {
            i.result
                .as_ref()
                .ok()
                .map(|r| (i.id.clone(), r.caption.clone()))
        })
        .collect()
}

/// Logs per-scene failures; fails only if every scene failed.
fn check_batch(items: &[BatchItem]) -> Result<usize> {
    let failed: Vec<&BatchItem> = items.iter().filter(|i| i.result.is_err()).collect();
    for item in &failed {
        if let Err(e) = &item.result {
            log::error!("{}: {e}", item.id);
        }
    }
    if !items.is_empty() && failed.len() == items.len() {
        return Err(Error::InvalidInput(format!(
            "all {} scenes failed to decode",
            items.len()
        )));
    }
    Ok(failed.len())
}

pub(super) fn decode(cli: &Cli, a: &DecodeArgs) -> Result<()> {
    let config = a.decoder.config(cli.seed, a.trace.is_some());
    config.validate()?;
    let split = load_split(&a.split)?;
    let model = read_model(&a.model)?;
    let inventory = load_phrase_inventory(&a.inventory)?;
    check_vocab(&model, &inventory)?;
    let features = restrict_opt(
        ingest::load_visual_features(&a.features, model.input_dim())?,
        &split,
    );
    let q = read_context_table(&a.table)?;
    let pool = init_pool(cli, &a.decoder, split.as_ref().map(|(m, _)| m))?;
    let inputs: Vec<(String, SparseVec)> = features.into_iter().collect();

    let items = decode_batch(&model, &inventory, &q, &inputs, &pool, &config)?;
    let failed = check_batch(&items)?;
    write_text(&a.output, &format_decode_output(&items))?;
    if let Some(t) = &a.trace {
        write_text(t, &format_trace(&items))?;
    }
    let unique = eval::unique_caption_count(&hypotheses(&items));
    println!(
        "decoded {} scenes ({failed} failed), {unique} unique captions",
        items.len() - failed
    );

    let mut in_paths = vec![
        a.model.as_path(),
        a.inventory.as_path(),
        a.features.as_path(),
        a.table.as_path(),
    ];
    in_paths.extend(a.split.manifest.as_deref());
    in_paths.extend(a.decoder.init_captions.as_deref());
    let mut out_paths = vec![a.output.as_path()];
    out_paths.extend(a.trace.as_deref());
    write_meta(
        cli,
        &a.output,
        &in_paths,
        &out_paths,
        json!({
            "decoder_config": config,
            "scenes": items.len(),
            "failed": failed,
            "unique_captions": unique,
            "iterations_per_scene": config.schedule_len(),
        }),
    )
}

pub(super) fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let split = load_split(&a.split)?;
    let refs: ReferenceSet = restrict_opt(ingest::load_captions(&a.refs, cli.strict)?, &split);
    let mut kv;
    let summary;
    let mut in_paths = vec![a.refs.as_path()];
    in_paths.extend(a.split.manifest.as_deref());
    if let Some(b) = a.self_bleu_batch {
        let out = eval::reference_self_bleu(&refs, b);
        print!("self-BLEU batch {b}: {}", out.report.to_text());
        println!("skipped {} scenes", out.skipped);
        kv = out.report.to_key_values();
        writeln!(kv, "self_bleu_batch\t{b}\nskipped\t{}", out.skipped).unwrap();
        summary = json!({ "bleu": out.report.bleu, "self_bleu_batch": b, "skipped": out.skipped });
    } else {
        let hyp_path = a.hyps.as_ref().expect("clap requires --hyps");
        in_paths.push(hyp_path);
        let hyps = restrict_opt(eval::load_hypotheses(hyp_path)?, &split);
        let report = eval::corpus_bleu(&hyps, &refs)?;
        let unique = eval::unique_caption_count(&hyps);
        print!("{}", report.to_text());
        println!("{unique} unique captions out of {}", hyps.len());
        kv = report.to_key_values();
        writeln!(kv, "unique_captions\t{unique}").unwrap();
        if let Some(p) = &a.scatter {
            eval::write_scatter(&eval::per_scene_scores(&hyps, &refs), p)?;
        }
        summary = json!({ "bleu": report.bleu, "unique_captions": unique });
    }
    write_text(&a.output, &kv)?;
    let mut out_paths = vec![a.output.as_path()];
    out_paths.extend(a.scatter.as_deref().filter(|_| a.self_bleu_batch.is_none()));
    write_meta(cli, &a.output, &in_paths, &out_paths, summary)
}

/// Parses `start:end:step` (end inclusive) into the list of values.
pub fn parse_range(range: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("range `{range}` is not start:end:step"));
    let parts: Vec<usize> = range
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if step == 0 || start == 0 || start > end {
        return Err(bad());
    }
    Ok((start..=end).step_by(step).collect())
}

struct SweepRow {
    m: usize,
    bleu: Result<f64>,
}

#[allow(clippy::too_many_arguments)]
fn sweep_one(
    m: usize,
    moments: &SecondMoments,
    seed: u64,
    opts: &SvdOptions,
    inventory: &PhraseInventory,
    q: &ContextTable,
    dev: &[(String, SparseVec)],
    dev_refs: &ReferenceSet,
    pool: &[Caption],
    config: &DecoderConfig,
) -> Result<f64> {
    let model = cca::train_from_moments(moments, m, seed, opts)?;
    let items = decode_batch(&model, inventory, q, dev, pool, config)?;
    check_batch(&items)?;
    let report = eval::corpus_bleu(&hypotheses(&items), dev_refs)?;
    log::info!("m = {m}: dev BLEU {:.2}", report.bleu);
    Ok(report.bleu)
}

pub(super) fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let ms = parse_range(&a.range)?;
    let config = a.decoder.config(cli.seed, false);
    config.validate()?;
    let manifest = ingest::load_manifest(&a.manifest)?;
    let features = ingest::load_visual_features(&a.features, a.dim)?;
    let captions = ingest::load_captions(&a.captions, cli.strict)?;
    let inventory = load_phrase_inventory(&a.inventory)?;
    let q = read_context_table(&a.table)?;

    let train_caps = restrict(captions.clone(), &manifest.train);
    let pairs = ingest::build_training_pairs(&features, &train_caps, &inventory, cli.strict)?;
    let mut moments = SecondMoments::new(a.dim, inventory.len());
    for (k, (phi, psi)) in pairs.iter().enumerate() {
        moments.add(k, phi, psi)?;
    }
    let dev: Vec<(String, SparseVec)> = restrict(features, &manifest.dev).into_iter().collect();
    let dev_refs = restrict(captions, &manifest.dev);
    let pool = if config.init == InitMode::Greedy {
        Vec::new()
    } else {
        flatten(&train_caps)
    };
    let opts = svd_options(&a.svd);

    let rows: Vec<SweepRow> = ms
        .par_iter()
        .map(|&m| SweepRow {
            m,
            bleu: sweep_one(
                m, &moments, cli.seed, &opts, &inventory, &q, &dev, &dev_refs, &pool, &config,
            ),
        })
        .collect();

    let mut table = String::from("m\tbleu\tstatus\n");
    let mut best: Option<(usize, f64)> = None;
    for row in rows {
        match row.bleu {
            Ok(b) => {
                writeln!(table, "{}\t{b}\tok", row.m).unwrap();
                if best.is_none_or(|(_, bb)| b > bb) {
                    best = Some((row.m, b));
                }
            }
            Err(e) if a.continue_on_error => {
                log::error!("m = {}: {e}", row.m);
                writeln!(
                    table,
                    "{}\tNA\t{}",
                    row.m,
                    e.to_string().replace(['\t', '\n'], " ")
                )
                .unwrap();
            }
            Err(e) => return Err(e),
        }
    }
    write_text(&a.output, &table)?;
    print!("{table}");
    match best {
        Some((m, b)) => println!("argmax m = {m} (dev BLEU {b:.2})"),
        None => println!("no m value succeeded"),
    }
    write_meta(
        cli,
        &a.output,
        &[
            &a.features,
            &a.captions,
            &a.inventory,
            &a.table,
            &a.manifest,
        ],
        &[&a.output],
        json!({
            "decoder_config": config,
            "m_values": ms,
            "argmax_m": best.map(|(m, _)| m),
            "argmax_bleu": best.map(|(_, b)| b),
        }),
    )
}

pub(super) fn inspect(cli: &Cli, a: &InspectArgs) -> Result<()> {
    let mut out = String::new();
    let mut inputs = Vec::new();
    if let Some(p) = &a.model {
        let model = read_model(p)?;
        writeln!(
            out,
            "model {}: m = {}, input dim {} ({} retained), output dim {} ({} retained)",
            p.display(),
            model.m(),
            model.input_dim(),
            model.retained_input().len(),
            model.output_dim(),
            model.retained_output().len()
        )
        .unwrap();
        writeln!(out, "sigma: {:?}", model.sigma()).unwrap();
        inputs.push(p.as_path());
    }
    if let Some(p) = &a.table {
        let q = read_context_table(p)?;
        writeln!(
            out,
            "table {}: {} contexts, domain size {}, {} distinct phrases",
            p.display(),
            q.total_contexts(),
            q.domain_size(),
            q.phrase_inventory().len()
        )
        .unwrap();
        inputs.push(p.as_path());
    }
    if let Some(p) = &a.inventory {
        let inv = load_phrase_inventory(p)?;
        writeln!(
            out,
            "inventory {}: {} phrases, max length {}, digest {}",
            p.display(),
            inv.len(),
            inv.max_len(),
            inv.digest()
        )
        .unwrap();
        inputs.push(p.as_path());
    }
    if inputs.is_empty() {
        return Err(Error::InvalidParameter(
            "inspect needs --model, --table or --inventory".into(),
        ));
    }
    print!("{out}");
    if let Some(o) = &a.output {
        write_text(o, &out)?;
        write_meta(cli, o, &inputs, &[o], json!({}))?;
    }
    Ok(())
}
