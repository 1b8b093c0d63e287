use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use raro_core::rollout::{Budgets, CriticOptions, PromptMode};
use raro_core::seqmodel::Checkpoint;
use raro_core::tasks::{
    countdown_dataset, hidden_rule_dataset, load_dataset, save_dataset, CountdownSpec, Example, Sidecar,
};
use raro_core::trainer::{
    evaluate, format_warmup, train_raro, train_rl_logit, train_rlvr, train_sft, Method, RunDir, Splits,
    TrainConfig,
};
use raro_core::tts::{tts_eval, TournamentConfig};
use raro_core::{io, oracle, ModelState};
use serde_json::json;
use tracing::info;

use crate::{DataArgs, EvalArgs, GenDataArgs, MethodArg, ModeArg, OracleArgs, SplitArg, Task, TrainArgs, TtsArgs};

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    match a.task {
        Task::Countdown => {
            let spec = CountdownSpec::new(a.count, a.operands, a.min_operand, a.max_operand, a.target, a.seed);
            save_dataset(&a.out, &countdown_dataset(&spec)?)?;
        }
        Task::HiddenRule => {
            let (examples, rules) = hidden_rule_dataset(a.count, a.prompt_len, a.seed)?;
            save_dataset(&a.out, &examples)?;
            let sidecar = a.sidecar.clone().unwrap_or_else(|| sidecar_path(&a.out));
            io::write_jsonl(&sidecar, &rules)?;
        }
    }
    println!("{}", json!({ "out": a.out, "count": a.count }));
    Ok(())
}

fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".rules.jsonl");
    PathBuf::from(s)
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Raro => Method::Raro,
        MethodArg::Sft => Method::Sft,
        MethodArg::Rlvr => Method::Rlvr,
        MethodArg::RlLogit => Method::RlLogit,
    }
}

fn load_splits(d: &DataArgs) -> Result<Splits> {
    let examples = load_dataset(&d.data)?;
    let mut splits = Splits::from_examples(examples, d.validation, d.test)?;
    splits.sidecar = d.sidecar.as_deref().map(Sidecar::load).transpose()?;
    Ok(splits)
}

fn pick(splits: &Splits, which: SplitArg) -> Vec<Example> {
    match which {
        SplitArg::Train => splits.train.clone(),
        SplitArg::Validation => splits.validation.clone(),
        SplitArg::Test => splits.test.clone(),
        SplitArg::All => [&splits.train[..], &splits.validation, &splits.test].concat(),
    }
}

fn budgets(config: Option<&Path>) -> Result<Budgets> {
    Ok(match config {
        Some(p) => io::read_json::<TrainConfig>(p)?.budgets,
        None => TrainConfig::desk(Method::Raro, 0).budgets,
    })
}

fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let m = method(a.method);
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            // fields absent from the file fall back to the desk preset, not the
            // published defaults
            let mut base = serde_json::to_value(TrainConfig::desk(m, 0))?;
            merge(&mut base, value.take());
            serde_json::from_value::<TrainConfig>(base).with_context(|| format!("invalid config {}", p.display()))?
        }
        None => TrainConfig::desk(m, 0),
    };
    cfg.method = m;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(a)?;
    let splits = load_splits(&a.data)?;
    let run = RunDir::create(&a.out)?;
    let base = match &a.init {
        Some(p) => Checkpoint::load(p)?,
        None => {
            info!(steps = cfg.model.warmup_steps, "format warm-up");
            format_warmup(&splits.train, &cfg.model, cfg.seed)?
        }
    };
    run.save_checkpoint("base", &base, None)?;
    let (selected, mode) = match cfg.method {
        Method::Sft => (train_sft(&cfg, &splits, &base, Some(&run))?.state, PromptMode::Direct),
        Method::Raro => (train_raro(&cfg, &splits, &base, Some(&run))?.selected().clone(), PromptMode::Reasoning),
        Method::Rlvr => (train_rlvr(&cfg, &splits, &base, Some(&run))?.selected().clone(), PromptMode::Reasoning),
        Method::RlLogit => (train_rl_logit(&cfg, &splits, &base, Some(&run))?.selected().clone(), PromptMode::Reasoning),
    };
    run.save_checkpoint("selected", &selected, None)?;
    let score = test_score(&selected, &splits, mode, cfg.budgets)?;
    let summary = json!({
        "method": cfg.method.name(),
        "seed": cfg.seed,
        "prompt_mode": mode,
        "test_score": score,
        "checkpoint": run.checkpoint_path("selected"),
    });
    run.write_json("summary.json", &summary)?;
    println!("{summary}");
    Ok(())
}

/// `None` when the split is empty or the hidden rules are unavailable.
fn test_score(state: &ModelState, splits: &Splits, mode: PromptMode, budgets: Budgets) -> Result<Option<f64>> {
    if splits.test.is_empty() {
        return Ok(None);
    }
    let eval_mode = splits.eval_mode()?;
    if eval_mode == raro_core::trainer::EvalMode::HiddenRuleRate && splits.sidecar.is_none() {
        return Ok(None);
    }
    Ok(Some(evaluate(state, &splits.test, eval_mode, mode, budgets, splits.sidecar.as_ref())?))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let state = Checkpoint::load(&a.checkpoint)?;
    let splits = load_splits(&a.data)?;
    let split = pick(&splits, a.split);
    let mode = match a.mode {
        ModeArg::Reasoning => PromptMode::Reasoning,
        ModeArg::Direct => PromptMode::Direct,
    };
    let acc = evaluate(&state, &split, splits.eval_mode()?, mode, budgets(a.config.as_deref())?, splits.sidecar.as_ref())?;
    println!("{}", json!({ "examples": split.len(), "accuracy": acc }));
    Ok(())
}

pub fn tts(a: &TtsArgs) -> Result<()> {
    if a.n.iter().any(|&n| n == 0) || a.votes == 0 {
        bail!("candidate counts and votes must be at least 1");
    }
    let state = Checkpoint::load(&a.checkpoint)?;
    let splits = load_splits(&a.data)?;
    let split = pick(&splits, a.split);
    let budgets = budgets(a.config.as_deref())?;
    let options = CriticOptions {
        reasoning: true,
        allow_tie: true,
    };
    let mut rows = Vec::new();
    for &n in &a.n {
        let config = TournamentConfig {
            n_candidates: n,
            votes_per_match: a.votes,
            position_swap: a.position_swap,
            ..TournamentConfig::default()
        };
        rows.push(tts_eval(&state, &split, splits.sidecar.as_ref(), n, &config, budgets, options, a.seed)?);
    }
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(())
}

pub fn oracle_check(a: &OracleArgs) -> Result<()> {
    let reports = oracle::run_suite(a.seed, a.spaces);
    for r in &reports {
        println!(
            "{} {:<40} max error {:.3e} (tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_error,
            r.tolerance
        );
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} oracle check(s) failed");
    }
    Ok(())
}
