use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{Check, Report, Table, Value};
use super::scenario::{random_instance, random_node, stream_seed, Scenario};
use crate::aoi::{
    average_aoi, average_service_latency, data_size, discrete_cycle_oracle, satisfaction, slot_form_aoi,
    slot_form_latency, CycleParams, SatisfactionParams,
};
use crate::env::{agent_name, EnvConfig};
use crate::error::{Error, Result};
use crate::flsim::{generate_dataset, partition_data, read_samples, run_federated, shard_sizes, split_dataset};
use crate::flsim::{DataConfig, Dataset, FlConfig, RoundRecord};
use crate::game::{
    baseline_strategy, best_response, node_utility, select_nodes, server_utility, solve_equilibrium,
    verify_equilibrium, BaselineKind, Binding, NodeParams, ServerParams, StrategyProfile, TaskParams,
};
use crate::maddpg::{train, write_agents, MaddpgConfig};
use crate::num::sig6;

use super::scenario::bad;

fn frac(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// True when the differences never turn from falling back to rising.
pub fn unimodal(values: &[f64]) -> bool {
    let mut falling = false;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d < 0.0 {
            falling = true;
        } else if d > 0.0 && falling {
            return false;
        }
    }
    true
}

pub(crate) fn satisfaction_curves(sc: &Scenario, report: &mut Report) -> Result<()> {
    let sec = sc.satisfaction.clone().unwrap_or_default();
    let task = sc.task();
    let s = &sc.server;
    let mut table = Table::new("satisfaction", &["theta", "a", "d", "rho", "satisfaction"]);
    let mut peaks = Vec::new();
    let mut shape_failures = Vec::new();
    for &a in &sec.idle_slots {
        for &d in &sec.rates {
            for &rho in &sec.quality_scales {
                let params = SatisfactionParams::new(s.quality_weight, s.latency_weight, rho);
                let span = a as f64 * task.slot;
                let mut curve = Vec::with_capacity(sec.points);
                for k in 0..sec.points {
                    let theta = span + sec.span * (k + 1) as f64 / sec.points as f64;
                    let g = satisfaction(&CycleParams::new(theta, a, task.slot, task.horizon, d), &params)?;
                    table.push(vec![theta.into(), a.into(), d.into(), rho.into(), g.into()]);
                    curve.push(g);
                }
                if !unimodal(&curve) {
                    shape_failures.push(format!("(a={a}, d={d}, rho={rho})"));
                }
                peaks.push(((a, d, rho), curve.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
            }
        }
    }
    let total = peaks.len();
    report.checks.push(Check::new(
        "satisfaction_unimodal",
        shape_failures.is_empty(),
        if shape_failures.is_empty() {
            format!("{total} curves rise then fall at most once")
        } else {
            format!("not unimodal: {}", shape_failures.join(", "))
        },
    ));

    let peak = |a: u32, d: f64, rho: f64| peaks.iter().find(|p| p.0 == (a, d, rho)).map(|p| p.1).unwrap();
    let mut a_sorted = sec.idle_slots.clone();
    a_sorted.sort_unstable();
    let mut d_sorted = sec.rates.clone();
    d_sorted.sort_by(f64::total_cmp);
    let (mut a_bad, mut d_bad) = (Vec::new(), Vec::new());
    for &d in &sec.rates {
        for &rho in &sec.quality_scales {
            for w in a_sorted.windows(2) {
                if peak(w[1], d, rho) >= peak(w[0], d, rho) {
                    a_bad.push(format!("a {}->{} at d={d}, rho={rho}", w[0], w[1]));
                }
            }
        }
    }
    for &a in &sec.idle_slots {
        for &rho in &sec.quality_scales {
            for w in d_sorted.windows(2) {
                if peak(a, w[1], rho) <= peak(a, w[0], rho) {
                    d_bad.push(format!("d {}->{} at a={a}, rho={rho}", w[0], w[1]));
                }
            }
        }
    }
    report.checks.push(Check::new(
        "peak_falls_with_idle_slots",
        a_bad.is_empty(),
        if a_bad.is_empty() { "every peak drops as a grows".to_string() } else { a_bad.join("; ") },
    ));
    report.checks.push(Check::new(
        "peak_rises_with_rate",
        d_bad.is_empty(),
        if d_bad.is_empty() { "every peak climbs as d grows".to_string() } else { d_bad.join("; ") },
    ));
    report.tables.push(table);
    Ok(())
}

pub(crate) fn mechanism_sweep(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.mechanism.clone().unwrap_or_default();
    let pool = sc.pool();
    let task = sc.task();
    let mut counts = sec.counts.clone();
    counts.sort_unstable();
    counts.dedup();

    let mut columns: Vec<String> = ["budget", "instance", "count", "proposed"].map(String::from).to_vec();
    columns.extend(BaselineKind::ALL.iter().map(|k| k.name().to_string()));
    columns.push("margin".into());
    let mut per_instance = Table::with_columns("utility", columns.clone());
    columns.remove(1);
    let mut means = Table::with_columns("utility_mean", columns);

    let mut baseline_wins = Vec::new();
    let mut comparisons = 0;
    for &budget in &sec.budgets {
        let mut margin_hits = 0;
        let mut instance_margins = Vec::with_capacity(sec.instances);
        let mut peak_hits = 0;
        let mut sums = vec![vec![0.0; 6]; counts.len()];
        for k in 0..sec.instances {
            let inst_seed = stream_seed(seed, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
            let (nodes, server) = random_instance(&pool, &sc.server, budget, &task, &mut rng);
            let mut proposed_curve = Vec::with_capacity(counts.len());
            let mut margin_sum = 0.0;
            for (ci, &n) in counts.iter().enumerate() {
                let proposed = select_nodes(&nodes, n, &server, &task)?.1.value;
                let mut row: Vec<Value> = vec![budget.into(), k.into(), n.into(), proposed.into()];
                let mut best_base = f64::NEG_INFINITY;
                sums[ci][0] += proposed;
                for (bi, kind) in BaselineKind::ALL.iter().enumerate() {
                    let v = baseline_strategy(*kind, &nodes, n, &server, &task, stream_seed(inst_seed, n as u64))?.1.value;
                    comparisons += 1;
                    if v > proposed + 1e-9 * proposed.abs().max(1.0) {
                        baseline_wins.push(format!("{} at budget {budget}, instance {k}, n={n}", kind.name()));
                    }
                    best_base = best_base.max(v);
                    sums[ci][bi + 1] += v;
                    row.push(v.into());
                }
                let margin = (proposed - best_base) / best_base.abs().max(1e-12);
                sums[ci][5] += margin;
                margin_sum += margin;
                row.push(margin.into());
                per_instance.push(row);
                proposed_curve.push(proposed);
            }
            // at n = N a random subset is the full set, so single counts can tie
            let instance_margin = margin_sum / counts.len() as f64;
            if instance_margin > 0.0 {
                margin_hits += 1;
            }
            instance_margins.push(instance_margin);
            let top = proposed_curve
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > proposed_curve[best] { i } else { best });
            if counts.len() >= 3 && top > 0 && top + 1 < counts.len() {
                peak_hits += 1;
            }
        }
        for (ci, &n) in counts.iter().enumerate() {
            let mut row: Vec<Value> = vec![budget.into(), n.into()];
            row.extend(sums[ci].iter().map(|s| Value::Num(s / sec.instances as f64)));
            means.push(row);
        }
        let margin_share = frac(margin_hits, sec.instances);
        let peak_share = frac(peak_hits, sec.instances);
        let b = sig6(budget);
        if sec.assert_budgets.contains(&budget) {
            report.checks.push(Check::new(
                &format!("positive_margin_share_budget_{b}"),
                margin_share >= sec.min_margin_share,
                format!(
                    "{margin_hits}/{} instances with positive mean margin over the best baseline, median {} (need share >= {})",
                    sec.instances,
                    sig6(median(&instance_margins)),
                    sec.min_margin_share
                ),
            ));
            report.checks.push(Check::new(
                &format!("interior_peak_share_budget_{b}"),
                peak_share >= sec.min_peak_share,
                format!(
                    "{peak_hits}/{} instances peak strictly inside the counts (need share >= {})",
                    sec.instances, sec.min_peak_share
                ),
            ));
        } else {
            report.notes.push(format!(
                "budget {b}: {margin_hits}/{} instances with positive mean margin (median {}), {peak_hits}/{} with an interior peak",
                sec.instances,
                sig6(median(&instance_margins)),
                sec.instances
            ));
        }
    }
    let shown: Vec<&str> = baseline_wins.iter().take(5).map(String::as_str).collect();
    report.checks.push(Check::new(
        "proposed_dominates_baselines",
        baseline_wins.is_empty(),
        if baseline_wins.is_empty() {
            format!("no baseline beats the optimized mechanism in {comparisons} comparisons")
        } else {
            format!("{} of {comparisons} comparisons lost, e.g. {}", baseline_wins.len(), shown.join("; "))
        },
    ));
    report.tables.push(per_instance);
    report.tables.push(means);
    Ok(())
}

pub(crate) fn bid_sweep(sc: &Scenario, report: &mut Report) -> Result<()> {
    let sec = sc.bids.clone().unwrap_or_default();
    let task = sc.task();
    let span = sec.idle_slots as f64 * task.slot;
    let mut table = Table::new("bids", &["profit", "rate", "cost", "bid", "period", "server_utility"]);
    let mut corr = Table::new("bid_trend", &["profit", "rate", "spearman"]);
    let mut failures = Vec::new();
    for &profit in &sec.profits {
        for &rate in &sec.rates {
            let mut server = sc.server();
            server.profit = profit;
            let mut bids = Vec::with_capacity(sec.costs.len());
            for &cost in &sec.costs {
                let node = NodeParams {
                    cost,
                    idle_slots: sec.idle_slots,
                    rate,
                    period_min: span + 0.5,
                    period_max: span + 6.0,
                };
                let eq = solve_equilibrium(&[node], &server, &task)?;
                let (r, th) = (eq.profile.rewards[0], eq.profile.periods[0]);
                table.push(vec![profit.into(), rate.into(), cost.into(), r.into(), th.into(), eq.server_utility.into()]);
                bids.push(r);
            }
            let rho = spearman(&sec.costs, &bids);
            corr.push(vec![profit.into(), rate.into(), rho.into()]);
            if rho > sec.max_spearman {
                failures.push(format!("beta={profit}, d={rate}: {}", sig6(rho)));
            }
        }
    }
    let settings = sec.profits.len() * sec.rates.len();
    report.checks.push(Check::new(
        "bid_falls_with_cost",
        failures.is_empty(),
        if failures.is_empty() {
            format!("all {settings} settings have rank correlation <= {}", sec.max_spearman)
        } else {
            format!(
                "{}/{settings} settings above {}: {}",
                failures.len(),
                sec.max_spearman,
                failures.join("; ")
            )
        },
    ));
    report.tables.push(table);
    report.tables.push(corr);
    Ok(())
}

fn load_data(sc: &Scenario, seed: u64) -> Result<Dataset> {
    let sec = sc.federated.clone().unwrap_or_default();
    let d = &sec.data;
    match &d.path {
        Some(p) => {
            let path = if p.is_absolute() { p.clone() } else { sc.base_dir.join(p) };
            let file = std::fs::File::open(&path)
                .map_err(|e| bad("federated.data.path", format!("cannot open {}: {e}", path.display())))?;
            let samples = read_samples(std::io::BufReader::new(file))
                .map_err(|e| bad("federated.data.path", e.to_string()))?;
            split_dataset(samples, d.test_fraction, seed)
        }
        None => generate_dataset(
            &DataConfig {
                classes: d.classes,
                dim: d.dim,
                separation: d.separation,
                train_size: d.train_size,
                test_size: d.test_size,
            },
            seed,
        ),
    }
}

fn federate(
    sc: &Scenario,
    data: &Dataset,
    nodes: &[NodeParams],
    periods: &[f64],
    task: &TaskParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<RoundRecord>)> {
    let sec = sc.federated.clone().unwrap_or_default();
    let sizes = shard_sizes(nodes, periods, task)?;
    let shards = partition_data(&data.train, &sizes, seed).map_err(|e| match e {
        Error::Oversubscribed { requested, available } => bad(
            "federated.data.train_size",
            format!("shards need {requested} training samples but only {available} exist"),
        ),
        other => other,
    })?;
    let config = FlConfig {
        local_epochs: sec.local_epochs,
        learning_rate: sec.learning_rate,
        rounds: sec.rounds,
        compute_rates: vec![sec.compute_rate; nodes.len()],
        overhead: sec.overhead,
    };
    let (_, records) = run_federated(&config, &shards, &data.test, data.classes)?;
    Ok((sizes, records))
}

fn loss_decrease_share(records: &[RoundRecord]) -> f64 {
    let falls = records.windows(2).filter(|w| w[1].global_loss < w[0].global_loss).count();
    frac(falls, records.len().saturating_sub(1))
}

/// Subset and periods a scheme picks from the candidates.
fn scheme_choice(
    scheme: &str,
    nodes: &[NodeParams],
    count: usize,
    server: &ServerParams,
    task: &TaskParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    match scheme {
        "proposed" => {
            let (subset, alloc) = select_nodes(nodes, count, server, task)?;
            Ok((subset, alloc.profile.periods))
        }
        // nobody is paid, so every node stretches to its longest period
        "no_incentive" => {
            let subset: Vec<usize> = (0..count).collect();
            let periods = subset.iter().map(|&i| best_response(&nodes[i], 0.0)).collect();
            Ok((subset, periods))
        }
        other => {
            let kind: BaselineKind = other.parse()?;
            let (subset, alloc) = baseline_strategy(kind, nodes, count, server, task, seed)?;
            Ok((subset, alloc.profile.periods))
        }
    }
}

pub(crate) fn federated_sweep(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.federated.clone().unwrap_or_default();
    let task = sc.task();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    let (nodes, server) = random_instance(&sc.pool(), &sc.server, sc.server.budget, &task, &mut rng);
    let data = load_data(sc, stream_seed(seed, 1))?;
    let mut counts = sec.counts.clone();
    counts.sort_unstable();
    counts.dedup();

    let mut times = Table::new(
        "training_time",
        &["scheme", "count", "samples", "round_time", "total_time", "final_loss", "final_accuracy"],
    );
    let mut curves =
        Table::new("accuracy", &["scheme", "count", "round", "modeled_time_cumulative", "global_loss", "test_accuracy"]);
    let mut proposed_acc = Vec::new();
    for scheme in &sec.schemes {
        for &n in &counts {
            let (subset, periods) = scheme_choice(scheme, &nodes, n, &server, &task, stream_seed(seed, 100 + n as u64))?;
            let chosen: Vec<NodeParams> = subset.iter().map(|&i| nodes[i]).collect();
            let (sizes, records) = federate(sc, &data, &chosen, &periods, &task, stream_seed(seed, 2))?;
            for r in &records {
                curves.push(vec![
                    scheme.as_str().into(),
                    n.into(),
                    r.round.into(),
                    r.time.into(),
                    r.global_loss.into(),
                    r.test_accuracy.into(),
                ]);
            }
            let last = records.last().expect("round 0 is always recorded");
            let step = if records.len() > 1 { records[1].time } else { 0.0 };
            times.push(vec![
                scheme.as_str().into(),
                n.into(),
                sizes.iter().sum::<usize>().into(),
                step.into(),
                last.time.into(),
                last.global_loss.into(),
                last.test_accuracy.into(),
            ]);
            if scheme == "proposed" {
                proposed_acc.push((n, last.test_accuracy));
            }
        }
    }
    if !proposed_acc.is_empty() {
        let low: Vec<String> = proposed_acc
            .iter()
            .filter(|(_, a)| *a < sec.min_accuracy)
            .map(|(n, a)| format!("n={n}: {}", sig6(*a)))
            .collect();
        let worst = proposed_acc.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        report.checks.push(Check::new(
            "proposed_accuracy_floor",
            low.is_empty(),
            if low.is_empty() {
                format!("lowest final accuracy {} >= {}", sig6(worst), sec.min_accuracy)
            } else {
                format!("below {}: {}", sec.min_accuracy, low.join("; "))
            },
        ));
    }
    report.tables.push(times);
    report.tables.push(curves);
    Ok(())
}

/// The scenario's explicit nodes, or a random pool instance.
fn instance(sc: &Scenario, seed: u64) -> (Vec<NodeParams>, ServerParams) {
    if sc.nodes.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
        random_instance(&sc.pool(), &sc.server, sc.server.budget, &sc.task(), &mut rng)
    } else {
        (sc.explicit_nodes(), sc.server())
    }
}

pub(crate) fn federated_run(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.federated.clone().unwrap_or_default();
    let task = sc.task();
    let (nodes, server) = instance(sc, seed);
    let eq = solve_equilibrium(&nodes, &server, &task)?;
    let data = load_data(sc, stream_seed(seed, 1))?;
    let (sizes, records) = federate(sc, &data, &nodes, &eq.profile.periods, &task, stream_seed(seed, 2))?;

    let mut shards = Table::new("shards", &["node", "reward", "period", "samples"]);
    for i in 0..nodes.len() {
        shards.push(vec![i.into(), eq.profile.rewards[i].into(), eq.profile.periods[i].into(), sizes[i].into()]);
    }
    let mut rounds = Table::new("rounds", &["round", "global_loss", "test_accuracy", "modeled_time_cumulative"]);
    for r in &records {
        rounds.push(vec![r.round.into(), r.global_loss.into(), r.test_accuracy.into(), r.time.into()]);
    }
    let last = records.last().expect("round 0 is always recorded");
    report.checks.push(Check::new(
        "final_accuracy",
        last.test_accuracy >= sec.min_accuracy,
        format!("{} after {} rounds (need >= {})", sig6(last.test_accuracy), last.round, sec.min_accuracy),
    ));
    let share = loss_decrease_share(&records);
    report.checks.push(Check::new(
        "loss_decrease_share",
        share >= sec.min_loss_decrease_share,
        format!("global loss fell in {} of rounds (need >= {})", sig6(share), sec.min_loss_decrease_share),
    ));
    report.tables.push(shards);
    report.tables.push(rounds);
    Ok(())
}

pub(crate) fn drl_run(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.drl.clone().unwrap_or_default();
    let task = sc.task();
    let nodes = sc.explicit_nodes();
    let server = sc.server();
    let eq = solve_equilibrium(&nodes, &server, &task)?;
    let mut env = EnvConfig::new(nodes.clone(), server, task)?;
    env.history = sec.history;
    env.max_steps = sec.steps;
    env.bid_cap = sec.bid_cap;
    env.share_bids = sec.share_bids;
    let config = MaddpgConfig {
        episodes: sec.episodes,
        batch: sec.batch,
        capacity: sec.capacity,
        gamma: sec.gamma,
        soft_rate: sec.soft_rate,
        hidden: sec.hidden,
        critic_rate: sec.critic_rate,
        actor_rate: sec.actor_rate,
        leader_rate: sec.leader_rate,
        warmup_episodes: sec.warmup_episodes,
        noise_start: sec.noise_start,
        noise_floor: sec.noise_floor,
        noise_decay_episodes: sec
            .noise_decay_episodes
            .unwrap_or((sec.episodes.saturating_sub(sec.warmup_episodes) as f64 * 0.7) as usize),
        logit_penalty: sec.logit_penalty,
        eval_every: sec.eval_every,
        eval_steps: sec.eval_steps,
        seed,
        ..MaddpgConfig::default()
    };
    let out = train(&config, &env)?;

    let n = nodes.len();
    let target = &eq.profile.rewards;
    let gap = |bids: &[f64]| {
        bids.iter().zip(target).map(|(b, r)| (b - r).abs() / r.abs().max(1e-12)).fold(0.0, f64::max)
    };
    let mut columns: Vec<String> = ["episode", "server_bid_gap_vs_SE", "server_utility", "server_value_ratio"].map(String::from).to_vec();
    columns.extend((0..n).map(|i| format!("bid_{i}")));
    columns.extend((0..n).map(|i| format!("period_{i}")));
    let mut conv = Table::with_columns("convergence", columns);
    for g in &out.evaluations {
        let mut row: Vec<Value> = vec![
            g.episode.into(),
            gap(&g.bids).into(),
            g.utilities[0].into(),
            (g.utilities[0] / eq.server_utility).into(),
        ];
        row.extend(g.bids.iter().map(|&b| Value::Num(b)));
        row.extend(g.periods.iter().map(|&p| Value::Num(p)));
        conv.push(row);
    }
    let mut log = Table::new("training_log", &["episode", "agent", "mean_reward", "action_summary", "noise_scale"]);
    for r in &out.log {
        let summary = r.mean_action.iter().map(|&v| sig6(v)).collect::<Vec<_>>().join(";");
        log.push(vec![r.episode.into(), agent_name(r.agent).into(), r.mean_reward.into(), summary.into(), r.noise.into()]);
    }
    let mut reference = Table::new("equilibrium", &["node", "reward", "period", "node_utility"]);
    for i in 0..n {
        reference.push(vec![
            i.into(),
            eq.profile.rewards[i].into(),
            eq.profile.periods[i].into(),
            eq.node_utilities[i].into(),
        ]);
    }

    match out.evaluations.last() {
        Some(last) => {
            let g = gap(&last.bids);
            let v = (last.utilities[0] - eq.server_utility).abs() / eq.server_utility.abs();
            let bids: Vec<String> = last.bids.iter().map(|&b| sig6(b)).collect();
            let want: Vec<String> = target.iter().map(|&b| sig6(b)).collect();
            report.checks.push(Check::new(
                "terminal_bid_gap",
                g <= sec.max_bid_gap,
                format!(
                    "episode {}: bids [{}] vs equilibrium [{}], largest relative gap {} (need <= {})",
                    last.episode,
                    bids.join(", "),
                    want.join(", "),
                    sig6(g),
                    sec.max_bid_gap
                ),
            ));
            report.checks.push(Check::new(
                "terminal_value_gap",
                v <= sec.max_value_gap,
                format!(
                    "server utility {} vs {}, relative gap {} (need <= {})",
                    sig6(last.utilities[0]),
                    sig6(eq.server_utility),
                    sig6(v),
                    sec.max_value_gap
                ),
            ));
        }
        None => {
            report.checks.push(Check::new("terminal_bid_gap", false, "no evaluation was run"));
            report.checks.push(Check::new("terminal_value_gap", false, "no evaluation was run"));
        }
    }
    let mut ckpt = Vec::new();
    write_agents(&mut ckpt, &out.agents)?;
    report.attachments.push(("agents.ckpt".into(), String::from_utf8(ckpt).expect("checkpoint text is ASCII")));
    report.tables.push(conv);
    report.tables.push(log);
    report.tables.push(reference);
    Ok(())
}

fn binding_label(b: &Binding) -> String {
    let names = [
        (b.budget, "budget"),
        (b.aoi, "aoi"),
        (b.latency, "latency"),
        (b.period_min, "period_min"),
        (b.period_max, "period_max"),
        (b.excluded, "excluded"),
    ];
    let on: Vec<&str> = names.iter().filter(|n| n.0).map(|n| n.1).collect();
    if on.is_empty() {
        "none".into()
    } else {
        on.join("|")
    }
}

pub(crate) fn equilibrium_run(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.equilibrium.clone().unwrap_or_default();
    let task = sc.task();
    let (nodes, server) = instance(sc, seed);
    let eq = solve_equilibrium(&nodes, &server, &task)?;
    let mut table = Table::new(
        "equilibrium",
        &[
            "node",
            "cost",
            "idle_slots",
            "rate",
            "reward",
            "period",
            "node_utility",
            "aoi",
            "latency",
            "samples",
            "satisfaction",
            "binding",
        ],
    );
    for (i, node) in nodes.iter().enumerate() {
        let th = eq.profile.periods[i];
        let cyc = node.cycle(&task, th);
        table.push(vec![
            i.into(),
            node.cost.into(),
            node.idle_slots.into(),
            node.rate.into(),
            eq.profile.rewards[i].into(),
            th.into(),
            eq.node_utilities[i].into(),
            average_aoi(&cyc)?.into(),
            average_service_latency(&cyc)?.into(),
            data_size(&cyc)?.into(),
            satisfaction(&cyc, &server.satisfaction)?.into(),
            binding_label(&eq.binding[i]).into(),
        ]);
    }
    report.notes.push(format!(
        "server utility {}, spend {} of budget {}, shadow price {}",
        sig6(eq.server_utility),
        sig6(eq.profile.spend()),
        sig6(server.budget),
        sig6(eq.shadow_price)
    ));
    let spend = eq.profile.spend();
    report.checks.push(Check::new(
        "budget_respected",
        spend <= server.budget * (1.0 + 1e-12),
        format!("spend {} of {}", sig6(spend), sig6(server.budget)),
    ));
    let verdict = verify_equilibrium(&eq, &nodes, &server, &task, sec.eps)?;
    report.checks.push(Check::new(
        "no_profitable_deviation",
        verdict.accepted(),
        if verdict.accepted() {
            format!("no unilateral grid deviation gains more than {}", sec.eps)
        } else {
            format!("{verdict:?}")
        },
    ));
    report.tables.push(table);
    Ok(())
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if *g.last().unwrap() < hi {
        g.push(hi);
    }
    g
}

/// Best (reward, period, server value) over a reward grid when the node
/// answers each reward with its best period on a period grid.
pub fn grid_single_node(
    node: &NodeParams,
    server: &ServerParams,
    task: &TaskParams,
    reward_step: f64,
    period_step: f64,
) -> Result<(f64, f64, f64)> {
    let periods = grid(node.period_min, node.period_max, period_step);
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for r in grid(node.cost / node.period_max, node.cost / node.period_min, reward_step) {
        let mut th = periods[0];
        let mut u = f64::NEG_INFINITY;
        for &p in &periods {
            let v = node_utility(r, p, node.cost)?;
            if v > u {
                u = v;
                th = p;
            }
        }
        let profile = StrategyProfile { rewards: vec![r], periods: vec![th] };
        let v = server_utility(&profile, std::slice::from_ref(node), server, task)?;
        if v > best.2 {
            best = (r, th, v);
        }
    }
    Ok(best)
}

/// Periods tried against each best response.
const BR_GRID_POINTS: usize = 10_000;

pub(crate) fn oracle_run(sc: &Scenario, seed: u64, report: &mut Report) -> Result<()> {
    let sec = sc.oracle.clone().unwrap_or_default();
    let task = sc.task();
    let mut pool = sc.pool();
    pool.size = 1;

    let mut single = Table::new(
        "single_node",
        &[
            "instance",
            "cost",
            "idle_slots",
            "rate",
            "rho",
            "solver_reward",
            "grid_reward",
            "solver_period",
            "grid_period",
            "solver_value",
            "grid_value",
        ],
    );
    let mut misses = Vec::new();
    for k in 0..sec.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, k as u64));
        let (nodes, server) = random_instance(&pool, &sc.server, sc.server.budget, &task, &mut rng);
        let eq = solve_equilibrium(&nodes, &server, &task)?;
        let (r, th, v) = (eq.profile.rewards[0], eq.profile.periods[0], eq.server_utility);
        let (gr, gth, gv) = grid_single_node(&nodes[0], &server, &task, sec.reward_step, sec.period_step)?;
        let n = &nodes[0];
        single.push(vec![
            k.into(),
            n.cost.into(),
            n.idle_slots.into(),
            n.rate.into(),
            server.satisfaction.quality_scale.into(),
            r.into(),
            gr.into(),
            th.into(),
            gth.into(),
            v.into(),
            gv.into(),
        ]);
        let mut off = Vec::new();
        if (r - gr).abs() > sec.reward_tol {
            off.push(format!("reward {} vs {}", sig6(r), sig6(gr)));
        }
        if (th - gth).abs() > sec.period_tol {
            off.push(format!("period {} vs {}", sig6(th), sig6(gth)));
        }
        if (v - gv).abs() > sec.value_rel_tol * gv.abs().max(1e-12) {
            off.push(format!("value {} vs {}", sig6(v), sig6(gv)));
        }
        if !off.is_empty() {
            misses.push(format!("{k} ({})", off.join(", ")));
        }
    }
    report.checks.push(Check::new(
        "single_node_matches_grid",
        misses.is_empty(),
        if misses.is_empty() {
            format!(
                "{} instances within {} in reward, {} in period, {} relative in value",
                sec.instances, sec.reward_tol, sec.period_tol, sec.value_rel_tol
            )
        } else {
            format!("{} of {} instances off the grid optimum: {}", misses.len(), sec.instances, misses.join("; "))
        },
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
    let mut beaten = 0;
    for _ in 0..sec.draws {
        let node = random_node(&pool, &task, &mut rng);
        let r = rng.random_range(0.5 * node.cost / node.period_max..=1.5 * node.cost / node.period_min);
        let th = best_response(&node, r);
        let here = node_utility(r, th, node.cost)?;
        for k in 0..BR_GRID_POINTS {
            let p = node.period_min + (node.period_max - node.period_min) * k as f64 / (BR_GRID_POINTS - 1) as f64;
            if node_utility(r, p, node.cost)? > here + 1e-6 {
                beaten += 1;
                break;
            }
        }
    }
    report.checks.push(Check::new(
        "best_response_beats_grid",
        beaten == 0,
        format!("{beaten} of {} draws had a better grid period", sec.draws),
    ));

    let mut cycle = Table::new(
        "cycle",
        &[
            "c",
            "a",
            "oracle_aoi",
            "slot_form_aoi",
            "canonical_aoi",
            "oracle_latency",
            "slot_form_latency",
            "canonical_latency",
        ],
    );
    let t = task.slot;
    let mut worst: f64 = 0.0;
    for c in 1..=sec.max_collection_slots {
        for a in 1..=8u32 {
            let o = discrete_cycle_oracle(c, a, t)?;
            let cyc = CycleParams::new((c + a) as f64 * t, a, t, task.horizon, 1.0);
            let (sa, sl) = (slot_form_aoi(c, a, t), slot_form_latency(c, a, t));
            worst = worst.max((o.aoi - sa).abs()).max((o.latency - sl).abs());
            cycle.push(vec![
                c.into(),
                a.into(),
                o.aoi.into(),
                sa.into(),
                average_aoi(&cyc)?.into(),
                o.latency.into(),
                sl.into(),
                average_service_latency(&cyc)?.into(),
            ]);
        }
    }
    report.checks.push(Check::new(
        "slot_forms_match_oracle",
        worst <= 1e-12,
        format!("largest difference {worst:e}"),
    ));
    let o = discrete_cycle_oracle(3, 2, 1.0)?;
    let cyc = CycleParams::new(5.0, 2, 1.0, task.horizon, 1.0);
    let (ca, cl) = (average_aoi(&cyc)?, average_service_latency(&cyc)?);
    let known = (o.aoi - 1.2).abs() <= 1e-12
        && (o.latency - 2.2).abs() <= 1e-12
        && (ca - 2.0).abs() <= 1e-12
        && (cl - 5.8).abs() <= 1e-12;
    report.checks.push(Check::new(
        "canonical_divergence_at_c3_a2",
        known,
        format!(
            "slot enumeration gives AoI {} and latency {}; the period forms give {} and {}",
            sig6(o.aoi),
            sig6(o.latency),
            sig6(ca),
            sig6(cl)
        ),
    ));
    report.tables.push(single);
    report.tables.push(cycle);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
        // ties take the average rank: x ranks 1,2,3; y ranks 1.5,1.5,3
        let r = spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn unimodal_shapes() {
        assert!(unimodal(&[1.0, 2.0, 3.0, 2.0, 1.0]));
        assert!(unimodal(&[1.0, 2.0, 3.0]));
        assert!(unimodal(&[3.0, 2.0, 2.0, 1.0]));
        assert!(!unimodal(&[1.0, 0.0, 1.0]));
        assert!(!unimodal(&[1.0, 2.0, 1.0, 2.0]));
    }

    #[test]
    fn grid_search_tracks_best_response() {
        let node = NodeParams { cost: 4.0, idle_slots: 2, rate: 80.0, period_min: 2.5, period_max: 8.0 };
        let server = ServerParams {
            satisfaction: SatisfactionParams::new(1.0, 20.0, 5.0),
            profit: 3.0,
            budget: 50.0,
            aoi_cap: f64::INFINITY,
            latency_cap: f64::INFINITY,
        };
        let task = TaskParams::default();
        let (r, th, _) = grid_single_node(&node, &server, &task, 1e-3, 1e-2).unwrap();
        assert!((th - node.cost / r).abs() <= 5e-3 + 1e-12 || th == node.period_min || th == node.period_max);
        let eq = solve_equilibrium(&[node], &server, &task).unwrap();
        assert!((eq.profile.rewards[0] - r).abs() < 1e-2);
    }

    #[test]
    fn server_params_from_section() {
        use super::super::scenario::server_params;
        let s = super::super::scenario::ServerSection::default();
        let p = server_params(&s, 4.0, 9.0);
        assert_eq!(p.satisfaction.quality_scale, 4.0);
        assert_eq!(p.budget, 9.0);
        assert!(p.aoi_cap.is_infinite());
    }
}
