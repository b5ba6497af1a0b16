//! Trial-based evaluation, the dominance rule, and ablation tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{PolicyDriver, Selection};
use crate::distill::{make_ablation_configs, train_student, StudentConfig};
use crate::error::{Error, Result, ResultExt};
use crate::nn::PolicyNet;
use crate::parallel;
use crate::randomize::RandConfig;
use crate::render::{DomainId, ObservationStore, VisualDomain};
use crate::rng::{derive_seed, stream};
use crate::sim::{Environment, Terminal};

const Z95: f64 = 1.96;

/// Normal-approximation 95% half-width of a binomial proportion.
pub fn completion_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    Z95 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Wilson score 95% interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Normal,
    Wilson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub trials: usize,
    pub jitter: f64,
    pub seed: u64,
    #[serde(default)]
    pub ci: CiMethod,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            trials: 50,
            jitter: 0.05,
            seed: 0,
            ci: CiMethod::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub terminal: Terminal,
    pub lap_time: Option<f64>,
    pub steps: usize,
    /// Distance driven along the centerline before the episode ended.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub domain: DomainId,
    pub trials: usize,
    pub completions: usize,
    pub completion_rate: f64,
    /// Distance from the rate to the interval bounds (symmetric for the normal method).
    pub completion_ci: (f64, f64),
    pub avg_lap_time: Option<f64>,
    pub lap_time_half_width: Option<f64>,
    pub min_lap_time: Option<f64>,
    pub records: Vec<TrialRecord>,
}

impl EvalReport {
    /// Aggregate per-trial records.
    pub fn from_records(model_id: &str, domain: DomainId, records: Vec<TrialRecord>, ci: CiMethod) -> Self {
        let n = records.len();
        let laps: Vec<f64> = records.iter().filter_map(|r| r.lap_time).collect();
        let k = laps.len();
        let p = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let completion_ci = match ci {
            CiMethod::Normal => {
                let h = completion_half_width(p, n);
                (h, h)
            }
            CiMethod::Wilson => {
                let (lo, hi) = wilson_interval(k, n);
                (p - lo, hi - p)
            }
        };
        let (avg, half, min) = if k == 0 {
            (None, None, None)
        } else {
            let mean = laps.iter().sum::<f64>() / k as f64;
            let half = if k > 1 {
                let var = laps.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (k - 1) as f64;
                Z95 * (var / k as f64).sqrt()
            } else {
                0.0
            };
            let min = laps.iter().copied().fold(f64::INFINITY, f64::min);
            (Some(mean), Some(half), Some(min))
        };
        Self {
            model_id: model_id.to_string(),
            domain,
            trials: n,
            completions: k,
            completion_rate: p,
            completion_ci,
            avg_lap_time: avg,
            lap_time_half_width: half,
            min_lap_time: min,
            records,
        }
    }

    /// Average lap time, or +inf without any completed lap.
    pub fn lap_time_or_inf(&self) -> f64 {
        self.avg_lap_time.unwrap_or(f64::INFINITY)
    }
}

/// Greedy trials from the fixed start pose with timing jitter.
pub fn evaluate(
    policy: &PolicyNet<f32>,
    env: &Environment,
    domain: &VisualDomain,
    params: &EvalParams,
    model_id: &str,
) -> Result<EvalReport> {
    env.actions.check_outputs(policy.outputs())?;
    let mut env = env.clone();
    env.limits.jitter = params.jitter;
    let records = parallel::map_indexed(params.trials, |trial| {
        let mut rng = stream(params.seed, &[trial as u64]);
        let mut driver = PolicyDriver::new(policy, Selection::Greedy);
        let traj = env.run_episode(&mut driver, domain, &mut rng);
        let mut prev = traj.start.progress;
        let mut distance = 0.0;
        for s in &traj.steps {
            distance += env.track.progress_delta(prev, s.state.progress);
            prev = s.state.progress;
        }
        TrialRecord {
            trial,
            terminal: traj.terminal,
            lap_time: traj.lap_time,
            steps: traj.steps.len(),
            distance,
        }
    });
    Ok(EvalReport::from_records(model_id, domain.id.clone(), records, params.ci))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    ABetter,
    BBetter,
    NoWinner,
}

/// Strictly higher completion and strictly lower average lap time.
pub fn compare_values(a: (f64, f64), b: (f64, f64)) -> Dominance {
    if a.0 > b.0 && a.1 < b.1 {
        Dominance::ABetter
    } else if b.0 > a.0 && b.1 < a.1 {
        Dominance::BBetter
    } else {
        Dominance::NoWinner
    }
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Dominance> {
    if a.domain != b.domain {
        return Err(Error::Parameter(format!(
            "cannot compare reports from domains {} and {}",
            a.domain, b.domain
        )));
    }
    Ok(compare_values(
        (a.completion_rate, a.lap_time_or_inf()),
        (b.completion_rate, b.lap_time_or_inf()),
    ))
}

/// Label of a leave-one-out student relative to `AllRand`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationLabel {
    BetterThanAllRand,
    WorseThanAllRand,
    Mixed,
}

impl AblationLabel {
    pub fn from_dominance(d: Dominance) -> Self {
        match d {
            Dominance::ABetter => AblationLabel::BetterThanAllRand,
            Dominance::BBetter => AblationLabel::WorseThanAllRand,
            Dominance::NoWinner => AblationLabel::Mixed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationLabel::BetterThanAllRand => "better-than-AllRand",
            AblationLabel::WorseThanAllRand => "worse-than-AllRand",
            AblationLabel::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Teacher,
    Baseline,
    AllRand,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub checkpoint: String,
    pub model: String,
    pub role: ModelRole,
    pub train: EvalReport,
    pub test: EvalReport,
    /// Test-domain comparison against AllRand, for leave-one-out rows.
    pub label: Option<AblationLabel>,
    /// Test-domain comparison against the teacher, for student rows.
    pub vs_teacher: Option<Dominance>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Everything the ablation needs besides the teachers.
pub struct AblationSetup<'a> {
    pub env: &'a Environment,
    pub train_domain: &'a VisualDomain,
    pub test_domain: &'a VisualDomain,
    pub store: &'a ObservationStore,
    pub base: &'a RandConfig,
    pub student: &'a StudentConfig,
    pub eval: EvalParams,
    pub seed: u64,
}

/// Per teacher: evaluate it, train the baseline and the seven randomized
/// students, evaluate all of them on both domains, and label the rows.
pub fn run_ablation(teachers: &[(String, PolicyNet<f32>)], setup: &AblationSetup<'_>) -> Result<AblationTable> {
    let configs = make_ablation_configs(setup.base)?;
    let mut table = AblationTable::default();
    for (t_idx, (checkpoint, teacher)) in teachers.iter().enumerate() {
        let eval_both = |net: &PolicyNet<f32>, id: &str| -> Result<(EvalReport, EvalReport)> {
            Ok((
                evaluate(net, setup.env, setup.train_domain, &setup.eval, id)?,
                evaluate(net, setup.env, setup.test_domain, &setup.eval, id)?,
            ))
        };
        let (t_train, t_test) = eval_both(teacher, "Teacher").with_context(|| format!("checkpoint {checkpoint}: teacher"))?;
        let mut rows = vec![AblationRow {
            checkpoint: checkpoint.clone(),
            model: "Teacher".into(),
            role: ModelRole::Teacher,
            train: t_train,
            test: t_test.clone(),
            label: None,
            vs_teacher: None,
        }];
        let mut students = vec![("S (baseline)".to_string(), ModelRole::Baseline, RandConfig::none())];
        for (i, (name, cfg)) in configs.iter().enumerate() {
            let role = if i == 0 { ModelRole::AllRand } else { ModelRole::LeaveOneOut };
            students.push((name.clone(), role, cfg.clone()));
        }
        for (s_idx, (name, role, rand)) in students.into_iter().enumerate() {
            let context = || format!("checkpoint {checkpoint}, config {name}");
            let cfg = StudentConfig {
                randomization: rand,
                ..setup.student.clone()
            };
            let seed = derive_seed(setup.seed, &[t_idx as u64, s_idx as u64]);
            let run = train_student(teacher, setup.store, &cfg, seed).with_context(context)?;
            let (train, test) = eval_both(&run.student, &name).with_context(context)?;
            let vs_teacher = Some(compare(&test, &t_test)?);
            rows.push(AblationRow {
                checkpoint: checkpoint.clone(),
                model: name,
                role,
                train,
                test,
                label: None,
                vs_teacher,
            });
        }
        let all_rand = rows
            .iter()
            .find(|r| r.role == ModelRole::AllRand)
            .map(|r| r.test.clone())
            .expect("AllRand row exists");
        for row in rows.iter_mut().filter(|r| r.role == ModelRole::LeaveOneOut) {
            row.label = Some(AblationLabel::from_dominance(compare(&row.test, &all_rand)?));
        }
        table.rows.extend(rows);
    }
    Ok(table)
}

fn pct(r: &EvalReport) -> String {
    format!("{:.1} ± {:.1}", 100.0 * r.completion_rate, 100.0 * r.completion_ci.1)
}

fn lap(r: &EvalReport) -> String {
    match (r.avg_lap_time, r.lap_time_half_width) {
        (Some(a), Some(h)) => format!("{a:.2} ± {h:.2}"),
        _ => "-".into(),
    }
}

fn min_lap(r: &EvalReport) -> String {
    r.min_lap_time.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into())
}

fn opt_csv(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl AblationTable {
    pub const CSV_HEADER: &'static str = "checkpoint,model,role,domain,trials,completions,completion_rate,completion_half_width,avg_lap_time,lap_time_half_width,min_lap_time,label";

    /// One line per (row, domain).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            for r in [&row.train, &row.test] {
                let label = if r.domain == row.test.domain {
                    row.label.map(|l| l.as_str()).unwrap_or("")
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.4},{:.4},{},{},{},{}",
                    row.checkpoint,
                    row.model,
                    serde_json::to_value(row.role).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    r.domain,
                    r.trials,
                    r.completions,
                    r.completion_rate,
                    r.completion_ci.1,
                    opt_csv(r.avg_lap_time),
                    opt_csv(r.lap_time_half_width),
                    opt_csv(r.min_lap_time),
                    label
                );
            }
        }
        out
    }

    /// Test-domain table in the usual checkpoint / model layout.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<20} {:>16} {:>16} {:>9}  label",
            "checkpoint", "model", "completion (%)", "avg lap (s)", "min lap"
        );
        let mut last = None;
        for row in &self.rows {
            if last.as_ref() != Some(&row.checkpoint) {
                let _ = writeln!(out, "{}", "-".repeat(84));
                last = Some(row.checkpoint.clone());
            }
            let _ = writeln!(
                out,
                "{:<10} {:<20} {:>16} {:>16} {:>9}  {}",
                row.checkpoint,
                row.model,
                pct(&row.test),
                lap(&row.test),
                min_lap(&row.test),
                row.label.map(|l| l.as_str()).unwrap_or("")
            );
        }
        out
    }
}

/// Text table of reports, one line each.
pub fn reports_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<8} {:>16} {:>16} {:>9}",
        "model", "domain", "completion (%)", "avg lap (s)", "min lap"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<24} {:<8} {:>16} {:>16} {:>9}",
            r.model_id,
            r.domain.to_string(),
            pct(r),
            lap(r),
            min_lap(r)
        );
    }
    out
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,domain,trials,completions,completion_rate,completion_half_width,avg_lap_time,lap_time_half_width,min_lap_time\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{},{},{}",
            r.model_id,
            r.domain,
            r.trials,
            r.completions,
            r.completion_rate,
            r.completion_ci.1,
            opt_csv(r.avg_lap_time),
            opt_csv(r.lap_time_half_width),
            opt_csv(r.min_lap_time)
        );
    }
    out
}

/// `(iteration, completion, avg_lap)` rows for one domain.
pub fn curve_csv(points: &[(usize, &EvalReport)]) -> String {
    let mut out = String::from("iteration,completion_rate,avg_lap_time\n");
    for (it, r) in points {
        let _ = writeln!(out, "{},{:.4},{}", it, r.completion_rate, opt_csv(r.avg_lap_time));
    }
    out
}
