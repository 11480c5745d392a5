//! Relational execution of the effect phase.
//!
//! Each class with a script has one compiled plan per shipped profile
//! (identical plans are merged). The planner runs the active plan of every
//! class, partitioning the class's rows across worker threads, and keeps
//! per-node row counts. After each tick it compares the observed join
//! selectivities with the active profile's assumptions and switches to the
//! best-fitting profile once the mismatch has persisted long enough.

pub mod plan;
mod run;

use crate::analyze::Program;
use crate::effects::{EffectBuffer, FaultRecord};
use crate::interp::pc_of;
use crate::store::Snapshot;
use crate::value::{ClassId, ObjId};
use plan::{compile_class, Block, ClassPlan, Profile, Source, Step};
use run::{Counters, IndexCache, Worker};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// How the planner chooses among compiled plans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PlanMode {
    /// Switch between the uniform and clustered plans on observed statistics.
    Adaptive,
    Uniform,
    Clustered,
    /// No optimizer rewrites.
    Logical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PlanConfig {
    pub mode: PlanMode,
    /// Observed/assumed selectivity ratio (either way) that counts as a
    /// mismatch.
    pub deviation_factor: f64,
    /// Consecutive mismatched ticks before a switch.
    pub hysteresis_ticks: u32,
    /// Weight of the newest tick in the moving averages.
    pub decay_alpha: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            mode: PlanMode::Adaptive,
            deviation_factor: 4.0,
            hysteresis_ticks: 3,
            decay_alpha: 0.5,
        }
    }
}

impl PlanConfig {
    /// Ticks the moving average needs to move a factor of `deviation_factor`
    /// after a step change: ⌈log₂ factor⌉ at α = ½.
    pub fn decay_window(&self) -> u32 {
        let keep = (1.0 - self.decay_alpha).clamp(1e-9, 1.0 - 1e-9);
        (self.deviation_factor.ln() / -keep.ln()).ceil().max(0.0) as u32
    }
}

/// Statistics and selection state of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanState {
    pub active: Profile,
    /// Consecutive ticks the active plan has been mismatched.
    pub streak: u32,
    /// Per node of the active plan.
    pub last_rows: Vec<f64>,
    pub avg_rows: Vec<f64>,
    /// Moving average of observed selectivity, join nodes only.
    pub selectivity: Vec<Option<f64>>,
    /// Ticks observed since the plan became active.
    pub ticks_observed: u64,
}

impl PlanState {
    fn new(active: Profile, nodes: usize) -> PlanState {
        PlanState {
            active,
            streak: 0,
            last_rows: vec![0.0; nodes],
            avg_rows: vec![0.0; nodes],
            selectivity: vec![None; nodes],
            ticks_observed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanSwitch {
    pub class: String,
    pub from: Profile,
    pub to: Profile,
    /// Observed selectivity per join node of the old plan.
    pub observed: Vec<f64>,
}

struct ClassPlans {
    plans: Vec<ClassPlan>,
    state: PlanState,
}

impl ClassPlans {
    fn plan(&self, p: Profile) -> &ClassPlan {
        self.plans.iter().find(|x| x.profile == p).unwrap_or(&self.plans[0])
    }
}

pub struct Planner {
    pub config: PlanConfig,
    classes: Vec<Option<ClassPlans>>,
}

/// Output of one relational effect phase.
pub struct PhaseOutput {
    pub buffer: EffectBuffer,
    pub switches: Vec<PlanSwitch>,
}

impl Planner {
    pub fn new(program: &Program, config: PlanConfig) -> Planner {
        let profiles: &[Profile] = match config.mode {
            PlanMode::Adaptive => &Profile::SHIPPED,
            PlanMode::Uniform => &[Profile::Uniform],
            PlanMode::Clustered => &[Profile::Clustered],
            PlanMode::Logical => &[Profile::Logical],
        };
        let classes = program
            .classes
            .iter()
            .map(|c| {
                c.body.as_ref()?;
                let mut plans: Vec<ClassPlan> = Vec::new();
                let mut seen = HashSet::new();
                for &p in profiles {
                    let plan = compile_class(program, c.id, p);
                    if seen.insert(plan.signature()) {
                        plans.push(plan);
                    }
                }
                let active = profiles[0];
                let nodes = plans[0].nodes.len();
                Some(ClassPlans {
                    plans,
                    state: PlanState::new(active, nodes),
                })
            })
            .collect();
        Planner { config, classes }
    }

    /// The plan the next tick will run for a class.
    pub fn active(&self, class: ClassId) -> Option<&ClassPlan> {
        let c = self.classes.get(class.0 as usize)?.as_ref()?;
        Some(c.plan(c.state.active))
    }

    /// Every distinct compiled plan of a class.
    pub fn plans(&self, class: ClassId) -> &[ClassPlan] {
        self.classes
            .get(class.0 as usize)
            .and_then(|c| c.as_ref())
            .map_or(&[], |c| c.plans.as_slice())
    }

    pub fn state(&self, class: ClassId) -> Option<&PlanState> {
        Some(&self.classes.get(class.0 as usize)?.as_ref()?.state)
    }

    /// Selection state of every class with a script, for checkpoints.
    pub fn states(&self) -> Vec<Option<PlanState>> {
        self.classes.iter().map(|c| c.as_ref().map(|c| c.state.clone())).collect()
    }

    pub fn restore_states(&mut self, states: Vec<Option<PlanState>>) -> Result<(), String> {
        if states.len() != self.classes.len() {
            return Err("plan state does not match the program".into());
        }
        for (slot, st) in self.classes.iter_mut().zip(states) {
            match (slot, st) {
                (None, None) => {}
                (Some(c), Some(st)) => {
                    if !c.plans.iter().any(|p| p.profile == st.active) && c.plans.len() > 1 {
                        return Err(format!("no {} plan to restore", st.active.name()));
                    }
                    if st.avg_rows.len() != c.plan(st.active).nodes.len() {
                        return Err("plan state does not match the compiled plan".into());
                    }
                    c.state = st;
                }
                _ => return Err("plan state does not match the program".into()),
            }
        }
        Ok(())
    }

    /// JSON dump of a class's active plan with average row counts.
    pub fn plan_json(&self, program: &Program, class: ClassId) -> Option<serde_json::Value> {
        let c = self.classes.get(class.0 as usize)?.as_ref()?;
        let plan = c.plan(c.state.active);
        let mut j = plan.to_json(program, Some(&c.state.avg_rows));
        j["streak"] = serde_json::json!(c.state.streak);
        j["mode"] = serde_json::json!(self.config.mode);
        Some(j)
    }

    /// Runs the effect phase of every class and updates plan selection.
    pub fn execute(&mut self, program: &Program, snap: &Snapshot, seed: u64, workers: usize) -> PhaseOutput {
        let mut buffer = EffectBuffer::default();
        let mut switches = Vec::new();
        let config = self.config.clone();
        for slot in self.classes.iter_mut() {
            let Some(cp) = slot else { continue };
            let plan = cp.plan(cp.state.active);
            let (out, counters) = run_plan(program, snap, plan, seed, workers);
            buffer.append(out);
            cp.observe(&counters, &config);
            if config.mode == PlanMode::Adaptive {
                if let Some(s) = cp.select(program, &config) {
                    switches.push(s);
                }
            }
        }
        buffer.canonicalize();
        PhaseOutput { buffer, switches }
    }
}

impl ClassPlans {
    fn observe(&mut self, counters: &Counters, config: &PlanConfig) {
        let alpha = config.decay_alpha;
        let plan = self.plan(self.state.active).clone();
        let first = self.state.ticks_observed == 0;
        let st = &mut self.state;
        for (i, &r) in counters.rows.iter().enumerate() {
            let r = r as f64;
            st.last_rows[i] = r;
            st.avg_rows[i] = if first { r } else { alpha * r + (1.0 - alpha) * st.avg_rows[i] };
        }
        for n in plan.join_nodes() {
            let i = n.id as usize;
            let pairs = counters.pairs[i];
            if pairs == 0 {
                continue;
            }
            let obs = counters.rows[i] as f64 / pairs as f64;
            st.selectivity[i] = Some(match st.selectivity[i] {
                None => obs,
                Some(prev) => alpha * obs + (1.0 - alpha) * prev,
            });
        }
        self.state.ticks_observed += 1;
    }

    /// Decides whether to switch plans after a tick.
    fn select(&mut self, program: &Program, config: &PlanConfig) -> Option<PlanSwitch> {
        let active = self.state.active;
        let plan = self.plan(active);
        let class = plan.class;
        let observed: Vec<(f64, plan::JoinShape)> = plan
            .join_nodes()
            .filter_map(|n| self.state.selectivity[n.id as usize].map(|s| (s, n.join.unwrap())))
            .collect();
        let misfit = |p: Profile| -> f64 {
            observed
                .iter()
                .map(|(s, shape)| (s.max(1e-9) / shape.assumed(p)).ln().abs())
                .sum()
        };
        let limit = config.deviation_factor.ln();
        let deviates = observed
            .iter()
            .any(|(s, shape)| (s.max(1e-9) / shape.assumed(active)).ln().abs() >= limit);
        let mut best = active;
        for &p in &Profile::SHIPPED {
            if misfit(p) < misfit(best) {
                best = p;
            }
        }
        let same_plan = self.plan(best).signature() == plan.signature();
        if !deviates || best == active || same_plan {
            self.state.streak = 0;
            return None;
        }
        self.state.streak += 1;
        if self.state.streak < config.hysteresis_ticks {
            return None;
        }
        let switch = PlanSwitch {
            class: program.class(class).name.clone(),
            from: active,
            to: best,
            observed: observed.iter().map(|(s, _)| *s).collect(),
        };
        let nodes = self.plan(best).nodes.len();
        self.state = PlanState::new(best, nodes);
        Some(switch)
    }
}

fn collect_indexes(block: &Block, out: &mut Vec<(ClassId, Vec<u32>)>) {
    for s in &block.0 {
        match s {
            Step::Branch { then, els, .. } => {
                collect_indexes(then, out);
                collect_indexes(els, out);
            }
            Step::Atomic { body, .. } => collect_indexes(body, out),
            Step::Accum(a) => {
                for l in &a.levels {
                    if let Source::Index { class, dims, .. } = &l.source {
                        out.push((*class, dims.clone()));
                    }
                }
                collect_indexes(&a.body, out);
                collect_indexes(&a.after, out);
            }
            _ => {}
        }
    }
}

/// Rows per worker below which extra threads do not pay off.
const MIN_ROWS_PER_WORKER: usize = 64;

/// Runs one class plan over all rows of its class. Outputs of faulted
/// objects are removed and replaced by fault records.
pub(crate) fn run_plan(program: &Program, snap: &Snapshot, plan: &ClassPlan, seed: u64, workers: usize) -> (EffectBuffer, Counters) {
    let mut wanted = Vec::new();
    collect_indexes(&plan.prelude, &mut wanted);
    for (_, b) in &plan.segments {
        collect_indexes(b, &mut wanted);
    }
    let mut indexes = IndexCache::new();
    for key in wanted {
        if let std::collections::hash_map::Entry::Vacant(slot) = indexes.entry(key) {
            let ix = snap.index(slot.key().0, &slot.key().1).expect("planner only indexes number fields");
            slot.insert(ix);
        }
    }

    let t = snap.table(plan.class);
    let n = t.len();
    let pcs: Vec<usize> = (0..n).map(|r| pc_of(program, snap, plan.class, r)).collect();
    let parts = workers.max(1).min(n.div_ceil(MIN_ROWS_PER_WORKER)).max(1);
    let bounds: Vec<(usize, usize)> = (0..parts).map(|k| (k * n / parts, (k + 1) * n / parts)).collect();
    let run_part = |(lo, hi): (usize, usize)| {
        let mut w = Worker::new(program, snap, plan, seed, &indexes);
        let rows: Vec<u32> = (lo as u32..hi as u32).collect();
        w.run(&rows, &pcs[lo..hi]);
        (w.out, w.faults, w.counters)
    };
    let results: Vec<_> = if parts == 1 {
        vec![run_part(bounds[0])]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = bounds.iter().map(|&b| s.spawn(move || run_part(b))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let mut out = EffectBuffer::default();
    let mut counters = Counters::new(plan.nodes.len());
    let mut faulted: HashSet<ObjId> = HashSet::new();
    for (buf, faults, c) in results {
        out.append(buf);
        counters.add(&c);
        for (row, fault) in faults {
            let object = t.ids[row as usize];
            faulted.insert(object);
            out.faults.push(FaultRecord {
                class: plan.class,
                object,
                fault,
            });
        }
    }
    if !faulted.is_empty() {
        out.entries.retain(|e| !faulted.contains(&e.source));
        out.spawns.retain(|e| !faulted.contains(&e.source));
        out.destroys.retain(|e| !faulted.contains(&e.source));
    }
    (out, counters)
}
