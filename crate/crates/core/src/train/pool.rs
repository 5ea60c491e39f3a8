use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nerf::{HashGridModel, ModelConfig};

use super::loss::LossReport;
use super::{object_seed, train_iteration, ObjectModel, TrainConfig, TrainingSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Queued,
    Running,
    Idle,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectStats {
    pub object_id: u32,
    pub status: TaskStatus,
    pub updates: usize,
    pub iterations: u64,
    pub train_ms: f64,
    pub mean_ms_per_iteration: f64,
    pub errors: Vec<String>,
}

struct Job {
    snapshot: Arc<TrainingSnapshot>,
    remaining: usize,
}

struct Slot {
    /// `None` while a worker holds the model.
    model: Option<(ObjectModel, ChaCha8Rng)>,
    queue: VecDeque<Job>,
    status: TaskStatus,
    updates: usize,
    granted: usize,
    log: Vec<(LossReport, f64)>,
    train_ms: f64,
    errors: Vec<String>,
}

impl Slot {
    fn ready(&self) -> bool {
        self.model.is_some() && !self.queue.is_empty()
    }
}

#[derive(Default)]
struct State {
    slots: BTreeMap<u32, Slot>,
    paused: bool,
    shutdown: bool,
    cursor: Option<u32>,
    running: usize,
}

impl State {
    /// Next ready object after the cursor, wrapping around.
    fn pick(&self) -> Option<u32> {
        let after = self.cursor.map_or(0, |c| c.saturating_add(1));
        let ready = |(id, s): (&u32, &Slot)| s.ready().then_some(*id);
        self.slots
            .range(after..)
            .find_map(ready)
            .or_else(|| self.slots.range(..after).find_map(ready))
    }
}

struct Shared {
    state: Mutex<State>,
    work: Condvar,
    changed: Condvar,
    train: TrainConfig,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Trains many objects at once. Submission only touches the queue, so the
/// producer never waits on training. Each object has its own FIFO of
/// updates and its own random stream, and workers take one iteration at a
/// time round-robin across objects, so per-object results do not depend on
/// the number of workers.
pub struct TrainerPool {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    model_config: ModelConfig,
}

impl TrainerPool {
    pub fn new(train: TrainConfig, model_config: ModelConfig) -> Result<Self> {
        train.validate()?;
        model_config.validate()?;
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            work: Condvar::new(),
            changed: Condvar::new(),
            train,
        });
        let workers = (0..train.worker_count)
            .map(|i| {
                let s = shared.clone();
                std::thread::Builder::new()
                    .name(format!("trainer-{i}"))
                    .spawn(move || worker_loop(&s))
                    .map_err(|e| Error::Config(format!("cannot spawn training worker: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shared,
            workers,
            model_config,
        })
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    /// Queues one update for the snapshot's object, creating its model on
    /// first use. Returns the number of iterations granted.
    pub fn submit(&self, snapshot: TrainingSnapshot) -> Result<usize> {
        let cfg = &self.shared.train;
        let id = snapshot.object_id;
        let mut st = self.shared.lock();
        if st.shutdown {
            return Err(Error::PoolShutdown);
        }
        if !st.slots.contains_key(&id) {
            let model = ObjectModel::new(id, self.model_config.clone(), object_seed(cfg.seed, id))?;
            let rng = ChaCha8Rng::seed_from_u64(object_seed(cfg.seed ^ 0x0DDB_1A5E_5BAD_5EED, id));
            st.slots.insert(
                id,
                Slot {
                    model: Some((model, rng)),
                    queue: VecDeque::new(),
                    status: TaskStatus::Idle,
                    updates: 0,
                    granted: 0,
                    log: Vec::new(),
                    train_ms: 0.0,
                    errors: Vec::new(),
                },
            );
        }
        let slot = st.slots.get_mut(&id).ok_or(Error::UnknownObject(id))?;
        let mut n = cfg.iterations_for_update(slot.updates);
        if let Some(cap) = cfg.max_iterations_per_object {
            n = n.min(cap.saturating_sub(slot.granted));
        }
        slot.updates += 1;
        slot.granted += n;
        if n > 0 {
            slot.queue.push_back(Job {
                snapshot: Arc::new(snapshot),
                remaining: n,
            });
            if slot.status == TaskStatus::Idle {
                slot.status = TaskStatus::Queued;
            }
        }
        drop(st);
        self.shared.work.notify_all();
        Ok(n)
    }

    pub fn pause(&self) {
        self.shared.lock().paused = true;
    }

    pub fn resume(&self) {
        self.shared.lock().paused = false;
        self.shared.work.notify_all();
    }

    /// Updates waiting or in progress, over all objects.
    pub fn queued_updates(&self) -> usize {
        self.shared.lock().slots.values().map(|s| s.queue.len()).sum()
    }

    pub fn queued_iterations(&self) -> usize {
        self.shared.lock().slots.values().flat_map(|s| s.queue.iter().map(|j| j.remaining)).sum()
    }

    pub fn status(&self, id: u32) -> Option<TaskStatus> {
        self.shared.lock().slots.get(&id).map(|s| s.status)
    }

    pub fn object_ids(&self) -> Vec<u32> {
        self.shared.lock().slots.keys().copied().collect()
    }

    /// Copy of the object's parameters at an iteration boundary. Waits only
    /// for the object's current iteration, if any.
    pub fn stop_and_snapshot(&self, id: u32) -> Result<HashGridModel> {
        let mut st = self.shared.lock();
        loop {
            match st.slots.get(&id) {
                None => return Err(Error::UnknownObject(id)),
                Some(Slot { model: Some((m, _)), .. }) => return Ok(m.model.clone()),
                Some(_) => st = self.shared.changed.wait(st).unwrap_or_else(|p| p.into_inner()),
            }
        }
    }

    /// Waits until the object has no queued work and returns its model.
    pub fn wait_idle_snapshot(&self, id: u32) -> Result<HashGridModel> {
        let mut st = self.shared.lock();
        loop {
            match st.slots.get(&id) {
                None => return Err(Error::UnknownObject(id)),
                Some(s) if s.queue.is_empty() || st.paused || self.workers.is_empty() => {
                    if let Some((m, _)) = &s.model {
                        return Ok(m.model.clone());
                    }
                }
                Some(_) => {}
            }
            st = self.shared.changed.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Forgets an object, dropping its queued work. An iteration already
    /// running finishes and is discarded.
    pub fn remove(&self, id: u32) -> Result<()> {
        let removed = self.shared.lock().slots.remove(&id);
        self.shared.changed.notify_all();
        removed.map(|_| ()).ok_or(Error::UnknownObject(id))
    }

    /// Blocks until every queue is empty. Returns `false` without waiting
    /// when no progress is possible (no workers, or paused).
    pub fn drain(&self) -> bool {
        let mut st = self.shared.lock();
        loop {
            let pending = st.running > 0 || st.slots.values().any(|s| !s.queue.is_empty());
            if !pending {
                return true;
            }
            if self.workers.is_empty() || st.paused || st.shutdown {
                return false;
            }
            st = self.shared.changed.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    pub fn stats(&self) -> Vec<ObjectStats> {
        let st = self.shared.lock();
        st.slots
            .iter()
            .map(|(id, s)| {
                let iterations = s.log.len() as u64;
                ObjectStats {
                    object_id: *id,
                    status: s.status,
                    updates: s.updates,
                    iterations,
                    train_ms: s.train_ms,
                    mean_ms_per_iteration: if iterations == 0 { 0.0 } else { s.train_ms / iterations as f64 },
                    errors: s.errors.clone(),
                }
            })
            .collect()
    }

    pub fn history(&self, id: u32) -> Result<Vec<LossReport>> {
        let st = self.shared.lock();
        let s = st.slots.get(&id).ok_or(Error::UnknownObject(id))?;
        Ok(s.log.iter().map(|(r, _)| *r).collect())
    }

    /// Per-iteration reports and wall times of every object.
    pub fn logs(&self) -> BTreeMap<u32, Vec<(LossReport, f64)>> {
        self.shared.lock().slots.iter().map(|(id, s)| (*id, s.log.clone())).collect()
    }

    /// Stops the workers after their current iteration. Queued work is kept
    /// but no longer run; later submissions are rejected.
    pub fn shutdown(&mut self) {
        {
            let mut st = self.shared.lock();
            st.shutdown = true;
            for s in st.slots.values_mut() {
                s.status = TaskStatus::Stopped;
            }
        }
        self.shared.work.notify_all();
        for h in self.workers.drain(..) {
            let _ = h.join();
        }
    }

    pub fn into_models(mut self) -> BTreeMap<u32, ObjectModel> {
        self.shutdown();
        let mut st = self.shared.lock();
        std::mem::take(&mut st.slots)
            .into_iter()
            .filter_map(|(id, s)| s.model.map(|(m, _)| (id, m)))
            .collect()
    }
}

/// Writes `<dir>/<object id>.csv` for every object.
pub fn write_train_logs(dir: &Path, logs: &BTreeMap<u32, Vec<(LossReport, f64)>>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, log) in logs {
        let mut text = String::from("iteration,L_rgb,L_depth,L_rr,L_density,L_total,wall_ms\n");
        for (r, ms) in log {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{:.4}",
                r.iteration, r.rgb, r.depth, r.random_color, r.density, r.total, ms
            );
        }
        let path = dir.join(format!("{id}.csv"));
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

impl Drop for TrainerPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn worker_loop(shared: &Shared) {
    let mut st = shared.lock();
    loop {
        if st.shutdown {
            return;
        }
        let picked = if st.paused { None } else { st.pick() };
        let Some(id) = picked else {
            st = shared.work.wait(st).unwrap_or_else(|p| p.into_inner());
            continue;
        };
        st.cursor = Some(id);
        let Some(slot) = st.slots.get_mut(&id) else { continue };
        let Some((mut model, mut rng)) = slot.model.take() else { continue };
        let Some(snapshot) = slot.queue.front().map(|j| j.snapshot.clone()) else {
            slot.model = Some((model, rng));
            continue;
        };
        slot.status = TaskStatus::Running;
        st.running += 1;
        drop(st);

        let start = Instant::now();
        let result = train_iteration(&mut model, &snapshot, &shared.train, &mut rng);
        let ms = start.elapsed().as_secs_f64() * 1e3;

        st = shared.lock();
        st.running -= 1;
        let stopped = st.shutdown;
        if let Some(slot) = st.slots.get_mut(&id) {
            slot.model = Some((model, rng));
            let finished = match result {
                Ok(report) => {
                    slot.log.push((report, ms));
                    slot.train_ms += ms;
                    slot.queue.front_mut().map(|j| {
                        j.remaining -= 1;
                        j.remaining == 0
                    })
                }
                Err(e) => {
                    slot.errors.push(e.to_string());
                    Some(true)
                }
            };
            if finished == Some(true) {
                slot.queue.pop_front();
            }
            slot.status = if stopped {
                TaskStatus::Stopped
            } else if slot.queue.is_empty() {
                TaskStatus::Idle
            } else {
                TaskStatus::Queued
            };
        }
        shared.changed.notify_all();
    }
}
