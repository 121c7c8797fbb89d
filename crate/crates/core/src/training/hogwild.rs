//! Lock-free shallow updates across worker threads.
//!
//! Shallow rows and their Adagrad accumulators live in `AtomicU32` cells
//! holding `f32` bits; workers read and write them with relaxed ordering, so
//! concurrent updates to one coordinate resolve as last-writer-wins. Dense
//! encoder tensors and their Adam moments sit behind one mutex: a worker
//! snapshots them, computes its batch gradient, then applies the dense step
//! under the lock.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;

use super::optim::{adam_tensor, LearningRates, OptimizerState, ADAGRAD_EPS};
use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::model::{EncoderParams, Features, ModelParams, ShallowLookup};

struct AtomicTable {
    dim: usize,
    cells: Vec<AtomicU32>,
}

impl AtomicTable {
    fn from_slice(dim: usize, values: &[f32]) -> Self {
        AtomicTable {
            dim,
            cells: values.iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
        }
    }

    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    fn set(&self, i: usize, v: f32) {
        self.cells[i].store(v.to_bits(), Ordering::Relaxed);
    }

    fn write_back(&self, out: &mut [f32]) {
        for (o, c) in out.iter_mut().zip(&self.cells) {
            *o = f32::from_bits(c.load(Ordering::Relaxed));
        }
    }
}

impl ShallowLookup<f32> for AtomicTable {
    fn read_row(&self, id: u32, out: &mut [f32]) {
        let start = id as usize * self.dim;
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.get(start + k);
        }
    }
}

fn adagrad_atomic(param: &AtomicTable, accum: &AtomicTable, id: u32, grad: &[f32], lr: f32) {
    let start = id as usize * param.dim;
    let eps = ADAGRAD_EPS as f32;
    for (k, &g) in grad.iter().enumerate() {
        let i = start + k;
        let a = accum.get(i) + g * g;
        accum.set(i, a);
        param.set(i, param.get(i) - lr * g / (a.sqrt() + eps));
    }
}

struct Dense {
    entity: EncoderParams<f32>,
    relation: EncoderParams<f32>,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    step: u64,
}

/// One epoch over pre-sampled batches with `workers` threads. Returns batch
/// losses in completion order.
pub(super) fn run_epoch(
    model: &mut ModelParams<f32>,
    state: &mut OptimizerState<f32>,
    features: Features<'_>,
    batches: &[(&[Triple], Vec<Vec<u32>>)],
    rates: LearningRates,
    workers: usize,
) -> Result<Vec<f64>> {
    let dim = model.config.dim;
    let ent = AtomicTable::from_slice(dim, &model.entity_shallow.data);
    let rel = AtomicTable::from_slice(dim, &model.relation_shallow.data);
    let ent_acc = AtomicTable::from_slice(dim, &state.entity_accum);
    let rel_acc = AtomicTable::from_slice(dim, &state.relation_accum);
    let dense = Mutex::new(Dense {
        entity: model.entity_encoder.clone(),
        relation: model.relation_encoder.clone(),
        first: std::mem::take(&mut state.first_moment),
        second: std::mem::take(&mut state.second_moment),
        step: state.step,
    });
    let next = AtomicUsize::new(0);
    let losses = Mutex::new(Vec::with_capacity(batches.len()));
    let config = &model.config;
    let lr_shallow = rates.shallow as f32;

    let worker = || -> Result<()> {
        loop {
            let b = next.fetch_add(1, Ordering::Relaxed);
            let Some((batch, negatives)) = batches.get(b) else {
                return Ok(());
            };
            let (entity_encoder, relation_encoder) = {
                let d = dense.lock().expect("dense lock");
                (d.entity.clone(), d.relation.clone())
            };
            let (loss, grads) = super::batch_loss(
                config,
                &entity_encoder,
                &relation_encoder,
                &ent,
                &rel,
                features,
                batch,
                negatives,
            );
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss or gradient in batch {b}")));
            }
            for (id, g) in &grads.entity_rows {
                adagrad_atomic(&ent, &ent_acc, *id, g, lr_shallow);
            }
            for (id, g) in &grads.relation_rows {
                adagrad_atomic(&rel, &rel_acc, *id, g, lr_shallow);
            }
            {
                let mut guard = dense.lock().expect("dense lock");
                let d = &mut *guard;
                d.step += 1;
                let params = d.entity.tensors_mut().into_iter().chain(d.relation.tensors_mut());
                let g = grads.entity_encoder.tensors().into_iter().chain(grads.relation_encoder.tensors());
                for (((p, g), m), v) in params.zip(g).zip(d.first.iter_mut()).zip(d.second.iter_mut()) {
                    adam_tensor(p, m, v, g, rates.dense, d.step);
                }
            }
            losses.lock().expect("loss lock").push(loss);
        }
    };

    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers.max(1)).map(|_| s.spawn(worker)).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let d = dense.into_inner().expect("dense lock");
    ent.write_back(&mut model.entity_shallow.data);
    rel.write_back(&mut model.relation_shallow.data);
    ent_acc.write_back(&mut state.entity_accum);
    rel_acc.write_back(&mut state.relation_accum);
    model.entity_encoder = d.entity;
    model.relation_encoder = d.relation;
    state.first_moment = d.first;
    state.second_moment = d.second;
    state.step = d.step;
    results.into_iter().collect::<Result<()>>()?;
    Ok(losses.into_inner().expect("loss lock"))
}

