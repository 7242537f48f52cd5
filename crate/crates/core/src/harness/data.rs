//! Benchmark splits, pre-encoded once per run, and the task-mixing sampler.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::EncoderPool;
use crate::error::{Result, WeeError};
use crate::harness::config::RunConfig;
use crate::harness::model::{encode_dataset, EncodedExample};
use crate::taskbench::{gen_split, Dataset, Split, Task};

/// Raw generated datasets, `[split][task]` in `Task::ALL` order.
pub fn generate_splits(cfg: &RunConfig) -> Result<Vec<(Split, Vec<Dataset>)>> {
    let d = &cfg.data;
    [
        (Split::Train, d.train_per_task),
        (Split::Dev, d.dev_per_task),
        (Split::Test, d.test_per_task),
    ]
    .into_iter()
    .map(|(split, n)| {
        let sets = Task::ALL
            .iter()
            .map(|&t| gen_split(t, split, n, d.seed, &d.generation))
            .collect::<Result<Vec<_>>>()?;
        Ok((split, sets))
    })
    .collect()
}

/// Encoded examples per task, indexed by `Task::index`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSplit {
    pub per_task: Vec<Vec<EncodedExample>>,
}

impl TaskSplit {
    pub fn task(&self, task: Task) -> &[EncodedExample] {
        &self.per_task[task.index()]
    }

    pub fn len(&self) -> usize {
        self.per_task.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &EncodedExample> {
        self.per_task.iter().flatten()
    }

    /// The first `n` examples of every task.
    pub fn head(&self, n: usize) -> Vec<&EncodedExample> {
        self.per_task.iter().flat_map(|t| t.iter().take(n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchData {
    pub train: TaskSplit,
    pub dev: TaskSplit,
    pub test: TaskSplit,
}

impl BenchData {
    /// Generates every split with the fixed data seed and runs all encoders.
    pub fn prepare(cfg: &RunConfig, pool: &EncoderPool) -> Result<Self> {
        let mut splits = generate_splits(cfg)?
            .into_iter()
            .map(|(_, sets)| {
                let per_task = sets
                    .iter()
                    .map(|ds| encode_dataset(pool, ds))
                    .collect::<Result<Vec<_>>>()?;
                Ok(TaskSplit { per_task })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || splits.next().expect("three splits");
        Ok(Self {
            train: next(),
            dev: next(),
            test: next(),
        })
    }
}

/// Fills batch slots by smooth weighted round-robin over tasks; within a
/// task, examples are drawn without replacement in a reshuffled order each
/// epoch.
#[derive(Clone, Debug)]
pub struct TaskSampler {
    weights: Vec<f64>,
    credit: Vec<f64>,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    sizes: Vec<usize>,
    rng: ChaCha8Rng,
}

impl TaskSampler {
    pub fn new(sizes: &[usize], weights: &[f64], seed: u64) -> Result<Self> {
        if sizes.len() != weights.len() || sizes.is_empty() {
            return Err(WeeError::Config("one weight per task is required".into()));
        }
        if weights.iter().zip(sizes).any(|(&w, &n)| w > 0.0 && n == 0) {
            return Err(WeeError::Config("a task with positive weight has no examples".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(WeeError::Config("task weights sum to zero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orders = sizes
            .iter()
            .map(|&n| {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect();
        Ok(Self {
            weights: weights.to_vec(),
            credit: vec![0.0; sizes.len()],
            orders,
            cursors: vec![0; sizes.len()],
            sizes: sizes.to_vec(),
            rng,
        })
    }

    fn next_task(&mut self) -> usize {
        let total: f64 = self.weights.iter().sum();
        for (c, w) in self.credit.iter_mut().zip(&self.weights) {
            *c += w;
        }
        let mut best = 0;
        for i in 1..self.credit.len() {
            if self.credit[i] > self.credit[best] {
                best = i;
            }
        }
        self.credit[best] -= total;
        best
    }

    /// `(task index, example index)`.
    pub fn draw(&mut self) -> (usize, usize) {
        let t = self.next_task();
        if self.cursors[t] == self.sizes[t] {
            self.orders[t].shuffle(&mut self.rng);
            self.cursors[t] = 0;
        }
        let i = self.orders[t][self.cursors[t]];
        self.cursors[t] += 1;
        (t, i)
    }

    pub fn batch(&mut self, size: usize) -> Vec<(usize, usize)> {
        (0..size).map(|_| self.draw()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_cycle_through_tasks() {
        let mut s = TaskSampler::new(&[5, 5, 5, 5], &[1.0; 4], 1).unwrap();
        let tasks: Vec<usize> = s.batch(16).into_iter().map(|(t, _)| t).collect();
        assert_eq!(tasks, [0, 1, 2, 3].repeat(4));
    }

    #[test]
    fn weights_set_the_mixture() {
        let mut s = TaskSampler::new(&[3, 3, 3, 3], &[2.0, 1.0, 1.0, 0.0], 1).unwrap();
        let mut counts = [0; 4];
        for (t, _) in s.batch(400) {
            counts[t] += 1;
        }
        assert_eq!(counts, [200, 100, 100, 0]);
    }

    #[test]
    fn each_epoch_visits_every_example_once() {
        let mut s = TaskSampler::new(&[7], &[1.0], 3).unwrap();
        for _ in 0..3 {
            let mut seen: Vec<usize> = s.batch(7).into_iter().map(|(_, i)| i).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_empty_weighted_task() {
        assert!(TaskSampler::new(&[3, 0], &[1.0, 1.0], 1).is_err());
        assert!(TaskSampler::new(&[3, 0], &[1.0, 0.0], 1).is_ok());
    }
}
