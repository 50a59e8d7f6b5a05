//! Full-batch training with per-epoch edge resampling and best-score
//! tracking.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Grads, ParamSet, Tape};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::loss::{build_objective, sample_edges_with, EdgeSample, LossBreakdown, LossTerms};
use crate::math::sqrt;
use crate::metrics::{assign_clusters, nmi, pairwise_f1};
use crate::model::{forward, model_input, EmbeddingPair, HenclerParams, ModelDims};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub num_clusters: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub feature_dim: usize,
    /// Latent width `s`; `None` means `2 · num_clusters`.
    pub latent: Option<usize>,
    pub k_pe: usize,
    pub seed: u64,
    pub losses: LossTerms,
    pub tie_maps: bool,
    /// Evaluate every this many epochs; 0 turns tracking off.
    pub eval_every: usize,
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_clusters: 2,
            epochs: 300,
            learning_rate: 0.01,
            hidden: 256,
            feature_dim: 128,
            latent: None,
            k_pe: 16,
            seed: 0,
            losses: LossTerms::All,
            tie_maps: false,
            eval_every: 1,
            kmeans_restarts: 10,
        }
    }
}

impl TrainConfig {
    pub fn new(num_clusters: usize) -> Self {
        Self {
            num_clusters,
            ..Self::default()
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.unwrap_or(2 * self.num_clusters)
    }

    pub fn dims(&self, input_dim: usize) -> ModelDims {
        ModelDims::with_widths(input_dim, self.k_pe, self.hidden, self.feature_dim, self.latent_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_clusters", self.num_clusters),
            ("hidden", self.hidden),
            ("feature_dim", self.feature_dim),
            ("latent", self.latent_dim()),
            ("k_pe", self.k_pe),
            ("kmeans_restarts", self.kmeans_restarts),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(alloc::format!("{name} must be positive")));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: self.m.len(),
            });
        }
        self.steps += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.steps as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.steps as f64);
        for (i, p) in params.params_mut().iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let Some(g) = grads.by_index(i) else { continue };
            if g.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: p.value.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (((x, &g), m), v) in p.value.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= self.learning_rate * m_hat / (sqrt(v_hat) + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLosses {
    pub epoch: usize,
    pub wksvd: f64,
    pub node_rec: f64,
    pub edge_rec: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub epoch: usize,
    pub nmi: f64,
    pub pairwise_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BestScore {
    pub value: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunRecord {
    pub seed: u64,
    pub losses: Vec<EpochLosses>,
    pub evaluations: Vec<Evaluation>,
    pub best_nmi: Option<BestScore>,
    pub best_f1: Option<BestScore>,
    /// Filled in by callers that have a clock.
    pub wall_time_secs: Option<f64>,
}

impl RunRecord {
    fn observe(&mut self, eval: Evaluation) {
        let better = |best: &Option<BestScore>, v: f64| best.is_none_or(|b| v > b.value);
        if better(&self.best_nmi, eval.nmi) {
            self.best_nmi = Some(BestScore {
                value: eval.nmi,
                epoch: eval.epoch,
            });
        }
        if better(&self.best_f1, eval.pairwise_f1) {
            self.best_f1 = Some(BestScore {
                value: eval.pairwise_f1,
                epoch: eval.epoch,
            });
        }
        self.evaluations.push(eval);
    }
}

/// Independent RNG stream `stream` derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Streams for [`derive_seed`]: parameter init, edge sampling, KMeans.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_EDGES: u64 = 1;
pub const STREAM_KMEANS: u64 = 2;

/// One training run, advanced an epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer<'g> {
    config: TrainConfig,
    graph: &'g AttributedGraph,
    input: Matrix,
    params: HenclerParams,
    adam: Adam,
    edge_rng: ChaCha8Rng,
    epoch: usize,
    record: RunRecord,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g AttributedGraph, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims(graph.feature_dim());
        let params = HenclerParams::init(dims, config.tie_maps, derive_seed(config.seed, STREAM_INIT))?;
        Self::with_params(graph, config, params)
    }

    /// Starts from given parameters, e.g. a checkpoint. The optimizer state
    /// starts fresh.
    pub fn with_params(graph: &'g AttributedGraph, config: TrainConfig, params: HenclerParams) -> Result<Self> {
        config.validate()?;
        if config.eval_every > 0 && graph.labels().is_none() {
            return Err(Error::MissingLabels);
        }
        if config.losses.reconstruction() && graph.num_edges() == 0 {
            return Err(Error::EmptyEdgeSet);
        }
        let pe = graph.random_walk_pe(config.k_pe)?;
        let input = model_input(graph, &pe)?;
        let dims = config.dims(graph.feature_dim());
        if *params.dims() != dims || params.tie_maps() != config.tie_maps {
            return Err(Error::InvalidArgument(
                "parameters do not match the configured model dimensions".into(),
            ));
        }
        let adam = Adam::new(params.param_set(), config.learning_rate);
        Ok(Self {
            edge_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_EDGES)),
            record: RunRecord {
                seed: config.seed,
                ..RunRecord::default()
            },
            config,
            graph,
            input,
            params,
            adam,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &HenclerParams {
        &self.params
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// `[X ‖ PE]` used as model input.
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    fn evaluates(&self, epoch: usize) -> bool {
        self.config.eval_every > 0 && (epoch + 1).is_multiple_of(self.config.eval_every)
    }

    /// Resample → forward → evaluate (on this forward pass) → backward →
    /// Adam update.
    pub fn step(&mut self) -> Result<EpochLosses> {
        let epoch = self.epoch;
        let tag = |e: Error| match e {
            Error::NonFinite { op } => Error::NonFiniteLoss { epoch, op },
            other => other,
        };
        let sample = if self.config.losses.reconstruction() {
            sample_edges_with(self.graph, &mut self.edge_rng)?
        } else {
            EdgeSample {
                positives: Vec::new(),
                negatives: Vec::new(),
            }
        };
        let mut t = Tape::new();
        let b = self.params.param_set().bind(&mut t).map_err(tag)?;
        let x = t.leaf(self.input.clone()).map_err(tag)?;
        let obj = build_objective(
            &mut t,
            &b,
            &self.params,
            x,
            self.graph.features(),
            &sample,
            self.config.losses,
        )
        .map_err(tag)?;
        let parts: LossBreakdown = obj.breakdown(&t);
        let total = t.scalar(obj.total);
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, op: "total loss" });
        }
        if self.evaluates(epoch) {
            let emb = EmbeddingPair {
                e: t.value(obj.forward.e).clone(),
                r: t.value(obj.forward.r).clone(),
            };
            let eval = self.evaluate_embeddings(&emb, epoch)?;
            self.record.observe(eval);
        }
        let mut grads = t.backward(obj.total).map_err(tag)?;
        let grads = b.collect(self.params.param_set(), &mut grads);
        drop(t);
        self.adam.step(self.params.param_set_mut(), &grads)?;
        if !self.params.param_set().iter().all(|p| p.value.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, op: "adam" });
        }
        let losses = EpochLosses {
            epoch,
            wksvd: parts.wksvd,
            node_rec: parts.node_rec,
            edge_rec: parts.edge_rec,
            total,
        };
        self.record.losses.push(losses);
        self.epoch += 1;
        Ok(losses)
    }

    fn evaluate_embeddings(&self, emb: &EmbeddingPair, epoch: usize) -> Result<Evaluation> {
        let truth = self.graph.labels().ok_or(Error::MissingLabels)?;
        let seed = derive_seed(derive_seed(self.config.seed, STREAM_KMEANS), epoch as u64);
        let pred = assign_clusters(emb, self.config.num_clusters, self.config.kmeans_restarts, seed)?;
        Ok(Evaluation {
            epoch,
            nmi: nmi(&pred, truth)?,
            pairwise_f1: pairwise_f1(&pred, truth)?,
        })
    }

    /// Embeddings under the current parameters.
    pub fn embeddings(&self) -> Result<EmbeddingPair> {
        Ok(forward(&self.input, &self.params)?.1)
    }

    /// Cluster assignment under the current parameters.
    pub fn assign(&self) -> Result<Vec<usize>> {
        let seed = derive_seed(self.config.seed, STREAM_KMEANS);
        assign_clusters(&self.embeddings()?, self.config.num_clusters, self.config.kmeans_restarts, seed)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> (HenclerParams, RunRecord) {
        (self.params, self.record)
    }
}

/// Runs `config.epochs` epochs from a fresh initialization.
pub fn train(graph: &AttributedGraph, config: TrainConfig) -> Result<(HenclerParams, RunRecord)> {
    let mut trainer = Trainer::new(graph, config)?;
    trainer.run()?;
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{heterophilous_graph, HeterophilousConfig};

    fn small_config(k: usize) -> TrainConfig {
        TrainConfig {
            epochs: 5,
            hidden: 16,
            feature_dim: 8,
            k_pe: 4,
            kmeans_restarts: 2,
            ..TrainConfig::new(k)
        }
    }

    #[test]
    fn smoke_run_records_every_epoch() {
        let g = heterophilous_graph(&HeterophilousConfig::new(20, 2, 1)).unwrap();
        let (_, rec) = train(&g, small_config(2)).unwrap();
        assert_eq!(rec.losses.len(), 5);
        assert_eq!(rec.evaluations.len(), 5);
        assert!(rec.losses.iter().all(|l| l.total.is_finite()));
        let best = rec.best_nmi.unwrap();
        assert!(rec.evaluations.iter().all(|e| e.nmi <= best.value));
    }

    #[test]
    fn same_seed_same_record() {
        let g = heterophilous_graph(&HeterophilousConfig::new(24, 3, 2)).unwrap();
        let (pa, a) = train(&g, small_config(3)).unwrap();
        let (pb, b) = train(&g, small_config(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn labels_required_only_for_tracking() {
        let mut g = heterophilous_graph(&HeterophilousConfig::new(12, 2, 3)).unwrap();
        let unlabeled = AttributedGraph::new(g.features().clone(), g.edges().to_vec(), true).unwrap();
        assert!(matches!(Trainer::new(&unlabeled, small_config(2)), Err(Error::MissingLabels)));
        let cfg = TrainConfig {
            eval_every: 0,
            ..small_config(2)
        };
        let (_, rec) = train(&unlabeled, cfg).unwrap();
        assert!(rec.evaluations.is_empty());
        g = g.symmetrized();
        assert!(train(&g, small_config(2)).is_ok());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = ParamSet::new();
        p.insert("x", Matrix::row_vector(&[1.0, -2.0]), true).unwrap();
        let mut adam = Adam::new(&p, 0.1);
        let (_, g) = crate::autodiff::forward_backward(&p, |t, b| {
            let z = t.scale(b.var("x")?, 0.0)?;
            t.sum(z)
        })
        .unwrap();
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.get("x").unwrap().as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_adam_step_is_lr_times_sign() {
        // m̂ = g, v̂ = g² → Δ = −lr · g/(|g| + ε)
        let mut p = ParamSet::new();
        p.insert("x", Matrix::row_vector(&[0.0, 0.0]), true).unwrap();
        let mut adam = Adam::new(&p, 0.01);
        let (_, g) = crate::autodiff::forward_backward(&p, |t, b| {
            let c = t.leaf(Matrix::row_vector(&[3.0, -0.5]))?;
            let z = t.mul(b.var("x")?, c)?;
            t.sum(z)
        })
        .unwrap();
        adam.step(&mut p, &g).unwrap();
        let x = p.get("x").unwrap();
        assert!((x.get(0, 0) + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((x.get(0, 1) - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let mut p = ParamSet::new();
        p.insert("x", Matrix::row_vector(&[3.0]), true).unwrap();
        let mut adam = Adam::new(&p, 0.1);
        for _ in 0..500 {
            let (_, g) = crate::autodiff::forward_backward(&p, |t, b| {
                let z = t.add_scalar(b.var("x")?, -1.5)?;
                let z = t.square(z)?;
                t.sum(z)
            })
            .unwrap();
            adam.step(&mut p, &g).unwrap();
        }
        assert!((p.get("x").unwrap().get(0, 0) - 1.5).abs() < 1e-4);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
