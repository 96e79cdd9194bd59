use anyhow::{bail, Context, Result};

use compoda_core::algorithms::{composite_value, reference_optimum};
use compoda_core::composite::CompositePart;
use compoda_core::compressors::Compressor;
use compoda_core::numkit::{derive_stream, streams, DenseVector};
use compoda_core::problems::{
    estimate_smoothness, gen_logistic_dataset, gen_softmax, load_csv_dataset,
    partition_heterogeneous, replicate_softmax_to_clients, split_softmax_to_clients, CsvOptions,
    LogisticClients, LogisticProblem, SmoothOracle, SoftmaxClients, SoftmaxProblem,
};

use crate::config::{CompositeKind, CompressorKind, ExperimentConfig, Layout, ProblemType};

/// Gradient-mapping tolerance and iteration cap of the reference solve.
const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAX_ITER: usize = 100_000;

pub enum Instance {
    Softmax {
        clients: SoftmaxClients,
        layout: Layout,
    },
    Logistic(LogisticClients),
}

impl Instance {
    pub fn oracle(&self) -> &dyn SmoothOracle {
        match self {
            Instance::Softmax { clients, .. } => clients,
            Instance::Logistic(c) => c,
        }
    }

    /// Rigorous upper bound on the smoothness of every client loss.
    pub fn smoothness_bound(&self) -> f64 {
        match self {
            Instance::Softmax { clients, .. } => clients.problem().smoothness_bound(),
            Instance::Logistic(c) => c.problem().smoothness_bound(),
        }
    }

    /// The origin minimizes `f + psi` when the full recentred softmax is
    /// the global objective and `psi` is minimized at the origin too.
    fn known_minimizer(&self, psi: &CompositePart) -> Option<DenseVector> {
        let Instance::Softmax { clients, layout } = self else {
            return None;
        };
        let full = clients.num_clients() == 1 || *layout == Layout::Replicated;
        let origin = DenseVector::zeros(clients.dim());
        let psi_ok = match psi {
            CompositePart::Zero | CompositePart::L1 { .. } => true,
            CompositePart::Ball { .. } => psi.value(&origin) == 0.0,
        };
        (full && clients.problem().is_recentred() && psi_ok).then_some(origin)
    }
}

/// Everything a run needs that depends on the problem data.
pub struct Prepared {
    pub instance: Instance,
    pub x0: DenseVector,
    pub psi: CompositePart,
    pub compressor: Compressor,
    pub f_star: f64,
    /// `||x_0 - x*||` unless overridden.
    pub r0: f64,
    pub l_global: f64,
    pub ell: f64,
    pub delta: f64,
    pub m: f64,
}

impl Prepared {
    pub fn oracle(&self) -> &dyn SmoothOracle {
        self.instance.oracle()
    }

    /// `F(x_0) - F*`.
    pub fn initial_gap(&self) -> f64 {
        (composite_value(self.oracle(), &self.psi, &self.x0) - self.f_star).max(0.0)
    }
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let p = &cfg.raw.problem;
    let seed = p.seed.unwrap_or(cfg.raw.seed);
    let n = cfg.clients();
    Ok(match p.kind {
        ProblemType::Softmax => {
            let problem = match &p.instance_path {
                Some(path) => SoftmaxProblem::load_instance(path)
                    .with_context(|| format!("loading softmax instance {}", path.display()))?,
                None => gen_softmax(
                    p.d.unwrap_or(0),
                    p.k.unwrap_or(0),
                    p.mu.unwrap_or(0.1),
                    seed,
                )?,
            };
            let layout = p.layout.unwrap_or_default();
            let clients = match layout {
                Layout::Split => split_softmax_to_clients(problem, n, seed)?,
                Layout::Replicated => replicate_softmax_to_clients(problem, n)?,
            };
            Instance::Softmax { clients, layout }
        }
        ProblemType::Logistic => {
            let data = match &p.csv_path {
                Some(path) => load_csv_dataset(
                    path,
                    CsvOptions {
                        has_header: p.has_header.unwrap_or(false),
                        normalize: p.normalize.unwrap_or(false),
                    },
                )?,
                None => gen_logistic_dataset(
                    p.samples.unwrap_or(0),
                    p.d.unwrap_or(0),
                    p.classes.unwrap_or(10),
                    seed,
                )?,
            };
            let problem = LogisticProblem::new(&data, p.positive_class)?;
            let partition =
                partition_heterogeneous(&data.labels, n, cfg.raw.clients.frac_random, seed)?;
            Instance::Logistic(LogisticClients::new(problem, partition)?)
        }
    })
}

fn composite(cfg: &ExperimentConfig, dim: usize) -> Result<CompositePart> {
    let c = &cfg.raw.composite;
    Ok(match c.kind {
        CompositeKind::Zero => CompositePart::Zero,
        CompositeKind::L1 => CompositePart::l1(c.lambda.unwrap_or(0.0))?,
        CompositeKind::Ball => {
            let center = match &c.center {
                Some(v) if v.len() != dim => {
                    bail!(
                        "composite.center has {} entries for dimension {dim}",
                        v.len()
                    )
                }
                Some(v) => Some(DenseVector::from_vec(v.clone())),
                None => None,
            };
            CompositePart::ball(c.radius.unwrap_or(0.0), center)?
        }
    })
}

fn compressor(cfg: &ExperimentConfig, dim: usize) -> Result<Compressor> {
    let c = &cfg.raw.compressor;
    Ok(match c.kind {
        CompressorKind::Identity => Compressor::identity(dim),
        CompressorKind::TopK => match (c.k_frac, c.k) {
            (Some(f), _) => Compressor::top_k_fraction(f, dim)?,
            (None, Some(k)) if k > dim => bail!("compressor.k = {k} exceeds dimension {dim}"),
            (None, Some(k)) => Compressor::top_k(k, dim)?,
            (None, None) => bail!("top_k needs k_frac or k"),
        },
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let instance = build_instance(cfg)?;
    let dim = instance.oracle().dim();
    let psi = composite(cfg, dim)?;
    let compressor = compressor(cfg, dim)?;
    let default_radius = match cfg.raw.problem.kind {
        ProblemType::Softmax => 1.0,
        ProblemType::Logistic => 0.0,
    };
    let radius = cfg.raw.problem.x0_radius.unwrap_or(default_radius);
    let x0 = derive_stream(cfg.raw.seed, streams::INITIAL_POINT).sphere_point(dim, radius);

    let (f_star, x_star) = match instance.known_minimizer(&psi) {
        Some(origin) => (composite_value(instance.oracle(), &psi, &origin), origin),
        None => {
            let sol = reference_optimum(
                instance.oracle(),
                &psi,
                &x0,
                REFERENCE_TOL,
                REFERENCE_MAX_ITER,
            )
            .context("reference solve for F*")?;
            (sol.value, sol.x)
        }
    };
    let r0 = match cfg.raw.algorithm.stepsize.r0 {
        Some(r) => r,
        None => x0.dist(&x_star)?,
    };

    let s = &cfg.raw.smoothness;
    let (l_global, ell) = match (s.l_global, s.ell) {
        (Some(l), Some(e)) => (l, e),
        (l, e) => {
            let mut rng = derive_stream(cfg.raw.seed, streams::SMOOTHNESS_PROBES);
            let est =
                estimate_smoothness(instance.oracle(), &x0, radius.max(1.0), s.probes, &mut rng)?
                    .scaled(s.safety);
            (l.unwrap_or(est.l_global), e.unwrap_or(est.l_avg))
        }
    };
    let delta = compressor.contraction_delta();
    Ok(Prepared {
        instance,
        x0,
        psi,
        compressor,
        f_star,
        r0,
        l_global,
        ell,
        delta,
        m: cfg.raw.m.unwrap_or(1.0 / delta),
    })
}
