use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{default_mutation_scales, perturb, random_unit_vector, Backend, EvalResult, Split};
use crate::error::{Error, Result};
use crate::strategies::Directive;
use crate::types::{FailureKind, MetricDirection, TaskCard};
use crate::RunRng;

pub const DEFAULT_GATE_WIDTH: f64 = 1.0;

/// Latent fitness of a maximize-task baseline; minimize tasks mirror it.
const BASELINE_FITNESS: f64 = 0.3;
/// Seconds charged for a timed-out evaluation.
const TIMEOUT_SECONDS: f64 = 2400.0;

/// One improvement opportunity: a ramp of height `gain_a` that starts once the
/// projection onto `direction_u` passes `offset_b` and saturates `width_w` later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub direction_u: Vec<f64>,
    pub offset_b: f64,
    pub gain_a: f64,
    pub width_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub seed: u64,
    pub dims: usize,
    pub gates: Vec<Gate>,
    pub f0: f64,
    pub direction: MetricDirection,
    pub p_best: f64,
    pub p_worst: f64,
    pub density_param: f64,
    pub noise_val_sigma: f64,
    pub noise_test_sigma: f64,
    pub test_bias: f64,
    pub p_fail: f64,
    pub p_timeout: f64,
    pub mutation_scales: BTreeMap<Directive, f64>,
}

pub fn ramp(z: f64, width: f64) -> f64 {
    (z / width).clamp(0.0, 1.0)
}

/// Builds a landscape whose gate count and offsets interpolate between the
/// sparse (`density_param = 0`: 4 far gates) and dense (`1`: 32 near gates) ends.
pub fn generate_landscape(seed: u64, density_param: f64, dims: usize) -> Result<LandscapeSpec> {
    if !(0.0..=1.0).contains(&density_param) {
        return Err(Error::Config(format!(
            "density must lie in [0, 1], got {density_param}"
        )));
    }
    if dims < 2 {
        return Err(Error::Config(format!(
            "dims must be at least 2, got {dims}"
        )));
    }
    let mut rng = RunRng::seed_from_u64(seed);
    let m = (4.0 + 28.0 * density_param).round() as usize;
    let lo = 2.5 * (1.0 - density_param);
    let hi = 4.0 - 3.5 * density_param;
    let mut gates: Vec<Gate> = (0..m)
        .map(|_| {
            let direction_u = random_unit_vector(dims, None, &mut rng);
            let offset_b = lo + (hi - lo) * rng.gen::<f64>();
            let gain_a = rng.gen_range(0.5..1.5);
            Gate {
                direction_u,
                offset_b,
                gain_a,
                width_w: DEFAULT_GATE_WIDTH,
            }
        })
        .collect();
    let (p_best, p_worst) = (1.0, 0.0);
    let total: f64 = gates.iter().map(|g| g.gain_a).sum();
    let target = 0.5 * (p_best - p_worst);
    gates.iter_mut().for_each(|g| g.gain_a *= target / total);
    let spec = LandscapeSpec {
        seed,
        dims,
        gates,
        f0: BASELINE_FITNESS,
        direction: MetricDirection::Maximize,
        p_best,
        p_worst,
        density_param,
        noise_val_sigma: 0.005,
        noise_test_sigma: 0.005,
        test_bias: 0.0,
        p_fail: 0.1,
        p_timeout: 0.02,
        mutation_scales: default_mutation_scales(),
    };
    spec.validate()?;
    Ok(spec)
}

/// `f0 + sum_j a_j * ramp(<x, u_j> - b_j; w_j)`, mirrored for minimize tasks.
pub fn latent_fitness(spec: &LandscapeSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.dims {
        return Err(Error::DimensionMismatch {
            expected: spec.dims,
            actual: x.len(),
        });
    }
    let gained: f64 = spec
        .gates
        .iter()
        .map(|g| {
            let proj: f64 = x.iter().zip(&g.direction_u).map(|(a, b)| a * b).sum();
            g.gain_a * ramp(proj - g.offset_b, g.width_w)
        })
        .sum();
    Ok(match spec.direction {
        MetricDirection::Maximize => spec.f0 + gained,
        MetricDirection::Minimize => spec.f0 - gained,
    })
}

impl LandscapeSpec {
    /// Mirrors the landscape so that lower values are better. Gates are unchanged.
    pub fn with_direction(mut self, direction: MetricDirection) -> Self {
        if direction != self.direction {
            self.direction = direction;
            std::mem::swap(&mut self.p_best, &mut self.p_worst);
            self.f0 = self.p_best + self.p_worst - self.f0;
        }
        self
    }

    pub fn baseline_genotype(&self) -> Vec<f64> {
        vec![0.0; self.dims]
    }

    pub fn card(&self, task_id: &str) -> Result<TaskCard> {
        TaskCard::new(
            task_id,
            self.direction,
            self.p_best,
            Some(self.p_worst),
            self.f0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("landscape: {m}")));
        if self.dims < 2 {
            return fail(format!("dims must be at least 2, got {}", self.dims));
        }
        if !(0.0..=1.0).contains(&self.density_param) {
            return fail(format!("density {} outside [0, 1]", self.density_param));
        }
        for (j, g) in self.gates.iter().enumerate() {
            if g.direction_u.len() != self.dims {
                return fail(format!("gate {j} has dimension {}", g.direction_u.len()));
            }
            let norm = super::l2_norm(&g.direction_u);
            if !((norm - 1.0).abs() <= 1e-9) {
                return fail(format!("gate {j} direction has norm {norm}"));
            }
            if !(g.offset_b >= 0.0 && g.offset_b.is_finite()) {
                return fail(format!("gate {j} offset {} must be >= 0", g.offset_b));
            }
            if !(g.gain_a > 0.0 && g.gain_a.is_finite())
                || !(g.width_w > 0.0 && g.width_w.is_finite())
            {
                return fail(format!("gate {j} gain and width must be positive"));
            }
        }
        let probs = [self.p_fail, self.p_timeout];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.p_fail + self.p_timeout > 1.0 {
            return fail("failure probabilities must lie in [0, 1] and sum to at most 1".into());
        }
        for s in [self.noise_val_sigma, self.noise_test_sigma] {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("noise sigma {s} must be >= 0"));
            }
        }
        if !self.test_bias.is_finite() || !self.f0.is_finite() {
            return fail("non-finite f0 or test bias".into());
        }
        for d in Directive::ALL {
            match self.mutation_scales.get(&d) {
                Some(s) if *s >= 0.0 && s.is_finite() => {}
                _ => return fail(format!("missing or invalid mutation scale for {d}")),
            }
        }
        self.card("landscape")?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("landscape serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: LandscapeSpec =
            serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigKey {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn evaluate(&self, x: &[f64], split: Split, rng: &mut RunRng) -> Result<EvalResult> {
        let latent = latent_fitness(self, x)?;
        // fixed draw order keeps the stream aligned regardless of outcome
        let u_fail: f64 = rng.gen();
        let u_kind: f64 = rng.gen();
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let u_tokens: f64 = rng.gen();
        let u_time: f64 = rng.gen();
        let elapsed = 45.0 + 30.0 * u_time;
        match split {
            Split::Validation => {
                let tokens = 800 + 40 * self.dims as u64 + (400.0 * u_tokens) as u64;
                if u_fail < self.p_timeout {
                    return Ok(EvalResult::failed(
                        FailureKind::Timeout,
                        tokens,
                        TIMEOUT_SECONDS,
                    ));
                }
                if u_fail < self.p_timeout + self.p_fail {
                    let kind = if u_kind < 0.5 {
                        FailureKind::ExecutionError
                    } else {
                        FailureKind::InvalidMetric
                    };
                    return Ok(EvalResult::failed(kind, tokens, elapsed));
                }
                Ok(EvalResult::ok(
                    latent + self.noise_val_sigma * z,
                    tokens,
                    elapsed,
                ))
            }
            Split::Test => {
                let noise = self.noise_test_sigma * z;
                Ok(EvalResult::ok(latent + self.test_bias + noise, 0, elapsed))
            }
        }
    }
}

/// A generated landscape bound to a task id.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    spec: LandscapeSpec,
    card: TaskCard,
}

impl SyntheticBackend {
    pub fn new(task_id: &str, spec: LandscapeSpec) -> Result<Self> {
        spec.validate()?;
        let card = spec.card(task_id)?;
        Ok(SyntheticBackend { spec, card })
    }

    pub fn spec(&self) -> &LandscapeSpec {
        &self.spec
    }
}

impl Backend for SyntheticBackend {
    fn card(&self) -> &TaskCard {
        &self.card
    }

    fn dims(&self) -> usize {
        self.spec.dims
    }

    fn baseline_genotype(&self) -> Vec<f64> {
        self.spec.baseline_genotype()
    }

    fn baseline_val(&self) -> f64 {
        self.spec.f0
    }

    fn evaluate(&self, x: &[f64], split: Split, rng: &mut RunRng) -> Result<EvalResult> {
        self.spec.evaluate(x, split, rng)
    }

    fn propose_child(
        &self,
        parent: &[f64],
        directive: Directive,
        rng: &mut RunRng,
    ) -> Result<Vec<f64>> {
        perturb(
            parent,
            &self.spec.baseline_genotype(),
            directive,
            &self.spec.mutation_scales,
            None,
            rng,
        )
    }
}
