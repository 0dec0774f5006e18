//! Negotiated representations: nearest-code assignment, target blending and
//! the negotiation-rate scheduler.
//!
//! A task trained at rate `r` keeps fraction `r` of what the model already
//! is (targets blend `r * prediction + (1 - r) * code`), so the new task
//! consumes a `1 - r` slice of capacity and every earlier task's slice
//! shrinks by the factor `r`. Advancing the rate by the optimal plasticity
//! multiplier `1 / (2r - r^2)`, equivalently `r <- 1 / (2 - r)`, makes all
//! slices come out equal, which `simulate_capacity` demonstrates and the
//! tests verify; holding the rate fixed instead leaves older tasks with
//! geometrically shrinking slices.

use crate::error::{Error, Result};
use crate::net::{Network, SigmoidCfg};
use crate::tensor::Tensor;
use crate::walsh::WalshRegistry;

/// Default epsilon added to code bits inside the representation distance.
pub const DEFAULT_EPSILON: f64 = 1e-7;

const EVAL_SUB_BATCH: usize = 256;

/// The multiplier that, applied to the current rate, allocates the same
/// capacity slice to the next task: `1 / (2*rate - rate^2)`.
pub fn optimal_plasticity(rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config(format!(
            "negotiation rate must lie in (0, 1), got {rate}"
        )));
    }
    Ok(1.0 / (2.0 * rate - rate * rate))
}

/// Closed form of one optimal scheduler step: `rate * plasticity(rate)`
/// simplifies to `1 / (2 - rate)`. Valid on `(0, 1]`; 1 is the fixed point.
pub fn scheduled_next_rate(rate: f64) -> f64 {
    1.0 / (2.0 - rate)
}

/// How the rate moves between tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlasticityMode {
    /// Equal-capacity schedule (`rate <- 1 / (2 - rate)`).
    Optimal,
    /// Constant multiplier applied each task, clamped to at most 1;
    /// `Fixed(1.0)` keeps the rate constant.
    Fixed(f64),
}

/// Scheduler state plus the capacity ledger it implies.
#[derive(Debug, Clone)]
pub struct NegotiationState {
    initial_rate: f64,
    current_rate: f64,
    tasks_seen: usize,
    capacity_shares: Vec<f64>,
    free_share: f64,
    plasticity: PlasticityMode,
}

impl NegotiationState {
    pub fn new(initial_rate: f64) -> Result<Self> {
        Self::with_plasticity(initial_rate, PlasticityMode::Optimal)
    }

    /// `initial_rate` 0 is accepted as the degenerate "no negotiation"
    /// start; rates at or above 1 never learn and are rejected.
    pub fn with_plasticity(initial_rate: f64, plasticity: PlasticityMode) -> Result<Self> {
        if !(0.0..1.0).contains(&initial_rate) {
            return Err(Error::Config(format!(
                "initial negotiation rate must lie in [0, 1), got {initial_rate}"
            )));
        }
        if let PlasticityMode::Fixed(p) = plasticity {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!(
                    "fixed plasticity must be positive, got {p}"
                )));
            }
        }
        Ok(NegotiationState {
            initial_rate,
            current_rate: initial_rate,
            tasks_seen: 1,
            capacity_shares: Vec::new(),
            free_share: 1.0,
            plasticity,
        })
    }

    pub fn initial_rate(&self) -> f64 {
        self.initial_rate
    }

    /// Rate the current task's targets are blended with.
    pub fn rate(&self) -> f64 {
        self.current_rate
    }

    /// 1-based index of the task currently being trained.
    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    /// Capacity slice of every trained task, oldest first.
    pub fn capacity_shares(&self) -> &[f64] {
        &self.capacity_shares
    }

    pub fn free_share(&self) -> f64 {
        self.free_share
    }

    /// Books the current task's capacity slice and advances the rate for the
    /// next task.
    pub fn next_rate(&mut self) {
        let r = self.current_rate;
        for share in &mut self.capacity_shares {
            *share *= r;
        }
        self.capacity_shares.push(1.0 - r);
        self.free_share *= r;
        self.current_rate = match self.plasticity {
            PlasticityMode::Optimal => scheduled_next_rate(r),
            PlasticityMode::Fixed(p) => (r * p).min(1.0),
        };
        self.tasks_seen += 1;
    }
}

/// Capacity slice of every task after `num_tasks` tasks under the optimal
/// schedule, oldest first.
pub fn simulate_capacity(initial_rate: f64, num_tasks: usize) -> Result<Vec<f64>> {
    simulate_capacity_with(initial_rate, num_tasks, PlasticityMode::Optimal)
}

pub fn simulate_capacity_with(
    initial_rate: f64,
    num_tasks: usize,
    plasticity: PlasticityMode,
) -> Result<Vec<f64>> {
    if !(initial_rate > 0.0 && initial_rate < 1.0) {
        return Err(Error::Config(format!(
            "initial rate must lie in (0, 1), got {initial_rate}"
        )));
    }
    if num_tasks == 0 {
        return Err(Error::Config("capacity simulation needs at least one task".into()));
    }
    let mut state = NegotiationState::with_plasticity(initial_rate, plasticity)?;
    for _ in 0..num_tasks {
        state.next_rate();
    }
    Ok(state.capacity_shares)
}

/// BCE-form distance between a prediction vector and a {0,1} code: the mean
/// over positions of the cross-entropy against `sigmoid(bit + epsilon)`.
pub fn representation_distance(
    pred: &[f64],
    code: &[u8],
    epsilon: f64,
    sigmoid: SigmoidCfg,
) -> f64 {
    assert_eq!(pred.len(), code.len(), "prediction/code length mismatch");
    let mut sum = 0.0;
    for (&m, &w) in pred.iter().zip(code) {
        let p = sigmoid.apply(f64::from(w) + epsilon);
        sum -= m * p.ln() + (1.0 - m) * (1.0 - p).ln();
    }
    sum / pred.len() as f64
}

/// First index achieving the minimum (strict comparison, so ties keep the
/// lowest index).
pub(crate) fn argmin_first(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, value) in values {
        match best {
            Some((_, d)) if value >= d => {}
            _ => best = Some((idx, value)),
        }
    }
    best.map(|(idx, _)| idx)
}

/// The available Walsh row nearest to `mean_pred` under the representation
/// distance. Ties pick the lowest row index.
pub fn nearest_available_row(
    mean_pred: &[f64],
    reg: &WalshRegistry,
    epsilon: f64,
    sigmoid: SigmoidCfg,
) -> Result<usize> {
    argmin_first(reg.available_rows().map(|row| {
        (
            row,
            representation_distance(mean_pred, reg.matrix().row(row), epsilon, sigmoid),
        )
    }))
    .ok_or(Error::RegistryExhausted)
}

/// Predicts the mean output over a class's samples and assigns the nearest
/// available Walsh row to the class. Returns the chosen row index.
pub fn assign_nearest_representation(
    net: &Network,
    class_samples: &Tensor,
    reg: &mut WalshRegistry,
    class_label: usize,
    epsilon: f64,
    sigmoid: SigmoidCfg,
) -> Result<usize> {
    if reg.assignments().contains_key(&class_label) {
        return Err(Error::ClassAssigned { class: class_label });
    }
    let preds = net.forward_batched(class_samples, EVAL_SUB_BATCH)?;
    let n = preds.batch_len();
    let units = preds.row_len();
    let mut mean = vec![0.0; units];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(preds.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let row = nearest_available_row(&mean, reg, epsilon, sigmoid)?;
    reg.mark_assigned(class_label, row)?;
    Ok(row)
}

/// Per-sample training targets for one task, blended once from the model's
/// pre-task predictions and the assigned codes.
#[derive(Debug, Clone)]
pub struct NegotiatedTargets {
    pub targets: Tensor,
    pub labels: Vec<usize>,
    pub rate_used: f64,
}

/// Blends already-computed predictions with the assigned codes:
/// `rate * pred + (1 - rate) * code(label)`, elementwise per sample.
pub fn blend_targets(
    preds: &Tensor,
    labels: &[usize],
    reg: &WalshRegistry,
    rate: f64,
) -> Result<Tensor> {
    if preds.batch_len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions with {} labels",
            preds.batch_len(),
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("blend rate {rate} outside [0, 1]")));
    }
    let units = preds.row_len();
    let mut targets = preds.clone();
    for (i, &label) in labels.iter().enumerate() {
        let code = reg.representation_of(label)?;
        if code.len() != units {
            return Err(Error::Shape(format!(
                "code length {} does not match {units} output units",
                code.len()
            )));
        }
        let row = &mut targets.data_mut()[i * units..(i + 1) * units];
        for (t, &bit) in row.iter_mut().zip(code) {
            *t = rate * *t + (1.0 - rate) * f64::from(bit);
        }
    }
    Ok(targets)
}

/// `target_i = rate * forward(net, x_i) + (1 - rate) * code(label_i)`,
/// computed before the task's training epochs begin.
pub fn build_negotiated_targets(
    net: &Network,
    samples: &Tensor,
    labels: &[usize],
    reg: &WalshRegistry,
    state: &NegotiationState,
) -> Result<NegotiatedTargets> {
    let rate = state.rate();
    if samples.batch_len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples with {} labels",
            samples.batch_len(),
            labels.len()
        )));
    }
    let preds = net.forward_batched(samples, EVAL_SUB_BATCH)?;
    let targets = blend_targets(&preds, labels, reg, rate)?;
    Ok(NegotiatedTargets {
        targets,
        labels: labels.to_vec(),
        rate_used: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_network, Dims, LayerSpec};
    use crate::walsh::build_walsh;

    #[test]
    fn plasticity_reference_values() {
        let p = optimal_plasticity(0.8).unwrap();
        assert!((p - 1.0 / 0.96).abs() < 1e-15);
        assert!((p - 1.0416666666666667).abs() < 1e-12);
        let p = optimal_plasticity(0.5).unwrap();
        assert!((p - 4.0 / 3.0).abs() < 1e-15);
        assert!(optimal_plasticity(0.0).is_err());
        assert!(optimal_plasticity(1.0).is_err());
        assert!(optimal_plasticity(-0.2).is_err());
        assert!(optimal_plasticity(1.5).is_err());
    }

    #[test]
    fn plasticity_composition_matches_closed_form() {
        for rate in [0.1, 0.3, 0.5, 0.8, 0.95] {
            let composed = rate * optimal_plasticity(rate).unwrap();
            assert!((composed - scheduled_next_rate(rate)).abs() < 1e-15);
        }
        assert_eq!(scheduled_next_rate(1.0), 1.0);
    }

    #[test]
    fn next_rate_reference_values() {
        let mut s = NegotiationState::new(0.8).unwrap();
        s.next_rate();
        assert!((s.rate() - 1.0 / 1.2).abs() < 1e-15);
        assert_eq!(s.tasks_seen(), 2);

        let mut s = NegotiationState::new(0.5).unwrap();
        s.next_rate();
        assert!((s.rate() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rate_climbs_toward_one() {
        let mut s = NegotiationState::new(0.2).unwrap();
        let mut prev = s.rate();
        for _ in 0..60 {
            s.next_rate();
            assert!(s.rate() > prev);
            assert!(s.rate() <= 1.0);
            prev = s.rate();
        }
        assert!((s.rate() - 1.0).abs() < 0.02);
    }

    #[test]
    fn capacity_single_task() {
        let shares = simulate_capacity(0.8, 1).unwrap();
        assert_eq!(shares.len(), 1);
        assert!((shares[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn capacity_two_tasks_equal_sixths() {
        let shares = simulate_capacity(0.8, 2).unwrap();
        assert_eq!(shares.len(), 2);
        assert!((shares[0] - 1.0 / 6.0).abs() < 1e-12, "{shares:?}");
        assert!((shares[1] - 1.0 / 6.0).abs() < 1e-12, "{shares:?}");
    }

    #[test]
    fn ledger_sums_to_one() {
        let mut s = NegotiationState::new(0.37).unwrap();
        for _ in 0..25 {
            s.next_rate();
            let total: f64 = s.free_share() + s.capacity_shares().iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(s.capacity_shares().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn fixed_rate_shares_decay_with_age() {
        let shares = simulate_capacity_with(0.8, 10, PlasticityMode::Fixed(1.0)).unwrap();
        for pair in shares.windows(2) {
            assert!(pair[0] < pair[1], "older task should hold less: {shares:?}");
        }
    }

    #[test]
    fn argmin_breaks_ties_low() {
        let vals = [(2usize, 0.7), (4, 0.5), (9, 0.5), (11, 0.6)];
        assert_eq!(argmin_first(vals.into_iter()), Some(4));
        assert_eq!(argmin_first(std::iter::empty()), None);
    }

    #[test]
    fn distance_prefers_frozen_reference_row() {
        // Mean prediction high exactly where 10101010 has ones.
        let reg = WalshRegistry::new(build_walsh(8));
        let mean = [0.9, 0.12, 0.88, 0.1, 0.9, 0.11, 0.9, 0.1];
        let row = nearest_available_row(&mean, &reg, 1e-7, SigmoidCfg::plain()).unwrap();
        assert_eq!(row, 1);
        let d1 = representation_distance(&mean, reg.matrix().row(1), 1e-7, SigmoidCfg::plain());
        assert!((d1 - 0.555704445467014).abs() < 1e-12, "{d1}");
        let d0 = representation_distance(&mean, reg.matrix().row(0), 1e-7, SigmoidCfg::plain());
        assert!((d0 - 0.812011710499082).abs() < 1e-12, "{d0}");
        let d2 = representation_distance(&mean, reg.matrix().row(2), 1e-7, SigmoidCfg::plain());
        assert!((d2 - 0.749454445467014).abs() < 1e-12, "{d2}");
    }

    #[test]
    fn matching_distribution_wins() {
        // If the mean prediction is exactly the sigmoid image of some row,
        // that row minimizes the cross-entropy among all distinct codes.
        let sigmoid = SigmoidCfg::plain();
        let eps = 1e-7;
        let matrix = build_walsh(8);
        for target_row in [0usize, 3, 5] {
            let reg = WalshRegistry::new(matrix.clone());
            let mean: Vec<f64> = matrix
                .row(target_row)
                .iter()
                .map(|&b| sigmoid.apply(f64::from(b) + eps))
                .collect();
            let chosen = nearest_available_row(&mean, &reg, eps, sigmoid).unwrap();
            assert_eq!(chosen, target_row);
        }
    }

    #[test]
    fn assignment_skips_taken_rows() {
        let mut reg = WalshRegistry::new(build_walsh(8));
        reg.mark_assigned(7, 1).unwrap();
        let mean = [0.9, 0.12, 0.88, 0.1, 0.9, 0.11, 0.9, 0.1];
        // Row 1 would win but is taken; next best is row 2.
        let row = nearest_available_row(&mean, &reg, 1e-7, SigmoidCfg::plain()).unwrap();
        assert_eq!(row, 2);
    }

    #[test]
    fn exhausted_registry_errors() {
        let mut reg = WalshRegistry::new(build_walsh(2));
        reg.mark_assigned(0, 0).unwrap();
        reg.mark_assigned(1, 1).unwrap();
        let err = nearest_available_row(&[0.5, 0.5], &reg, 1e-7, SigmoidCfg::plain()).unwrap_err();
        assert!(matches!(err, Error::RegistryExhausted));
    }

    fn toy_net() -> Network {
        build_network(
            Dims::flat(4),
            &[
                LayerSpec::dense(8),
                LayerSpec::custom_sigmoid(SigmoidCfg::plain()),
            ],
            13,
        )
        .unwrap()
    }

    #[test]
    fn blend_endpoints() {
        let net = toy_net();
        let mut reg = WalshRegistry::new(build_walsh(8));
        reg.mark_assigned(0, 1).unwrap();
        let samples = Tensor::from_vec(&[2, 4], vec![0.1, 0.9, 0.3, 0.7, 0.6, 0.2, 0.8, 0.4]).unwrap();
        let labels = [0usize, 0];

        let zero = NegotiationState::with_plasticity(0.0, PlasticityMode::Optimal).unwrap();
        let t0 = build_negotiated_targets(&net, &samples, &labels, &reg, &zero).unwrap();
        let code: Vec<f64> = reg.representation_of(0).unwrap().iter().map(|&b| f64::from(b)).collect();
        assert_eq!(&t0.targets.row(0), &code.as_slice());
        assert_eq!(&t0.targets.row(1), &code.as_slice());
        assert_eq!(t0.rate_used, 0.0);
        assert_eq!(t0.labels, vec![0, 0]);

        // Rate 1: the target is the model's own prediction, untouched.
        let preds = net.forward(&samples).unwrap();
        let t1 = blend_targets(&preds, &labels, &reg, 1.0).unwrap();
        assert_eq!(t1, preds);
    }

    #[test]
    fn blend_mixes_prediction_and_code() {
        // Prediction 0.5 everywhere and code 10101010 at rate 0.8 gives the
        // alternating 0.6 / 0.4 pattern.
        let mut net = toy_net();
        for p in net.params_mut().iter_mut().flatten() {
            p.weights.data_mut().fill(0.0);
            p.bias.data_mut().fill(0.0);
        }
        let mut reg = WalshRegistry::new(build_walsh(8));
        reg.mark_assigned(3, 1).unwrap();
        let samples = Tensor::from_vec(&[1, 4], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let state = NegotiationState::new(0.8).unwrap();
        let t = build_negotiated_targets(&net, &samples, &[3], &reg, &state).unwrap();
        for (j, &v) in t.targets.row(0).iter().enumerate() {
            let expected = if j % 2 == 0 { 0.6 } else { 0.4 };
            assert!((v - expected).abs() < 1e-12, "position {j}: {v}");
        }
    }

    #[test]
    fn unassigned_label_is_rejected() {
        let net = toy_net();
        let reg = WalshRegistry::new(build_walsh(8));
        let samples = Tensor::from_vec(&[1, 4], vec![0.0; 4]).unwrap();
        let state = NegotiationState::new(0.5).unwrap();
        let err = build_negotiated_targets(&net, &samples, &[2], &reg, &state).unwrap_err();
        assert!(matches!(err, Error::Unassigned { class: 2 }));
    }

    #[test]
    fn assign_via_network_consumes_rows() {
        let net = toy_net();
        let mut reg = WalshRegistry::new(build_walsh(8));
        let mut rng = crate::rng::Rng::new(4);
        let data: Vec<f64> = (0..5 * 4).map(|_| rng.uniform(0.0, 1.0)).collect();
        let samples = Tensor::from_vec(&[5, 4], data).unwrap();
        let row = assign_nearest_representation(&net, &samples, &mut reg, 2, 1e-7, SigmoidCfg::plain())
            .unwrap();
        assert!(!reg.is_available(row));
        assert_eq!(reg.row_of(2).unwrap(), row);
        let err = assign_nearest_representation(&net, &samples, &mut reg, 2, 1e-7, SigmoidCfg::plain())
            .unwrap_err();
        assert!(matches!(err, Error::ClassAssigned { class: 2 }));
    }
}
