//! Finite flows of deterministic generators `τ(t) ∂t + φ(t, x) ∂x`.

use std::collections::HashMap;

use super::{NumericError, PathEnsemble};
use crate::determining::VectorField;
use crate::expr::CompiledExpr;

/// RK4 substeps per unit flow integration.
pub const FLOW_SUBSTEPS: usize = 64;

const HALVING_TOL: f64 = 1e-8;

/// Flow of a generator at parameter `ε`: new time `β_ε(t)`, new state
/// `F_ε(t, x)`, and `η_ε² = ∂β_ε/∂t` from the variational equation.
#[derive(Clone, Debug)]
pub struct FlowMap {
    eps: f64,
    substeps: usize,
    tau: CompiledExpr,
    tau_t: CompiledExpr,
    phi: CompiledExpr,
}

/// RK4 trajectory of the time coordinate, with the four stage times of each
/// substep, which is all the state equation needs.
struct TimeTrack {
    beta: f64,
    eta2: f64,
    stages: Vec<[f64; 4]>,
}

impl FlowMap {
    pub fn new(v: &VectorField, eps: f64, params: &HashMap<String, f64>) -> Result<Self, NumericError> {
        let v = v.simplify();
        if !v.phi_s.is_zero() {
            return Err(NumericError::UnsupportedField(format!("stochastic part {} is nonzero", v.phi_s)));
        }
        if v.tau.depends_on("x") {
            return Err(NumericError::UnsupportedField(format!("tau = {} depends on x", v.tau)));
        }
        if !eps.is_finite() {
            return Err(NumericError::Settings(format!("flow parameter {eps} is not finite")));
        }
        Ok(FlowMap {
            eps,
            substeps: FLOW_SUBSTEPS,
            tau: v.tau.compile_with_params(params)?,
            tau_t: v.tau.diff("t").simplify().compile_with_params(params)?,
            phi: v.phi.compile_with_params(params)?,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn track(&self, t: f64, n: usize) -> Result<TimeTrack, NumericError> {
        let h = self.eps / n as f64;
        let tau = |b: f64| self.tau.eval(&[b, 0.0]);
        let dtau = |b: f64| self.tau_t.eval(&[b, 0.0]);
        let (mut b, mut j) = (t, 1.0);
        let mut stages = Vec::with_capacity(n);
        for _ in 0..n {
            let k1 = tau(b)?;
            let b2 = b + 0.5 * h * k1;
            let k2 = tau(b2)?;
            let b3 = b + 0.5 * h * k2;
            let k3 = tau(b3)?;
            let b4 = b + h * k3;
            let k4 = tau(b4)?;
            let l1 = dtau(b)? * j;
            let l2 = dtau(b2)? * (j + 0.5 * h * l1);
            let l3 = dtau(b3)? * (j + 0.5 * h * l2);
            let l4 = dtau(b4)? * (j + h * l3);
            stages.push([b, b2, b3, b4]);
            b += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            j += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        }
        if !(b.is_finite() && j.is_finite()) {
            return Err(NumericError::FlowNotConverged(f64::INFINITY));
        }
        Ok(TimeTrack { beta: b, eta2: j, stages })
    }

    fn push_state(&self, track: &TimeTrack, x: f64, stack: &mut Vec<f64>) -> Result<f64, NumericError> {
        let n = track.stages.len();
        let h = self.eps / n as f64;
        let mut f = x;
        for s in &track.stages {
            let k1 = self.phi.eval_in(&[s[0], f], stack)?;
            let k2 = self.phi.eval_in(&[s[1], f + 0.5 * h * k1], stack)?;
            let k3 = self.phi.eval_in(&[s[2], f + 0.5 * h * k2], stack)?;
            let k4 = self.phi.eval_in(&[s[3], f + h * k3], stack)?;
            f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if f.is_finite() {
            Ok(f)
        } else {
            Err(NumericError::FlowNotConverged(f64::INFINITY))
        }
    }

    /// `β_ε(t)`.
    pub fn beta(&self, t: f64) -> Result<f64, NumericError> {
        Ok(self.track(t, self.substeps)?.beta)
    }

    /// `η_ε²(t) = ∂β_ε/∂t`.
    pub fn eta2(&self, t: f64) -> Result<f64, NumericError> {
        Ok(self.track(t, self.substeps)?.eta2)
    }

    /// `η_ε(t)`; fails where the time change is not increasing.
    pub fn eta(&self, t: f64) -> Result<f64, NumericError> {
        let e2 = self.eta2(t)?;
        if e2 > 0.0 {
            Ok(e2.sqrt())
        } else {
            Err(NumericError::NotMonotone { t, value: e2 })
        }
    }

    /// `(β_ε(t), F_ε(t, x))`.
    pub fn apply(&self, t: f64, x: f64) -> Result<(f64, f64), NumericError> {
        let tr = self.track(t, self.substeps)?;
        Ok((tr.beta, self.push_state(&tr, x, &mut Vec::new())?))
    }

    /// Like [`apply`](Self::apply), failing unless doubling the substep
    /// count moves the result by less than `1e-8` (relative above 1).
    pub fn apply_checked(&self, t: f64, x: f64) -> Result<(f64, f64), NumericError> {
        let coarse = self.apply(t, x)?;
        let tr = self.track(t, 2 * self.substeps)?;
        let fine = (tr.beta, self.push_state(&tr, x, &mut Vec::new())?);
        let dev =
            ((coarse.0 - fine.0).abs() / fine.0.abs().max(1.0)).max((coarse.1 - fine.1).abs() / fine.1.abs().max(1.0));
        if dev < HALVING_TOL {
            Ok(coarse)
        } else {
            Err(NumericError::FlowNotConverged(dev))
        }
    }

    /// `α_ε(t̄)`: the `t` with `β_ε(t) = t̄`, by safeguarded Newton.
    pub fn alpha(&self, tbar: f64) -> Result<f64, NumericError> {
        // The reverse flow is an excellent first guess.
        let reverse = FlowMap { eps: -self.eps, ..self.clone() };
        let guess = reverse.beta(tbar)?;
        let g = |t: f64| self.beta(t).map(|b| b - tbar);
        let mut width = 1e-6 * guess.abs().max(1.0);
        let (mut lo, mut hi) = (guess - width, guess + width);
        let (mut glo, mut ghi) = (g(lo)?, g(hi)?);
        let mut expansions = 0;
        while glo > 0.0 || ghi < 0.0 {
            expansions += 1;
            if expansions > 60 {
                return Err(NumericError::NotMonotone { t: guess, value: ghi - glo });
            }
            width *= 4.0;
            if glo > 0.0 {
                lo = guess - width;
                glo = g(lo)?;
            }
            if ghi < 0.0 {
                hi = guess + width;
                ghi = g(hi)?;
            }
        }
        let mut t = guess.clamp(lo, hi);
        for _ in 0..100 {
            let tr = self.track(t, self.substeps)?;
            let r = tr.beta - tbar;
            if r.abs() <= 1e-14 * tbar.abs().max(1.0) {
                return Ok(t);
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - r / tr.eta2;
            t = if tr.eta2 > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * t.abs().max(1.0) {
                return Ok(t);
            }
        }
        Ok(t)
    }

    /// Image times and transformed states of the given grid nodes.
    ///
    /// Step halving is checked on the time change at every node and on the
    /// state equation for the first 16 live paths.
    pub(crate) fn transform_nodes(
        &self,
        ens: &PathEnsemble,
        nodes: &[usize],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>), NumericError> {
        let mut tracks = Vec::with_capacity(nodes.len());
        for &k in nodes {
            let t = ens.times[k];
            let tr = self.track(t, self.substeps)?;
            if !(tr.eta2 > 0.0) {
                return Err(NumericError::NotMonotone { t, value: tr.eta2 });
            }
            let fine = self.track(t, 2 * self.substeps)?.beta;
            let dev = (tr.beta - fine).abs() / fine.abs().max(1.0);
            if dev >= HALVING_TOL {
                return Err(NumericError::FlowNotConverged(dev));
            }
            tracks.push(tr);
        }
        let image: Vec<f64> = tracks.iter().map(|t| t.beta).collect();
        if let Some(w) = image.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(NumericError::NotMonotone { t: w[0], value: w[1] - w[0] });
        }
        let live: Vec<usize> = (0..ens.n_paths()).filter(|&i| !ens.is_aborted(i)).collect();
        for &i in live.iter().take(16) {
            for &k in nodes {
                self.apply_checked(ens.times[k], ens.path(i)[k])?;
            }
        }
        let idx: Vec<usize> = (0..ens.n_paths()).collect();
        let rows = crate::par_map(&idx, |&i| -> Result<Vec<f64>, NumericError> {
            let mut stack = Vec::new();
            let path = ens.path(i);
            nodes
                .iter()
                .zip(&tracks)
                .map(|(&k, tr)| if path[k].is_nan() { Ok(f64::NAN) } else { self.push_state(tr, path[k], &mut stack) })
                .collect()
        });
        let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok((image, rows))
    }
}

/// Push every node of every path through the flow of `v` at `ε`.
///
/// The transformed ensemble lives on the image grid `β_ε(t_k)`; it keeps
/// the source increments and abort flags.
pub fn flow_apply(
    ens: &PathEnsemble,
    v: &VectorField,
    eps: f64,
    params: &HashMap<String, f64>,
) -> Result<(FlowMap, PathEnsemble), NumericError> {
    let flow = FlowMap::new(v, eps, params)?;
    let nodes: Vec<usize> = (0..ens.times.len()).collect();
    let (image, rows) = flow.transform_nodes(ens, &nodes)?;
    let states = rows.into_iter().flatten().collect();
    let increments = (0..ens.n_paths()).flat_map(|i| ens.increments(i).iter().copied()).collect();
    let aborted = (0..ens.n_paths()).map(|i| ens.is_aborted(i)).collect();
    Ok((flow, PathEnsemble::from_parts(image, ens.seed, states, increments, aborted)))
}
