//! Distributed RC/LC ladder line stepped with the trapezoidal rule.
//!
//! Unknowns are interleaved as `[v0, i0, v1, i1, ..., i(n-1), vn]`, which makes
//! the implicit system tridiagonal. Node `k` carries shunt capacitance
//! `C_seg` (half that at the two ends); branch `k` joins nodes `k` and `k+1`
//! through `R_seg + L_seg` and is positive toward Bob's end.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Recommended step as a fraction of the shortest segment time constant.
pub const DEFAULT_DT_FRACTION: f64 = 0.1;

/// How an end of the line is terminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Open,
    Grounded,
    /// Ideal voltage source `u0` to ground.
    Battery { u0: f64 },
    /// Voltage source `u0` behind a series damping resistor `r_d`.
    BatteryDamped { u0: f64, r_d: f64 },
}

impl Termination {
    fn is_algebraic(&self) -> bool {
        matches!(self, Termination::Grounded | Termination::Battery { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineModel {
    pub n_segments: usize,
    pub r_seg: f64,
    pub l_seg: f64,
    pub c_seg: f64,
    pub end_a: Termination,
    pub end_b: Termination,
    /// Temperature of damping resistors (K).
    pub damping_temperature: f64,
}

impl LineModel {
    /// Ladder approximation of a uniform line with per-metre parameters.
    pub fn uniform(length: f64, r_per_m: f64, l_per_m: f64, c_per_m: f64, n_segments: usize) -> Self {
        let seg = length / n_segments as f64;
        LineModel {
            n_segments,
            r_seg: r_per_m * seg,
            l_seg: l_per_m * seg,
            c_seg: c_per_m * seg,
            end_a: Termination::Open,
            end_b: Termination::Open,
            damping_temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 8 {
            return domain(format!("need at least 8 segments, got {}", self.n_segments));
        }
        if !(self.r_seg >= 0.0 && self.l_seg >= 0.0 && self.c_seg > 0.0) {
            return domain("segment R, L must be >= 0 and C > 0");
        }
        if self.l_seg == 0.0 && self.r_seg == 0.0 {
            return domain("a segment needs R > 0 or L > 0");
        }
        for t in [self.end_a, self.end_b] {
            if let Termination::BatteryDamped { r_d, .. } = t {
                if !(r_d > 0.0) {
                    return domain("damping resistance must be positive");
                }
            }
        }
        Ok(())
    }

    /// Characteristic impedance `sqrt(L/C)`, defined only for `L > 0`.
    pub fn wave_impedance(&self) -> Option<f64> {
        (self.l_seg > 0.0).then(|| (self.l_seg / self.c_seg).sqrt())
    }

    /// Travel time across the whole line and back.
    pub fn round_trip_time(&self) -> f64 {
        if self.l_seg > 0.0 {
            2.0 * self.n_segments as f64 * (self.l_seg * self.c_seg).sqrt()
        } else {
            // Diffusion time of the RC line.
            let n = self.n_segments as f64;
            n * n * self.r_seg * self.c_seg
        }
    }

    pub fn recommended_dt(&self) -> f64 {
        let mut dt = f64::INFINITY;
        if self.r_seg > 0.0 {
            dt = dt.min(DEFAULT_DT_FRACTION * self.r_seg * self.c_seg);
        }
        if self.l_seg > 0.0 {
            dt = dt.min(DEFAULT_DT_FRACTION * (self.l_seg * self.c_seg).sqrt());
        }
        dt
    }

    /// Largest accepted step: ten times the recommended one.
    pub fn max_dt(&self) -> f64 {
        self.recommended_dt() / DEFAULT_DT_FRACTION
    }

    pub fn mirrored(&self) -> LineModel {
        LineModel { end_a: self.end_b, end_b: self.end_a, ..self.clone() }
    }

    fn node_capacitance(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_segments {
            0.5 * self.c_seg
        } else {
            self.c_seg
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineState {
    pub node_voltages: Vec<f64>,
    pub branch_currents: Vec<f64>,
    pub time: f64,
}

impl LineState {
    pub fn zero(model: &LineModel) -> Self {
        LineState {
            node_voltages: vec![0.0; model.n_segments + 1],
            branch_currents: vec![0.0; model.n_segments],
            time: 0.0,
        }
    }

    pub fn mirrored(&self) -> LineState {
        LineState {
            node_voltages: self.node_voltages.iter().rev().copied().collect(),
            branch_currents: self.branch_currents.iter().rev().map(|i| -i).collect(),
            time: self.time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.node_voltages.iter().chain(&self.branch_currents).all(|v| v.is_finite())
    }
}

/// Instantaneous end stimuli.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Drive {
    /// Envelope multiplying each battery voltage (1 = full `u0`).
    pub scale_a: f64,
    pub scale_b: f64,
    /// Johnson emf in series with each damping resistor.
    pub emf_a: f64,
    pub emf_b: f64,
    /// Series emf per branch (empty = none), positive toward Bob.
    pub branch_emf: Vec<f64>,
}

impl Drive {
    pub fn steady() -> Self {
        Drive { scale_a: 1.0, scale_b: 1.0, ..Default::default() }
    }
}

/// Running energy balance of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub injected: f64,
    pub dissipated: f64,
}

/// Stored energy `Σ C v²/2 + Σ L i²/2` over the free nodes and all branches.
pub fn stored_energy(model: &LineModel, state: &LineState) -> f64 {
    let n = model.n_segments;
    let mut e = 0.0;
    for (k, v) in state.node_voltages.iter().enumerate() {
        let algebraic = (k == 0 && model.end_a.is_algebraic()) || (k == n && model.end_b.is_algebraic());
        if !algebraic {
            e += 0.5 * model.node_capacitance(k) * v * v;
        }
    }
    for i in &state.branch_currents {
        e += 0.5 * model.l_seg * i * i;
    }
    e
}

#[derive(Clone)]
struct Tridiag {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Tridiag {
    fn new(m: usize) -> Self {
        Tridiag { lo: vec![0.0; m], di: vec![0.0; m], up: vec![0.0; m] }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let m = x.len();
        for r in 0..m {
            let mut s = self.di[r] * x[r];
            if r > 0 {
                s += self.lo[r] * x[r - 1];
            }
            if r + 1 < m {
                s += self.up[r] * x[r + 1];
            }
            out[r] = s;
        }
    }
}

fn thomas(t: &Tridiag, rhs: &[f64], x: &mut [f64], c: &mut Vec<f64>, d: &mut Vec<f64>) -> Result<()> {
    let m = rhs.len();
    c.resize(m, 0.0);
    d.resize(m, 0.0);
    let mut beta = t.di[0];
    if beta == 0.0 {
        return Err(Error::Numerical("singular ladder system".into()));
    }
    c[0] = t.up[0] / beta;
    d[0] = rhs[0] / beta;
    for r in 1..m {
        beta = t.di[r] - t.lo[r] * c[r - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Numerical("singular ladder system".into()));
        }
        c[r] = t.up[r] / beta;
        d[r] = (rhs[r] - t.lo[r] * d[r - 1]) / beta;
    }
    x[m - 1] = d[m - 1];
    for r in (0..m - 1).rev() {
        x[r] = d[r] - c[r] * x[r + 1];
    }
    Ok(())
}

#[derive(Clone)]
struct Assembly {
    a: Tridiag,
    mass: Vec<f64>,
    b: Vec<f64>,
    alg: Vec<bool>,
    ends: (Termination, Termination),
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    x: Vec<f64>,
    ax: Vec<f64>,
    rhs: Vec<f64>,
    x1: Vec<f64>,
    scratch_c: Vec<f64>,
    scratch_d: Vec<f64>,
}

/// Time-stepping driver for one line instance.
#[derive(Debug, Clone)]
pub struct LineSim {
    pub model: LineModel,
    pub state: LineState,
    pub dt: f64,
    pub ledger: EnergyLedger,
    drive: Drive,
    /// Assembly for `drive` under the current terminations, reused as the
    /// old-time operator of the next step.
    cache: Option<Assembly>,
    work: Workspace,
}

impl std::fmt::Debug for Assembly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Assembly").field("ends", &self.ends).finish_non_exhaustive()
    }
}

impl LineSim {
    pub fn new(model: LineModel, dt: f64) -> Result<Self> {
        model.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return domain("time step must be positive");
        }
        let bound = model.max_dt();
        if dt > bound {
            return Err(Error::UnstableStep { dt, bound });
        }
        let state = LineState::zero(&model);
        Ok(LineSim {
            model,
            state,
            dt,
            ledger: EnergyLedger::default(),
            drive: Drive::default(),
            cache: None,
            work: Workspace::default(),
        })
    }

    pub fn with_state(mut self, state: LineState, drive: Drive) -> Self {
        self.state = state;
        self.drive = drive;
        self.cache = None;
        self
    }

    /// Re-terminate the ends (switch action); the state is kept.
    pub fn set_terminations(&mut self, end_a: Termination, end_b: Termination) {
        self.model.end_a = end_a;
        self.model.end_b = end_b;
    }

    pub fn stored_energy(&self) -> f64 {
        stored_energy(&self.model, &self.state)
    }

    /// Assemble `A` (tridiagonal), the mass diagonal and `b` for a drive.
    fn assemble(&self, drive: &Drive) -> Assembly {
        let n = self.model.n_segments;
        let m = 2 * n + 1;
        let mut a = Tridiag::new(m);
        let mut mass = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut alg = vec![false; m];
        for k in 0..=n {
            let r = 2 * k;
            let term = if k == 0 {
                Some((self.model.end_a, drive.scale_a, drive.emf_a))
            } else if k == n {
                Some((self.model.end_b, drive.scale_b, drive.emf_b))
            } else {
                None
            };
            match term {
                Some((Termination::Grounded, _, _)) => {
                    a.di[r] = -1.0;
                    alg[r] = true;
                    continue;
                }
                Some((Termination::Battery { u0 }, s, _)) => {
                    a.di[r] = -1.0;
                    b[r] = s * u0;
                    alg[r] = true;
                    continue;
                }
                Some((Termination::BatteryDamped { u0, r_d }, s, e)) => {
                    a.di[r] = -1.0 / r_d;
                    b[r] = (s * u0 + e) / r_d;
                }
                _ => {}
            }
            mass[r] = self.model.node_capacitance(k);
            if k > 0 {
                a.lo[r] = 1.0;
            }
            if k < n {
                a.up[r] = -1.0;
            }
        }
        for k in 0..n {
            let r = 2 * k + 1;
            a.lo[r] = 1.0;
            a.up[r] = -1.0;
            a.di[r] = -self.model.r_seg;
            b[r] = drive.branch_emf.get(k).copied().unwrap_or(0.0);
            mass[r] = self.model.l_seg;
            alg[r] = self.model.l_seg == 0.0;
        }
        Assembly { a, mass, b, alg, ends: (self.model.end_a, self.model.end_b) }
    }

    fn pack_into(&self, x: &mut Vec<f64>) {
        let n = self.model.n_segments;
        x.resize(2 * n + 1, 0.0);
        for k in 0..=n {
            x[2 * k] = self.state.node_voltages[k];
        }
        for k in 0..n {
            x[2 * k + 1] = self.state.branch_currents[k];
        }
    }

    /// Advance one trapezoidal step to the stimuli `next`.
    pub fn step(&mut self, next: Drive) -> Result<()> {
        let h = self.dt;
        let ends = (self.model.end_a, self.model.end_b);
        let old = match self.cache.take() {
            Some(c) if c.ends == ends => c,
            _ => self.assemble(&self.drive),
        };
        let new = self.assemble(&next);
        let mut w = std::mem::take(&mut self.work);
        self.pack_into(&mut w.x);
        let m = w.x.len();
        w.ax.resize(m, 0.0);
        w.rhs.resize(m, 0.0);
        w.x1.resize(m, 0.0);
        old.a.mul(&w.x, &mut w.ax);
        let mut lhs = Tridiag::new(m);
        let (a1, mass, alg) = (&new.a, &new.mass, &new.alg);
        for r in 0..m {
            if alg[r] {
                lhs.lo[r] = -a1.lo[r];
                lhs.di[r] = -a1.di[r];
                lhs.up[r] = -a1.up[r];
                w.rhs[r] = new.b[r];
            } else {
                lhs.lo[r] = -0.5 * h * a1.lo[r];
                lhs.di[r] = mass[r] - 0.5 * h * a1.di[r];
                lhs.up[r] = -0.5 * h * a1.up[r];
                w.rhs[r] = mass[r] * w.x[r] + 0.5 * h * (w.ax[r] + old.b[r] + new.b[r]);
            }
        }
        let solved = thomas(&lhs, &w.rhs, &mut w.x1, &mut w.scratch_c, &mut w.scratch_d);
        if let Err(e) = solved {
            self.work = w;
            return Err(e);
        }
        self.account(&w.x, &w.x1, &next);
        let n = self.model.n_segments;
        for k in 0..=n {
            self.state.node_voltages[k] = w.x1[2 * k];
        }
        for k in 0..n {
            self.state.branch_currents[k] = w.x1[2 * k + 1];
        }
        self.work = w;
        self.state.time += h;
        self.drive = next;
        self.cache = Some(new);
        if !self.state.is_finite() {
            return Err(Error::Numerical(format!("non-finite line state at t = {:e}", self.state.time)));
        }
        Ok(())
    }

    /// Midpoint-product energy bookkeeping, exact for the trapezoidal update.
    fn account(&mut self, x0: &[f64], x1: &[f64], next: &Drive) {
        let h = self.dt;
        let n = self.model.n_segments;
        let mid = |r: usize| 0.5 * (x0[r] + x1[r]);
        let avg = |a: f64, b: f64| 0.5 * (a + b);
        let (mut inj, mut dis) = (0.0, 0.0);
        for k in 0..n {
            let i = mid(2 * k + 1);
            dis += self.model.r_seg * i * i;
            let e = avg(
                self.drive.branch_emf.get(k).copied().unwrap_or(0.0),
                next.branch_emf.get(k).copied().unwrap_or(0.0),
            );
            inj += e * i;
        }
        let ends = [
            (self.model.end_a, 0usize, mid(1), avg(self.drive.scale_a, next.scale_a), avg(self.drive.emf_a, next.emf_a)),
            (self.model.end_b, 2 * n, -mid(2 * n - 1), avg(self.drive.scale_b, next.scale_b), avg(self.drive.emf_b, next.emf_b)),
        ];
        for (term, r, i_out, s, e) in ends {
            let v = mid(r);
            match term {
                Termination::Battery { .. } | Termination::Grounded => inj += v * i_out,
                Termination::BatteryDamped { u0, r_d } => {
                    let src = s * u0 + e;
                    let i_d = (src - v) / r_d;
                    inj += src * i_d;
                    dis += r_d * i_d * i_d;
                }
                Termination::Open => {}
            }
        }
        self.ledger.injected += h * inj;
        self.ledger.dissipated += h * dis;
    }
}

/// Recorded (possibly decimated) sequence of line states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineHistory {
    pub states: Vec<LineState>,
    /// Time between recorded states.
    pub dt: f64,
}

impl LineHistory {
    pub fn new(dt: f64) -> Self {
        LineHistory { states: Vec::new(), dt }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time series of the voltage at node `k`.
    pub fn node_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.node_voltages[k]).collect()
    }

    /// Time series of the current in branch `k`.
    pub fn branch_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.branch_currents[k]).collect()
    }

    /// Voltage at the midpoint of branch `k` (average of its two nodes).
    pub fn branch_voltage_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| 0.5 * (s.node_voltages[k] + s.node_voltages[k + 1])).collect()
    }

    pub fn mirrored(&self) -> LineHistory {
        LineHistory { states: self.states.iter().map(LineState::mirrored).collect(), dt: self.dt }
    }

    /// Sub-history of states with index in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LineHistory {
        LineHistory { states: self.states[range].to_vec(), dt: self.dt }
    }
}
