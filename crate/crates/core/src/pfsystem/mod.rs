//! Rectangular power-flow residual map and its analytic sparse Jacobian.
//!
//! The system is square: for each PQ bus, rows [active balance, reactive
//! balance, upper voltage limit, lower voltage limit] over variables
//! [v_re, v_im, s_up, s_lo]; for each PV bus, rows [active balance, voltage
//! setpoint] over [v_re, v_im]. Rows and variables are interleaved per bus in
//! case order, so the Jacobian pattern is fixed by topology alone. The slack
//! bus is data, not unknowns: its voltage enters the current sums as constants
//! and it contributes no rows.
//!
//! Voltage-limit rows encode v_min <= |V| <= v_max through slack variables:
//!   |V|^2 - v_max^2 + s_up^2 = 0,     |V|^2 - v_min^2 - s_lo^2 = 0,
//! which have a real solution exactly when |V| lies inside the band.

use crate::netcase::{build_ybus, AdmittanceMatrix, BusKind, BusRecord, CaseError, NetworkCase};
use crate::sparse::{SparseMatrix, SparsePattern};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;


/// A slack variable smaller than this counts as an active voltage limit.
pub const TOL_ACTIVE: f64 = 1e-4;

/// Maximum number of continuation parameters.
pub const MAX_PARAMS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum PfError {
    #[error("state vector has length {got}, system expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter binding: {0}")]
    InvalidBinding(String),
}

/// Which bus injection a continuation parameter stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionQty {
    ActivePower,
    ReactivePower,
}

/// How one parameter couples to the case injections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// Scales every case injection (active and reactive) by the parameter.
    Uniform,
    /// Replaces the named bus injection with the parameter value outright;
    /// all other injections keep their case values.
    Bus { id: usize, qty: InjectionQty },
}

/// Parameter vector λ with its injection bindings, 1 to 3 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    bindings: Vec<Binding>,
    values: Vec<f64>,
}

impl ParameterVector {
    /// Single parameter scaling all injections uniformly.
    pub fn uniform(value: f64) -> Self {
        Self { bindings: vec![Binding::Uniform], values: vec![value] }
    }

    pub fn with_bindings(bindings: Vec<Binding>, values: Vec<f64>) -> Result<Self, PfError> {
        if bindings.is_empty() || bindings.len() > MAX_PARAMS {
            return Err(PfError::InvalidBinding(format!(
                "expected 1 to {MAX_PARAMS} parameters, got {}",
                bindings.len()
            )));
        }
        if bindings.len() != values.len() {
            return Err(PfError::InvalidBinding(format!(
                "{} bindings but {} values",
                bindings.len(),
                values.len()
            )));
        }
        for (j, b) in bindings.iter().enumerate() {
            if bindings[..j].contains(b) {
                return Err(PfError::InvalidBinding(format!("binding {b:?} appears twice")));
            }
        }
        Ok(Self { bindings, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_value(&mut self, j: usize, v: f64) {
        self.values[j] = v;
    }

    /// Effective (P, Q) injection at a bus: uniform scaling first, then any
    /// per-bus binding replaces its quantity outright.
    fn injections(&self, bus: &BusRecord) -> (f64, f64) {
        let (mut p, mut q) = (bus.p_net(), bus.q_net());
        for (j, b) in self.bindings.iter().enumerate() {
            if matches!(b, Binding::Uniform) {
                p *= self.values[j];
                q *= self.values[j];
            }
        }
        for (j, b) in self.bindings.iter().enumerate() {
            if let Binding::Bus { id, qty } = b {
                if *id == bus.id {
                    match qty {
                        InjectionQty::ActivePower => p = self.values[j],
                        InjectionQty::ReactivePower => q = self.values[j],
                    }
                }
            }
        }
        (p, q)
    }

    /// d(P, Q)/dλ_j at a bus, mirroring [`Self::injections`].
    fn injection_derivs(&self, bus: &BusRecord, j: usize) -> (f64, f64) {
        let replaced_p = self.replaced(bus, InjectionQty::ActivePower);
        let replaced_q = self.replaced(bus, InjectionQty::ReactivePower);
        match self.bindings[j] {
            Binding::Uniform => (
                if replaced_p.is_some() { 0.0 } else { bus.p_net() },
                if replaced_q.is_some() { 0.0 } else { bus.q_net() },
            ),
            Binding::Bus { id, qty } => {
                if id != bus.id {
                    (0.0, 0.0)
                } else {
                    match qty {
                        InjectionQty::ActivePower => (1.0, 0.0),
                        InjectionQty::ReactivePower => (0.0, 1.0),
                    }
                }
            }
        }
    }

    fn replaced(&self, bus: &BusRecord, want: InjectionQty) -> Option<usize> {
        self.bindings.iter().position(
            |b| matches!(b, Binding::Bus { id, qty } if *id == bus.id && *qty == want),
        )
    }

    fn validate_for(&self, case: &NetworkCase) -> Result<(), PfError> {
        for b in &self.bindings {
            if let Binding::Bus { id, qty } = b {
                let Some(pos) = case.position_of(*id) else {
                    return Err(PfError::InvalidBinding(format!("no bus with id {id}")));
                };
                let bus = &case.buses[pos];
                if bus.kind == BusKind::Slack {
                    return Err(PfError::InvalidBinding(format!(
                        "bus {id} is the slack bus; its injection is not an equation"
                    )));
                }
                if *qty == InjectionQty::ReactivePower && bus.kind != BusKind::Pq {
                    return Err(PfError::InvalidBinding(format!(
                        "bus {id} has no reactive balance row (kind {:?})",
                        bus.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Whether voltage-limit rows (and their slack variables) are part of the
/// system. `Exclude` gives the bare solvability system: balance rows only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitRows {
    Include,
    Exclude,
}

/// One non-slack bus's block of the interleaved state/row layout.
#[derive(Debug, Clone, Copy)]
pub struct BusSlot {
    /// Index into `case.buses` (= ybus row).
    pub bus_pos: usize,
    /// First variable/row index of this block; v_re at `start`, v_im at
    /// `start + 1`, then s_up, s_lo when the block carries limit rows.
    pub start: usize,
    pub has_limits: bool,
}

impl BusSlot {
    pub fn width(&self) -> usize {
        if self.has_limits {
            4
        } else {
            2
        }
    }
}

/// Variable and row indexing for a case: one block per non-slack bus.
#[derive(Debug, Clone)]
pub struct SystemLayout {
    slots: Vec<BusSlot>,
    var_of_bus: Vec<Option<usize>>,
    n: usize,
}

impl SystemLayout {
    fn build(case: &NetworkCase, limits: LimitRows) -> Self {
        let mut slots = Vec::new();
        let mut var_of_bus = vec![None; case.buses.len()];
        let mut next = 0usize;
        for (pos, bus) in case.buses.iter().enumerate() {
            if bus.kind == BusKind::Slack {
                continue;
            }
            let has_limits =
                limits == LimitRows::Include && bus.kind == BusKind::Pq && bus.band().is_some();
            let slot = BusSlot { bus_pos: pos, start: next, has_limits };
            var_of_bus[pos] = Some(next);
            next += slot.width();
            slots.push(slot);
        }
        Self { slots, var_of_bus, n: next }
    }

    /// System dimension (rows = variables).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> &[BusSlot] {
        &self.slots
    }

    /// First variable index of a bus position, `None` for the slack bus.
    pub fn var_of_bus(&self, bus_pos: usize) -> Option<usize> {
        self.var_of_bus[bus_pos]
    }
}

/// Per-bus voltage-limit activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitFlag {
    Interior,
    AtUpper,
    AtLower,
}

/// Residual vector, analytic Jacobian, and the residual's max norm.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub f: DVector<f64>,
    pub jac: SparseMatrix,
    pub norm_inf: f64,
}

/// Assembled residual map for one case: F(x, λ) with its sparse ∂F/∂x.
#[derive(Debug, Clone)]
pub struct PfSystem {
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    layout: SystemLayout,
    pattern: Arc<SparsePattern>,
}

impl PfSystem {
    pub fn new(case: &NetworkCase, limits: LimitRows) -> Result<Self, CaseError> {
        let ybus = build_ybus(case)?;
        let layout = SystemLayout::build(case, limits);
        let pattern = Arc::new(build_pattern(case, &ybus, &layout));
        Ok(Self { case: case.clone(), ybus, layout, pattern })
    }

    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    pub fn ybus(&self) -> &AdmittanceMatrix {
        &self.ybus
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    /// Flat start: v_re at the reference magnitude, v_im zero, slack
    /// variables solving their limit rows (clamped at zero outside the band).
    pub fn flat_start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.layout.n);
        for slot in &self.layout.slots {
            let bus = &self.case.buses[slot.bus_pos];
            let e = bus.v_ref;
            x[slot.start] = e;
            if slot.has_limits {
                let (lo, hi) = bus.band().expect("limit slot has a band");
                x[slot.start + 2] = (hi * hi - e * e).max(0.0).sqrt();
                x[slot.start + 3] = (e * e - lo * lo).max(0.0).sqrt();
            }
        }
        x
    }

    /// Complex voltage (re, im) at every bus position, slack from case data.
    fn voltages(&self, x: &DVector<f64>) -> Vec<(f64, f64)> {
        self.case
            .buses
            .iter()
            .enumerate()
            .map(|(pos, bus)| match self.layout.var_of_bus(pos) {
                Some(vs) => (x[vs], x[vs + 1]),
                None => (bus.v_ref, 0.0),
            })
            .collect()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), PfError> {
        if x.len() != self.layout.n {
            return Err(PfError::DimensionMismatch { expected: self.layout.n, got: x.len() });
        }
        Ok(())
    }

    /// Evaluate F(x, λ) and ∂F/∂x in one pass.
    pub fn residual(&self, x: &DVector<f64>, lam: &ParameterVector) -> Result<ResidualReport, PfError> {
        self.check_dim(x)?;
        lam.validate_for(&self.case)?;
        let v = self.voltages(x);
        let mut f = DVector::zeros(self.layout.n);
        let mut jac = SparseMatrix::zeros(self.pattern.clone());

        for slot in &self.layout.slots {
            let i = slot.bus_pos;
            let bus = &self.case.buses[i];
            let (ei, fi) = v[i];
            let (mut ire, mut iim) = (0.0, 0.0);
            for ye in self.ybus.row(i) {
                let (ek, fk) = v[ye.col];
                ire += ye.g * ek - ye.b * fk;
                iim += ye.g * fk + ye.b * ek;
            }

            let rp = slot.start;
            let (p_inj, q_inj) = lam.injections(bus);
            f[rp] = ei * ire + fi * iim - p_inj;
            for ye in self.ybus.row(i) {
                if let Some(vs) = self.layout.var_of_bus(ye.col) {
                    jac.add(rp, vs, ei * ye.g + fi * ye.b);
                    jac.add(rp, vs + 1, -ei * ye.b + fi * ye.g);
                }
            }
            let own = slot.start;
            jac.add(rp, own, ire);
            jac.add(rp, own + 1, iim);

            match bus.kind {
                BusKind::Pq => {
                    let rq = slot.start + 1;
                    f[rq] = fi * ire - ei * iim - q_inj;
                    for ye in self.ybus.row(i) {
                        if let Some(vs) = self.layout.var_of_bus(ye.col) {
                            jac.add(rq, vs, fi * ye.g - ei * ye.b);
                            jac.add(rq, vs + 1, -fi * ye.b - ei * ye.g);
                        }
                    }
                    jac.add(rq, own, -iim);
                    jac.add(rq, own + 1, ire);

                    if slot.has_limits {
                        let (lo, hi) = bus.band().expect("limit slot has a band");
                        let m = ei * ei + fi * fi;
                        let (s_up, s_lo) = (x[slot.start + 2], x[slot.start + 3]);
                        let (r_up, r_lo) = (slot.start + 2, slot.start + 3);
                        f[r_up] = m - hi * hi + s_up * s_up;
                        f[r_lo] = m - lo * lo - s_lo * s_lo;
                        for r in [r_up, r_lo] {
                            jac.add(r, own, 2.0 * ei);
                            jac.add(r, own + 1, 2.0 * fi);
                        }
                        jac.add(r_up, slot.start + 2, 2.0 * s_up);
                        jac.add(r_lo, slot.start + 3, -2.0 * s_lo);
                    }
                }
                BusKind::Pv => {
                    let rs = slot.start + 1;
                    f[rs] = ei * ei + fi * fi - bus.v_ref * bus.v_ref;
                    jac.add(rs, own, 2.0 * ei);
                    jac.add(rs, own + 1, 2.0 * fi);
                }
                BusKind::Slack => unreachable!("slack bus has no slot"),
            }
        }

        let norm_inf = f.amax();
        Ok(ResidualReport { f, jac, norm_inf })
    }

    /// ∂F/∂λ as a dense n×p matrix. Only balance rows depend on λ, through
    /// the injections, so the entries are state-independent.
    pub fn lambda_jacobian(&self, lam: &ParameterVector) -> Result<DMatrix<f64>, PfError> {
        lam.validate_for(&self.case)?;
        let p = lam.len();
        let mut m = DMatrix::zeros(self.layout.n, p);
        for slot in &self.layout.slots {
            let bus = &self.case.buses[slot.bus_pos];
            for j in 0..p {
                let (dp, dq) = lam.injection_derivs(bus, j);
                m[(slot.start, j)] = -dp;
                if bus.kind == BusKind::Pq {
                    m[(slot.start + 1, j)] = -dq;
                }
            }
        }
        Ok(m)
    }

    /// Compare the analytic Jacobian against central finite differences.
    /// Returns the max relative deviation over entries larger than 1e-8.
    pub fn jacobian_fd_check(
        &self,
        x: &DVector<f64>,
        lam: &ParameterVector,
        h: f64,
    ) -> Result<f64, PfError> {
        assert!(h > 0.0, "finite-difference step must be positive");
        self.check_dim(x)?;
        let analytic = self.residual(x, lam)?.jac;
        let mut worst = 0.0f64;
        let mut xp = x.clone();
        for c in 0..self.layout.n {
            let x0 = x[c];
            xp[c] = x0 + h;
            let fp = self.residual(&xp, lam)?.f;
            xp[c] = x0 - h;
            let fm = self.residual(&xp, lam)?.f;
            xp[c] = x0;
            for r in 0..self.layout.n {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let an = analytic.get(r, c);
                let scale = an.abs().max(fd.abs());
                if scale > 1e-8 {
                    worst = worst.max((fd - an).abs() / scale);
                }
            }
        }
        Ok(worst)
    }

    /// Voltage-limit activity per PQ bus (bus id, flag). Uses the slack
    /// variables when the system carries limit rows, otherwise the voltage
    /// magnitude against the band.
    pub fn feasibility_flags(&self, x: &DVector<f64>) -> Result<Vec<(usize, LimitFlag)>, PfError> {
        self.check_dim(x)?;
        let mut out = Vec::new();
        for slot in &self.layout.slots {
            let bus = &self.case.buses[slot.bus_pos];
            if bus.kind != BusKind::Pq {
                continue;
            }
            let Some((lo, hi)) = bus.band() else { continue };
            let (s_up, s_lo) = if slot.has_limits {
                (x[slot.start + 2], x[slot.start + 3])
            } else {
                let m = x[slot.start] * x[slot.start] + x[slot.start + 1] * x[slot.start + 1];
                ((hi * hi - m).max(0.0).sqrt(), (m - lo * lo).max(0.0).sqrt())
            };
            let flag = if s_up.abs() < TOL_ACTIVE {
                LimitFlag::AtUpper
            } else if s_lo.abs() < TOL_ACTIVE {
                LimitFlag::AtLower
            } else {
                LimitFlag::Interior
            };
            out.push((bus.id, flag));
        }
        Ok(out)
    }
}

fn build_pattern(
    case: &NetworkCase,
    ybus: &AdmittanceMatrix,
    layout: &SystemLayout,
) -> SparsePattern {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); layout.n];
    for slot in layout.slots() {
        let bus = &case.buses[slot.bus_pos];
        let mut balance_cols = Vec::new();
        for ye in ybus.row(slot.bus_pos) {
            if let Some(vs) = layout.var_of_bus(ye.col) {
                balance_cols.push(vs);
                balance_cols.push(vs + 1);
            }
        }
        rows[slot.start] = balance_cols.clone();
        match bus.kind {
            BusKind::Pq => {
                rows[slot.start + 1] = balance_cols;
                if slot.has_limits {
                    rows[slot.start + 2] = vec![slot.start, slot.start + 1, slot.start + 2];
                    rows[slot.start + 3] = vec![slot.start, slot.start + 1, slot.start + 3];
                }
            }
            BusKind::Pv => {
                rows[slot.start + 1] = vec![slot.start, slot.start + 1];
            }
            BusKind::Slack => unreachable!(),
        }
    }
    SparsePattern::from_rows(layout.n, &rows)
}
