//! Dense statevector simulation for the gate set used by the quantum
//! classifiers, with exact adjoint-mode gradients and a parameter-shift
//! reference.
//!
//! Conventions: qubit 0 is the most significant bit of a basis index;
//! `RX(θ) = exp(-iθX/2)` and `RZZ(θ) = exp(-iθ Z⊗Z / 2)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::Format(format!("amplitude count {len} is not a power of two")));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        Ok(Self { n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    #[inline]
    fn mask(&self, q: usize) -> usize {
        1 << (self.n - 1 - q)
    }

    fn check(&self, q: usize) -> Result<()> {
        if q >= self.n {
            Err(Error::QubitOutOfRange { qubit: q, n: self.n })
        } else {
            Ok(())
        }
    }

    /// `⟨ψ|φ⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn apply_h(&mut self, q: usize) {
        let m = self.mask(q);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a, b) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | m] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    fn apply_rx(&mut self, q: usize, theta: f64) {
        let m = self.mask(q);
        let c = (theta / 2.0).cos();
        let ms = Complex64::new(0.0, -(theta / 2.0).sin());
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a, b) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = a * c + b * ms;
                self.amps[i | m] = a * ms + b * c;
            }
        }
    }

    fn apply_rzz(&mut self, q0: usize, q1: usize, theta: f64) {
        let (m0, m1) = (self.mask(q0), self.mask(q1));
        let even = Complex64::from_polar(1.0, -theta / 2.0);
        let odd = Complex64::from_polar(1.0, theta / 2.0);
        for (i, a) in self.amps.iter_mut().enumerate() {
            let parity = ((i & m0) != 0) ^ ((i & m1) != 0);
            *a *= if parity { odd } else { even };
        }
    }

    fn apply_x(&mut self, q: usize) {
        let m = self.mask(q);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                self.amps.swap(i, i | m);
            }
        }
    }

    fn apply_zz(&mut self, q0: usize, q1: usize) {
        let (m0, m1) = (self.mask(q0), self.mask(q1));
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & m0) != 0) ^ ((i & m1) != 0) {
                *a = -*a;
            }
        }
    }

    fn apply_z(&mut self, q: usize) {
        let m = self.mask(q);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & m != 0 {
                *a = -*a;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    H,
    Rx,
    Rzz,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::Rx => "RX",
            GateKind::Rzz => "RZZ",
        }
    }

    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::H)
    }
}

/// What an angle was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// Trainable parameter by flat index.
    Param(usize),
    /// Node feature `(node, feature)` of the embedded graph.
    Feature(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub angle: f64,
    /// `(source, ∂angle/∂source)` pairs.
    pub provenance: Vec<(Source, f64)>,
}

impl GateOp {
    pub fn h(q: usize) -> Self {
        Self { kind: GateKind::H, targets: vec![q], angle: 0.0, provenance: vec![] }
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rx, targets: vec![q], angle, provenance: vec![] }
    }

    pub fn rzz(q0: usize, q1: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rzz, targets: vec![q0, q1], angle, provenance: vec![] }
    }

    pub fn with_provenance(mut self, provenance: Vec<(Source, f64)>) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Applies one gate in place.
pub fn apply_gate(state: &mut StateVector, gate: &GateOp) -> Result<()> {
    apply_with_angle(state, gate, gate.angle)
}

fn apply_with_angle(state: &mut StateVector, gate: &GateOp, angle: f64) -> Result<()> {
    for &q in &gate.targets {
        state.check(q)?;
    }
    match (gate.kind, gate.targets.as_slice()) {
        (GateKind::H, &[q]) => state.apply_h(q),
        (GateKind::Rx, &[q]) => state.apply_rx(q, angle),
        (GateKind::Rzz, &[a, b]) if a != b => state.apply_rzz(a, b, angle),
        _ => {
            return Err(Error::Format(format!("bad targets {:?} for {}", gate.targets, gate.kind.name())));
        }
    }
    Ok(())
}

fn apply_inverse(state: &mut StateVector, gate: &GateOp) -> Result<()> {
    match gate.kind {
        GateKind::H => apply_gate(state, gate),
        _ => apply_with_angle(state, gate, -gate.angle),
    }
}

/// Multiplies by the rotation generator (`X` or `Z⊗Z`).
fn apply_generator(state: &mut StateVector, gate: &GateOp) {
    match gate.kind {
        GateKind::Rx => state.apply_x(gate.targets[0]),
        GateKind::Rzz => state.apply_zz(gate.targets[0], gate.targets[1]),
        GateKind::H => unreachable!("H has no angle"),
    }
}

/// `⟨ψ|Z_q|ψ⟩`.
pub fn expect_z(state: &StateVector, qubit: usize) -> f64 {
    let m = state.mask(qubit);
    state
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| if i & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// `⟨Z_q⟩` for every qubit.
pub fn expect_z_all(state: &StateVector) -> Vec<f64> {
    (0..state.n).map(|q| expect_z(state, q)).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<GateOp>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self { num_qubits, gates: Vec::new() }
    }

    pub fn push(&mut self, gate: GateOp) {
        self.gates.push(gate);
    }

    /// Indices of gates carrying a rotation angle.
    pub fn rotation_indices(&self) -> Vec<usize> {
        (0..self.gates.len()).filter(|&i| self.gates[i].kind.is_rotation()).collect()
    }

    pub fn run(&self, state0: &StateVector) -> Result<StateVector> {
        let mut s = state0.clone();
        for g in &self.gates {
            apply_gate(&mut s, g)?;
        }
        Ok(s)
    }

    /// One gate per line: `KIND targets angle provenance`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            let targets: Vec<String> = g.targets.iter().map(usize::to_string).collect();
            let prov: Vec<String> = g
                .provenance
                .iter()
                .map(|(s, d)| match s {
                    Source::Param(p) => format!("p{p}:{d:?}"),
                    Source::Feature(n, k) => format!("x{n}.{k}:{d:?}"),
                })
                .collect();
            let prov = if prov.is_empty() { "-".to_string() } else { prov.join(",") };
            let _ = writeln!(out, "{} {} {:?} {}", g.kind.name(), targets.join(","), g.angle, prov);
        }
        out
    }

    pub fn parse(num_qubits: usize, text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Format(format!("bad circuit line: {line}"));
        let mut c = Circuit::new(num_qubits);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [kind, targets, angle, prov] = parts[..] else { return Err(bad(line)) };
            let kind = match kind {
                "H" => GateKind::H,
                "RX" => GateKind::Rx,
                "RZZ" => GateKind::Rzz,
                _ => return Err(bad(line)),
            };
            let targets = targets.split(',').map(str::parse).collect::<std::result::Result<Vec<usize>, _>>().map_err(|_| bad(line))?;
            let angle: f64 = angle.parse().map_err(|_| bad(line))?;
            let mut provenance = Vec::new();
            if prov != "-" {
                for item in prov.split(',') {
                    let (src, d) = item.split_once(':').ok_or_else(|| bad(line))?;
                    let d: f64 = d.parse().map_err(|_| bad(line))?;
                    let src = if let Some(p) = src.strip_prefix('p') {
                        Source::Param(p.parse().map_err(|_| bad(line))?)
                    } else if let Some(x) = src.strip_prefix('x') {
                        let (n, k) = x.split_once('.').ok_or_else(|| bad(line))?;
                        Source::Feature(n.parse().map_err(|_| bad(line))?, k.parse().map_err(|_| bad(line))?)
                    } else {
                        return Err(bad(line));
                    };
                    provenance.push((src, d));
                }
            }
            c.push(GateOp { kind, targets, angle, provenance });
        }
        Ok(c)
    }
}

/// `d⟨Z_q⟩/dθ` for every rotation gate, in [`Circuit::rotation_indices`] order,
/// from one forward and one backward sweep.
pub fn adjoint_gradients(circuit: &Circuit, state0: &StateVector, qubit: usize) -> Result<Vec<f64>> {
    let mut psi = circuit.run(state0)?;
    psi.check(qubit)?;
    let mut lambda = psi.clone();
    lambda.apply_z(qubit);
    let mut grads = Vec::new();
    for gate in circuit.gates.iter().rev() {
        if gate.kind.is_rotation() {
            let mut mu = psi.clone();
            apply_generator(&mut mu, gate);
            // 2 Re⟨λ| (-i/2) G |ψ⟩ = Im⟨λ|G|ψ⟩
            grads.push(lambda.inner(&mu).im);
        }
        apply_inverse(&mut psi, gate)?;
        apply_inverse(&mut lambda, gate)?;
    }
    grads.reverse();
    Ok(grads)
}

/// Two-term shift rule: `[f(θ + π/2) − f(θ − π/2)] / 2` per rotation gate.
pub fn parameter_shift_gradients(circuit: &Circuit, state0: &StateVector, qubit: usize) -> Result<Vec<f64>> {
    shifted_differences(circuit, state0, qubit, FRAC_PI_2, |plus, minus| (plus - minus) / 2.0)
}

/// Central finite differences in each rotation angle.
pub fn finite_difference_gradients(circuit: &Circuit, state0: &StateVector, qubit: usize, h: f64) -> Result<Vec<f64>> {
    shifted_differences(circuit, state0, qubit, h, |plus, minus| (plus - minus) / (2.0 * h))
}

fn shifted_differences(
    circuit: &Circuit,
    state0: &StateVector,
    qubit: usize,
    shift: f64,
    combine: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    state0.check(qubit)?;
    let mut shifted = circuit.clone();
    let mut out = Vec::new();
    for idx in circuit.rotation_indices() {
        let theta = circuit.gates[idx].angle;
        shifted.gates[idx].angle = theta + shift;
        let plus = expect_z(&shifted.run(state0)?, qubit);
        shifted.gates[idx].angle = theta - shift;
        let minus = expect_z(&shifted.run(state0)?, qubit);
        shifted.gates[idx].angle = theta;
        out.push(combine(plus, minus));
    }
    Ok(out)
}

/// Chains angle gradients through gate provenance.
///
/// Returns `(d/d params, d/d features)` with the feature gradient laid out
/// as `num_nodes × feature_dim` row-major.
pub fn chain_gradients(
    circuit: &Circuit,
    angle_grads: &[f64],
    num_params: usize,
    num_nodes: usize,
    feature_dim: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dp = vec![0.0; num_params];
    let mut dx = vec![0.0; num_nodes * feature_dim];
    for (&gi, &g) in circuit.rotation_indices().iter().zip(angle_grads) {
        for &(src, d) in &circuit.gates[gi].provenance {
            match src {
                Source::Param(p) => dp[p] += g * d,
                Source::Feature(n, k) => dx[n * feature_dim + k] += g * d,
            }
        }
    }
    (dp, dx)
}
