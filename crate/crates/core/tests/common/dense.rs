//! Dense-matrix reference for the statevector simulator.

use ggc::qsim::{Circuit, GateKind, GateOp, StateVector};
use num_complex::Complex64 as C;
use rand::Rng;

pub type Dense = Vec<Vec<C>>;

pub fn eye(d: usize) -> Dense {
    (0..d).map(|i| (0..d).map(|j| if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) }).collect()).collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![C::new(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let d = a.len();
    (0..d).map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// Single-qubit `u` on `q` of `n`, qubit 0 being the leftmost tensor factor.
pub fn lift(u: &Dense, q: usize, n: usize) -> Dense {
    (0..n).fold(vec![vec![C::new(1.0, 0.0)]], |acc, k| kron(&acc, &if k == q { u.clone() } else { eye(2) }))
}

pub fn dense_gate(g: &GateOp, n: usize) -> Dense {
    let half = g.angle / 2.0;
    match g.kind {
        GateKind::H => {
            let s = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            lift(&vec![vec![s, s], vec![s, -s]], g.targets[0], n)
        }
        GateKind::Rx => {
            let (c, s) = (C::new(half.cos(), 0.0), C::new(0.0, -half.sin()));
            lift(&vec![vec![c, s], vec![s, c]], g.targets[0], n)
        }
        GateKind::Rzz => {
            let pauli_z = vec![vec![C::new(1.0, 0.0), C::new(0.0, 0.0)], vec![C::new(0.0, 0.0), C::new(-1.0, 0.0)]];
            let zz = mul(&lift(&pauli_z, g.targets[0], n), &lift(&pauli_z, g.targets[1], n));
            // exp(−iθ ZZ/2) = cos(θ/2) I − i sin(θ/2) ZZ, since (ZZ)² = I.
            let d = 1 << n;
            (0..d)
                .map(|i| (0..d).map(|j| eye(d)[i][j] * half.cos() + zz[i][j] * C::new(0.0, -half.sin())).collect())
                .collect()
        }
    }
}

pub fn dense_run(c: &Circuit) -> Vec<C> {
    let d = 1 << c.num_qubits;
    let u = c.gates.iter().fold(eye(d), |acc, g| mul(&dense_gate(g, c.num_qubits), &acc));
    (0..d).map(|i| u[i][0]).collect()
}

pub fn random_circuit<R: Rng>(rng: &mut R, n: usize, len: usize) -> Circuit {
    let mut c = Circuit::new(n);
    for _ in 0..len {
        let q = rng.gen_range(0..n);
        let theta = rng.gen_range(-3.0..3.0);
        match rng.gen_range(0..3) {
            0 => c.push(GateOp::h(q)),
            1 => c.push(GateOp::rx(q, theta)),
            _ if n > 1 => {
                let mut p = rng.gen_range(0..n);
                while p == q {
                    p = rng.gen_range(0..n);
                }
                c.push(GateOp::rzz(q, p, theta));
            }
            _ => c.push(GateOp::rx(q, theta)),
        }
    }
    c
}

pub fn max_amp_gap(c: &Circuit) -> f64 {
    let sim = c.run(&StateVector::zero(c.num_qubits).unwrap()).unwrap();
    sim.amplitudes().iter().zip(dense_run(c)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}
