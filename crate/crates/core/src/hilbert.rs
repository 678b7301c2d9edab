//! Operator and state algebra on the composite space of two qubits and one
//! truncated harmonic oscillator.
//!
//! Basis conventions (project-wide, do not change):
//!
//! - Qubit basis order (|dn>, |up>) with `sigma_z = diag(+1, -1)`, i.e.
//!   `sigma_z |dn> = +|dn>`.
//! - Composite index `q1 * 2F + q2 * F + n` for ion-1 state `q1`, ion-2
//!   state `q2`, Fock level `n` with truncation `F` (ion1 (x) ion2 (x) osc).
//! - `sigma_minus = |up><dn|` lowers the sigma_z eigenvalue.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Tolerance for the trace-one check on states.
pub const TRACE_TOL: f64 = 1e-9;
/// Tolerance for Hermiticity checks on states.
pub const HERM_TOL: f64 = 1e-10;
/// Slack allowed below zero for state eigenvalues (truncation/integration).
pub const EIG_FLOOR: f64 = -1e-8;

/// Dimensions of the composite space: two qubits and one oscillator
/// truncated to `fock_dim` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceSpec {
    pub fock_dim: usize,
}

impl SpaceSpec {
    pub fn new(fock_dim: usize) -> Result<Self> {
        if fock_dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "fock_dim must be >= 2, got {fock_dim}"
            )));
        }
        Ok(Self { fock_dim })
    }

    /// Total Hilbert-space dimension, `4 * fock_dim`.
    pub fn dim(&self) -> usize {
        4 * self.fock_dim
    }

    /// Composite basis index for (ion1, ion2, fock) with dn = 0, up = 1.
    pub fn index(&self, q1: usize, q2: usize, n: usize) -> usize {
        debug_assert!(q1 < 2 && q2 < 2 && n < self.fock_dim);
        (q1 * 2 + q2) * self.fock_dim + n
    }
}

/// Default oscillator truncation; the gate displacement stays at |alpha| <= 1
/// so fifteen levels leave truncation error far below integration error.
pub const DEFAULT_FOCK_DIM: usize = 15;

/// Pauli label for single-ion embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn matrix(self) -> Array2<C64> {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            // Basis order (dn, up); sigma_z|dn> = +|dn>.
            Pauli::I => ndarray::array![[o, z], [z, o]],
            Pauli::X => ndarray::array![[z, o], [o, z]],
            Pauli::Y => ndarray::array![[z, -i], [i, z]],
            Pauli::Z => ndarray::array![[o, z], [z, -o]],
        }
    }
}

/// A dense operator on the composite space, tagged with its space.
#[derive(Debug, Clone)]
pub struct Operator {
    pub matrix: Array2<C64>,
    pub spec: SpaceSpec,
}

impl Operator {
    pub fn new(matrix: Array2<C64>, spec: SpaceSpec) -> Result<Self> {
        if matrix.nrows() != spec.dim() || matrix.ncols() != spec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, space wants {}",
                matrix.nrows(),
                matrix.ncols(),
                spec.dim()
            )));
        }
        Ok(Self { matrix, spec })
    }

    pub fn identity(spec: SpaceSpec) -> Self {
        Self {
            matrix: Array2::eye(spec.dim()),
            spec,
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.t().mapv(|v| v.conj()),
            spec: self.spec,
        }
    }

    pub fn dot(&self, other: &Operator) -> Operator {
        Operator {
            matrix: self.matrix.dot(&other.matrix),
            spec: self.spec,
        }
    }

    /// Max elementwise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let defect = (self.matrix[[i, j]] - self.matrix[[j, i]].conj()).norm();
                if defect > worst {
                    worst = defect;
                }
            }
        }
        worst
    }

    /// Expectation value tr(A rho).
    pub fn expectation(&self, state: &CompositeState) -> C64 {
        // tr(A rho) = sum_ij A_ij rho_ji
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                acc += self.matrix[[i, j]] * state.rho[[j, i]];
            }
        }
        acc
    }
}

/// Density matrix on the composite space.
#[derive(Debug, Clone)]
pub struct CompositeState {
    pub rho: Array2<C64>,
    pub spec: SpaceSpec,
}

impl CompositeState {
    /// Wrap a density matrix, checking trace and Hermiticity.
    pub fn new(rho: Array2<C64>, spec: SpaceSpec) -> Result<Self> {
        if rho.nrows() != spec.dim() || rho.ncols() != spec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state is {}x{}, space wants {}",
                rho.nrows(),
                rho.ncols(),
                spec.dim()
            )));
        }
        let state = Self { rho, spec };
        state.check_trace_herm()?;
        Ok(state)
    }

    /// Pure state from a normalized ket.
    pub fn from_ket(psi: &Array1<C64>, spec: SpaceSpec) -> Result<Self> {
        if psi.len() != spec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket has length {}, space wants {}",
                psi.len(),
                spec.dim()
            )));
        }
        let d = spec.dim();
        let rho = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        Self::new(rho, spec)
    }

    pub fn trace(&self) -> C64 {
        self.rho.diag().iter().copied().sum()
    }

    /// tr(rho^2), one for pure states.
    pub fn purity(&self) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.rho.nrows() {
            for j in 0..self.rho.ncols() {
                acc += self.rho[[i, j]] * self.rho[[j, i]];
            }
        }
        acc.re
    }

    fn check_trace_herm(&self) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!(
                "state trace {tr} deviates from one beyond {TRACE_TOL:e}"
            )));
        }
        let defect = Operator {
            matrix: self.rho.clone(),
            spec: self.spec,
        }
        .hermiticity_defect();
        if defect > HERM_TOL {
            return Err(Error::InvalidParameter(format!(
                "state Hermiticity defect {defect:e} beyond {HERM_TOL:e}"
            )));
        }
        Ok(())
    }

    /// Full invariant check including the eigenvalue floor. Costs a dense
    /// eigendecomposition; meant for constructors and tests, not hot loops.
    pub fn validate(&self) -> Result<()> {
        self.check_trace_herm()?;
        let min = min_eigenvalue(&self.rho);
        if min < EIG_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "state minimum eigenvalue {min:e} below floor {EIG_FLOOR:e}"
            )));
        }
        Ok(())
    }
}

/// Kronecker product of two dense complex matrices.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Embed a Pauli on one ion: `label (x) identity` on all other factors.
pub fn embed_qubit_op(label: Pauli, ion_index: usize, spec: SpaceSpec) -> Result<Operator> {
    if ion_index != 1 && ion_index != 2 {
        return Err(Error::InvalidParameter(format!(
            "ion_index must be 1 or 2, got {ion_index}"
        )));
    }
    let p = label.matrix();
    let eye2 = Pauli::I.matrix();
    let eye_f = Array2::eye(spec.fock_dim);
    let matrix = if ion_index == 1 {
        kron(&kron(&p, &eye2), &eye_f)
    } else {
        kron(&kron(&eye2, &p), &eye_f)
    };
    Operator::new(matrix, spec)
}

/// Oscillator-only operator embedded as `1 (x) 1 (x) op`.
pub fn embed_osc_op(osc: &Array2<C64>, spec: SpaceSpec) -> Result<Operator> {
    if osc.nrows() != spec.fock_dim || osc.ncols() != spec.fock_dim {
        return Err(Error::DimensionMismatch(format!(
            "oscillator operator is {}x{}, fock_dim is {}",
            osc.nrows(),
            osc.ncols(),
            spec.fock_dim
        )));
    }
    let eye4 = Array2::eye(4);
    Operator::new(kron(&eye4, osc), spec)
}

/// Truncated annihilation operator on the bare oscillator space,
/// `a|n> = sqrt(n)|n-1>` with the top row truncated.
pub fn annihilation(fock_dim: usize) -> Array2<C64> {
    let mut a = Array2::zeros((fock_dim, fock_dim));
    for n in 1..fock_dim {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Ladder operators and the number operator embedded on the composite space:
/// `(a, a_dag, n)`.
pub fn ladder_ops(spec: SpaceSpec) -> (Operator, Operator, Operator) {
    let a_bare = annihilation(spec.fock_dim);
    let adag_bare = a_bare.t().mapv(|v| v.conj());
    let n_bare = adag_bare.dot(&a_bare);
    let a = embed_osc_op(&a_bare, spec).expect("dims match by construction");
    let adag = embed_osc_op(&adag_bare, spec).expect("dims match by construction");
    let n = embed_osc_op(&n_bare, spec).expect("dims match by construction");
    (a, adag, n)
}

/// Thermal occupation probabilities `p_n = nbar^n / (nbar+1)^(n+1)`,
/// renormalized after truncation. Fails if the truncated tail weight
/// exceeds 1e-6.
pub fn thermal_populations(nbar: f64, fock_dim: usize) -> Result<Vec<f64>> {
    const TAIL_LIMIT: f64 = 1e-6;
    if nbar < 0.0 {
        return Err(Error::InvalidParameter(format!("nbar must be >= 0, got {nbar}")));
    }
    if nbar == 0.0 {
        let mut p = vec![0.0; fock_dim];
        p[0] = 1.0;
        return Ok(p);
    }
    let r = nbar / (nbar + 1.0);
    // Closed-form tail of the geometric distribution: r^fock_dim.
    let tail = r.powi(fock_dim as i32);
    if tail >= TAIL_LIMIT {
        let required = (TAIL_LIMIT.ln() / r.ln()).ceil() as usize;
        return Err(Error::TruncationTooSmall {
            nbar,
            fock_dim,
            tail,
            required,
        });
    }
    let mut p: Vec<f64> = (0..fock_dim)
        .map(|n| r.powi(n as i32) / (nbar + 1.0))
        .collect();
    let norm: f64 = p.iter().sum();
    for v in &mut p {
        *v /= norm;
    }
    Ok(p)
}

/// Two-qubit computational labels in composite order (dn,dn), (dn,up),
/// (up,dn), (up,up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitLabel {
    DnDn,
    DnUp,
    UpDn,
    UpUp,
}

impl QubitLabel {
    pub fn index(self) -> usize {
        match self {
            QubitLabel::DnDn => 0,
            QubitLabel::DnUp => 1,
            QubitLabel::UpDn => 2,
            QubitLabel::UpUp => 3,
        }
    }

    pub fn amplitudes(self) -> [C64; 4] {
        let mut amps = [C64::new(0.0, 0.0); 4];
        amps[self.index()] = C64::new(1.0, 0.0);
        amps
    }
}

/// Initial state `|qubit><qubit| (x) thermal(nbar)`.
pub fn initial_state(qubit: [C64; 4], nbar: f64, spec: SpaceSpec) -> Result<CompositeState> {
    let norm: f64 = qubit.iter().map(|c| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "qubit amplitudes have norm^2 = {norm}, expected 1"
        )));
    }
    let p = thermal_populations(nbar, spec.fock_dim)?;
    let d = spec.dim();
    let f = spec.fock_dim;
    let mut rho = Array2::zeros((d, d));
    for s in 0..4 {
        for s2 in 0..4 {
            let qq = qubit[s] * qubit[s2].conj();
            if qq == C64::new(0.0, 0.0) {
                continue;
            }
            for n in 0..f {
                rho[[s * f + n, s2 * f + n]] = qq * p[n];
            }
        }
    }
    let state = CompositeState::new(rho, spec)?;
    state.validate()?;
    Ok(state)
}

/// Trace out the oscillator, leaving the 4x4 two-qubit density matrix.
pub fn partial_trace_osc(state: &CompositeState) -> Array2<C64> {
    let f = state.spec.fock_dim;
    let mut out = Array2::zeros((4, 4));
    for s in 0..4 {
        for s2 in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..f {
                acc += state.rho[[s * f + n, s2 * f + n]];
            }
            out[[s, s2]] = acc;
        }
    }
    out
}

/// Overlap with the Bell state `(|dn,dn> + e^{i phase} |up,up>)/sqrt(2)`
/// after tracing out the oscillator.
pub fn fidelity_with_bell(state: &CompositeState, bell_phase: f64) -> f64 {
    let q = partial_trace_osc(state);
    bell_fidelity_qubit(&q, bell_phase)
}

/// Maximum Bell overlap over the reference phase:
/// `(rho_00 + rho_33)/2 + |rho_03|`.
pub fn fidelity_bell_optimal(state: &CompositeState) -> f64 {
    let q = partial_trace_osc(state);
    0.5 * (q[[0, 0]].re + q[[3, 3]].re) + q[[0, 3]].norm()
}

/// Bell overlap computed directly on a 4x4 two-qubit density matrix.
pub fn bell_fidelity_qubit(q: &Array2<C64>, bell_phase: f64) -> f64 {
    let phase = C64::from_polar(1.0, bell_phase);
    0.5 * (q[[0, 0]].re + q[[3, 3]].re + 2.0 * (phase * q[[0, 3]]).re)
}

/// Normalized coherent-state ket on the bare oscillator space.
pub fn coherent_ket(alpha: C64, fock_dim: usize) -> Array1<C64> {
    let mut psi = Array1::zeros(fock_dim);
    let mut amp = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    psi[0] = amp;
    for n in 1..fock_dim {
        amp *= alpha / C64::new((n as f64).sqrt(), 0.0);
        psi[n] = amp;
    }
    psi
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let d = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
    let mut eig: Vec<f64> = dm
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &Array2<C64>) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Trace distance `0.5 * ||a - b||_1` between two density matrices.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec15() -> SpaceSpec {
        SpaceSpec::new(15).unwrap()
    }

    fn basis_ket(idx: usize, dim: usize) -> Array1<C64> {
        let mut v = Array1::zeros(dim);
        v[idx] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn spec_rejects_tiny_truncation() {
        assert!(SpaceSpec::new(1).is_err());
        assert_eq!(spec15().dim(), 60);
    }

    #[test]
    fn sigma_z_convention_dn_is_plus_one() {
        let spec = spec15();
        let z1 = embed_qubit_op(Pauli::Z, 1, spec).unwrap();
        let ket = basis_ket(spec.index(0, 0, 0), spec.dim());
        let out = z1.matrix.dot(&ket);
        // |dn,dn,0> is a +1 eigenvector of sigma_z on ion 1.
        for i in 0..spec.dim() {
            assert_abs_diff_eq!((out[i] - ket[i]).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_embedding_is_identity() {
        let spec = spec15();
        let id = embed_qubit_op(Pauli::I, 2, spec).unwrap();
        let expected = Array2::<C64>::eye(spec.dim());
        let max = id
            .matrix
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max == 0.0);
    }

    #[test]
    fn pauli_x_squares_to_identity() {
        let spec = spec15();
        let x1 = embed_qubit_op(Pauli::X, 1, spec).unwrap();
        let sq = x1.dot(&x1);
        let eye = Array2::<C64>::eye(spec.dim());
        let max = sq
            .matrix
            .iter()
            .zip(eye.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max < 1e-14);
    }

    #[test]
    fn embeddings_on_different_ions_commute() {
        let spec = SpaceSpec::new(4).unwrap();
        for p1 in [Pauli::X, Pauli::Y, Pauli::Z] {
            for p2 in [Pauli::X, Pauli::Y, Pauli::Z] {
                let a = embed_qubit_op(p1, 1, spec).unwrap();
                let b = embed_qubit_op(p2, 2, spec).unwrap();
                let comm = &a.dot(&b).matrix - &b.dot(&a).matrix;
                let max = comm.iter().map(|v| v.norm()).fold(0.0, f64::max);
                assert!(max <= 1e-13, "[{p1:?}_1, {p2:?}_2] = {max:e}");
            }
        }
    }

    #[test]
    fn annihilation_acts_as_ladder() {
        let spec = spec15();
        let (a, _, n) = ladder_ops(spec);
        // a|0> = 0
        let vac = basis_ket(spec.index(0, 0, 0), spec.dim());
        let out = a.matrix.dot(&vac);
        assert!(out.iter().map(|v| v.norm()).fold(0.0, f64::max) == 0.0);
        // a|3> = sqrt(3)|2>
        let three = basis_ket(spec.index(0, 0, 3), spec.dim());
        let out = a.matrix.dot(&three);
        let two = basis_ket(spec.index(0, 0, 2), spec.dim());
        for i in 0..spec.dim() {
            assert_abs_diff_eq!(
                (out[i] - C64::new(3.0f64.sqrt(), 0.0) * two[i]).norm(),
                0.0,
                epsilon = 1e-14
            );
        }
        // n = a^dag a
        let n3 = n.matrix.dot(&three);
        for i in 0..spec.dim() {
            assert_abs_diff_eq!((n3[i] - 3.0 * three[i]).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn commutator_is_identity_below_truncation() {
        // [a, a_dag] = 1 on the lowest fock_dim - 1 levels; the deviation is
        // confined to the top level, where truncation flips the sign.
        let f = 8;
        let a = annihilation(f);
        let adag = a.t().mapv(|v| v.conj());
        let comm = a.dot(&adag) - adag.dot(&a);
        for n in 0..f - 1 {
            assert_abs_diff_eq!(comm[[n, n]].re, 1.0, epsilon = 1e-14);
        }
        // Top level: a a_dag - a_dag a = -(f-1) instead of +1.
        assert_abs_diff_eq!(comm[[f - 1, f - 1]].re, -((f - 1) as f64), epsilon = 1e-12);
        for i in 0..f {
            for j in 0..f {
                if i != j {
                    assert!(comm[[i, j]].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn thermal_populations_match_geometric_formula() {
        let p = thermal_populations(0.1, 15).unwrap();
        // p_0 = 1/1.1, p_1 = 0.1/1.21 from the geometric distribution.
        assert_abs_diff_eq!(p[0], 1.0 / 1.1, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 0.082_644_628, epsilon = 1e-8);
        let total: f64 = p.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hot_thermal_state_rejects_small_truncation() {
        // Tail-sum oracle: for nbar = 5, fock_dim = 6 the truncated tail is
        // (5/6)^6 = 0.3349, far above the 1e-6 limit.
        let err = thermal_populations(5.0, 6).unwrap_err();
        match err {
            Error::TruncationTooSmall { tail, required, .. } => {
                assert_abs_diff_eq!(tail, (5.0f64 / 6.0).powi(6), epsilon = 1e-12);
                assert!(required > 6);
                // The advertised truncation must actually satisfy the limit.
                assert!(thermal_populations(5.0, required).is_ok());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cold_initial_state_is_pure_ground() {
        let spec = spec15();
        let st = initial_state(QubitLabel::DnDn.amplitudes(), 0.0, spec).unwrap();
        let idx = spec.index(0, 0, 0);
        assert_abs_diff_eq!(st.rho[[idx, idx]].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(st.purity(), 1.0, epsilon = 1e-12);
        st.validate().unwrap();
    }

    #[test]
    fn bell_fidelity_reference_values() {
        let spec = spec15();
        // |psi+> (x) |0><0|
        let mut psi = Array1::zeros(spec.dim());
        let s = C64::new(1.0 / 2.0f64.sqrt(), 0.0);
        psi[spec.index(0, 0, 0)] = s;
        psi[spec.index(1, 1, 0)] = s;
        let bell = CompositeState::from_ket(&psi, spec).unwrap();
        assert_abs_diff_eq!(fidelity_with_bell(&bell, 0.0), 1.0, epsilon = 1e-12);

        // |dn,dn,0>: single component overlaps at 1/2.
        let dd = initial_state(QubitLabel::DnDn.amplitudes(), 0.0, spec).unwrap();
        assert_abs_diff_eq!(fidelity_with_bell(&dd, 0.0), 0.5, epsilon = 1e-12);

        // Maximally mixed two-qubit state: 1/4.
        let f = spec.fock_dim;
        let mut rho = Array2::zeros((spec.dim(), spec.dim()));
        for s in 0..4 {
            rho[[s * f, s * f]] = C64::new(0.25, 0.0);
        }
        let mixed = CompositeState::new(rho, spec).unwrap();
        assert_abs_diff_eq!(fidelity_with_bell(&mixed, 0.0), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity_bell_optimal(&mixed), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_is_linear_in_rho() {
        let spec = SpaceSpec::new(12).unwrap();
        let a = initial_state(QubitLabel::DnDn.amplitudes(), 0.2, spec).unwrap();
        let b = initial_state(QubitLabel::UpUp.amplitudes(), 0.05, spec).unwrap();
        for w in [0.0, 0.3, 0.7, 1.0] {
            let mix = CompositeState::new(
                &a.rho * C64::new(w, 0.0) + &b.rho * C64::new(1.0 - w, 0.0),
                spec,
            )
            .unwrap();
            let direct = fidelity_with_bell(&mix, 0.4);
            let linear =
                w * fidelity_with_bell(&a, 0.4) + (1.0 - w) * fidelity_with_bell(&b, 0.4);
            assert_abs_diff_eq!(direct, linear, epsilon = 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product_state_is_qubit_factor() {
        let spec = spec15();
        let amps = [
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(-0.5, 0.0),
            C64::new(0.0, -0.5),
        ];
        let st = initial_state(amps, 0.3, spec).unwrap();
        let q = partial_trace_osc(&st);
        for i in 0..4 {
            for j in 0..4 {
                let expected = amps[i] * amps[j].conj();
                assert_abs_diff_eq!((q[[i, j]] - expected).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_of_entangled_superposition() {
        // (|dn,dn,0> + |up,up,1>)/sqrt(2) traces to diag(1/2, 0, 0, 1/2).
        let spec = spec15();
        let mut psi = Array1::zeros(spec.dim());
        let s = C64::new(1.0 / 2.0f64.sqrt(), 0.0);
        psi[spec.index(0, 0, 0)] = s;
        psi[spec.index(1, 1, 1)] = s;
        let st = CompositeState::from_ket(&psi, spec).unwrap();
        let q = partial_trace_osc(&st);
        let expected = [0.5, 0.0, 0.0, 0.5];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { expected[i] } else { 0.0 };
                assert_abs_diff_eq!(q[[i, j]].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(q[[i, j]].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_preserves_trace_on_random_states(// seeded random mixtures
    ) {
        use rand::{Rng, SeedableRng};
        let spec = SpaceSpec::new(6).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..20 {
            // Random mixture of random product kets.
            let d = spec.dim();
            let mut rho = Array2::<C64>::zeros((d, d));
            let mut weights = [0.0; 3];
            let mut total = 0.0;
            for w in &mut weights {
                *w = rng.gen_range(0.05..1.0);
                total += *w;
            }
            for w in weights {
                let mut psi = Array1::<C64>::zeros(d);
                for v in psi.iter_mut() {
                    *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
                let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                psi.mapv_inplace(|c| c / norm);
                for i in 0..d {
                    for j in 0..d {
                        rho[[i, j]] += C64::new(w / total, 0.0) * psi[i] * psi[j].conj();
                    }
                }
            }
            let st = CompositeState::new(rho, spec).unwrap();
            st.validate().unwrap();
            let q = partial_trace_osc(&st);
            let tr: C64 = (0..4).map(|i| q[[i, i]]).sum();
            assert_abs_diff_eq!(tr.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(tr.im, 0.0, epsilon = 1e-12);
            // Hermitian positive within tolerance.
            let min = min_eigenvalue(&q);
            assert!(min >= -1e-9);
        }
    }

    #[test]
    fn partial_trace_commutes_with_qubit_conjugation() {
        use rand::{Rng, SeedableRng};
        let spec = SpaceSpec::new(5).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let x1 = embed_qubit_op(Pauli::X, 1, spec).unwrap();
        for _ in 0..10 {
            let d = spec.dim();
            let mut psi = Array1::<C64>::zeros(d);
            for v in psi.iter_mut() {
                *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            psi.mapv_inplace(|c| c / norm);
            let st = CompositeState::from_ket(&psi, spec).unwrap();

            // Conjugate on the composite space, then trace.
            let conj = x1.matrix.dot(&st.rho).dot(&x1.dagger().matrix);
            let st_conj = CompositeState::new(conj, spec).unwrap();
            let traced_after = partial_trace_osc(&st_conj);

            // Trace, then conjugate with the bare 4x4 operator.
            let q = partial_trace_osc(&st);
            let x4 = kron(&Pauli::X.matrix(), &Pauli::I.matrix());
            let x4dag = x4.t().mapv(|v| v.conj());
            let traced_before = x4.dot(&q).dot(&x4dag);

            let max = traced_after
                .iter()
                .zip(traced_before.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(max < 1e-10);
        }
    }

    #[test]
    fn fidelity_invariant_under_oscillator_unitary() {
        let spec = SpaceSpec::new(12).unwrap();
        let st = initial_state(
            [
                C64::new(0.6, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.8, 0.0),
            ],
            0.2,
            spec,
        )
        .unwrap();
        // Oscillator-only unitary exp(-i * 0.7 * (a + a_dag)) via eigendecomposition.
        let a = annihilation(spec.fock_dim);
        let h = &a + &a.t().mapv(|v| v.conj());
        let d = spec.fock_dim;
        let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| h[[i, j]]);
        let eig = dm.symmetric_eigen();
        let mut u = nalgebra::DMatrix::<C64>::zeros(d, d);
        for k in 0..d {
            let phase = C64::from_polar(1.0, -0.7 * eig.eigenvalues[k]);
            let col = eig.eigenvectors.column(k);
            for i in 0..d {
                for j in 0..d {
                    u[(i, j)] += col[i] * phase * col[j].conj();
                }
            }
        }
        let u_nd = Array2::from_shape_fn((d, d), |(i, j)| u[(i, j)]);
        let u_full = embed_osc_op(&u_nd, spec).unwrap();
        let rotated = u_full
            .matrix
            .dot(&st.rho)
            .dot(&u_full.dagger().matrix);
        let st2 = CompositeState::new(rotated, spec).unwrap();
        for phase in [0.0, 0.8, -1.3] {
            assert_abs_diff_eq!(
                fidelity_with_bell(&st, phase),
                fidelity_with_bell(&st2, phase),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn coherent_ket_moments() {
        let alpha = C64::new(0.4, 0.3);
        let psi = coherent_ket(alpha, 20);
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        // <a> = alpha
        let a = annihilation(20);
        let apsi = a.dot(&psi);
        let mean: C64 = psi.iter().zip(apsi.iter()).map(|(p, q)| p.conj() * q).sum();
        assert_abs_diff_eq!((mean - alpha).norm(), 0.0, epsilon = 1e-10);
    }
}
