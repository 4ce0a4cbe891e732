//! Temporal meshes and the one-dimensional FEM matrices in time.
//!
//! Trial functions in time are continuous piecewise linear hats on a trial
//! mesh; test functions are piecewise constant indicators on a test mesh
//! obtained from the trial mesh by `nref` uniform refinements. The coupling
//! matrices for that pair are assembled recursively: on the finest level the
//! single-element formulas apply, and each refinement level folds the
//! piecewise linear prolongation into the result. All integrals involved are
//! exact because refinement never lets a test element straddle a trial node.

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Strictly increasing partition of `[0, T]` starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMesh {
    nodes: Vec<f64>,
}

impl TemporalMesh {
    /// Wraps an explicit node vector `0 = t_0 < t_1 < ... < t_K`.
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh(
                "temporal mesh needs at least two nodes".into(),
            ));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidMesh(format!(
                "temporal mesh must start at 0, got {}",
                nodes[0]
            )));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidMesh(
                "temporal nodes must be strictly increasing".into(),
            ));
        }
        if !nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidMesh("temporal nodes must be finite".into()));
        }
        Ok(TemporalMesh { nodes })
    }

    /// Uniform mesh with `num_elements` elements on `[0, horizon]`.
    pub fn uniform(num_elements: usize, horizon: f64) -> Result<Self> {
        check_mesh_request(num_elements, horizon)?;
        let k = num_elements as f64;
        let nodes = (0..=num_elements)
            .map(|i| horizon * (i as f64 / k))
            .collect();
        TemporalMesh::new(nodes)
    }

    /// Random mesh: `horizon * sort([0, u_1, ..., u_{K-1}, 1])` with
    /// independent uniforms `u_i`, reproducible from `seed` on any platform.
    pub fn random(num_elements: usize, horizon: f64, seed: u64) -> Result<Self> {
        check_mesh_request(num_elements, horizon)?;
        let mut rng = SplitMix64::new(seed);
        loop {
            let mut nodes = Vec::with_capacity(num_elements + 1);
            nodes.push(0.0);
            for _ in 1..num_elements {
                nodes.push(horizon * rng.next_unit());
            }
            nodes.push(horizon);
            nodes.sort_by(f64::total_cmp);
            // Ties have probability ~0 but would corrupt the mesh; redraw.
            if nodes.windows(2).all(|w| w[0] < w[1]) {
                return TemporalMesh::new(nodes);
            }
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_element_length(&self) -> f64 {
        self.element_lengths().iter().fold(0.0f64, |m, &h| m.max(h))
    }

    /// Splits every element at its midpoint.
    ///
    /// Returns the refined mesh and the piecewise linear prolongation `S`
    /// with `nodes(fine) = S * nodes(coarse)` exactly; midpoints are computed
    /// as `0.5 * a + 0.5 * b` so that even the floating point images agree.
    pub fn refine_uniform(&self) -> (TemporalMesh, SparseMatrix<f64>) {
        let nc = self.nodes.len();
        let mut fine = Vec::with_capacity(2 * nc - 1);
        let mut triplets = Vec::with_capacity(3 * nc);
        for (i, w) in self.nodes.windows(2).enumerate() {
            fine.push(w[0]);
            fine.push(0.5 * w[0] + 0.5 * w[1]);
            triplets.push((2 * i, i, 1.0));
            triplets.push((2 * i + 1, i, 0.5));
            triplets.push((2 * i + 1, i + 1, 0.5));
        }
        fine.push(*self.nodes.last().unwrap());
        triplets.push((2 * nc - 2, nc - 1, 1.0));
        let s = SparseMatrix::from_triplets(2 * nc - 1, nc, &triplets)
            .expect("prolongation triplets are in range");
        let mesh = TemporalMesh { nodes: fine };
        (mesh, s)
    }
}

fn check_mesh_request(num_elements: usize, horizon: f64) -> Result<()> {
    if num_elements == 0 {
        return Err(Error::InvalidInput(
            "temporal mesh needs at least one element".into(),
        ));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(())
}

/// Temporal matrices for one trial/test mesh pair.
#[derive(Debug, Clone)]
pub struct TemporalOperators {
    /// Trial mesh carrying the hat functions.
    pub trial_mesh: TemporalMesh,
    /// Test mesh carrying the indicator functions, `nref` refinements finer.
    pub test_mesh: TemporalMesh,
    /// Indicator/hat mass coupling, one row per test element.
    pub coupling_mass: SparseMatrix<f64>,
    /// Indicator/hat-derivative coupling, one row per test element.
    pub coupling_derivative: SparseMatrix<f64>,
    /// Hat/hat mass matrix on the trial mesh.
    pub trial_mass: SparseMatrix<f64>,
    /// Hat/hat stiffness matrix on the trial mesh.
    pub trial_stiffness: SparseMatrix<f64>,
    /// Diagonal indicator mass matrix on the test mesh.
    pub test_mass: SparseMatrix<f64>,
}

impl TemporalOperators {
    /// Assembles all temporal matrices for the given trial mesh and
    /// refinement depth.
    pub fn assemble(trial_mesh: &TemporalMesh, nref: usize) -> Self {
        let (coupling_mass, coupling_derivative, test_mesh) =
            assemble_coupling(trial_mesh, nref);
        let (trial_mass, trial_stiffness) = assemble_trial(trial_mesh);
        let test_mass = SparseMatrix::from_diag(&test_mesh.element_lengths());
        TemporalOperators {
            trial_mesh: trial_mesh.clone(),
            test_mesh,
            coupling_mass,
            coupling_derivative,
            trial_mass,
            trial_stiffness,
            test_mass,
        }
    }
}

/// Coupling matrices between indicators on the `nref`-fold refined mesh and
/// hats resp. hat derivatives on `mesh`.
///
/// Base case: with test and trial mesh equal, element `k` of length `h`
/// meets only the hats at its own endpoints, giving the mass row
/// `(h/2, h/2)` and the derivative row `(-1, +1)`. Each refinement level is
/// obtained by assembling on the fine mesh and pulling the hat coefficients
/// back through the prolongation.
pub fn assemble_coupling(
    mesh: &TemporalMesh,
    nref: usize,
) -> (SparseMatrix<f64>, SparseMatrix<f64>, TemporalMesh) {
    if nref == 0 {
        let k = mesh.num_elements();
        let n = mesh.num_nodes();
        let mut mass = Vec::with_capacity(2 * k);
        let mut deriv = Vec::with_capacity(2 * k);
        for (e, w) in mesh.nodes().windows(2).enumerate() {
            let half = 0.5 * (w[1] - w[0]);
            mass.push((e, e, half));
            mass.push((e, e + 1, half));
            deriv.push((e, e, -1.0));
            deriv.push((e, e + 1, 1.0));
        }
        let mass = SparseMatrix::from_triplets(k, n, &mass).expect("in range");
        let deriv = SparseMatrix::from_triplets(k, n, &deriv).expect("in range");
        return (mass, deriv, mesh.clone());
    }
    let (fine, s) = mesh.refine_uniform();
    let (mass_fine, deriv_fine, test_mesh) = assemble_coupling(&fine, nref - 1);
    let mass = mass_fine.mul_sparse(&s).expect("shapes match");
    let deriv = deriv_fine.mul_sparse(&s).expect("shapes match");
    (mass, deriv, test_mesh)
}

/// Hat/hat mass and stiffness matrices on a temporal mesh.
pub fn assemble_trial(mesh: &TemporalMesh) -> (SparseMatrix<f64>, SparseMatrix<f64>) {
    let n = mesh.num_nodes();
    let mut mass = Vec::with_capacity(4 * (n - 1));
    let mut stiffness = Vec::with_capacity(4 * (n - 1));
    for (e, w) in mesh.nodes().windows(2).enumerate() {
        let h = w[1] - w[0];
        mass.push((e, e, h / 3.0));
        mass.push((e, e + 1, h / 6.0));
        mass.push((e + 1, e, h / 6.0));
        mass.push((e + 1, e + 1, h / 3.0));
        let g = 1.0 / h;
        stiffness.push((e, e, g));
        stiffness.push((e, e + 1, -g));
        stiffness.push((e + 1, e, -g));
        stiffness.push((e + 1, e + 1, g));
    }
    let mass = SparseMatrix::from_triplets(n, n, &mass).expect("in range");
    let stiffness = SparseMatrix::from_triplets(n, n, &stiffness).expect("in range");
    (mass, stiffness)
}

/// Deterministic 64-bit generator (splitmix64), used only for random meshes.
struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
