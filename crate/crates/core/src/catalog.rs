//! Worked example families with reference values.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{
    build_bloch_family, BlochFamily, BlochModel, CrossingEdgeSpec, IntraEdge, PeriodicGraphSpec,
};
use crate::{c64, CMatrix, C64};

/// Names accepted by [`by_name`].
pub const EXAMPLE_NAMES: [&str; 5] = ["honeycomb", "lieb", "hks-magnetic", "multi-edge", "d4-random"];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown example `{name}`; available: {}", EXAMPLE_NAMES.join(", "))]
pub struct UnknownExample {
    pub name: String,
}

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Reported numerically for the model (often rounded).
    Reported,
    /// Exact by construction or by a short closed-form calculation.
    Exact,
    /// Computed here by an independent method.
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub label: String,
    pub values: Vec<f64>,
    pub tolerance: f64,
    pub source: Source,
}

impl Reference {
    fn new(label: &str, values: Vec<f64>, tolerance: f64, source: Source) -> Self {
        Self {
            label: label.to_string(),
            values,
            tolerance,
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedExample {
    pub name: String,
    pub family: BlochFamily,
    pub parameters: Vec<(String, f64)>,
    pub reference: Vec<Reference>,
}

impl NamedExample {
    pub fn reference(&self, label: &str) -> Option<&Reference> {
        self.reference.iter().find(|r| r.label == label)
    }
}

/// Optional parameter overrides; `None` selects the example default.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExampleParams {
    pub qa: Option<f64>,
    pub qb: Option<f64>,
    pub qc: Option<f64>,
    pub beta: Option<f64>,
    pub t: Option<f64>,
}

pub fn by_name(name: &str, p: &ExampleParams) -> Result<NamedExample, UnknownExample> {
    Ok(match name {
        "honeycomb" => honeycomb(p.qa.unwrap_or(0.0), p.qb.unwrap_or(1.0)),
        "lieb" => lieb(p.qa.unwrap_or(1.0), p.qb.unwrap_or(-1.0), p.qc.unwrap_or(-1.0)),
        "hks-magnetic" => hks_magnetic(p.beta.unwrap_or(0.1)),
        "multi-edge" => multi_edge_haldane_like(p.t.unwrap_or(4.0)),
        "d4-random" => d4_random_example(),
        _ => {
            return Err(UnknownExample {
                name: name.to_string(),
            })
        }
    })
}

fn edge(u: usize, v: usize, w: f64) -> IntraEdge {
    IntraEdge { u, v, w: c64(w, 0.0) }
}

fn crossing(gen: usize, u: usize, v: usize, w: f64) -> CrossingEdgeSpec {
    CrossingEdgeSpec {
        gen,
        u,
        v,
        w: c64(w, 0.0),
    }
}

/// Hexagonal lattice with on-site energies `qa`, `qb`:
/// `T₁₂(α) = −1 − e^{iα₁} − e^{iα₂}`.
pub fn honeycomb(qa: f64, qb: f64) -> NamedExample {
    let spec = PeriodicGraphSpec {
        dimension: 2,
        num_vertices: 2,
        onsite: vec![qa, qb],
        intra_edges: vec![edge(1, 2, -1.0)],
        crossing_edges: vec![crossing(1, 1, 2, -1.0), crossing(2, 1, 2, -1.0)],
    };
    let family = build_bloch_family(&spec).expect("honeycomb spec is valid");
    let mut reference = vec![Reference::new(
        "critical_point",
        vec![2.0 * PI / 3.0, -2.0 * PI / 3.0],
        1e-8,
        Source::Reported,
    )];
    if qa < qb {
        // W = −(qb − qa)⁻¹ [[1, ω̄], [ω, 1]] with ω = e^{2πi/3}
        let s = 1.0 / (qb - qa);
        let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
        let entries = [c64(1.0, 0.0), w.conj(), w, c64(1.0, 0.0)];
        let flat: Vec<f64> = entries.iter().flat_map(|z| [-s * z.re, -s * z.im]).collect();
        let source = if qa == 0.0 && qb == 1.0 {
            Source::Reported
        } else {
            Source::Exact
        };
        reference.extend([
            Reference::new("band1_max", vec![qa], 1e-10, Source::Reported),
            Reference::new("w_band1_re_im_row_major", flat, 1e-9, source),
            Reference::new("w_band1_inertia", vec![0.0, 1.0, 1.0], 0.0, Source::Reported),
            Reference::new("i_infty", vec![1.0], 0.0, Source::Reported),
            Reference::new("s", vec![0.0], 1e-10, Source::Reported),
            Reference::new("bpb_diag", vec![0.0, 2.0], 1e-10, Source::Reported),
        ]);
    }
    if qa == qb {
        reference.push(Reference::new("dirac_point", vec![2.0 * PI / 3.0, -2.0 * PI / 3.0], 0.0, Source::Reported));
    }
    NamedExample {
        name: "honeycomb".into(),
        family,
        parameters: vec![("qa".into(), qa), ("qb".into(), qb)],
        reference,
    }
}

/// Three interpenetrating square lattices: vertex 1 joined to 2 and 3
/// within the cell and along each generator respectively.
pub fn lieb(qa: f64, qb: f64, qc: f64) -> NamedExample {
    let spec = PeriodicGraphSpec {
        dimension: 2,
        num_vertices: 3,
        onsite: vec![qa, qb, qc],
        intra_edges: vec![edge(1, 2, -1.0), edge(1, 3, -1.0)],
        crossing_edges: vec![crossing(1, 1, 2, -1.0), crossing(2, 1, 3, -1.0)],
    };
    let family = build_bloch_family(&spec).expect("Lieb spec is valid");
    let mut reference = Vec::new();
    if (qa, qb, qc) == (1.0, -1.0, -1.0) {
        reference.extend([
            Reference::new("band3_min", vec![1.0], 1e-12, Source::Reported),
            Reference::new("band3_argmin", vec![PI, PI], 0.0, Source::Reported),
            Reference::new("band3_vector", vec![1.0, 0.0, 0.0], 1e-12, Source::Reported),
            Reference::new("w_band3_diag", vec![0.5, 0.5], 1e-10, Source::Reported),
            Reference::new("i_infty", vec![2.0], 0.0, Source::Reported),
            Reference::new("bpb_diag", vec![0.0, 1.0, 1.0], 1e-10, Source::Reported),
            Reference::new("flat_band2", vec![-1.0], 1e-12, Source::Reported),
        ]);
    }
    NamedExample {
        name: "lieb".into(),
        family,
        parameters: vec![("qa".into(), qa), ("qb".into(), qb), ("qc".into(), qc)],
        reference,
    }
}

/// Closed-form Lieb spectrum for on-site energies `(1, −1, −1)`.
pub fn lieb_closed_form(alpha: &[f64]) -> [f64; 3] {
    let r = (5.0 + 2.0 * alpha[0].cos() + 2.0 * alpha[1].cos()).sqrt();
    [-r, -1.0, r]
}

/// Five-vertex model with a magnetic phase `1 + iβ` on the 1–5 edge.
pub fn hks_magnetic(beta: f64) -> NamedExample {
    let spec = PeriodicGraphSpec {
        dimension: 2,
        num_vertices: 5,
        onsite: vec![0.0; 5],
        intra_edges: vec![
            edge(1, 4, 1.0),
            IntraEdge {
                u: 1,
                v: 5,
                w: c64(1.0, beta),
            },
            edge(2, 3, 1.0),
            edge(2, 5, 1.0),
            edge(3, 4, 1.0),
            edge(4, 5, 1.0),
        ],
        crossing_edges: vec![crossing(1, 1, 3, 1.0), crossing(2, 2, 4, 1.0)],
    };
    let family = build_bloch_family(&spec).expect("magnetic spec is valid");
    let mut reference = Vec::new();
    if beta == 0.1 {
        reference.extend([
            Reference::new("band2_global_max_point_0_2pi", vec![1.0632, 5.2200], 2e-3, Source::Reported),
            Reference::new("band2_local_max_point_0_2pi", vec![5.2534, 1.0298], 2e-3, Source::Reported),
            Reference::new("w_eigs_global_max", vec![-0.3433, -0.0095], 2e-3, Source::Reported),
            Reference::new("w_eigs_local_max", vec![-0.3240, 0.0097], 2e-3, Source::Reported),
        ]);
    }
    NamedExample {
        name: "hks-magnetic".into(),
        family,
        parameters: vec![("beta".into(), beta)],
        reference,
    }
}

/// Two-band model with an on-site `±t cos α₂` term carried by the second
/// generator, so that generator owns three matrix entries.
pub fn multi_edge_haldane_like(t: f64) -> NamedExample {
    let c0 = CMatrix::from_row_slice(2, 2, &[c64(-1.0, 0.0), c64(-1.0, 0.0), c64(-1.0, 0.0), c64(1.0, 0.0)]);
    let c1 = CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(-1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
    let c2 = CMatrix::from_row_slice(2, 2, &[c64(t / 2.0, 0.0), c64(-1.0, 0.0), c64(0.0, 0.0), c64(-t / 2.0, 0.0)]);
    let family = BlochFamily::from_matrices(c0, vec![c1, c2]).expect("multi-edge family is valid");
    let mut reference = Vec::new();
    if t == 4.0 {
        reference.extend([
            Reference::new("band1_local_min_point", vec![0.0, 0.0], 1e-10, Source::Reported),
            Reference::new("band1_at_origin", vec![-(18.0_f64).sqrt()], 1e-12, Source::Exact),
            Reference::new("grid_margin_below_origin", vec![0.1], 0.0, Source::Exact),
        ]);
    }
    NamedExample {
        name: "multi-edge".into(),
        family,
        parameters: vec![("t".into(), t)],
        reference,
    }
}

/// Lower band of [`multi_edge_haldane_like`] in closed form.
pub fn multi_edge_band1_closed_form(t: f64, alpha: &[f64]) -> f64 {
    let (a1, a2) = (alpha[0], alpha[1]);
    let diag = t * a2.cos() - 1.0;
    let hop = 3.0 + 2.0 * a1.cos() + 2.0 * a2.cos() + 2.0 * (a1 - a2).cos();
    -(diag * diag + hop).sqrt()
}

const D4_BASE: [[f64; 5]; 5] = [
    [2.556782, 0.104696, -0.000742, -0.049562, -0.072260],
    [0.104696, 3.69455, -0.436154, -0.126495, -0.571811],
    [-0.000742, -0.436154, 15.033535, 0.139015, -0.363838],
    [-0.049562, -0.126495, 0.139015, 2.146425, 0.298246],
    [-0.072260, -0.571811, -0.363838, 0.298246, 9.097398],
];

/// Random ℤ⁴-periodic model whose lowest band has an interior local maximum
/// that is not global.
pub fn d4_random_example() -> NamedExample {
    let c0 = CMatrix::from_fn(5, 5, |i, j| c64(D4_BASE[i][j], 0.0));
    let signs = [1.0, 1.0, -1.0, 1.0];
    let coeffs = signs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut c = CMatrix::zeros(5, 5);
            c[(0, j + 1)] = c64(*s, 0.0);
            c
        })
        .collect();
    let family = BlochFamily::from_matrices(c0, coeffs).expect("d4 family is valid");
    NamedExample {
        name: "d4-random".into(),
        family,
        parameters: Vec::new(),
        reference: vec![
            Reference::new("band1_interior_max_point", vec![-1.488, -2.153, 1.553, -3.324], 2e-3, Source::Reported),
            Reference::new("band1_interior_max", vec![0.989459], 2e-3, Source::Reported),
            Reference::new("band1_global_max_point", vec![PI, 0.0, PI, 0.0], 0.0, Source::Reported),
            Reference::new("band1_global_max", vec![1.2467], 2e-3, Source::Reported),
            Reference::new("band2_min", vec![2.63496], 5e-3, Source::Reported),
        ],
    }
}

/// Honeycomb lattice generators as rows, so that `α = J k`.
pub fn honeycomb_lattice_jacobian() -> DMatrix<f64> {
    let s = 3.0_f64.sqrt() / 2.0;
    DMatrix::from_row_slice(2, 2, &[s, 0.5, s, -0.5])
}

/// The honeycomb model written in Cartesian quasimomentum `k`:
/// `T₁₂(k) = −1 − e^{ik·a₁} − e^{ik·a₂}`, differentiated directly in `k`.
#[derive(Debug, Clone, Copy)]
pub struct HoneycombK {
    pub qa: f64,
    pub qb: f64,
}

impl HoneycombK {
    fn generators() -> [[f64; 2]; 2] {
        let s = 3.0_f64.sqrt() / 2.0;
        [[s, 0.5], [s, -0.5]]
    }

    fn phases(k: &[f64]) -> [C64; 2] {
        let a = Self::generators();
        [0, 1].map(|g| C64::from_polar(1.0, a[g][0] * k[0] + a[g][1] * k[1]))
    }

    fn offdiag(&self, t12: C64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), t12, t12.conj(), c64(0.0, 0.0)])
    }
}

impl BlochModel for HoneycombK {
    fn dimension(&self) -> usize {
        2
    }

    fn size(&self) -> usize {
        2
    }

    fn matrix_at(&self, k: &[f64]) -> CMatrix {
        let [e1, e2] = Self::phases(k);
        let mut t = self.offdiag(-c64(1.0, 0.0) - e1 - e2);
        t[(0, 0)] = c64(self.qa, 0.0);
        t[(1, 1)] = c64(self.qb, 0.0);
        t
    }

    fn first_derivative(&self, k: &[f64], m: usize) -> CMatrix {
        let a = Self::generators();
        let [e1, e2] = Self::phases(k);
        let i = C64::i();
        self.offdiag(-i * a[0][m] * e1 - i * a[1][m] * e2)
    }

    fn second_derivative(&self, k: &[f64], m: usize, l: usize) -> CMatrix {
        let a = Self::generators();
        let [e1, e2] = Self::phases(k);
        self.offdiag(e1 * (a[0][m] * a[0][l]) + e2 * (a[1][m] * a[1][l]))
    }
}
