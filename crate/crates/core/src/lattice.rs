//! Periodic graph specifications and their Floquet–Bloch matrix families.
//!
//! A graph with one crossing edge per generator reduces to the family
//!
//! ```text
//! T(α) = C₀ + Σⱼ (Cⱼ e^{iαⱼ} + Cⱼ* e^{−iαⱼ}),   Cⱼ = hⱼ E_{uⱼ,vⱼ}
//! ```
//!
//! where `C₀` carries the on-site potential and the intra-cell hoppings.
//! Families can also be given directly as matrices, which is how the
//! multi-edge counterexamples are expressed.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermitian::{hermitian_deviation, max_abs, symmetrize};
use crate::{CMatrix, C64};

/// Relative magnitude below which a crossing coefficient entry is a structural zero.
pub const STRUCTURAL_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("num_vertices must be positive")]
    NoVertices,
    #[error("onsite has {found} entries, expected {expected}")]
    OnsiteLength { expected: usize, found: usize },
    #[error("{record}: onsite potential must be finite")]
    NonFiniteOnsite { record: String },
    #[error("{record}: vertex index {index} out of range 1..={n}")]
    VertexOutOfRange {
        record: String,
        index: usize,
        n: usize,
    },
    #[error("{record}: generator index {gen} out of range 1..={d}")]
    GeneratorOutOfRange { record: String, gen: usize, d: usize },
    #[error("{record}: duplicate generator {gen}")]
    DuplicateGenerator { record: String, gen: usize },
    #[error("no crossing edge for generator {gen}")]
    MissingGenerator { gen: usize },
    #[error("{record}: zero or non-finite weight")]
    ZeroWeight { record: String },
    #[error("{record}: intra-cell edge joins a vertex to itself")]
    IntraLoop { record: String },
    #[error("{record}: duplicate intra-cell pair (merge weights upstream)")]
    DuplicateIntraEdge { record: String },
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("c0 is not Hermitian: ‖C₀ − C₀*‖ = {deviation:e}")]
    NonHermitian { deviation: f64 },
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("quasimomentum has {found} components, family has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, LatticeError>;

/// Reduces an angle to `(−π, π]`.
pub fn canonical_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    // rem_euclid can land exactly on 2π after rounding
    if y <= -PI {
        y += two_pi;
    }
    y
}

/// A point of the Brillouin torus with components in `(−π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quasimomentum(Vec<f64>);

impl Quasimomentum {
    pub fn new(components: Vec<f64>) -> Self {
        Self(components.into_iter().map(canonical_angle).collect())
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Components mapped to `[0, 2π)`.
    pub fn to_zero_two_pi(&self) -> Vec<f64> {
        self.0
            .iter()
            .map(|&x| if x < 0.0 { x + 2.0 * PI } else { x })
            .collect()
    }

    /// `self + step`, re-canonicalized.
    pub fn shifted(&self, step: &[f64]) -> Self {
        Self::new(self.0.iter().zip(step).map(|(a, s)| a + s).collect())
    }

    /// Torus distance (max over components of the wrapped difference).
    pub fn torus_distance(&self, other: &Quasimomentum) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| canonical_angle(a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn negated(&self) -> Self {
        Self::new(self.0.iter().map(|x| -x).collect())
    }

    /// True if every component is 0 or π (within `tol`).
    pub fn is_corner(&self, tol: f64) -> bool {
        self.0
            .iter()
            .all(|&x| x.abs() <= tol || (PI - x.abs()).abs() <= tol)
    }
}

impl fmt::Display for Quasimomentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x:.6}")?;
        }
        write!(f, ")")
    }
}

mod complex_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraEdge {
    pub u: usize,
    pub v: usize,
    #[serde(with = "complex_pair")]
    pub w: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEdgeSpec {
    pub gen: usize,
    pub u: usize,
    pub v: usize,
    #[serde(with = "complex_pair")]
    pub w: C64,
}

/// Combinatorial description of a fundamental domain. Vertex and generator
/// indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGraphSpec {
    pub dimension: usize,
    pub num_vertices: usize,
    pub onsite: Vec<f64>,
    #[serde(default)]
    pub intra_edges: Vec<IntraEdge>,
    pub crossing_edges: Vec<CrossingEdgeSpec>,
}

fn weight_ok(w: C64) -> bool {
    w.re.is_finite() && w.im.is_finite() && w.norm() > 0.0
}

impl PeriodicGraphSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        let n = self.num_vertices;
        if d == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if n == 0 {
            return Err(LatticeError::NoVertices);
        }
        if self.onsite.len() != n {
            return Err(LatticeError::OnsiteLength {
                expected: n,
                found: self.onsite.len(),
            });
        }
        for (i, q) in self.onsite.iter().enumerate() {
            if !q.is_finite() {
                return Err(LatticeError::NonFiniteOnsite {
                    record: format!("onsite[{i}]"),
                });
            }
        }
        let in_range = |record: &str, idx: usize| -> Result<()> {
            if idx == 0 || idx > n {
                Err(LatticeError::VertexOutOfRange {
                    record: record.to_string(),
                    index: idx,
                    n,
                })
            } else {
                Ok(())
            }
        };

        let mut seen_pairs = std::collections::HashSet::new();
        for (k, e) in self.intra_edges.iter().enumerate() {
            let record = format!("intra_edges[{k}] ({}–{})", e.u, e.v);
            in_range(&record, e.u)?;
            in_range(&record, e.v)?;
            if e.u == e.v {
                return Err(LatticeError::IntraLoop { record });
            }
            if !weight_ok(e.w) {
                return Err(LatticeError::ZeroWeight { record });
            }
            if !seen_pairs.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(LatticeError::DuplicateIntraEdge { record });
            }
        }

        let mut seen_gen = vec![false; d];
        for (k, e) in self.crossing_edges.iter().enumerate() {
            let record = format!("crossing_edges[{k}] (gen {}: {}–{})", e.gen, e.u, e.v);
            if e.gen == 0 || e.gen > d {
                return Err(LatticeError::GeneratorOutOfRange {
                    record,
                    gen: e.gen,
                    d,
                });
            }
            if seen_gen[e.gen - 1] {
                return Err(LatticeError::DuplicateGenerator { record, gen: e.gen });
            }
            seen_gen[e.gen - 1] = true;
            in_range(&record, e.u)?;
            in_range(&record, e.v)?;
            if !weight_ok(e.w) {
                return Err(LatticeError::ZeroWeight { record });
            }
        }
        if let Some(missing) = seen_gen.iter().position(|s| !s) {
            return Err(LatticeError::MissingGenerator { gen: missing + 1 });
        }

        let components = self.component_count();
        if components > 1 {
            return Err(LatticeError::Disconnected { components });
        }
        Ok(())
    }

    fn component_count(&self) -> usize {
        let n = self.num_vertices;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let links = self
            .intra_edges
            .iter()
            .map(|e| (e.u, e.v))
            .chain(self.crossing_edges.iter().map(|e| (e.u, e.v)));
        for (u, v) in links {
            let (a, b) = (find(&mut parent, u - 1), find(&mut parent, v - 1));
            if a != b {
                parent[a] = b;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    /// Crossing edges indexed by generator (position j ↔ generator j+1).
    fn crossing_by_generator(&self) -> Vec<&CrossingEdgeSpec> {
        let mut out: Vec<&CrossingEdgeSpec> = self.crossing_edges.iter().collect();
        out.sort_by_key(|e| e.gen);
        out
    }
}

/// The `j`-th crossing edge in 0-based vertex indices: `Cⱼ = h E_{u,v}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEdge {
    pub u: usize,
    pub v: usize,
    #[serde(with = "complex_pair")]
    pub h: C64,
}

/// The matrix family `T(α) = C₀ + Σⱼ (Cⱼ e^{iαⱼ} + Cⱼ* e^{−iαⱼ})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochFamily {
    dimension: usize,
    size: usize,
    c0: CMatrix,
    coeffs: Vec<CMatrix>,
    single_crossing: bool,
    time_reversal: bool,
}

/// Anything that yields a smooth Hermitian family with analytic derivatives.
pub trait BlochModel: Sync {
    fn dimension(&self) -> usize;
    fn size(&self) -> usize;
    /// `T(α)`, Hermitian.
    fn matrix_at(&self, alpha: &[f64]) -> CMatrix;
    /// `∂T/∂αⱼ`.
    fn first_derivative(&self, alpha: &[f64], j: usize) -> CMatrix;
    /// `∂²T/∂αᵢ∂αⱼ`.
    fn second_derivative(&self, alpha: &[f64], i: usize, j: usize) -> CMatrix;
    /// Crossing edges, when the family has one crossing edge per generator.
    fn crossing_edges(&self) -> Option<Vec<CrossingEdge>> {
        None
    }
    fn time_reversal(&self) -> bool {
        false
    }
    /// Point-independent energy scale used to judge eigenvalue gaps where
    /// the spectrum itself collapses; 0 when unknown.
    fn energy_scale(&self) -> f64 {
        0.0
    }
}

impl BlochFamily {
    /// Builds a family from raw matrices, recomputing the structural flags.
    pub fn from_matrices(c0: CMatrix, coeffs: Vec<CMatrix>) -> Result<Self> {
        let n = c0.nrows();
        if n == 0 || c0.ncols() != n {
            return Err(LatticeError::Shape(format!(
                "c0 must be square and nonempty, got {}×{}",
                c0.nrows(),
                c0.ncols()
            )));
        }
        if coeffs.is_empty() {
            return Err(LatticeError::ZeroDimension);
        }
        for (j, c) in coeffs.iter().enumerate() {
            if c.shape() != (n, n) {
                return Err(LatticeError::Shape(format!(
                    "coeffs[{j}] is {}×{}, expected {n}×{n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        if c0.iter().chain(coeffs.iter().flatten()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LatticeError::Shape("non-finite entry".into()));
        }
        let deviation = hermitian_deviation(&c0);
        if deviation > 1e-12 * max_abs(&c0).max(f64::MIN_POSITIVE) {
            return Err(LatticeError::NonHermitian { deviation });
        }
        let c0 = symmetrize(&c0);
        let mut fam = Self {
            dimension: coeffs.len(),
            size: n,
            c0,
            coeffs,
            single_crossing: false,
            time_reversal: false,
        };
        fam.single_crossing = validate_single_crossing(&fam).is_empty();
        fam.time_reversal = is_real(&fam.c0) && fam.coeffs.iter().all(is_real);
        Ok(fam)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn c0(&self) -> &CMatrix {
        &self.c0
    }

    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn single_crossing(&self) -> bool {
        self.single_crossing
    }

    pub fn time_reversal(&self) -> bool {
        self.time_reversal
    }

    /// Generators whose crossing edge is a loop (`uⱼ = vⱼ`).
    pub fn loop_generators(&self) -> Vec<usize> {
        self.crossing_edges()
            .map(|edges| {
                edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.u == e.v)
                    .map(|(j, _)| j + 1)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `T(α)`, symmetrized so that it is Hermitian to the last bit.
    pub fn evaluate(&self, alpha: &Quasimomentum) -> Result<CMatrix> {
        if alpha.dimension() != self.dimension {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dimension,
                found: alpha.dimension(),
            });
        }
        Ok(self.matrix_at(alpha.components()))
    }

    /// Crossing edges in 0-based indices, if each `Cⱼ` has exactly one nonzero entry.
    pub fn crossing_edges(&self) -> Option<Vec<CrossingEdge>> {
        if !self.single_crossing {
            return None;
        }
        let edges = self
            .coeffs
            .iter()
            .map(|c| {
                let thr = STRUCTURAL_EPS * max_abs(c);
                let (k, h) = c
                    .iter()
                    .enumerate()
                    .find(|(_, z)| z.norm() > thr)
                    .expect("single crossing implies one nonzero entry");
                // column-major storage
                CrossingEdge {
                    u: k % self.size,
                    v: k / self.size,
                    h: *h,
                }
            })
            .collect();
        Some(edges)
    }
}

impl BlochModel for BlochFamily {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn size(&self) -> usize {
        self.size
    }

    fn matrix_at(&self, alpha: &[f64]) -> CMatrix {
        let mut t = self.c0.clone();
        for (c, &a) in self.coeffs.iter().zip(alpha) {
            let e = C64::from_polar(1.0, a);
            t += c * e + c.adjoint() * e.conj();
        }
        symmetrize(&t)
    }

    /// Frobenius bound `‖C₀‖ + 2 Σⱼ ‖Cⱼ‖` on `‖T(α)‖₂`.
    fn energy_scale(&self) -> f64 {
        self.c0.norm() + 2.0 * self.coeffs.iter().map(|c| c.norm()).sum::<f64>()
    }

    fn first_derivative(&self, alpha: &[f64], j: usize) -> CMatrix {
        let c = &self.coeffs[j];
        let e = C64::from_polar(1.0, alpha[j]);
        (c * e - c.adjoint() * e.conj()) * C64::i()
    }

    fn second_derivative(&self, alpha: &[f64], i: usize, j: usize) -> CMatrix {
        if i != j {
            return CMatrix::zeros(self.size, self.size);
        }
        let c = &self.coeffs[j];
        let e = C64::from_polar(1.0, alpha[j]);
        -(c * e + c.adjoint() * e.conj())
    }

    fn crossing_edges(&self) -> Option<Vec<CrossingEdge>> {
        BlochFamily::crossing_edges(self)
    }

    fn time_reversal(&self) -> bool {
        self.time_reversal
    }
}

fn is_real(m: &CMatrix) -> bool {
    let thr = STRUCTURAL_EPS * max_abs(m);
    m.iter().all(|z| z.im.abs() <= thr)
}

/// Generators (1-based) whose coefficient `Cⱼ` does not have exactly one
/// nonzero entry, with the count of nonzero entries.
pub fn validate_single_crossing(family: &BlochFamily) -> Vec<(usize, usize)> {
    family
        .coeffs
        .iter()
        .enumerate()
        .filter_map(|(j, c)| {
            let thr = STRUCTURAL_EPS * max_abs(c);
            let count = c.iter().filter(|z| z.norm() > thr).count();
            (count != 1).then_some((j + 1, count))
        })
        .collect()
}

/// Assembles the Bloch family of a validated graph specification.
pub fn build_bloch_family(spec: &PeriodicGraphSpec) -> Result<BlochFamily> {
    spec.validate()?;
    let n = spec.num_vertices;
    let mut c0 = CMatrix::zeros(n, n);
    for (i, q) in spec.onsite.iter().enumerate() {
        c0[(i, i)] = C64::new(*q, 0.0);
    }
    for e in &spec.intra_edges {
        c0[(e.u - 1, e.v - 1)] += e.w;
        c0[(e.v - 1, e.u - 1)] += e.w.conj();
    }
    let coeffs = spec
        .crossing_by_generator()
        .into_iter()
        .map(|e| {
            let mut c = CMatrix::zeros(n, n);
            c[(e.u - 1, e.v - 1)] = e.w;
            c
        })
        .collect();
    BlochFamily::from_matrices(c0, coeffs)
}

fn parse_error(e: serde_json::Error) -> LatticeError {
    LatticeError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a graph file.
pub fn parse_graph_file(bytes: &[u8]) -> Result<PeriodicGraphSpec> {
    let spec: PeriodicGraphSpec = serde_json::from_slice(bytes).map_err(parse_error)?;
    spec.validate()?;
    Ok(spec)
}

type RawMatrix = Vec<Vec<[f64; 2]>>;

/// On-disk form of a raw family: row-major `[re, im]` matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFamilyFile {
    pub c0: RawMatrix,
    pub coeffs: Vec<RawMatrix>,
}

fn to_raw(m: &CMatrix) -> RawMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_raw(rows: &RawMatrix, what: &str) -> Result<CMatrix> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(LatticeError::Shape(format!(
            "{what} row {i} has {} entries, expected {n}",
            r.len()
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

impl RawFamilyFile {
    pub fn from_family(family: &BlochFamily) -> Self {
        Self {
            c0: to_raw(&family.c0),
            coeffs: family.coeffs.iter().map(to_raw).collect(),
        }
    }

    pub fn into_family(self) -> Result<BlochFamily> {
        let c0 = from_raw(&self.c0, "c0")?;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, m)| from_raw(m, &format!("coeffs[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        BlochFamily::from_matrices(c0, coeffs)
    }
}

/// Serializes a family in the raw-family JSON format.
pub fn family_to_json(family: &BlochFamily) -> String {
    serde_json::to_string_pretty(&RawFamilyFile::from_family(family)).expect("plain data")
}

/// Parses either a graph file or a raw family file.
pub fn parse_family_file(bytes: &[u8]) -> Result<BlochFamily> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(parse_error)?;
    if value.get("c0").is_some() {
        let raw: RawFamilyFile = serde_json::from_slice(bytes).map_err(parse_error)?;
        raw.into_family()
    } else {
        build_bloch_family(&parse_graph_file(bytes)?)
    }
}
