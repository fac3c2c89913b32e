//! The six benchmark inverse problems and the assembled observation operator
//! `G(ξ) = [G_u, G_f, G_b]`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    self, add_noise, equispaced, ko_solve, latin_hypercube, poisson2d_solve, polyline_points, rectangle_boundary,
    tensor_grid, ColeHopf, Provenance, ReferenceField,
};
use crate::error::{Error, Result};
use crate::linalg::RngStream;
use crate::surrogate::{forward_batch, forward_jet_batches, JetBatch, MlpArchitecture, ParamLayout};

/// Stream ids used for data generation live in their own high range so they
/// never collide with the ensemble streams, even when the seeds coincide.
const DATA_STREAM: u64 = 0xF << 60;
const STREAM_NOISE: u64 = DATA_STREAM | 1;
const STREAM_LHS_U: u64 = DATA_STREAM | 2;
const STREAM_LHS_F: u64 = DATA_STREAM | 3;
const STREAM_PICK: u64 = DATA_STREAM | 4;

const KO_IC: [f64; 3] = [1.0, 0.8, 0.5];
const KO_DT: f64 = 1e-3;
const SOURCE_AMPLITUDES: [f64; 3] = [2.0, -3.0, 0.5];
const SOURCE_WIDTH: f64 = 0.15;
const SOURCE_GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Poisson1dLinear,
    Poisson1dNonlinear,
    Diffreact2d,
    KraichnanOrszag,
    Burgers,
    SourceLocalization,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::Poisson1dLinear,
        ProblemKind::Poisson1dNonlinear,
        ProblemKind::Diffreact2d,
        ProblemKind::KraichnanOrszag,
        ProblemKind::Burgers,
        ProblemKind::SourceLocalization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Poisson1dLinear => "poisson1d_linear",
            ProblemKind::Poisson1dNonlinear => "poisson1d_nonlinear",
            ProblemKind::Diffreact2d => "diffreact2d",
            ProblemKind::KraichnanOrszag => "kraichnan_orszag",
            ProblemKind::Burgers => "burgers",
            ProblemKind::SourceLocalization => "source_localization",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Forward,
    Residual,
    Boundary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Forward => "forward",
            Role::Residual => "residual",
            Role::Boundary => "boundary",
        }
    }
}

/// Observations of one kind. `components[i]` is the network output (forward
/// and boundary rows) or the equation index (residual rows) of row `i`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub role: Role,
    pub locations: Array2<f64>,
    pub values: Vec<f64>,
    pub components: Vec<usize>,
}

impl Dataset {
    fn new(role: Role, locations: Array2<f64>, values: Vec<f64>, components: Vec<usize>) -> Self {
        assert_eq!(locations.nrows(), values.len());
        assert_eq!(values.len(), components.len());
        Self { role, locations, values, components }
    }

    fn single(role: Role, points: &[Vec<f64>], values: Vec<f64>) -> Self {
        let n = points.len();
        Self::new(role, to_array(points), values, vec![0; n])
    }

    fn empty(role: Role, dim: usize) -> Self {
        Self::new(role, Array2::zeros((0, dim)), Vec::new(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
}

/// Physical parameters: inference runs on raw (transformed) coordinates, and
/// the `Log` transform maps raw `r` to the physical value `exp(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysParamSpec {
    pub names: Vec<String>,
    /// Prior mean and standard deviation in raw coordinates.
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub transform: Vec<Transform>,
    /// True physical values.
    pub true_values: Vec<f64>,
}

impl PhysParamSpec {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Raw to physical.
    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.transform)
            .map(|(&r, t)| match t {
                Transform::Identity => r,
                Transform::Log => r.exp(),
            })
            .collect()
    }

    /// Physical to raw.
    pub fn back_transform(&self, physical: &[f64]) -> Vec<f64> {
        physical
            .iter()
            .zip(&self.transform)
            .map(|(&p, t)| match t {
                Transform::Identity => p,
                Transform::Log => p.ln(),
            })
            .collect()
    }
}

/// How a scalar written `N(0, s)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScale {
    #[default]
    Std,
    Variance,
}

impl PriorScale {
    fn std(self, s: f64) -> f64 {
        match self {
            PriorScale::Std => s,
            PriorScale::Variance => s.sqrt(),
        }
    }
}

/// Per-block likelihood standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub sigma_u: f64,
    pub sigma_f: f64,
    pub sigma_b: f64,
}

/// Evaluation points and reference values (`n × output_dim`).
#[derive(Debug, Clone)]
pub struct TestGrid {
    pub points: Array2<f64>,
    pub reference: Array2<f64>,
}

/// Value and directional derivatives of every network output at one point.
pub trait JetView {
    fn value(&self, output: usize) -> f64;
    fn d1(&self, direction: usize, output: usize) -> f64;
    fn d2(&self, direction: usize, output: usize) -> f64;
}

/// Owned jets at a single point, indexed `[direction][output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJets {
    pub v: Vec<f64>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
}

impl JetView for PointJets {
    fn value(&self, output: usize) -> f64 {
        self.v[output]
    }
    fn d1(&self, direction: usize, output: usize) -> f64 {
        self.d1[direction][output]
    }
    fn d2(&self, direction: usize, output: usize) -> f64 {
        self.d2[direction][output]
    }
}

struct BatchJets<'a> {
    dirs: &'a [JetBatch],
    point: usize,
}

impl JetView for BatchJets<'_> {
    fn value(&self, output: usize) -> f64 {
        self.dirs[0].v[[self.point, output]]
    }
    fn d1(&self, direction: usize, output: usize) -> f64 {
        self.dirs[direction].d1[[self.point, output]]
    }
    fn d2(&self, direction: usize, output: usize) -> f64 {
        self.dirs[direction].d2[[self.point, output]]
    }
}

/// Rows of a dataset grouped by distinct location, so each location is
/// evaluated by the network once.
#[derive(Debug, Clone)]
struct PointIndex {
    points: Array2<f64>,
    row_point: Vec<usize>,
}

impl PointIndex {
    fn build(locations: ArrayView2<f64>) -> Self {
        let mut uniq: Vec<Vec<f64>> = Vec::new();
        let mut row_point = Vec::with_capacity(locations.nrows());
        for row in locations.rows() {
            let r = row.to_vec();
            let k = match uniq.iter().position(|u| *u == r) {
                Some(k) => k,
                None => {
                    uniq.push(r);
                    uniq.len() - 1
                }
            };
            row_point.push(k);
        }
        let points = if uniq.is_empty() { Array2::zeros((0, locations.ncols())) } else { to_array(&uniq) };
        Self { points, row_point }
    }
}

/// A fully specified benchmark inverse problem.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub kind: ProblemKind,
    pub arch: MlpArchitecture,
    pub params: PhysParamSpec,
    pub coord_names: Vec<&'static str>,
    pub data_u: Dataset,
    pub data_f: Dataset,
    pub data_b: Dataset,
    pub noise: NoiseLevels,
    pub test_grid: TestGrid,
    pub reference: ReferenceField,
    u_index: PointIndex,
    f_index: PointIndex,
    b_index: PointIndex,
}

impl InverseProblem {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout { n_lambda: self.params.len(), n_theta: self.arch.param_count() }
    }

    /// `(N_u, N_f, N_b)`.
    pub fn block_sizes(&self) -> (usize, usize, usize) {
        (self.data_u.len(), self.data_f.len(), self.data_b.len())
    }

    pub fn n_obs(&self) -> usize {
        self.data_u.len() + self.data_f.len() + self.data_b.len()
    }

    /// The observation vector `y = [u, f, b]`.
    pub fn observations(&self) -> Vec<f64> {
        let mut y = self.data_u.values.clone();
        y.extend_from_slice(&self.data_f.values);
        y.extend_from_slice(&self.data_b.values);
        y
    }

    /// Diagonal of `R`, in observation order.
    pub fn noise_variances(&self) -> Vec<f64> {
        let (nu, nf, nb) = self.block_sizes();
        let mut r = vec![self.noise.sigma_u.powi(2); nu];
        r.extend(std::iter::repeat_n(self.noise.sigma_f.powi(2), nf));
        r.extend(std::iter::repeat_n(self.noise.sigma_b.powi(2), nb));
        r
    }

    /// `N(u; λ)` at `x` for equation `eq`, given the surrogate's jets.
    pub fn residual(&self, jets: &dyn JetView, lambda: &[f64], x: &[f64], eq: usize) -> f64 {
        residual_op(self.kind, jets, lambda, x, eq)
    }

    /// `G(ξ)`. Fails with `NonFiniteOutput` if any entry is NaN or infinite.
    pub fn observe(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let layout = self.layout();
        if xi.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, problem expects {}",
                xi.len(),
                layout.len()
            )));
        }
        let (raw, theta) = layout.split(xi);
        let lambda = self.params.transform(raw);
        let mut y = Vec::with_capacity(self.n_obs());

        if !self.data_u.is_empty() {
            let v = forward_batch(&self.arch, theta, self.u_index.points.view())?;
            for (&p, &c) in self.u_index.row_point.iter().zip(&self.data_u.components) {
                y.push(v[[p, c]]);
            }
        }
        if !self.data_f.is_empty() {
            let all: Vec<usize> = (0..self.arch.input_dim).collect();
            let dirs = forward_jet_batches(&self.arch, theta, self.f_index.points.view(), &all)?;
            for (row, (&p, &eq)) in self.f_index.row_point.iter().zip(&self.data_f.components).enumerate() {
                let view = BatchJets { dirs: &dirs, point: p };
                let x = self.data_f.locations.row(row);
                y.push(residual_op(self.kind, &view, &lambda, x.as_slice().unwrap(), eq));
            }
        }
        if !self.data_b.is_empty() {
            let v = forward_batch(&self.arch, theta, self.b_index.points.view())?;
            for (&p, &c) in self.b_index.row_point.iter().zip(&self.data_b.components) {
                y.push(v[[p, c]]);
            }
        }
        if y.iter().all(|v| v.is_finite()) {
            Ok(y)
        } else {
            Err(Error::NonFiniteOutput)
        }
    }

    /// Write every dataset row as `role, coordinates..., value`.
    pub fn write_dataset_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["role".to_string()];
        header.extend(self.coord_names.iter().map(|s| s.to_string()));
        header.push("value".into());
        w.write_record(&header)?;
        for ds in [&self.data_u, &self.data_f, &self.data_b] {
            let multi = match ds.role {
                Role::Residual => self.kind == ProblemKind::KraichnanOrszag,
                _ => self.arch.output_dim > 1,
            };
            for (i, row) in ds.locations.rows().into_iter().enumerate() {
                let role =
                    if multi { format!("{}:{}", ds.role.as_str(), ds.components[i]) } else { ds.role.as_str().into() };
                let mut rec = vec![role];
                rec.extend(row.iter().map(|v| v.to_string()));
                rec.push(ds.values[i].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Write the test grid with reference values, one column per output.
    pub fn write_reference_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header: Vec<String> = self.coord_names.iter().map(|s| s.to_string()).collect();
        header.extend(self.output_names());
        writeln!(f, "{}", header.join(","))?;
        for (p, r) in self.test_grid.points.rows().into_iter().zip(self.test_grid.reference.rows()) {
            let cells: Vec<String> = p.iter().chain(r.iter()).map(|v| v.to_string()).collect();
            writeln!(f, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn output_names(&self) -> Vec<String> {
        if self.arch.output_dim == 1 {
            vec!["u".into()]
        } else {
            (1..=self.arch.output_dim).map(|i| format!("u{i}")).collect()
        }
    }
}

fn residual_op(kind: ProblemKind, j: &dyn JetView, lam: &[f64], x: &[f64], eq: usize) -> f64 {
    match kind {
        ProblemKind::Poisson1dLinear => j.d2(0, 0) + lam[0] * x[0].cos(),
        ProblemKind::Poisson1dNonlinear => 0.01 * j.d2(0, 0) + lam[0] * j.value(0).tanh(),
        ProblemKind::Diffreact2d => 0.01 * (j.d2(0, 0) + j.d2(1, 0)) + lam[0] * j.value(0).powi(2),
        ProblemKind::KraichnanOrszag => {
            let (a, b) = (lam[0], lam[1]);
            let u = [j.value(0), j.value(1), j.value(2)];
            match eq {
                0 => j.d1(0, 0) - a * u[1] * u[2],
                1 => j.d1(0, 1) - b * u[0] * u[2],
                _ => j.d1(0, 2) + (a + b) * u[0] * u[1],
            }
        }
        ProblemKind::Burgers => j.d1(1, 0) + j.value(0) * j.d1(0, 0) - lam[0] * j.d2(0, 0),
        ProblemKind::SourceLocalization => -0.02 * (j.d2(0, 0) + j.d2(1, 0)) - source_field(lam, x[0], x[1]),
    }
}

/// `f₂(x) = Σ kᵢ exp(−|x − xᵢ|² / 2ℓ²)` with centres `[x₁, y₁, x₂, y₂, x₃, y₃]`.
pub fn source_field(centres: &[f64], x: f64, y: f64) -> f64 {
    SOURCE_AMPLITUDES
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let d2 = (x - centres[2 * i]).powi(2) + (y - centres[2 * i + 1]).powi(2);
            k * (-d2 / (2.0 * SOURCE_WIDTH * SOURCE_WIDTH)).exp()
        })
        .sum()
}

fn source_f1(x: f64, y: f64) -> f64 {
    0.1 * (PI * x).sin() * (PI * y).sin()
}

/// Options that change how a problem is built.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProblemOptions {
    pub prior_scale: PriorScale,
}

pub fn make_problem(name: &str, noise_level: f64, seed: u64) -> Result<InverseProblem> {
    make_problem_with(name, noise_level, seed, ProblemOptions::default())
}

/// Build a benchmark by name. Only sampling locations and measurement noise
/// depend on `seed`.
pub fn make_problem_with(name: &str, noise_level: f64, seed: u64, opts: ProblemOptions) -> Result<InverseProblem> {
    let kind: ProblemKind = name.parse()?;
    if !(noise_level.is_finite() && noise_level > 0.0) {
        return Err(Error::InvalidConfig(format!("noise level must be positive, got {noise_level}")));
    }
    let b = Builder { noise: noise_level, seed, opts };
    match kind {
        ProblemKind::Poisson1dLinear => Ok(b.poisson1d_linear()),
        ProblemKind::Poisson1dNonlinear => Ok(b.poisson1d_nonlinear()),
        ProblemKind::Diffreact2d => Ok(b.diffreact2d()),
        ProblemKind::KraichnanOrszag => Ok(b.kraichnan_orszag()),
        ProblemKind::Burgers => b.burgers(),
        ProblemKind::SourceLocalization => b.source_localization(),
    }
}

struct Builder {
    noise: f64,
    seed: u64,
    opts: ProblemOptions,
}

struct Parts {
    kind: ProblemKind,
    arch: MlpArchitecture,
    params: PhysParamSpec,
    coord_names: Vec<&'static str>,
    data_u: Dataset,
    data_f: Dataset,
    data_b: Dataset,
    sigma_f: f64,
    test_points: Vec<Vec<f64>>,
    reference: ReferenceField,
}

impl Builder {
    fn stream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, id)
    }

    fn noisy(&self, clean: &[f64]) -> Vec<f64> {
        add_noise(clean, self.noise, self.stream(STREAM_NOISE))
    }

    fn finish(&self, p: Parts) -> InverseProblem {
        let n_out = p.arch.output_dim;
        let mut reference = Array2::zeros((p.test_points.len(), n_out));
        for (i, x) in p.test_points.iter().enumerate() {
            for (o, v) in p.reference.eval(x).into_iter().enumerate() {
                reference[[i, o]] = v;
            }
        }
        let test_grid = TestGrid { points: to_array(&p.test_points), reference };
        InverseProblem {
            kind: p.kind,
            u_index: PointIndex::build(p.data_u.locations.view()),
            f_index: PointIndex::build(p.data_f.locations.view()),
            b_index: PointIndex::build(p.data_b.locations.view()),
            arch: p.arch,
            params: p.params,
            coord_names: p.coord_names,
            data_u: p.data_u,
            data_f: p.data_f,
            data_b: p.data_b,
            noise: NoiseLevels { sigma_u: self.noise, sigma_f: p.sigma_f, sigma_b: 0.01 },
            test_grid,
            reference: p.reference,
        }
    }

    fn poisson1d_linear(&self) -> InverseProblem {
        let exact = |x: f64| x.cos();
        let xu: Vec<Vec<f64>> = (1..=8).map(|i| vec![8.0 * i as f64 / 9.0]).collect();
        let xf: Vec<Vec<f64>> = equispaced(100, 0.0, 8.0).into_iter().map(|x| vec![x]).collect();
        let xb = vec![vec![0.0], vec![8.0]];
        let u: Vec<f64> = xu.iter().map(|p| exact(p[0])).collect();
        self.finish(Parts {
            kind: ProblemKind::Poisson1dLinear,
            arch: MlpArchitecture::benchmark(1, 1),
            params: scalar_param("k", 0.0, 1.0, 1.0),
            coord_names: vec!["x"],
            data_u: Dataset::single(Role::Forward, &xu, self.noisy(&u)),
            data_f: Dataset::single(Role::Residual, &xf, vec![0.0; 100]),
            data_b: Dataset::single(Role::Boundary, &xb, vec![exact(0.0), exact(8.0)]),
            sigma_f: 0.01,
            test_points: equispaced(200, 0.0, 8.0).into_iter().map(|x| vec![x]).collect(),
            reference: ReferenceField::new(Provenance::Analytic, move |x| vec![exact(x[0])]),
        })
    }

    fn poisson1d_nonlinear(&self) -> InverseProblem {
        let exact = |x: f64| (6.0 * x).sin().powi(3);
        let forcing = |x: f64| {
            let (s, c) = ((6.0 * x).sin(), (6.0 * x).cos());
            0.01 * (216.0 * s * c * c - 108.0 * s.powi(3)) + 0.7 * exact(x).tanh()
        };
        let xu: Vec<Vec<f64>> = equispaced(6, -0.7, 0.7).into_iter().map(|x| vec![x]).collect();
        let xf: Vec<Vec<f64>> = equispaced(32, -0.7, 0.7).into_iter().map(|x| vec![x]).collect();
        let xb = vec![vec![-0.7], vec![0.7]];
        let u: Vec<f64> = xu.iter().map(|p| exact(p[0])).collect();
        let f: Vec<f64> = xf.iter().map(|p| forcing(p[0])).collect();
        let b: Vec<f64> = xb.iter().map(|p| exact(p[0])).collect();
        self.finish(Parts {
            kind: ProblemKind::Poisson1dNonlinear,
            arch: MlpArchitecture::benchmark(1, 1),
            params: scalar_param("k", 0.0, 1.0, 0.7),
            coord_names: vec!["x"],
            data_u: Dataset::single(Role::Forward, &xu, self.noisy(&u)),
            data_f: Dataset::single(Role::Residual, &xf, f),
            data_b: Dataset::single(Role::Boundary, &xb, b),
            sigma_f: 0.01,
            test_points: equispaced(200, -0.7, 0.7).into_iter().map(|x| vec![x]).collect(),
            reference: ReferenceField::new(Provenance::Analytic, move |x| vec![exact(x[0])]),
        })
    }

    fn diffreact2d(&self) -> InverseProblem {
        let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let forcing = |x: f64, y: f64| {
            let u = exact(x, y);
            -0.01 * 2.0 * PI * PI * u + u * u
        };
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let xu = latin_hypercube(100, &bounds, self.stream(STREAM_LHS_U));
        let xf = latin_hypercube(100, &bounds, self.stream(STREAM_LHS_F));
        let xb: Vec<Vec<f64>> = rectangle_boundary(100, (-1.0, 1.0), (-1.0, 1.0)).iter().map(|p| p.to_vec()).collect();
        let u: Vec<f64> = xu.iter().map(|p| exact(p[0], p[1])).collect();
        let f: Vec<f64> = xf.iter().map(|p| forcing(p[0], p[1])).collect();
        let g = equispaced(50, -1.0, 1.0);
        self.finish(Parts {
            kind: ProblemKind::Diffreact2d,
            arch: MlpArchitecture::benchmark(2, 1),
            params: scalar_param("k", 0.0, 1.0, 1.0),
            coord_names: vec!["x", "y"],
            data_u: Dataset::single(Role::Forward, &xu, self.noisy(&u)),
            data_f: Dataset::single(Role::Residual, &xf, f),
            data_b: Dataset::single(Role::Boundary, &xb, vec![0.0; 100]),
            sigma_f: 0.01,
            test_points: tensor_grid(&g, &g).iter().map(|p| p.to_vec()).collect(),
            reference: ReferenceField::new(Provenance::Analytic, move |x| vec![exact(x[0], x[1])]),
        })
    }

    fn kraichnan_orszag(&self) -> InverseProblem {
        let times = equispaced(12, 1.0, 10.0);
        let traj = ko_solve(1.0, 1.0, KO_IC, &times, KO_DT);
        let mut xu = Vec::new();
        let mut u = Vec::new();
        let mut comp = Vec::new();
        for (c, count) in [(0usize, 12usize), (1, 7), (2, 12)] {
            for i in 0..count {
                xu.push(vec![times[i]]);
                u.push(traj[i][c]);
                comp.push(c);
            }
        }
        let tf = equispaced(100, 0.0, 10.0);
        let mut xf = Vec::new();
        let mut eqs = Vec::new();
        for eq in 0..3 {
            for &t in &tf {
                xf.push(vec![t]);
                eqs.push(eq);
            }
        }
        let prior = self.opts.prior_scale.std(2.0);
        self.finish(Parts {
            kind: ProblemKind::KraichnanOrszag,
            arch: MlpArchitecture::benchmark(1, 3),
            params: PhysParamSpec {
                names: vec!["a".into(), "b".into()],
                prior_mean: vec![0.0, 0.0],
                prior_std: vec![prior, prior],
                transform: vec![Transform::Identity; 2],
                true_values: vec![1.0, 1.0],
            },
            coord_names: vec!["t"],
            data_u: Dataset::new(Role::Forward, to_array(&xu), self.noisy(&u), comp),
            data_f: Dataset::new(Role::Residual, to_array(&xf), vec![0.0; 300], eqs),
            data_b: Dataset::empty(Role::Boundary, 1),
            sigma_f: 0.01,
            test_points: equispaced(300, 0.0, 10.0).into_iter().map(|t| vec![t]).collect(),
            reference: ReferenceField::new(Provenance::Rk4 { dt: KO_DT }, |x| {
                ko_solve(1.0, 1.0, KO_IC, &[x[0]], KO_DT)[0].to_vec()
            }),
        })
    }

    fn burgers(&self) -> Result<InverseProblem> {
        let nu = 0.1 / PI;
        let t_end = 3.0 / PI;
        let ch = ColeHopf::new(nu, datagen::burgers::DEFAULT_NODES);
        let gx = equispaced(256, -1.0, 1.0);
        let gt = equispaced(100, 0.0, t_end);
        let grid = tensor_grid(&gx, &gt);
        let grid_u = grid.iter().map(|p| ch.eval(p[0], p[1])).collect::<Result<Vec<_>>>()?;

        let picks = sample(&mut self.stream(STREAM_PICK).rng(), grid.len(), 100).into_vec();
        let xu: Vec<Vec<f64>> = picks.iter().map(|&i| grid[i].to_vec()).collect();
        let u: Vec<f64> = picks.iter().map(|&i| grid_u[i]).collect();
        let xf = latin_hypercube(100, &[(-1.0, 1.0), (0.0, t_end)], self.stream(STREAM_LHS_F));
        let xb: Vec<Vec<f64>> =
            polyline_points(75, &[[-1.0, t_end], [-1.0, 0.0], [1.0, 0.0], [1.0, t_end]], false)
                .iter()
                .map(|p| p.to_vec())
                .collect();
        let b: Vec<f64> = xb.iter().map(|p| if p[0].abs() >= 1.0 { 0.0 } else { -(PI * p[0]).sin() }).collect();

        let eval_ch = ch.clone();
        Ok(self.finish(Parts {
            kind: ProblemKind::Burgers,
            arch: MlpArchitecture::benchmark(2, 1),
            params: PhysParamSpec {
                names: vec!["nu".into()],
                prior_mean: vec![0.0],
                prior_std: vec![self.opts.prior_scale.std(3.0)],
                transform: vec![Transform::Log],
                true_values: vec![nu],
            },
            coord_names: vec!["x", "t"],
            data_u: Dataset::single(Role::Forward, &xu, self.noisy(&u)),
            data_f: Dataset::single(Role::Residual, &xf, vec![0.0; 100]),
            data_b: Dataset::single(Role::Boundary, &xb, b),
            sigma_f: 0.1,
            test_points: grid.iter().map(|p| p.to_vec()).collect(),
            reference: ReferenceField::new(Provenance::ColeHopf { nodes: ch.n_nodes() }, move |x| {
                vec![eval_ch.eval(x[0], x[1]).unwrap_or(f64::NAN)]
            }),
        }))
    }

    fn source_localization(&self) -> Result<InverseProblem> {
        let centres = [0.3, 0.3, 0.75, 0.75, 0.2, 0.7];
        let sol = poisson2d_solve(0.02, move |x, y| source_f1(x, y) + source_field(&centres, x, y), SOURCE_GRID)?;
        let n = SOURCE_GRID;
        let interior = (n - 1) * (n - 1);
        let picks = sample(&mut self.stream(STREAM_PICK).rng(), interior, 100).into_vec();
        let h = 1.0 / n as f64;
        let mut xu = Vec::with_capacity(100);
        let mut u = Vec::with_capacity(100);
        for k in picks {
            let (i, j) = (k / (n - 1) + 1, k % (n - 1) + 1);
            xu.push(vec![i as f64 * h, j as f64 * h]);
            u.push(sol.node(i, j));
        }
        let xf = latin_hypercube(100, &[(0.0, 1.0), (0.0, 1.0)], self.stream(STREAM_LHS_F));
        let f: Vec<f64> = xf.iter().map(|p| source_f1(p[0], p[1])).collect();
        let xb: Vec<Vec<f64>> = rectangle_boundary(100, (0.0, 1.0), (0.0, 1.0)).iter().map(|p| p.to_vec()).collect();
        let g = equispaced(50, 0.0, 1.0);
        Ok(self.finish(Parts {
            kind: ProblemKind::SourceLocalization,
            arch: MlpArchitecture::benchmark(2, 1),
            params: PhysParamSpec {
                names: ["x1", "y1", "x2", "y2", "x3", "y3"].iter().map(|s| s.to_string()).collect(),
                prior_mean: vec![0.0; 6],
                prior_std: vec![1.0; 6],
                transform: vec![Transform::Log; 6],
                true_values: centres.to_vec(),
            },
            coord_names: vec!["x", "y"],
            data_u: Dataset::single(Role::Forward, &xu, self.noisy(&u)),
            data_f: Dataset::single(Role::Residual, &xf, f),
            data_b: Dataset::single(Role::Boundary, &xb, vec![0.0; 100]),
            sigma_f: 0.01,
            test_points: tensor_grid(&g, &g).iter().map(|p| p.to_vec()).collect(),
            reference: ReferenceField::new(Provenance::FiniteDifference { grid_n: n }, move |x| {
                vec![sol.eval(x[0], x[1])]
            }),
        }))
    }
}

fn scalar_param(name: &str, mean: f64, std: f64, truth: f64) -> PhysParamSpec {
    PhysParamSpec {
        names: vec![name.into()],
        prior_mean: vec![mean],
        prior_std: vec![std],
        transform: vec![Transform::Identity],
        true_values: vec![truth],
    }
}

fn to_array(points: &[Vec<f64>]) -> Array2<f64> {
    let dim = points.first().map_or(0, |p| p.len());
    Array2::from_shape_fn((points.len(), dim), |(i, j)| points[i][j])
}
